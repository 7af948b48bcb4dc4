//! Regular space-time grids, nearest-node event binning and the discrete
//! intensity `lambda_i[v] = mu_i + sum_j alpha_ij sum_a g_ij[a] z_j[v - kappa(a)]`.
//!
//! Grid nodes are `v in [0, G_X] x [0, G_Y] x [0, G_T]` located at
//! `(-S_X + v_x dx, -S_Y + v_y dy, v_t dt)`. Kernel arrays have shape
//! `(L_X, L_Y, L_T)`; spatial index `a` maps to the signed lag
//! `a - c` with `c = floor(L / 2)`, temporal index `a` to lag `a + 1`
//! (lag zero is excluded, so the discrete intensity is strictly causal).

use ndarray::Array3;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Window};
use crate::error::{Error, Result};
use crate::fft::{embed, smooth_size, Fft3};
use crate::kernels::{KernelGrids, Support};
use crate::neighbors::CellIndex;
use crate::params::ModelParams;

/// Default cap on the number of grid nodes materialized as dense arrays.
pub const DEFAULT_DENSE_BUDGET: usize = 100_000_000;

fn default_budget() -> usize {
    DEFAULT_DENSE_BUDGET
}

/// `floor(x)` that forgives round-off just below an integer.
fn floor_tol(x: f64) -> usize {
    (x + 1e-9 * x.abs().max(1.0)).floor() as usize
}

/// Grid geometry and every derived index extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// `(dx, dy, dt)`.
    pub step: [f64; 3],
    pub window: Window,
    pub support: Support,
    /// `(G_X, G_Y, G_T)`; there are `G + 1` nodes per axis.
    pub extent: [usize; 3],
    /// `(L_X, L_Y, L_T)`.
    pub kernel_len: [usize; 3],
    /// Spatial centres `(l_X, l_Y)`: the kernel index holding lag zero.
    pub center: [usize; 2],
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default = "default_budget")]
    pub dense_budget: usize,
}

impl GridSpec {
    pub fn new(window: Window, support: Support, step: [f64; 3]) -> Result<Self> {
        make_grid(window, support, step)
    }

    pub fn with_dense_budget(mut self, budget: usize) -> Self {
        self.dense_budget = budget;
        self
    }

    /// Nodes per axis, `G + 1`.
    pub fn nodes(&self) -> [usize; 3] {
        self.extent.map(|g| g + 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes().iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.step.iter().product()
    }

    /// `cell_volume * node_count`, the Riemann-sum volume of the window.
    pub fn discrete_volume(&self) -> f64 {
        self.cell_volume() * self.node_count() as f64
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_len.iter().product()
    }

    /// Shape of the pairwise-lag box `2L - 1` per axis.
    pub fn lag_shape(&self) -> [usize; 3] {
        self.kernel_len.map(|l| 2 * l - 1)
    }

    /// Signed node shift `kappa(a)` of kernel index `a`.
    pub fn lag(&self, a: [usize; 3]) -> [i64; 3] {
        [
            a[0] as i64 - self.center[0] as i64,
            a[1] as i64 - self.center[1] as i64,
            a[2] as i64 + 1,
        ]
    }

    /// Inclusive range of node shifts covered by the kernel box.
    pub fn lag_range(&self) -> ([i64; 3], [i64; 3]) {
        let lo = self.lag([0, 0, 0]);
        let hi = self.lag(self.kernel_len.map(|l| l - 1));
        (lo, hi)
    }

    /// Continuous offset `(dx, dy, dt)` at which kernel index `a` is sampled.
    pub fn kernel_offset(&self, a: [usize; 3]) -> (f64, f64, f64) {
        let k = self.lag(a);
        (
            k[0] as f64 * self.step[0],
            k[1] as f64 * self.step[1],
            k[2] as f64 * self.step[2],
        )
    }

    pub fn node_coords(&self, v: [usize; 3]) -> (f64, f64, f64) {
        (
            -self.window.half_x + v[0] as f64 * self.step[0],
            -self.window.half_y + v[1] as f64 * self.step[1],
            v[2] as f64 * self.step[2],
        )
    }

    /// Nearest node (round half away from zero), clamped to the grid.
    pub fn node_of(&self, x: f64, y: f64, t: f64) -> [usize; 3] {
        let r = |u: f64, d: f64, g: usize| ((u / d).round().max(0.0) as usize).min(g);
        [
            r(x + self.window.half_x, self.step[0], self.extent[0]),
            r(y + self.window.half_y, self.step[1], self.extent[1]),
            r(t, self.step[2], self.extent[2]),
        ]
    }

    pub fn flat_index(&self, v: [usize; 3]) -> usize {
        let n = self.nodes();
        (v[0] * n[1] + v[1]) * n[2] + v[2]
    }

    pub fn check_dense(&self, what: &str) -> Result<()> {
        if self.node_count() > self.dense_budget {
            return Err(Error::Budget(format!(
                "{what}: dense grid of {} nodes exceeds the budget of {}",
                self.node_count(),
                self.dense_budget
            )));
        }
        Ok(())
    }
}

/// Builds the grid for a window, kernel supports and stepsizes.
pub fn make_grid(window: Window, support: Support, step: [f64; 3]) -> Result<GridSpec> {
    let lengths = [2.0 * window.half_x, 2.0 * window.half_y, window.horizon];
    let supports = [2.0 * support.half_x, 2.0 * support.half_y, support.length_t];
    let names = ["x", "y", "t"];
    let mut warnings = Vec::new();
    let mut extent = [0; 3];
    let mut kernel_len = [0; 3];
    for k in 0..3 {
        let d = step[k];
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Grid(format!(
                "stepsize along {} must be > 0, got {d}",
                names[k]
            )));
        }
        if d > lengths[k] {
            return Err(Error::Grid(format!(
                "stepsize {d} along {} exceeds the window length {}",
                names[k], lengths[k]
            )));
        }
        if supports[k] > lengths[k] * (1.0 + 1e-12) {
            return Err(Error::Grid(format!(
                "kernel support {} along {} exceeds the window length {}",
                supports[k], names[k], lengths[k]
            )));
        }
        extent[k] = floor_tol(lengths[k] / d);
        let rem = lengths[k] - extent[k] as f64 * d;
        if rem.abs() > 1e-9 * lengths[k] {
            let msg = format!(
                "stepsize {d} does not divide the {} extent {}; the last cell absorbs {rem:.3e}",
                names[k], lengths[k]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        kernel_len[k] = floor_tol(supports[k] / d) + 1;
    }
    Ok(GridSpec {
        step,
        window,
        support,
        extent,
        kernel_len,
        center: [kernel_len[0] / 2, kernel_len[1] / 2],
        warnings,
        dense_budget: DEFAULT_DENSE_BUDGET,
    })
}

/// An occupied grid node and the number of events binned to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub node: [usize; 3],
    pub count: u32,
}

/// Events projected on a grid: per-event node indices in event order and,
/// per process, the occupied cells with their counts (sorted by node).
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCatalog {
    nodes: [usize; 3],
    event_nodes: Vec<Vec<[usize; 3]>>,
    cells: Vec<Vec<Cell>>,
    collision_rate: f64,
}

fn group_cells(nodes: &[[usize; 3]]) -> Vec<Cell> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    let mut cells: Vec<Cell> = Vec::new();
    for v in sorted {
        match cells.last_mut() {
            Some(c) if c.node == v => c.count += 1,
            _ => cells.push(Cell { node: v, count: 1 }),
        }
    }
    cells
}

/// Projects every event on its nearest grid node.
pub fn bin_events(cat: &Catalog, grid: &GridSpec) -> Result<BinnedCatalog> {
    let (a, b) = (cat.window(), &grid.window);
    let close = |u: f64, w: f64| (u - w).abs() <= 1e-9 * u.abs().max(w.abs());
    if !(close(a.half_x, b.half_x) && close(a.half_y, b.half_y) && close(a.horizon, b.horizon)) {
        return Err(Error::Shape(format!(
            "catalog window {a:?} does not match grid window {b:?}"
        )));
    }
    let event_nodes: Vec<Vec<[usize; 3]>> = cat
        .processes()
        .iter()
        .map(|evs| evs.iter().map(|e| grid.node_of(e.x, e.y, e.t)).collect())
        .collect();
    let cells: Vec<Vec<Cell>> = event_nodes.iter().map(|n| group_cells(n)).collect();

    let all: Vec<[usize; 3]> = event_nodes.iter().flatten().copied().collect();
    let pooled = group_cells(&all);
    let shared: u64 = pooled
        .iter()
        .filter(|c| c.count > 1)
        .map(|c| c.count as u64)
        .sum();
    let collision_rate = if all.is_empty() {
        0.0
    } else {
        shared as f64 / all.len() as f64
    };
    if shared > 0 {
        log::warn!(
            "{shared} of {} events share a grid cell with another event (collision rate {:.4}); \
             counts are accumulated",
            all.len(),
            collision_rate
        );
    }
    Ok(BinnedCatalog {
        nodes: grid.nodes(),
        event_nodes,
        cells,
        collision_rate,
    })
}

impl BinnedCatalog {
    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn nodes(&self) -> [usize; 3] {
        self.nodes
    }

    /// Event count `N^j` per process.
    pub fn counts(&self) -> Vec<usize> {
        self.event_nodes.iter().map(Vec::len).collect()
    }

    pub fn total_events(&self) -> usize {
        self.event_nodes.iter().map(Vec::len).sum()
    }

    /// Grid node of every event of process `j`, in catalog order.
    pub fn event_nodes(&self, j: usize) -> &[[usize; 3]] {
        &self.event_nodes[j]
    }

    pub fn cells(&self, j: usize) -> &[Cell] {
        &self.cells[j]
    }

    /// Fraction of events sharing their node with at least one other event
    /// (any process).
    pub fn collision_rate(&self) -> f64 {
        self.collision_rate
    }

    /// Dense count array `z_j` of shape `G + 1` per axis.
    pub fn dense(&self, j: usize, budget: usize) -> Result<Array3<f64>> {
        let n = self.nodes;
        if n.iter().product::<usize>() > budget {
            return Err(Error::Budget(format!(
                "dense counts: {} nodes exceed the budget of {budget}",
                n.iter().product::<usize>()
            )));
        }
        let mut z = Array3::zeros((n[0], n[1], n[2]));
        for c in &self.cells[j] {
            z[c.node] += c.count as f64;
        }
        Ok(z)
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        if self.nodes != grid.nodes() {
            return Err(Error::Shape(format!(
                "binned catalog has {:?} nodes, grid has {:?}",
                self.nodes,
                grid.nodes()
            )));
        }
        Ok(())
    }
}

/// How to evaluate the discrete convolution on the full grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    /// Scatter each occupied cell through the kernel box.
    Direct,
    /// Zero-padded FFT convolution.
    #[default]
    Fft,
}

fn check_model(binned: &BinnedCatalog, params: &ModelParams, kernels: &KernelGrids) -> Result<()> {
    let d = binned.dim();
    if params.dim() != d || kernels.dim() != d {
        return Err(Error::Shape(format!(
            "catalog has {d} processes, parameters {} and kernels {}",
            params.dim(),
            kernels.dim()
        )));
    }
    Ok(())
}

/// Discrete intensity `lambda_i` on every grid node, one dense array per process.
pub fn intensity_on_grid(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    params: &ModelParams,
    kernels: &KernelGrids,
    method: ConvolutionMethod,
) -> Result<Vec<Array3<f64>>> {
    binned.check(grid)?;
    check_model(binned, params, kernels)?;
    grid.check_dense("intensity_on_grid")?;
    for i in 0..binned.dim() {
        for j in 0..binned.dim() {
            let s = kernels.get(i, j).dim();
            if [s.0, s.1, s.2] != grid.kernel_len {
                return Err(Error::Shape(format!(
                    "kernel ({i},{j}) has shape {s:?}, grid expects {:?}",
                    grid.kernel_len
                )));
            }
        }
    }
    match method {
        ConvolutionMethod::Direct => Ok(intensity_direct(binned, grid, params, kernels)),
        ConvolutionMethod::Fft => intensity_fft(binned, grid, params, kernels),
    }
}

fn intensity_direct(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    params: &ModelParams,
    kernels: &KernelGrids,
) -> Vec<Array3<f64>> {
    let d = binned.dim();
    let n = grid.nodes();
    let l = grid.kernel_len;
    (0..d)
        .map(|i| {
            let mut lam = Array3::from_elem((n[0], n[1], n[2]), params.baseline[i]);
            for j in 0..d {
                let alpha = params.alpha(i, j);
                let g = kernels.get(i, j);
                for c in binned.cells(j) {
                    let w = c.node.map(|v| v as i64);
                    let scale = alpha * c.count as f64;
                    // a ranges keeping w + kappa(a) on the grid
                    let range = |axis: usize| {
                        let k0 = grid.lag([0, 0, 0])[axis];
                        let lo = (-w[axis] - k0).max(0);
                        let hi = (n[axis] as i64 - 1 - w[axis] - k0).min(l[axis] as i64 - 1);
                        lo..=hi
                    };
                    for ax in range(0) {
                        for ay in range(1) {
                            for at in range(2) {
                                let a = [ax as usize, ay as usize, at as usize];
                                let k = grid.lag(a);
                                let v = [
                                    (w[0] + k[0]) as usize,
                                    (w[1] + k[1]) as usize,
                                    (w[2] + k[2]) as usize,
                                ];
                                lam[v] += scale * g[a];
                            }
                        }
                    }
                }
            }
            lam
        })
        .collect()
}

fn intensity_fft(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    params: &ModelParams,
    kernels: &KernelGrids,
) -> Result<Vec<Array3<f64>>> {
    let d = binned.dim();
    let n = grid.nodes();
    let l = grid.kernel_len;
    let shape = [0, 1, 2].map(|k| smooth_size(n[k] + l[k] - 1));
    let plan = Fft3::new(shape);
    let mut z_hat = Vec::with_capacity(d);
    for j in 0..d {
        let mut z = embed(binned.dense(j, grid.dense_budget)?.view(), shape);
        plan.forward(&mut z);
        z_hat.push(z);
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut acc = vec![Complex64::default(); plan.len()];
        for j in 0..d {
            let mut g = embed(kernels.get(i, j).view(), shape);
            plan.forward(&mut g);
            let alpha = params.alpha(i, j);
            for ((s, a), b) in acc.iter_mut().zip(&g).zip(&z_hat[j]) {
                *s += alpha * a * b;
            }
        }
        plan.inverse(&mut acc);
        // conv[m] = sum_a g[a] z[m - a]; node v reads m = v - kappa(a) + a.
        let c = grid.center;
        let mu = params.baseline[i];
        out.push(Array3::from_shape_fn((n[0], n[1], n[2]), |(x, y, t)| {
            if t == 0 {
                return mu;
            }
            let m = ((x + c[0]) * shape[1] + (y + c[1])) * shape[2] + (t - 1);
            mu + acc[m].re
        }));
    }
    Ok(out)
}

/// Discrete intensity `lambda_i` at the grid node of every event of process
/// `i`, in catalog order. Never materializes the full grid.
pub fn intensity_at_events(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    params: &ModelParams,
    kernels: &KernelGrids,
) -> Result<Vec<Vec<f64>>> {
    binned.check(grid)?;
    check_model(binned, params, kernels)?;
    let d = binned.dim();
    let (lo, hi) = grid.lag_range();
    let lo_idx = grid.lag([0, 0, 0]);
    let index: Vec<CellIndex> = (0..d)
        .map(|j| CellIndex::new(binned.cells(j), grid.nodes()[2]))
        .collect();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let cells = binned.cells(i);
        let mut per_cell = vec![params.baseline[i]; cells.len()];
        for (slot, c) in per_cell.iter_mut().zip(cells) {
            for (j, idx) in index.iter().enumerate() {
                let g = kernels.get(i, j);
                let alpha = params.alpha(i, j);
                let mut s = 0.0;
                idx.for_each_source(c.node, lo, hi, |k, count| {
                    let a = [
                        (k[0] - lo_idx[0]) as usize,
                        (k[1] - lo_idx[1]) as usize,
                        (k[2] - lo_idx[2]) as usize,
                    ];
                    s += count * g[a];
                });
                *slot += alpha * s;
            }
        }
        out.push(
            binned
                .event_nodes(i)
                .iter()
                .map(|v| {
                    let pos = cells
                        .binary_search_by(|c| c.node.cmp(v))
                        .expect("event cell indexed");
                    per_cell[pos]
                })
                .collect(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Event;
    use crate::kernels::{KernelModel, SpatialFamily, TemporalFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(s: f64, t: f64, step: [f64; 3]) -> GridSpec {
        make_grid(Window::new(s, s, t).unwrap(), Support::unit(), step).unwrap()
    }

    #[test]
    fn extents_from_stepsizes() {
        let g = grid(10.0, 10.0, [0.5, 0.5, 0.1]);
        assert_eq!(g.extent, [40, 40, 100]);
        assert_eq!(g.nodes()[2], 101);
        let g = grid(10.0, 10.0, [0.5, 0.5, 0.5]);
        assert_eq!(g.kernel_len[2], 3);
        assert_eq!(g.kernel_len[0], 5);
        assert_eq!(g.center, [2, 2]);
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn non_dividing_step_warns() {
        let g = grid(10.0, 10.0, [0.3, 0.5, 0.1]);
        assert_eq!(g.extent[0], 66);
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn bad_grids_rejected() {
        let w = Window::new(10.0, 10.0, 10.0).unwrap();
        assert!(make_grid(w, Support::unit(), [0.0, 0.1, 0.1]).is_err());
        assert!(make_grid(w, Support::unit(), [0.1, -0.1, 0.1]).is_err());
        assert!(make_grid(w, Support::unit(), [0.1, 0.1, 11.0]).is_err());
        let wide = Support::new(20.0, 1.0, 1.0).unwrap();
        assert!(make_grid(w, wide, [0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn origin_bins_to_center() {
        let g = grid(5.0, 4.0, [0.25, 0.5, 0.1]);
        let cat = Catalog::new(vec![vec![Event::new(0.0, 0.0, 0.0)]], g.window).unwrap();
        let b = bin_events(&cat, &g).unwrap();
        assert_eq!(b.event_nodes(0)[0], [g.extent[0] / 2, g.extent[1] / 2, 0]);
        assert_eq!(
            b.cells(0),
            &[Cell {
                node: [20, 10, 0],
                count: 1
            }]
        );
    }

    #[test]
    fn shared_cell_accumulates() {
        let g = grid(5.0, 4.0, [0.5, 0.5, 0.5]);
        let cat = Catalog::new(
            vec![vec![
                Event::new(1.01, 1.0, 1.0),
                Event::new(0.99, 1.02, 1.1),
            ]],
            g.window,
        )
        .unwrap();
        let b = bin_events(&cat, &g).unwrap();
        assert_eq!(b.cells(0).len(), 1);
        assert_eq!(b.cells(0)[0].count, 2);
        assert_eq!(b.event_nodes(0).len(), 2);
        assert_eq!(b.collision_rate(), 1.0);
    }

    #[test]
    fn rounding_error_within_half_step() {
        let g = grid(5.0, 8.0, [0.3, 0.25, 0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let evs: Vec<Event> = (0..1000)
            .map(|_| {
                Event::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(0.0..8.0),
                )
            })
            .collect();
        let cat = Catalog::new(vec![evs], g.window).unwrap();
        let b = bin_events(&cat, &g).unwrap();
        let total: u32 = b.cells(0).iter().map(|c| c.count).sum();
        assert_eq!(total, 1000);
        for (e, v) in cat.process(0).iter().zip(b.event_nodes(0)) {
            let (x, y, t) = g.node_coords(*v);
            let last_x = v[0] == g.extent[0];
            assert!(last_x || (x - e.x).abs() <= 0.15 + 1e-12);
            assert!((y - e.y).abs() <= 0.125 + 1e-12);
            assert!((t - e.t).abs() <= 0.1 + 1e-12);
        }
    }

    fn setup(seed: u64) -> (GridSpec, BinnedCatalog, ModelParams, KernelGrids) {
        let g = grid(2.5, 2.0, [0.25, 0.25, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let procs: Vec<Vec<Event>> = (0..2)
            .map(|_| {
                (0..40)
                    .map(|_| {
                        Event::new(
                            rng.gen_range(-2.5..2.5),
                            rng.gen_range(-2.5..2.5),
                            rng.gen_range(0.0..2.0),
                        )
                    })
                    .collect()
            })
            .collect();
        let cat = Catalog::new(procs, g.window).unwrap();
        let b = bin_events(&cat, &g).unwrap();
        let k = KernelModel::new(
            SpatialFamily::TruncGauss,
            TemporalFamily::Kumaraswamy,
            &[0.1, -0.2, 0.3, 2.0, 2.0],
            Support::unit(),
        )
        .unwrap();
        let p = ModelParams::new(vec![0.3, 0.5], vec![0.6, 0.1, 0.2, 0.4], vec![k; 4]).unwrap();
        let kg = p.kernel_grids(&g, false).unwrap();
        (g, b, p, kg)
    }

    #[test]
    fn fft_matches_direct() {
        let (g, b, p, kg) = setup(9);
        assert_eq!(g.nodes(), [21, 21, 21]);
        let a = intensity_on_grid(&b, &g, &p, &kg, ConvolutionMethod::Direct).unwrap();
        let f = intensity_on_grid(&b, &g, &p, &kg, ConvolutionMethod::Fft).unwrap();
        for (x, y) in a.iter().zip(&f) {
            let diff = (x - y).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
            assert!(diff < 1e-10, "max diff {diff}");
        }
    }

    #[test]
    fn event_intensities_match_grid() {
        let (g, b, p, kg) = setup(10);
        let full = intensity_on_grid(&b, &g, &p, &kg, ConvolutionMethod::Direct).unwrap();
        let at = intensity_at_events(&b, &g, &p, &kg).unwrap();
        for i in 0..2 {
            for (v, l) in b.event_nodes(i).iter().zip(&at[i]) {
                assert!((full[i][*v] - l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_event_single_term() {
        let g = grid(2.5, 2.0, [0.25, 0.25, 0.1]);
        let cat = Catalog::new(vec![vec![Event::new(0.0, 0.0, 0.5)]], g.window).unwrap();
        let b = bin_events(&cat, &g).unwrap();
        let k = KernelModel::with_defaults(
            SpatialFamily::TruncGauss,
            TemporalFamily::Kumaraswamy,
            Support::unit(),
        );
        let p = ModelParams::new(vec![0.2], vec![0.6], vec![k]).unwrap();
        let kg = p.kernel_grids(&g, false).unwrap();
        let lam = intensity_on_grid(&b, &g, &p, &kg, ConvolutionMethod::Fft).unwrap();
        let a = [3, 5, 4];
        let k = g.lag(a);
        let v = [
            (10 + k[0]) as usize,
            (10 + k[1]) as usize,
            (5 + k[2]) as usize,
        ];
        assert!((lam[0][v] - (0.2 + 0.6 * kg.get(0, 0)[a])).abs() < 1e-12);
        // strictly causal: nothing at or before the event time
        for t in 0..=5 {
            assert!(lam[0]
                .index_axis(ndarray::Axis(2), t)
                .iter()
                .all(|&x| (x - 0.2).abs() < 1e-12));
        }
    }
}
