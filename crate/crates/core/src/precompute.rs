//! Sufficient statistics of a binned catalog for the discrete least-squares loss.
//!
//! * `phi_grid[j][a]`: events of `j` whose shift by `kappa(a)` stays on the grid.
//! * `phi_events[i][j][a]`: pairs (event of `i` at `w`, event of `j` at `w - kappa(a)`).
//! * `psi_tilde[j][k][d]`: cross-correlation `sum_v z_j[v] z_k[v - d]` over the
//!   lag box `|d| <= L - 1`, stored at `d + L - 1`.
//! * `psi_exact[j][k][a][a']`: `sum_v z_j[v - kappa(a)] z_k[v - kappa(a')]` with
//!   `a`, `a'` flattened row-major over the kernel box. Quadratic in the kernel
//!   size; only for validation.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fft::{embed, smooth_size, Fft3};
use crate::grid::{BinnedCatalog, GridSpec};
use crate::neighbors::CellIndex;

/// Default cap on `D^2 * Lbar^2` exact-statistic entries (about 480 MB).
pub const DEFAULT_EXACT_BUDGET: usize = 60_000_000;

const CACHE_MAGIC: &[u8; 8] = b"STHKPRE\0";
const CACHE_VERSION: u32 = 1;

/// Algorithm for the lag-box cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiMethod {
    /// Pick the cheaper of the two from event density and grid size.
    #[default]
    Auto,
    /// Enumerate event pairs inside the lag box.
    Pairs,
    /// Zero-padded FFT correlation of the dense count fields.
    Fft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeOptions {
    #[serde(default)]
    pub psi_method: PsiMethod,
    /// Also build the exact pairwise statistic.
    #[serde(default)]
    pub exact: bool,
    #[serde(default = "default_exact_budget")]
    pub exact_budget: usize,
}

fn default_exact_budget() -> usize {
    DEFAULT_EXACT_BUDGET
}

impl Default for PrecomputeOptions {
    fn default() -> Self {
        Self {
            psi_method: PsiMethod::Auto,
            exact: false,
            exact_budget: DEFAULT_EXACT_BUDGET,
        }
    }
}

/// All statistics needed by the loss; `(i, j)` arrays are row-major `i * D + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precomputed {
    pub counts: Vec<usize>,
    pub kernel_len: [usize; 3],
    pub phi_grid: Vec<Array3<f64>>,
    pub phi_events: Vec<Array3<f64>>,
    pub psi_tilde: Vec<Array3<f64>>,
    pub psi_exact: Option<Vec<Array2<f64>>>,
}

impl Precomputed {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total_events(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn phi_grid(&self, j: usize) -> &Array3<f64> {
        &self.phi_grid[j]
    }

    pub fn phi_events(&self, i: usize, j: usize) -> &Array3<f64> {
        &self.phi_events[i * self.dim() + j]
    }

    pub fn psi_tilde(&self, j: usize, k: usize) -> &Array3<f64> {
        &self.psi_tilde[j * self.dim() + k]
    }

    pub fn psi_exact(&self, j: usize, k: usize) -> Result<&Array2<f64>> {
        let d = self.dim();
        self.psi_exact
            .as_ref()
            .map(|p| &p[j * d + k])
            .ok_or(Error::MissingStatistic("psi_exact"))
    }
}

/// Computes every statistic requested by `opts`.
pub fn precompute(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    opts: &PrecomputeOptions,
) -> Result<Precomputed> {
    check(binned, grid)?;
    let psi_exact = if opts.exact {
        Some(psi_exact(binned, grid, opts.exact_budget)?)
    } else {
        None
    };
    Ok(Precomputed {
        counts: binned.counts(),
        kernel_len: grid.kernel_len,
        phi_grid: phi_grid(binned, grid),
        phi_events: phi_events(binned, grid),
        psi_tilde: psi_tilde(binned, grid, opts.psi_method)?,
        psi_exact,
    })
}

fn check(binned: &BinnedCatalog, grid: &GridSpec) -> Result<()> {
    if binned.nodes() != grid.nodes() {
        return Err(Error::Shape(format!(
            "binned catalog has {:?} nodes, grid has {:?}",
            binned.nodes(),
            grid.nodes()
        )));
    }
    Ok(())
}

/// Kernel indices `a` along one axis for which `w + lag0 + a` lies in `[0, n)`.
fn valid_range(w: usize, lag0: i64, len: usize, n: usize) -> (usize, usize) {
    let lo = (-(w as i64) - lag0).max(0);
    let hi = (n as i64 - 1 - w as i64 - lag0).min(len as i64 - 1);
    if lo > hi {
        (1, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// `phi_grid[j]`, from a difference array over the per-cell valid boxes.
pub fn phi_grid(binned: &BinnedCatalog, grid: &GridSpec) -> Vec<Array3<f64>> {
    let l = grid.kernel_len;
    let n = grid.nodes();
    let lag0 = grid.lag([0, 0, 0]);
    (0..binned.dim())
        .map(|j| {
            let mut diff = Array3::<f64>::zeros((l[0] + 1, l[1] + 1, l[2] + 1));
            for c in binned.cells(j) {
                let r = [0, 1, 2].map(|k| valid_range(c.node[k], lag0[k], l[k], n[k]));
                if r.iter().any(|(lo, hi)| lo > hi) {
                    continue;
                }
                let w = c.count as f64;
                for (s0, i0) in [(1.0, r[0].0), (-1.0, r[0].1 + 1)] {
                    for (s1, i1) in [(1.0, r[1].0), (-1.0, r[1].1 + 1)] {
                        for (s2, i2) in [(1.0, r[2].0), (-1.0, r[2].1 + 1)] {
                            diff[[i0, i1, i2]] += s0 * s1 * s2 * w;
                        }
                    }
                }
            }
            for axis in 0..3 {
                diff.accumulate_axis_inplace(ndarray::Axis(axis), |&prev, cur| *cur += prev);
            }
            diff.slice(ndarray::s![..l[0], ..l[1], ..l[2]]).to_owned()
        })
        .collect()
}

/// `phi_events[i * D + j]` by pair enumeration.
pub fn phi_events(binned: &BinnedCatalog, grid: &GridSpec) -> Vec<Array3<f64>> {
    let d = binned.dim();
    let l = grid.kernel_len;
    let (lo, hi) = grid.lag_range();
    let index: Vec<CellIndex> = (0..d)
        .map(|j| CellIndex::new(binned.cells(j), grid.nodes()[2]))
        .collect();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for idx in &index {
            let mut phi = Array3::zeros((l[0], l[1], l[2]));
            for c in binned.cells(i) {
                let ci = c.count as f64;
                idx.for_each_source(c.node, lo, hi, |k, cj| {
                    let a = [
                        (k[0] - lo[0]) as usize,
                        (k[1] - lo[1]) as usize,
                        (k[2] - lo[2]) as usize,
                    ];
                    phi[a] += ci * cj;
                });
            }
            out.push(phi);
        }
    }
    out
}

fn lag_box(grid: &GridSpec) -> ([i64; 3], [i64; 3]) {
    let m = grid.kernel_len.map(|l| l as i64 - 1);
    (m.map(|v| -v), m)
}

/// `psi_tilde[j * D + k]` over the lag box.
pub fn psi_tilde(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    method: PsiMethod,
) -> Result<Vec<Array3<f64>>> {
    check(binned, grid)?;
    let method = match method {
        PsiMethod::Auto => choose_psi_method(binned, grid),
        m => m,
    };
    log::debug!("psi_tilde via {method:?}");
    match method {
        PsiMethod::Fft => psi_tilde_fft(binned, grid),
        _ => Ok(psi_tilde_pairs(binned, grid)),
    }
}

fn choose_psi_method(binned: &BinnedCatalog, grid: &GridSpec) -> PsiMethod {
    let n = grid.nodes();
    let l = grid.kernel_len;
    let padded: f64 = (0..3)
        .map(|k| smooth_size(n[k] + l[k] - 1) as f64)
        .product();
    if grid.node_count() > grid.dense_budget || padded > grid.dense_budget as f64 {
        return PsiMethod::Pairs;
    }
    let d = binned.dim() as f64;
    let fft_cost = padded * padded.log2().max(1.0) * (d + d * (d + 1.0) / 2.0) * 2.0;
    let lag_vol: f64 = grid.lag_shape().iter().map(|&v| v as f64).product();
    let density = lag_vol / grid.node_count() as f64;
    let counts = binned.counts();
    let total = counts.iter().sum::<usize>() as f64;
    let pair_cost = total * total * density.min(1.0) + total * grid.lag_shape()[2] as f64 * 8.0;
    if pair_cost <= fft_cost {
        PsiMethod::Pairs
    } else {
        PsiMethod::Fft
    }
}

fn psi_tilde_pairs(binned: &BinnedCatalog, grid: &GridSpec) -> Vec<Array3<f64>> {
    let d = binned.dim();
    let s = grid.lag_shape();
    let (lo, hi) = lag_box(grid);
    let index: Vec<CellIndex> = (0..d)
        .map(|j| CellIndex::new(binned.cells(j), grid.nodes()[2]))
        .collect();
    let mut out = vec![Array3::zeros((s[0], s[1], s[2])); d * d];
    for j in 0..d {
        for k in j..d {
            let mut psi = Array3::zeros((s[0], s[1], s[2]));
            for c in binned.cells(j) {
                let cj = c.count as f64;
                index[k].for_each_source(c.node, lo, hi, |e, ck| {
                    let a = [
                        (e[0] - lo[0]) as usize,
                        (e[1] - lo[1]) as usize,
                        (e[2] - lo[2]) as usize,
                    ];
                    psi[a] += cj * ck;
                });
            }
            if k != j {
                let mut mirrored = psi.clone();
                mirrored.invert_axis(ndarray::Axis(0));
                mirrored.invert_axis(ndarray::Axis(1));
                mirrored.invert_axis(ndarray::Axis(2));
                out[k * d + j] = mirrored;
            }
            out[j * d + k] = psi;
        }
    }
    out
}

fn psi_tilde_fft(binned: &BinnedCatalog, grid: &GridSpec) -> Result<Vec<Array3<f64>>> {
    let d = binned.dim();
    let n = grid.nodes();
    let l = grid.kernel_len;
    let shape = [0, 1, 2].map(|k| smooth_size(n[k] + l[k] - 1));
    if shape.iter().product::<usize>() > grid.dense_budget {
        return Err(Error::Budget(format!(
            "FFT correlation needs a {shape:?} buffer, above the dense budget {}",
            grid.dense_budget
        )));
    }
    let plan = Fft3::new(shape);
    let mut spectra = Vec::with_capacity(d);
    for j in 0..d {
        let mut z = embed(binned.dense(j, grid.dense_budget)?.view(), shape);
        plan.forward(&mut z);
        spectra.push(z);
    }
    let s = grid.lag_shape();
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            let mut c: Vec<Complex64> = spectra[j]
                .iter()
                .zip(&spectra[k])
                .map(|(a, b)| a * b.conj())
                .collect();
            plan.inverse(&mut c);
            let wrap = |i: usize, axis: usize| {
                (i as i64 - (l[axis] as i64 - 1)).rem_euclid(shape[axis] as i64) as usize
            };
            out.push(Array3::from_shape_fn((s[0], s[1], s[2]), |(a, b, t)| {
                c[(wrap(a, 0) * shape[1] + wrap(b, 1)) * shape[2] + wrap(t, 2)]
                    .re
                    .round()
            }));
        }
    }
    Ok(out)
}

/// Exact double-lag statistic, one `Lbar x Lbar` matrix per `(j, k)`.
pub fn psi_exact(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    budget: usize,
) -> Result<Vec<Array2<f64>>> {
    check(binned, grid)?;
    let d = binned.dim();
    let lbar = grid.kernel_size();
    let entries = d * d * lbar * lbar;
    if entries > budget {
        return Err(Error::Budget(format!(
            "exact pairwise statistic needs {entries} entries ({:.1} GB) and \
             O(D^2 Lbar^2 Gbar) = {:.2e} operations; budget is {budget} entries",
            entries as f64 * 8.0 / 1e9,
            (d * d) as f64 * (lbar as f64).powi(2) * grid.node_count() as f64
        )));
    }
    let l = grid.kernel_len;
    let n = grid.nodes();
    let lag0 = grid.lag([0, 0, 0]);
    let (lo, hi) = lag_box(grid);
    let index: Vec<CellIndex> = (0..d)
        .map(|j| CellIndex::new(binned.cells(j), n[2]))
        .collect();
    let flat = |a: [i64; 3]| (a[0] * l[1] as i64 + a[1]) * l[2] as i64 + a[2];
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            let mut psi = Array2::<f64>::zeros((lbar, lbar));
            let buf = psi.as_slice_mut().expect("contiguous");
            for c in binned.cells(j) {
                let cj = c.count as f64;
                // a' = a + e with e = u_j - u_k; v = u_j + kappa(a) must be on grid.
                let r = [0, 1, 2].map(|ax| valid_range(c.node[ax], lag0[ax], l[ax], n[ax]));
                if r.iter().any(|(a, b)| a > b) {
                    continue;
                }
                index[k].for_each_source(c.node, lo, hi, |e, ck| {
                    let w = cj * ck;
                    let span = |ax: usize| {
                        let a_lo = (r[ax].0 as i64).max(-e[ax]);
                        let a_hi = (r[ax].1 as i64).min(l[ax] as i64 - 1 - e[ax]);
                        (a_lo, a_hi)
                    };
                    let (s0, s1, s2) = (span(0), span(1), span(2));
                    if s0.0 > s0.1 || s1.0 > s1.1 || s2.0 > s2.1 {
                        return;
                    }
                    let off = flat(e);
                    for a0 in s0.0..=s0.1 {
                        for a1 in s1.0..=s1.1 {
                            let base = flat([a0, a1, s2.0]);
                            for step in 0..=(s2.1 - s2.0) {
                                let row = (base + step) as usize;
                                let col = (base + step + off) as usize;
                                buf[row * lbar + col] += w;
                            }
                        }
                    }
                });
            }
            out.push(psi);
        }
    }
    Ok(out)
}

/// Difference norms between the exact statistic and its lag approximation
/// embedded as `psi_tilde(a' - a)`, summed over all `(j, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiErrorNorms {
    pub abs_l1: f64,
    pub abs_fro: f64,
    pub rel_l1: f64,
    pub rel_fro: f64,
}

pub fn psi_error_norms(pre: &Precomputed) -> Result<PsiErrorNorms> {
    let exact = pre
        .psi_exact
        .as_ref()
        .ok_or(Error::MissingStatistic("psi_exact"))?;
    let l = pre.kernel_len;
    let lbar: usize = l.iter().product();
    let unflat = |f: usize| [f / (l[1] * l[2]), (f / l[2]) % l[1], f % l[2]];
    let (mut diff1, mut diff2, mut ref1, mut ref2) = (0.0, 0.0, 0.0, 0.0);
    for (psi, tilde) in exact.iter().zip(&pre.psi_tilde) {
        for r in 0..lbar {
            let a = unflat(r);
            for c in 0..lbar {
                let b = unflat(c);
                let idx = [0, 1, 2].map(|x| b[x] + l[x] - 1 - a[x]);
                let p = psi[[r, c]];
                let t = tilde[idx];
                diff1 += (p - t).abs();
                diff2 += (p - t).powi(2);
                ref1 += p.abs();
                ref2 += p * p;
            }
        }
    }
    let (abs_fro, ref_fro) = (diff2.sqrt(), ref2.sqrt());
    Ok(PsiErrorNorms {
        abs_l1: diff1,
        abs_fro,
        rel_l1: if ref1 > 0.0 { diff1 / ref1 } else { 0.0 },
        rel_fro: if ref_fro > 0.0 {
            abs_fro / ref_fro
        } else {
            0.0
        },
    })
}

/// Content hash of a binned catalog on a grid, used as the cache key.
pub fn cache_key(binned: &BinnedCatalog, grid: &GridSpec) -> Result<[u8; 32]> {
    let mut h = Sha256::new();
    let mut geometry = grid.clone();
    geometry.warnings.clear();
    h.update(serde_json::to_vec(&geometry)?);
    for j in 0..binned.dim() {
        h.update((j as u64).to_le_bytes());
        for c in binned.cells(j) {
            for v in c.node {
                h.update((v as u64).to_le_bytes());
            }
            h.update(c.count.to_le_bytes());
        }
    }
    Ok(h.finalize().into())
}

fn write_arrays(out: &mut Vec<u8>, arrays: &[Array3<f64>]) {
    for a in arrays {
        for v in a.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl Precomputed {
    /// Writes the lag statistics (not the exact one) in the cache format:
    /// magic, version, key, `D`, `L`, counts, then raw little-endian doubles.
    pub fn save_cache(&self, path: impl AsRef<Path>, key: &[u8; 32]) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(key);
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        for l in self.kernel_len {
            out.extend_from_slice(&(l as u64).to_le_bytes());
        }
        for &c in &self.counts {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        write_arrays(&mut out, &self.phi_grid);
        write_arrays(&mut out, &self.phi_events);
        write_arrays(&mut out, &self.psi_tilde);
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a cache file; `Ok(None)` when its key differs from `key`.
    pub fn load_cache(path: impl AsRef<Path>, key: &[u8; 32]) -> Result<Option<Self>> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader {
            bytes: &bytes,
            pos: 0,
        };
        if r.take(8)? != CACHE_MAGIC {
            return Err(Error::Cache(format!(
                "{}: not a precompute cache",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported cache version {version}")));
        }
        if r.take(32)? != key {
            return Ok(None);
        }
        let d = r.u64()? as usize;
        let l = [r.u64()? as usize, r.u64()? as usize, r.u64()? as usize];
        let counts = (0..d)
            .map(|_| r.u64().map(|c| c as usize))
            .collect::<Result<Vec<_>>>()?;
        let s = l.map(|v| 2 * v - 1);
        let phi_grid = r.arrays(d, l)?;
        let phi_events = r.arrays(d * d, l)?;
        let psi_tilde = r.arrays(d * d, s)?;
        if r.pos != bytes.len() {
            return Err(Error::Cache("trailing bytes in cache file".into()));
        }
        Ok(Some(Self {
            counts,
            kernel_len: l,
            phi_grid,
            phi_events,
            psi_tilde,
            psi_exact: None,
        }))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Cache("truncated cache file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn arrays(&mut self, count: usize, shape: [usize; 3]) -> Result<Vec<Array3<f64>>> {
        let len: usize = shape.iter().product();
        (0..count)
            .map(|_| {
                let raw = self.take(len * 8)?;
                let v: Vec<f64> = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                Array3::from_shape_vec((shape[0], shape[1], shape[2]), v)
                    .map_err(|e| Error::Cache(e.to_string()))
            })
            .collect()
    }
}

/// Loads statistics from `path` when its key matches, otherwise computes
/// them and (re)writes the cache.
pub fn precompute_cached(
    binned: &BinnedCatalog,
    grid: &GridSpec,
    opts: &PrecomputeOptions,
    path: impl AsRef<Path>,
) -> Result<Precomputed> {
    let path = path.as_ref();
    let key = cache_key(binned, grid)?;
    if !opts.exact && path.exists() {
        match Precomputed::load_cache(path, &key) {
            Ok(Some(p)) => {
                log::info!("loaded precomputed statistics from {}", path.display());
                return Ok(p);
            }
            Ok(None) => log::info!("cache {} is stale, recomputing", path.display()),
            Err(e) => log::warn!("ignoring unreadable cache: {e}"),
        }
    }
    let pre = precompute(binned, grid, opts)?;
    pre.save_cache(path, &key)?;
    Ok(pre)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, Event, Window};
    use crate::grid::{bin_events, make_grid};
    use crate::kernels::Support;

    fn small_grid() -> GridSpec {
        make_grid(
            Window::new(1.0, 1.0, 2.0).unwrap(),
            Support::new(0.5, 0.5, 1.0).unwrap(),
            [0.25, 0.25, 0.25],
        )
        .unwrap()
    }

    fn binned(events: Vec<Vec<Event>>, g: &GridSpec) -> BinnedCatalog {
        bin_events(&Catalog::new(events, g.window).unwrap(), g).unwrap()
    }

    #[test]
    fn interior_event_is_counted_at_every_lag() {
        let g = small_grid();
        // L = (5, 5, 5); nodes 9 x 9 x 9; an event at node (4, 4, 2) survives shifts
        // of +-2 in space and 1..5 in time.
        let b = binned(vec![vec![Event::new(0.0, 0.0, 0.5)]], &g);
        let phi = &phi_grid(&b, &g)[0];
        assert!(phi.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn last_time_node_shifted_off_grid() {
        let g = small_grid();
        let b = binned(vec![vec![Event::new(0.0, 0.0, 2.0)]], &g);
        let phi = &phi_grid(&b, &g)[0];
        assert!(phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn events_one_lag_apart() {
        let g = small_grid();
        let b = binned(
            vec![vec![Event::new(0.0, 0.0, 0.5), Event::new(0.25, 0.0, 1.0)]],
            &g,
        );
        let phi = &phi_events(&b, &g)[0];
        assert_eq!(phi.sum(), 1.0);
        // shift (1, 0, 2) -> a = (1 + 2, 0 + 2, 2 - 1)
        assert_eq!(phi[[3, 2, 1]], 1.0);
    }

    #[test]
    fn psi_tilde_temporal_neighbours() {
        let g = small_grid();
        let b = binned(
            vec![vec![Event::new(0.0, 0.0, 0.5), Event::new(0.0, 0.0, 0.75)]],
            &g,
        );
        for m in [PsiMethod::Pairs, PsiMethod::Fft] {
            let psi = &psi_tilde(&b, &g, m).unwrap()[0];
            assert_eq!(psi[[4, 4, 4]], 2.0);
            assert_eq!(psi[[4, 4, 5]], 1.0);
            assert_eq!(psi[[4, 4, 3]], 1.0);
            assert_eq!(psi.sum(), 4.0);
        }
    }

    #[test]
    fn cross_process_symmetry() {
        let g = small_grid();
        let b = binned(
            vec![
                vec![Event::new(0.0, 0.0, 0.5), Event::new(0.5, -0.25, 1.5)],
                vec![Event::new(0.25, 0.25, 1.0), Event::new(-0.75, 0.5, 0.25)],
            ],
            &g,
        );
        let pairs = psi_tilde(&b, &g, PsiMethod::Pairs).unwrap();
        let fft = psi_tilde(&b, &g, PsiMethod::Fft).unwrap();
        assert_eq!(pairs, fft);
        let mut rev = pairs[1].clone();
        for ax in 0..3 {
            rev.invert_axis(ndarray::Axis(ax));
        }
        assert_eq!(pairs[2], rev);
    }

    #[test]
    fn exact_single_event() {
        let g = small_grid();
        let b = binned(vec![vec![Event::new(0.75, 0.0, 0.5)]], &g);
        let psi = &psi_exact(&b, &g, DEFAULT_EXACT_BUDGET).unwrap()[0];
        let phi = &phi_grid(&b, &g)[0];
        let flat: Vec<f64> = phi.iter().copied().collect();
        for r in 0..flat.len() {
            for c in 0..flat.len() {
                let expected = if r == c { flat[r] } else { 0.0 };
                assert_eq!(psi[[r, c]], expected);
            }
        }
    }

    #[test]
    fn exact_budget_refusal() {
        let g = small_grid();
        let b = binned(vec![vec![Event::new(0.0, 0.0, 0.5)]], &g);
        assert!(matches!(psi_exact(&b, &g, 100), Err(Error::Budget(_))));
    }

    #[test]
    fn cache_roundtrip_and_staleness() {
        let g = small_grid();
        let b = binned(
            vec![vec![Event::new(0.0, 0.0, 0.5), Event::new(0.25, 0.0, 1.0)]],
            &g,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pre.bin");
        let pre = precompute_cached(&b, &g, &PrecomputeOptions::default(), &path).unwrap();
        let key = cache_key(&b, &g).unwrap();
        assert_eq!(Precomputed::load_cache(&path, &key).unwrap().unwrap(), pre);
        let other = binned(vec![vec![Event::new(0.0, 0.0, 0.5)]], &g);
        let key2 = cache_key(&other, &g).unwrap();
        assert!(Precomputed::load_cache(&path, &key2).unwrap().is_none());
        std::fs::write(&path, b"garbage").unwrap();
        assert!(Precomputed::load_cache(&path, &key).is_err());
    }
}
