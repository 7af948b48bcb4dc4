#![allow(dead_code)]

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use sthawkes::{
    bin_events, make_grid, BinnedCatalog, Catalog, Event, GridSpec, KernelModel, ModelParams,
    SpatialFamily, Support, TemporalFamily, Window,
};

pub const COMBOS: [(SpatialFamily, TemporalFamily); 6] = [
    (SpatialFamily::TruncGauss, TemporalFamily::TruncGauss),
    (SpatialFamily::TruncGauss, TemporalFamily::Exponential),
    (SpatialFamily::TruncGauss, TemporalFamily::Kumaraswamy),
    (SpatialFamily::InvPowerLaw, TemporalFamily::TruncGauss),
    (SpatialFamily::InvPowerLaw, TemporalFamily::Exponential),
    (SpatialFamily::InvPowerLaw, TemporalFamily::Kumaraswamy),
];

/// Kernel parameters drawn from a box well inside the fitting bounds.
pub fn random_kernel_params<R: Rng>(rng: &mut R, s: SpatialFamily, t: TemporalFamily) -> Vec<f64> {
    let mut p = vec![rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
    p.push(match s {
        SpatialFamily::TruncGauss => rng.gen_range(0.1..0.5),
        SpatialFamily::InvPowerLaw => rng.gen_range(0.05..0.5),
    });
    match t {
        TemporalFamily::TruncGauss => {
            p.push(rng.gen_range(0.2..0.8));
            p.push(rng.gen_range(0.1..0.5));
        }
        TemporalFamily::Exponential => p.push(rng.gen_range(0.5..5.0)),
        TemporalFamily::Kumaraswamy => {
            p.push(rng.gen_range(0.8..4.0));
            p.push(rng.gen_range(0.8..4.0));
        }
    }
    p
}

pub fn random_params<R: Rng>(
    rng: &mut R,
    d: usize,
    s: SpatialFamily,
    t: TemporalFamily,
    support: Support,
) -> ModelParams {
    let baseline = (0..d).map(|_| rng.gen_range(0.1..2.0)).collect();
    let excitation = (0..d * d).map(|_| rng.gen_range(0.1..0.9)).collect();
    let kernels = (0..d * d)
        .map(|_| KernelModel::new(s, t, &random_kernel_params(rng, s, t), support).unwrap())
        .collect();
    ModelParams::new(baseline, excitation, kernels).unwrap()
}

/// Events scattered uniformly, with some snapped onto the positions of
/// earlier ones so that grid cells collide.
pub fn random_catalog<R: Rng>(rng: &mut R, d: usize, window: Window, n: usize) -> Catalog {
    let mut all: Vec<Event> = Vec::new();
    let mut procs = vec![Vec::new(); d];
    for _ in 0..n {
        let e = if !all.is_empty() && rng.gen_bool(0.2) {
            *all.choose(rng).unwrap()
        } else {
            Event::new(
                rng.gen_range(-window.half_x..=window.half_x),
                rng.gen_range(-window.half_y..=window.half_y),
                rng.gen_range(0.0..=window.horizon),
            )
        };
        all.push(e);
        procs[rng.gen_range(0..d)].push(e);
    }
    Catalog::new(procs, window).unwrap()
}

#[derive(Debug)]
pub struct Instance {
    pub grid: GridSpec,
    pub binned: BinnedCatalog,
    pub catalog: Catalog,
}

pub fn instance(cat: Catalog, support: Support, step: f64) -> Instance {
    let grid = make_grid(*cat.window(), support, [step; 3]).unwrap();
    let binned = bin_events(&cat, &grid).unwrap();
    Instance {
        grid,
        binned,
        catalog: cat,
    }
}

/// Dense count field of process `j`, built by rounding each event directly.
pub fn counts(inst: &Instance, j: usize) -> Array3<i64> {
    let g = &inst.grid;
    let n = g.nodes();
    let w = g.window;
    let mut z = Array3::<i64>::zeros((n[0], n[1], n[2]));
    for e in inst.catalog.process(j) {
        let idx =
            |c: f64, step: f64, len: usize| ((c / step).round().max(0.0) as usize).min(len - 1);
        let v = [
            idx(e.x + w.half_x, g.step[0], n[0]),
            idx(e.y + w.half_y, g.step[1], n[1]),
            idx(e.t, g.step[2], n[2]),
        ];
        z[v] += 1;
    }
    z
}

/// Lag of kernel index `a`: spatial indices centred, temporal shifted by one.
pub fn lag(g: &GridSpec, a: [usize; 3]) -> [i64; 3] {
    let l = g.kernel_len;
    [
        a[0] as i64 - (l[0] / 2) as i64,
        a[1] as i64 - (l[1] / 2) as i64,
        a[2] as i64 + 1,
    ]
}

fn get(z: &Array3<i64>, v: [i64; 3]) -> i64 {
    let s = z.shape();
    if (0..3).all(|ax| v[ax] >= 0 && (v[ax] as usize) < s[ax]) {
        z[[v[0] as usize, v[1] as usize, v[2] as usize]]
    } else {
        0
    }
}

fn nodes(g: &GridSpec) -> impl Iterator<Item = [i64; 3]> {
    let n = g.nodes();
    (0..n[0]).flat_map(move |x| {
        (0..n[1]).flat_map(move |y| (0..n[2]).map(move |t| [x as i64, y as i64, t as i64]))
    })
}

fn kernel_indices(g: &GridSpec) -> Vec<[usize; 3]> {
    let l = g.kernel_len;
    let mut out = Vec::new();
    for a in 0..l[0] {
        for b in 0..l[1] {
            for c in 0..l[2] {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn sub(v: [i64; 3], k: [i64; 3]) -> [i64; 3] {
    [v[0] - k[0], v[1] - k[1], v[2] - k[2]]
}

/// `sum_v z_j[v - lag(a)]` over grid nodes `v`.
pub fn brute_phi_grid(inst: &Instance, j: usize) -> Array3<i64> {
    let g = &inst.grid;
    let z = counts(inst, j);
    let l = g.kernel_len;
    let mut out = Array3::zeros((l[0], l[1], l[2]));
    for a in kernel_indices(g) {
        out[a] = nodes(g).map(|v| get(&z, sub(v, lag(g, a)))).sum();
    }
    out
}

/// `sum_v z_i[v] z_j[v - lag(a)]`.
pub fn brute_phi_events(inst: &Instance, i: usize, j: usize) -> Array3<i64> {
    let g = &inst.grid;
    let (zi, zj) = (counts(inst, i), counts(inst, j));
    let l = g.kernel_len;
    let mut out = Array3::zeros((l[0], l[1], l[2]));
    for a in kernel_indices(g) {
        out[a] = nodes(g)
            .map(|v| get(&zi, v) * get(&zj, sub(v, lag(g, a))))
            .sum();
    }
    out
}

/// `sum_v z_j[v - lag(a)] z_k[v - lag(a')]`, rows and columns flattened row-major.
pub fn brute_psi_exact(inst: &Instance, j: usize, k: usize) -> Array2<i64> {
    let g = &inst.grid;
    let (zj, zk) = (counts(inst, j), counts(inst, k));
    let idx = kernel_indices(g);
    let mut out = Array2::zeros((idx.len(), idx.len()));
    for (r, &a) in idx.iter().enumerate() {
        for (c, &b) in idx.iter().enumerate() {
            out[[r, c]] = nodes(g)
                .map(|v| get(&zj, sub(v, lag(g, a))) * get(&zk, sub(v, lag(g, b))))
                .sum();
        }
    }
    out
}

/// `sum_w z_j[w] z_k[w - d]` at index `d + L - 1`.
pub fn brute_psi_tilde(inst: &Instance, j: usize, k: usize) -> Array3<i64> {
    let g = &inst.grid;
    let (zj, zk) = (counts(inst, j), counts(inst, k));
    let l = g.kernel_len.map(|v| v as i64);
    let mut out = Array3::zeros((
        (2 * l[0] - 1) as usize,
        (2 * l[1] - 1) as usize,
        (2 * l[2] - 1) as usize,
    ));
    for ((a, b, c), o) in out.indexed_iter_mut() {
        let d = [
            a as i64 - (l[0] - 1),
            b as i64 - (l[1] - 1),
            c as i64 - (l[2] - 1),
        ];
        *o = nodes(g).map(|w| get(&zj, w) * get(&zk, sub(w, d))).sum();
    }
    out
}

pub fn as_int3(a: &Array3<f64>) -> Array3<i64> {
    a.mapv(|v| {
        assert_eq!(v, v.round(), "non-integer statistic {v}");
        v as i64
    })
}

pub fn as_int2(a: &Array2<f64>) -> Array2<i64> {
    a.mapv(|v| {
        assert_eq!(v, v.round(), "non-integer statistic {v}");
        v as i64
    })
}

/// `|a - f| / max(|a|, |f|, floor)`.
pub fn rel_err(a: f64, f: f64, floor: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(floor)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
