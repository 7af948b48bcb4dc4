//! Immigration-birth simulation of a multivariate space-time Hawkes process.
//!
//! Immigrants of process `i` form a homogeneous Poisson field of rate `mu_i`
//! on the window. Every event of process `j` spawns `Poisson(alpha_ij)`
//! children in process `i`, displaced by an offset drawn from `g_ij`.
//! Children landing outside the window are dropped and have no offspring.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::catalog::{Catalog, Event, Window};
use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Ground-truth parameters of a simulation.
pub type GroundTruth = ModelParams;

/// Checks the simulation preconditions: positive baselines, `0 <= alpha < 1`
/// and a subcritical excitation matrix.
pub fn check_ground_truth(gt: &GroundTruth) -> Result<()> {
    if let Some(m) = gt.baseline.iter().find(|&&m| m <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "baseline must be > 0, got {m}"
        )));
    }
    if let Some(a) = gt.excitation.iter().find(|&&a| a >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "excitation must be < 1, got {a}"
        )));
    }
    let rho = gt.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::Unstable(rho));
    }
    Ok(())
}

/// A simulated catalog with optional diagnostics.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub catalog: Catalog,
    /// `parents[i][n]` is `(process, index)` of the parent of event `n` of
    /// process `i` in the returned catalog, `None` for immigrants.
    pub parents: Option<Vec<Vec<Option<(usize, usize)>>>>,
    /// Children drawn into `i` from parents in `j` (row-major `i * D + j`),
    /// counted before clipping to the window.
    pub children_drawn: Vec<u64>,
    /// Number of parents per process (events kept in the window).
    pub parent_counts: Vec<u64>,
}

impl Simulation {
    /// Children per parent, `children_drawn[i * D + j] / parent_counts[j]`.
    pub fn branching_ratios(&self) -> Vec<f64> {
        let d = self.parent_counts.len();
        (0..d * d)
            .map(|ij| {
                let p = self.parent_counts[ij % d];
                if p == 0 {
                    0.0
                } else {
                    self.children_drawn[ij] as f64 / p as f64
                }
            })
            .collect()
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u64
}

/// Simulates a catalog on `window`; deterministic given `seed`.
pub fn simulate(gt: &GroundTruth, window: Window, seed: u64) -> Result<Catalog> {
    Ok(simulate_with(gt, window, seed, false)?.catalog)
}

/// As [`simulate`], optionally keeping parent pointers.
pub fn simulate_with(
    gt: &GroundTruth,
    window: Window,
    seed: u64,
    genealogy: bool,
) -> Result<Simulation> {
    check_ground_truth(gt)?;
    let d = gt.dim();
    for k in &gt.kernels {
        let s = k.support();
        if s.half_x > window.half_x || s.half_y > window.half_y || s.length_t > window.horizon {
            log::warn!("kernel support {s:?} exceeds the window {window:?}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (event, parent as (process, position in `events[process]`))
    let mut events: Vec<Vec<(Event, Option<(usize, usize)>)>> = vec![Vec::new(); d];
    for (i, evs) in events.iter_mut().enumerate() {
        let n = poisson(gt.baseline[i] * window.volume(), &mut rng);
        for _ in 0..n {
            let e = Event::new(
                rng.gen_range(-window.half_x..=window.half_x),
                rng.gen_range(-window.half_y..=window.half_y),
                rng.gen_range(0.0..=window.horizon),
            );
            evs.push((e, None));
        }
    }

    let mut children_drawn = vec![0u64; d * d];
    // Breadth-first over generations: process every event once, in insertion order.
    let mut cursor = vec![0usize; d];
    loop {
        let mut progressed = false;
        for j in 0..d {
            while cursor[j] < events[j].len() {
                let (parent, _) = events[j][cursor[j]];
                let pid = (j, cursor[j]);
                cursor[j] += 1;
                progressed = true;
                for i in 0..d {
                    let n = poisson(gt.alpha(i, j), &mut rng);
                    children_drawn[i * d + j] += n;
                    let k = gt.kernel(i, j);
                    for _ in 0..n {
                        let (dx, dy, dt) = k.sample_offset(&mut rng);
                        let child = Event::new(parent.x + dx, parent.y + dy, parent.t + dt);
                        if window.contains(&child) {
                            events[i].push((child, Some(pid)));
                        }
                    }
                }
            }
        }
        if !progressed {
            break;
        }
    }

    // Sort each process by time and remap parent pointers.
    let mut position = Vec::with_capacity(d);
    let mut order = Vec::with_capacity(d);
    for evs in &events {
        let mut idx: Vec<usize> = (0..evs.len()).collect();
        idx.sort_by(|&a, &b| evs[a].0.t.total_cmp(&evs[b].0.t));
        let mut pos = vec![0; evs.len()];
        for (new, &old) in idx.iter().enumerate() {
            pos[old] = new;
        }
        position.push(pos);
        order.push(idx);
    }
    let processes: Vec<Vec<Event>> = events
        .iter()
        .zip(&order)
        .map(|(evs, idx)| idx.iter().map(|&o| evs[o].0).collect())
        .collect();
    let parents = genealogy.then(|| {
        events
            .iter()
            .zip(&order)
            .map(|(evs, idx)| {
                idx.iter()
                    .map(|&o| evs[o].1.map(|(p, n)| (p, position[p][n])))
                    .collect()
            })
            .collect()
    });
    let parent_counts = events.iter().map(|e| e.len() as u64).collect();
    Ok(Simulation {
        catalog: Catalog::new(processes, window)?,
        parents,
        children_drawn,
        parent_counts,
    })
}
