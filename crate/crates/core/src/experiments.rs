//! Simulation studies: discretization error, statistical error, accuracy and
//! cost of the lag statistic, and held-out likelihood comparisons.
//!
//! Every sweep cell and run is a job seeded from `seed + run`, so the same
//! run index sees the same catalog at every stepsize. Jobs run on a rayon
//! pool sized by `STHAWKES_WORKERS` (default: all cores); results come back
//! in job order. A failing run yields a row with its `error` field set
//! instead of aborting the sweep.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::Window;
use crate::error::{Error, Result};
use crate::grid::{bin_events, make_grid, GridSpec};
use crate::kernels::{SpatialFamily, Support, TemporalFamily};
use crate::params::ModelParams;
use crate::precompute::{psi_error_norms, psi_exact, psi_tilde, PsiMethod};
use crate::simulator::{simulate, GroundTruth};
use crate::solver::{default_init, fit, nll, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Discretization,
    Statistical,
    Psi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelPair {
    pub spatial: SpatialFamily,
    pub temporal: TemporalFamily,
}

/// A parameter sweep. `(T, S)` cells are the cross product of `horizons`
/// and `spatial_bounds` unless `cells` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    /// Equal stepsizes `dx = dy = dt`.
    pub steps: Vec<f64>,
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub spatial_bounds: Vec<f64>,
    #[serde(default)]
    pub cells: Vec<[f64; 2]>,
    pub kernels: Vec<KernelPair>,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Use 100 runs per cell regardless of `runs`.
    #[serde(default)]
    pub full_fidelity: bool,
    #[serde(default)]
    pub fit: FitOptions,
}

impl ExperimentSpec {
    /// Defaults for each experiment: desk-scale run counts.
    pub fn preset(kind: ExperimentKind) -> Self {
        let pair = |s, t| KernelPair {
            spatial: s,
            temporal: t,
        };
        match kind {
            ExperimentKind::Discretization => Self {
                experiment: kind,
                steps: vec![0.5, 0.25, 0.1, 0.05],
                horizons: vec![10.0, 100.0],
                spatial_bounds: vec![10.0, 20.0],
                cells: vec![],
                kernels: vec![pair(SpatialFamily::TruncGauss, TemporalFamily::Kumaraswamy)],
                runs: 10,
                seed: 0,
                full_fidelity: false,
                fit: FitOptions::default(),
            },
            ExperimentKind::Statistical => Self {
                experiment: kind,
                steps: vec![0.1],
                horizons: vec![10.0, 100.0, 1000.0],
                spatial_bounds: vec![10.0, 20.0],
                cells: vec![],
                kernels: vec![pair(SpatialFamily::TruncGauss, TemporalFamily::TruncGauss)],
                runs: 10,
                seed: 0,
                full_fidelity: false,
                fit: FitOptions::default(),
            },
            ExperimentKind::Psi => Self {
                experiment: kind,
                steps: vec![0.1],
                horizons: vec![],
                spatial_bounds: vec![],
                cells: vec![[5.0, 5.0], [10.0, 10.0], [50.0, 10.0]],
                kernels: vec![pair(SpatialFamily::TruncGauss, TemporalFamily::Kumaraswamy)],
                runs: 1,
                seed: 0,
                full_fidelity: false,
                fit: FitOptions::default(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("experiment spec: {m}")));
        if self.steps.is_empty() || self.kernels.is_empty() {
            return bad("steps and kernels must be non-empty");
        }
        if self.cells.is_empty() && (self.horizons.is_empty() || self.spatial_bounds.is_empty()) {
            return bad("give either cells or non-empty horizons and spatial_bounds");
        }
        if self.runs == 0 {
            return bad("runs must be >= 1");
        }
        let all = self
            .steps
            .iter()
            .chain(&self.horizons)
            .chain(&self.spatial_bounds);
        if all
            .chain(self.cells.iter().flatten())
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return bad("steps, horizons and bounds must be finite and > 0");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// `(T, S)` cells in sweep order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        if !self.cells.is_empty() {
            return self.cells.iter().map(|c| (c[0], c[1])).collect();
        }
        let mut out = Vec::new();
        for &t in &self.horizons {
            for &s in &self.spatial_bounds {
                out.push((t, s));
            }
        }
        out
    }

    pub fn run_count(&self) -> usize {
        if self.full_fidelity {
            100
        } else {
            self.runs
        }
    }

    /// First 16 hex digits of the SHA-256 of the sweep's JSON.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(json)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Ground truth of the simulation studies: `mu = 0.5`, `alpha = 0.6`, unit
/// supports, and per-family kernel parameters (TG spatial `sigma = 0.1`,
/// POW `d = 0.05`, KUM `a = b = 2`, TG temporal `(0.5, 0.1)`, EXP `decay = 1`).
pub fn ground_truth(spatial: SpatialFamily, temporal: TemporalFamily) -> GroundTruth {
    let mut p = match spatial {
        SpatialFamily::TruncGauss => vec![0.0, 0.0, 0.1],
        SpatialFamily::InvPowerLaw => vec![0.0, 0.0, 0.05],
    };
    p.extend(match temporal {
        TemporalFamily::Kumaraswamy => vec![2.0, 2.0],
        TemporalFamily::TruncGauss => vec![0.5, 0.1],
        TemporalFamily::Exponential => vec![1.0],
    });
    ModelParams::uniform(vec![0.5], vec![0.6], spatial, temporal, &p, Support::unit())
        .expect("ground truth is valid")
}

fn workers() -> usize {
    std::env::var("STHAWKES_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_jobs<J: Sync, R: Send>(jobs: &[J], f: impl Fn(&J) -> R + Sync + Send) -> Vec<R> {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()
    {
        Ok(pool) => pool.install(|| jobs.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            jobs.iter().map(f).collect()
        }
    }
}

/// One fit of a simulated catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub config_hash: String,
    pub spatial: String,
    pub temporal: String,
    pub horizon: f64,
    pub bound: f64,
    pub step: f64,
    pub run: usize,
    pub seed: u64,
    pub events: usize,
    pub l2_error: f64,
    /// `name=value` squared errors per parameter, `;`-separated.
    pub squared_errors: String,
    pub iterations: usize,
    pub converged: bool,
    pub precompute_secs: f64,
    pub optimize_secs: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy)]
struct FitJob {
    kernels: KernelPair,
    horizon: f64,
    bound: f64,
    step: f64,
    run: usize,
    seed: u64,
}

fn fit_job(job: &FitJob, opts: &FitOptions, hash: &str) -> FitRow {
    let mut row = FitRow {
        config_hash: hash.to_string(),
        spatial: job.kernels.spatial.name().into(),
        temporal: job.kernels.temporal.name().into(),
        horizon: job.horizon,
        bound: job.bound,
        step: job.step,
        run: job.run,
        seed: job.seed,
        events: 0,
        l2_error: f64::NAN,
        squared_errors: String::new(),
        iterations: 0,
        converged: false,
        precompute_secs: 0.0,
        optimize_secs: 0.0,
        error: String::new(),
    };
    let result = (|| -> Result<()> {
        let truth = ground_truth(job.kernels.spatial, job.kernels.temporal);
        let window = Window::new(job.bound, job.bound, job.horizon)?;
        let cat = simulate(&truth, window, job.seed)?;
        row.events = cat.len();
        let grid = make_grid(window, Support::unit(), [job.step; 3])?;
        let binned = bin_events(&cat, &grid)?;
        let init = default_init(
            &binned.counts(),
            &grid,
            job.kernels.spatial,
            job.kernels.temporal,
        )?;
        let res = fit(&binned, &grid, &init, opts)?;
        row.l2_error = res.params.distance(&truth);
        row.squared_errors = res
            .params
            .param_names()
            .iter()
            .zip(res.params.to_vector().iter().zip(truth.to_vector()))
            .map(|(n, (a, b))| format!("{n}={:.6e}", (a - b).powi(2)))
            .collect::<Vec<_>>()
            .join(";");
        row.iterations = res.iterations;
        row.converged = res.converged;
        row.precompute_secs = res.timings.precompute_secs;
        row.optimize_secs = res.timings.optimize_secs;
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!(
            "run {} (T={}, S={}, step={}) failed: {e}",
            job.run,
            job.horizon,
            job.bound,
            job.step
        );
        row.error = e.to_string();
    }
    row
}

fn fit_sweep(spec: &ExperimentSpec, steps: &[f64]) -> Result<Vec<FitRow>> {
    spec.validate()?;
    let hash = spec.config_hash();
    let mut jobs = Vec::new();
    for &kernels in &spec.kernels {
        for (horizon, bound) in spec.cells() {
            for &step in steps {
                for run in 0..spec.run_count() {
                    jobs.push(FitJob {
                        kernels,
                        horizon,
                        bound,
                        step,
                        run,
                        seed: spec.seed.wrapping_add(run as u64),
                    });
                }
            }
        }
    }
    Ok(run_jobs(&jobs, |j| fit_job(j, &spec.fit, &hash)))
}

/// Error of the fitted parameters as the stepsize shrinks, per `(T, S)` cell.
pub fn exp_discretization(spec: &ExperimentSpec) -> Result<Vec<FitRow>> {
    fit_sweep(spec, &spec.steps)
}

/// Error of the fitted parameters as `T` grows, at the first configured stepsize.
pub fn exp_statistical(spec: &ExperimentSpec) -> Result<Vec<FitRow>> {
    fit_sweep(spec, &spec.steps[..1])
}

/// Exact versus lag statistic on one simulated binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiRow {
    pub config_hash: String,
    pub horizon: f64,
    pub bound: f64,
    pub step: f64,
    pub run: usize,
    pub seed: u64,
    pub events: usize,
    pub rel_l1: f64,
    pub rel_fro: f64,
    pub abs_l1: f64,
    pub abs_fro: f64,
    pub exact_secs: f64,
    pub tilde_secs: f64,
    pub error: String,
}

/// Compares the exact pairwise statistic with its lag approximation.
pub fn psi_comparison(
    truth: &GroundTruth,
    window: Window,
    step: f64,
    seed: u64,
    exact_budget: usize,
) -> Result<(usize, crate::precompute::PsiErrorNorms, f64, f64)> {
    let cat = simulate(truth, window, seed)?;
    let grid = make_grid(window, truth.kernels[0].support().to_owned(), [step; 3])?;
    let binned = bin_events(&cat, &grid)?;
    let t0 = Instant::now();
    let tilde = psi_tilde(&binned, &grid, PsiMethod::Auto)?;
    let tilde_secs = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let exact = psi_exact(&binned, &grid, exact_budget)?;
    let exact_secs = t0.elapsed().as_secs_f64();
    let pre = crate::precompute::Precomputed {
        counts: binned.counts(),
        kernel_len: grid.kernel_len,
        phi_grid: vec![],
        phi_events: vec![],
        psi_tilde: tilde,
        psi_exact: Some(exact),
    };
    Ok((cat.len(), psi_error_norms(&pre)?, exact_secs, tilde_secs))
}

pub fn exp_psi(spec: &ExperimentSpec) -> Result<Vec<PsiRow>> {
    spec.validate()?;
    let hash = spec.config_hash();
    let kernels = spec.kernels[0];
    let truth = ground_truth(kernels.spatial, kernels.temporal);
    let mut jobs = Vec::new();
    for (horizon, bound) in spec.cells() {
        for &step in &spec.steps {
            for run in 0..spec.run_count() {
                jobs.push((horizon, bound, step, run));
            }
        }
    }
    let budget = spec.fit.precompute.exact_budget;
    Ok(run_jobs(&jobs, |&(horizon, bound, step, run)| {
        let seed = spec.seed.wrapping_add(run as u64);
        let mut row = PsiRow {
            config_hash: hash.clone(),
            horizon,
            bound,
            step,
            run,
            seed,
            events: 0,
            rel_l1: f64::NAN,
            rel_fro: f64::NAN,
            abs_l1: f64::NAN,
            abs_fro: f64::NAN,
            exact_secs: f64::NAN,
            tilde_secs: f64::NAN,
            error: String::new(),
        };
        match Window::new(bound, bound, horizon)
            .and_then(|w| psi_comparison(&truth, w, step, seed, budget))
        {
            Ok((events, norms, exact_secs, tilde_secs)) => {
                row.events = events;
                row.rel_l1 = norms.rel_l1;
                row.rel_fro = norms.rel_fro;
                row.abs_l1 = norms.abs_l1;
                row.abs_fro = norms.abs_fro;
                row.exact_secs = exact_secs;
                row.tilde_secs = tilde_secs;
            }
            Err(e) => {
                log::warn!("psi run {run} (T={horizon}, S={bound}) failed: {e}");
                row.error = e.to_string();
            }
        }
        row
    }))
}

/// Held-out likelihood of a fitted model against a perturbed copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllComparison {
    pub train_events: usize,
    pub test_events: usize,
    pub fitted_nll: f64,
    pub perturbed_nll: f64,
    pub fitted: ModelParams,
}

/// Simulates on `window`, splits in time at `fraction`, fits on the train
/// part and scores the test part with the fitted parameters and with every
/// parameter scaled by `1 + perturbation` (clamped to the fitting boxes).
pub fn nll_comparison(
    kernels: KernelPair,
    window: Window,
    step: f64,
    fraction: f64,
    perturbation: f64,
    seed: u64,
    opts: &FitOptions,
) -> Result<NllComparison> {
    let truth = ground_truth(kernels.spatial, kernels.temporal);
    let cat = simulate(&truth, window, seed)?;
    let (train, test) = cat.split_temporal(fraction)?;
    let fit_grid = make_grid(*train.window(), Support::unit(), [step; 3])?;
    let binned = bin_events(&train, &fit_grid)?;
    let init = default_init(
        &binned.counts(),
        &fit_grid,
        kernels.spatial,
        kernels.temporal,
    )?;
    let res = fit(&binned, &fit_grid, &init, opts)?;

    let test_grid: GridSpec = make_grid(*test.window(), Support::unit(), [step; 3])?;
    let test_binned = bin_events(&test, &test_grid)?;
    let fitted = res.params;
    let perturbed = {
        let mut v: Vec<f64> = fitted
            .to_vector()
            .iter()
            .map(|x| x * (1.0 + perturbation))
            .collect();
        let d = fitted.dim();
        for a in &mut v[d..d + d * d] {
            *a = a.min(1.0 - opts.eps_alpha);
        }
        let mut off = d + d * d;
        for k in &fitted.kernels {
            for (n, (lo, hi)) in k.bounds().into_iter().enumerate() {
                v[off + n] = v[off + n].clamp(lo, hi);
            }
            off += k.n_params();
        }
        fitted.from_vector(&v)?
    };
    let score = |p: &ModelParams| -> Result<f64> {
        let kg = p.kernel_grids(&test_grid, false)?;
        nll(p, &test_binned, &test_grid, &kg)
    };
    Ok(NllComparison {
        train_events: train.len(),
        test_events: test.len(),
        fitted_nll: score(&fitted)?,
        perturbed_nll: score(&perturbed)?,
        fitted,
    })
}

/// Writes rows to `path`, appending when the file already holds the same
/// header and refusing when it holds a different one.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let header = {
        let mut w = csv::Writer::from_writer(Vec::new());
        match rows.first() {
            Some(r) => w.serialize(r)?,
            None => return Ok(()),
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io(path, e.into_error()))?;
        String::from_utf8_lossy(&bytes)
            .lines()
            .next()
            .unwrap_or_default()
            .to_string()
    };
    let existing = if path.exists() {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        BufReader::new(f)
            .lines()
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
    } else {
        None
    };
    let append = match existing {
        Some(line) if line.trim_end() == header => true,
        Some(line) if !line.trim().is_empty() => {
            return Err(Error::Csv(csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{} has a different header: {line}", path.display()),
            ))))
        }
        _ => false,
    };
    let file = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(!append)
        .from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Median and quartiles of the finite values; `None` when there are none.
pub fn quantiles(values: &[f64]) -> Option<[f64; 3]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some([q(0.25), q(0.5), q(0.75)])
}

/// Per-cell summary of fit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub spatial: String,
    pub temporal: String,
    pub horizon: f64,
    pub bound: f64,
    pub step: f64,
    pub runs: usize,
    pub failed: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub mean_secs: f64,
}

pub fn summarize(rows: &[FitRow]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    let mut keys: Vec<(String, String, f64, f64, f64)> = Vec::new();
    for r in rows {
        let k = (
            r.spatial.clone(),
            r.temporal.clone(),
            r.horizon,
            r.bound,
            r.step,
        );
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (sp, tp, t, s, d) in keys {
        let cell: Vec<&FitRow> = rows
            .iter()
            .filter(|r| {
                r.spatial == sp && r.temporal == tp && r.horizon == t && r.bound == s && r.step == d
            })
            .collect();
        let errs: Vec<f64> = cell
            .iter()
            .filter(|r| r.error.is_empty())
            .map(|r| r.l2_error)
            .collect();
        let [q25, median, q75] = quantiles(&errs).unwrap_or([f64::NAN; 3]);
        let secs: f64 = cell
            .iter()
            .map(|r| r.precompute_secs + r.optimize_secs)
            .sum::<f64>()
            / cell.len() as f64;
        out.push(CellSummary {
            spatial: sp,
            temporal: tp,
            horizon: t,
            bound: s,
            step: d,
            runs: cell.len(),
            failed: cell.len() - errs.len(),
            q25,
            median,
            q75,
            mean_secs: secs,
        });
    }
    out
}
