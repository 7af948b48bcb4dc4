use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sthawkes::experiments::{
    exp_discretization, exp_psi, exp_statistical, summarize, write_csv, ExperimentKind,
    ExperimentSpec,
};
use sthawkes::grid::intensity_on_grid;
use sthawkes::solver::{default_init, nll, Timings};
use sthawkes::{
    bin_events, fit, make_grid, Catalog, ConvolutionMethod, Error, FitOptions, GridSpec,
    ModelParams, Result, SpatialFamily, Support, TemporalFamily, Window,
};

#[derive(Parser)]
#[command(
    name = "sthawkes",
    version,
    about = "Simulate and fit space-time Hawkes processes on a grid"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a catalog and write it as process,x,y,t CSV.
    Simulate {
        /// Baselines, one per process.
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        /// Excitation matrix, row-major.
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        #[arg(long, default_value = "tg")]
        spatial_kernel: SpatialFamily,
        #[arg(long, default_value = "kum")]
        temporal_kernel: TemporalFamily,
        /// Kernel parameters, spatial then temporal; family defaults if omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
        /// S_X,S_Y,T
        #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
        domain: Vec<f64>,
        /// Kernel support W_X,W_Y,W_T.
        #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
        support: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a catalog.
    Fit {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation study and append its rows to a CSV file.
    Exp {
        kind: ExpKind,
        /// Sweep definition as JSON; the built-in preset if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the fitted discrete intensity on every grid node.
    Intensity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-event negative log-likelihood of a fitted model on a catalog.
    Nll {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// S_X,S_Y,T of the catalog; the model's window if omitted.
        #[arg(long, value_delimiter = ',')]
        domain: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpKind {
    Discretization,
    Statistical,
    Psi,
}

impl From<ExpKind> for ExperimentKind {
    fn from(k: ExpKind) -> Self {
        match k {
            ExpKind::Discretization => Self::Discretization,
            ExpKind::Statistical => Self::Statistical,
            ExpKind::Psi => Self::Psi,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum StepArg {
    Equal(f64),
    PerAxis([f64; 3]),
}

/// `fit --config` file.
#[derive(Debug, Serialize, Deserialize)]
struct FitConfig {
    spatial: SpatialFamily,
    temporal: TemporalFamily,
    /// `[S_X, S_Y, T]`
    domain: [f64; 3],
    step: StepArg,
    #[serde(default = "unit_support")]
    support: [f64; 3],
    #[serde(default)]
    init: Option<ModelParams>,
    #[serde(default)]
    options: FitOptions,
}

fn unit_support() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

#[derive(Debug, Serialize, Deserialize)]
struct Families {
    spatial: SpatialFamily,
    temporal: TemporalFamily,
}

/// `fit --out` file.
#[derive(Debug, Serialize, Deserialize)]
struct FittedModel {
    families: Families,
    params: ModelParams,
    grid: GridSpec,
    loss_trajectory: Vec<f64>,
    iterations: usize,
    converged: bool,
    timings: Timings,
    seed: u64,
    config_hash: String,
}

fn window_of(v: &[f64]) -> Result<Window> {
    match v {
        [sx, sy, t] => Window::new(*sx, *sy, *t),
        _ => Err(Error::InvalidParameter(format!(
            "expected S_X,S_Y,T, got {} values",
            v.len()
        ))),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    mu: Vec<f64>,
    alpha: Vec<f64>,
    spatial: SpatialFamily,
    temporal: TemporalFamily,
    params: Option<Vec<f64>>,
    domain: &[f64],
    support: &[f64],
    seed: u64,
    out: &Path,
) -> Result<()> {
    let window = window_of(domain)?;
    let support = match support {
        [wx, wy, wt] => Support::new(*wx, *wy, *wt)?,
        _ => return Err(Error::InvalidParameter("support needs W_X,W_Y,W_T".into())),
    };
    let params = match params {
        Some(p) => p,
        None => sthawkes::KernelModel::with_defaults(spatial, temporal, support)
            .params()
            .to_vec(),
    };
    let gt = ModelParams::uniform(mu, alpha, spatial, temporal, &params, support)?;
    let cat = sthawkes::simulate(&gt, window, seed)?;
    cat.save_csv(out)?;
    eprintln!("wrote {} events to {}", cat.len(), out.display());
    Ok(())
}

fn cmd_fit(events: &Path, config: &Path, out: &Path) -> Result<()> {
    let raw = std::fs::read(config).map_err(|e| Error::io(config, e))?;
    let cfg: FitConfig = serde_json::from_slice(&raw)?;
    let config_hash: String = Sha256::digest(&raw)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let window = window_of(&cfg.domain)?;
    let [wx, wy, wt] = cfg.support;
    let support = Support::new(wx, wy, wt)?;
    let step = match cfg.step {
        StepArg::Equal(d) => [d; 3],
        StepArg::PerAxis(s) => s,
    };
    let cat = Catalog::load_csv(events, window)?;
    let grid = make_grid(window, support, step)?;
    for w in &grid.warnings {
        log::warn!("{w}");
    }
    let binned = bin_events(&cat, &grid)?;
    let init = match cfg.init {
        Some(p) => p,
        None => default_init(&binned.counts(), &grid, cfg.spatial, cfg.temporal)?,
    };
    let res = fit(&binned, &grid, &init, &cfg.options)?;
    eprintln!(
        "{} events, {} iterations, converged = {}, loss = {:.6e}",
        cat.len(),
        res.iterations,
        res.converged,
        res.final_loss()
    );
    let model = FittedModel {
        families: Families {
            spatial: cfg.spatial,
            temporal: cfg.temporal,
        },
        params: res.params,
        grid,
        loss_trajectory: res.loss_trajectory,
        iterations: res.iterations,
        converged: res.converged,
        timings: res.timings,
        seed: cfg.options.seed,
        config_hash,
    };
    write_json(out, &model)
}

fn cmd_exp(kind: ExpKind, config: Option<&Path>, out: &Path) -> Result<()> {
    let spec = match config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::preset(kind.into()),
    };
    if spec.experiment != kind.into() {
        return Err(Error::InvalidParameter(format!(
            "config describes a {:?} experiment",
            spec.experiment
        )));
    }
    match kind {
        ExpKind::Psi => {
            let rows = exp_psi(&spec)?;
            write_csv(out, &rows)?;
            for r in &rows {
                eprintln!(
                    "T={} S={} step={} run={}: rel_l1={:.3e} rel_fro={:.3e} exact {:.2}s tilde {:.2}s {}",
                    r.horizon, r.bound, r.step, r.run, r.rel_l1, r.rel_fro, r.exact_secs, r.tilde_secs, r.error
                );
            }
        }
        _ => {
            let rows = if matches!(kind, ExpKind::Discretization) {
                exp_discretization(&spec)?
            } else {
                exp_statistical(&spec)?
            };
            write_csv(out, &rows)?;
            for s in summarize(&rows) {
                eprintln!(
                    "{}/{} T={} S={} step={}: median {:.4} [{:.4}, {:.4}] over {} runs ({} failed), {:.2}s/run",
                    s.spatial, s.temporal, s.horizon, s.bound, s.step, s.median, s.q25, s.q75,
                    s.runs, s.failed, s.mean_secs
                );
            }
        }
    }
    Ok(())
}

fn cmd_intensity(model: &Path, events: &Path, out: &Path) -> Result<()> {
    let m: FittedModel = read_json(model)?;
    let cat = Catalog::load_csv(events, m.grid.window)?;
    let binned = bin_events(&cat, &m.grid)?;
    let kg = m.params.kernel_grids(&m.grid, false)?;
    let lam = intensity_on_grid(&binned, &m.grid, &m.params, &kg, ConvolutionMethod::Fft)?;
    let mut w = csv::Writer::from_path(out).map_err(Error::Csv)?;
    w.write_record(["process", "x", "y", "t", "lambda"])?;
    for (i, l) in lam.iter().enumerate() {
        for ((a, b, c), v) in l.indexed_iter() {
            let (x, y, t) = m.grid.node_coords([a, b, c]);
            w.serialize((i, x, y, t, v))?;
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

fn cmd_nll(model: &Path, events: &Path, domain: Option<&[f64]>) -> Result<()> {
    let m: FittedModel = read_json(model)?;
    let window = match domain {
        Some(d) => window_of(d)?,
        None => m.grid.window,
    };
    let cat = Catalog::load_csv(events, window)?;
    let grid = make_grid(window, m.grid.support, m.grid.step)?;
    let binned = bin_events(&cat, &grid)?;
    let kg = m.params.kernel_grids(&grid, false)?;
    println!("{}", nll(&m.params, &binned, &grid, &kg)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate {
            mu,
            alpha,
            spatial_kernel,
            temporal_kernel,
            params,
            domain,
            support,
            seed,
            out,
        } => cmd_simulate(
            mu,
            alpha,
            spatial_kernel,
            temporal_kernel,
            params,
            &domain,
            &support,
            seed,
            &out,
        ),
        Cmd::Fit {
            events,
            config,
            out,
        } => cmd_fit(&events, &config, &out),
        Cmd::Exp { kind, config, out } => cmd_exp(kind, config.as_deref(), &out),
        Cmd::Intensity { model, events, out } => cmd_intensity(&model, &events, &out),
        Cmd::Nll {
            model,
            events,
            domain,
        } => cmd_nll(&model, &events, domain.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
