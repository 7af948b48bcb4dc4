//! Model parameters `theta = (mu, alpha, eta)` of a D-variate process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{KernelGrids, KernelModel, SpatialFamily, Support, TemporalFamily};

/// Baselines `mu` (length D), excitation `alpha` (row-major D x D, entry
/// `i * D + j` is the effect of process j on process i) and one kernel per
/// pair, same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub baseline: Vec<f64>,
    pub excitation: Vec<f64>,
    pub kernels: Vec<KernelModel>,
}

impl ModelParams {
    pub fn new(
        baseline: Vec<f64>,
        excitation: Vec<f64>,
        kernels: Vec<KernelModel>,
    ) -> Result<Self> {
        let d = baseline.len();
        if d == 0 {
            return Err(Error::Shape("model needs at least one process".into()));
        }
        if excitation.len() != d * d || kernels.len() != d * d {
            return Err(Error::Shape(format!(
                "D = {d} needs {} excitation entries and kernels, got {} and {}",
                d * d,
                excitation.len(),
                kernels.len()
            )));
        }
        if let Some(m) = baseline.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "baseline must be finite and >= 0, got {m}"
            )));
        }
        if let Some(a) = excitation.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "excitation must be finite and >= 0, got {a}"
            )));
        }
        Ok(Self {
            baseline,
            excitation,
            kernels,
        })
    }

    /// Same kernel family on every pair, each at the given parameters.
    pub fn uniform(
        baseline: Vec<f64>,
        excitation: Vec<f64>,
        spatial: SpatialFamily,
        temporal: TemporalFamily,
        kernel_params: &[f64],
        support: Support,
    ) -> Result<Self> {
        let d = baseline.len();
        let k = KernelModel::new(spatial, temporal, kernel_params, support)?;
        Self::new(baseline, excitation, vec![k; d * d])
    }

    pub fn dim(&self) -> usize {
        self.baseline.len()
    }

    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.excitation[i * self.dim() + j]
    }

    pub fn kernel(&self, i: usize, j: usize) -> &KernelModel {
        &self.kernels[i * self.dim() + j]
    }

    pub fn kernel_grids(&self, grid: &GridSpec, with_grad: bool) -> Result<KernelGrids> {
        KernelGrids::new(&self.kernels, self.dim(), grid, with_grad)
    }

    /// Length of [`Self::to_vector`].
    pub fn n_params(&self) -> usize {
        self.dim()
            + self.excitation.len()
            + self.kernels.iter().map(|k| k.n_params()).sum::<usize>()
    }

    /// Flattened `[mu, alpha, eta_00, eta_01, ...]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.baseline.clone();
        v.extend_from_slice(&self.excitation);
        for k in &self.kernels {
            v.extend_from_slice(k.params());
        }
        v
    }

    /// Inverse of [`Self::to_vector`], keeping the kernel families.
    pub fn from_vector(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, expected {}",
                v.len(),
                self.n_params()
            )));
        }
        let d = self.dim();
        let baseline = v[..d].to_vec();
        let excitation = v[d..d + d * d].to_vec();
        let mut off = d + d * d;
        let mut kernels = Vec::with_capacity(d * d);
        for k in &self.kernels {
            let n = k.n_params();
            kernels.push(k.with_params(&v[off..off + n])?);
            off += n;
        }
        Self::new(baseline, excitation, kernels)
    }

    /// Human-readable labels matching [`Self::to_vector`].
    pub fn param_names(&self) -> Vec<String> {
        let d = self.dim();
        let mut names: Vec<String> = (0..d).map(|i| format!("mu[{i}]")).collect();
        for i in 0..d {
            for j in 0..d {
                names.push(format!("alpha[{i},{j}]"));
            }
        }
        for i in 0..d {
            for j in 0..d {
                for p in self.kernel(i, j).param_names() {
                    names.push(format!("{p}[{i},{j}]"));
                }
            }
        }
        names
    }

    /// Euclidean distance between two parameter vectors of the same layout.
    pub fn distance(&self, other: &ModelParams) -> f64 {
        self.to_vector()
            .iter()
            .zip(other.to_vector())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Spectral radius of the excitation matrix.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.excitation, self.dim())
    }
}

/// Spectral radius of a non-negative square matrix via `||A^(2^k)||^(1/2^k)`,
/// renormalizing at every squaring.
pub fn spectral_radius(a: &[f64], d: usize) -> f64 {
    assert_eq!(a.len(), d * d);
    let norm = |m: &[f64]| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut m = a.to_vec();
    let mut log_scale = 0.0;
    let mut exponent = 1.0;
    let mut estimate = norm(&m);
    for _ in 0..40 {
        let n = norm(&m);
        if n == 0.0 {
            return 0.0;
        }
        for v in m.iter_mut() {
            *v /= n;
        }
        log_scale += n.ln() / exponent;
        let mut sq = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let aik = m[i * d + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    sq[i * d + j] += aik * m[k * d + j];
                }
            }
        }
        m = sq;
        exponent *= 2.0;
        let next = (log_scale + norm(&m).ln() / exponent).exp();
        if (next - estimate).abs() <= 1e-13 * next.max(1e-300) {
            return next;
        }
        estimate = next;
    }
    estimate
}
