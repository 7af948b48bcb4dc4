//! Finite-support, space-time separable triggering kernels
//! `g(dx, dy, dt) = h(dx, dy) * f(dt)`.
//!
//! Spatial factors live on `[-W_X, W_X] x [-W_Y, W_Y]`, temporal factors on
//! `[0, W_T]`. Each factor is normalized in closed form to unit mass on its
//! truncated support, and every parameter derivative includes the derivative
//! of that normalization constant.
//!
//! | name  | factor   | parameters          |
//! |-------|----------|---------------------|
//! | `tg`  | spatial  | `m1, m2, sigma`     |
//! | `pow` | spatial  | `m1, m2, d`         |
//! | `tg`  | temporal | `m_t, sigma_t`      |
//! | `exp` | temporal | `decay`             |
//! | `kum` | temporal | `a, b`              |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Kernel support half-widths `W_X`, `W_Y` and temporal length `W_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub half_x: f64,
    pub half_y: f64,
    pub length_t: f64,
}

impl Support {
    pub fn new(half_x: f64, half_y: f64, length_t: f64) -> Result<Self> {
        for (name, v) in [("W_X", half_x), ("W_Y", half_y), ("W_T", length_t)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "support {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            half_x,
            half_y,
            length_t,
        })
    }

    /// `[-1, 1]^2 x [0, 1]`.
    pub fn unit() -> Self {
        Self {
            half_x: 1.0,
            half_y: 1.0,
            length_t: 1.0,
        }
    }

    pub fn approx_eq(&self, other: &Support) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        close(self.half_x, other.half_x)
            && close(self.half_y, other.half_y)
            && close(self.length_t, other.length_t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpatialFamily {
    #[serde(rename = "tg")]
    TruncGauss,
    #[serde(rename = "pow")]
    InvPowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalFamily {
    #[serde(rename = "tg")]
    TruncGauss,
    #[serde(rename = "exp")]
    Exponential,
    #[serde(rename = "kum")]
    Kumaraswamy,
}

impl SpatialFamily {
    pub const ALL: [SpatialFamily; 2] = [SpatialFamily::TruncGauss, SpatialFamily::InvPowerLaw];

    pub fn name(self) -> &'static str {
        match self {
            SpatialFamily::TruncGauss => "tg",
            SpatialFamily::InvPowerLaw => "pow",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            SpatialFamily::TruncGauss => &["m1", "m2", "sigma"],
            SpatialFamily::InvPowerLaw => &["m1", "m2", "d"],
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    fn default_params(self, s: &Support) -> Vec<f64> {
        match self {
            SpatialFamily::TruncGauss => vec![0.0, 0.0, 0.25 * s.half_x.min(s.half_y)],
            SpatialFamily::InvPowerLaw => vec![0.0, 0.0, 0.1 * s.half_x * s.half_y],
        }
    }

    fn bounds(self, s: &Support) -> Vec<(f64, f64)> {
        let means = [(-s.half_x, s.half_x), (-s.half_y, s.half_y)];
        match self {
            SpatialFamily::TruncGauss => {
                vec![means[0], means[1], (1e-3, 10.0 * s.half_x.max(s.half_y))]
            }
            SpatialFamily::InvPowerLaw => {
                vec![means[0], means[1], (1e-4, 100.0 * s.half_x * s.half_y)]
            }
        }
    }
}

impl TemporalFamily {
    pub const ALL: [TemporalFamily; 3] = [
        TemporalFamily::TruncGauss,
        TemporalFamily::Exponential,
        TemporalFamily::Kumaraswamy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemporalFamily::TruncGauss => "tg",
            TemporalFamily::Exponential => "exp",
            TemporalFamily::Kumaraswamy => "kum",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            TemporalFamily::TruncGauss => &["m_t", "sigma_t"],
            TemporalFamily::Exponential => &["decay"],
            TemporalFamily::Kumaraswamy => &["a", "b"],
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    fn default_params(self, s: &Support) -> Vec<f64> {
        let w = s.length_t;
        match self {
            TemporalFamily::TruncGauss => vec![0.5 * w, 0.25 * w],
            TemporalFamily::Exponential => vec![2.0 / w],
            TemporalFamily::Kumaraswamy => vec![1.5, 1.5],
        }
    }

    fn bounds(self, s: &Support) -> Vec<(f64, f64)> {
        let w = s.length_t;
        match self {
            TemporalFamily::TruncGauss => vec![(0.0, w), (1e-3, 10.0 * w)],
            TemporalFamily::Exponential => vec![(1e-3 / w, 100.0 / w)],
            TemporalFamily::Kumaraswamy => vec![(0.2, 50.0), (0.2, 50.0)],
        }
    }
}

impl fmt::Display for SpatialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for TemporalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpatialFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tg" => Ok(SpatialFamily::TruncGauss),
            "pow" => Ok(SpatialFamily::InvPowerLaw),
            other => Err(Error::InvalidParameter(format!(
                "unknown spatial kernel `{other}` (expected tg | pow)"
            ))),
        }
    }
}

impl FromStr for TemporalFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tg" => Ok(TemporalFamily::TruncGauss),
            "exp" => Ok(TemporalFamily::Exponential),
            "kum" => Ok(TemporalFamily::Kumaraswamy),
            other => Err(Error::InvalidParameter(format!(
                "unknown temporal kernel `{other}` (expected tg | exp | kum)"
            ))),
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `Phi(b) - Phi(a)` without cancellation in either tail.
fn normal_mass(a: f64, b: f64) -> f64 {
    let r = std::f64::consts::SQRT_2;
    if a > 0.0 {
        0.5 * (erfc(a / r) - erfc(b / r))
    } else if b < 0.0 {
        0.5 * (erfc(-b / r) - erfc(-a / r))
    } else {
        0.5 * (erf(b / r) - erf(a / r))
    }
}

/// One-dimensional Gaussian truncated to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
struct TruncGauss1 {
    lo: f64,
    hi: f64,
    mean: f64,
    sigma: f64,
    norm: f64,
    dnorm_dmean: f64,
    dnorm_dsigma: f64,
}

impl TruncGauss1 {
    fn new(lo: f64, hi: f64, mean: f64, sigma: f64) -> Self {
        let a = (lo - mean) / sigma;
        let b = (hi - mean) / sigma;
        let (ea, eb) = ((-0.5 * a * a).exp(), (-0.5 * b * b).exp());
        let norm = sigma * SQRT_2PI * normal_mass(a, b);
        Self {
            lo,
            hi,
            mean,
            sigma,
            norm,
            dnorm_dmean: ea - eb,
            dnorm_dsigma: norm / sigma - (b * eb - a * ea),
        }
    }

    fn inside(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Unnormalized density; callers check the support.
    fn kernel(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sigma;
        (-0.5 * z * z).exp()
    }

    fn value(&self, x: f64) -> f64 {
        if self.inside(x) {
            self.kernel(x) / self.norm
        } else {
            0.0
        }
    }

    fn dlog_dmean(&self, x: f64) -> f64 {
        (x - self.mean) / (self.sigma * self.sigma) - self.dnorm_dmean / self.norm
    }

    fn dlog_dsigma(&self, x: f64) -> f64 {
        let u = x - self.mean;
        u * u / self.sigma.powi(3) - self.dnorm_dsigma / self.norm
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = std_normal_cdf((self.lo - self.mean) / self.sigma);
        let b = std_normal_cdf((self.hi - self.mean) / self.sigma);
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        loop {
            let p = a + rng.gen::<f64>() * (b - a);
            if p <= 0.0 || p >= 1.0 {
                continue;
            }
            let x = self.mean + self.sigma * std.inverse_cdf(p);
            if self.inside(x) {
                return x;
            }
        }
    }
}

/// Antiderivative `F(x, y) = atan(x y / (h sqrt(h^2 + x^2 + y^2)))` of
/// `h / (h^2 + x^2 + y^2)^{3/2}` over `[0, x] x [0, y]` (the solid angle of a
/// rectangle seen from height `h`), with its partials in `x`, `y` and `h`.
fn solid_angle_corner(x: f64, y: f64, h: f64) -> [f64; 4] {
    let (h2, x2, y2) = (h * h, x * x, y * y);
    let r = (h2 + x2 + y2).sqrt();
    let f = (x * y / (h * r)).atan();
    let dx = h * y / ((h2 + x2) * r);
    let dy = h * x / ((h2 + y2) * r);
    let dh = -x * y * (r * r + h2) / (r * (h2 + x2) * (h2 + y2));
    [f, dx, dy, dh]
}

/// Truncated inverse power law `(1 + r^2 / d)^{-3/2}` on a centred box.
#[derive(Debug, Clone, PartialEq)]
struct PowerLaw2 {
    mean: [f64; 2],
    d: f64,
    half: [f64; 2],
    norm: f64,
    dnorm: [f64; 3],
}

impl PowerLaw2 {
    fn new(mean: [f64; 2], d: f64, half: [f64; 2]) -> Self {
        // Z = d * Omega(sqrt d) by inclusion-exclusion over the four corners.
        let h = d.sqrt();
        let xs = [-half[0] - mean[0], half[0] - mean[0]];
        let ys = [-half[1] - mean[1], half[1] - mean[1]];
        let mut omega = [0.0; 4];
        for (ix, &x) in xs.iter().enumerate() {
            for (iy, &y) in ys.iter().enumerate() {
                let sign = if ix == iy { 1.0 } else { -1.0 };
                let c = solid_angle_corner(x, y, h);
                for k in 0..4 {
                    omega[k] += sign * c[k];
                }
            }
        }
        let norm = d * omega[0];
        let dnorm = [-d * omega[1], -d * omega[2], omega[0] + 0.5 * h * omega[3]];
        Self {
            mean,
            d,
            half,
            norm,
            dnorm,
        }
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.half[0] && y.abs() <= self.half[1]
    }

    fn r2(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x - self.mean[0], y - self.mean[1]);
        u * u + v * v
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        if !self.inside(x, y) {
            return 0.0;
        }
        (1.0 + self.r2(x, y) / self.d).powf(-1.5) / self.norm
    }

    fn dlog(&self, x: f64, y: f64) -> [f64; 3] {
        let r2 = self.r2(x, y);
        let q = self.d + r2;
        [
            3.0 * (x - self.mean[0]) / q - self.dnorm[0] / self.norm,
            3.0 * (y - self.mean[1]) / q - self.dnorm[1] / self.norm,
            1.5 * r2 / (self.d * q) - self.dnorm[2] / self.norm,
        ]
    }

    /// Radial inverse-CDF draw from the untruncated law, rejected against the box.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let u: f64 = rng.gen();
            let r = (self.d * ((1.0 - u).powi(-2) - 1.0)).sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            let (x, y) = (self.mean[0] + r * phi.cos(), self.mean[1] + r * phi.sin());
            if r.is_finite() && self.inside(x, y) {
                return (x, y);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SpatialFactor {
    TruncGauss { x: TruncGauss1, y: TruncGauss1 },
    InvPowerLaw(PowerLaw2),
}

impl SpatialFactor {
    fn value(&self, dx: f64, dy: f64) -> f64 {
        match self {
            SpatialFactor::TruncGauss { x, y } => x.value(dx) * y.value(dy),
            SpatialFactor::InvPowerLaw(p) => p.value(dx, dy),
        }
    }

    /// Value and gradient w.r.t. the three spatial parameters.
    fn value_grad(&self, dx: f64, dy: f64) -> (f64, [f64; 3]) {
        let v = self.value(dx, dy);
        if v == 0.0 {
            return (0.0, [0.0; 3]);
        }
        let dl = match self {
            SpatialFactor::TruncGauss { x, y } => [
                x.dlog_dmean(dx),
                y.dlog_dmean(dy),
                x.dlog_dsigma(dx) + y.dlog_dsigma(dy),
            ],
            SpatialFactor::InvPowerLaw(p) => p.dlog(dx, dy),
        };
        (v, dl.map(|g| g * v))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            SpatialFactor::TruncGauss { x, y } => (x.sample(rng), y.sample(rng)),
            SpatialFactor::InvPowerLaw(p) => p.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TemporalFactor {
    TruncGauss(TruncGauss1),
    /// `c * exp(-decay * t)` with `c = decay / (1 - exp(-decay * W_T))`.
    Exponential {
        decay: f64,
        length: f64,
        scale: f64,
        dlog_scale: f64,
    },
    /// Kumaraswamy density rescaled to `(0, W_T)`.
    Kumaraswamy {
        a: f64,
        b: f64,
        length: f64,
    },
}

impl TemporalFactor {
    fn value(&self, t: f64) -> f64 {
        match self {
            TemporalFactor::TruncGauss(g) => g.value(t),
            TemporalFactor::Exponential {
                decay,
                length,
                scale,
                ..
            } => {
                if t >= 0.0 && t <= *length {
                    scale * (-decay * t).exp()
                } else {
                    0.0
                }
            }
            TemporalFactor::Kumaraswamy { a, b, length } => {
                // Open interval: the endpoints carry no mass and may be singular.
                let s = t / length;
                if s > 0.0 && s < 1.0 {
                    a * b * s.powf(a - 1.0) * (1.0 - s.powf(*a)).powf(b - 1.0) / length
                } else {
                    0.0
                }
            }
        }
    }

    fn value_grad(&self, t: f64) -> (f64, [f64; 2]) {
        let v = self.value(t);
        if v == 0.0 {
            return (0.0, [0.0; 2]);
        }
        let g = match self {
            TemporalFactor::TruncGauss(g) => [g.dlog_dmean(t) * v, g.dlog_dsigma(t) * v],
            TemporalFactor::Exponential { dlog_scale, .. } => [(dlog_scale - t) * v, 0.0],
            TemporalFactor::Kumaraswamy { a, b, length } => {
                let s = t / length;
                let ln_s = s.ln();
                let sa = s.powf(*a);
                [
                    v * (1.0 / a + ln_s - (b - 1.0) * sa * ln_s / (1.0 - sa)),
                    v * (1.0 / b + (-sa).ln_1p()),
                ]
            }
        };
        (v, g)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TemporalFactor::TruncGauss(g) => g.sample(rng),
            TemporalFactor::Exponential { decay, length, .. } => {
                let u: f64 = rng.gen();
                -(u * (-decay * length).exp_m1()).ln_1p() / decay
            }
            TemporalFactor::Kumaraswamy { a, b, length } => loop {
                let u: f64 = rng.gen();
                let s = (1.0 - (1.0 - u).powf(1.0 / b)).powf(1.0 / a);
                if s > 0.0 && s < 1.0 {
                    return s * length;
                }
            },
        }
    }
}

/// Serialized form of a [`KernelModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub spatial: SpatialFamily,
    pub temporal: TemporalFamily,
    pub params: Vec<f64>,
    pub support: Support,
}

/// A parametric triggering kernel. Parameters are ordered spatial first,
/// then temporal (see the module table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "KernelSpec", try_from = "KernelSpec")]
pub struct KernelModel {
    spatial_family: SpatialFamily,
    temporal_family: TemporalFamily,
    params: Vec<f64>,
    support: Support,
    spatial: SpatialFactor,
    temporal: TemporalFactor,
}

impl From<KernelModel> for KernelSpec {
    fn from(k: KernelModel) -> Self {
        KernelSpec {
            spatial: k.spatial_family,
            temporal: k.temporal_family,
            params: k.params,
            support: k.support,
        }
    }
}

impl TryFrom<KernelSpec> for KernelModel {
    type Error = Error;

    fn try_from(s: KernelSpec) -> Result<Self> {
        KernelModel::new(s.spatial, s.temporal, &s.params, s.support)
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

impl KernelModel {
    pub fn new(
        spatial: SpatialFamily,
        temporal: TemporalFamily,
        params: &[f64],
        support: Support,
    ) -> Result<Self> {
        let (ns, nt) = (spatial.n_params(), temporal.n_params());
        require(params.len() == ns + nt, || {
            format!(
                "kernel {spatial}+{temporal} takes {} parameters, got {}",
                ns + nt,
                params.len()
            )
        })?;
        require(params.iter().all(|p| p.is_finite()), || {
            format!("kernel parameters must be finite: {params:?}")
        })?;
        let sp = &params[..ns];
        let tp = &params[ns..];

        let spatial_factor = match spatial {
            SpatialFamily::TruncGauss => {
                require(sp[2] > 0.0, || {
                    format!("spatial sigma must be > 0, got {}", sp[2])
                })?;
                SpatialFactor::TruncGauss {
                    x: TruncGauss1::new(-support.half_x, support.half_x, sp[0], sp[2]),
                    y: TruncGauss1::new(-support.half_y, support.half_y, sp[1], sp[2]),
                }
            }
            SpatialFamily::InvPowerLaw => {
                require(sp[2] > 0.0, || {
                    format!("power-law scale d must be > 0, got {}", sp[2])
                })?;
                SpatialFactor::InvPowerLaw(PowerLaw2::new(
                    [sp[0], sp[1]],
                    sp[2],
                    [support.half_x, support.half_y],
                ))
            }
        };
        let w = support.length_t;
        let temporal_factor = match temporal {
            TemporalFamily::TruncGauss => {
                require(tp[1] > 0.0, || {
                    format!("temporal sigma must be > 0, got {}", tp[1])
                })?;
                TemporalFactor::TruncGauss(TruncGauss1::new(0.0, w, tp[0], tp[1]))
            }
            TemporalFamily::Exponential => {
                let decay = tp[0];
                require(decay > 0.0, || format!("decay must be > 0, got {decay}"))?;
                let denom = -(-decay * w).exp_m1();
                TemporalFactor::Exponential {
                    decay,
                    length: w,
                    scale: decay / denom,
                    dlog_scale: 1.0 / decay - w / (decay * w).exp_m1(),
                }
            }
            TemporalFamily::Kumaraswamy => {
                require(tp[0] > 0.0 && tp[1] > 0.0, || {
                    format!("Kumaraswamy a, b must be > 0, got {}, {}", tp[0], tp[1])
                })?;
                TemporalFactor::Kumaraswamy {
                    a: tp[0],
                    b: tp[1],
                    length: w,
                }
            }
        };
        let check_norm = |z: f64, what: &str| {
            require(z.is_finite() && z > 0.0, || {
                format!("{what} normalization degenerate ({z}) for parameters {params:?}")
            })
        };
        match &spatial_factor {
            SpatialFactor::TruncGauss { x, y } => {
                check_norm(x.norm, "spatial x")?;
                check_norm(y.norm, "spatial y")?;
            }
            SpatialFactor::InvPowerLaw(p) => check_norm(p.norm, "power-law")?,
        }
        if let TemporalFactor::TruncGauss(g) = &temporal_factor {
            check_norm(g.norm, "temporal")?;
        }

        Ok(Self {
            spatial_family: spatial,
            temporal_family: temporal,
            params: params.to_vec(),
            support,
            spatial: spatial_factor,
            temporal: temporal_factor,
        })
    }

    /// Kernel at the family's default starting parameters.
    pub fn with_defaults(
        spatial: SpatialFamily,
        temporal: TemporalFamily,
        support: Support,
    ) -> Self {
        let mut p = spatial.default_params(&support);
        p.extend(temporal.default_params(&support));
        Self::new(spatial, temporal, &p, support).expect("default kernel parameters are valid")
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::new(
            self.spatial_family,
            self.temporal_family,
            params,
            self.support,
        )
    }

    pub fn spatial_family(&self) -> SpatialFamily {
        self.spatial_family
    }

    pub fn temporal_family(&self) -> TemporalFamily {
        self.temporal_family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut v = self.spatial_family.param_names().to_vec();
        v.extend_from_slice(self.temporal_family.param_names());
        v
    }

    /// Box constraints used by the optimizer, one pair per parameter.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = self.spatial_family.bounds(&self.support);
        b.extend(self.temporal_family.bounds(&self.support));
        b
    }

    pub fn spatial_factor(&self, dx: f64, dy: f64) -> f64 {
        self.spatial.value(dx, dy)
    }

    pub fn temporal_factor(&self, dt: f64) -> f64 {
        self.temporal.value(dt)
    }

    /// `g(dx, dy, dt)`; zero outside the support box.
    pub fn eval(&self, dx: f64, dy: f64, dt: f64) -> f64 {
        let f = self.temporal.value(dt);
        if f == 0.0 {
            return 0.0;
        }
        f * self.spatial.value(dx, dy)
    }

    /// Gradient of `g(dx, dy, dt)` w.r.t. the parameter vector.
    pub fn eval_grad(&self, dx: f64, dy: f64, dt: f64) -> Vec<f64> {
        let (h, dh) = self.spatial.value_grad(dx, dy);
        let (f, df) = self.temporal.value_grad(dt);
        let nt = self.temporal_family.n_params();
        let mut g: Vec<f64> = dh.iter().map(|d| d * f).collect();
        g.extend(df[..nt].iter().map(|d| d * h));
        g
    }

    /// Draws a parent-to-child offset from `g`.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, f64) {
        let (dx, dy) = self.spatial.sample(rng);
        (dx, dy, self.temporal.sample(rng))
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if !self.support.approx_eq(&grid.support) {
            return Err(Error::Shape(format!(
                "kernel support {:?} does not match grid support {:?}",
                self.support, grid.support
            )));
        }
        Ok(())
    }

    /// Kernel samples `g^Delta` on the grid's kernel box, shape `(L_X, L_Y, L_T)`.
    /// Index `(a_x, a_y, a_t)` is evaluated at [`GridSpec::kernel_offset`].
    pub fn eval_on_grid(&self, grid: &GridSpec) -> Result<Array3<f64>> {
        self.check_grid(grid)?;
        let [lx, ly, lt] = grid.kernel_len;
        let spatial = ndarray::Array2::from_shape_fn((lx, ly), |(i, j)| {
            let (dx, dy, _) = grid.kernel_offset([i, j, 0]);
            self.spatial.value(dx, dy)
        });
        let temporal: Vec<f64> = (0..lt)
            .map(|k| self.temporal.value(grid.kernel_offset([0, 0, k]).2))
            .collect();
        Ok(Array3::from_shape_fn((lx, ly, lt), |(i, j, k)| {
            spatial[[i, j]] * temporal[k]
        }))
    }

    /// Kernel samples together with one gradient array per parameter.
    pub fn eval_grad_on_grid(&self, grid: &GridSpec) -> Result<(Array3<f64>, Vec<Array3<f64>>)> {
        self.check_grid(grid)?;
        let [lx, ly, lt] = grid.kernel_len;
        let mut sv = ndarray::Array2::zeros((lx, ly));
        let mut sg = vec![ndarray::Array2::zeros((lx, ly)); 3];
        for i in 0..lx {
            for j in 0..ly {
                let (dx, dy, _) = grid.kernel_offset([i, j, 0]);
                let (v, g) = self.spatial.value_grad(dx, dy);
                sv[[i, j]] = v;
                for p in 0..3 {
                    sg[p][[i, j]] = g[p];
                }
            }
        }
        let nt = self.temporal_family.n_params();
        let mut tv = vec![0.0; lt];
        let mut tg = vec![vec![0.0; lt]; nt];
        for k in 0..lt {
            let (v, g) = self.temporal.value_grad(grid.kernel_offset([0, 0, k]).2);
            tv[k] = v;
            for p in 0..nt {
                tg[p][k] = g[p];
            }
        }
        let values = Array3::from_shape_fn((lx, ly, lt), |(i, j, k)| sv[[i, j]] * tv[k]);
        let mut grads = Vec::with_capacity(3 + nt);
        for s in &sg {
            grads.push(Array3::from_shape_fn((lx, ly, lt), |(i, j, k)| {
                s[[i, j]] * tv[k]
            }));
        }
        for t in &tg {
            grads.push(Array3::from_shape_fn((lx, ly, lt), |(i, j, k)| {
                sv[[i, j]] * t[k]
            }));
        }
        Ok((values, grads))
    }
}

/// Grid samples of a `D x D` kernel matrix (row-major `i * D + j`), with
/// optional per-parameter gradient arrays.
#[derive(Debug, Clone)]
pub struct KernelGrids {
    dim: usize,
    values: Vec<Array3<f64>>,
    grads: Option<Vec<Vec<Array3<f64>>>>,
}

impl KernelGrids {
    pub fn new(
        kernels: &[KernelModel],
        dim: usize,
        grid: &GridSpec,
        with_grad: bool,
    ) -> Result<Self> {
        if kernels.len() != dim * dim {
            return Err(Error::Shape(format!(
                "expected {} kernels for D = {dim}, got {}",
                dim * dim,
                kernels.len()
            )));
        }
        if with_grad {
            let (values, grads) = kernels
                .iter()
                .map(|k| k.eval_grad_on_grid(grid))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            Ok(Self {
                dim,
                values,
                grads: Some(grads),
            })
        } else {
            let values = kernels
                .iter()
                .map(|k| k.eval_on_grid(grid))
                .collect::<Result<Vec<_>>>()?;
            Ok(Self {
                dim,
                values,
                grads: None,
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &Array3<f64> {
        &self.values[i * self.dim + j]
    }

    pub fn grad(&self, i: usize, j: usize) -> Option<&[Array3<f64>]> {
        self.grads.as_ref().map(|g| g[i * self.dim + j].as_slice())
    }
}
