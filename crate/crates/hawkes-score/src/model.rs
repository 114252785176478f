//! Parametric objects of the marked Hawkes model: the exponential decay
//! kernel, baseline/branching parameters, event streams with attached mark
//! vectors, boost function families, and the stability gate.
//!
//! The intensity model is
//!
//! ```text
//! lambda_g(t) = eta + theta * sum_{t_i < t} alpha * exp(-alpha (t - t_i)) * g(x_i)
//! ```
//!
//! with `g(x) = h(x; psi) / E[h(X; psi)]`, normalized so that marks leave the
//! long-run event rate unchanged on average. At `psi = 0` the boost is
//! identically 1 and the event times are those of an unmarked Hawkes process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unmarked Hawkes parameters theta = (eta, theta_branch, alpha).
///
/// `theta_branch` is the branching ratio: the expected number of direct
/// offspring per event. The value 0 is admitted as the Poisson boundary case
/// (used for simulation and diagnostics); fitted values always lie strictly
/// inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Baseline (immigration) intensity, events per unit time. Must be > 0.
    pub eta: f64,
    /// Branching ratio, in [0, 1).
    pub theta_branch: f64,
    /// Exponential decay rate of the kernel, 1/time. Must be > 0.
    pub alpha: f64,
}

impl HawkesParams {
    pub fn new(eta: f64, theta_branch: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            eta,
            theta_branch,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!(
                "eta = {} must be positive",
                self.eta
            )));
        }
        if !(self.theta_branch >= 0.0 && self.theta_branch < 1.0) {
            return Err(Error::Domain(format!(
                "theta_branch = {} must lie in [0, 1)",
                self.theta_branch
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!(
                "alpha = {} must be positive",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Long-run mean event rate eta / (1 - theta) of the stationary process.
    pub fn stationary_rate(&self) -> f64 {
        self.eta / (1.0 - self.theta_branch)
    }
}

/// How the intensity is initialized at the left edge of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Cold start at the baseline: lambda(0) = eta, no initial excess.
    #[default]
    Baseline,
    /// Start at the stationary mean: lambda(0) = eta / (1 - theta), with the
    /// excess decaying at rate alpha.
    StationaryMean,
}

/// Exponential decay kernel w(s; alpha) = alpha * exp(-alpha s).
pub fn kernel_eval(s: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "kernel_eval: alpha = {alpha} must be positive"
        )));
    }
    if !(s >= 0.0) {
        return Err(Error::Domain(format!(
            "kernel_eval: lag s = {s} must be nonnegative"
        )));
    }
    Ok(alpha * (-alpha * s).exp())
}

/// Kernel mass on [a, b]: exp(-alpha a) - exp(-alpha b). `b` may be infinite.
pub fn kernel_integral(a: f64, b: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "kernel_integral: alpha = {alpha} must be positive"
        )));
    }
    if !(a >= 0.0) || b.is_nan() || a > b {
        return Err(Error::Domain(format!(
            "kernel_integral: need 0 <= a <= b, got a = {a}, b = {b}"
        )));
    }
    let upper = if b.is_infinite() {
        0.0
    } else {
        (-alpha * b).exp()
    };
    Ok((-alpha * a).exp() - upper)
}

/// Event times on (0, T] with one d-dimensional mark vector per event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    horizon: f64,
    times: Vec<f64>,
    marks: Vec<Vec<f64>>,
    mark_dim: usize,
}

impl EventStream {
    /// Validating constructor; times must be strictly increasing in
    /// (0, horizon] and each mark must have length `mark_dim`.
    pub fn new(
        horizon: f64,
        times: Vec<f64>,
        marks: Vec<Vec<f64>>,
        mark_dim: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidStream(format!(
                "horizon = {horizon} must be positive"
            )));
        }
        if times.len() != marks.len() {
            return Err(Error::InvalidStream(format!(
                "{} times but {} marks",
                times.len(),
                marks.len()
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t > 0.0 && t <= horizon) {
                return Err(Error::InvalidStream(format!(
                    "event {} at t = {t} outside (0, {horizon}]",
                    i + 1
                )));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::InvalidStream(format!(
                    "event {} at t = {t} does not increase past {}",
                    i + 1,
                    times[i - 1]
                )));
            }
        }
        for (i, m) in marks.iter().enumerate() {
            if m.len() != mark_dim {
                return Err(Error::InvalidStream(format!(
                    "mark {} has dimension {}, expected {mark_dim}",
                    i + 1,
                    m.len()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidStream(format!(
                    "mark {} is not finite",
                    i + 1
                )));
            }
        }
        Ok(Self {
            horizon,
            times,
            marks,
            mark_dim,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn marks(&self) -> &[Vec<f64>] {
        &self.marks
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same events with every mark scaled by `c` (diagnostic helper for the
    /// scale-invariance property of the score statistic).
    pub fn with_scaled_marks(&self, c: f64) -> EventStream {
        let marks = self
            .marks
            .iter()
            .map(|m| m.iter().map(|v| c * v).collect())
            .collect();
        EventStream {
            horizon: self.horizon,
            times: self.times.clone(),
            marks,
            mark_dim: self.mark_dim,
        }
    }
}

/// Parametric family of the unnormalized boost h(x; psi).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoostFamily {
    /// h(x; psi) = 1 + psi' x. Positivity on the mark domain is the caller's
    /// responsibility; evaluation fails loudly if violated.
    Linear,
    /// h(x; psi) = 1 + sum_k psi_k x^k for scalar marks, degree p >= 1.
    Polynomial { degree: usize },
    /// h(x; psi) = exp(psi' x), positive everywhere.
    Exponential,
}

/// How the normalization constant E[h] is obtained when simulating with a
/// nonzero boost parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalizer {
    /// Closed-form E[h] under the mark model (errors when no closed form
    /// exists for the pair).
    #[default]
    Analytic,
    /// Sample-mean plug-in over fresh draws from the stationary mark law.
    Empirical,
}

/// Boost specification: family, mark dimension, and normalization rule.
///
/// The boost-parameter dimension r is the mark dimension for the linear and
/// exponential families and the degree for the (scalar-mark) polynomial
/// family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoostSpec {
    pub family: BoostFamily,
    pub mark_dim: usize,
    pub normalizer: Normalizer,
}

impl BoostSpec {
    pub fn new(family: BoostFamily, mark_dim: usize, normalizer: Normalizer) -> Result<Self> {
        if mark_dim == 0 {
            return Err(Error::Domain("boost spec: mark_dim must be >= 1".into()));
        }
        if let BoostFamily::Polynomial { degree } = family {
            if degree == 0 {
                return Err(Error::Domain(
                    "polynomial boost: degree must be >= 1".into(),
                ));
            }
            if mark_dim != 1 {
                return Err(Error::Domain(
                    "polynomial boost is defined for scalar marks only".into(),
                ));
            }
        }
        Ok(Self {
            family,
            mark_dim,
            normalizer,
        })
    }

    /// Dimension r of the boost parameter psi.
    pub fn psi_dim(&self) -> usize {
        match self.family {
            BoostFamily::Linear | BoostFamily::Exponential => self.mark_dim,
            BoostFamily::Polynomial { degree } => degree,
        }
    }

    fn check_shapes(&self, x: &[f64], psi: &[f64]) -> Result<()> {
        if x.len() != self.mark_dim {
            return Err(Error::Domain(format!(
                "mark has dimension {}, spec expects {}",
                x.len(),
                self.mark_dim
            )));
        }
        if psi.len() != self.psi_dim() {
            return Err(Error::Domain(format!(
                "psi has dimension {}, spec expects {}",
                psi.len(),
                self.psi_dim()
            )));
        }
        Ok(())
    }

    /// Unnormalized boost h(x; psi). Satisfies h(x; 0) = 1 for every family.
    pub fn h_eval(&self, x: &[f64], psi: &[f64]) -> Result<f64> {
        self.check_shapes(x, psi)?;
        let value = match self.family {
            BoostFamily::Linear => 1.0 + dot(psi, x),
            BoostFamily::Exponential => dot(psi, x).exp(),
            BoostFamily::Polynomial { degree } => {
                let mut acc = 1.0;
                let mut pow = 1.0;
                for k in 0..degree {
                    pow *= x[0];
                    acc += psi[k] * pow;
                }
                acc
            }
        };
        if value <= 0.0 {
            return Err(Error::BoostDomain(format!(
                "h(x; psi) = {value} is not positive for x = {x:?}, psi = {psi:?}"
            )));
        }
        Ok(value)
    }

    /// Normalized boost g = h / mu_h where `mu_h` is E[h] under the mark law.
    pub fn boost_eval(&self, x: &[f64], psi: &[f64], mu_h: f64) -> Result<f64> {
        if !(mu_h > 0.0 && mu_h.is_finite()) {
            return Err(Error::Normalization(mu_h));
        }
        Ok(self.h_eval(x, psi)? / mu_h)
    }

    /// Feature map H(x) = d/dpsi h(x; psi) at psi = 0: the identity for the
    /// linear and exponential families, monomials (x, x^2, ..., x^p) for the
    /// polynomial family.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mark_dim {
            return Err(Error::Domain(format!(
                "mark has dimension {}, spec expects {}",
                x.len(),
                self.mark_dim
            )));
        }
        Ok(match self.family {
            BoostFamily::Linear | BoostFamily::Exponential => x.to_vec(),
            BoostFamily::Polynomial { degree } => {
                let mut out = Vec::with_capacity(degree);
                let mut pow = 1.0;
                for _ in 0..degree {
                    pow *= x[0];
                    out.push(pow);
                }
                out
            }
        })
    }
}

/// Centered per-event features G(x_i) = H(x_i) - mu_H.
pub fn center_marks(stream: &EventStream, spec: &BoostSpec, mu_h: &[f64]) -> Result<Vec<Vec<f64>>> {
    let r = spec.psi_dim();
    if mu_h.len() != r {
        return Err(Error::Domain(format!(
            "mu_H has dimension {}, spec expects {r}",
            mu_h.len()
        )));
    }
    stream
        .marks()
        .iter()
        .map(|x| {
            let mut f = spec.features(x)?;
            for (fk, mk) in f.iter_mut().zip(mu_h) {
                *fk -= mk;
            }
            Ok(f)
        })
        .collect()
}

/// Stability gate of the stationary construction: requires
/// theta_branch * g_bound < 1, where `g_bound` is the user-certified bound on
/// the conditional expectation of the normalized boost given the past
/// (1 for i.i.d. marks; sup g for bounded predictable marks).
pub fn check_stability(params: &HawkesParams, g_bound: f64) -> Result<()> {
    if !(g_bound > 0.0 && g_bound.is_finite()) {
        return Err(Error::Domain(format!(
            "g_bound = {g_bound} must be positive"
        )));
    }
    let product = params.theta_branch * g_bound;
    if product < 1.0 {
        Ok(())
    } else {
        Err(Error::Stability { product })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
