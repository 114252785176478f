//! Mark-sequence generators and the moment quantities the score test needs.
//!
//! Four stationary ergodic mark models are shipped, all with finite fourth
//! moments:
//!
//! - `IidGaussian` / `IidExponential`: fresh draws per event.
//! - `Ar1Gaussian`: discrete-time AR(1) chain indexed by the event counter;
//!   the inter-event gap is ignored. Its theoretical status under the
//!   stationary thinning construction is open (the paper treats it as an
//!   objective-function device), but it is useful for serial-dependence
//!   experiments.
//! - `OuSampled`: a continuous-time Ornstein-Uhlenbeck path sampled at the
//!   event times, with the exact transition conditional on the gap.
//!
//! Dependent chains are initialized by an exact stationary draw rather than
//! burn-in, so the sequence is stationary from the first mark. For
//! vector-valued marks the components are independent copies.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoostFamily, BoostSpec, EventStream};

/// Distributional kind of the mark sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MarkKind {
    IidGaussian {
        mean: f64,
        sd: f64,
    },
    IidExponential {
        rate: f64,
    },
    /// x_i = rho * x_{i-1} + innovation_sd * eps_i, stationary start.
    Ar1Gaussian {
        rho: f64,
        innovation_sd: f64,
    },
    /// OU with mean reversion kappa, sampled at event times: correlation
    /// exp(-kappa * dt) across a gap of length dt.
    OuSampled {
        kappa: f64,
        stationary_sd: f64,
    },
}

/// A mark model: kind plus the mark dimension d (independent components).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkModel {
    pub kind: MarkKind,
    pub dim: usize,
}

impl MarkModel {
    pub fn new(kind: MarkKind, dim: usize) -> Result<Self> {
        let m = Self { kind, dim };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Domain("mark model: dim must be >= 1".into()));
        }
        match self.kind {
            MarkKind::IidGaussian { sd, .. } => {
                if !(sd > 0.0) {
                    return Err(Error::Domain(format!(
                        "iid gaussian: sd = {sd} must be positive"
                    )));
                }
            }
            MarkKind::IidExponential { rate } => {
                if !(rate > 0.0) {
                    return Err(Error::Domain(format!(
                        "iid exponential: rate = {rate} must be positive"
                    )));
                }
            }
            MarkKind::Ar1Gaussian { rho, innovation_sd } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::Domain(format!(
                        "ar1: |rho| = {} must be < 1",
                        rho.abs()
                    )));
                }
                if !(innovation_sd > 0.0) {
                    return Err(Error::Domain(format!(
                        "ar1: innovation sd = {innovation_sd} must be positive"
                    )));
                }
            }
            MarkKind::OuSampled {
                kappa,
                stationary_sd,
            } => {
                if !(kappa > 0.0) {
                    return Err(Error::Domain(format!(
                        "ou: kappa = {kappa} must be positive"
                    )));
                }
                if !(stationary_sd > 0.0) {
                    return Err(Error::Domain(format!(
                        "ou: stationary sd = {stationary_sd} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Marginal (stationary) mean of one component.
    pub fn marginal_mean(&self) -> f64 {
        match self.kind {
            MarkKind::IidGaussian { mean, .. } => mean,
            MarkKind::IidExponential { rate } => 1.0 / rate,
            MarkKind::Ar1Gaussian { .. } | MarkKind::OuSampled { .. } => 0.0,
        }
    }

    /// Marginal (stationary) standard deviation of one component, when the
    /// marginal is Gaussian; `None` for the exponential kind.
    pub fn marginal_gaussian_sd(&self) -> Option<f64> {
        match self.kind {
            MarkKind::IidGaussian { sd, .. } => Some(sd),
            MarkKind::IidExponential { .. } => None,
            MarkKind::Ar1Gaussian { rho, innovation_sd } => {
                Some(innovation_sd / (1.0 - rho * rho).sqrt())
            }
            MarkKind::OuSampled { stationary_sd, .. } => Some(stationary_sd),
        }
    }

    fn stationary_component<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            MarkKind::IidGaussian { mean, sd } => {
                mean + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            }
            MarkKind::IidExponential { rate } => Exp::new(rate).unwrap().sample(rng),
            MarkKind::Ar1Gaussian { .. } | MarkKind::OuSampled { .. } => {
                self.marginal_gaussian_sd().unwrap()
                    * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            }
        }
    }
}

/// Stateful mark generator. Construction performs the exact stationary draw,
/// so the chain is never in an uninitialized state.
#[derive(Debug, Clone)]
pub struct MarkChain {
    model: MarkModel,
    state: Vec<f64>,
}

impl MarkChain {
    /// Initialize from the stationary law of the model.
    pub fn init<R: Rng + ?Sized>(model: MarkModel, rng: &mut R) -> Result<Self> {
        model.validate()?;
        let state = (0..model.dim)
            .map(|_| model.stationary_component(rng))
            .collect();
        Ok(Self { model, state })
    }

    pub fn model(&self) -> &MarkModel {
        &self.model
    }

    /// Draw the next mark. `dt` is the time elapsed since the previous event;
    /// only the OU-sampled kind conditions on it.
    pub fn sample<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(dt >= 0.0) {
            return Err(Error::Domain(format!(
                "sample_mark: dt = {dt} must be nonnegative"
            )));
        }
        let next: Vec<f64> = match self.model.kind {
            MarkKind::IidGaussian { .. } | MarkKind::IidExponential { .. } => (0..self.model.dim)
                .map(|_| self.model.stationary_component(rng))
                .collect(),
            MarkKind::Ar1Gaussian { rho, innovation_sd } => self
                .state
                .iter()
                .map(|&prev| {
                    rho * prev
                        + innovation_sd
                            * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                })
                .collect(),
            MarkKind::OuSampled {
                kappa,
                stationary_sd,
            } => {
                let corr = (-kappa * dt).exp();
                let cond_sd = stationary_sd * (1.0 - corr * corr).sqrt();
                self.state
                    .iter()
                    .map(|&prev| {
                        corr * prev
                            + cond_sd
                                * <StandardNormal as Distribution<f64>>::sample(
                                    &StandardNormal,
                                    rng,
                                )
                    })
                    .collect()
            }
        };
        self.state.clone_from(&next);
        Ok(next)
    }
}

/// Sample mean of the feature map H(x_i) over the observed events: the
/// Condition-4 sample-mean estimate of mu_H.
pub fn estimate_mu_h(stream: &EventStream, spec: &BoostSpec) -> Result<Vec<f64>> {
    if stream.is_empty() {
        return Err(Error::InsufficientData(
            "estimate_mu_h: stream has no events".into(),
        ));
    }
    let r = spec.psi_dim();
    let mut acc = vec![0.0; r];
    for x in stream.marks() {
        let f = spec.features(x)?;
        for (a, v) in acc.iter_mut().zip(&f) {
            *a += v;
        }
    }
    let n = stream.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(acc)
}

/// Closed-form E[h(X; psi)] for the supported (model, family) pairs:
/// linear boost with any mean-known model, exponential boost with Gaussian
/// marginals. Everything else returns a no-closed-form error and the caller
/// falls back to Monte Carlo normalization.
pub fn analytic_eh(model: &MarkModel, spec: &BoostSpec, psi: &[f64]) -> Result<f64> {
    model.validate()?;
    if psi.len() != spec.psi_dim() {
        return Err(Error::Domain(format!(
            "psi has dimension {}, spec expects {}",
            psi.len(),
            spec.psi_dim()
        )));
    }
    if spec.mark_dim != model.dim {
        return Err(Error::Domain(format!(
            "boost spec mark_dim {} does not match model dim {}",
            spec.mark_dim, model.dim
        )));
    }
    match spec.family {
        BoostFamily::Linear => {
            let mean = model.marginal_mean();
            Ok(1.0 + psi.iter().map(|p| p * mean).sum::<f64>())
        }
        BoostFamily::Exponential => {
            let sd = model.marginal_gaussian_sd().ok_or_else(|| {
                Error::NoClosedForm(
                    "exponential boost requires Gaussian marginals for a closed form".into(),
                )
            })?;
            let mean = model.marginal_mean();
            // product over components of exp(psi mu + psi^2 sigma^2 / 2)
            Ok(psi
                .iter()
                .map(|p| (p * mean + p * p * sd * sd / 2.0).exp())
                .product())
        }
        BoostFamily::Polynomial { .. } => Err(Error::NoClosedForm(
            "polynomial boost has no closed-form E[h] in this library".into(),
        )),
    }
}

/// Monte Carlo estimate of E[h(X; psi)] from fresh stationary-marginal draws.
pub fn monte_carlo_eh<R: Rng + ?Sized>(
    model: &MarkModel,
    spec: &BoostSpec,
    psi: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<f64> {
    model.validate()?;
    if n_draws == 0 {
        return Err(Error::Domain("monte_carlo_eh: n_draws must be >= 1".into()));
    }
    let mut acc = 0.0;
    let mut x = vec![0.0; model.dim];
    for _ in 0..n_draws {
        for xi in x.iter_mut() {
            *xi = model.stationary_component(rng);
        }
        acc += spec.h_eval(&x, psi)?;
    }
    Ok(acc / n_draws as f64)
}
