//! Score (Lagrange multiplier) test of the null hypothesis that marks do not
//! boost the intensity.
//!
//! Under the null, the derivative of the intensity in the boost parameter is
//!
//! ```text
//! U(t) = theta * sum_{t_j < t} alpha exp(-alpha (t - t_j)) G(x_j),
//! ```
//!
//! with G the centered feature map of the boost family. The score vector is
//! `sum_i U(t_i-)/lambda(t_i-) - integral of U`, the empirical information is
//! the event average `sum_i U(t_i-) U(t_i-)^T / lambda(t_i-)^2`, and the
//! statistic `Q = score' info^{-1} score` is asymptotically chi-squared with
//! r degrees of freedom. Everything is evaluated at the null-hypothesis
//! quasi-ML fit; no marked model is ever fitted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::chi2_cdf;
use crate::error::{Error, Result};
use crate::fit::{fit_qmle, intensity_recursion, FitOptions, FitResult};
use crate::marks::estimate_mu_h;
use crate::model::{center_marks, BoostSpec, EventStream, HawkesParams};

/// Relative eigenvalue threshold below which the information matrix is
/// declared singular (degenerate marks or r too large for the data).
const SINGULARITY_TOL: f64 = 1e-10;

/// Full output of a score test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestResult {
    /// Score vector d/dpsi of the log-likelihood at the null fit.
    pub score: Vec<f64>,
    /// Empirical information matrix (r x r), symmetric PSD.
    pub info: Vec<Vec<f64>>,
    /// Score statistic Q >= 0.
    pub statistic: f64,
    /// Degrees of freedom r.
    pub df: usize,
    /// 1 - Chi2CDF(statistic, df).
    pub p_value: f64,
    /// Information per unit time, info / T: the finite-sample estimate of the
    /// asymptotic information.
    pub omega_hat: Vec<Vec<f64>>,
}

/// Per-event values U(t_i-) of the psi-derivative of the intensity at the
/// null, via the O(N r) recursion
/// `U_i = exp(-alpha dt_i) (U_{i-1} + theta alpha G(x_{i-1}))`, `U_1 = 0`.
pub fn u_process(
    stream: &EventStream,
    params: &HawkesParams,
    centered: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    let times = stream.times();
    if centered.len() != times.len() {
        return Err(Error::Domain(format!(
            "{} centered marks for {} events",
            centered.len(),
            times.len()
        )));
    }
    let r = centered.first().map_or(0, Vec::len);
    if centered.iter().any(|g| g.len() != r) {
        return Err(Error::Domain(
            "centered marks have inconsistent dimensions".into(),
        ));
    }
    let theta_alpha = params.theta_branch * params.alpha;
    let mut out = Vec::with_capacity(times.len());
    let mut u = vec![0.0; r];
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let decay = (-params.alpha * (t - times[i - 1])).exp();
            for (uk, gk) in u.iter_mut().zip(&centered[i - 1]) {
                *uk = decay * (*uk + theta_alpha * gk);
            }
        }
        out.push(u.clone());
    }
    Ok(out)
}

/// Score vector: sum_i U(t_i-)/lambda(t_i-) minus the closed-form integral
/// `theta sum_i G(x_i) (1 - exp(-alpha (T - t_i)))`.
pub fn score_vector(
    stream: &EventStream,
    params: &HawkesParams,
    centered: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if stream.is_empty() {
        return Err(Error::InsufficientData(
            "score_vector: stream has no events".into(),
        ));
    }
    let u = u_process(stream, params, centered)?;
    let iv = intensity_recursion(stream, params)?;
    let r = centered[0].len();
    let mut score = vec![0.0; r];
    for (ui, li) in u.iter().zip(&iv.lambda_pre) {
        for (sk, uk) in score.iter_mut().zip(ui) {
            *sk += uk / li;
        }
    }
    let big_t = stream.horizon();
    for (gi, &t) in centered.iter().zip(stream.times()) {
        let mass = params.theta_branch * (1.0 - (-params.alpha * (big_t - t)).exp());
        for (sk, gk) in score.iter_mut().zip(gi) {
            *sk -= mass * gk;
        }
    }
    Ok(score)
}

/// Empirical information matrix: sum_i U(t_i-) U(t_i-)^T / lambda(t_i-)^2.
/// Exactly symmetric by construction.
pub fn info_matrix(
    stream: &EventStream,
    params: &HawkesParams,
    centered: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if stream.is_empty() {
        return Err(Error::InsufficientData(
            "info_matrix: stream has no events".into(),
        ));
    }
    let u = u_process(stream, params, centered)?;
    let iv = intensity_recursion(stream, params)?;
    let r = centered[0].len();
    let mut info = vec![vec![0.0; r]; r];
    for (ui, li) in u.iter().zip(&iv.lambda_pre) {
        let w = 1.0 / (li * li);
        for k in 0..r {
            for l in k..r {
                info[k][l] += w * ui[k] * ui[l];
            }
        }
    }
    for k in 0..r {
        for l in 0..k {
            info[k][l] = info[l][k];
        }
    }
    Ok(info)
}

/// Score statistic and p-value from a score vector and information matrix.
///
/// Solved through the symmetric eigendecomposition; the matrix is declared
/// singular when its smallest eigenvalue falls below 1e-10 times the largest
/// (relative threshold, since the mark scale is arbitrary).
pub fn score_statistic(score: &[f64], info: &[Vec<f64>]) -> Result<(f64, f64)> {
    let r = score.len();
    if r == 0 || info.len() != r || info.iter().any(|row| row.len() != r) {
        return Err(Error::Domain("score_statistic: shape mismatch".into()));
    }
    let m = DMatrix::from_fn(r, r, |i, j| info[i][j]);
    let s = DVector::from_column_slice(score);
    let eig = m.symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_eig > 0.0) {
        return Err(Error::SingularInformation(
            "information matrix is zero (degenerate marks?)".into(),
        ));
    }
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < SINGULARITY_TOL * max_eig {
        return Err(Error::SingularInformation(format!(
            "eigenvalue ratio {:.3e} below threshold {SINGULARITY_TOL:.0e}",
            min_eig / max_eig
        )));
    }
    let mut q = 0.0;
    for k in 0..r {
        let proj = eig.eigenvectors.column(k).dot(&s);
        q += proj * proj / eig.eigenvalues[k];
    }
    let p = 1.0 - chi2_cdf(q, r)?;
    Ok((q, p))
}

/// Score and information at given parameters and centered marks; shared by
/// the end-to-end test and the harness's information estimator.
pub fn score_components(
    stream: &EventStream,
    params: &HawkesParams,
    centered: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    Ok((
        score_vector(stream, params, centered)?,
        info_matrix(stream, params, centered)?,
    ))
}

/// Score test against an existing null fit (the screening path: one fit,
/// many candidate boosts). The fit must have converged.
pub fn score_test_with_fit(
    stream: &EventStream,
    spec: &BoostSpec,
    fit: &FitResult,
) -> Result<ScoreTestResult> {
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "score test requires a converged null fit (termination {:?})",
            fit.termination
        )));
    }
    if stream.is_empty() {
        return Err(Error::InsufficientData(
            "score test: stream has no events".into(),
        ));
    }
    let mu_h = estimate_mu_h(stream, spec)?;
    let centered = center_marks(stream, spec, &mu_h)?;
    let (score, info) = score_components(stream, &fit.params, &centered)?;
    // degenerate-marks guard: centered information that is pure rounding
    // noise relative to the uncentered feature scale means the marks carry
    // no variation (sample-mean centering of constant marks leaves ulp-size
    // residue, never an exact zero)
    let raw: Vec<Vec<f64>> = stream
        .marks()
        .iter()
        .map(|x| spec.features(x))
        .collect::<Result<_>>()?;
    let info_raw = info_matrix(stream, &fit.params, &raw)?;
    let trace = |m: &[Vec<f64>]| (0..m.len()).map(|k| m[k][k]).sum::<f64>();
    if trace(&info) < SINGULARITY_TOL * trace(&info_raw) {
        return Err(Error::SingularInformation(
            "marks are constant (centered features are numerically zero)".into(),
        ));
    }
    let (statistic, p_value) = score_statistic(&score, &info)?;
    let r = score.len();
    let big_t = stream.horizon();
    let omega_hat = info
        .iter()
        .map(|row| row.iter().map(|v| v / big_t).collect())
        .collect();
    Ok(ScoreTestResult {
        score,
        info,
        statistic,
        df: r,
        p_value,
        omega_hat,
    })
}

/// End-to-end pipeline: quasi-ML fit, sample-mean centering, score vector and
/// empirical information, statistic and p-value.
pub fn run_score_test(
    stream: &EventStream,
    spec: &BoostSpec,
) -> Result<(ScoreTestResult, FitResult)> {
    let fit = fit_qmle(stream, &FitOptions::default())?;
    let test = score_test_with_fit(stream, spec, &fit)?;
    Ok((test, fit))
}
