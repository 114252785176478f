//! Unmarked Hawkes log-likelihood with exact analytic derivatives for the
//! exponential kernel, and the quasi-maximum-likelihood fitter.
//!
//! The log-likelihood over the observation window [0, T] is
//!
//! ```text
//! l(theta) = sum_i ln lambda(t_i-) - [eta T + theta sum_i (1 - exp(-alpha (T - t_i)))]
//! ```
//!
//! with `lambda(t_i-) = eta + theta alpha A_i` and the O(N) kernel-sum
//! recursion `A_i = exp(-alpha dt_i) (A_{i-1} + 1)`, `A_1 = 0`. Companion
//! recursions give the exact first and second derivatives in
//! (eta, theta, alpha). An optional stationary-mean initial condition adds a
//! deterministic excess `eta theta/(1-theta) exp(-alpha t)` to the intensity.
//!
//! Fitting maximizes the likelihood over the open box eta > 0, theta in
//! (0, 1), alpha > 0 through the smooth bijection
//! u = (ln eta, logit theta, ln alpha): BFGS with backtracking line search,
//! a damped-Newton polish near the optimum, and a Nelder-Mead fallback when
//! the line search stalls.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventStream, HawkesParams, InitialCondition};

/// Per-event intensity values and kernel sums for the baseline-start model.
#[derive(Debug, Clone)]
pub struct IntensityValues {
    /// lambda(t_i-) = eta + theta alpha A_i.
    pub lambda_pre: Vec<f64>,
    /// A_i = sum_{j<i} exp(-alpha (t_i - t_j)).
    pub kernel_sum: Vec<f64>,
}

/// O(N) recursion for the per-event pre-jump intensity and kernel sums.
pub fn intensity_recursion(stream: &EventStream, params: &HawkesParams) -> Result<IntensityValues> {
    params.validate()?;
    let times = stream.times();
    let mut lambda_pre = Vec::with_capacity(times.len());
    let mut kernel_sum = Vec::with_capacity(times.len());
    let mut a = 0.0;
    let mut prev_t = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            a = (-params.alpha * (t - prev_t)).exp() * (a + 1.0);
        }
        kernel_sum.push(a);
        lambda_pre.push(params.eta + params.theta_branch * params.alpha * a);
        prev_t = t;
    }
    Ok(IntensityValues {
        lambda_pre,
        kernel_sum,
    })
}

/// Value, gradient, and Hessian of the log-likelihood in natural
/// (eta, theta, alpha) coordinates.
#[derive(Debug, Clone, Copy)]
struct LoglikDerivs {
    value: f64,
    grad: Vector3<f64>,
    hess: Matrix3<f64>,
}

/// One-pass evaluation of the log-likelihood and (optionally) its exact
/// derivatives. `order` is 0 (value only), 1 (plus gradient), or 2.
fn eval_loglik(
    stream: &EventStream,
    params: &HawkesParams,
    init: InitialCondition,
    order: usize,
) -> Result<LoglikDerivs> {
    params.validate()?;
    let eta = params.eta;
    let theta = params.theta_branch;
    let alpha = params.alpha;
    let big_t = stream.horizon();
    let times = stream.times();

    let stationary = matches!(init, InitialCondition::StationaryMean);
    // initial excess above baseline and its parameter derivatives
    let one_m = 1.0 - theta;
    let eps0 = if stationary { eta * theta / one_m } else { 0.0 };
    let d_eps0_eta = theta / one_m;
    let d_eps0_theta = eta / (one_m * one_m);
    let d2_eps0_eta_theta = 1.0 / (one_m * one_m);
    let d2_eps0_theta2 = 2.0 * eta / (one_m * one_m * one_m);

    let mut value = 0.0;
    let mut grad = Vector3::zeros();
    let mut hess = Matrix3::zeros();

    // kernel sums A, A' = sum d e^{-a d}, A'' = sum d^2 e^{-a d}
    let mut a0 = 0.0;
    let mut a1 = 0.0;
    let mut a2 = 0.0;
    let mut prev_t = 0.0;

    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let dt = t - prev_t;
            let decay = (-alpha * dt).exp();
            let carry = a0 + 1.0;
            a2 = decay * (a2 + 2.0 * dt * a1 + dt * dt * carry);
            a1 = decay * (a1 + dt * carry);
            a0 = decay * carry;
        }
        prev_t = t;

        let mut lambda = eta + theta * alpha * a0;
        // gradient of lambda in (eta, theta, alpha)
        let mut dl = Vector3::new(1.0, alpha * a0, theta * (a0 - alpha * a1));
        // nonzero second derivatives of lambda
        let mut h_ta = a0 - alpha * a1; // d^2 lambda / d theta d alpha
        let mut h_aa = theta * (alpha * a2 - 2.0 * a1);
        let mut h_et = 0.0;
        let mut h_ea = 0.0;
        let mut h_tt = 0.0;

        if stationary {
            let e_t = (-alpha * t).exp();
            lambda += eps0 * e_t;
            dl.x += d_eps0_eta * e_t;
            dl.y += d_eps0_theta * e_t;
            dl.z += -eps0 * t * e_t;
            h_et += d2_eps0_eta_theta * e_t;
            h_ea += -d_eps0_eta * t * e_t;
            h_tt += d2_eps0_theta2 * e_t;
            h_ta += -d_eps0_theta * t * e_t;
            h_aa += eps0 * t * t * e_t;
        }

        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Numeric(format!(
                "intensity {lambda} at event {} is not positive and finite",
                i + 1
            )));
        }
        value += lambda.ln();
        if order >= 1 {
            let inv = 1.0 / lambda;
            grad += dl * inv;
            if order >= 2 {
                let inv2 = inv * inv;
                // d^2 ln lambda = hess(lambda)/lambda - grad(lambda) grad(lambda)^T / lambda^2
                let mut hm = Matrix3::zeros();
                hm[(0, 1)] = h_et;
                hm[(1, 0)] = h_et;
                hm[(0, 2)] = h_ea;
                hm[(2, 0)] = h_ea;
                hm[(1, 1)] = h_tt;
                hm[(1, 2)] = h_ta;
                hm[(2, 1)] = h_ta;
                hm[(2, 2)] = h_aa;
                hess += hm * inv - (dl * dl.transpose()) * inv2;
            }
        }
    }

    // compensator: eta T + theta S0 (+ eps0 q for the stationary start)
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &t in times {
        let tau = big_t - t;
        let e = (-alpha * tau).exp();
        s0 += 1.0 - e;
        s1 += tau * e;
        s2 += tau * tau * e;
    }
    value -= eta * big_t + theta * s0;
    if order >= 1 {
        grad.x -= big_t;
        grad.y -= s0;
        grad.z -= theta * s1;
        if order >= 2 {
            hess[(1, 2)] -= s1;
            hess[(2, 1)] -= s1;
            hess[(2, 2)] -= -theta * s2;
        }
    }

    if stationary {
        let e_big = (-alpha * big_t).exp();
        let q = (1.0 - e_big) / alpha;
        let q1 = (big_t * e_big * alpha - 1.0 + e_big) / (alpha * alpha);
        let q2 = -big_t * big_t * e_big / alpha - 2.0 * q1 / alpha;
        value -= eps0 * q;
        if order >= 1 {
            grad.x -= d_eps0_eta * q;
            grad.y -= d_eps0_theta * q;
            grad.z -= eps0 * q1;
            if order >= 2 {
                hess[(0, 1)] -= d2_eps0_eta_theta * q;
                hess[(1, 0)] -= d2_eps0_eta_theta * q;
                hess[(0, 2)] -= d_eps0_eta * q1;
                hess[(2, 0)] -= d_eps0_eta * q1;
                hess[(1, 1)] -= d2_eps0_theta2 * q;
                hess[(1, 2)] -= d_eps0_theta * q1;
                hess[(2, 1)] -= d_eps0_theta * q1;
                hess[(2, 2)] -= eps0 * q2;
            }
        }
    }

    if !value.is_finite() {
        return Err(Error::Numeric("log-likelihood is not finite".into()));
    }
    Ok(LoglikDerivs { value, grad, hess })
}

/// Log-likelihood of the baseline-start unmarked model.
pub fn loglik(stream: &EventStream, params: &HawkesParams) -> Result<f64> {
    loglik_with(stream, params, InitialCondition::Baseline)
}

/// Log-likelihood with an explicit initial-intensity rule.
pub fn loglik_with(
    stream: &EventStream,
    params: &HawkesParams,
    init: InitialCondition,
) -> Result<f64> {
    Ok(eval_loglik(stream, params, init, 0)?.value)
}

/// Analytic gradient in natural (eta, theta, alpha) coordinates.
pub fn loglik_grad(stream: &EventStream, params: &HawkesParams) -> Result<[f64; 3]> {
    loglik_grad_with(stream, params, InitialCondition::Baseline)
}

pub fn loglik_grad_with(
    stream: &EventStream,
    params: &HawkesParams,
    init: InitialCondition,
) -> Result<[f64; 3]> {
    let e = eval_loglik(stream, params, init, 1)?;
    Ok([e.grad.x, e.grad.y, e.grad.z])
}

/// Analytic negative Hessian in natural coordinates.
pub fn loglik_neg_hessian(stream: &EventStream, params: &HawkesParams) -> Result<[[f64; 3]; 3]> {
    loglik_neg_hessian_with(stream, params, InitialCondition::Baseline)
}

pub fn loglik_neg_hessian_with(
    stream: &EventStream,
    params: &HawkesParams,
    init: InitialCondition,
) -> Result<[[f64; 3]; 3]> {
    let e = eval_loglik(stream, params, init, 2)?;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = -e.hess[(i, j)];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parameter transform: u = (ln eta, logit theta, ln alpha)
// ---------------------------------------------------------------------------

/// Safe range for the unconstrained coordinates; keeps exp/sigmoid strictly
/// inside the open box in double precision.
const U_LIMIT: f64 = 34.0;

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Search box on the transformed scale. Following the compactness of the
/// parameter space assumed by the asymptotic theory, alpha is bounded below
/// (a kernel that cannot decay within the observation window is not
/// identifiable and opens an unidentified theta ridge on null-like data).
#[derive(Debug, Clone, Copy)]
struct SearchBox {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl SearchBox {
    fn new(min_alpha: f64) -> Self {
        let alpha_floor = min_alpha.ln().clamp(-U_LIMIT, U_LIMIT - 1.0);
        Self {
            lo: Vector3::new(-U_LIMIT, -U_LIMIT, alpha_floor),
            hi: Vector3::new(U_LIMIT, U_LIMIT, U_LIMIT),
        }
    }

    fn clamp(&self, u: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            u.x.clamp(self.lo.x, self.hi.x),
            u.y.clamp(self.lo.y, self.hi.y),
            u.z.clamp(self.lo.z, self.hi.z),
        )
    }
}

pub(crate) fn to_unconstrained(p: &HawkesParams) -> [f64; 3] {
    [
        p.eta.ln(),
        (p.theta_branch / (1.0 - p.theta_branch)).ln(),
        p.alpha.ln(),
    ]
}

pub(crate) fn from_unconstrained(u: &[f64; 3]) -> HawkesParams {
    HawkesParams {
        eta: u[0].exp(),
        theta_branch: sigmoid(u[1]),
        alpha: u[2].exp(),
    }
}

/// Gradient (and optionally Hessian) of the log-likelihood on the
/// transformed scale, by the exact chain rule.
fn eval_transformed(
    stream: &EventStream,
    u: Vector3<f64>,
    init: InitialCondition,
    order: usize,
) -> Result<LoglikDerivs> {
    let params = from_unconstrained(&[u.x, u.y, u.z]);
    let nat = eval_loglik(stream, &params, init, order)?;
    let theta = params.theta_branch;
    // d theta_k / d u_k and second derivatives of the bijections
    let j = Vector3::new(params.eta, theta * (1.0 - theta), params.alpha);
    let j2 = Vector3::new(
        params.eta,
        theta * (1.0 - theta) * (1.0 - 2.0 * theta),
        params.alpha,
    );
    let mut out = LoglikDerivs {
        value: nat.value,
        grad: Vector3::zeros(),
        hess: Matrix3::zeros(),
    };
    if order >= 1 {
        for k in 0..3 {
            out.grad[k] = nat.grad[k] * j[k];
        }
        if order >= 2 {
            for k in 0..3 {
                for l in 0..3 {
                    out.hess[(k, l)] = nat.hess[(k, l)] * j[k] * j[l];
                }
                out.hess[(k, k)] += nat.grad[k] * j2[k];
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Quasi-MLE
// ---------------------------------------------------------------------------

/// Optimizer settings for [`fit_qmle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Starting point; `None` uses the deterministic auto-start
    /// (eta = 0.5 N/T, theta = 0.5, alpha = 1/mean inter-arrival).
    pub init: Option<HawkesParams>,
    pub max_iter: usize,
    /// Convergence tolerance on the sup-norm of the transformed-scale gradient.
    pub grad_tol: f64,
    pub initial_condition: InitialCondition,
    /// Lower search bound on the decay rate; `None` uses 4/horizon (the
    /// kernel must decay within the observation window to be identifiable).
    pub min_alpha: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            init: None,
            max_iter: 500,
            grad_tol: 1e-8,
            initial_condition: InitialCondition::Baseline,
            min_alpha: None,
        }
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitTermination {
    /// Transformed-scale gradient reached tolerance.
    GradientTolerance,
    /// Tolerance reached only after the simplex fallback.
    SimplexGradientTolerance,
    MaxIterations,
    /// Line search could make no further progress above the tolerance.
    Stalled,
    /// Gradient tolerance reached but the negative Hessian is not positive
    /// definite; standard errors are withheld.
    DegenerateHessian,
}

/// Result of a quasi-ML fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: HawkesParams,
    pub loglik: f64,
    /// Gradient at the optimum on the transformed scale.
    pub gradient: [f64; 3],
    /// Negative Hessian at the optimum in natural (eta, theta, alpha)
    /// coordinates; the admissible information substitute for standard errors.
    pub neg_hessian: [[f64; 3]; 3],
    /// sqrt of the diagonal of the inverse negative Hessian, when positive
    /// definite.
    pub std_errors: Option<[f64; 3]>,
    pub converged: bool,
    pub iterations: usize,
    pub termination: FitTermination,
}

struct Objective<'a> {
    stream: &'a EventStream,
    init: InitialCondition,
    bounds: SearchBox,
}

impl Objective<'_> {
    /// Negated log-likelihood and gradient on the transformed scale;
    /// non-finite values signal an inadmissible point to the line search.
    fn value_grad(&self, u: Vector3<f64>) -> (f64, Vector3<f64>) {
        match eval_transformed(self.stream, u, self.init, 1) {
            Ok(e) => (-e.value, -e.grad),
            Err(_) => (f64::INFINITY, Vector3::zeros()),
        }
    }

    fn value(&self, u: Vector3<f64>) -> f64 {
        match eval_transformed(self.stream, u, self.init, 0) {
            Ok(e) => -e.value,
            Err(_) => f64::INFINITY,
        }
    }

    fn with_hessian(&self, u: Vector3<f64>) -> Result<LoglikDerivs> {
        eval_transformed(self.stream, u, self.init, 2)
    }
}

/// Largest step length in the transformed coordinates; keeps single
/// iterations from jumping across the box.
const MAX_STEP_NORM: f64 = 2.0;

/// Backtracking Armijo line search; returns the accepted point or `None`.
fn line_search(
    obj: &Objective,
    u: Vector3<f64>,
    f: f64,
    g: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<(Vector3<f64>, f64, Vector3<f64>, f64)> {
    let slope = g.dot(dir);
    let mut step = 1.0;
    for _ in 0..60 {
        let cand = obj.bounds.clamp(u + dir * step);
        let (f_new, g_new) = obj.value_grad(cand);
        if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
            return Some((cand, f_new, g_new, step));
        }
        step *= 0.5;
    }
    None
}

/// Nelder-Mead simplex refinement on the transformed scale.
fn nelder_mead(obj: &Objective, start: Vector3<f64>, max_iter: usize) -> (Vector3<f64>, f64) {
    let mut simplex: Vec<(Vector3<f64>, f64)> = Vec::with_capacity(4);
    simplex.push((start, obj.value(start)));
    for k in 0..3 {
        let mut v = start;
        v[k] += 0.25;
        let v = obj.bounds.clamp(v);
        simplex.push((v, obj.value(v)));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        if spread.abs() < 1e-12 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let centroid = (simplex[0].0 + simplex[1].0 + simplex[2].0) / 3.0;
        let worst = simplex[3];
        let reflect = obj.bounds.clamp(centroid + (centroid - worst.0));
        let f_r = obj.value(reflect);
        if f_r < simplex[0].1 {
            let expand = obj.bounds.clamp(centroid + (centroid - worst.0) * 2.0);
            let f_e = obj.value(expand);
            simplex[3] = if f_e < f_r {
                (expand, f_e)
            } else {
                (reflect, f_r)
            };
        } else if f_r < simplex[2].1 {
            simplex[3] = (reflect, f_r);
        } else {
            let contract = obj.bounds.clamp(centroid + (worst.0 - centroid) * 0.5);
            let f_c = obj.value(contract);
            if f_c < worst.1 {
                simplex[3] = (contract, f_c);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let shrunk = obj.bounds.clamp(best + (v.0 - best) * 0.5);
                    *v = (shrunk, obj.value(shrunk));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Damped Newton polish on the stationarity system grad = 0, using the
/// analytic transformed-scale Hessian. Steps are accepted on gradient-norm
/// decrease rather than function decrease: near the optimum the likelihood
/// differences sink below the floating-point noise floor while the gradient
/// remains perfectly measurable, and with a positive definite negative
/// Hessian the iteration converges quadratically to the interior maximum.
fn newton_polish(
    obj: &Objective,
    mut u: Vector3<f64>,
    mut f: f64,
    mut g: Vector3<f64>,
    tol: f64,
    iterations: &mut usize,
) -> (Vector3<f64>, f64, Vector3<f64>) {
    for _ in 0..30 {
        if g.amax() < tol {
            break;
        }
        let Ok(e) = obj.with_hessian(u) else { break };
        // maximize l: Newton direction solves (-hess) d = g (g = -grad l here)
        let neg_h = -e.hess;
        let Some(chol) = neg_h.cholesky() else { break };
        let dir = -chol.solve(&g);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let cand = obj.bounds.clamp(u + dir * step);
            let (f_new, g_new) = obj.value_grad(cand);
            if f_new.is_finite() && g_new.amax() < g.amax() {
                u = cand;
                f = f_new;
                g = g_new;
                *iterations += 1;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (u, f, g)
}

/// Deterministic auto-start: eta = 0.5 N/T, theta = 0.5, alpha = 1/mean gap.
fn auto_start(stream: &EventStream) -> HawkesParams {
    let n = stream.len();
    let times = stream.times();
    let mean_gap = if n >= 2 {
        (times[n - 1] - times[0]) / (n as f64 - 1.0)
    } else {
        stream.horizon() / (n as f64).max(1.0)
    };
    HawkesParams {
        eta: 0.5 * n as f64 / stream.horizon(),
        theta_branch: 0.5,
        alpha: 1.0 / mean_gap,
    }
}

/// Quasi-maximum-likelihood fit of the unmarked Hawkes model.
///
/// Streams with fewer than 10 events are refused. Non-convergence within
/// `max_iter` iterations is reported through the `converged` flag and
/// termination reason, not as an error.
pub fn fit_qmle(stream: &EventStream, opts: &FitOptions) -> Result<FitResult> {
    if stream.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "fit requires at least 10 events, stream has {}",
            stream.len()
        )));
    }
    let start = match opts.init {
        Some(p) => {
            p.validate()?;
            if p.theta_branch == 0.0 {
                return Err(Error::Domain(
                    "fit initialization requires theta strictly inside (0, 1)".into(),
                ));
            }
            p
        }
        None => auto_start(stream),
    };
    let min_alpha = opts.min_alpha.unwrap_or(4.0 / stream.horizon());
    if !(min_alpha > 0.0) {
        return Err(Error::Domain(format!(
            "min_alpha = {min_alpha} must be positive"
        )));
    }
    let bounds = SearchBox::new(min_alpha);
    let obj = Objective {
        stream,
        init: opts.initial_condition,
        bounds,
    };
    let tol = opts.grad_tol;

    let u0 = to_unconstrained(&start);
    let mut u = bounds.clamp(Vector3::new(u0[0], u0[1], u0[2]));
    let (mut f, mut g) = obj.value_grad(u);
    if !f.is_finite() {
        return Err(Error::Numeric(
            "log-likelihood not finite at the starting point".into(),
        ));
    }

    let mut h_inv = Matrix3::identity();
    let mut first_update = true;
    let mut iterations = 0usize;
    let mut simplex_used = false;
    let mut termination = FitTermination::MaxIterations;

    // once BFGS gets this close, the exact-Hessian polish finishes the job
    const NEWTON_SWITCH: f64 = 1e-3;
    let mut newton_tried_at = f64::INFINITY;

    while iterations < opts.max_iter {
        if g.amax() < tol {
            termination = if simplex_used {
                FitTermination::SimplexGradientTolerance
            } else {
                FitTermination::GradientTolerance
            };
            break;
        }
        if g.amax() < NEWTON_SWITCH && g.amax() < 0.5 * newton_tried_at {
            newton_tried_at = g.amax();
            let (u2, f2, g2) = newton_polish(&obj, u, f, g, tol, &mut iterations);
            u = u2;
            f = f2;
            g = g2;
            h_inv = Matrix3::identity();
            first_update = true;
            continue;
        }
        let mut dir = -(h_inv * g);
        if g.dot(&dir) >= 0.0 {
            h_inv = Matrix3::identity();
            first_update = true;
            dir = -g;
        }
        let dir_norm = dir.norm();
        if dir_norm > MAX_STEP_NORM {
            dir *= MAX_STEP_NORM / dir_norm;
        }
        let attempt = line_search(&obj, u, f, &g, &dir);
        // micro-steps against a clamped boundary make no real progress
        let progressing = matches!(&attempt, Some((u_new, ..)) if (u_new - u).norm() > 1e-9);
        match attempt {
            Some((u_new, f_new, g_new, _)) if progressing => {
                let s = u_new - u;
                let y = g_new - g;
                let sy = s.dot(&y);
                if sy > 1e-12 * s.norm() * y.norm() {
                    if first_update {
                        // Nocedal-Wright initial scaling before the first update
                        h_inv = Matrix3::identity() * (sy / y.dot(&y));
                        first_update = false;
                    }
                    // BFGS inverse update
                    let rho = 1.0 / sy;
                    let hy = h_inv * y;
                    let yhy = y.dot(&hy);
                    h_inv += (s * s.transpose()) * (rho * rho * yhy + rho)
                        - (hy * s.transpose() + s * hy.transpose()) * rho;
                }
                u = u_new;
                f = f_new;
                g = g_new;
                iterations += 1;
            }
            _ => {
                // stall: Newton polish near the optimum, then simplex fallback
                let (u2, f2, g2) = newton_polish(&obj, u, f, g, tol, &mut iterations);
                u = u2;
                f = f2;
                g = g2;
                if g.amax() < tol {
                    continue;
                }
                if simplex_used {
                    termination = FitTermination::Stalled;
                    break;
                }
                simplex_used = true;
                let (u_nm, f_nm) = nelder_mead(&obj, u, 300);
                iterations += 1;
                if f_nm < f - 1e-12 * (1.0 + f.abs()) {
                    u = u_nm;
                    let (f2, g2) = obj.value_grad(u);
                    f = f2;
                    g = g2;
                    h_inv = Matrix3::identity();
                    first_update = true;
                } else {
                    termination = FitTermination::Stalled;
                    break;
                }
            }
        }
    }
    if iterations >= opts.max_iter && g.amax() < tol {
        termination = if simplex_used {
            FitTermination::SimplexGradientTolerance
        } else {
            FitTermination::GradientTolerance
        };
    }

    let params = from_unconstrained(&[u.x, u.y, u.z]);
    let grad_ok = g.amax() < tol;
    let neg_hess_nat = loglik_neg_hessian_with(stream, &params, opts.initial_condition)?;
    let neg_h = Matrix3::from_fn(|i, j| neg_hess_nat[i][j]);
    let chol = neg_h.cholesky();
    let std_errors = chol.as_ref().map(|c| {
        let inv = c.inverse();
        [inv[(0, 0)].sqrt(), inv[(1, 1)].sqrt(), inv[(2, 2)].sqrt()]
    });
    let converged = grad_ok && chol.is_some();
    if grad_ok && chol.is_none() {
        termination = FitTermination::DegenerateHessian;
    }

    Ok(FitResult {
        params,
        loglik: -f,
        gradient: [g.x, g.y, g.z],
        neg_hessian: neg_hess_nat,
        std_errors,
        converged,
        iterations,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::{MarkKind, MarkModel};
    use crate::model::{BoostFamily, BoostSpec, Normalizer};
    use crate::sim::{simulate, SimConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_stream(seed: u64, n: usize, horizon: f64) -> EventStream {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut times: Vec<f64> = (0..n)
            .map(|_| rng.random::<f64>() * horizon * 0.999 + 1e-6)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let marks = times.iter().map(|_| vec![0.0]).collect();
        let n = times.len();
        EventStream::new(horizon, times, marks, 1).unwrap_or_else(|_| panic!("bad stream n={n}"))
    }

    fn brute_force_lambda(stream: &EventStream, p: &HawkesParams) -> Vec<f64> {
        let times = stream.times();
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let a: f64 = times[..i]
                    .iter()
                    .map(|&tj| (-p.alpha * (t - tj)).exp())
                    .sum();
                p.eta + p.theta_branch * p.alpha * a
            })
            .collect()
    }

    #[test]
    fn recursion_trivial_cases() {
        let stream = EventStream::new(10.0, vec![0.5, 1.5], vec![vec![0.0], vec![0.0]], 1).unwrap();
        // theta = 0: lambda = eta everywhere
        let p0 = HawkesParams::new(2.0, 0.0, 1.0).unwrap();
        let iv = intensity_recursion(&stream, &p0).unwrap();
        assert!(iv.lambda_pre.iter().all(|&l| (l - 2.0).abs() < 1e-15));
        // two events at 0.5, 1.5 with alpha = 1: A_2 = e^{-1}
        let p = HawkesParams::new(1.0, 0.5, 1.0).unwrap();
        let iv = intensity_recursion(&stream, &p).unwrap();
        assert_eq!(iv.kernel_sum[0], 0.0);
        assert!((iv.kernel_sum[1] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn recursion_matches_brute_force() {
        let stream = random_stream(17, 50, 30.0);
        let p = HawkesParams::new(0.7, 0.6, 1.4).unwrap();
        let iv = intensity_recursion(&stream, &p).unwrap();
        let brute = brute_force_lambda(&stream, &p);
        for (a, b) in iv.lambda_pre.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn loglik_poisson_and_empty() {
        let stream = random_stream(3, 40, 100.0);
        let p = HawkesParams::new(0.4, 0.0, 1.0).unwrap();
        let want = stream.len() as f64 * 0.4f64.ln() - 0.4 * 100.0;
        assert!((loglik(&stream, &p).unwrap() - want).abs() < 1e-10);

        let empty = EventStream::new(50.0, vec![], vec![], 1).unwrap();
        let p2 = HawkesParams::new(0.9, 0.3, 1.0).unwrap();
        assert!((loglik(&empty, &p2).unwrap() - (-0.9 * 50.0)).abs() < 1e-12);
    }

    #[test]
    fn loglik_tail_extension_identity() {
        // appending an event-free tail of length delta changes the
        // log-likelihood only through the compensator
        let stream = random_stream(5, 60, 80.0);
        let p = HawkesParams::new(0.6, 0.45, 0.9).unwrap();
        let delta = 7.0;
        let extended = EventStream::new(
            80.0 + delta,
            stream.times().to_vec(),
            stream.marks().to_vec(),
            1,
        )
        .unwrap();
        let l0 = loglik(&stream, &p).unwrap();
        let l1 = loglik(&extended, &p).unwrap();
        let tail: f64 = stream
            .times()
            .iter()
            .map(|&t| (-p.alpha * (80.0 - t)).exp() - (-p.alpha * (80.0 + delta - t)).exp())
            .sum();
        let want = -p.eta * delta - p.theta_branch * tail;
        assert!(((l1 - l0) - want).abs() < 1e-12 * (1.0 + l0.abs()));
    }

    #[test]
    fn poisson_gradient_closed_form() {
        let stream = random_stream(11, 80, 120.0);
        let p = HawkesParams::new(0.7, 0.0, 1.3).unwrap();
        let g = loglik_grad(&stream, &p).unwrap();
        let want = stream.len() as f64 / 0.7 - 120.0;
        assert!((g[0] - want).abs() < 1e-10);
    }

    fn fd_check(stream: &EventStream, p: &HawkesParams, init: InitialCondition) {
        let u = to_unconstrained(p);
        let h = 1e-5;
        let value = |uu: [f64; 3]| {
            eval_loglik(stream, &from_unconstrained(&uu), init, 0)
                .unwrap()
                .value
        };
        let grad_t = |uu: [f64; 3]| {
            let e = eval_transformed(stream, Vector3::new(uu[0], uu[1], uu[2]), init, 1).unwrap();
            e.grad
        };
        let analytic = grad_t(u);
        for k in 0..3 {
            let mut up = u;
            let mut dn = u;
            up[k] += h;
            dn[k] -= h;
            let fd = (value(up) - value(dn)) / (2.0 * h);
            let scale = analytic[k].abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic[k] - fd).abs() / scale < 1e-6,
                "{init:?} grad[{k}]: analytic {} vs fd {fd}",
                analytic[k]
            );
        }
        // Hessian: central differences of the analytic gradient
        let e2 = eval_transformed(stream, Vector3::new(u[0], u[1], u[2]), init, 2).unwrap();
        for l in 0..3 {
            let mut up = u;
            let mut dn = u;
            up[l] += h;
            dn[l] -= h;
            let gp = grad_t(up);
            let gn = grad_t(dn);
            for k in 0..3 {
                let fd = (gp[k] - gn[k]) / (2.0 * h);
                let scale = e2.hess[(k, l)].abs().max(fd.abs()).max(1.0);
                assert!(
                    (e2.hess[(k, l)] - fd).abs() / scale < 1e-4,
                    "{init:?} hess[{k}][{l}]: analytic {} vs fd {fd}",
                    e2.hess[(k, l)]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for trial in 0..10 {
            let stream = random_stream(100 + trial, 60, 50.0);
            let p = HawkesParams::new(
                0.2 + rng.random::<f64>() * 2.0,
                0.05 + rng.random::<f64>() * 0.85,
                0.3 + rng.random::<f64>() * 2.5,
            )
            .unwrap();
            fd_check(&stream, &p, InitialCondition::Baseline);
            fd_check(&stream, &p, InitialCondition::StationaryMean);
        }
    }

    #[test]
    fn compensator_matches_quadrature() {
        // the compensator is l-contribution -[eta T + theta S0]; check by
        // integrating the recursion intensity with fine Simpson
        let stream = random_stream(23, 40, 25.0);
        let p = HawkesParams::new(0.8, 0.5, 1.1).unwrap();
        let times = stream.times();
        let lambda_fn = |t: f64| -> f64 {
            let a: f64 = times
                .iter()
                .filter(|&&tj| tj < t)
                .map(|&tj| (-p.alpha * (t - tj)).exp())
                .sum();
            p.eta + p.theta_branch * p.alpha * a
        };
        // integrate piecewise between events for Simpson accuracy
        let mut quad = 0.0;
        let mut lo = 0.0;
        let mut knots: Vec<f64> = times.to_vec();
        knots.push(25.0);
        for &hi in &knots {
            let n = 2000;
            let h = (hi - lo) / n as f64;
            if h > 0.0 {
                let mut s = lambda_fn(lo + 1e-12) + lambda_fn(hi - 1e-12);
                for i in 1..n {
                    let x = lo + i as f64 * h;
                    s += lambda_fn(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                quad += s * h / 3.0;
            }
            lo = hi;
        }
        let s0: f64 = times
            .iter()
            .map(|&t| 1.0 - (-p.alpha * (25.0 - t)).exp())
            .sum();
        let closed = p.eta * 25.0 + p.theta_branch * s0;
        assert!(
            (closed - quad).abs() < 1e-8,
            "closed {closed} vs quad {quad}"
        );
    }

    fn null_stream(seed: u64, eta: f64, theta: f64, alpha: f64, horizon: f64) -> EventStream {
        let params = HawkesParams::new(eta, theta, alpha).unwrap();
        let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic).unwrap();
        let model = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1).unwrap();
        let cfg = SimConfig::new(params, boost, vec![0.0], model, horizon).with_seed(seed);
        simulate(&cfg).unwrap()
    }

    #[test]
    fn fit_recovers_poisson_rate() {
        let params = HawkesParams::new(2.0, 0.0, 1.0).unwrap();
        let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic).unwrap();
        let model = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1).unwrap();
        let cfg = SimConfig::new(params, boost, vec![0.0], model, 5000.0).with_seed(77);
        let stream = simulate(&cfg).unwrap();
        let fit = fit_qmle(&stream, &FitOptions::default()).unwrap();
        let n = stream.len() as f64;
        let want = n / 5000.0;
        let band = 3.0 * n.sqrt() / 5000.0;
        assert!(
            (fit.params.eta - want).abs() < band,
            "eta {} vs N/T {want}",
            fit.params.eta
        );
        assert!(
            fit.params.theta_branch < 0.05,
            "theta {}",
            fit.params.theta_branch
        );
    }

    #[test]
    fn fit_recovers_hawkes_parameters() {
        let stream = null_stream(123, 0.5, 0.5, 1.0, 5000.0);
        let fit = fit_qmle(&stream, &FitOptions::default()).unwrap();
        assert!(fit.converged, "termination {:?}", fit.termination);
        let se = fit.std_errors.expect("standard errors");
        let truth = [0.5, 0.5, 1.0];
        let est = [fit.params.eta, fit.params.theta_branch, fit.params.alpha];
        for k in 0..3 {
            assert!(
                (est[k] - truth[k]).abs() < 4.0 * se[k],
                "component {k}: {} vs {} (se {})",
                est[k],
                truth[k],
                se[k]
            );
        }
        assert!(fit.gradient.iter().all(|g| g.abs() < 1e-8));
    }

    #[test]
    fn fit_multistart_agrees() {
        let stream = null_stream(321, 0.5, 0.5, 1.0, 2000.0);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let baseline = fit_qmle(&stream, &FitOptions::default()).unwrap();
        assert!(baseline.converged);
        for _ in 0..5 {
            let init = HawkesParams::new(
                baseline.params.eta * (0.3 + 2.0 * rng.random::<f64>()),
                0.1 + 0.8 * rng.random::<f64>(),
                baseline.params.alpha * (0.3 + 2.0 * rng.random::<f64>()),
            )
            .unwrap();
            let opts = FitOptions {
                init: Some(init),
                ..Default::default()
            };
            let fit = fit_qmle(&stream, &opts).unwrap();
            if fit.converged {
                assert!(
                    (fit.loglik - baseline.loglik).abs() < 1e-6,
                    "restart loglik {} vs {}",
                    fit.loglik,
                    baseline.loglik
                );
            }
        }
    }

    #[test]
    fn fit_refuses_tiny_streams() {
        let stream = EventStream::new(10.0, vec![1.0, 2.0, 3.0], vec![vec![0.0]; 3], 1).unwrap();
        assert!(matches!(
            fit_qmle(&stream, &FitOptions::default()).unwrap_err(),
            Error::InsufficientData(_)
        ));
    }

    #[test]
    fn fit_reports_non_convergence() {
        let stream = null_stream(55, 0.5, 0.5, 1.0, 500.0);
        let opts = FitOptions {
            max_iter: 1,
            ..Default::default()
        };
        let fit = fit_qmle(&stream, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, FitTermination::MaxIterations);
    }

    #[test]
    fn stationary_mean_initialization_changes_likelihood() {
        let stream = null_stream(8, 0.5, 0.5, 1.0, 200.0);
        let p = HawkesParams::new(0.5, 0.5, 1.0).unwrap();
        let base = loglik(&stream, &p).unwrap();
        let sm = loglik_with(&stream, &p, InitialCondition::StationaryMean).unwrap();
        assert!((base - sm).abs() > 1e-9, "initial condition should matter");
        // theta = 0 collapses the two
        let p0 = HawkesParams::new(0.5, 0.0, 1.0).unwrap();
        let a = loglik(&stream, &p0).unwrap();
        let b = loglik_with(&stream, &p0, InitialCondition::StationaryMean).unwrap();
        assert_eq!(a, b);
    }
}
