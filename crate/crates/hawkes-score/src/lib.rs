//! Marked Hawkes self-exciting point processes: simulation by thinning,
//! quasi-maximum-likelihood fitting of the unmarked model, and the score
//! test of whether marks boost the intensity, together with a Monte Carlo
//! harness that checks the test's chi-squared null calibration and its
//! noncentral chi-squared local power.
//!
//! The model: events arrive with intensity
//!
//! ```text
//! lambda_g(t) = eta + theta * sum_{t_i < t} alpha exp(-alpha (t - t_i)) * g(x_i)
//! ```
//!
//! where `x_i` is the mark vector of event i and `g(x) = h(x; psi) / E[h]` is
//! a normalized boost. The null hypothesis `psi = 0` makes marks inert; the
//! score test needs only a single unmarked fit, which is what makes it cheap
//! enough to screen large mark catalogues.
//!
//! Typical flow:
//!
//! ```
//! use hawkes_score::{
//!     BoostFamily, BoostSpec, HawkesParams, MarkKind, MarkModel, Normalizer, SimConfig,
//! };
//!
//! let params = HawkesParams::new(0.5, 0.5, 1.0)?;
//! let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic)?;
//! let marks = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1)?;
//! let config = SimConfig::new(params, boost, vec![0.0], marks, 500.0).with_seed(7);
//! let stream = hawkes_score::simulate(&config)?;
//! let (test, fit) = hawkes_score::run_score_test(&stream, &boost)?;
//! assert_eq!(test.df, 1);
//! assert!(fit.converged);
//! # Ok::<(), hawkes_score::Error>(())
//! ```
//!
//! See the `examples/` directory for one runnable program per capability:
//! simulation, fitting, screening marks with the score test, residual
//! diagnostics, null calibration, local power, and information estimation.

// `!(x > 0)` deliberately rejects NaN along with the out-of-domain values;
// index loops over small r x r matrices read better than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dist;
pub mod error;
pub mod fit;
pub mod io;
pub mod marks;
pub mod mc;
pub mod model;
pub mod score;
pub mod seeding;
pub mod sim;

pub use error::{Error, Result};
pub use fit::{
    fit_qmle, intensity_recursion, loglik, loglik_grad, loglik_neg_hessian, FitOptions, FitResult,
    FitTermination,
};
pub use marks::{analytic_eh, estimate_mu_h, monte_carlo_eh, MarkChain, MarkKind, MarkModel};
pub use mc::{
    estimate_omega, run_local_power, run_null_calibration, McConfig, McReport, OmegaEstimate,
};
pub use model::{
    center_marks, check_stability, kernel_eval, kernel_integral, BoostFamily, BoostSpec,
    EventStream, HawkesParams, InitialCondition, Normalizer,
};
pub use score::{
    info_matrix, run_score_test, score_statistic, score_test_with_fit, score_vector, u_process,
    ScoreTestResult,
};
pub use sim::{simulate, time_rescale, SimConfig};
