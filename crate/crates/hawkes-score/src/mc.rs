//! Monte Carlo replication engine: null calibration of the score test
//! against its chi-squared limit, local power against the noncentral
//! chi-squared limit, and estimation of the asymptotic information.
//!
//! Replicates are embarrassingly parallel. Each replicate derives its seed
//! from the master seed and its own index, so replicate k's stream never
//! depends on the total replicate count or the thread schedule, and
//! aggregation is an ordered reduction: identical configurations produce
//! byte-identical reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{chi2_cdf, chi2_quantile, ks_statistic, noncentral_chi2_cdf};
use crate::error::{Error, Result};
use crate::fit::{fit_qmle, FitOptions};
use crate::marks::estimate_mu_h;
use crate::model::{center_marks, BoostSpec, EventStream};
use crate::score::{info_matrix, run_score_test};
use crate::seeding::derive_seed;
use crate::sim::{simulate, SimConfig};

/// Fraction of failed replicates above which a report is flagged invalid.
const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Configuration of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Simulation template; `psi` is overridden per experiment (zero under
    /// the null, gamma / sqrt(T) for local power).
    pub sim: SimConfig,
    pub replicates: usize,
    /// Boost specification the score test is run with.
    pub boost_under_test: BoostSpec,
    /// Local-alternative direction gamma; the simulated boost parameter is
    /// gamma / sqrt(T). Ignored by null runs.
    pub gamma: Vec<f64>,
    pub nominal_levels: Vec<f64>,
    pub master_seed: u64,
}

impl McConfig {
    pub fn new(sim: SimConfig, replicates: usize, boost_under_test: BoostSpec) -> Self {
        Self {
            sim,
            replicates,
            boost_under_test,
            gamma: vec![0.0; boost_under_test.psi_dim()],
            nominal_levels: vec![0.01, 0.05, 0.10],
            master_seed: 0,
        }
    }

    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_gamma(mut self, gamma: Vec<f64>) -> Self {
        self.gamma = gamma;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Domain("mc config: replicates must be >= 1".into()));
        }
        if self.nominal_levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Domain(
                "mc config: nominal levels must lie in (0,1)".into(),
            ));
        }
        if self.gamma.len() != self.sim.boost.psi_dim() {
            return Err(Error::Domain(format!(
                "gamma has dimension {}, simulation boost expects {}",
                self.gamma.len(),
                self.sim.boost.psi_dim()
            )));
        }
        // validate the template with the null-run psi override
        let mut sim = self.sim.clone();
        sim.psi = vec![0.0; self.sim.boost.psi_dim()];
        sim.validate()
    }
}

/// Which reference law a report was calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    NullCalibration,
    LocalPower,
}

/// Outcome of one successful replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub n_events: usize,
    pub statistic: f64,
    pub p_value: f64,
    /// Fitted (eta, theta, alpha).
    pub theta_hat: [f64; 3],
    pub converged: bool,
}

/// A replicate that could not produce a test statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub reason: String,
}

/// Empirical rejection rate at one nominal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRate {
    pub level: f64,
    pub rate: f64,
    /// Binomial standard error sqrt(rate (1 - rate) / n).
    pub std_error: f64,
}

/// Predicted asymptotic power at one nominal level (power runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPower {
    pub level: f64,
    pub predicted: f64,
}

/// Aggregated Monte Carlo report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub experiment: Experiment,
    pub df: usize,
    pub horizon: f64,
    pub replicates: usize,
    pub master_seed: u64,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
    /// Rejection rates over converged replicates only.
    pub empirical_rates: Vec<LevelRate>,
    /// KS distance of the statistic sample to its reference law (central
    /// chi-squared under the null, noncentral under local alternatives).
    pub ks_distance: f64,
    /// Average of info/T over converged replicates.
    pub omega_hat: Vec<Vec<f64>>,
    /// gamma' omega gamma for power runs.
    pub ncp: Option<f64>,
    pub predicted_power: Option<Vec<LevelPower>>,
    /// False when more than 5% of replicates failed.
    pub valid: bool,
}

enum ReplicateOutcome {
    Ok {
        record: ReplicateRecord,
        omega: Vec<Vec<f64>>,
    },
    Failed(ReplicateFailure),
}

fn run_replicate(config: &McConfig, psi: &[f64], index: usize) -> ReplicateOutcome {
    let mut sim = config.sim.clone();
    sim.psi = psi.to_vec();
    sim.seed = derive_seed(config.master_seed, index as u64);
    let attempt = simulate(&sim).and_then(|stream| {
        let (test, fit) = run_score_test(&stream, &config.boost_under_test)?;
        Ok((stream, test, fit))
    });
    match attempt {
        Ok((stream, test, fit)) => ReplicateOutcome::Ok {
            record: ReplicateRecord {
                index,
                n_events: stream.len(),
                statistic: test.statistic,
                p_value: test.p_value,
                theta_hat: [fit.params.eta, fit.params.theta_branch, fit.params.alpha],
                converged: fit.converged,
            },
            omega: test.omega_hat,
        },
        Err(e) => ReplicateOutcome::Failed(ReplicateFailure {
            index,
            reason: e.to_string(),
        }),
    }
}

fn aggregate(
    config: &McConfig,
    experiment: Experiment,
    outcomes: Vec<ReplicateOutcome>,
    ncp: Option<f64>,
) -> Result<McReport> {
    let r = config.boost_under_test.psi_dim();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut omega_sum = vec![vec![0.0; r]; r];
    for outcome in outcomes {
        match outcome {
            ReplicateOutcome::Ok { record, omega } => {
                for (acc_row, row) in omega_sum.iter_mut().zip(&omega) {
                    for (acc, v) in acc_row.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                records.push(record);
            }
            ReplicateOutcome::Failed(f) => failures.push(f),
        }
    }
    let n = records.len();
    let omega_hat: Vec<Vec<f64>> = omega_sum
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| if n > 0 { v / n as f64 } else { 0.0 })
                .collect()
        })
        .collect();

    let empirical_rates = config
        .nominal_levels
        .iter()
        .map(|&level| {
            let hits = records.iter().filter(|rec| rec.p_value <= level).count();
            let rate = if n > 0 { hits as f64 / n as f64 } else { 0.0 };
            let std_error = if n > 0 {
                (rate * (1.0 - rate) / n as f64).sqrt()
            } else {
                0.0
            };
            LevelRate {
                level,
                rate,
                std_error,
            }
        })
        .collect();

    let ks_distance = if n > 0 {
        let mut stats: Vec<f64> = records.iter().map(|rec| rec.statistic).collect();
        stats.sort_by(f64::total_cmp);
        let reference = |x: f64| match ncp {
            Some(l) => noncentral_chi2_cdf(x, r, l).unwrap_or(f64::NAN),
            None => chi2_cdf(x, r).unwrap_or(f64::NAN),
        };
        ks_statistic(&stats, reference)?
    } else {
        0.0
    };

    let predicted_power = match ncp {
        Some(l) => {
            let mut rows = Vec::with_capacity(config.nominal_levels.len());
            for &level in &config.nominal_levels {
                let crit = chi2_quantile(1.0 - level, r)?;
                rows.push(LevelPower {
                    level,
                    predicted: 1.0 - noncentral_chi2_cdf(crit, r, l)?,
                });
            }
            Some(rows)
        }
        None => None,
    };

    let valid = (failures.len() as f64) <= MAX_FAILURE_FRACTION * config.replicates as f64;
    Ok(McReport {
        experiment,
        df: r,
        horizon: config.sim.horizon,
        replicates: config.replicates,
        master_seed: config.master_seed,
        records,
        failures,
        empirical_rates,
        ks_distance,
        omega_hat,
        ncp,
        predicted_power,
        valid,
    })
}

/// Null calibration: simulate with psi = 0, test each replicate, and compare
/// the statistic sample with its chi-squared(r) limit.
pub fn run_null_calibration(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    let psi = vec![0.0; config.sim.boost.psi_dim()];
    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|k| run_replicate(config, &psi, k))
        .collect();
    aggregate(config, Experiment::NullCalibration, outcomes, None)
}

/// Local power: simulate under psi = gamma / sqrt(T) and compare with the
/// noncentral chi-squared limit, whose noncentrality gamma' Omega gamma uses
/// the information from a companion null run at the same parameters
/// (pass `omega_from_null` to reuse one; otherwise the companion run happens
/// internally with the same master seed).
pub fn run_local_power(
    config: &McConfig,
    omega_from_null: Option<&[Vec<f64>]>,
) -> Result<McReport> {
    config.validate()?;
    let r = config.sim.boost.psi_dim();
    let horizon = config.sim.horizon;
    let psi: Vec<f64> = config.gamma.iter().map(|g| g / horizon.sqrt()).collect();

    let omega: Vec<Vec<f64>> = match omega_from_null {
        Some(m) => {
            if m.len() != r || m.iter().any(|row| row.len() != r) {
                return Err(Error::Domain("omega_from_null has the wrong shape".into()));
            }
            m.to_vec()
        }
        None => run_null_calibration(config)?.omega_hat,
    };
    let mut ncp = 0.0;
    for k in 0..r {
        for l in 0..r {
            ncp += config.gamma[k] * omega[k][l] * config.gamma[l];
        }
    }

    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|k| run_replicate(config, &psi, k))
        .collect();
    aggregate(config, Experiment::LocalPower, outcomes, Some(ncp))
}

/// Information estimate with convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaEstimate {
    /// Average of info/T over replicates at the configured horizon.
    pub omega: Vec<Vec<f64>>,
    pub horizon: f64,
    /// Across-replicate Frobenius spread of info/T at the horizon.
    pub spread_at_horizon: f64,
    /// Same spread at twice the horizon; shrinks as the ergodic limit sets in.
    pub spread_at_double_horizon: f64,
    /// True when the averaged matrix is numerically zero (degenerate marks).
    pub degenerate: bool,
}

/// Per-replicate info/T under the null at a scaled horizon. Unlike the full
/// test pipeline this keeps degenerate (zero) information matrices, so
/// constant marks produce a zero estimate instead of an error.
fn replicate_omega(
    config: &McConfig,
    index: usize,
    horizon_scale: f64,
    seed_offset: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut sim = config.sim.clone();
    sim.psi = vec![0.0; config.sim.boost.psi_dim()];
    sim.horizon *= horizon_scale;
    sim.burn_in = config.sim.burn_in;
    sim.seed = derive_seed(config.master_seed, seed_offset + index as u64);
    let stream: EventStream = simulate(&sim)?;
    let fit = fit_qmle(&stream, &FitOptions::default())?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "replicate {index}: {:?}",
            fit.termination
        )));
    }
    let spec = &config.boost_under_test;
    let mu = estimate_mu_h(&stream, spec)?;
    let centered = center_marks(&stream, spec, &mu)?;
    let info = info_matrix(&stream, &fit.params, &centered)?;
    let t = stream.horizon();
    Ok(info
        .iter()
        .map(|row| row.iter().map(|v| v / t).collect())
        .collect())
}

fn frobenius_spread(samples: &[Vec<Vec<f64>>], mean: &[Vec<f64>]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|m| {
            m.iter()
                .zip(mean)
                .flat_map(|(row, mrow)| row.iter().zip(mrow).map(|(v, mv)| (v - mv) * (v - mv)))
                .sum::<f64>()
        })
        .sum();
    (total / samples.len() as f64).sqrt()
}

fn mean_matrix(samples: &[Vec<Vec<f64>>], r: usize) -> Vec<Vec<f64>> {
    let mut mean = vec![vec![0.0; r]; r];
    for m in samples {
        for (mr, row) in mean.iter_mut().zip(m) {
            for (mv, v) in mr.iter_mut().zip(row) {
                *mv += v;
            }
        }
    }
    let n = samples.len().max(1) as f64;
    for row in mean.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    mean
}

/// Estimate the asymptotic information Omega = lim info/T from null
/// replicates at the configured horizon, with a companion run at twice the
/// horizon demonstrating the ergodic concentration.
pub fn estimate_omega(config: &McConfig) -> Result<OmegaEstimate> {
    config.validate()?;
    let r = config.boost_under_test.psi_dim();
    let run = |scale: f64, offset: u64| -> Result<Vec<Vec<Vec<f64>>>> {
        let results: Vec<Result<Vec<Vec<f64>>>> = (0..config.replicates)
            .into_par_iter()
            .map(|k| replicate_omega(config, k, scale, offset))
            .collect();
        let mut ok = Vec::with_capacity(config.replicates);
        let mut failures = 0usize;
        for res in results {
            match res {
                Ok(m) => ok.push(m),
                Err(_) => failures += 1,
            }
        }
        if (failures as f64) > MAX_FAILURE_FRACTION * config.replicates as f64 {
            return Err(Error::NonConvergence(format!(
                "omega estimation: {failures}/{} replicates failed",
                config.replicates
            )));
        }
        Ok(ok)
    };
    let at_t = run(1.0, 0)?;
    let at_2t = run(2.0, config.replicates as u64)?;
    let omega = mean_matrix(&at_t, r);
    let spread_at_horizon = frobenius_spread(&at_t, &omega);
    let mean_2t = mean_matrix(&at_2t, r);
    let spread_at_double_horizon = frobenius_spread(&at_2t, &mean_2t);
    let magnitude = omega
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    Ok(OmegaEstimate {
        omega,
        horizon: config.sim.horizon,
        spread_at_horizon,
        spread_at_double_horizon,
        degenerate: magnitude < 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::{MarkKind, MarkModel};
    use crate::model::{BoostFamily, HawkesParams, Normalizer};

    fn base_config(horizon: f64, replicates: usize, seed: u64) -> McConfig {
        let params = HawkesParams::new(0.5, 0.5, 1.0).unwrap();
        let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic).unwrap();
        let model = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1).unwrap();
        let sim = SimConfig::new(params, boost, vec![0.0], model, horizon);
        McConfig::new(sim, replicates, boost).with_master_seed(seed)
    }

    #[test]
    fn single_replicate_report() {
        let cfg = base_config(300.0, 1, 5);
        let report = run_null_calibration(&cfg).unwrap();
        assert_eq!(report.records.len() + report.failures.len(), 1);
        for rate in &report.empirical_rates {
            assert!(rate.rate == 0.0 || rate.rate == 1.0);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = base_config(200.0, 8, 17);
        let a = run_null_calibration(&cfg).unwrap();
        let b = run_null_calibration(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn replicates_do_not_depend_on_total_count() {
        let small = run_null_calibration(&base_config(200.0, 4, 23)).unwrap();
        let large = run_null_calibration(&base_config(200.0, 8, 23)).unwrap();
        for (a, b) in small.records.iter().zip(&large.records) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_gamma_power_run_reduces_to_null() {
        let cfg = base_config(250.0, 6, 31);
        let null = run_null_calibration(&cfg).unwrap();
        let power = run_local_power(&cfg, Some(&null.omega_hat)).unwrap();
        assert_eq!(null.records, power.records);
        assert_eq!(power.ncp, Some(0.0));
        // with ncp = 0 the predicted power equals the nominal level
        for row in power.predicted_power.as_ref().unwrap() {
            assert!((row.predicted - row.level).abs() < 1e-9);
        }
    }

    #[test]
    fn predicted_power_reference_value() {
        // ncp = 4, df = 1, level 0.05: power ~ 0.516
        let crit = chi2_quantile(0.95, 1).unwrap();
        let power = 1.0 - noncentral_chi2_cdf(crit, 1, 4.0).unwrap();
        assert!((power - 0.516).abs() < 5e-4, "predicted power {power}");
    }

    #[test]
    fn excess_failures_flag_report_invalid() {
        // horizon so short that most replicates have < 10 events
        let cfg = base_config(12.0, 10, 3);
        let report = run_null_calibration(&cfg).unwrap();
        assert!(!report.valid, "failures {}", report.failures.len());
        assert!(!report.failures.is_empty());
    }

    #[test]
    fn omega_degenerate_for_constant_marks() {
        let params = HawkesParams::new(0.5, 0.5, 1.0).unwrap();
        let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic).unwrap();
        // constant "Gaussian" marks: sd must be positive, so use a spec whose
        // features are constant instead: polynomial on a constant-mark model
        // is not constructible here, so emulate with IidGaussian with tiny sd
        let model = MarkModel::new(
            MarkKind::IidGaussian {
                mean: 2.0,
                sd: 1e-30,
            },
            1,
        )
        .unwrap();
        let sim = SimConfig::new(params, boost, vec![0.0], model, 300.0);
        let cfg = McConfig::new(sim, 4, boost).with_master_seed(7);
        let est = estimate_omega(&cfg).unwrap();
        assert!(est.degenerate, "omega {:?}", est.omega);
        assert!(est.omega[0][0].abs() < 1e-12);
    }

    #[test]
    fn omega_spread_shrinks_with_horizon() {
        let cfg = base_config(500.0, 200, 99);
        let est = estimate_omega(&cfg).unwrap();
        assert!(!est.degenerate);
        assert!(est.omega[0][0] > 0.0);
        assert!(
            est.spread_at_double_horizon < est.spread_at_horizon,
            "spread at 2T {} not below spread at T {}",
            est.spread_at_double_horizon,
            est.spread_at_horizon
        );
        // ergodic 1/sqrt(T) scaling: quadrupling the horizon roughly halves
        // the spread (checked at the sqrt(2) step with a loose band)
        let ratio = est.spread_at_horizon / est.spread_at_double_horizon;
        assert!(
            (1.1..=2.0).contains(&ratio),
            "spread ratio {ratio} far from sqrt(2)"
        );
    }

    #[test]
    fn omega_estimate_is_symmetric_psd_for_r2() {
        let params = HawkesParams::new(0.5, 0.5, 1.0).unwrap();
        let boost = BoostSpec::new(
            BoostFamily::Polynomial { degree: 2 },
            1,
            Normalizer::Analytic,
        )
        .unwrap();
        let model = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1).unwrap();
        let sim = SimConfig::new(params, boost, vec![0.0, 0.0], model, 300.0);
        let cfg = McConfig::new(sim, 20, boost).with_master_seed(13);
        let est = estimate_omega(&cfg).unwrap();
        assert_eq!(est.omega[0][1], est.omega[1][0]);
        let trace = est.omega[0][0] + est.omega[1][1];
        let det = est.omega[0][0] * est.omega[1][1] - est.omega[0][1] * est.omega[1][0];
        assert!(
            trace > 0.0 && det >= -1e-12 * trace * trace,
            "trace {trace}, det {det}"
        );
    }
}
