//! Desk-scale null calibration: simulate, fit, and test many independent
//! replicates with psi = 0 and compare the empirical size with the nominal
//! levels and the statistic sample with its chi-squared limit.
//!
//! Run with: cargo run --release --example null_calibration

use hawkes_score::{
    run_null_calibration, BoostFamily, BoostSpec, HawkesParams, MarkKind, MarkModel, McConfig,
    Normalizer, SimConfig,
};

fn main() -> hawkes_score::Result<()> {
    let params = HawkesParams::new(0.5, 0.5, 1.0)?;
    let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic)?;
    let marks = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1)?;
    let sim = SimConfig::new(params, boost, vec![0.0], marks, 1000.0);
    let config = McConfig::new(sim, 200, boost).with_master_seed(1);

    let report = run_null_calibration(&config)?;
    println!(
        "{} replicates ({} failed), df = {}",
        report.records.len(),
        report.failures.len(),
        report.df
    );
    println!("{:>8} {:>12} {:>10}", "level", "empirical", "binom se");
    for rate in &report.empirical_rates {
        println!(
            "{:>8.3} {:>12.4} {:>10.4}",
            rate.level, rate.rate, rate.std_error
        );
    }
    println!(
        "KS distance of Q sample to chi-squared({}): {:.4}",
        report.df, report.ks_distance
    );
    println!(
        "information per unit time Omega ~ {:.5}",
        report.omega_hat[0][0]
    );
    Ok(())
}
