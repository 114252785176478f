//! Ergodic convergence of the empirical information: the per-replicate
//! spread of info/T shrinks as the horizon grows, pinning down the
//! asymptotic information Omega that governs local power.
//!
//! Run with: cargo run --release --example omega_convergence

use hawkes_score::{
    estimate_omega, BoostFamily, BoostSpec, HawkesParams, MarkKind, MarkModel, McConfig,
    Normalizer, SimConfig,
};

fn main() -> hawkes_score::Result<()> {
    let params = HawkesParams::new(0.5, 0.5, 1.0)?;
    let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic)?;
    let marks = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1)?;
    let sim = SimConfig::new(params, boost, vec![0.0], marks, 500.0);
    let config = McConfig::new(sim, 150, boost).with_master_seed(3);

    let est = estimate_omega(&config)?;
    println!(
        "Omega estimate at T = {}: {:.5}",
        est.horizon, est.omega[0][0]
    );
    println!(
        "replicate spread: {:.5} at T, {:.5} at 2T (ratio {:.2}; ~0.71 for 1/sqrt(T) scaling)",
        est.spread_at_horizon,
        est.spread_at_double_horizon,
        est.spread_at_double_horizon / est.spread_at_horizon
    );
    assert!(!est.degenerate);
    Ok(())
}
