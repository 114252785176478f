//! Fit the unmarked Hawkes model by quasi-maximum likelihood and read off
//! parameter estimates with Hessian-based standard errors.
//!
//! Run with: cargo run --release --example fit_qmle

use hawkes_score::{
    fit_qmle, simulate, BoostFamily, BoostSpec, FitOptions, HawkesParams, MarkKind, MarkModel,
    Normalizer, SimConfig,
};

fn main() -> hawkes_score::Result<()> {
    let truth = HawkesParams::new(0.5, 0.5, 1.0)?;
    let boost = BoostSpec::new(BoostFamily::Linear, 1, Normalizer::Analytic)?;
    let marks = MarkModel::new(MarkKind::IidGaussian { mean: 0.0, sd: 1.0 }, 1)?;
    let config = SimConfig::new(truth, boost, vec![0.0], marks, 5000.0).with_seed(2024);
    let stream = simulate(&config)?;
    println!("fitting {} events...", stream.len());

    let fit = fit_qmle(&stream, &FitOptions::default())?;
    println!(
        "converged: {} after {} iterations ({:?})",
        fit.converged, fit.iterations, fit.termination
    );
    println!("loglik = {:.4}", fit.loglik);

    let se = fit.std_errors.expect("positive definite information");
    let est = [fit.params.eta, fit.params.theta_branch, fit.params.alpha];
    let tru = [truth.eta, truth.theta_branch, truth.alpha];
    println!(
        "{:>8} {:>10} {:>10} {:>10} {:>8}",
        "param", "truth", "estimate", "std err", "z"
    );
    for (k, name) in ["eta", "branch", "alpha"].iter().enumerate() {
        println!(
            "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>8.2}",
            name,
            tru[k],
            est[k],
            se[k],
            (est[k] - tru[k]) / se[k]
        );
    }
    Ok(())
}
