//! Shared oracles for the integration suites: quadrature, an independent
//! normal CDF, brute-force O(N^2) intensity sums, and random-stream
//! generators. Everything here is deliberately independent of the library's
//! closed forms and recursions.

use hawkes_score::{EventStream, HawkesParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// Composite Simpson quadrature with n (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n.is_multiple_of(2) { n } else { n + 1 };
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Standard normal CDF by quadrature of the density (independent of the
/// library's incomplete-gamma machinery).
pub fn normal_cdf(z: f64) -> f64 {
    if z < -12.0 {
        return 0.0;
    }
    if z > 12.0 {
        return 1.0;
    }
    let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(density, -12.0, z, 40_000)
}

/// Random event stream: sorted uniform times on (0, horizon), i.i.d. standard
/// normal scalar marks.
pub fn random_stream(seed: u64, n: usize, horizon: f64) -> EventStream {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * horizon * 0.995 + 1e-9)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let marks: Vec<Vec<f64>> = times
        .iter()
        .map(|_| {
            vec![<StandardNormal as Distribution<f64>>::sample(
                &StandardNormal,
                &mut rng,
            )]
        })
        .collect();
    EventStream::new(horizon, times, marks, 1).expect("valid random stream")
}

/// Random parameters across the practically relevant box.
pub fn random_params(rng: &mut ChaCha12Rng) -> HawkesParams {
    HawkesParams::new(
        0.2 + 2.0 * rng.random::<f64>(),
        0.05 + 0.85 * rng.random::<f64>(),
        0.3 + 2.5 * rng.random::<f64>(),
    )
    .expect("valid random params")
}

/// Brute-force pre-event intensity (direct double sum).
pub fn brute_lambda(stream: &EventStream, p: &HawkesParams) -> Vec<f64> {
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

/// Brute-force intensity at an arbitrary time (events strictly before t).
pub fn brute_lambda_at(stream: &EventStream, p: &HawkesParams, t: f64) -> f64 {
    let a: f64 = stream
        .times()
        .iter()
        .filter(|&&tj| tj < t)
        .map(|&tj| (-p.alpha * (t - tj)).exp())
        .sum();
    p.eta + p.theta_branch * p.alpha * a
}

/// Brute-force psi-derivative process U(t) for centered scalar features.
pub fn brute_u_at(stream: &EventStream, p: &HawkesParams, centered: &[Vec<f64>], t: f64) -> f64 {
    stream
        .times()
        .iter()
        .zip(centered)
        .filter(|(&tj, _)| tj < t)
        .map(|(&tj, g)| p.theta_branch * p.alpha * (-p.alpha * (t - tj)).exp() * g[0])
        .sum()
}

/// Piecewise Simpson over the inter-event partition (the integrands decay
/// smoothly between events but kink at them).
pub fn piecewise_simpson<F: Fn(f64) -> f64>(
    f: F,
    times: &[f64],
    horizon: f64,
    panels_per_interval: usize,
) -> f64 {
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut knots: Vec<f64> = times.to_vec();
    knots.push(horizon);
    for &hi in &knots {
        if hi > lo {
            total += simpson(&f, lo + 1e-13, hi - 1e-13, panels_per_interval);
        }
        lo = hi;
    }
    total
}

/// One PASS/FAIL line per acceptance criterion, then assert.
pub fn criterion(number: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number} ({name}): {verdict} — {detail}");
    assert!(
        pass,
        "acceptance criterion {number} ({name}) failed: {detail}"
    );
}
