//! Command-line entry points: `simulate`, `fit`, `score-test`, `mc-null`,
//! and `mc-power`.
//!
//! Every run can read a flat `key=value` configuration file (`--config`);
//! explicit flags win over file values. Exit codes: 0 success, 1 validation
//! or configuration error, 2 numeric or convergence failure; errors are
//! mirrored as JSON on standard error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dist::chi2_quantile;
use crate::error::{Error, Result};
use crate::fit::{fit_qmle, FitOptions, FitResult};
use crate::io::{
    format_g17, parse_config_file, read_artifact, read_events_csv, read_events_json,
    write_artifact, write_events_csv, ArtifactKind, Provenance, RunArtifact,
};
use crate::marks::{MarkKind, MarkModel};
use crate::mc::{run_local_power, run_null_calibration, McConfig, McReport};
use crate::model::{BoostFamily, BoostSpec, HawkesParams, InitialCondition, Normalizer};
use crate::score::{score_test_with_fit, ScoreTestResult};
use crate::sim::{simulate, time_rescale, SimConfig};

#[derive(Parser)]
#[command(
    name = "hawkes-score",
    version,
    about = "Marked Hawkes simulation, quasi-ML fitting, and the score test for mark impact"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a marked Hawkes stream and write it as CSV plus provenance.
    Simulate(SimulateArgs),
    /// Fit the unmarked Hawkes model by quasi-maximum likelihood.
    Fit(FitArgs),
    /// Run the score test for mark impact on one event stream.
    ScoreTest(ScoreTestArgs),
    /// Null-calibration Monte Carlo: empirical size against chi-squared.
    McNull(McArgs),
    /// Local-power Monte Carlo: empirical power against noncentral chi-squared.
    McPower(McArgs),
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    branch: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Observation horizon T for simulation.
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long = "burn-in")]
    burn_in: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Boost family: linear | poly:P | exp.
    #[arg(long)]
    boost: Option<String>,
    /// Mark model: iid-gauss[:mean,sd] | iid-exp[:rate] | ar1:rho[,sd] | ou:kappa[,sd].
    #[arg(long = "mark-model")]
    mark_model: Option<String>,
    /// Flat key=value configuration file; flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Boost parameter psi, comma separated.
    #[arg(long)]
    psi: Option<String>,
    /// Output CSV path (provenance JSON lands next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Event file (.csv or .json).
    #[arg(long)]
    events: Option<PathBuf>,
    /// Horizon override (wins over the file's own horizon).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreTestArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Boost family under test: linear | poly:P | exp.
    #[arg(long)]
    boost: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV of residual QQ data: doubled time-rescaled inter-arrivals
    /// against chi-squared(2) quantiles.
    #[arg(long = "qq-out")]
    qq_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    replicates: Option<usize>,
    /// Local-alternative direction gamma (mc-power only), comma separated.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Payload of the `simulate` artifact; the events themselves live in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub n_events: usize,
    pub horizon: f64,
    pub mean_rate: f64,
    pub events_path: String,
}

/// Payload of the `score-test` artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestOutput {
    pub fit: FitResult,
    pub test: ScoreTestResult,
}

// ---------------------------------------------------------------------------
// flag / config-file resolution
// ---------------------------------------------------------------------------

struct Resolver {
    file: BTreeMap<String, String>,
    /// Effective configuration echoed into provenance.
    echo: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Self> {
        let file = match config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            echo: BTreeMap::new(),
        })
    }

    fn str_value(
        &mut self,
        key: &str,
        flag: Option<&str>,
        default: Option<&str>,
    ) -> Result<Option<String>> {
        let value = flag
            .map(str::to_string)
            .or_else(|| self.file.get(key).cloned())
            .or_else(|| default.map(str::to_string));
        if let Some(v) = &value {
            self.echo.insert(key.to_string(), v.clone());
        }
        Ok(value)
    }

    fn f64_value(
        &mut self,
        key: &str,
        flag: Option<f64>,
        default: Option<f64>,
    ) -> Result<Option<f64>> {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(raw.parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "config key '{key}': cannot parse '{raw}' as a number"
                    ))
                })?),
                None => default,
            },
        };
        if let Some(v) = value {
            self.echo.insert(key.to_string(), format_g17(v));
        }
        Ok(value)
    }

    fn require_f64(&mut self, key: &str, flag: Option<f64>) -> Result<f64> {
        self.f64_value(key, flag, None)?
            .ok_or_else(|| Error::Config(format!("missing required setting '{key}'")))
    }

    fn u64_value(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse::<u64>().map_err(|_| {
                    Error::Config(format!(
                        "config key '{key}': cannot parse '{raw}' as an integer"
                    ))
                })?,
                None => default,
            },
        };
        self.echo.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn usize_value(&mut self, key: &str, flag: Option<usize>, default: usize) -> Result<usize> {
        Ok(self.u64_value(key, flag.map(|v| v as u64), default as u64)? as usize)
    }
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{what}: cannot parse '{part}' as a number")))
        })
        .collect()
}

fn parse_boost(raw: &str, mark_dim: usize) -> Result<BoostSpec> {
    let family = match raw {
        "linear" => BoostFamily::Linear,
        "exp" => BoostFamily::Exponential,
        other => match other.strip_prefix("poly:") {
            Some(deg) => BoostFamily::Polynomial {
                degree: deg.parse().map_err(|_| {
                    Error::Config(format!("boost 'poly:P': cannot parse degree '{deg}'"))
                })?,
            },
            None => {
                return Err(Error::Config(format!(
                    "unknown boost '{other}' (expected linear | poly:P | exp)"
                )))
            }
        },
    };
    BoostSpec::new(family, mark_dim, Normalizer::Analytic)
}

fn parse_mark_model(raw: &str, dim: usize) -> Result<MarkModel> {
    let (name, args) = match raw.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (raw, None),
    };
    let nums: Vec<f64> = match args {
        Some(a) => parse_f64_list(a, "mark-model parameters")?,
        None => Vec::new(),
    };
    let kind = match name {
        "iid-gauss" => MarkKind::IidGaussian {
            mean: nums.first().copied().unwrap_or(0.0),
            sd: nums.get(1).copied().unwrap_or(1.0),
        },
        "iid-exp" => MarkKind::IidExponential {
            rate: nums.first().copied().unwrap_or(1.0),
        },
        "ar1" => {
            let rho = *nums.first().ok_or_else(|| {
                Error::Config("mark model 'ar1:rho' requires the coefficient".into())
            })?;
            // default innovation keeps unit stationary variance
            let sd = nums
                .get(1)
                .copied()
                .unwrap_or_else(|| (1.0 - rho * rho).max(0.0).sqrt());
            MarkKind::Ar1Gaussian {
                rho,
                innovation_sd: sd,
            }
        }
        "ou" => {
            let kappa = *nums.first().ok_or_else(|| {
                Error::Config("mark model 'ou:kappa' requires the mean-reversion rate".into())
            })?;
            MarkKind::OuSampled {
                kappa,
                stationary_sd: nums.get(1).copied().unwrap_or(1.0),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown mark model '{other}' (expected iid-gauss | iid-exp | ar1:rho | ou:kappa)"
            )))
        }
    };
    MarkModel::new(kind, dim)
}

fn parse_initial(raw: &str) -> Result<InitialCondition> {
    match raw {
        "baseline" => Ok(InitialCondition::Baseline),
        "stationary-mean" => Ok(InitialCondition::StationaryMean),
        other => Err(Error::Config(format!(
            "unknown initial intensity '{other}' (expected baseline | stationary-mean)"
        ))),
    }
}

fn read_events(path: &Path, horizon: Option<f64>) -> Result<crate::model::EventStream> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_events_json(path, horizon),
        _ => read_events_csv(path, horizon),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .unwrap_or_default()
        .to_string_lossy()
        .to_string();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Build a simulation configuration from flags and config file.
fn resolve_sim_config(
    model: &ModelFlags,
    psi_flag: Option<&str>,
    resolver: &mut Resolver,
) -> Result<SimConfig> {
    let eta = resolver.require_f64("eta", model.eta)?;
    let branch = resolver.require_f64("branch", model.branch)?;
    let alpha = resolver.require_f64("alpha", model.alpha)?;
    let horizon = resolver.require_f64("T", model.horizon)?;
    let params = HawkesParams::new(eta, branch, alpha)?;

    let mark_dim = resolver.usize_value("mark-dim", None, 1)?;
    let boost_raw = resolver
        .str_value("boost", model.boost.as_deref(), Some("linear"))?
        .expect("boost has a default");
    let boost = parse_boost(&boost_raw, mark_dim)?;
    let mark_raw = resolver
        .str_value("mark-model", model.mark_model.as_deref(), Some("iid-gauss"))?
        .expect("mark model has a default");
    let mark_model = parse_mark_model(&mark_raw, mark_dim)?;

    let psi = match resolver.str_value("psi", psi_flag, None)? {
        Some(raw) => parse_f64_list(&raw, "psi")?,
        None => vec![0.0; boost.psi_dim()],
    };

    let mut cfg = SimConfig::new(params, boost, psi, mark_model, horizon);
    if let Some(b) = resolver.f64_value("burn-in", model.burn_in, None)? {
        cfg.burn_in = b;
    } else {
        resolver
            .echo
            .insert("burn-in".into(), format_g17(cfg.burn_in));
    }
    cfg.seed = resolver.u64_value("seed", model.seed, 0)?;
    if let Some(raw) = resolver.str_value("initial", None, Some("baseline"))? {
        cfg.initial_intensity = parse_initial(&raw)?;
    }
    if let Some(g) = resolver.f64_value("g-bound", None, Some(1.0))? {
        cfg.g_bound = g;
    }
    if let Some(c) = resolver.f64_value("intensity-cap-factor", None, Some(1e6))? {
        cfg.intensity_cap_factor = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut resolver = Resolver::new(args.model.config.as_ref())?;
    let cfg = resolve_sim_config(&args.model, args.psi.as_deref(), &mut resolver)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("events.csv"));
    resolver
        .echo
        .insert("out".into(), out.display().to_string());

    let stream = simulate(&cfg)?;
    write_events_csv(&out, &stream)?;
    let summary = SimSummary {
        n_events: stream.len(),
        horizon: stream.horizon(),
        mean_rate: stream.len() as f64 / stream.horizon(),
        events_path: out.display().to_string(),
    };
    let artifact = RunArtifact {
        kind: ArtifactKind::SimOutput,
        payload: summary,
        provenance: Provenance::new("simulate", resolver.echo.clone(), Some(cfg.seed)),
    };
    write_artifact(&sibling(&out, "meta.json"), &artifact)?;
    println!(
        "simulated {} events on (0, {}] -> {}",
        stream.len(),
        stream.horizon(),
        out.display()
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let mut resolver = Resolver::new(args.config.as_ref())?;
    let events = args
        .events
        .clone()
        .or_else(|| resolver.file.get("events").map(PathBuf::from))
        .ok_or_else(|| Error::Config("missing required setting 'events'".into()))?;
    resolver
        .echo
        .insert("events".into(), events.display().to_string());
    let horizon = resolver.f64_value("horizon", args.horizon, None)?;
    let stream = read_events(&events, horizon)?;

    let fit = fit_qmle(&stream, &FitOptions::default())?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "termination {:?}",
            fit.termination
        )));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("fit.json"));
    let artifact = RunArtifact {
        kind: ArtifactKind::FitOutput,
        payload: fit.clone(),
        provenance: Provenance::new("fit", resolver.echo.clone(), None),
    };
    write_artifact(&out, &artifact)?;
    println!(
        "fit: eta = {:.6}, branch = {:.6}, alpha = {:.6}, loglik = {:.6} -> {}",
        fit.params.eta,
        fit.params.theta_branch,
        fit.params.alpha,
        fit.loglik,
        out.display()
    );
    Ok(())
}

fn cmd_score_test(args: &ScoreTestArgs) -> Result<()> {
    let mut resolver = Resolver::new(args.config.as_ref())?;
    let events = args
        .events
        .clone()
        .or_else(|| resolver.file.get("events").map(PathBuf::from))
        .ok_or_else(|| Error::Config("missing required setting 'events'".into()))?;
    resolver
        .echo
        .insert("events".into(), events.display().to_string());
    let horizon = resolver.f64_value("horizon", args.horizon, None)?;
    let stream = read_events(&events, horizon)?;

    let boost_raw = resolver
        .str_value("boost", args.boost.as_deref(), Some("linear"))?
        .expect("boost has a default");
    let spec = parse_boost(&boost_raw, stream.mark_dim().max(1))?;

    let fit = fit_qmle(&stream, &FitOptions::default())?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!(
            "termination {:?}",
            fit.termination
        )));
    }
    let test = score_test_with_fit(&stream, &spec, &fit)?;

    if let Some(qq) = &args.qq_out {
        let mut rescaled = time_rescale(&stream, &fit.params)?;
        for v in rescaled.iter_mut() {
            *v *= 2.0; // doubled unit exponentials are chi-squared(2)
        }
        rescaled.sort_by(f64::total_cmp);
        let n = rescaled.len();
        let mut csv = String::from("empirical_quantile,chi2_quantile\n");
        for (i, v) in rescaled.iter().enumerate() {
            let p = (i as f64 + 0.5) / n as f64;
            csv.push_str(&format!(
                "{},{}\n",
                format_g17(*v),
                format_g17(chi2_quantile(p, 2)?)
            ));
        }
        std::fs::write(qq, csv)?;
        resolver
            .echo
            .insert("qq-out".into(), qq.display().to_string());
    }

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("score_test.json"));
    let artifact = RunArtifact {
        kind: ArtifactKind::ScoreTestOutput,
        payload: ScoreTestOutput {
            fit,
            test: test.clone(),
        },
        provenance: Provenance::new("score-test", resolver.echo.clone(), None),
    };
    write_artifact(&out, &artifact)?;
    println!(
        "score test: Q = {:.6}, df = {}, p = {:.6} -> {}",
        test.statistic,
        test.df,
        test.p_value,
        out.display()
    );
    Ok(())
}

fn resolve_mc_config(args: &McArgs, resolver: &mut Resolver, power: bool) -> Result<McConfig> {
    let sim = resolve_sim_config(&args.model, None, resolver)?;
    let replicates = resolver.usize_value("replicates", args.replicates, 1000)?;
    let master_seed = sim.seed;
    let boost = sim.boost;
    let mut cfg = McConfig::new(sim, replicates, boost).with_master_seed(master_seed);
    if let Some(raw) = resolver.str_value("levels", None, None)? {
        cfg.nominal_levels = parse_f64_list(&raw, "levels")?;
    }
    if power {
        let gamma_raw = resolver
            .str_value("gamma", args.gamma.as_deref(), None)?
            .ok_or_else(|| Error::Config("mc-power requires 'gamma'".into()))?;
        cfg.gamma = parse_f64_list(&gamma_raw, "gamma")?;
    }
    Ok(cfg)
}

fn write_pvalue_histogram(path: &Path, report: &McReport) -> Result<()> {
    const BINS: usize = 20;
    let mut counts = [0usize; BINS];
    for rec in &report.records {
        let b = ((rec.p_value * BINS as f64) as usize).min(BINS - 1);
        counts[b] += 1;
    }
    let mut csv = String::from("bin_lo,bin_hi,count\n");
    for (b, c) in counts.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{c}\n",
            format_g17(b as f64 / BINS as f64),
            format_g17((b + 1) as f64 / BINS as f64)
        ));
    }
    std::fs::write(path, csv)?;
    Ok(())
}

fn write_power_curve(path: &Path, report: &McReport) -> Result<()> {
    let ncp = report.ncp.unwrap_or(0.0);
    let mut csv = String::from("gamma_scale,ncp,level,predicted_power\n");
    for step in 0..=20 {
        let scale = step as f64 * 0.1;
        let scaled_ncp = scale * scale * ncp;
        for rate in &report.empirical_rates {
            let crit = chi2_quantile(1.0 - rate.level, report.df)?;
            let power = 1.0 - crate::dist::noncentral_chi2_cdf(crit, report.df, scaled_ncp)?;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                format_g17(scale),
                format_g17(scaled_ncp),
                format_g17(rate.level),
                format_g17(power)
            ));
        }
    }
    std::fs::write(path, csv)?;
    Ok(())
}

fn cmd_mc(args: &McArgs, power: bool) -> Result<()> {
    let mut resolver = Resolver::new(args.model.config.as_ref())?;
    let cfg = resolve_mc_config(args, &mut resolver, power)?;
    let default_name = if power {
        "mc_power.json"
    } else {
        "mc_null.json"
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(default_name));
    resolver
        .echo
        .insert("out".into(), out.display().to_string());

    let report = if power {
        let omega = match resolver.str_value("omega-from", None, None)? {
            Some(path) => {
                let artifact: RunArtifact<McReport> = read_artifact(Path::new(&path))?;
                Some(artifact.payload.omega_hat)
            }
            None => None,
        };
        run_local_power(&cfg, omega.as_deref())?
    } else {
        run_null_calibration(&cfg)?
    };

    let artifact = RunArtifact {
        kind: ArtifactKind::McReportOutput,
        payload: report.clone(),
        provenance: Provenance::new(
            if power { "mc-power" } else { "mc-null" },
            resolver.echo.clone(),
            Some(cfg.master_seed),
        ),
    };
    write_artifact(&out, &artifact)?;
    write_pvalue_histogram(&sibling(&out, "pvalues.csv"), &report)?;
    if power {
        write_power_curve(&sibling(&out, "power_curve.csv"), &report)?;
    }
    for rate in &report.empirical_rates {
        println!(
            "level {:.3}: empirical rate {:.4} (se {:.4})",
            rate.level, rate.rate, rate.std_error
        );
    }
    println!(
        "KS distance to reference law: {:.4}; {} records, {} failures -> {}",
        report.ks_distance,
        report.records.len(),
        report.failures.len(),
        out.display()
    );
    if !report.valid {
        return Err(Error::NonConvergence(format!(
            "{} of {} replicates failed (report flagged invalid)",
            report.failures.len(),
            cfg.replicates
        )));
    }
    Ok(())
}

fn print_error_json(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": { "kind": kind, "message": message } })
    );
}

/// Parse arguments and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            print_error_json("config", &e.to_string());
            return 1;
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::ScoreTest(args) => cmd_score_test(args),
        Command::McNull(args) => cmd_mc(args, false),
        Command::McPower(args) => cmd_mc(args, true),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            print_error_json(e.kind(), &e.to_string());
            e.exit_code()
        }
    }
}
