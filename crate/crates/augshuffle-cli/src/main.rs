//! Command-line driver: runs experiments and writes plot-ready CSV files.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use augshuffle::analysis::write_predictor_report;
use augshuffle::attacks::write_attack_report;
use augshuffle::config::{ExperimentConfig, Manifest, ProtocolId};
use augshuffle::dummy::{certify_dp, DummyCountDistribution, DummyKind};
use augshuffle::experiment::{
    attack_rows, load_inputs, predict, run_sweep, run_trial, single_stage_dist, two_stage_config,
    SweepRow, TrialMetrics,
};
use augshuffle::replay::Fixture;
use augshuffle::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "augshuffle",
    version,
    about = "Augmented shuffle DP experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration or a JSON manifest from an earlier run.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides a configuration key, e.g. `--set budget.eps=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file stem; `-` writes to standard output.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the configured protocol and reports per-trial metrics.
    Run(Common),
    /// Sweeps one key and reports the mean metric per value.
    Sweep(Common),
    /// Runs the poisoning harness.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Fake-user fractions; defaults to `attack.lambda`.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
    /// Prints the calibrated dummy distributions as JSON.
    Calibrate(Common),
    /// Computes the tight δ of a dummy-count distribution.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Distribution as JSON, e.g. `{"kind":"binomial","m":100,"p":0.5}`.
        #[arg(long)]
        dist: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Compares analytic predictions with measurements.
    Predict(Common),
    /// Replays a fixture with fixed shuffler decisions.
    Replay { fixture: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Replay(_) => 2,
        Error::Infeasible(_) => 3,
        Error::Dataset { .. } | Error::InvalidDataset(_) => 4,
        _ => 1,
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let text = match &c.config {
        Some(p) => {
            fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => String::new(),
    };
    let mut overrides = c
        .set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {kv:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(out) = &c.out {
        overrides.push(("output".into(), format!("{out:?}")));
    }
    ExperimentConfig::load(&text, &overrides)
}

/// Writes `body` behind a config-hash line, plus the manifest for file outputs.
fn emit(command: &str, cfg: &ExperimentConfig, body: &[u8]) -> Result<()> {
    let mut doc = format!("# config_hash: {}\n", cfg.hash()).into_bytes();
    doc.extend_from_slice(body);
    if cfg.output == "-" {
        io::stdout().write_all(&doc)?;
        return Ok(());
    }
    fs::write(format!("{}.csv", cfg.output), doc)?;
    fs::write(
        format!("{}.json", cfg.output),
        Manifest::new(command, cfg).to_json() + "\n",
    )?;
    Ok(())
}

fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    let mut out = String::from("x,mean,stderr\n");
    for r in rows {
        out += &format!("{},{},{}\n", r.x, r.mean, r.stderr);
    }
    out.into_bytes()
}

fn trial_csv(rows: &[TrialMetrics]) -> Vec<u8> {
    let mut out = String::from("trial,mse,mse_psi,c_us,c_sd,c_tot\n");
    for (t, m) in rows.iter().enumerate() {
        out += &format!(
            "{t},{},{},{},{},{}\n",
            m.mse, m.mse_psi, m.c_us, m.c_sd, m.c_tot
        );
    }
    out.into_bytes()
}

fn calibrate(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    let p = &cfg.protocol;
    if !p.kind.is_two_stage() {
        let dist = single_stage_dist(cfg)?;
        return Ok(serde_json::json!({
            "protocol": p.kind,
            "dist": dist.kind(),
            "mean": dist.mean(),
            "variance": dist.variance(),
        }));
    }
    let inputs = load_inputs(cfg)?;
    let domain = match p.kind {
        ProtocolId::Kv => augshuffle::protocols::kv_domain(inputs.sampled.d(), p.kappa),
        ProtocolId::KvPair => 2 * augshuffle::protocols::kv_domain(inputs.sampled.d(), p.kappa),
        _ => inputs.sampled.d(),
    };
    let f = two_stage_config(cfg, inputs.sampled.n(), domain)?;
    Ok(serde_json::json!({
        "protocol": p.kind,
        "d1": f.d1.kind(),
        "d2": f.d2.kind(),
        "mu1": f.d1.mean(),
        "mu2": f.d2.mean(),
        "b": f.b,
        "l": f.l,
    }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let inputs = load_inputs(&cfg)?;
            let rows = (0..cfg.trials)
                .map(|t| run_trial(&cfg, &inputs, t))
                .collect::<Result<Vec<_>>>()?;
            emit("run", &cfg, &trial_csv(&rows))
        }
        Command::Sweep(c) => {
            let cfg = load_config(&c)?;
            emit("sweep", &cfg, &sweep_csv(&run_sweep(&cfg)?))
        }
        Command::Attack { common, lambda } => {
            let cfg = load_config(&common)?;
            let lambdas = if lambda.is_empty() {
                vec![cfg.attack.lambda]
            } else {
                lambda
            };
            let mut buf = Vec::new();
            write_attack_report(&mut buf, &attack_rows(&cfg, &lambdas)?)?;
            emit("attack", &cfg, &buf)
        }
        Command::Calibrate(c) => {
            let cfg = load_config(&c)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&calibrate(&cfg)?).expect("json")
            );
            Ok(())
        }
        Command::Certify {
            common,
            dist,
            beta,
            eps,
        } => {
            let cfg = load_config(&common)?;
            let d = match dist {
                Some(s) => {
                    let k: DummyKind = serde_json::from_str(&s)
                        .map_err(|e| Error::Config(format!("--dist: {e}")))?;
                    DummyCountDistribution::new(k)?
                }
                None => single_stage_dist(&cfg)?,
            };
            let beta = beta.unwrap_or(cfg.protocol.beta);
            let eps = eps.unwrap_or(cfg.budget()?.per_mechanism().eps);
            if !(beta > 0.0 && beta <= 1.0) || eps < 0.0 {
                return Err(Error::Config(format!(
                    "beta={beta} and eps={eps} must satisfy 0 < beta <= 1, eps >= 0"
                )));
            }
            let delta = certify_dp(&d, beta, eps);
            let v =
                serde_json::json!({ "dist": d.kind(), "beta": beta, "eps": eps, "delta": delta });
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            Ok(())
        }
        Command::Predict(c) => {
            let cfg = load_config(&c)?;
            let mut buf = Vec::new();
            write_predictor_report(&mut buf, &predict(&cfg)?)?;
            emit("predict", &cfg, &buf)
        }
        Command::Replay { fixture } => {
            let text = fs::read_to_string(&fixture)
                .map_err(|e| Error::Replay(format!("{}: {e}", fixture.display())))?;
            let f = Fixture::parse(&text)?;
            let r = f.replay()?;
            let v = serde_json::json!({
                "name": f.name,
                "selected": r.output.selected(),
                "estimate": r.output.frequencies()?.to_dense(),
                "replaced": r.output.stats.replaced,
                "mismatches": r.mismatches,
            });
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            if r.passed() {
                Ok(())
            } else {
                Err(Error::Protocol(format!(
                    "{} expectation(s) failed",
                    r.mismatches.len()
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
