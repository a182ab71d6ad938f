//! `privcon` command-line driver.
//!
//! Exit codes: 0 success or converged run, 1 runtime or I/O failure,
//! 2 invalid arguments or scenario, 3 run stopped at `max_rounds` without
//! converging.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use privcon::bench::{bench_exchange, BenchError};
use privcon::consensus::Rule;
use privcon::network::{eavesdrop_collect, run, RunError, RunTrace, Scenario, ScenarioError};
use privcon::paillier::{KeyPair, PaillierError};
use privcon::privacy_analysis::{
    infer_leaf_initial_state, ledger_for_configuration, Configuration, PrivacyError,
};
use privcon::rng::{derive_stream, Purpose};
use privcon::scenarios;

#[derive(Parser)]
#[command(name = "privcon", version, about = "Privacy-preserving consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Paillier key pair.
    Keygen {
        #[arg(long, default_value_t = 256)]
        key_bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for `paillier.key` and `paillier.pub`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a scenario and write `trace.csv` and `summary.json`.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an attack against a scenario and write `report.json`.
    AttackDemo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        attack: Attack,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Time full directional exchanges.
    Bench {
        #[arg(long, default_value_t = 256)]
        key_bits: u64,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to `<out>/bench.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Paillier key size.
    #[arg(long)]
    key_bits: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Attack {
    Leaf,
    Tamper,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen { key_bits, seed, out } => keygen(key_bits, seed, &out),
        Command::Run { scenario, out } => run_scenario(&scenario, &out),
        Command::AttackDemo {
            scenario,
            attack,
            out,
        } => attack_demo(&scenario, attack, &out),
        Command::Bench {
            key_bits,
            reps,
            seed,
            out,
        } => bench(key_bits, reps, seed, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn keygen(key_bits: u64, seed: u64, out: &Path) -> anyhow::Result<ExitCode> {
    let mut rng = derive_stream(seed, Purpose::PaillierKey, &[0]);
    let pair = KeyPair::generate(key_bits, &mut rng).map_err(|e| match e {
        PaillierError::InvalidArgument(msg) => config_error(msg),
        other => anyhow!(other),
    })?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let private = out.join("paillier.key");
    let public = out.join("paillier.pub");
    fs::write(&private, pair.to_bytes()).with_context(|| format!("writing {}", private.display()))?;
    fs::write(&public, pair.public.to_bytes())
        .with_context(|| format!("writing {}", public.display()))?;
    emit(&format!(
        "{} bits, fingerprint {}\n{}\n{}",
        pair.public.bit_length(),
        pair.public.fingerprint(),
        private.display(),
        public.display()
    ));
    Ok(ExitCode::SUCCESS)
}

fn load_scenario(args: &ScenarioArgs) -> anyhow::Result<Scenario> {
    let path = Path::new(&args.scenario);
    let loaded = if path.exists() {
        Scenario::from_path(path)
    } else if let Some(bundled) = scenarios::load(&args.scenario) {
        bundled
    } else {
        let names: Vec<&str> = scenarios::names().collect();
        return Err(config_error(format!(
            "no scenario file or bundled scenario named {:?} (bundled: {})",
            args.scenario,
            names.join(", ")
        )));
    };
    let mut scenario = loaded.map_err(scenario_error)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(bits) = args.key_bits {
        scenario.keys.bits = bits;
    }
    scenario.validate().map_err(scenario_error)?;
    Ok(scenario)
}

fn scenario_error(e: ScenarioError) -> anyhow::Error {
    match e {
        ScenarioError::Io { .. } => anyhow!(e),
        other => config_error(other.to_string()),
    }
}

fn execute(scenario: &Scenario) -> anyhow::Result<RunTrace> {
    run(scenario).map_err(|e| match e {
        RunError::Scenario(e) => scenario_error(e),
        other => anyhow!(other),
    })
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_trace(trace: &RunTrace, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("trace.csv");
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(file);
    trace.write_csv(&mut w)?;
    w.flush()?;
    write_json(&out.join("summary.json"), &trace.summary())
}

fn run_scenario(args: &ScenarioArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(args)?;
    let trace = execute(&scenario)?;
    write_trace(&trace, out)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    emit(&serde_json::to_string_pretty(&trace.summary())?);
    Ok(if trace.converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

/// Value the rule should converge to from the initial states.
fn consensus_target(s: &Scenario) -> f64 {
    let x = &s.initial_states;
    match s.rule.rule {
        Rule::Average | Rule::WeightedAverage => {
            let w = s.node_weights();
            x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / w.iter().sum::<f64>()
        }
        Rule::Max => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Rule::Min => x.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn attack_demo(args: &ScenarioArgs, attack: Attack, out: &Path) -> anyhow::Result<ExitCode> {
    let scenario = load_scenario(args)?;
    let report = match attack {
        Attack::Leaf => leaf_report(&scenario, out)?,
        Attack::Tamper => tamper_report(&scenario, out)?,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("report.json"), &report)?;
    emit(&serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn leaf_report(scenario: &Scenario, out: &Path) -> anyhow::Result<Value> {
    let observer = *scenario
        .adversary
        .curious
        .iter()
        .next()
        .ok_or_else(|| config_error("leaf attack needs a curious node in adversary.curious"))?;
    let topology = scenario.validate().map_err(scenario_error)?.topology;
    let target = (0..scenario.n_nodes)
        .map(privcon::NodeId::from)
        .find(|&a| a != observer && topology.all_neighbors(a) == [observer].into())
        .ok_or_else(|| config_error(format!("no node has {observer} as its only neighbor")))?;

    let trace = execute(scenario)?;
    write_trace(&trace, out)?;
    let view = eavesdrop_collect(&trace, &[observer]).map_err(|e| config_error(e.to_string()))?;
    let recovered = infer_leaf_initial_state(&view, target).map_err(|e| match e {
        PrivacyError::Contract(msg) => config_error(msg),
        other => anyhow!(other),
    })?;
    let truth = scenario.initial_states[target.index()];
    let last_round = trace.rounds_run().saturating_sub(1);
    Ok(json!({
        "attack": "leaf",
        "configuration": Configuration::Leaf,
        "observer": observer,
        "target": target,
        "ledger": ledger_for_configuration(Configuration::Leaf, last_round),
        "observations": view.num_observations(),
        "rounds": trace.rounds_run(),
        "converged": trace.converged(),
        "final_spread": trace.summary().final_spread,
        "recovered": recovered,
        "truth": truth,
        "error": (recovered - truth).abs(),
        "assumptions": ["the adversary knows the network size n"],
    }))
}

fn tamper_report(scenario: &Scenario, out: &Path) -> anyhow::Result<Value> {
    if scenario.adversary.tamper.is_empty() {
        return Err(config_error("tamper attack needs at least one adversary.tamper entry"));
    }
    let target = consensus_target(scenario);
    let mut runs = serde_json::Map::new();
    for signatures in [false, true] {
        let mut s = scenario.clone();
        s.adversary.signatures = signatures;
        let trace = execute(&s)?;
        let label = if signatures { "signed" } else { "unsigned" };
        write_trace(&trace, &out.join(label))?;
        let injected = trace.tamper_events.len();
        let detected = trace.rejections.len();
        runs.insert(
            label.to_string(),
            json!({
                "final_value": trace.final_value(),
                "deviation": (trace.final_value() - target).abs(),
                "converged": trace.converged(),
                "rounds": trace.rounds_run(),
                "injected": injected,
                "detected": detected,
                "detection_rate": if injected == 0 { 1.0 } else { detected as f64 / injected as f64 },
            }),
        );
    }
    Ok(json!({
        "attack": "tamper",
        "target_value": target,
        "tolerance": scenario.tolerance,
        "tamper": scenario.adversary.tamper,
        "runs": runs,
    }))
}

fn bench(key_bits: u64, reps: usize, seed: u64, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let report = bench_exchange(key_bits, reps, seed).map_err(|e| match e {
        BenchError::TooFewRepetitions(_) | BenchError::Keys(PaillierError::InvalidArgument(_)) => {
            config_error(e.to_string())
        }
        other => anyhow!(other),
    })?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("bench.json"), &report)?;
    }
    emit(&serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}
