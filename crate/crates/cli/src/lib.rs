//! `domar` command-line front end.

pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod manifest;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use domar_core::tax_optimizer::{SweepCase, SweepParam};

use crate::commands::Context;
use crate::config::{parse_override, Config};
use crate::error::{CliError, Diagnostic};
use crate::manifest::{Output, Override, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "domar", version, about = "Optimal flat taxes with idiosyncratic capital-return risk")]
pub struct Cli {
    /// TOML configuration file layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for Monte Carlo checks.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Configuration override `key=value`; dotted keys reach nested tables.
    #[arg(long = "set", global = true, value_parser = parse_override)]
    pub overrides: Vec<(String, String)>,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Param {
    Gamma,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    NoConsumptionTax,
    Full,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discretized ability process.
    Calibrate,
    /// Stationary equilibrium, wealth distribution and wealth shares.
    Equilibrium,
    /// Revenue-preserving frontier without a consumption tax.
    Frontier,
    /// Welfare-maximizing mix of all three taxes.
    Optimize,
    /// Re-optimizes over a grid of risk aversion or return volatility.
    Sweep {
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
        #[arg(long, value_enum, default_value = "no-consumption-tax")]
        case: Case,
    },
    /// Perfect-foresight transition to a new tax mix, with vote shares.
    Transition,
    /// Monte Carlo checks of the analytic results.
    Verify,
    /// Rebuilds figure tables from artifacts already in the output directory.
    Plot {
        /// Figure id (fig2a … fig11f), a group (fig4), or `all`.
        #[arg(long = "figure", required = true)]
        figures: Vec<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Equilibrium => "equilibrium",
            Command::Frontier => "frontier",
            Command::Optimize => "optimize",
            Command::Sweep { .. } => "sweep",
            Command::Transition => "transition",
            Command::Verify => "verify",
            Command::Plot { .. } => "plot",
        }
    }

    /// Name shared by the command's main artifact and its manifest file.
    pub fn stem(&self) -> String {
        match self {
            Command::Sweep { param, case, .. } => commands::sweep_artifact_name(sweep_case(*case), sweep_param(*param)),
            Command::Calibrate => "ability".into(),
            other => other.name().into(),
        }
    }

    fn arguments(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        match self {
            Command::Sweep { param, from, to, step, case } => {
                m.insert("param".into(), sweep_param(*param).as_str().into());
                m.insert("from".into(), from.to_string());
                m.insert("to".into(), to.to_string());
                m.insert("step".into(), step.to_string());
                m.insert("case".into(), format!("{:?}", sweep_case(*case)));
            }
            Command::Plot { figures } => {
                m.insert("figures".into(), figures.join(","));
            }
            _ => {}
        }
        m
    }
}

fn sweep_param(p: Param) -> SweepParam {
    match p {
        Param::Gamma => SweepParam::Gamma,
        Param::Sigma => SweepParam::Sigma,
    }
}

fn sweep_case(c: Case) -> SweepCase {
    match c {
        Case::NoConsumptionTax => SweepCase::NoConsumptionTax,
        Case::Full => SweepCase::Full,
    }
}

impl Cli {
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command.name().into(),
            config_path: self.config.as_ref().map(|p| p.display().to_string()),
            out_dir: self.out.display().to_string(),
            seed: self.seed,
            overrides: self.overrides.iter().map(|(k, v)| Override { key: k.clone(), value: v.clone() }).collect(),
            arguments: self.command.arguments(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

fn plot(dir: &std::path::Path, ids: &[String]) -> Result<Vec<String>, CliError> {
    let mut all = Vec::new();
    for id in ids {
        if id == "all" {
            // Every figure whose artifact is present.
            for f in figures::FIGURES.iter().filter(|f| !["fig2", "fig4", "fig7", "fig11"].contains(f)) {
                if dir.join(figures::source_artifact(f).unwrap()).exists() {
                    all.extend(figures::emit(f, dir)?);
                }
            }
        } else {
            all.extend(figures::emit(id, dir)?);
        }
    }
    Ok(all)
}

fn execute(cli: &Cli, hash: &mut Option<String>) -> Result<(), CliError> {
    if let Command::Plot { figures } = &cli.command {
        let written = plot(&cli.out, figures)?;
        println!("{}", serde_json::json!({ "status": "ok", "written": written }));
        return Ok(());
    }
    let manifest = cli.manifest();
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    let out = Output::create(&manifest, &cfg, &cli.command.stem())?;
    *hash = Some(out.hash.clone());
    let ctx = Context { cfg, out, seed: cli.seed };
    match &cli.command {
        Command::Calibrate => commands::calibrate(&ctx)?,
        Command::Equilibrium => commands::equilibrium(&ctx)?,
        Command::Frontier => commands::frontier(&ctx)?,
        Command::Optimize => commands::optimize(&ctx)?,
        Command::Sweep { param, from, to, step, case } => {
            commands::sweep(&ctx, sweep_param(*param), *from, *to, *step, sweep_case(*case))?
        }
        Command::Transition => commands::transition(&ctx)?,
        Command::Verify => commands::verify(&ctx)?,
        Command::Plot { .. } => unreachable!(),
    }
    println!(
        "{}",
        serde_json::json!({ "status": "ok", "command": manifest.command, "out": manifest.out_dir, "manifest_hash": ctx.out.hash })
    );
    Ok(())
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let error_path = cli.out.join("error.json");
    let _ = std::fs::remove_file(&error_path);
    let mut hash = None;
    match execute(&cli, &mut hash) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let diag = Diagnostic {
                command: cli.command.name(),
                exit_code: code,
                kind: e.kind(),
                message: e.to_string(),
                manifest_hash: hash.as_deref(),
            };
            let text = serde_json::to_string_pretty(&diag).unwrap_or_default();
            eprintln!("{text}");
            if std::fs::create_dir_all(&cli.out).is_ok() {
                let _ = std::fs::write(&error_path, text + "\n");
            }
            code
        }
    }
}
