//! Command-line front end. Each command writes its outputs plus a
//! `manifest.json` into `--out`; `replay` reruns a manifest and checks that
//! every output digest matches.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::capacity::CodeSpec;
use crate::closed_form::{design_2x2, design_3x3, natural_power, validate_perfect};
use crate::error::{Error, Result};
use crate::formats::{self, OutputSet, RunManifest, View};
use crate::optimizer::{optimize_gain_matrix, Optimized, OptimizerConfig, ShortfallReport};
use crate::power_alloc::{allocate_per_layer, verify_allocation, PowerAllocation};
use crate::simulator::{simulate_dithered_repetition, ChannelGain, Dither, SimConfig};
use crate::tables;

const DEFAULT_SEED: &str = "24301";

/// Design, optimize and check layered rateless codes for Gaussian channels.
#[derive(Debug, Parser)]
#[command(name = "rateless", version)]
pub struct Cli {
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Closed-form perfect code for 2 or 3 blocks.
    Design(DesignArgs),
    /// Numerically optimized gain matrix.
    Optimize(OptimizeArgs),
    /// Per-layer powers for dithered repetition.
    Allocate(AllocateArgs),
    /// Regenerate a reference table.
    Tables {
        #[command(subcommand)]
        which: Table,
    },
    /// Monte Carlo post-combining SINR against the analytic value.
    Simulate(SimulateArgs),
    /// Rerun a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Size {
    #[value(name = "2x2")]
    #[serde(rename = "2x2")]
    TwoByTwo,
    #[value(name = "3x3")]
    #[serde(rename = "3x3")]
    ThreeByThree,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct DesignArgs {
    #[arg(long, value_enum)]
    pub size: Size,
    /// Ceiling rate, b/s/Hz.
    #[arg(long)]
    pub rate: f64,
    /// Per-block power, linear. Defaults to `2^R - 1`.
    #[arg(long)]
    pub power: Option<f64>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub rate: f64,
    #[arg(long)]
    pub layers: usize,
    #[arg(long)]
    pub blocks: usize,
    /// Defaults to `2^R - 1`.
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long, env = "RATELESS_SEED", default_value = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    /// Success threshold on the max shortfall, percent.
    #[arg(long)]
    pub target_pct: Option<f64>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct AllocateArgs {
    #[arg(long)]
    pub per_layer_rate: f64,
    #[arg(long)]
    pub layers: usize,
    #[arg(long)]
    pub blocks: usize,
    #[arg(long)]
    pub power: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_var: f64,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    /// Layering loss in dB against layers and blocks.
    Loss {
        #[arg(long, default_value_t = 5.0)]
        rate: f64,
        #[arg(long, default_value_t = 9)]
        max_layers: usize,
        #[arg(long, default_value_t = 10)]
        max_blocks: usize,
    },
    /// Shortfall of the published 10 x 3 design.
    Shortfall,
    /// Per-layer powers.
    Powers {
        #[arg(long, default_value_t = 2.0)]
        per_layer_rate: f64,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value_t = 5)]
        blocks: usize,
        #[arg(long, default_value_t = 255.0)]
        power: f64,
    },
    /// Efficiency lower bounds against base-code rate.
    Efficiency {
        #[arg(long, default_value_t = 4.0)]
        max_rate: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DitherArg {
    Binary,
    UnitPhase,
    Off,
}

impl From<DitherArg> for Dither {
    fn from(d: DitherArg) -> Self {
        match d {
            DitherArg::Binary => Dither::Binary,
            DitherArg::UnitPhase => Dither::UnitPhase,
            DitherArg::Off => Dither::Off,
        }
    }
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// PowerAllocation JSON, as written by `allocate`.
    #[arg(long)]
    pub allocation: PathBuf,
    /// Number of blocks to combine; every block by default.
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub symbols: usize,
    #[arg(long, env = "RATELESS_SEED", default_value = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "binary")]
    pub dither: DitherArg,
    /// Fixed `|alpha|^2` for every row instead of the thresholds.
    #[arg(long)]
    pub gain_sq: Option<f64>,
}

#[derive(Debug, Clone, clap::Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// What a finished command reports back to the shell.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: String,
    pub exit_code: i32,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome {
            status: "ok".into(),
            exit_code: 0,
            summary,
        }
    }

    fn failed(status: &str, summary: String) -> Self {
        Outcome {
            status: status.into(),
            exit_code: 2,
            summary,
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design(_) => "design",
            Command::Optimize(_) => "optimize",
            Command::Allocate(_) => "allocate",
            Command::Tables { .. } => "tables",
            Command::Simulate(_) => "simulate",
            Command::Replay(_) => "replay",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Optimize(a) => Some(a.seed),
            Command::Simulate(a) => Some(a.seed),
            _ => None,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Replay(a) => replay(&a.manifest, &cli.out),
        cmd => execute(cmd, &cli.out).map(|(outcome, _)| outcome),
    }
}

/// Runs one command, writes its files and manifest, and returns the manifest.
pub fn execute(cmd: &Command, out: &Path) -> Result<(Outcome, RunManifest)> {
    let mut files = OutputSet::default();
    let outcome = match cmd {
        Command::Design(a) => design(a, &mut files)?,
        Command::Optimize(a) => optimize(a, &mut files)?,
        Command::Allocate(a) => allocate(a, &mut files)?,
        Command::Tables { which } => table(which, &mut files)?,
        Command::Simulate(a) => simulate(a, &mut files)?,
        Command::Replay(_) => return Err(Error::InvalidSpec("a manifest cannot replay another replay".into())),
    };
    let manifest = RunManifest {
        command: cmd.name().into(),
        params: serde_json::to_value(cmd).expect("arguments serialize"),
        seed: cmd.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: outcome.status.clone(),
        outputs: files.digests(),
    };
    files.write(out, &manifest)?;
    Ok((outcome, manifest))
}

fn replay(path: &Path, out: &Path) -> Result<Outcome> {
    let recorded = RunManifest::read(path)?;
    let cmd: Command = serde_json::from_value(recorded.params.clone()).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: format!("unreadable params: {e}"),
    })?;
    let (_, fresh) = execute(&cmd, out)?;
    let mismatched: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|(name, digest)| fresh.outputs.get(*name) != Some(*digest))
        .map(|(name, _)| name)
        .collect();
    if mismatched.is_empty() && fresh.outputs.len() == recorded.outputs.len() {
        Ok(Outcome::ok(format!("replayed {}: {} outputs identical", recorded.command, fresh.outputs.len())))
    } else {
        Ok(Outcome::failed(
            "digest_mismatch",
            format!("replayed {}: outputs differ: {mismatched:?}", recorded.command),
        ))
    }
}

fn add_shortfall(files: &mut OutputSet, report: &ShortfallReport) {
    files.add("shortfall.csv", formats::shortfall_csv(report, View::Full));
    files.add("shortfall_rounded.csv", formats::shortfall_csv(report, View::Rounded));
}

fn design(a: &DesignArgs, files: &mut OutputSet) -> Result<Outcome> {
    let power = a.power.unwrap_or_else(|| natural_power(a.rate));
    let (g, n) = match a.size {
        Size::TwoByTwo => (design_2x2(a.rate, power)?, 2),
        Size::ThreeByThree => (design_3x3(a.rate, power)?, 3),
    };
    let spec = CodeSpec::new(a.rate, n, n, power, 1.0)?;
    let check = validate_perfect(&g, &spec, 1e-8)?;
    files.add("gain_matrix.json", g.to_json());
    add_shortfall(files, &check.report);
    let worst = 100.0 * check.report.max_abs_relative;
    let summary = format!("{n}x{n} design at R={} P={power}: max |shortfall| {worst:.3e}%", a.rate);
    Ok(if worst < 1e-6 {
        Outcome::ok(summary)
    } else {
        Outcome::failed("imperfect", summary)
    })
}

fn optimize(a: &OptimizeArgs, files: &mut OutputSet) -> Result<Outcome> {
    let power = a.power.unwrap_or_else(|| natural_power(a.rate));
    let spec = CodeSpec::new(a.rate, a.layers, a.blocks, power, 1.0)?;
    let config = OptimizerConfig {
        max_iterations: a.max_iterations,
        restarts: a.restarts,
        seed: a.seed,
        target_pct: a.target_pct,
        ..OptimizerConfig::default()
    };
    let (result, converged): (Optimized, bool) = match optimize_gain_matrix(&spec, &config) {
        Ok(r) => (r, true),
        Err(Error::NonConvergence(r)) => (*r, false),
        Err(e) => return Err(e),
    };
    files.add("gain_matrix.json", result.matrix.to_json());
    add_shortfall(files, &result.report);
    let summary = format!(
        "{}x{} R={}: max shortfall {:.4}% (target {}%), restart {}",
        a.blocks, a.layers, a.rate, result.report.max_shortfall_pct, result.target_pct, result.restart
    );
    Ok(if converged {
        Outcome::ok(summary)
    } else {
        Outcome::failed("non_convergence", summary)
    })
}

fn check_allocation(alloc: &PowerAllocation) -> Result<()> {
    let p = alloc.spec.power;
    for (m, s) in alloc.row_sums().iter().enumerate() {
        if ((s - p) / p).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("block {} sums to {s}, not {p}", m + 1)));
        }
    }
    let worst = verify_allocation(alloc).iter().flatten().fold(0.0f64, |w, r| w.max(r.abs()));
    if worst > 1e-9 {
        return Err(Error::InvalidSpec(format!("accumulated-rate residual {worst:e}")));
    }
    Ok(())
}

fn add_allocation(files: &mut OutputSet, alloc: &PowerAllocation) {
    files.add("allocation.json", alloc.to_json());
    files.add("powers.csv", formats::allocation_csv(alloc, View::Full));
    files.add("powers_rounded.csv", formats::allocation_csv(alloc, View::Rounded));
}

fn allocate(a: &AllocateArgs, files: &mut OutputSet) -> Result<Outcome> {
    let alloc = allocate_per_layer(a.per_layer_rate, a.layers, a.blocks, a.power, a.noise_var)?;
    check_allocation(&alloc)?;
    add_allocation(files, &alloc);
    Ok(Outcome::ok(format!(
        "{} blocks x {} layers at {} b/s/Hz per layer; last threshold {:.2} dB",
        a.blocks,
        a.layers,
        a.per_layer_rate,
        alloc.thresholds.relative_gains_db().last().unwrap()
    )))
}

fn table(which: &Table, files: &mut OutputSet) -> Result<Outcome> {
    let summary = match *which {
        Table::Loss {
            rate,
            max_layers,
            max_blocks,
        } => {
            let t = tables::loss_table(rate, max_layers, max_blocks)?;
            files.add("loss.csv", formats::loss_csv(&t, View::Full));
            files.add("loss_rounded.csv", formats::loss_csv(&t, View::Rounded));
            format!("layering loss, R={rate}")
        }
        Table::Shortfall => {
            let r = tables::shortfall_table();
            add_shortfall(files, &r);
            format!("published 10x3 design: max shortfall {:.2}%", r.max_shortfall_pct)
        }
        Table::Powers {
            per_layer_rate,
            layers,
            blocks,
            power,
        } => {
            let alloc = tables::power_table(per_layer_rate, layers, blocks, power)?;
            check_allocation(&alloc)?;
            add_allocation(files, &alloc);
            format!("per-layer powers, {blocks} blocks x {layers} layers")
        }
        Table::Efficiency { max_rate, points } => {
            let c = tables::efficiency_curves(max_rate, points)?;
            files.add("efficiency.csv", formats::efficiency_csv(&c, View::Full));
            files.add("efficiency_rounded.csv", formats::efficiency_csv(&c, View::Rounded));
            format!("efficiency bounds, {points} points up to {max_rate}")
        }
    };
    Ok(Outcome::ok(summary))
}

fn simulate(a: &SimulateArgs, files: &mut OutputSet) -> Result<Outcome> {
    let allocation = PowerAllocation::read(&a.allocation)?;
    let cfg = SimConfig {
        max_blocks: a.blocks,
        dither: a.dither.into(),
        gain: a.gain_sq.map_or(ChannelGain::Thresholds, ChannelGain::Fixed),
        ..SimConfig::new(allocation, a.symbols, a.seed)
    };
    let report = simulate_dithered_repetition(&cfg)?;
    files.add("sim.json", serde_json::to_string_pretty(&report).expect("report serializes") + "\n");
    files.add("sim.csv", formats::sim_csv(&report, View::Full));
    let within = report.within_std_errors(5.0);
    let summary = format!(
        "max relative error {:.3}%, max off-diagonal correlation {:.4}, within 5 standard errors: {}",
        100.0 * report.max_relative_error(),
        report.max_offdiag_corr,
        if within { "yes" } else { "no" }
    );
    Ok(if within {
        Outcome::ok(summary)
    } else {
        Outcome::failed("outside_tolerance", summary)
    })
}

