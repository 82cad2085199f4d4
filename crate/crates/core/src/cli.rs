//! Command-line harness behind the `r3t` binary.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 config error, 3 infeasible,
//! 4 audit failure. Every file written gets a `<file>.manifest.json` sibling
//! recording the command, config digest, seed and crate version; output sent to
//! stdout has its manifest printed to stderr instead.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::economics;
use crate::error::Error;
use crate::feasibility;
use crate::ledger;
use crate::market::{ContractMenu, InfoCase, MarketConfig, MarketParams, Mechanism};
use crate::sim::{self, SimSpec};
use crate::solver::{self, SolveRequest};

#[derive(Debug, Parser)]
#[command(
    name = "r3t",
    version,
    about = "Time-aware contract design for federated learning markets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one round's optimal menu and audit it.
    Solve(SolveArgs),
    /// Solve across a range of one parameter; one CSV row per (value, case, type).
    Sweep(SweepArgs),
    /// Per-round and cumulative outcomes of all five mechanisms.
    Efficiency(EfficiencyArgs),
    /// K×K matrix of each type's utility on each item of the incomplete-information menu.
    Mismatch(MismatchArgs),
    /// Run the multi-round simulation with its settlement ledger.
    Simulate(SimulateArgs),
    /// Audit a menu document against a config.
    Audit(AuditArgs),
    /// Verify a ledger log and print replayed balances.
    VerifyLedger(VerifyLedgerArgs),
    /// Print the reference configuration as TOML.
    DefaultConfig,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Config file (TOML). Defaults to the reference experiment.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContractMechanism {
    R3t,
    Ctwt,
}

impl From<ContractMechanism> for Mechanism {
    fn from(m: ContractMechanism) -> Self {
        match m {
            ContractMechanism::R3t => Mechanism::R3t,
            ContractMechanism::Ctwt => Mechanism::Ctwt,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_enum, default_value = "iic")]
    pub info_case: InfoCase,
    #[arg(long, value_enum, default_value = "r3t")]
    pub mechanism: ContractMechanism,
    /// Round the menu is designed for.
    #[arg(long, default_value_t = 1)]
    pub round: u32,
    /// Menu output path; stdout if omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Delta,
    Budget,
    #[value(name = "K", alias = "k")]
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseSelection {
    Cic,
    Iic,
    Both,
}

impl CaseSelection {
    fn cases(self) -> &'static [InfoCase] {
        match self {
            CaseSelection::Cic => &[InfoCase::Cic],
            CaseSelection::Iic => &[InfoCase::Iic],
            CaseSelection::Both => &[InfoCase::Cic, InfoCase::Iic],
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub values: Vec<f64>,
    #[arg(long, value_enum, default_value = "both")]
    pub info_case: CaseSelection,
    #[arg(long, value_enum, default_value = "r3t")]
    pub mechanism: ContractMechanism,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MismatchArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_enum, default_value = "r3t")]
    pub mechanism: ContractMechanism,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_enum, default_value = "r3t")]
    pub mechanism: Mechanism,
    #[arg(long, value_enum, default_value = "iic")]
    pub info_case: InfoCase,
    /// Rounds to run; the whole horizon if omitted.
    #[arg(long)]
    pub rounds: Option<u32>,
    /// Per-round CSV summary; stdout if omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Full trace as JSON Lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Ledger log as JSON Lines.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Menu document (JSON, as written by `solve`).
    #[arg(long)]
    pub menu: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct VerifyLedgerArgs {
    #[arg(long)]
    pub ledger: PathBuf,
}

/// Raised when an audit finds violations; maps to exit code 4.
#[derive(Debug, thiserror::Error)]
#[error("audit failed")]
pub struct AuditFailed;

/// Parses `std::env::args`, runs, and converts the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `| head`) is not a failure.
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

/// Prints to stdout, surfacing write errors instead of panicking.
fn say(text: impl std::fmt::Display) -> io::Result<()> {
    writeln!(io::stdout().lock(), "{text}")
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<AuditFailed>().is_some() {
        return 4;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::ConfigParse(_)) => 2,
        Some(Error::Infeasible { .. }) => 3,
        Some(Error::MonotonicityPostcheck) => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Efficiency(a) => cmd_efficiency(a),
        Command::Mismatch(a) => cmd_mismatch(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Audit(a) => cmd_audit(a),
        Command::VerifyLedger(a) => cmd_verify_ledger(a),
        Command::DefaultConfig => {
            write!(
                io::stdout().lock(),
                "{}",
                MarketParams::default().to_toml_string()
            )?;
            Ok(())
        }
    }
}

fn load_config(arg: &ConfigArg) -> anyhow::Result<MarketConfig> {
    let params = match &arg.config {
        Some(path) => MarketParams::from_path(path)?,
        None => MarketParams::default(),
    };
    Ok(crate::validate_config(params)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    artifact: String,
    config_digest: String,
    rng_seed: u64,
    version: &'static str,
}

/// A destination that is either a file (with a manifest sibling) or stdout.
struct Sink {
    path: Option<PathBuf>,
    writer: Box<dyn Write>,
}

impl Sink {
    fn open(path: Option<&Path>) -> anyhow::Result<Self> {
        let writer: Box<dyn Write> = match path {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Self {
            path: path.map(Path::to_path_buf),
            writer,
        })
    }

    fn finish(mut self, command: &str, cfg: &MarketConfig) -> anyhow::Result<()> {
        self.writer.flush()?;
        let manifest = Manifest {
            command,
            artifact: self
                .path
                .as_ref()
                .map_or("-".to_owned(), |p| p.display().to_string()),
            config_digest: cfg.digest(),
            rng_seed: cfg.rng_seed(),
            version: env!("CARGO_PKG_VERSION"),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        match &self.path {
            Some(p) => {
                let mut name = p.as_os_str().to_owned();
                name.push(".manifest.json");
                std::fs::write(&name, json + "\n")
                    .with_context(|| format!("writing manifest for {}", p.display()))?;
            }
            None => eprintln!("manifest: {}", serde_json::to_string(&manifest)?),
        }
        Ok(())
    }
}

fn csv_writer(sink: &mut Sink) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(sink.writer.as_mut())
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let req = SolveRequest {
        round: a.round,
        ..SolveRequest::initial(&cfg)
    };
    let req = match a.mechanism {
        ContractMechanism::R3t => req,
        ContractMechanism::Ctwt => req.time_blind(),
    };
    let sol = solver::solve(&cfg, a.info_case, &req)?;
    let mut sink = Sink::open(a.out.as_deref())?;
    writeln!(sink.writer, "{}", sol.menu.to_json())?;
    sink.finish("solve", &cfg)?;

    let report = feasibility::audit(&sol.menu, &cfg);
    let summary = format!(
        "{report}\ntotal spend {:.6} of budget {:.6}, cloud utility {:.6}",
        sol.spend,
        cfg.budget(),
        sol.objective
    );
    if a.out.is_some() {
        say(&summary)?;
    } else {
        eprintln!("{summary}");
    }
    if !report.pass {
        return Err(AuditFailed.into());
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    param: &'static str,
    value: f64,
    info_case: &'static str,
    status: &'static str,
    type_index: Option<usize>,
    join_round: Option<u32>,
    bonus_factor: Option<f64>,
    effort: Option<f64>,
    salary: Option<f64>,
    bonus: Option<f64>,
    reward: Option<f64>,
    client_utility: Option<f64>,
    cloud_utility: Option<f64>,
}

/// Rows for one swept value and case. Infeasible points yield a single status row.
fn sweep_rows(
    base: &MarketConfig,
    param: SweepParam,
    value: f64,
    case: InfoCase,
    mechanism: ContractMechanism,
) -> anyhow::Result<Vec<SweepRow>> {
    let (name, cfg) = match param {
        SweepParam::Delta => ("delta", base.derive(|p| p.delta = value)?),
        SweepParam::Budget => ("budget", base.derive(|p| p.budget = value)?),
        SweepParam::K => {
            if value.fract() != 0.0 || value < 1.0 {
                bail!(Error::Config(vec![crate::Violation::new(
                    "K",
                    "sweep values must be positive integers"
                )]));
            }
            ("K", base.truncate_types(value as usize)?)
        }
    };
    let mut req = SolveRequest::initial(&cfg);
    if mechanism == ContractMechanism::Ctwt {
        req = req.time_blind();
    }
    let row = |status| SweepRow {
        param: name,
        value,
        info_case: case.label(),
        status,
        type_index: None,
        join_round: None,
        bonus_factor: None,
        effort: None,
        salary: None,
        bonus: None,
        reward: None,
        client_utility: None,
        cloud_utility: None,
    };
    let menu = match solver::solve(&cfg, case, &req) {
        Ok(sol) => sol.menu,
        Err(Error::Infeasible { .. } | Error::MonotonicityPostcheck) => {
            return Ok(vec![row("infeasible")])
        }
        Err(e) => return Err(e.into()),
    };
    let lambda = req.lambda(&cfg)?;
    Ok(menu
        .items
        .iter()
        .zip(&menu.multiplicity)
        .map(|(item, m)| {
            let theta = cfg.thetas().theta(item.type_index);
            SweepRow {
                type_index: Some(item.type_index),
                join_round: Some(item.join_round),
                bonus_factor: Some(item.bonus_factor),
                effort: Some(item.effort),
                salary: Some(item.salary),
                bonus: Some(item.bonus),
                reward: Some(item.reward),
                client_utility: Some(economics::client_utility(
                    theta,
                    item.bonus_factor,
                    item.salary,
                    cfg.delta(),
                    cfg.beta(),
                )),
                cloud_utility: Some(
                    f64::from(*m)
                        * economics::cloud_item_utility(
                            theta,
                            item.bonus_factor,
                            item.salary,
                            cfg.delta(),
                            lambda,
                        ),
                ),
                ..row("ok")
            }
        })
        .collect())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let jobs: Vec<(f64, InfoCase)> = a
        .values
        .iter()
        .flat_map(|v| a.info_case.cases().iter().map(move |c| (*v, *c)))
        .collect();
    // Collecting an indexed parallel iterator keeps job order.
    let blocks: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(v, case)| sweep_rows(&cfg, a.param, v, case, a.mechanism))
        .collect::<anyhow::Result<_>>()?;
    let mut sink = Sink::open(a.out.as_deref())?;
    {
        let mut w = csv_writer(&mut sink);
        for row in blocks.iter().flatten() {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    sink.finish("sweep", &cfg)
}

/// The five compared mechanisms, in output order.
pub const EFFICIENCY_RUNS: [(Mechanism, InfoCase, &str); 5] = [
    (Mechanism::R3t, InfoCase::Cic, "R3T-CIC"),
    (Mechanism::R3t, InfoCase::Iic, "R3T-IIC"),
    (Mechanism::Ctwt, InfoCase::Cic, "CTWT-CIC"),
    (Mechanism::Ctwt, InfoCase::Iic, "CTWT-IIC"),
    (Mechanism::Linear, InfoCase::Cic, "LINEAR"),
];

#[derive(Serialize)]
struct EfficiencyRow<'a> {
    mechanism: &'a str,
    round: u32,
    regime: &'static str,
    cohort_size: usize,
    cloud_utility: f64,
    client_utility: f64,
    spend: f64,
    cum_cloud_utility: f64,
    cum_client_utility: f64,
    cum_spend: f64,
}

fn cmd_efficiency(a: EfficiencyArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let traces: Vec<sim::SimTrace> = EFFICIENCY_RUNS
        .par_iter()
        .map(|&(mechanism, info_case, _)| {
            let spec = SimSpec {
                mechanism,
                info_case,
                rounds: cfg.rounds(),
            };
            sim::run_simulation(&cfg, spec).map(|r| r.trace)
        })
        .collect::<Result<_, _>>()?;
    let mut sink = Sink::open(a.out.as_deref())?;
    {
        let mut w = csv_writer(&mut sink);
        for ((_, _, label), trace) in EFFICIENCY_RUNS.iter().zip(&traces) {
            if let Some(h) = &trace.halt {
                eprintln!("warning: {label} halted at round {}: {}", h.round, h.reason);
            }
            let (mut cc, mut cu, mut cs) = (0.0, 0.0, 0.0);
            for r in &trace.rounds {
                cc += r.cloud_utility;
                cu += r.client_utility;
                cs += r.spend;
                w.serialize(EfficiencyRow {
                    mechanism: label,
                    round: r.round,
                    regime: r.regime.label(),
                    cohort_size: r.cohort.len(),
                    cloud_utility: r.cloud_utility,
                    client_utility: r.client_utility,
                    spend: r.spend,
                    cum_cloud_utility: cc,
                    cum_client_utility: cu,
                    cum_spend: cs,
                })?;
            }
        }
        w.flush()?;
    }
    sink.finish("efficiency", &cfg)
}

fn cmd_mismatch(a: MismatchArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let mut req = SolveRequest::initial(&cfg);
    if a.mechanism == ContractMechanism::Ctwt {
        req = req.time_blind();
    }
    let menu = solver::solve(&cfg, InfoCase::Iic, &req)?.menu;
    let matrix = feasibility::utility_matrix(&menu, &cfg);
    let mut sink = Sink::open(a.out.as_deref())?;
    {
        let mut w = csv_writer(&mut sink);
        let mut header = vec!["type_index".to_owned()];
        header.extend((1..=cfg.k()).map(|j| format!("item_{j}")));
        w.write_record(&header)?;
        for (k, row) in matrix.iter().enumerate() {
            let mut rec = vec![(k + 1).to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    sink.finish("mismatch", &cfg)
}

#[derive(Serialize)]
struct SimRow {
    round: u32,
    regime: &'static str,
    cohort_size: usize,
    participants: usize,
    spend: f64,
    spend_micro: u64,
    cloud_utility: f64,
    client_utility: f64,
    performance: f64,
    loss: f64,
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let spec = SimSpec {
        mechanism: a.mechanism,
        info_case: a.info_case,
        rounds: a.rounds.unwrap_or(cfg.rounds()),
    };
    let run = sim::run_simulation(&cfg, spec)?;
    let trace = &run.trace;

    let mut sink = Sink::open(a.out.as_deref())?;
    {
        let mut w = csv_writer(&mut sink);
        for r in &trace.rounds {
            w.serialize(SimRow {
                round: r.round,
                regime: r.regime.label(),
                cohort_size: r.cohort.len(),
                participants: r.participations.len(),
                spend: r.spend,
                spend_micro: r.spend_micro,
                cloud_utility: r.cloud_utility,
                client_utility: r.client_utility,
                performance: r.performance,
                loss: r.loss,
            })?;
        }
        w.flush()?;
    }
    sink.finish("simulate", &cfg)?;

    if let Some(path) = &a.trace {
        let mut sink = Sink::open(Some(path))?;
        trace.write_jsonl(&mut sink.writer)?;
        sink.finish("simulate", &cfg)?;
    }
    if let Some(path) = &a.ledger {
        let mut sink = Sink::open(Some(path))?;
        run.ledger.write_jsonl(&mut sink.writer)?;
        sink.finish("simulate", &cfg)?;
    }

    let t = &trace.totals;
    let report =
        format!(
        "{} {}: {} rounds{}\ncloud utility {:.6}, client utility {:.6}, spend {:.6} ({} micro)\n\
         final performance {:.6}, ledger events {}, chain {}",
        spec.mechanism.label(),
        spec.info_case.label(),
        trace.rounds.len(),
        trace
            .halt
            .as_ref()
            .map_or(String::new(), |h| format!(" (halted at round {}: {})", h.round, h.reason)),
        t.cloud_utility,
        t.client_utility,
        t.spend,
        t.spend_micro,
        t.final_performance,
        run.ledger.len(),
        if ledger::verify_chain(run.ledger.events()) { "verified" } else { "BROKEN" },
    );
    if a.out.is_some() {
        say(&report)?;
    } else {
        eprintln!("{report}");
    }
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config)?;
    let text = std::fs::read_to_string(&a.menu)
        .with_context(|| format!("reading {}", a.menu.display()))?;
    let menu = ContractMenu::from_json(&text, &cfg)?;
    let report = feasibility::audit(&menu, &cfg);
    if a.json {
        say(serde_json::to_string_pretty(&report)?)?;
    } else {
        say(&report)?;
    }
    if !report.pass {
        return Err(AuditFailed.into());
    }
    Ok(())
}

fn cmd_verify_ledger(a: VerifyLedgerArgs) -> anyhow::Result<()> {
    let bytes =
        std::fs::read(&a.ledger).with_context(|| format!("reading {}", a.ledger.display()))?;
    let events = ledger::parse_log(&bytes)?;
    if !ledger::verify_chain(&events) {
        bail!("hash chain does not verify");
    }
    let balances = ledger::replay_balances(&events);
    if balances != ledger::expected_balances(&events)? {
        bail!("settled balances disagree with recorded contributions");
    }
    say(format!("{} events, chain verified", events.len()))?;
    for (wallet, micro) in &balances {
        say(format!("{wallet},{micro}"))?;
    }
    Ok(())
}
