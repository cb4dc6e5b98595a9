//! Command-line front end: `run`, `sweep`, `replay` and `verify`.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{run_to_completion, RunOutput};
use crate::log::{read_jsonl, write_jsonl, LogRecord, RunMeta};
use crate::metrics::{collect_metrics, summarize, sweep_with, write_csv, MetricsReport};
use crate::policy::PolicyKind;
use crate::verify::{verify_log, VerifyReport};
use crate::world::{ScenarioConfig, Tick};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_STALLED: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lunar-mrta", version, about = "Auction-based multi-robot task allocation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its log, metrics and summary.
    Run {
        #[arg(long, default_value = "fcfs")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every policy over a range of seeds in parallel.
    Sweep {
        #[arg(long, default_value = "fcfs,coalition,nearest", value_delimiter = ',')]
        policies: Vec<PolicyKind>,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "0..19")]
        seeds: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Also write every run's event log.
        #[arg(long)]
        keep_logs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-derive metrics from a log and check it.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Run the protocol-safety checker over a log.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with scenario and timing settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scouts: Option<usize>,
    #[arg(long)]
    pub excavators: Option<usize>,
    #[arg(long)]
    pub haulers: Option<usize>,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub minerals: Option<u32>,
    #[arg(long)]
    pub arena: Option<f64>,
    #[arg(long)]
    pub scan_radius: Option<f64>,
    #[arg(long)]
    pub tick_cap: Option<Tick>,
    /// Log per-robot snapshots every tick.
    #[arg(long)]
    pub debug: bool,
}

/// Settings accepted in a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub arena_side: Option<f64>,
    pub n_scouts: Option<usize>,
    pub n_excavators: Option<usize>,
    pub n_haulers: Option<usize>,
    pub n_sites: Option<usize>,
    pub n_minerals: Option<u32>,
    pub scan_radius: Option<f64>,
    pub tick_cap: Option<Tick>,
    pub robot_speed: Option<f64>,
    pub dig_duration: Option<Tick>,
    pub load_duration: Option<Tick>,
    pub unload_duration: Option<Tick>,
    pub bid_window: Option<Tick>,
    pub win_resolution_window: Option<Tick>,
    pub debug_snapshots: Option<bool>,
}

impl ConfigFile {
    pub fn apply(&self, c: &mut ScenarioConfig) {
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$($target).+ = v; })*
            };
        }
        set!(
            arena_side => arena_side,
            n_scouts => n_scouts,
            n_excavators => n_excavators,
            n_haulers => n_haulers,
            n_sites => n_sites,
            n_minerals => n_minerals,
            scan_radius => scan_radius,
            tick_cap => tick_cap,
            robot_speed => timing.robot_speed,
            dig_duration => timing.dig_duration,
            load_duration => timing.load_duration,
            unload_duration => timing.unload_duration,
            bid_window => timing.bid_window,
            win_resolution_window => timing.win_resolution_window,
            debug_snapshots => debug_snapshots,
        );
    }
}

impl Overrides {
    pub fn resolve(&self) -> Result<ScenarioConfig, String> {
        let mut c = ScenarioConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let file: ConfigFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            file.apply(&mut c);
        }
        let set = |v: Option<usize>, f: &mut usize| {
            if let Some(v) = v {
                *f = v;
            }
        };
        set(self.scouts, &mut c.n_scouts);
        set(self.excavators, &mut c.n_excavators);
        set(self.haulers, &mut c.n_haulers);
        set(self.sites, &mut c.n_sites);
        if let Some(v) = self.minerals {
            c.n_minerals = v;
        }
        if let Some(v) = self.arena {
            c.arena_side = v;
        }
        if let Some(v) = self.scan_radius {
            c.scan_radius = v;
        }
        if let Some(v) = self.tick_cap {
            c.tick_cap = v;
        }
        c.debug_snapshots |= self.debug;
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

/// `a..b` inclusive, `a..=b`, or `a,b,c`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("bad seed list `{s}`");
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds: Vec<u64> = s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut f = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| e.to_string())?;
    f.write_all(b"\n").map_err(|e| e.to_string())
}

fn meta_of(records: &[LogRecord]) -> Option<RunMeta> {
    records.iter().find_map(|r| match r {
        LogRecord::Meta(m) => Some((**m).clone()),
        _ => None,
    })
}

fn report_violations(label: &str, v: &VerifyReport) {
    for violation in &v.violations {
        eprintln!("{label}: {violation}");
    }
}

fn exit_code(stalled: bool, violations: usize) -> i32 {
    if violations > 0 {
        EXIT_VIOLATION
    } else if stalled {
        EXIT_STALLED
    } else {
        EXIT_OK
    }
}

fn cmd_run(config: ScenarioConfig, out: &Path) -> Result<i32, String> {
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let output = run_to_completion(config).map_err(|e| e.to_string())?;
    let check = verify_log(&output.records);
    let events = File::create(out.join("events.jsonl")).map_err(|e| e.to_string())?;
    write_jsonl(&output.records, events).map_err(|e| e.to_string())?;
    let csv = File::create(out.join("metrics.csv")).map_err(|e| e.to_string())?;
    write_csv(std::slice::from_ref(&output.report), csv).map_err(|e| e.to_string())?;
    write_json(&out.join("summary.json"), &summarize(std::slice::from_ref(&output.report)))?;
    write_json(&out.join("run_meta.json"), &meta_of(&output.records))?;
    let r = &output.report;
    println!(
        "{} seed {}: {} at tick {}, {} minerals, {} messages, {} violations",
        r.policy,
        r.seed,
        if r.stalled { "stalled" } else { "completed" },
        r.final_tick,
        r.minerals_at_plant,
        r.message_count,
        check.violations.len()
    );
    report_violations("run", &check);
    Ok(exit_code(r.stalled, check.violations.len()))
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    base_config: &'a ScenarioConfig,
    policies: &'a [PolicyKind],
    seeds: &'a [u64],
    runs: Vec<RunMeta>,
}

fn cmd_sweep(base: ScenarioConfig, policies: &[PolicyKind], seeds: &[u64], keep_logs: bool, out: &Path) -> Result<i32, String> {
    if policies.is_empty() || seeds.is_empty() {
        return Err("sweep needs at least one policy and one seed".into());
    }
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let per_run = |o: RunOutput| -> Result<(MetricsReport, VerifyReport, Option<RunMeta>), String> {
        let check = verify_log(&o.records);
        if keep_logs {
            let path = out.join(format!("events_{}_{}.jsonl", o.report.policy, o.report.seed));
            let f = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            write_jsonl(&o.records, f).map_err(|e| e.to_string())?;
        }
        Ok((o.report, check, meta_of(&o.records)))
    };
    let results = sweep_with(&base, policies, seeds, per_run).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut metas = Vec::new();
    let mut violations = 0;
    for r in results {
        let (report, check, meta) = r?;
        report_violations(&format!("{} seed {}", report.policy, report.seed), &check);
        violations += check.violations.len();
        reports.push(report);
        metas.extend(meta);
    }
    let csv = File::create(out.join("metrics.csv")).map_err(|e| e.to_string())?;
    write_csv(&reports, csv).map_err(|e| e.to_string())?;
    let summary = summarize(&reports);
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("run_meta.json"), &SweepMeta { base_config: &base, policies, seeds, runs: metas })?;
    for (policy, s) in &summary.policies {
        println!(
            "{policy:<10} runs {:>3}  completed {:>3}  median ticks {:>8}",
            s.runs,
            s.completed,
            s.median_completion_ticks.map_or("-".into(), |m| format!("{m:.1}"))
        );
    }
    for o in &summary.orderings {
        let verdict = match o.passed {
            Some(true) => "holds",
            Some(false) => "does not hold",
            None => "not evaluated",
        };
        println!("ordering {} ({:?}): {verdict}", o.name, o.gate);
    }
    for s in &summary.stalled {
        println!("stalled: {} seed {}", s.policy, s.seed);
    }
    Ok(exit_code(!summary.stalled.is_empty(), violations))
}

fn load_log(path: &Path) -> Result<Vec<LogRecord>, String> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_jsonl(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_replay(path: &Path) -> Result<i32, String> {
    let records = load_log(path)?;
    let report = collect_metrics(&records).map_err(|e| format!("{}: {e}", path.display()))?;
    let check = verify_log(&records);
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    report_violations("replay", &check);
    Ok(exit_code(report.stalled, check.violations.len()))
}

fn cmd_verify(path: &Path) -> Result<i32, String> {
    let records = load_log(path)?;
    let check = verify_log(&records);
    report_violations("verify", &check);
    println!(
        "{} messages, {} auctions, {} minerals delivered, {} violations",
        check.messages,
        check.auctions,
        check.minerals_delivered,
        check.violations.len()
    );
    Ok(if check.is_clean() { EXIT_OK } else { EXIT_VIOLATION })
}

pub fn execute(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Run { policy, seed, overrides, out } => {
            let config = ScenarioConfig { policy, seed, ..overrides.resolve()? };
            cmd_run(config, &out)
        }
        Command::Sweep { policies, seeds, overrides, keep_logs, out } => {
            let seeds = parse_seeds(&seeds)?;
            cmd_sweep(overrides.resolve()?, &policies, &seeds, keep_logs, &out)
        }
        Command::Replay { log } => cmd_replay(&log),
        Command::Verify { log } => cmd_verify(&log),
    }
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}
