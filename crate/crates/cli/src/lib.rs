//! Subcommands behind the `auditreg` binary. Exit codes are the machine
//! contract: 0 all pass, 1 violation, 2 configuration error, 3 inconclusive.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use auditreg_core::checker::{self, Family, Status, Verdict};
use auditreg_core::demo::{Demo, DEFAULT_SEED};
use auditreg_core::simnet::fuzz::{self, FuzzBase, FuzzConfig};
use auditreg_core::simnet::{self, Scenario, ScenarioError, Trace};
use auditreg_core::{OpResult, Operation, ProtocolParams, Timestamp};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

pub const OUT_ENV: &str = "AUDITREG_OUT";
const DEFAULT_OUT: &str = "auditreg-out";

#[derive(Debug, Parser)]
#[command(name = "auditreg", version, about = "Auditable register simulator and checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory for traces and reports.
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT, global = true)]
    pub out: PathBuf,
    /// Comma-separated checker families (atomicity, liveness, completeness,
    /// accuracy, rb, mw, links). All by default.
    #[arg(long, value_delimiter = ',', global = true)]
    pub checkers: Vec<String>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's scheduler seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a seeded campaign over a base scenario or generated scripts.
    Fuzz {
        /// Base scenario; reseeded per iteration, with Byzantine behaviors redrawn.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Fault budget for generated scripts.
        #[arg(long, default_value_t = 1)]
        faults: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run a built-in scripted scenario: tau_2f, four_f_no_comm, collusion, multiwriter.
    Demo {
        name: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the checkers on a stored trace.
    Check {
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl From<ScenarioError> for ConfigError {
    fn from(e: ScenarioError) -> Self {
        ConfigError(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ConfigError {
    ConfigError(format!("{}: {e}", path.display()))
}

pub fn exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(|v| v.status == Status::Fail) {
        EXIT_VIOLATION
    } else if verdicts.iter().any(|v| v.status == Status::Inconclusive) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_PASS
    }
}

fn families(names: &[String]) -> Result<Vec<Family>, ConfigError> {
    if names.is_empty() {
        return Ok(Family::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| Family::parse(n.trim()).ok_or_else(|| ConfigError(format!("unknown checker family {n:?}"))))
        .collect()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Scenario::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

pub fn load_trace(path: &Path) -> Result<Trace, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Trace::from_jsonl(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

fn ts_values(trace: &Trace) -> BTreeMap<Timestamp, Vec<u8>> {
    let mut map = BTreeMap::from([(Timestamp::INITIAL, vec![])]);
    let mut ordinal = 0;
    for op in &checker::History::from_trace(trace).ops {
        match &op.operation {
            Operation::Write { value } => {
                ordinal += 1;
                map.insert(Timestamp(ordinal), value.clone());
            }
            Operation::MwWrite { value, ts } if trace.scenario().is_correct(op.process) => {
                map.entry(*ts).or_insert_with(|| value.clone());
            }
            _ => {}
        }
    }
    map
}

/// Human-readable verdict report. Audit results are listed as records and
/// as (reader, value) couples via the owner's timestamp lookup.
pub fn report(trace: &Trace, verdicts: &[Verdict]) -> String {
    let mut s = String::new();
    let p = trace.params();
    let sc = trace.scenario();
    let _ = writeln!(s, "scenario {} seed {}", sc.name, sc.seed);
    let _ = writeln!(s, "params n={} f={} tau={} t={} ({:?} run, {} steps, digest {})", p.n, p.f, p.tau, p.t, trace.end, trace.steps, trace.digest().to_hex());
    let values = ts_values(trace);
    for op in &checker::History::from_trace(trace).ops {
        if let Some((idx, OpResult::Audit { records })) = &op.respond {
            let _ = writeln!(s, "audit op {} (event {idx}):", op.op);
            for r in records {
                let v = values.get(&r.ts).map(|v| format!("{:?}", String::from_utf8_lossy(v))).unwrap_or_else(|| "?".into());
                let _ = writeln!(s, "  ({}, {}, n_seq {}) -> ({}, {v})", r.reader, r.ts, r.n_seq.0, r.reader);
            }
        }
    }
    for v in verdicts {
        let _ = writeln!(s, "{v}");
    }
    s
}

fn write_artifacts(dir: &Path, stem: &str, trace: &Trace, verdicts: &[Verdict]) -> Result<(), ConfigError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let put = |name: String, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))
    };
    put(format!("{stem}.trace.jsonl"), trace.to_jsonl())?;
    put(format!("{stem}.report.txt"), report(trace, verdicts))?;
    put(format!("{stem}.verdicts.json"), serde_json::to_string_pretty(verdicts).expect("verdicts serialize"))?;
    Ok(())
}

fn print_verdicts(verdicts: &[Verdict], verbose: u8) {
    for v in verdicts {
        if verbose > 0 || v.status != Status::Pass {
            println!("{v}");
        }
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, common: &Common) -> Result<i32, ConfigError> {
    let mut sc = load_scenario(path)?;
    if let Some(seed) = seed {
        if seed > i64::MAX as u64 {
            return Err(ConfigError(format!("seed {seed} exceeds {}", i64::MAX)));
        }
        sc.seed = seed;
    }
    let fams = families(&common.checkers)?;
    let trace = simnet::run(&sc)?;
    let verdicts = checker::check_selected(&trace, &fams);
    write_artifacts(&common.out, &sc.name, &trace, &verdicts)?;
    if common.verbose > 1 {
        print!("{}", trace.to_jsonl());
    }
    print_verdicts(&verdicts, common.verbose);
    let code = exit_code(&verdicts);
    println!("{} ({} events): exit {code}", sc.name, trace.events.len());
    Ok(code)
}

#[derive(Debug, Serialize)]
pub struct CampaignSummary {
    pub campaign_seed: u64,
    pub iterations: usize,
    pub params: ProtocolParams,
    pub base: String,
    /// Per property: (pass, fail, inconclusive, skipped).
    pub properties: BTreeMap<String, [usize; 4]>,
    pub failing_seeds: Vec<u64>,
    pub inconclusive_seeds: Vec<u64>,
}

impl CampaignSummary {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "campaign {} over {}: {} iterations, n={} f={} tau={} t={}", self.campaign_seed, self.base, self.iterations, p.n, p.f, p.tau, p.t);
        let _ = writeln!(s, "{:<28} {:>6} {:>6} {:>6} {:>6}", "property", "pass", "fail", "incon", "skip");
        for (name, c) in &self.properties {
            let _ = writeln!(s, "{name:<28} {:>6} {:>6} {:>6} {:>6}", c[0], c[1], c[2], c[3]);
        }
        let _ = writeln!(s, "failing seeds: {:?}", self.failing_seeds);
        s
    }
}

fn cmd_fuzz(scenario: Option<&Path>, iterations: usize, seed: u64, faults: usize, common: &Common) -> Result<i32, ConfigError> {
    if iterations == 0 {
        return Err(ConfigError("iterations must be at least 1".into()));
    }
    let fams = families(&common.checkers)?;
    let (base, name) = match scenario {
        Some(p) => (FuzzBase::Fixed(load_scenario(p)?), p.display().to_string()),
        None => {
            ProtocolParams::standard(faults).map_err(|e| ConfigError(e.to_string()))?;
            (FuzzBase::Generated(FuzzConfig::standard(faults)), format!("generated scripts (f={faults})"))
        }
    };
    let mut summary = CampaignSummary {
        campaign_seed: seed,
        iterations,
        params: base.scenario(fuzz::iteration_seed(seed, 0)).protocol_params().map_err(|e| ConfigError(e.to_string()))?,
        base: name,
        properties: BTreeMap::new(),
        failing_seeds: vec![],
        inconclusive_seeds: vec![],
    };
    let failing_dir = common.out.join("failing");
    for i in 0..iterations as u64 {
        let it = fuzz::iteration_seed(seed, i);
        let sc = base.scenario(it);
        let trace = simnet::run(&sc)?;
        let verdicts = checker::check_selected(&trace, &fams);
        for v in &verdicts {
            let slot = match v.status {
                Status::Pass => 0,
                Status::Fail => 1,
                Status::Inconclusive => 2,
                Status::Skipped => 3,
            };
            summary.properties.entry(v.property.clone()).or_default()[slot] += 1;
        }
        match exit_code(&verdicts) {
            EXIT_VIOLATION => {
                summary.failing_seeds.push(it);
                let stem = format!("seed-{it}");
                write_artifacts(&failing_dir, &stem, &trace, &verdicts)?;
                let path = failing_dir.join(format!("{stem}.toml"));
                fs::write(&path, sc.to_toml()).map_err(|e| io_err(&path, e))?;
                if common.verbose > 0 {
                    println!("seed {it}: violation");
                    print_verdicts(&verdicts, 0);
                }
            }
            EXIT_INCONCLUSIVE => summary.inconclusive_seeds.push(it),
            _ => {}
        }
    }
    fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    let table = summary.table();
    let path = common.out.join("campaign.txt");
    fs::write(&path, &table).map_err(|e| io_err(&path, e))?;
    let path = common.out.join("campaign.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).map_err(|e| io_err(&path, e))?;
    print!("{table}");
    Ok(if !summary.failing_seeds.is_empty() {
        EXIT_VIOLATION
    } else if !summary.inconclusive_seeds.is_empty() {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_PASS
    })
}

fn cmd_demo(name: &str, seed: u64, common: &Common) -> Result<i32, ConfigError> {
    let demo = Demo::parse(name).ok_or_else(|| {
        let known: Vec<&str> = Demo::ALL.iter().map(|d| d.name()).collect();
        ConfigError(format!("unknown demo {name:?}; expected one of {}", known.join(", ")))
    })?;
    let fams = families(&common.checkers)?;
    let sc = demo.scenario(seed);
    let trace = simnet::run(&sc)?;
    let verdicts = checker::check_selected(&trace, &fams);
    write_artifacts(&common.out, &sc.name, &trace, &verdicts)?;
    print!("{}", demo.narrate(&trace, &verdicts));
    Ok(exit_code(&verdicts))
}

fn cmd_check(path: &Path, common: &Common) -> Result<i32, ConfigError> {
    let trace = load_trace(path)?;
    let verdicts = checker::check_selected(&trace, &families(&common.checkers)?);
    print_verdicts(&verdicts, common.verbose);
    if common.verbose > 0 {
        print!("{}", report(&trace, &[]));
    }
    let code = exit_code(&verdicts);
    println!("{}: exit {code}", path.display());
    Ok(code)
}

pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run { scenario, seed, common } => cmd_run(scenario, *seed, common),
        Command::Fuzz { scenario, iterations, seed, faults, common } => cmd_fuzz(scenario.as_deref(), *iterations, *seed, *faults, common),
        Command::Demo { name, seed, common } => cmd_demo(name, *seed, common),
        Command::Check { trace, common } => cmd_check(trace, common),
    };
    result.unwrap_or_else(|ConfigError(msg)| {
        eprintln!("error: {msg}");
        EXIT_CONFIG
    })
}
