//! Seed-derived scenario generation and fuzz campaigns.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::checker::{self, Verdict};
use crate::codec::CodecMode;
use crate::types::{ProcessId, Timestamp};

use super::byzantine::{Behavior, WriterBehavior};
use super::scenario::{
    ByzantineReader, ByzantineServer, ByzantineWriter, CrashSpec, CrashTrigger, MultiWriterSpec, OpKind, OpSpec, ParamSpec,
    Scenario, ScenarioError,
};
use super::sim::run;
use super::trace::Trace;

/// Shape of generated single-writer scenarios.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub f: usize,
    pub max_writes: usize,
    pub max_reads: usize,
    pub max_readers: u32,
    pub max_audits: usize,
    pub byzantine_servers: bool,
    pub byzantine_readers: bool,
    pub reader_crashes: bool,
    /// `None` draws the codec per run.
    pub codec: Option<CodecMode>,
}

impl FuzzConfig {
    pub fn standard(f: usize) -> Self {
        Self {
            f,
            max_writes: 10,
            max_reads: 10,
            max_readers: 3,
            max_audits: 2,
            byzantine_servers: true,
            byzantine_readers: true,
            reader_crashes: true,
            codec: None,
        }
    }
}

/// Derives the `i`-th iteration seed of a campaign.
/// Seeds stay below 2^63 so scenarios holding them round-trip through TOML.
pub fn iteration_seed(campaign: u64, i: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(campaign ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.gen::<u64>() >> 1
}

fn op(process: ProcessId, kind: OpKind) -> OpSpec {
    OpSpec { process, op: kind, value: String::new(), ts: None, at: 0, after: vec![] }
}

/// A random single-writer scenario: up to `f` Byzantine servers with drawn
/// behaviors, a writer script interleaving writes and audits, and reads
/// spread over several readers.
pub fn generate(cfg: &FuzzConfig, seed: u64) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = Scenario::new(format!("fuzz-f{}-{seed:016x}", cfg.f), ParamSpec::standard(cfg.f), seed);
    let n = 3 * cfg.f + 1;
    s.codec = cfg.codec.unwrap_or(if rng.gen_bool(0.5) { CodecMode::Shamir } else { CodecMode::Dispersal });
    s.readers = rng.gen_range(1..=cfg.max_readers.max(1));

    if cfg.byzantine_servers {
        let count = rng.gen_range(0..=cfg.f);
        let mut servers: Vec<u32> = (1..=n as u32).collect();
        servers.shuffle(&mut rng);
        for &server in servers.iter().take(count) {
            let behavior = *Behavior::ALL.choose(&mut rng).unwrap();
            s.byzantine.push(ByzantineServer { server, behavior });
        }
        s.byzantine.sort_by_key(|b| b.server);
    }
    if cfg.byzantine_readers && s.readers >= 2 && rng.gen_bool(0.25) {
        let count = if s.readers >= 3 && rng.gen_bool(0.5) { 2 } else { 1 };
        for reader in (s.readers - count + 1)..=s.readers {
            let size = rng.gen_range(1..=n);
            let mut servers: Vec<u32> = (1..=n as u32).collect();
            servers.shuffle(&mut rng);
            s.byzantine_readers.push(ByzantineReader { reader, block_targets: servers.into_iter().take(size).collect() });
        }
        s.collusion = rng.gen_bool(0.5);
    }
    let correct_readers: Vec<u32> = (1..=s.readers).filter(|r| s.block_targets_of(*r).is_none()).collect();
    let crashed = (cfg.reader_crashes && rng.gen_bool(0.125)).then(|| *correct_readers.choose(&mut rng).unwrap());
    if let Some(r) = crashed {
        s.crashes.push(CrashSpec { process: ProcessId::reader(r), trigger: CrashTrigger::AfterBlockReq, drop_in_flight: false });
    }

    let writes = rng.gen_range(1..=cfg.max_writes.max(1));
    let audits = rng.gen_range(0..=cfg.max_audits);
    let mut writer_seq: Vec<OpKind> = vec![OpKind::Write; writes];
    for _ in 0..audits {
        let at = rng.gen_range(0..=writer_seq.len());
        writer_seq.insert(at, OpKind::Audit);
    }
    let mut write_pos = vec![];
    for (i, k) in writer_seq.iter().enumerate() {
        let mut o = op(ProcessId::writer(), *k);
        if *k == OpKind::Write {
            o.value = format!("w{}-{:04x}", write_pos.len() + 1, rng.gen::<u16>());
            write_pos.push(i);
        }
        s.ops.push(o);
    }

    // Each read may wait for one write; a reader's reads are sorted by that
    // dependency so no audit can end up waiting on itself.
    let reads = rng.gen_range(1..=cfg.max_reads.max(1));
    let mut per_reader: Vec<Vec<(Option<usize>, usize)>> = vec![vec![]; s.readers as usize];
    for _ in 0..reads {
        let r = rng.gen_range(0..s.readers as usize);
        let dep = rng.gen_bool(0.5).then(|| write_pos[rng.gen_range(0..write_pos.len())]);
        let at = if rng.gen_bool(0.5) { rng.gen_range(0..400) } else { 0 };
        per_reader[r].push((dep, at));
    }
    let mut read_info: Vec<(u32, Option<usize>, usize)> = vec![];
    for (r, list) in per_reader.iter_mut().enumerate() {
        list.sort_by_key(|(d, _)| d.unwrap_or(0));
        let reader = r as u32 + 1;
        for &(dep, at) in list.iter() {
            let mut o = op(ProcessId::reader(reader), OpKind::Read);
            o.after = dep.into_iter().collect();
            o.at = at;
            read_info.push((reader, dep, s.ops.len()));
            s.ops.push(o);
        }
    }
    for (pos, k) in writer_seq.iter().enumerate() {
        if *k != OpKind::Audit {
            continue;
        }
        let eligible: Vec<usize> = read_info
            .iter()
            .filter(|(r, _, idx)| {
                correct_readers.contains(r) && Some(*r) != crashed && blocking_write(&read_info, *r, *idx).is_none_or(|w| w < pos)
            })
            .map(|(_, _, idx)| *idx)
            .collect();
        let picks = rng.gen_range(0..=eligible.len().min(3));
        let chosen: BTreeSet<usize> = eligible.choose_multiple(&mut rng, picks).copied().collect();
        s.ops[pos].after = chosen.into_iter().collect();
    }
    s
}

// Latest write that `reader`'s reads up to script index `idx` wait for.
fn blocking_write(info: &[(u32, Option<usize>, usize)], reader: u32, idx: usize) -> Option<usize> {
    info.iter().filter(|(r, _, i)| *r == reader && *i <= idx).filter_map(|(_, d, _)| *d).max()
}

/// Multi-writer campaign scenario: `N_w = 3`, `f_w = 1`, one Byzantine writer.
pub fn generate_multiwriter(seed: u64) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = Scenario::new(format!("mw-{seed:016x}"), ParamSpec::standard(1), seed);
    let bad = rng.gen_range(1..=3u32);
    let behavior = *[WriterBehavior::OtherValue, WriterBehavior::Garbage, WriterBehavior::Mixed].choose(&mut rng).unwrap();
    s.multiwriter = Some(MultiWriterSpec { n_w: 3, f_w: 1, byzantine: vec![ByzantineWriter { writer: bad, behavior }] });
    s.readers = rng.gen_range(1..=2);
    let writes = rng.gen_range(1..=4u64);
    for k in 1..=writes {
        let value = format!("mw{k}-{:04x}", rng.gen::<u16>());
        for w in 1..=3 {
            let mut o = op(ProcessId::mw_writer(w), OpKind::Write);
            o.value = value.clone();
            o.ts = Some(Timestamp(k));
            s.ops.push(o);
        }
    }
    let mut reads = vec![];
    for _ in 0..rng.gen_range(1..=4) {
        let mut o = op(ProcessId::reader(rng.gen_range(1..=s.readers)), OpKind::Read);
        o.at = rng.gen_range(0..300);
        reads.push(s.ops.len());
        s.ops.push(o);
    }
    let mut audit = op(ProcessId::writer(), OpKind::Audit);
    audit.after = reads;
    s.ops.push(audit);
    s
}

/// Writer crashes part-way through a broadcast; schedule `i` picks the
/// crash point.
pub fn generate_writer_crash(i: u64) -> Scenario {
    let seed = iteration_seed(0x00c0_ffee, i);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = Scenario::new(format!("writer-crash-{i}"), ParamSpec::standard(1), seed);
    let n = 4;
    let writes = rng.gen_range(1..=3);
    let (trigger, drop_in_flight) = match i % 4 {
        0 => (CrashTrigger::AfterSends { count: (i as usize / 4) % (n + 1) }, true),
        1 => (CrashTrigger::AfterFirstRbDeliver, true),
        2 => (CrashTrigger::AfterFirstRbDeliver, false),
        _ => (CrashTrigger::AfterSends { count: n + rng.gen_range(0..(writes - 1) * n + 1) }, true),
    };
    s.crashes.push(CrashSpec { process: ProcessId::writer(), trigger, drop_in_flight });
    if rng.gen_bool(0.5) {
        let behavior = *Behavior::ALL.choose(&mut rng).unwrap();
        s.byzantine.push(ByzantineServer { server: rng.gen_range(1..=n as u32), behavior });
    }
    s.readers = 2;
    for k in 1..=writes {
        let mut o = op(ProcessId::writer(), OpKind::Write);
        o.value = format!("c{k}");
        s.ops.push(o);
    }
    for r in 1..=2 {
        for _ in 0..2 {
            let mut o = op(ProcessId::reader(r), OpKind::Read);
            o.at = rng.gen_range(0..200);
            s.ops.push(o);
        }
    }
    s
}

/// What a campaign varies per iteration.
#[derive(Debug, Clone)]
pub enum FuzzBase {
    Generated(FuzzConfig),
    /// A fixed scenario, reseeded per iteration; Byzantine behaviors are
    /// redrawn for the same servers.
    Fixed(Scenario),
}

impl FuzzBase {
    pub fn scenario(&self, seed: u64) -> Scenario {
        match self {
            FuzzBase::Generated(cfg) => generate(cfg, seed),
            FuzzBase::Fixed(base) => {
                let mut s = base.clone();
                s.seed = seed;
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                for b in s.byzantine.iter_mut() {
                    b.behavior = *Behavior::ALL.choose(&mut rng).unwrap();
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuzzOutcome {
    pub seed: u64,
    pub scenario: Scenario,
    pub trace: Trace,
    pub verdicts: Vec<Verdict>,
}

impl FuzzOutcome {
    pub fn passed(&self) -> bool {
        checker::all_pass(&self.verdicts)
    }
}

/// Runs `iterations` seed-derived scenarios and checks each trace.
pub fn fuzz(base: &FuzzBase, iterations: usize, seed: u64) -> Result<Vec<FuzzOutcome>, ScenarioError> {
    (0..iterations as u64)
        .map(|i| {
            let it = iteration_seed(seed, i);
            let scenario = base.scenario(it);
            let trace = run(&scenario)?;
            let verdicts = checker::check_all(&trace);
            Ok(FuzzOutcome { seed: it, scenario, trace, verdicts })
        })
        .collect()
}
