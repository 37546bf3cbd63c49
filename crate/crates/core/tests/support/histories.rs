//! Random small single-writer histories, correct and incorrect alike.

use auditreg_core::checker::atomicity::{ReadOp, RegisterHistory, WriteOp};
use auditreg_core::{ProcessId, Timestamp};
use rand::seq::SliceRandom;
use rand::Rng;

fn value_of(ts: u64) -> Vec<u8> {
    if ts == 0 {
        vec![]
    } else {
        format!("v{ts}").into_bytes()
    }
}

/// At most `max_ops` operations. Writes are sequential with increasing
/// timestamps; the last may be pending. Reads pick arbitrary intervals and a
/// timestamp near the written range, occasionally with the wrong value.
pub fn random_history<R: Rng>(rng: &mut R, max_ops: usize) -> RegisterHistory {
    let total = rng.gen_range(1..=max_ops);
    let k = rng.gen_range(0..=total.min(4));
    let reads = total - k;
    let mut slots: Vec<usize> = (0..2 * total).collect();
    slots.shuffle(rng);
    let (wslots, rslots) = slots.split_at_mut(2 * k);
    wslots.sort_unstable();
    let pending_last = k > 0 && rng.gen_bool(0.3);
    let mut h = RegisterHistory::default();
    for i in 0..k {
        let pending = pending_last && i == k - 1;
        let ts = i as u64 + 1;
        h.writes.push(WriteOp {
            ts: Timestamp(ts),
            value: value_of(ts),
            invoke: wslots[2 * i],
            respond: (!pending).then_some(wslots[2 * i + 1]),
        });
    }
    for j in 0..reads {
        let (a, b) = (rslots[2 * j], rslots[2 * j + 1]);
        let ts = rng.gen_range(0..=k as u64 + 1);
        let mut value = value_of(ts);
        if rng.gen_bool(0.05) {
            value.push(b'!');
        }
        h.reads.push(ReadOp {
            process: ProcessId::reader(rng.gen_range(1..=3)),
            ts: Timestamp(ts),
            value,
            invoke: a.min(b),
            respond: a.max(b),
        });
    }
    h
}
