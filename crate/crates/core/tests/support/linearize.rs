//! Exhaustive linearization search for single-writer register histories.
//! Reads are matched to writes by timestamp; pending writes may or may not
//! take effect.

use auditreg_core::checker::atomicity::RegisterHistory;
use auditreg_core::Timestamp;

#[derive(Clone, Copy)]
enum Op {
    Write(usize),
    Read(usize),
}

struct Item {
    op: Op,
    invoke: usize,
    respond: usize,
    optional: bool,
}

pub fn linearizable(h: &RegisterHistory) -> bool {
    let mut items: Vec<Item> = h
        .writes
        .iter()
        .enumerate()
        .map(|(i, w)| Item { op: Op::Write(i), invoke: w.invoke, respond: w.respond.unwrap_or(usize::MAX), optional: w.respond.is_none() })
        .collect();
    items.extend(h.reads.iter().enumerate().map(|(i, r)| Item { op: Op::Read(i), invoke: r.invoke, respond: r.respond, optional: false }));
    let mut used = vec![false; items.len()];
    search(h, &items, &mut used, (Timestamp::INITIAL, h.initial.clone()))
}

fn search(h: &RegisterHistory, items: &[Item], used: &mut [bool], state: (Timestamp, Vec<u8>)) -> bool {
    if items.iter().zip(used.iter()).all(|(it, u)| *u || it.optional) {
        return true;
    }
    for i in 0..items.len() {
        if used[i] {
            continue;
        }
        // i may go next only if no unplaced mandatory op finished before i began
        let blocked = items
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && !used[j] && !o.optional && o.respond < items[i].invoke);
        if blocked {
            continue;
        }
        let next = match items[i].op {
            Op::Write(w) => (h.writes[w].ts, h.writes[w].value.clone()),
            Op::Read(r) => {
                let rd = &h.reads[r];
                if (rd.ts, &rd.value) != (state.0, &state.1) {
                    continue;
                }
                state.clone()
            }
        };
        used[i] = true;
        if search(h, items, used, next) {
            used[i] = false;
            return true;
        }
        used[i] = false;
    }
    false
}
