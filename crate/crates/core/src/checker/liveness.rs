//! Wait-freedom: every operation a live correct client invokes responds.

use crate::types::Role;

use super::{Status, Verdict, View};

pub const PROPERTY: &str = "wait_freedom";

pub fn check_wait_freedom(view: &View<'_>) -> Verdict {
    let pending: Vec<_> = view
        .history
        .ops
        .iter()
        .filter(|o| matches!(o.process.role, Role::Writer | Role::Reader) && view.is_live(o.process) && !o.is_complete())
        .collect();
    if pending.is_empty() {
        return Verdict::pass(PROPERTY);
    }
    let list: Vec<String> = pending.iter().map(|o| format!("op {} by {}", o.op, o.process)).collect();
    if !view.quiescent() {
        return Verdict::with_status(PROPERTY, Status::Inconclusive, format!("event cap reached with {} pending", list.join(", ")));
    }
    Verdict::fail(
        PROPERTY,
        pending.iter().map(|o| o.invoke).collect(),
        format!("never responded: {}", list.join(", ")),
    )
}
