//! Projection of a trace onto invocations and responses.

use crate::node::{OpResult, Operation};
use crate::simnet::trace::{EventKind, Trace};
use crate::types::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    /// Script index.
    pub op: usize,
    pub process: ProcessId,
    pub operation: Operation,
    pub invoke: usize,
    pub respond: Option<(usize, OpResult)>,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.respond.is_some()
    }

    pub fn respond_index(&self) -> Option<usize> {
        self.respond.as_ref().map(|(i, _)| *i)
    }

    pub fn operation_kind(&self) -> &'static str {
        match self.operation {
            Operation::Write { .. } | Operation::MwWrite { .. } => "write",
            Operation::Read => "read",
            Operation::Audit => "audit",
        }
    }

    pub fn events(&self) -> Vec<usize> {
        let mut v = vec![self.invoke];
        v.extend(self.respond_index());
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    /// In invocation order.
    pub ops: Vec<OpRecord>,
}

impl History {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut ops: Vec<OpRecord> = vec![];
        for e in &trace.events {
            match &e.kind {
                EventKind::Invoke { op, operation } => ops.push(OpRecord {
                    op: *op,
                    process: e.process,
                    operation: operation.clone(),
                    invoke: e.index,
                    respond: None,
                }),
                EventKind::Respond { op, result } => {
                    if let Some(r) = ops.iter_mut().find(|r| r.op == *op && r.respond.is_none()) {
                        r.respond = Some((e.index, result.clone()));
                    }
                }
                _ => {}
            }
        }
        History { ops }
    }

    pub fn get(&self, op: usize) -> Option<&OpRecord> {
        self.ops.iter().find(|r| r.op == op)
    }
}
