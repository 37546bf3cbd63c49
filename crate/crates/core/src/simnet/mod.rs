//! Deterministic discrete-event simulation of the register deployment.

pub mod byzantine;
pub mod fuzz;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use byzantine::{Behavior, WriterBehavior};
pub use scenario::{CrashSpec, CrashTrigger, Hold, OpKind, OpSpec, ParamSpec, Policy, Release, Scenario, ScenarioError};
pub use sim::run;
pub use trace::{EventKind, RunEnd, Trace, TraceError, TraceEvent};
