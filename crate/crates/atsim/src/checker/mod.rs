//! Verdict machinery: linearizability search against the sequential
//! specification, the relaxed two-part check for the message-passing
//! protocol, and online trace monitors.

pub mod history;
pub mod linearize;
pub mod monitors;
pub mod relaxed;

pub use history::{History, OpSpan};
pub use linearize::{
    check_linearizable, check_sequentially_consistent, CheckerError, OrderConstraint,
    SearchLimits, Verdict,
};
pub use monitors::{monitors, MonitorCtx, Violation};
pub use relaxed::{check_relaxed, RelaxedMode, RelaxedReport};
