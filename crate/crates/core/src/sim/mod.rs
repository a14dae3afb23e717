//! Functional and cost simulation of programs at every lowering stage.
//!
//! Tensor and cim ops are evaluated directly. CAM ops act on per-subarray
//! cell state and are costed: each write or search occupies one step,
//! iterations of parallel loops share a start step, and a step lasts as
//! long as its slowest event.

mod cells;
mod interp;
mod metrics;
mod ops;
mod oracle;
mod tensor;

use thiserror::Error;

pub use cells::{MatchResult, Subarray, X};
pub use oracle::{dense_oracle, Filter};
pub use metrics::{Counters, Metrics, TraceEvent, TRACE_HEADER};
pub use tensor::{int_range, Data, Tensor, TensorError};

use crate::arch::TechParams;
use crate::ir::Module;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{0}")]
    Input(String),
    #[error("{op}: {message}")]
    Exec { op: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub outputs: Vec<Tensor>,
    pub metrics: Metrics,
    /// Empty unless tracing was requested.
    pub trace: Vec<TraceEvent>,
}

/// Run the first function of `m` (or `name`) on `inputs`.
pub fn execute(m: &Module, name: Option<&str>, inputs: &[Tensor], tech: &TechParams, trace: bool) -> Result<Execution, SimError> {
    let f = match name {
        Some(n) => m
            .function(n)
            .ok_or_else(|| SimError::Input(format!("no function @{n}")))?,
        None => match m.functions.first() {
            Some(f) => f,
            None => {
                return Ok(Execution {
                    outputs: Vec::new(),
                    metrics: metrics_of_nothing(tech),
                    trace: Vec::new(),
                })
            }
        },
    };
    let mut machine = interp::Machine::new(f, tech, trace);
    let outputs = machine.run(inputs)?;
    let metrics = machine.metrics();
    Ok(Execution {
        outputs,
        metrics,
        trace: std::mem::take(&mut machine.events),
    })
}

fn metrics_of_nothing(tech: &TechParams) -> Metrics {
    Metrics::compute(tech, Counters::default(), &Default::default(), 0, 0)
}
