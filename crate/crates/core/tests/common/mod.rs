#![allow(dead_code)]

use std::path::PathBuf;

use usersim::agents::{AgentError, GuestResponder, Reply, ResponseInput};
use usersim::domain::TelemetryRecord;
use usersim::harness::{load_scenarios, Scenarios};

pub fn bundle_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/restaurant")
}

pub fn bundle() -> Scenarios {
    load_scenarios(&bundle_dir()).expect("example bundle loads")
}

/// Guest that cycles through `period` distinct messages and never
/// finishes its order.
pub struct CyclingGuest {
    pub period: u32,
}

impl GuestResponder for CyclingGuest {
    fn respond(&self, input: &ResponseInput<'_>) -> Result<Reply, AgentError> {
        let k = (input.turn - 1) % self.period;
        Ok(Reply {
            text: format!("Let me think about option number {k} for a moment."),
            telemetry: TelemetryRecord::default(),
            claims_complete: false,
        })
    }
}
