//! Built-in verification suites, one per acceptance criterion.
//!
//! Each check returns a [`CheckOutcome`] with a one-line detail. The quick
//! level covers the algebraic checks; the full level adds the variance,
//! momentum, equivalence and convergence suites.

mod algebra;
mod convergence;
mod reductions;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;

pub use algebra::{
    consensus_equivalence, control_variate_unbiased, projector_algebra, projector_algebra_with, theta_sequence,
    variance_identities, NullProjector,
};
pub use convergence::{acceleration, noise_floor, projection_trend, restart_halving, svrg_linear_rate};
pub use reductions::{lifted_equivalence, reductions};

/// Result of a check body: a detail line on success, the violated
/// invariant on failure.
pub type CheckResult = std::result::Result<String, String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level {other:?}, expected quick or full")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} {:>8.2}s / {:>4}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs(),
            self.detail
        )
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub limit: Duration,
    pub quick: bool,
    pub body: fn() -> CheckResult,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "projector algebra", limit: secs(5), quick: true, body: || projector_algebra(200) },
    Criterion { id: 2, name: "consensus projection", limit: secs(1), quick: true, body: consensus_equivalence },
    Criterion { id: 3, name: "variance identities", limit: secs(10), quick: false, body: || variance_identities(20) },
    Criterion { id: 4, name: "momentum sequence", limit: secs(1), quick: false, body: || theta_sequence(10_000) },
    Criterion { id: 5, name: "reductions", limit: secs(10), quick: true, body: reductions },
    Criterion { id: 6, name: "lifted equivalence", limit: secs(30), quick: false, body: lifted_equivalence },
    Criterion { id: 7, name: "noise floor removal", limit: secs(180), quick: false, body: noise_floor },
    Criterion { id: 8, name: "linear convergence", limit: secs(60), quick: false, body: svrg_linear_rate },
    Criterion { id: 9, name: "projection trend", limit: secs(180), quick: false, body: projection_trend },
    Criterion { id: 10, name: "restart halving", limit: secs(120), quick: false, body: restart_halving },
    Criterion { id: 11, name: "acceleration", limit: secs(180), quick: false, body: acceleration },
    Criterion {
        id: 12,
        name: "control variate unbiased",
        limit: secs(5),
        quick: true,
        body: || control_variate_unbiased(50),
    },
];

/// Runs one criterion, timing it against its limit.
pub fn run_criterion(c: &Criterion) -> CheckOutcome {
    let start = Instant::now();
    let result = (c.body)();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if passed && elapsed > c.limit {
        passed = false;
        detail = format!("over time limit; {detail}");
    }
    CheckOutcome { id: c.id, name: c.name, passed, detail, elapsed, limit: c.limit }
}

pub fn criterion(id: u32) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id == id)
}

/// Runs every criterion of the level in order.
pub fn run_suite(level: Level) -> Vec<CheckOutcome> {
    CRITERIA.iter().filter(|c| level == Level::Full || c.quick).map(run_criterion).collect()
}

fn fail<T>(msg: impl Into<String>) -> std::result::Result<T, String> {
    Err(msg.into())
}

fn err_str(e: crate::Error) -> String {
    e.to_string()
}
