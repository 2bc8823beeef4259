//! Failure classes and their exit codes.

use rodsim_core::RodError;

use crate::scenario::SchemaError;

/// A failed run, carrying the exit code contract:
/// 1 for environment problems, 2 for scenario schema violations, 3 for
/// solver non-convergence.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable files, unwritable output directory.
    Io(String),
    /// Invalid scenario content; the message names the field.
    Schema(String),
    /// A solver gave up; a diagnostic report may be attached.
    Solver(String, Option<serde_json::Value>),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Schema(_) => 2,
            Failure::Solver(..) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Schema(m) | Failure::Solver(m, _) => m,
        }
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Schema(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Sorts a library error into the exit-code classes. Convergence failures
/// keep their diagnostic report; anything else indicates inadmissible
/// scenario content that slipped past the schema checks.
impl From<RodError> for Failure {
    fn from(e: RodError) -> Self {
        match e {
            RodError::NonConvergence { ref report, .. } => {
                let payload = serde_json::to_value(report.as_ref()).ok();
                Failure::Solver(e.to_string(), payload)
            }
            RodError::StepNonConvergence { .. }
            | RodError::SingularKkt { .. }
            | RodError::BucklingNotDetected { .. } => Failure::Solver(e.to_string(), None),
            other => Failure::Schema(other.to_string()),
        }
    }
}
