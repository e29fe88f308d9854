use std::process::ExitCode;

use besa_core::optim::OptimizerReport;
use besa_core::Error;
use serde::Serialize;

/// A failed command: printed as JSON on stderr.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<OptimizerReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
            report: None,
            detail: None,
        }
    }

    pub fn numerical(message: impl Into<String>, report: Option<OptimizerReport>) -> Self {
        Self {
            kind: "numerical",
            message: message.into(),
            report,
            detail: None,
        }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("{}", serde_json::to_string(self).expect("failure serializes"));
        ExitCode::from(if self.kind == "numerical" { 2 } else { 1 })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let detail = match &e {
            Error::Shooting { step, partial, .. } => Some(serde_json::json!({ "step": step, "partial": partial })),
            Error::Generation { velocity, .. } => Some(serde_json::json!({ "velocity": velocity })),
            Error::LeastSquares { residual, target } => {
                Some(serde_json::json!({ "residual": residual, "target": target }))
            }
            _ => None,
        };
        let numerical = matches!(
            e,
            Error::NonFinite(_)
                | Error::DegeneratePath { .. }
                | Error::RankDeficient { .. }
                | Error::LeastSquares { .. }
                | Error::Shooting { .. }
                | Error::Generation { .. }
                | Error::InternalConsistency(_)
        );
        Self {
            kind: if numerical { "numerical" } else { "usage" },
            message,
            report: None,
            detail,
        }
    }
}
