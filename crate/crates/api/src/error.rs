use serde::Serialize;
use serde_json::{json, Value};

use cohortloop::cohort::FilterError;
use cohortloop::ehr::CorpusError;
use cohortloop::logstore::LogError;
use cohortloop::pipeline::PipelineError;
use cohortloop::projection::{MatrixError, ProjectionError};
use cohortloop::sampling::SamplingError;
use cohortloop::synth::SpecError;
use cohortloop::timeline::TimelineError;

use crate::lasso::LassoError;

/// An error response: HTTP status plus a machine-readable code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    /// Location of the offending field for 400 responses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into(), path: None, details: None }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "NotFound", message)
    }

    pub fn unprocessable(code: &str, message: impl ToString) -> Self {
        Self::new(422, code, message.to_string())
    }

    pub fn bad_body(path: String, message: impl Into<String>) -> Self {
        ApiError { path: Some(path), ..Self::new(400, "InvalidBody", message) }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn body(&self) -> Value {
        json!({ "error": self })
    }
}

impl From<SamplingError> for ApiError {
    fn from(e: SamplingError) -> Self {
        Self::unprocessable(e.code(), &e)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        Self::unprocessable(e.code(), &e)
    }
}

impl From<ProjectionError> for ApiError {
    fn from(e: ProjectionError) -> Self {
        let code = match e {
            ProjectionError::DegenerateInput(_) => "DegenerateInput",
            ProjectionError::InvalidConfig(_) => "InvalidConfig",
            ProjectionError::NonFinite { .. } => "NonFinite",
        };
        Self::unprocessable(code, &e)
    }
}

impl From<MatrixError> for ApiError {
    fn from(e: MatrixError) -> Self {
        SamplingError::from(e).into()
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        Self::unprocessable("InvalidFilter", &e)
    }
}

impl From<TimelineError> for ApiError {
    fn from(e: TimelineError) -> Self {
        match e {
            TimelineError::IndexOutOfRange { .. } => Self::not_found(e.to_string()),
            TimelineError::NoAdmissions(_) => Self::unprocessable("NoAdmissions", &e),
            TimelineError::PatientMismatch { .. } => Self::new(500, "Internal", e.to_string()),
        }
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::NotFound(_) => Self::not_found(e.to_string()),
            _ => Self::new(500, e.code(), e.to_string()),
        }
    }
}

impl From<LassoError> for ApiError {
    fn from(e: LassoError) -> Self {
        let code = match e {
            LassoError::DegeneratePolygon(_) => "DegeneratePolygon",
            LassoError::NonFinite(_) => "NonFinite",
        };
        Self::unprocessable(code, &e)
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        match &e {
            CorpusError::Schema { path, .. } => {
                ApiError { path: Some(path.clone()), ..Self::unprocessable("SchemaError", &e) }
            }
            CorpusError::Invariant { violations } => {
                let list: Vec<Value> = violations
                    .iter()
                    .map(|v| json!({ "patient_id": v.patient_id, "field": v.field, "rule": v.rule }))
                    .collect();
                Self::unprocessable("InvariantViolation", &e).with_details(Value::Array(list))
            }
        }
    }
}

impl From<SpecError> for ApiError {
    fn from(e: SpecError) -> Self {
        Self::unprocessable("InvalidSpec", &e)
    }
}
