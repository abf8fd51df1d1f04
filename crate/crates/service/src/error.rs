use serde::Serialize;

/// Error body shared by every endpoint and the CLI's JSON output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into() }
    }
    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(404, "not_found", what)
    }
    pub fn bad_request(msg: impl Into<String>) -> Self {
        Self::new(400, "invalid_argument", msg)
    }
    pub fn censored(reason: impl Into<String>) -> Self {
        Self::new(403, "censored", reason)
    }
    pub fn busy(msg: impl Into<String>) -> Self {
        Self::new(503, "busy", msg)
    }
}

impl From<botdyn::Error> for ApiError {
    fn from(e: botdyn::Error) -> Self {
        let code = e.code();
        let status = match code {
            "io" => 500,
            "budget_exceeded" | "hypothesis_violated" | "plan_not_found" | "plan_validation" | "pivot_not_bijective"
            | "model_mismatch" | "replay_diverged" | "invalid_discriminant_output" => 422,
            _ => 400,
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

pub type ApiResult<T> = Result<T, ApiError>;
