use blockcp::Error;
use serde_json::{json, Value};

pub const CONFIG_EXIT: u8 = 2;
pub const NOT_BLOCK_EXIT: u8 = 3;
pub const NOT_CP_EXIT: u8 = 4;
pub const RESIDUAL_EXIT: u8 = 5;
pub const SIZE_EXIT: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Json(_) => CONFIG_EXIT,
            CliError::Core(e) => match e {
                Error::NotBlock { .. } | Error::GradingMismatch(_) => NOT_BLOCK_EXIT,
                Error::NotCp { .. } => NOT_CP_EXIT,
                Error::SizeExceeded { .. } => SIZE_EXIT,
                Error::NotContraction { .. }
                | Error::NotBilinear { .. }
                | Error::Inconsistent { .. }
                | Error::NormExceeded { .. }
                | Error::NotMorphism { .. }
                | Error::NotSubmodule { .. }
                | Error::NotHermitian { .. } => RESIDUAL_EXIT,
                _ => CONFIG_EXIT,
            },
        }
    }

    pub fn to_value(&self) -> Value {
        let mut v = json!({ "error": self.to_string(), "exit_code": self.exit_code() });
        match self {
            CliError::Core(Error::NotCp { min_eigenvalue }) => v["min_eigenvalue"] = json!(min_eigenvalue),
            CliError::Core(Error::SizeExceeded { dim, limit }) => {
                v["dimension"] = json!(dim);
                v["limit"] = json!(limit);
            }
            CliError::Core(Error::NotBlock { leakage }) => v["leakage"] = json!(leakage),
            _ => {}
        }
        v
    }
}
