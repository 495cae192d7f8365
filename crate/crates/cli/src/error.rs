use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error(transparent)]
    Core(#[from] layoutie::Error),

    #[error(transparent)]
    Nn(#[from] layoutie_nn::NnError),

    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::MissingInput(_) => 3,
            _ => 1,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({ "message": self.to_string() });
        match self {
            CliError::Config { key, .. } => {
                v["error"] = "config".into();
                v["key"] = key.as_str().into();
            }
            CliError::MissingInput(p) => {
                v["error"] = "missing_input".into();
                v["path"] = p.display().to_string().into();
            }
            _ => v["error"] = "run".into(),
        }
        v
    }
}
