//! CLI error type with the exit-code mapping.

use hybridq_core::SimError;

#[derive(Debug)]
pub enum CliError {
    Config { field: String, reason: String },
    Numerical(SimError),
    Assertion { what: String },
    Io { path: String, source: std::io::Error },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { field, reason } => write!(f, "config error at {field}: {reason}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Assertion { what } => write!(f, "invariant assertion failed: {what}"),
            CliError::Io { path, source } => write!(f, "io error on {path}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig { reason } => CliError::Config {
                field: "<config>".to_string(),
                reason,
            },
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    /// Exit codes: 2 config, 3 numerical failure, 4 assertion failure, 1 io.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Assertion { .. } => 4,
            CliError::Io { .. } => 1,
        }
    }

    /// Machine-readable error record for stderr.
    pub fn to_json(&self) -> String {
        let (kind, detail) = match self {
            CliError::Config { field, reason } => ("config", format!("{field}: {reason}")),
            CliError::Numerical(e) => ("numerical", e.to_string()),
            CliError::Assertion { what } => ("assertion", what.clone()),
            CliError::Io { path, source } => ("io", format!("{path}: {source}")),
        };
        format!(
            "{{\"error\":{},\"exit_code\":{},\"detail\":{}}}",
            serde_json::to_string(kind).expect("string"),
            self.exit_code(),
            serde_json::to_string(&detail).expect("string"),
        )
    }
}
