use eslqr_core::Error as CoreError;

/// Failure classes, each mapped to one process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    /// A run stopped early; its outputs were still written.
    Diverged(u64),
    /// A verification report was written and did not pass.
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) | CliError::CheckFailed(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Diverged(k) => write!(f, "run diverged at iteration {k}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::DimensionMismatch { .. }
            | CoreError::NotSquare { .. }
            | CoreError::InvalidCost(_)
            | CoreError::InvalidParams(_)
            | CoreError::InvalidDither(_)
            | CoreError::NotAverageable(_) => CliError::Config(e.to_string()),
            CoreError::UnstableClosedLoop { .. }
            | CoreError::NonFinite(_)
            | CoreError::LyapunovResidual { .. }
            | CoreError::Uncontrollable { .. }
            | CoreError::DareNotConverged { .. } => CliError::Solver(e.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}
