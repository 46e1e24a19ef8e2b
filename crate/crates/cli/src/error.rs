use std::fmt;
use std::path::Path;

use ipg_core::desires::DesireError;
use ipg_core::discretizer::DiscretizeError;
use ipg_core::graph::GraphError;
use ipg_core::intention::IntentionError;
use ipg_core::metrics::MetricsError;
use ipg_core::qa::QaError;
use ipg_core::state::ParseError;
use ipg_core::synth::SynthError;
use ipg_core::trajectory::TrajectoryError;

/// Machine-readable failure classes; each maps to its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Usage,
    Io,
    Parse,
    NoObservations,
    NoScenes,
    InvalidScene,
    InvalidConfig,
    InvalidDesires,
    InvalidArgument,
    NotConverged,
    UnknownState,
    UnknownDesire,
    UnknownScene,
    Mismatch,
}

impl Code {
    pub const ALL: [Code; 14] = [
        Code::Usage,
        Code::Io,
        Code::Parse,
        Code::NoObservations,
        Code::NoScenes,
        Code::InvalidScene,
        Code::InvalidConfig,
        Code::InvalidDesires,
        Code::InvalidArgument,
        Code::NotConverged,
        Code::UnknownState,
        Code::UnknownDesire,
        Code::UnknownScene,
        Code::Mismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Code::Usage => "USAGE",
            Code::Io => "IO",
            Code::Parse => "PARSE",
            Code::NoObservations => "NO_OBSERVATIONS",
            Code::NoScenes => "NO_SCENES",
            Code::InvalidScene => "INVALID_SCENE",
            Code::InvalidConfig => "INVALID_CONFIG",
            Code::InvalidDesires => "INVALID_DESIRES",
            Code::InvalidArgument => "INVALID_ARGUMENT",
            Code::NotConverged => "NOT_CONVERGED",
            Code::UnknownState => "UNKNOWN_STATE",
            Code::UnknownDesire => "UNKNOWN_DESIRE",
            Code::UnknownScene => "UNKNOWN_SCENE",
            Code::Mismatch => "MISMATCH",
        }
    }

    pub fn exit_status(self) -> i32 {
        2 + Code::ALL.iter().position(|c| *c == self).expect("listed") as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

impl CliError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::new(Code::Io, format!("{}: {e}", path.display()))
    }

    pub fn parse(path: &Path, e: impl fmt::Display) -> Self {
        CliError::new(Code::Parse, format!("{}: {e}", path.display()))
    }

    /// Prefix the message with the file it concerns, keeping the code.
    pub fn at(self, path: &Path) -> Self {
        CliError::new(self.code, format!("{}: {}", path.display(), self.message))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self
            .message
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("; ");
        write!(f, "error[{}]: {one_line}", self.code.as_str())
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        let code = match e {
            GraphError::NoObservations => Code::NoObservations,
            GraphError::EmptyTrajectory(_) => Code::Parse,
            GraphError::StateNotObserved(_) => Code::UnknownState,
            GraphError::ActionNotObserved { .. } => Code::InvalidArgument,
            GraphError::Format(_) => Code::Parse,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<IntentionError> for CliError {
    fn from(e: IntentionError) -> Self {
        let code = match e {
            IntentionError::InvalidTolerance(_) | IntentionError::InvalidDiscount(_) => {
                Code::InvalidArgument
            }
            IntentionError::NonConvergence { .. } | IntentionError::Singular(_) => {
                Code::NotConverged
            }
            IntentionError::TooLarge { .. } => Code::InvalidArgument,
            IntentionError::UnknownDesire(_) => Code::UnknownDesire,
            IntentionError::UnknownState(_) => Code::UnknownState,
            IntentionError::Format(_) => Code::Parse,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::InvalidThreshold(_) => {
                CliError::new(Code::InvalidArgument, e.to_string())
            }
            MetricsError::Mismatch(_) => CliError::new(Code::Mismatch, e.to_string()),
            MetricsError::Intention(e) => e.into(),
            MetricsError::Graph(e) => e.into(),
        }
    }
}

impl From<QaError> for CliError {
    fn from(e: QaError) -> Self {
        match e {
            QaError::UnknownState(_) => CliError::new(Code::UnknownState, e.to_string()),
            QaError::UnknownDesire(_) => CliError::new(Code::UnknownDesire, e.to_string()),
            QaError::TraceStateMissing { .. } => CliError::new(Code::Mismatch, e.to_string()),
            QaError::Graph(e) => e.into(),
            QaError::Intention(e) => e.into(),
        }
    }
}

impl From<DesireError> for CliError {
    fn from(e: DesireError) -> Self {
        let code = match e {
            DesireError::Invalid(_) => Code::InvalidDesires,
            DesireError::Unknown(_) => Code::UnknownDesire,
            DesireError::Io { .. } => Code::Io,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<DiscretizeError> for CliError {
    fn from(e: DiscretizeError) -> Self {
        let code = match e {
            DiscretizeError::EmptyScene(_) | DiscretizeError::InvalidScene(_) => Code::InvalidScene,
            DiscretizeError::Config(_) => Code::InvalidConfig,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Discretize(e) => e.into(),
            SynthError::NoFrames => CliError::new(Code::InvalidArgument, e.to_string()),
            SynthError::World(_) | SynthError::Policy { .. } => {
                CliError::new(Code::InvalidConfig, e.to_string())
            }
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        let code = match e {
            TrajectoryError::Io(_) => Code::Io,
            _ => Code::Parse,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::new(Code::InvalidArgument, e.to_string())
    }
}
