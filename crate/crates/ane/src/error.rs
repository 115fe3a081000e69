use std::fmt;
use std::io;
use std::path::PathBuf;

/// Pipeline stage an error came from, shown as a message prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Preprocess,
    Proximity,
    Walk,
    Train,
    Export,
    Eval,
    Sweep,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Preprocess => "preprocess",
            Stage::Proximity => "proximity",
            Stage::Walk => "walk",
            Stage::Train => "train",
            Stage::Export => "export",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },

    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("[{stage}] {source}")]
    Core {
        stage: Stage,
        source: ane_core::Error,
    },

    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn core(stage: Stage) -> impl FnOnce(ane_core::Error) -> Error {
        move |source| Error::Core { stage, source }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status: 2 for bad input or usage, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        use ane_core::Error as C;
        match self {
            Error::Read { .. } | Error::Format { .. } | Error::Usage(_) => 2,
            Error::Write { .. } => 1,
            Error::Core { source, .. } => match source {
                C::Parse { .. }
                | C::Validation(_)
                | C::InvalidArgument(_)
                | C::EmptyGraph
                | C::Shape { .. }
                | C::TooLarge { .. } => 2,
                C::Invariant(_) | C::Divergence { .. } => 1,
            },
        }
    }
}
