use std::fmt;

/// Pipeline stage an error was raised in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Engineer,
    Split,
    Normalize,
    Partition,
    Enumerate,
    Prune,
    Estimate,
    Cluster,
    Merge,
    Evaluate,
    ModelFile,
    Predict,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Engineer => "engineer",
            Stage::Split => "split",
            Stage::Normalize => "normalize",
            Stage::Partition => "partition",
            Stage::Enumerate => "enumerate",
            Stage::Prune => "prune",
            Stage::Estimate => "estimate",
            Stage::Cluster => "cluster",
            Stage::Merge => "merge",
            Stage::Evaluate => "evaluate",
            Stage::ModelFile => "model-file",
            Stage::Predict => "predict",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(stage: Stage, kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn config(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Config, message)
    }

    pub fn data(stage: Stage, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorKind::Data, message)
    }

    /// Classifies a library error raised during `stage`.
    pub fn from_core(stage: Stage, err: gridts::Error) -> Self {
        use gridts::Error as E;
        let kind = match &err {
            E::EmptyRuleBase { .. } | E::RankDeficient { .. } | E::Numerical(_) => ErrorKind::Numerical,
            E::DegenerateUniverse { .. }
            | E::Ordering(_)
            | E::Construction(_)
            | E::InvalidArgument(_)
            | E::Domain(_)
                if matches!(stage, Stage::Partition | Stage::Enumerate | Stage::Config) =>
            {
                ErrorKind::Config
            }
            _ => ErrorKind::Data,
        };
        Self::new(stage, kind, err.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

/// Attaches a stage to library results.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError>;
}

impl<T> StageExt<T> for gridts::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}
