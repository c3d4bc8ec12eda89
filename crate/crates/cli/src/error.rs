use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation,
    Runtime,
}

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn validation(stage: &'static str, message: impl Into<String>) -> Self {
        Self { stage, kind: Kind::Validation, message: message.into() }
    }

    pub fn runtime(stage: &'static str, message: impl Into<String>) -> Self {
        Self { stage, kind: Kind::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Validation => 1,
            Kind::Runtime => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error in {}: {}", self.stage, self.message)
    }
}

/// Attach a stage to library errors, keeping the validation/runtime split.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for ppgan::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            stage,
            kind: if e.is_validation() { Kind::Validation } else { Kind::Runtime },
            message: e.to_string(),
        })
    }
}
