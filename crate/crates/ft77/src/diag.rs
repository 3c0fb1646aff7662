//! Located diagnostics shared by every stage of the pipeline.

use std::fmt;
use std::sync::Arc;

/// Source position, 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loc {
    pub file: Arc<str>,
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(file: impl Into<Arc<str>>, line: u32, col: u32) -> Self {
        Loc { file: file.into(), line, col }
    }

    /// Placeholder for nodes synthesized by a pass rather than parsed.
    pub fn synthetic() -> Self {
        Loc { file: Arc::from("<generated>"), line: 0, col: 0 }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

/// Pipeline stage that produced a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Lex,
    Parse,
    Analysis,
    Refactor,
    Parallel,
    Codegen,
    Runtime,
    Verify,
    Config,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Lex => "lex",
            Stage::Parse => "parse",
            Stage::Analysis => "analysis",
            Stage::Refactor => "refactor",
            Stage::Parallel => "parallel",
            Stage::Codegen => "codegen",
            Stage::Runtime => "runtime",
            Stage::Verify => "verify",
            Stage::Config => "config",
        }
    }
}

/// A hard error with stage and, when known, source location.
#[derive(Debug, Clone)]
pub struct Diag {
    pub stage: Stage,
    pub message: String,
    pub loc: Option<Loc>,
}

impl Diag {
    pub fn new(stage: Stage, message: impl Into<String>, loc: Option<Loc>) -> Self {
        Diag { stage, message: message.into(), loc }
    }

    pub fn at(stage: Stage, loc: Loc, message: impl Into<String>) -> Self {
        Diag::new(stage, message, Some(loc))
    }

    pub fn unlocated(stage: Stage, message: impl Into<String>) -> Self {
        Diag::new(stage, message, None)
    }
}

impl fmt::Display for Diag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.loc {
            Some(loc) => write!(f, "{}: [{}] {}", loc, self.stage.name(), self.message),
            None => write!(f, "[{}] {}", self.stage.name(), self.message),
        }
    }
}

impl std::error::Error for Diag {}

pub type Result<T> = std::result::Result<T, Diag>;
