use std::fmt;

/// Byte range in the source plus the 1-based line and column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end.max(self.end), line: self.line, col: self.col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
    pub expected: Option<String>,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: Span, expected: Option<String>) -> Self {
        ParseError { message: message.into(), span, expected }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// Errors from specifier resolution.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolveError {
    #[error("{span}: property {property} specified twice")]
    SpecifiedTwice { property: String, span: Span },
    #[error("{span}: missing property {property} required by {specifier}")]
    MissingProperty { property: String, specifier: String, span: Span },
    #[error("{span}: specifiers have cyclic dependencies")]
    Cyclic { span: Span },
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Resolve(#[from] ResolveError),
    #[error("{span}: {message}")]
    Construct { message: String, span: Span },
    #[error("{}sample error: {message}", span.map(|s| format!("{s}: ")).unwrap_or_default())]
    Sample { message: String, span: Option<Span> },
    #[error("sampling gave up after {iterations} iterations")]
    Exhausted { iterations: usize, histogram: Vec<(String, usize)> },
    #[error("world error: {0}")]
    World(String),
    #[error("{0}")]
    Io(String),
}

impl Error {
    pub fn construct(message: impl Into<String>, span: Span) -> Self {
        Error::Construct { message: message.into(), span }
    }

    pub fn sample(message: impl Into<String>, span: Option<Span>) -> Self {
        Error::Sample { message: message.into(), span }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
