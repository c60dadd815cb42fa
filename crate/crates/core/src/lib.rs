pub mod ast;
pub mod error;
pub mod evaluator;
pub mod lexer;
pub mod modules;
pub mod object_model;
pub mod parser;
pub mod pruning;
pub mod sampler;
pub mod specifier;
pub mod values;
pub mod world;

pub use error::{Error, ParseError, ResolveError, Result, Span};
