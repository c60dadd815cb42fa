//! Scene documents, SVG rendering and the `scenelang` command line.

pub mod cli;
pub mod document;
pub mod svg;
