use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use crate::ast::{Program, StmtKind};
use crate::error::{ParseError, Span};
use crate::parser::Parser;

/// Environment variable holding extra module directories, separated like `PATH`.
pub const PATH_VAR: &str = "SCENELANG_PATH";

const BUNDLED: &[(&str, &str)] = &[
    ("common", include_str!("../lib/common.scn")),
    ("mars", include_str!("../lib/mars.scn")),
];

#[derive(Debug)]
pub struct Module {
    pub name: String,
    pub program: Program,
    /// Classes visible after importing, including those of nested imports.
    pub classes: Vec<String>,
}

/// Finds, parses and caches imported modules.
#[derive(Debug, Default)]
pub struct Loader {
    search: Vec<PathBuf>,
    cache: RefCell<HashMap<String, Arc<Module>>>,
    loading: RefCell<HashSet<String>>,
}

impl Loader {
    /// Searches `dirs` first, then the directories in `SCENELANG_PATH`, then
    /// the bundled library.
    pub fn new(dirs: Vec<PathBuf>) -> Self {
        let mut search = dirs;
        if let Some(p) = std::env::var_os(PATH_VAR) {
            search.extend(std::env::split_paths(&p));
        }
        Loader { search, ..Default::default() }
    }

    pub fn get(&self, name: &str) -> Option<Arc<Module>> {
        self.cache.borrow().get(name).cloned()
    }

    fn source(&self, name: &str) -> Option<String> {
        let rel: PathBuf = name.split('.').collect::<PathBuf>().with_extension("scn");
        for dir in &self.search {
            if let Ok(s) = std::fs::read_to_string(dir.join(&rel)) {
                return Some(s);
            }
        }
        BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| s.to_string())
    }

    pub fn load(&self, name: &str, span: Span) -> Result<Arc<Module>, ParseError> {
        if let Some(m) = self.get(name) {
            return Ok(m);
        }
        if !self.loading.borrow_mut().insert(name.to_string()) {
            return Err(ParseError::new(format!("circular import of {name}"), span, None));
        }
        let result = self.load_fresh(name, span);
        self.loading.borrow_mut().remove(name);
        let m = Arc::new(result?);
        self.cache.borrow_mut().insert(name.to_string(), m.clone());
        Ok(m)
    }

    fn load_fresh(&self, name: &str, span: Span) -> Result<Module, ParseError> {
        let Some(src) = self.source(name) else {
            return Err(ParseError::new(format!("cannot find module {name}"), span, None));
        };
        let program = self
            .parse(&src, &[])
            .map_err(|e| ParseError::new(format!("in module {name}: {}", e.message), e.span, e.expected))?;
        let classes = self.exported_classes(&program);
        Ok(Module { name: name.to_string(), program, classes })
    }

    /// Parses source whose imports are resolved through this loader.
    pub fn parse(&self, src: &str, classes: &[String]) -> Result<Program, ParseError> {
        Parser::new(src, classes)?
            .with_import_hook(Box::new(|name, span| Ok(self.load(name, span)?.classes.clone())))
            .program()
    }

    /// Classes a program makes visible: its own plus those it imports.
    pub fn exported_classes(&self, program: &Program) -> Vec<String> {
        let mut out = Vec::new();
        for s in &program.body {
            match &s.kind {
                StmtKind::ClassDef { name, .. } => out.push(name.clone()),
                StmtKind::Import(m) => {
                    if let Some(m) = self.get(m) {
                        out.extend(m.classes.iter().cloned());
                    }
                }
                _ => {}
            }
        }
        out.sort();
        out.dedup();
        out
    }
}
