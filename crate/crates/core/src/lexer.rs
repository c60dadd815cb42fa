use std::fmt;

use crate::error::{ParseError, Span};

macro_rules! keywords {
    ($($variant:ident => $text:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Kw { $($variant),* }

        impl Kw {
            pub fn from_str(s: &str) -> Option<Kw> {
                match s { $($text => Some(Kw::$variant),)* _ => None }
            }

            pub fn as_str(self) -> &'static str {
                match self { $(Kw::$variant => $text),* }
            }

            pub const ALL: &'static [Kw] = &[$(Kw::$variant),*];
        }
    };
}

keywords! {
    Ahead => "ahead", Along => "along", And => "and", Angle => "angle", Apparent => "apparent",
    Apparently => "apparently", At => "at", Away => "away", Back => "back", Behind => "behind",
    Beyond => "beyond", By => "by", Can => "can", Class => "class", Def => "def", Deg => "deg",
    Distance => "distance", Elif => "elif", Else => "else", Facing => "facing", False => "False",
    Follow => "follow", Following => "following", For => "for", From => "from", Front => "front",
    Heading => "heading", If => "if", Import => "import", In => "in", Is => "is", Left => "left",
    Mutate => "mutate", None => "None", Not => "not", Of => "of", Offset => "offset", On => "on",
    Or => "or", Param => "param", Pass => "pass", Relative => "relative", Require => "require",
    Return => "return", Right => "right", See => "see", SelfKw => "self", To => "to",
    Toward => "toward", True => "True", Visible => "visible", With => "with",
}

impl fmt::Display for Kw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokKind {
    Name(String),
    Kw(Kw),
    Number(f64),
    Str(String),
    Sym(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Name(n) => write!(f, "identifier '{n}'"),
            TokKind::Kw(k) => write!(f, "'{k}'"),
            TokKind::Number(n) => write!(f, "number {n}"),
            TokKind::Str(s) => write!(f, "string {s:?}"),
            TokKind::Sym(s) => write!(f, "'{s}'"),
            TokKind::Newline => f.write_str("end of line"),
            TokKind::Indent => f.write_str("indent"),
            TokKind::Dedent => f.write_str("dedent"),
            TokKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokKind,
    pub span: Span,
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "(", ")", "[", "]", "{", "}", ",", ":", "=", "<", ">", "+", "-", "*", "/", "@",
    ".", "%",
];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    depth: usize,
    indents: Vec<usize>,
    out: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn span_from(&self, start: usize, line: u32, col: u32) -> Span {
        Span { start, end: self.pos, line, col }
    }

    fn here(&self) -> Span {
        Span { start: self.pos, end: self.pos, line: self.line, col: self.col }
    }

    fn bump(&mut self) -> char {
        let c = self.src[self.pos..].chars().next().unwrap();
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn push(&mut self, kind: TokKind, span: Span) {
        self.out.push(Token { kind, span });
    }

    fn last_is_comma(&self) -> bool {
        matches!(self.out.last(), Some(Token { kind: TokKind::Sym(","), .. }))
    }

    fn at_logical_line_start(&self) -> bool {
        matches!(self.out.last(), None | Some(Token { kind: TokKind::Newline | TokKind::Indent | TokKind::Dedent, .. }))
    }

    /// Handles indentation at the start of a physical line. Returns false
    /// when the line is blank or a comment.
    fn line_start(&mut self) -> Result<bool, ParseError> {
        let mut width = 0usize;
        while let Some(c) = self.peek() {
            match c {
                ' ' => width += 1,
                '\t' => width = (width / 8 + 1) * 8,
                '\r' => {}
                _ => break,
            }
            self.bump();
        }
        match self.peek() {
            None | Some('\n') | Some('#') => return Ok(false),
            _ => {}
        }
        let top = *self.indents.last().unwrap();
        if width > top {
            self.indents.push(width);
            let sp = self.here();
            self.push(TokKind::Indent, sp);
        } else {
            while width < *self.indents.last().unwrap() {
                self.indents.pop();
                let sp = self.here();
                self.push(TokKind::Dedent, sp);
            }
            if width != *self.indents.last().unwrap() {
                return Err(ParseError::new("inconsistent indentation", self.here(), None));
            }
        }
        Ok(true)
    }

    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                if !self.line_start()? {
                    // blank or comment-only line
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                    if self.peek().is_none() {
                        break;
                    }
                    self.bump();
                    continue;
                }
                at_line_start = false;
            }
            let Some(c) = self.peek() else { break };
            let (line, col, start) = (self.line, self.col, self.pos);
            match c {
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                '\\' if matches!(self.peek2(), Some('\n')) || self.src[self.pos + 1..].starts_with("\r\n") => {
                    self.bump();
                    if self.peek() == Some('\r') {
                        self.bump();
                    }
                    self.bump();
                }
                '\n' => {
                    self.bump();
                    if self.depth > 0 || self.last_is_comma() {
                        continue;
                    }
                    if !self.at_logical_line_start() {
                        let sp = Span { start, end: start + 1, line, col };
                        self.push(TokKind::Newline, sp);
                    }
                    at_line_start = true;
                }
                '0'..='9' => self.number(start, line, col)?,
                '.' if matches!(self.peek2(), Some('0'..='9')) => self.number(start, line, col)?,
                '\'' | '"' => self.string(c, start, line, col)?,
                c if c.is_alphabetic() || c == '_' => {
                    while let Some(c) = self.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let text = &self.src[start..self.pos];
                    let kind = match Kw::from_str(text) {
                        Some(k) => TokKind::Kw(k),
                        None => TokKind::Name(text.to_string()),
                    };
                    let sp = self.span_from(start, line, col);
                    self.push(kind, sp);
                }
                _ => {
                    let rest = &self.src[self.pos..];
                    let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                        return Err(ParseError::new(format!("illegal character {c:?}"), self.here(), None));
                    };
                    for _ in 0..sym.len() {
                        self.bump();
                    }
                    match *sym {
                        "(" | "[" | "{" => self.depth += 1,
                        ")" | "]" | "}" => self.depth = self.depth.saturating_sub(1),
                        _ => {}
                    }
                    let sp = self.span_from(start, line, col);
                    self.push(TokKind::Sym(sym), sp);
                }
            }
        }
        if !self.at_logical_line_start() {
            let sp = self.here();
            self.push(TokKind::Newline, sp);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            let sp = self.here();
            self.push(TokKind::Dedent, sp);
        }
        let sp = self.here();
        self.push(TokKind::Eof, sp);
        Ok(self.out)
    }

    fn number(&mut self, start: usize, line: u32, col: u32) -> Result<(), ParseError> {
        while matches!(self.peek(), Some('0'..='9' | '.' | '_')) {
            self.bump();
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = (self.pos, self.line, self.col);
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if matches!(self.peek(), Some('0'..='9')) {
                while matches!(self.peek(), Some('0'..='9')) {
                    self.bump();
                }
            } else {
                (self.pos, self.line, self.col) = save;
            }
        }
        let text: String = self.src[start..self.pos].chars().filter(|&c| c != '_').collect();
        let sp = self.span_from(start, line, col);
        let v: f64 = text.parse().map_err(|_| ParseError::new(format!("malformed number '{text}'"), sp, None))?;
        self.push(TokKind::Number(v), sp);
        Ok(())
    }

    fn string(&mut self, quote: char, start: usize, line: u32, col: u32) -> Result<(), ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    return Err(ParseError::new("unterminated string", self.span_from(start, line, col), None))
                }
                Some('\\') => {
                    self.bump();
                    match self.peek() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some(c) => s.push(c),
                        None => continue,
                    }
                    self.bump();
                }
                Some(c) if c == quote => {
                    self.bump();
                    break;
                }
                Some(c) => {
                    s.push(c);
                    self.bump();
                }
            }
        }
        let sp = self.span_from(start, line, col);
        self.push(TokKind::Str(s), sp);
        Ok(())
    }
}

/// Splits source text into tokens, with explicit indentation tokens.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let lx = Lexer {
        src,
        pos: 0,
        line: 1,
        col: 1,
        depth: 0,
        indents: vec![0],
        out: Vec::new(),
    };
    lx.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn degrees() {
        assert_eq!(kinds("30 deg"), vec![TokKind::Number(30.0), TokKind::Kw(Kw::Deg), TokKind::Newline, TokKind::Eof]);
    }

    #[test]
    fn interval_vector() {
        let k = kinds("(-10, 10) @ (20, 40)");
        assert_eq!(k[0], TokKind::Sym("("));
        assert_eq!(k[1], TokKind::Sym("-"));
        assert_eq!(k[6], TokKind::Sym("@"));
        assert_eq!(k.len(), 14);
    }

    #[test]
    fn empty_source() {
        assert_eq!(kinds(""), vec![TokKind::Eof]);
        assert_eq!(kinds("\n\n# only a comment\n"), vec![TokKind::Eof]);
    }

    #[test]
    fn indentation_blocks() {
        let k = kinds("class A:\n    x: 1\n\n    y: 2\nz = 3\n");
        assert!(k.contains(&TokKind::Indent));
        let dedent = k.iter().position(|t| *t == TokKind::Dedent).unwrap();
        assert_eq!(k[dedent + 1], TokKind::Name("z".into()));
    }

    #[test]
    fn continuations() {
        let k = kinds("a = b \\\n    + c\n");
        assert!(!k[..k.len() - 2].contains(&TokKind::Newline));
        let k = kinds("Car at 1 @ 2,\n    facing 3\nx = 1");
        assert_eq!(k.iter().filter(|t| **t == TokKind::Newline).count(), 2);
        assert!(!k.contains(&TokKind::Indent));
    }

    #[test]
    fn illegal_character_has_span() {
        let e = tokenize("x = 1\ny = $").unwrap_err();
        assert_eq!(e.span.line, 2);
        assert_eq!(e.span.col, 5);
    }

    #[test]
    fn strings_and_keywords() {
        let k = kinds("param weather = 'RAIN'");
        assert_eq!(k[0], TokKind::Kw(Kw::Param));
        assert_eq!(k[3], TokKind::Str("RAIN".into()));
    }
}
