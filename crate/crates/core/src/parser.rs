use std::collections::HashSet;

use crate::ast::*;
use crate::error::{ParseError, Span};
use crate::lexer::{tokenize, Kw, TokKind, Token};

pub const BUILTIN_CLASSES: &[&str] = &["Point", "OrientedPoint", "Object"];

type PResult<T> = Result<T, ParseError>;

/// Supplies the class names exported by an imported module.
pub type ImportHook<'h> = Box<dyn FnMut(&str, Span) -> PResult<Vec<String>> + 'h>;

pub struct Parser<'a, 'h> {
    toks: Vec<Token>,
    pos: usize,
    src: &'a str,
    classes: HashSet<String>,
    on_import: Option<ImportHook<'h>>,
}

/// Parses a whole program. Only the built-in classes plus `classes` are
/// known up front; imports contribute nothing.
pub fn parse_program(src: &str, classes: &[String]) -> PResult<Program> {
    Parser::new(src, classes)?.program()
}

impl<'a, 'h> Parser<'a, 'h> {
    pub fn new(src: &'a str, classes: &[String]) -> PResult<Self> {
        let mut known: HashSet<String> = BUILTIN_CLASSES.iter().map(|s| s.to_string()).collect();
        known.extend(classes.iter().cloned());
        Ok(Parser { toks: tokenize(src)?, pos: 0, src, classes: known, on_import: None })
    }

    pub fn with_import_hook(mut self, hook: ImportHook<'h>) -> Self {
        self.on_import = Some(hook);
        self
    }

    pub fn known_classes(&self) -> &HashSet<String> {
        &self.classes
    }

    fn peek(&self) -> &TokKind {
        &self.toks[self.pos].kind
    }

    fn peek_at(&self, n: usize) -> &TokKind {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, k: Kw) -> bool {
        *self.peek() == TokKind::Kw(k)
    }

    fn is_kw_at(&self, n: usize, k: Kw) -> bool {
        *self.peek_at(n) == TokKind::Kw(k)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), TokKind::Sym(x) if *x == s)
    }

    fn eat_kw(&mut self, k: Kw) -> bool {
        if self.is_kw(k) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: impl Into<String>, expected: Option<&str>) -> PResult<T> {
        Err(ParseError::new(msg, self.span(), expected.map(str::to_string)))
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        self.err(format!("unexpected {}", self.peek()), Some(expected))
    }

    fn expect_kw(&mut self, k: Kw) -> PResult<Span> {
        if self.is_kw(k) {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("'{k}'"))
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<Span> {
        if self.is_sym(s) {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("'{s}'"))
        }
    }

    fn expect_name(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            TokKind::Name(n) => {
                let sp = self.advance().span;
                Ok((n, sp))
            }
            TokKind::Kw(k) => self.err(format!("'{k}' is a reserved word"), Some("identifier")),
            _ => self.unexpected("identifier"),
        }
    }

    /// Property names may coincide with keywords, e.g. `heading`.
    fn expect_property(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            TokKind::Name(n) => {
                let sp = self.advance().span;
                Ok((n, sp))
            }
            TokKind::Kw(k) if !matches!(k, Kw::True | Kw::False | Kw::None) => {
                let sp = self.advance().span;
                Ok((k.as_str().to_string(), sp))
            }
            _ => self.unexpected("property name"),
        }
    }

    fn end_of_statement(&mut self) -> PResult<()> {
        match self.peek() {
            TokKind::Newline => {
                self.advance();
                Ok(())
            }
            TokKind::Eof | TokKind::Dedent => Ok(()),
            _ => self.unexpected("end of line"),
        }
    }

    pub fn program(mut self) -> PResult<Program> {
        let mut body = Vec::new();
        while *self.peek() != TokKind::Eof {
            if *self.peek() == TokKind::Newline {
                self.advance();
                continue;
            }
            if *self.peek() == TokKind::Indent {
                return self.err("unexpected indent", None);
            }
            body.push(self.statement()?);
        }
        Ok(Program { body })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_sym(":")?;
        if *self.peek() != TokKind::Newline {
            return self.unexpected("end of line before indented block");
        }
        self.advance();
        if *self.peek() != TokKind::Indent {
            return self.unexpected("indented block");
        }
        self.advance();
        let mut body = Vec::new();
        while !matches!(self.peek(), TokKind::Dedent | TokKind::Eof) {
            if *self.peek() == TokKind::Newline {
                self.advance();
                continue;
            }
            body.push(self.statement()?);
        }
        if *self.peek() == TokKind::Dedent {
            self.advance();
        }
        Ok(body)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = match self.peek().clone() {
            TokKind::Kw(Kw::Import) => {
                self.advance();
                let mut name = self.expect_name()?.0;
                while self.eat_sym(".") {
                    name.push('.');
                    name.push_str(&self.expect_name()?.0);
                }
                if let Some(hook) = self.on_import.as_mut() {
                    let cls = hook(&name, start)?;
                    self.classes.extend(cls);
                }
                self.end_of_statement()?;
                StmtKind::Import(name)
            }
            TokKind::Kw(Kw::Param) => {
                self.advance();
                let mut items = Vec::new();
                loop {
                    let (n, _) = self.expect_name()?;
                    self.expect_sym("=")?;
                    items.push((n, self.expr()?));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.end_of_statement()?;
                StmtKind::Param(items)
            }
            TokKind::Kw(Kw::Class) => self.class_def()?,
            TokKind::Kw(Kw::Def) => self.func_def()?,
            TokKind::Kw(Kw::Require) => {
                self.advance();
                let mut prob = None;
                if self.eat_sym("[") {
                    let sp = self.span();
                    let p = match self.peek().clone() {
                        TokKind::Number(n) => {
                            self.advance();
                            n
                        }
                        _ => return self.unexpected("probability literal"),
                    };
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(ParseError::new(
                            format!("soft requirement probability {p} outside (0, 1]"),
                            sp,
                            None,
                        ));
                    }
                    self.expect_sym("]")?;
                    prob = Some(p);
                }
                let cond = self.expr()?;
                self.end_of_statement()?;
                StmtKind::Require { prob, cond }
            }
            TokKind::Kw(Kw::Mutate) => {
                self.advance();
                let mut targets = Vec::new();
                if !matches!(self.peek(), TokKind::Newline | TokKind::Eof | TokKind::Dedent) && !self.is_kw(Kw::By) {
                    loop {
                        targets.push(self.postfix()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                let scale = if self.eat_kw(Kw::By) { Some(self.expr()?) } else { None };
                self.end_of_statement()?;
                StmtKind::Mutate { targets, scale }
            }
            TokKind::Kw(Kw::For) => {
                self.advance();
                let (var, _) = self.expect_name()?;
                self.expect_kw(Kw::In)?;
                match self.peek() {
                    TokKind::Name(n) if n == "range" => {
                        self.advance();
                    }
                    _ => return self.unexpected("'range'"),
                }
                self.expect_sym("(")?;
                let count = self.expr()?;
                self.expect_sym(")")?;
                let body = self.block()?;
                StmtKind::For { var, count, body }
            }
            TokKind::Kw(Kw::If) => {
                self.advance();
                let mut branches = vec![];
                let c = self.expr()?;
                branches.push((c, self.block()?));
                let mut orelse = None;
                loop {
                    if self.eat_kw(Kw::Elif) {
                        let c = self.expr()?;
                        branches.push((c, self.block()?));
                    } else if self.eat_kw(Kw::Else) {
                        orelse = Some(self.block()?);
                        break;
                    } else {
                        break;
                    }
                }
                StmtKind::If { branches, orelse }
            }
            TokKind::Kw(Kw::Return) => {
                self.advance();
                let v = if matches!(self.peek(), TokKind::Newline | TokKind::Eof | TokKind::Dedent) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.end_of_statement()?;
                StmtKind::Return(v)
            }
            TokKind::Kw(Kw::Pass) => {
                self.advance();
                self.end_of_statement()?;
                StmtKind::Pass
            }
            TokKind::Name(n) if matches!(self.peek_at(1), TokKind::Sym("=")) => {
                self.advance();
                self.advance();
                let value = self.expr()?;
                self.end_of_statement()?;
                StmtKind::Assign { target: n, value }
            }
            TokKind::Kw(k) if matches!(self.peek_at(1), TokKind::Sym("=")) => {
                return self.err(format!("cannot assign to reserved word '{k}'"), Some("identifier"));
            }
            _ => {
                let e = self.expr()?;
                self.end_of_statement()?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { kind, span: start.to(self.prev_span()) })
    }

    fn class_def(&mut self) -> PResult<StmtKind> {
        self.expect_kw(Kw::Class)?;
        let (name, _) = self.expect_name()?;
        let superclass = if self.eat_sym("(") {
            let (s, sp) = self.expect_name()?;
            if !self.classes.contains(&s) {
                return Err(ParseError::new(format!("unknown superclass {s}"), sp, None));
            }
            self.expect_sym(")")?;
            Some(s)
        } else {
            None
        };
        self.classes.insert(name.clone());
        self.expect_sym(":")?;
        if *self.peek() != TokKind::Newline {
            return self.unexpected("end of line");
        }
        self.advance();
        if *self.peek() != TokKind::Indent {
            return self.unexpected("indented class body");
        }
        self.advance();
        let mut props: Vec<PropDef> = Vec::new();
        while !matches!(self.peek(), TokKind::Dedent | TokKind::Eof) {
            if *self.peek() == TokKind::Newline {
                self.advance();
                continue;
            }
            if self.eat_kw(Kw::Pass) {
                self.end_of_statement()?;
                continue;
            }
            let (pname, sp) = self.expect_property()?;
            if props.iter().any(|p| p.name == pname) {
                return Err(ParseError::new(format!("duplicate property {pname} in class {name}"), sp, None));
            }
            self.expect_sym(":")?;
            let value = self.expr()?;
            let span = sp.to(self.prev_span());
            self.end_of_statement()?;
            props.push(PropDef { name: pname, value, span });
        }
        if *self.peek() == TokKind::Dedent {
            self.advance();
        }
        Ok(StmtKind::ClassDef { name, superclass, props })
    }

    fn func_def(&mut self) -> PResult<StmtKind> {
        self.expect_kw(Kw::Def)?;
        let (name, _) = self.expect_name()?;
        self.expect_sym("(")?;
        let mut params: Vec<ParamDef> = Vec::new();
        while !self.is_sym(")") {
            let (p, sp) = self.expect_name()?;
            if params.iter().any(|q| q.name == p) {
                return Err(ParseError::new(format!("duplicate parameter {p}"), sp, None));
            }
            let default = if self.eat_sym("=") { Some(self.expr()?) } else { None };
            if default.is_none() && params.iter().any(|q| q.default.is_some()) {
                return Err(ParseError::new("parameter without default follows a default", sp, None));
            }
            params.push(ParamDef { name: p, default });
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        let body = self.block()?;
        Ok(StmtKind::FuncDef { name, params, body })
    }

    // Expressions, loosest first.

    pub fn expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        let e = self.or_expr()?;
        if self.is_kw(Kw::If) {
            self.advance();
            let cond = self.or_expr()?;
            self.expect_kw(Kw::Else)?;
            let orelse = self.expr()?;
            let span = start.to(self.prev_span());
            return Ok(Expr {
                kind: ExprKind::IfElse { cond: Box::new(cond), then: Box::new(e), orelse: Box::new(orelse) },
                span,
            });
        }
        Ok(e)
    }

    fn mk(&self, start: Span, kind: ExprKind) -> Expr {
        Expr { kind, span: start.to(self.prev_span()) }
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.and_expr()?;
        while self.eat_kw(Kw::Or) {
            let r = self.and_expr()?;
            e = self.mk(start, ExprKind::Binary(BinOp::Or, Box::new(e), Box::new(r)));
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.not_expr()?;
        while self.eat_kw(Kw::And) {
            let r = self.not_expr()?;
            e = self.mk(start, ExprKind::Binary(BinOp::And, Box::new(e), Box::new(r)));
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat_kw(Kw::Not) {
            let e = self.not_expr()?;
            return Ok(self.mk(start, ExprKind::Not(Box::new(e))));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.relative()?;
        loop {
            let op = match self.peek() {
                TokKind::Sym("==") => Some(BinOp::Eq),
                TokKind::Sym("!=") => Some(BinOp::Ne),
                TokKind::Sym("<") => Some(BinOp::Lt),
                TokKind::Sym(">") => Some(BinOp::Gt),
                TokKind::Sym("<=") => Some(BinOp::Le),
                TokKind::Sym(">=") => Some(BinOp::Ge),
                _ => None,
            };
            if let Some(op) = op {
                self.advance();
                let r = self.relative()?;
                e = self.mk(start, ExprKind::Binary(op, Box::new(e), Box::new(r)));
            } else if self.is_kw(Kw::Can) {
                self.advance();
                self.expect_kw(Kw::See)?;
                let r = self.relative()?;
                e = self.mk(start, ExprKind::CanSee(Box::new(e), Box::new(r)));
            } else if self.is_kw(Kw::Is) {
                self.advance();
                if self.eat_kw(Kw::In) {
                    let r = self.relative()?;
                    e = self.mk(start, ExprKind::IsIn(Box::new(e), Box::new(r)));
                } else {
                    let negated = self.eat_kw(Kw::Not);
                    self.expect_kw(Kw::None)?;
                    e = self.mk(start, ExprKind::IsNone { value: Box::new(e), negated });
                }
            } else {
                return Ok(e);
            }
        }
    }

    fn relative(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.positional()?;
        while self.is_kw(Kw::Relative) && self.is_kw_at(1, Kw::To) {
            self.advance();
            self.advance();
            let r = self.positional()?;
            e = self.mk(start, ExprKind::RelativeTo(Box::new(e), Box::new(r)));
        }
        Ok(e)
    }

    fn positional(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.vector()?;
        loop {
            if self.is_kw(Kw::At) {
                self.advance();
                let r = self.vector()?;
                e = self.mk(start, ExprKind::FieldAt(Box::new(e), Box::new(r)));
            } else if self.is_kw(Kw::Offset) && self.is_kw_at(1, Kw::By) {
                self.advance();
                self.advance();
                let r = self.vector()?;
                e = self.mk(start, ExprKind::OffsetBy(Box::new(e), Box::new(r)));
            } else if self.is_kw(Kw::Offset) && self.is_kw_at(1, Kw::Along) {
                self.advance();
                self.advance();
                let d = self.vector()?;
                self.expect_kw(Kw::By)?;
                let r = self.vector()?;
                e = self.mk(
                    start,
                    ExprKind::OffsetAlong { base: Box::new(e), direction: Box::new(d), offset: Box::new(r) },
                );
            } else if self.is_kw(Kw::Visible) && self.is_kw_at(1, Kw::From) {
                self.advance();
                self.advance();
                let r = self.vector()?;
                e = self.mk(start, ExprKind::VisibleFrom(Box::new(e), Box::new(r)));
            } else {
                return Ok(e);
            }
        }
    }

    fn vector(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.additive()?;
        while self.eat_sym("@") {
            let r = self.additive()?;
            e = self.mk(start, ExprKind::Vector(Box::new(e), Box::new(r)));
        }
        Ok(e)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.multiplicative()?;
        loop {
            let op = if self.is_sym("+") {
                BinOp::Add
            } else if self.is_sym("-") {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            self.advance();
            let r = self.multiplicative()?;
            e = self.mk(start, ExprKind::Binary(op, Box::new(e), Box::new(r)));
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.degrees()?;
        loop {
            let op = if self.is_sym("*") {
                BinOp::Mul
            } else if self.is_sym("/") {
                BinOp::Div
            } else if self.is_sym("%") {
                BinOp::Mod
            } else {
                return Ok(e);
            };
            self.advance();
            let r = self.degrees()?;
            e = self.mk(start, ExprKind::Binary(op, Box::new(e), Box::new(r)));
        }
    }

    fn degrees(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.unary()?;
        while self.eat_kw(Kw::Deg) {
            e = self.mk(start, ExprKind::Deg(Box::new(e)));
        }
        Ok(e)
    }

    fn opt_from(&mut self) -> PResult<Option<Box<Expr>>> {
        if self.eat_kw(Kw::From) {
            Ok(Some(Box::new(self.relative()?)))
        } else {
            Ok(None)
        }
    }

    fn side(&self) -> Option<(Side, usize)> {
        let two = |a: Kw, b: Kw| self.is_kw(a) && self.is_kw_at(1, b) && self.is_kw_at(2, Kw::Of);
        let one = |a: Kw| self.is_kw(a) && self.is_kw_at(1, Kw::Of);
        if two(Kw::Front, Kw::Left) {
            Some((Side::FrontLeft, 3))
        } else if two(Kw::Front, Kw::Right) {
            Some((Side::FrontRight, 3))
        } else if two(Kw::Back, Kw::Left) {
            Some((Side::BackLeft, 3))
        } else if two(Kw::Back, Kw::Right) {
            Some((Side::BackRight, 3))
        } else if one(Kw::Front) {
            Some((Side::Front, 2))
        } else if one(Kw::Back) {
            Some((Side::Back, 2))
        } else if one(Kw::Left) {
            Some((Side::Left, 2))
        } else if one(Kw::Right) {
            Some((Side::Right, 2))
        } else {
            None
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat_sym("-") {
            let e = self.unary()?;
            if let ExprKind::Number(n) = e.kind {
                return Ok(self.mk(start, ExprKind::Number(-n)));
            }
            return Ok(self.mk(start, ExprKind::Neg(Box::new(e))));
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        if let Some((side, n)) = self.side() {
            for _ in 0..n {
                self.advance();
            }
            let e = self.postfix()?;
            return Ok(self.mk(start, ExprKind::SideOf(side, Box::new(e))));
        }
        match self.peek() {
            TokKind::Kw(Kw::Relative) if self.is_kw_at(1, Kw::Heading) => {
                self.advance();
                self.advance();
                self.expect_kw(Kw::Of)?;
                let h = self.relative()?;
                let from = self.opt_from()?;
                Ok(self.mk(start, ExprKind::RelativeHeading { heading: Box::new(h), from }))
            }
            TokKind::Kw(Kw::Apparent) => {
                self.advance();
                self.expect_kw(Kw::Heading)?;
                self.expect_kw(Kw::Of)?;
                let p = self.relative()?;
                let from = self.opt_from()?;
                Ok(self.mk(start, ExprKind::ApparentHeading { point: Box::new(p), from }))
            }
            TokKind::Kw(Kw::Distance) => {
                self.advance();
                let from = self.opt_from()?;
                self.expect_kw(Kw::To)?;
                let to = self.relative()?;
                Ok(self.mk(start, ExprKind::Distance { from, to: Box::new(to) }))
            }
            TokKind::Kw(Kw::Angle) => {
                self.advance();
                let from = self.opt_from()?;
                self.expect_kw(Kw::To)?;
                let to = self.relative()?;
                Ok(self.mk(start, ExprKind::AngleTo { from, to: Box::new(to) }))
            }
            TokKind::Kw(Kw::Follow) => {
                self.advance();
                let field = self.relative()?;
                let from = self.opt_from()?;
                self.expect_kw(Kw::For)?;
                let d = self.relative()?;
                Ok(self.mk(start, ExprKind::Follow { field: Box::new(field), from, distance: Box::new(d) }))
            }
            TokKind::Kw(Kw::Visible) => {
                self.advance();
                let r = self.postfix()?;
                Ok(self.mk(start, ExprKind::Visible(Box::new(r))))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let start = self.span();
        let mut e = self.atom()?;
        if matches!(e.kind, ExprKind::Instance { .. }) {
            return Ok(e);
        }
        loop {
            if self.eat_sym(".") {
                let (name, _) = self.expect_property()?;
                e = self.mk(start, ExprKind::Attr(Box::new(e), name));
            } else if self.is_sym("(") {
                self.advance();
                let (args, kwargs) = self.call_args()?;
                e = self.mk(start, ExprKind::Call { func: Box::new(e), args, kwargs });
            } else if self.is_sym("[") {
                self.advance();
                let i = self.expr()?;
                self.expect_sym("]")?;
                e = self.mk(start, ExprKind::Index(Box::new(e), Box::new(i)));
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> PResult<(Vec<Expr>, Vec<(String, Expr)>)> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Expr)> = Vec::new();
        while !self.is_sym(")") {
            if let (TokKind::Name(n), TokKind::Sym("=")) = (self.peek().clone(), self.peek_at(1).clone()) {
                let sp = self.span();
                self.advance();
                self.advance();
                if kwargs.iter().any(|(k, _)| *k == n) {
                    return Err(ParseError::new(format!("repeated keyword argument {n}"), sp, None));
                }
                kwargs.push((n, self.expr()?));
            } else {
                if !kwargs.is_empty() {
                    return self.err("positional argument follows keyword argument", None);
                }
                args.push(self.expr()?);
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok((args, kwargs))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.span();
        match self.peek().clone() {
            TokKind::Number(n) => {
                self.advance();
                Ok(self.mk(start, ExprKind::Number(n)))
            }
            TokKind::Str(s) => {
                self.advance();
                Ok(self.mk(start, ExprKind::Str(s)))
            }
            TokKind::Kw(Kw::True) => {
                self.advance();
                Ok(self.mk(start, ExprKind::Bool(true)))
            }
            TokKind::Kw(Kw::False) => {
                self.advance();
                Ok(self.mk(start, ExprKind::Bool(false)))
            }
            TokKind::Kw(Kw::None) => {
                self.advance();
                Ok(self.mk(start, ExprKind::None))
            }
            TokKind::Kw(Kw::SelfKw) => {
                self.advance();
                Ok(self.mk(start, ExprKind::SelfRef))
            }
            TokKind::Name(n) => {
                self.advance();
                if self.classes.contains(&n) {
                    let specifiers = self.specifiers()?;
                    return Ok(self.mk(start, ExprKind::Instance { class: n, specifiers }));
                }
                Ok(self.mk(start, ExprKind::Name(n)))
            }
            TokKind::Sym("(") => {
                self.advance();
                let a = self.expr()?;
                if self.eat_sym(",") {
                    let b = self.expr()?;
                    self.expect_sym(")")?;
                    return Ok(self.mk(start, ExprKind::Interval(Box::new(a), Box::new(b))));
                }
                self.expect_sym(")")?;
                Ok(a)
            }
            TokKind::Sym("[") => {
                self.advance();
                let mut items = Vec::new();
                while !self.is_sym("]") {
                    items.push(self.expr()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym("]")?;
                Ok(self.mk(start, ExprKind::List(items)))
            }
            TokKind::Sym("{") => {
                self.advance();
                let mut items = Vec::new();
                while !self.is_sym("}") {
                    let k = self.expr()?;
                    self.expect_sym(":")?;
                    let v = self.expr()?;
                    items.push((k, v));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym("}")?;
                Ok(self.mk(start, ExprKind::Dict(items)))
            }
            TokKind::Kw(k) => self.err(format!("unexpected '{k}'"), Some("expression")),
            _ => self.unexpected("expression"),
        }
    }

    // Specifiers.

    fn starts_specifier(&self, at: usize) -> bool {
        let k = |n: usize, kw: Kw| self.is_kw_at(at + n, kw);
        k(0, Kw::With)
            || k(0, Kw::At)
            || (k(0, Kw::Offset) && (k(1, Kw::By) || k(1, Kw::Along)))
            || ((k(0, Kw::Left) || k(0, Kw::Right) || k(0, Kw::Ahead)) && k(1, Kw::Of))
            || k(0, Kw::Behind)
            || k(0, Kw::Beyond)
            || k(0, Kw::Visible)
            || k(0, Kw::In)
            || k(0, Kw::On)
            || k(0, Kw::Following)
            || k(0, Kw::Facing)
            || (k(0, Kw::Apparently) && k(1, Kw::Facing))
    }

    fn specifiers(&mut self) -> PResult<Vec<Specifier>> {
        let mut out = Vec::new();
        if !self.starts_specifier(0) {
            return Ok(out);
        }
        out.push(self.specifier()?);
        while self.is_sym(",") && self.starts_specifier(1) {
            self.advance();
            out.push(self.specifier()?);
        }
        Ok(out)
    }

    fn opt_by(&mut self) -> PResult<Option<Expr>> {
        if self.eat_kw(Kw::By) {
            Ok(Some(self.relative()?))
        } else {
            Ok(None)
        }
    }

    fn opt_from_spec(&mut self) -> PResult<Option<Expr>> {
        if self.eat_kw(Kw::From) {
            Ok(Some(self.relative()?))
        } else {
            Ok(None)
        }
    }

    fn specifier(&mut self) -> PResult<Specifier> {
        let start = self.span();
        let kw = match self.peek() {
            TokKind::Kw(k) => *k,
            _ => return self.unexpected("specifier"),
        };
        self.advance();
        let kind = match kw {
            Kw::With => {
                let (property, _) = self.expect_property()?;
                let value = self.relative()?;
                SpecKind::With { property, value }
            }
            Kw::At => SpecKind::At(self.relative()?),
            Kw::Offset => {
                if self.eat_kw(Kw::By) {
                    SpecKind::OffsetBy(self.relative()?)
                } else {
                    self.expect_kw(Kw::Along)?;
                    let direction = self.relative()?;
                    self.expect_kw(Kw::By)?;
                    let offset = self.relative()?;
                    SpecKind::OffsetAlong { direction, offset }
                }
            }
            Kw::Left | Kw::Right | Kw::Ahead | Kw::Behind => {
                if kw != Kw::Behind {
                    self.expect_kw(Kw::Of)?;
                }
                let dir = match kw {
                    Kw::Left => Direction::Left,
                    Kw::Right => Direction::Right,
                    Kw::Ahead => Direction::Ahead,
                    _ => Direction::Behind,
                };
                let target = self.relative()?;
                let by = self.opt_by()?;
                SpecKind::Beside { dir, target, by }
            }
            Kw::Beyond => {
                let target = self.relative()?;
                self.expect_kw(Kw::By)?;
                let offset = self.relative()?;
                let from = self.opt_from_spec()?;
                SpecKind::Beyond { target, offset, from }
            }
            Kw::Visible => SpecKind::Visible { from: self.opt_from_spec()? },
            Kw::In => SpecKind::In(self.relative()?),
            Kw::On => SpecKind::On(self.relative()?),
            Kw::Following => {
                let field = self.relative()?;
                let from = self.opt_from_spec()?;
                self.expect_kw(Kw::For)?;
                let distance = self.relative()?;
                SpecKind::Following { field, from, distance }
            }
            Kw::Facing => {
                if self.eat_kw(Kw::Toward) {
                    SpecKind::FacingToward(self.relative()?)
                } else if self.is_kw(Kw::Away) {
                    self.advance();
                    self.expect_kw(Kw::From)?;
                    SpecKind::FacingAwayFrom(self.relative()?)
                } else {
                    SpecKind::Facing(self.relative()?)
                }
            }
            Kw::Apparently => {
                self.expect_kw(Kw::Facing)?;
                let heading = self.relative()?;
                let from = self.opt_from_spec()?;
                SpecKind::ApparentlyFacing { heading, from }
            }
            _ => unreachable!(),
        };
        Ok(Specifier { kind, span: start.to(self.prev_span()) })
    }

    pub fn source(&self) -> &str {
        self.src
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Program {
        parse_program(src, &["Car".to_string()]).unwrap()
    }

    fn expr(src: &str) -> Expr {
        match parse(src).body.remove(0).kind {
            StmtKind::Expr(e) => e,
            StmtKind::Assign { value, .. } => value,
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn simplest_scenario() {
        let p = parse("ego = Car\nCar\n");
        assert_eq!(p.body.len(), 2);
        assert!(matches!(&p.body[0].kind, StmtKind::Assign { target, .. } if target == "ego"));
        match &p.body[1].kind {
            StmtKind::Expr(Expr { kind: ExprKind::Instance { class, specifiers }, .. }) => {
                assert_eq!(class, "Car");
                assert!(specifiers.is_empty());
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn two_specifiers() {
        let e = expr("Car left of spot by 0.5, with model BUS");
        let ExprKind::Instance { specifiers, .. } = e.kind else { panic!() };
        assert_eq!(specifiers.len(), 2);
        assert!(matches!(&specifiers[0].kind, SpecKind::Beside { dir: Direction::Left, by: Some(_), .. }));
        assert!(matches!(&specifiers[1].kind, SpecKind::With { property, .. } if property == "model"));
    }

    #[test]
    fn soft_requirement() {
        let p = parse("require[0.5] car2 can see ego");
        match &p.body[0].kind {
            StmtKind::Require { prob: Some(p), cond } => {
                assert_eq!(*p, 0.5);
                assert!(matches!(cond.kind, ExprKind::CanSee(..)));
            }
            k => panic!("{k:?}"),
        }
        assert!(parse_program("require[x] True", &[]).is_err());
        assert!(parse_program("require[1.5] True", &[]).is_err());
    }

    #[test]
    fn precedence() {
        let show = |s: &str| expr(s).to_string();
        assert_eq!(show("1 + 2 * 3"), "(1 + (2 * 3))");
        assert_eq!(show("-1 @ 2 + 3"), "((-1) @ (2 + 3))");
        assert_eq!(show("Uniform(1, -1) * (10, 20) deg"), "(Uniform(1, (-1)) * ((10, 20) deg))");
        assert_eq!(show("a offset by 1 @ 2 relative to b"), "((a offset by (1 @ 2)) relative to b)");
        assert_eq!(show("not a < b and c"), "((not (a < b)) and c)");
        assert_eq!(show("x if a or b else y"), "(x if (a or b) else y)");
        assert_eq!(show("F at p + q"), "(F at (p + q))");
        assert_eq!(show("abs(relative heading of c) <= 15 deg"), "(abs((relative heading of c)) <= (15 deg))");
        assert_eq!(show("distance from a to b < 5"), "((distance from a to b) < 5)");
        assert_eq!(show("front left of c offset by 1 @ 0"), "((front left of c) offset by (1 @ 0))");
        assert_eq!(show("r visible from ego"), "(r visible from ego)");
        assert_eq!(show("x is not None"), "(x is not None)");
    }

    #[test]
    fn specifier_arguments() {
        let e = expr("Car at (front of car) offset by (x @ g), facing (1, 2) deg relative to roadDirection");
        assert_eq!(
            e.to_string(),
            "(Car at ((front of car) offset by (x @ g)), facing (((1, 2) deg) relative to roadDirection))"
        );
        let e = expr("Car on visible curb, apparently facing 90 deg from ego");
        assert_eq!(e.to_string(), "(Car on (visible curb), apparently facing (90 deg) from ego)");
        let e = expr("f(Car, 3)");
        let ExprKind::Call { args, .. } = e.kind else { panic!() };
        assert_eq!(args.len(), 2);
    }

    #[test]
    fn blocks_and_functions() {
        let src = "def f(a, b=(2, 8)):\n    for i in range(a - 1):\n        if i == 0:\n            pass\n        else:\n            return b\n\nclass Truck(Car):\n    heading: 0\n    width: self.model.width\n";
        let p = parse(src);
        assert_eq!(p.body.len(), 2);
        assert!(matches!(&p.body[1].kind, StmtKind::ClassDef { props, .. } if props.len() == 2));
    }

    #[test]
    fn reserved_words() {
        assert!(parse_program("heading = 3", &[]).is_err());
        assert!(parse_program("def f(from):\n    pass\n", &[]).is_err());
        assert!(parse_program("x = ego.heading", &[]).is_ok());
    }

    #[test]
    fn classes_defined_in_file_become_instances() {
        let p = parse("class Rock:\n    width: 0.5\nRock at 1 @ 2\n");
        assert!(matches!(&p.body[1].kind, StmtKind::Expr(Expr { kind: ExprKind::Instance { .. }, .. })));
    }

    #[test]
    fn pretty_print_round_trip() {
        let src = "param time = (8, 20) * 60, weather = 'RAIN'\nego = Car with visibleDistance 60\nc = Car visible, with roadDeviation resample((-10 deg, 10 deg))\nrequire[0.8] c can see ego\nmutate c, ego by 2\nx = {'a': 1, 'b': 3}['a']\n";
        let mut a = parse(src);
        let printed = a.to_string();
        let mut b = parse(&printed);
        clear_spans(&mut a);
        clear_spans(&mut b);
        assert_eq!(a, b, "{printed}");
    }
}
