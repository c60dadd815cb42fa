use std::fmt::{self, Write};

use crate::error::Span;

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Import(String),
    Assign { target: String, value: Expr },
    Param(Vec<(String, Expr)>),
    ClassDef { name: String, superclass: Option<String>, props: Vec<PropDef> },
    FuncDef { name: String, params: Vec<ParamDef>, body: Vec<Stmt> },
    Require { prob: Option<f64>, cond: Expr },
    Mutate { targets: Vec<Expr>, scale: Option<Expr> },
    Expr(Expr),
    For { var: String, count: Expr, body: Vec<Stmt> },
    If { branches: Vec<(Expr, Vec<Stmt>)>, orelse: Option<Vec<Stmt>> },
    Return(Option<Expr>),
    Pass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropDef {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Front,
    Back,
    Left,
    Right,
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
}

impl Side {
    pub fn words(self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Back => "back",
            Side::Left => "left",
            Side::Right => "right",
            Side::FrontLeft => "front left",
            Side::FrontRight => "front right",
            Side::BackLeft => "back left",
            Side::BackRight => "back right",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(f64),
    Str(String),
    Bool(bool),
    None,
    Name(String),
    SelfRef,
    Attr(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Call { func: Box<Expr>, args: Vec<Expr>, kwargs: Vec<(String, Expr)> },
    List(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Interval(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Deg(Box<Expr>),
    Vector(Box<Expr>, Box<Expr>),
    RelativeTo(Box<Expr>, Box<Expr>),
    OffsetBy(Box<Expr>, Box<Expr>),
    OffsetAlong { base: Box<Expr>, direction: Box<Expr>, offset: Box<Expr> },
    FieldAt(Box<Expr>, Box<Expr>),
    CanSee(Box<Expr>, Box<Expr>),
    IsIn(Box<Expr>, Box<Expr>),
    IsNone { value: Box<Expr>, negated: bool },
    Visible(Box<Expr>),
    VisibleFrom(Box<Expr>, Box<Expr>),
    RelativeHeading { heading: Box<Expr>, from: Option<Box<Expr>> },
    ApparentHeading { point: Box<Expr>, from: Option<Box<Expr>> },
    Distance { from: Option<Box<Expr>>, to: Box<Expr> },
    AngleTo { from: Option<Box<Expr>>, to: Box<Expr> },
    Follow { field: Box<Expr>, from: Option<Box<Expr>>, distance: Box<Expr> },
    SideOf(Side, Box<Expr>),
    Instance { class: String, specifiers: Vec<Specifier> },
    IfElse { cond: Box<Expr>, then: Box<Expr>, orelse: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Specifier {
    pub kind: SpecKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
    Ahead,
    Behind,
}

impl Direction {
    pub fn words(self) -> &'static str {
        match self {
            Direction::Left => "left of",
            Direction::Right => "right of",
            Direction::Ahead => "ahead of",
            Direction::Behind => "behind",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecKind {
    With { property: String, value: Expr },
    At(Expr),
    OffsetBy(Expr),
    OffsetAlong { direction: Expr, offset: Expr },
    Beside { dir: Direction, target: Expr, by: Option<Expr> },
    Beyond { target: Expr, offset: Expr, from: Option<Expr> },
    Visible { from: Option<Expr> },
    In(Expr),
    On(Expr),
    Following { field: Expr, from: Option<Expr>, distance: Expr },
    Facing(Expr),
    FacingToward(Expr),
    FacingAwayFrom(Expr),
    ApparentlyFacing { heading: Expr, from: Option<Expr> },
}

impl SpecKind {
    /// Leading words, used in diagnostics.
    pub fn head(&self) -> String {
        match self {
            SpecKind::With { property, .. } => format!("with {property}"),
            SpecKind::At(_) => "at".into(),
            SpecKind::OffsetBy(_) => "offset by".into(),
            SpecKind::OffsetAlong { .. } => "offset along".into(),
            SpecKind::Beside { dir, .. } => dir.words().into(),
            SpecKind::Beyond { .. } => "beyond".into(),
            SpecKind::Visible { .. } => "visible".into(),
            SpecKind::In(_) => "in".into(),
            SpecKind::On(_) => "on".into(),
            SpecKind::Following { .. } => "following".into(),
            SpecKind::Facing(_) => "facing".into(),
            SpecKind::FacingToward(_) => "facing toward".into(),
            SpecKind::FacingAwayFrom(_) => "facing away from".into(),
            SpecKind::ApparentlyFacing { .. } => "apparently facing".into(),
        }
    }
}

// Pretty printing. Compound expressions are fully parenthesized so that the
// output parses back to the same tree regardless of precedence.

fn fmt_number(n: f64) -> String {
    if n.is_finite() && n == n.trunc() && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n:?}")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("'");
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ExprKind::*;
        let opt_from = |f: &mut fmt::Formatter<'_>, e: &Option<Box<Expr>>| -> fmt::Result {
            if let Some(e) = e {
                write!(f, " from {e}")?;
            }
            Ok(())
        };
        match &self.kind {
            Number(n) => {
                if *n < 0.0 {
                    write!(f, "({})", fmt_number(*n))
                } else {
                    f.write_str(&fmt_number(*n))
                }
            }
            Str(s) => f.write_str(&quote(s)),
            Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            None => f.write_str("None"),
            Name(n) => f.write_str(n),
            SelfRef => f.write_str("self"),
            Attr(e, n) => write!(f, "{e}.{n}"),
            Index(e, i) => write!(f, "{e}[{i}]"),
            Call { func, args, kwargs } => {
                write!(f, "{func}(")?;
                let mut first = true;
                for a in args {
                    if !first {
                        f.write_str(", ")?;
                    }
                    first = false;
                    write!(f, "{a}")?;
                }
                for (k, v) in kwargs {
                    if !first {
                        f.write_str(", ")?;
                    }
                    first = false;
                    write!(f, "{k}={v}")?;
                }
                f.write_str(")")
            }
            List(items) => {
                f.write_str("[")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("]")
            }
            Dict(items) => {
                f.write_str("{")?;
                for (i, (k, v)) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
            Interval(a, b) => write!(f, "({a}, {b})"),
            Neg(e) => write!(f, "(-{e})"),
            Not(e) => write!(f, "(not {e})"),
            Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Deg(e) => write!(f, "({e} deg)"),
            Vector(a, b) => write!(f, "({a} @ {b})"),
            RelativeTo(a, b) => write!(f, "({a} relative to {b})"),
            OffsetBy(a, b) => write!(f, "({a} offset by {b})"),
            OffsetAlong { base, direction, offset } => write!(f, "({base} offset along {direction} by {offset})"),
            FieldAt(a, b) => write!(f, "({a} at {b})"),
            CanSee(a, b) => write!(f, "({a} can see {b})"),
            IsIn(a, b) => write!(f, "({a} is in {b})"),
            IsNone { value, negated } => write!(f, "({value} is {}None)", if *negated { "not " } else { "" }),
            Visible(r) => write!(f, "(visible {r})"),
            VisibleFrom(r, p) => write!(f, "({r} visible from {p})"),
            RelativeHeading { heading, from } => {
                write!(f, "(relative heading of {heading}")?;
                opt_from(f, from)?;
                f.write_str(")")
            }
            ApparentHeading { point, from } => {
                write!(f, "(apparent heading of {point}")?;
                opt_from(f, from)?;
                f.write_str(")")
            }
            Distance { from, to } => {
                f.write_str("(distance")?;
                opt_from(f, from)?;
                write!(f, " to {to})")
            }
            AngleTo { from, to } => {
                f.write_str("(angle")?;
                opt_from(f, from)?;
                write!(f, " to {to})")
            }
            Follow { field, from, distance } => {
                write!(f, "(follow {field}")?;
                opt_from(f, from)?;
                write!(f, " for {distance})")
            }
            SideOf(side, e) => write!(f, "({} of {e})", side.words()),
            Instance { class, specifiers } => {
                write!(f, "({class}")?;
                for (i, s) in specifiers.iter().enumerate() {
                    f.write_str(if i == 0 { " " } else { ", " })?;
                    write!(f, "{s}")?;
                }
                f.write_str(")")
            }
            IfElse { cond, then, orelse } => write!(f, "({then} if {cond} else {orelse})"),
        }
    }
}

impl fmt::Display for Specifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SpecKind::*;
        let opt = |f: &mut fmt::Formatter<'_>, kw: &str, e: &Option<Expr>| -> fmt::Result {
            if let Some(e) = e {
                write!(f, " {kw} {e}")?;
            }
            Ok(())
        };
        match &self.kind {
            With { property, value } => write!(f, "with {property} {value}"),
            At(e) => write!(f, "at {e}"),
            OffsetBy(e) => write!(f, "offset by {e}"),
            OffsetAlong { direction, offset } => write!(f, "offset along {direction} by {offset}"),
            Beside { dir, target, by } => {
                write!(f, "{} {target}", dir.words())?;
                opt(f, "by", by)
            }
            Beyond { target, offset, from } => {
                write!(f, "beyond {target} by {offset}")?;
                opt(f, "from", from)
            }
            Visible { from } => {
                f.write_str("visible")?;
                opt(f, "from", from)
            }
            In(e) => write!(f, "in {e}"),
            On(e) => write!(f, "on {e}"),
            Following { field, from, distance } => {
                write!(f, "following {field}")?;
                opt(f, "from", from)?;
                write!(f, " for {distance}")
            }
            Facing(e) => write!(f, "facing {e}"),
            FacingToward(e) => write!(f, "facing toward {e}"),
            FacingAwayFrom(e) => write!(f, "facing away from {e}"),
            ApparentlyFacing { heading, from } => {
                write!(f, "apparently facing {heading}")?;
                opt(f, "from", from)
            }
        }
    }
}

fn write_block(out: &mut String, body: &[Stmt], depth: usize) {
    if body.is_empty() {
        let _ = writeln!(out, "{}pass", "    ".repeat(depth));
    }
    for s in body {
        write_stmt(out, s, depth);
    }
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "    ".repeat(depth);
    match &s.kind {
        StmtKind::Import(m) => {
            let _ = writeln!(out, "{pad}import {m}");
        }
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{pad}{target} = {value}");
        }
        StmtKind::Param(items) => {
            let parts: Vec<String> = items.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            let _ = writeln!(out, "{pad}param {}", parts.join(", "));
        }
        StmtKind::ClassDef { name, superclass, props } => {
            match superclass {
                Some(s) => {
                    let _ = writeln!(out, "{pad}class {name}({s}):");
                }
                None => {
                    let _ = writeln!(out, "{pad}class {name}:");
                }
            }
            if props.is_empty() {
                let _ = writeln!(out, "{pad}    pass");
            }
            for p in props {
                let _ = writeln!(out, "{pad}    {}: {}", p.name, p.value);
            }
        }
        StmtKind::FuncDef { name, params, body } => {
            let ps: Vec<String> = params
                .iter()
                .map(|p| match &p.default {
                    Some(d) => format!("{}={}", p.name, d),
                    None => p.name.clone(),
                })
                .collect();
            let _ = writeln!(out, "{pad}def {name}({}):", ps.join(", "));
            write_block(out, body, depth + 1);
        }
        StmtKind::Require { prob, cond } => match prob {
            Some(p) => {
                let _ = writeln!(out, "{pad}require[{}] {cond}", fmt_number(*p));
            }
            None => {
                let _ = writeln!(out, "{pad}require {cond}");
            }
        },
        StmtKind::Mutate { targets, scale } => {
            let mut line = format!("{pad}mutate");
            let ts: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
            if !ts.is_empty() {
                line.push(' ');
                line.push_str(&ts.join(", "));
            }
            if let Some(s) = scale {
                let _ = write!(line, " by {s}");
            }
            let _ = writeln!(out, "{line}");
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{pad}{e}");
        }
        StmtKind::For { var, count, body } => {
            let _ = writeln!(out, "{pad}for {var} in range({count}):");
            write_block(out, body, depth + 1);
        }
        StmtKind::If { branches, orelse } => {
            for (i, (c, b)) in branches.iter().enumerate() {
                let _ = writeln!(out, "{pad}{} {c}:", if i == 0 { "if" } else { "elif" });
                write_block(out, b, depth + 1);
            }
            if let Some(b) = orelse {
                let _ = writeln!(out, "{pad}else:");
                write_block(out, b, depth + 1);
            }
        }
        StmtKind::Return(e) => match e {
            Some(e) => {
                let _ = writeln!(out, "{pad}return {e}");
            }
            None => {
                let _ = writeln!(out, "{pad}return");
            }
        },
        StmtKind::Pass => {
            let _ = writeln!(out, "{pad}pass");
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for s in &self.body {
            write_stmt(&mut out, s, 0);
        }
        f.write_str(&out)
    }
}

/// Mutable traversal used to normalize spans when comparing trees.
pub fn clear_spans(p: &mut Program) {
    for s in &mut p.body {
        clear_stmt(s);
    }
}

fn clear_stmt(s: &mut Stmt) {
    s.span = Span::default();
    match &mut s.kind {
        StmtKind::Assign { value, .. } => clear_expr(value),
        StmtKind::Param(items) => items.iter_mut().for_each(|(_, e)| clear_expr(e)),
        StmtKind::ClassDef { props, .. } => props.iter_mut().for_each(|p| {
            p.span = Span::default();
            clear_expr(&mut p.value)
        }),
        StmtKind::FuncDef { params, body, .. } => {
            params.iter_mut().filter_map(|p| p.default.as_mut()).for_each(clear_expr);
            body.iter_mut().for_each(clear_stmt);
        }
        StmtKind::Require { cond, .. } => clear_expr(cond),
        StmtKind::Mutate { targets, scale } => {
            targets.iter_mut().for_each(clear_expr);
            scale.iter_mut().for_each(clear_expr);
        }
        StmtKind::Expr(e) => clear_expr(e),
        StmtKind::For { count, body, .. } => {
            clear_expr(count);
            body.iter_mut().for_each(clear_stmt);
        }
        StmtKind::If { branches, orelse } => {
            for (c, b) in branches {
                clear_expr(c);
                b.iter_mut().for_each(clear_stmt);
            }
            if let Some(b) = orelse {
                b.iter_mut().for_each(clear_stmt);
            }
        }
        StmtKind::Return(e) => e.iter_mut().for_each(clear_expr),
        StmtKind::Import(_) | StmtKind::Pass => {}
    }
}

/// Calls `f` on `e` and every expression nested in it, specifier arguments
/// included.
pub fn walk_expr<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(e);
    use ExprKind::*;
    match &e.kind {
        Number(_) | Str(_) | Bool(_) | None | Name(_) | SelfRef => {}
        Attr(a, _) | Neg(a) | Not(a) | Deg(a) | Visible(a) | SideOf(_, a) => walk_expr(a, f),
        IsNone { value, .. } => walk_expr(value, f),
        Index(a, b)
        | Interval(a, b)
        | Binary(_, a, b)
        | Vector(a, b)
        | RelativeTo(a, b)
        | OffsetBy(a, b)
        | FieldAt(a, b)
        | CanSee(a, b)
        | IsIn(a, b)
        | VisibleFrom(a, b) => {
            walk_expr(a, f);
            walk_expr(b, f);
        }
        Call { func, args, kwargs } => {
            walk_expr(func, f);
            args.iter().for_each(|a| walk_expr(a, f));
            kwargs.iter().for_each(|(_, a)| walk_expr(a, f));
        }
        List(items) => items.iter().for_each(|a| walk_expr(a, f)),
        Dict(items) => items.iter().for_each(|(k, v)| {
            walk_expr(k, f);
            walk_expr(v, f)
        }),
        OffsetAlong { base, direction, offset } => {
            walk_expr(base, f);
            walk_expr(direction, f);
            walk_expr(offset, f);
        }
        RelativeHeading { heading: a, from } | ApparentHeading { point: a, from } => {
            walk_expr(a, f);
            if let Some(b) = from {
                walk_expr(b, f);
            }
        }
        Distance { from, to } | AngleTo { from, to } => {
            if let Some(b) = from {
                walk_expr(b, f);
            }
            walk_expr(to, f);
        }
        Follow { field, from, distance } => {
            walk_expr(field, f);
            if let Some(b) = from {
                walk_expr(b, f);
            }
            walk_expr(distance, f);
        }
        Instance { specifiers, .. } => specifiers.iter().for_each(|s| walk_spec(s, f)),
        IfElse { cond, then, orelse } => {
            walk_expr(cond, f);
            walk_expr(then, f);
            walk_expr(orelse, f);
        }
    }
}

fn walk_spec<'a>(s: &'a Specifier, f: &mut dyn FnMut(&'a Expr)) {
    use SpecKind::*;
    let opt = |e: &'a Option<Expr>, f: &mut dyn FnMut(&'a Expr)| {
        if let Some(e) = e {
            walk_expr(e, f);
        }
    };
    match &s.kind {
        With { value, .. } => walk_expr(value, f),
        At(e) | OffsetBy(e) | In(e) | On(e) | Facing(e) | FacingToward(e) | FacingAwayFrom(e) => walk_expr(e, f),
        OffsetAlong { direction, offset } => {
            walk_expr(direction, f);
            walk_expr(offset, f);
        }
        Beside { target, by, .. } => {
            walk_expr(target, f);
            opt(by, f);
        }
        Beyond { target, offset, from } => {
            walk_expr(target, f);
            walk_expr(offset, f);
            opt(from, f);
        }
        Visible { from } => opt(from, f),
        Following { field, from, distance } => {
            walk_expr(field, f);
            opt(from, f);
            walk_expr(distance, f);
        }
        ApparentlyFacing { heading, from } => {
            walk_expr(heading, f);
            opt(from, f);
        }
    }
}

fn clear_expr(e: &mut Expr) {
    e.span = Span::default();
    use ExprKind::*;
    let c = |b: &mut Box<Expr>| clear_expr(b);
    match &mut e.kind {
        Number(_) | Str(_) | Bool(_) | None | Name(_) | SelfRef => {}
        Attr(a, _) | Neg(a) | Not(a) | Deg(a) | Visible(a) | SideOf(_, a) => c(a),
        IsNone { value, .. } => c(value),
        Index(a, b)
        | Interval(a, b)
        | Binary(_, a, b)
        | Vector(a, b)
        | RelativeTo(a, b)
        | OffsetBy(a, b)
        | FieldAt(a, b)
        | CanSee(a, b)
        | IsIn(a, b)
        | VisibleFrom(a, b) => {
            c(a);
            c(b);
        }
        Call { func, args, kwargs } => {
            c(func);
            args.iter_mut().for_each(clear_expr);
            kwargs.iter_mut().for_each(|(_, a)| clear_expr(a));
        }
        List(items) => items.iter_mut().for_each(clear_expr),
        Dict(items) => items.iter_mut().for_each(|(k, v)| {
            clear_expr(k);
            clear_expr(v)
        }),
        OffsetAlong { base, direction, offset } => {
            c(base);
            c(direction);
            c(offset);
        }
        RelativeHeading { heading: a, from } | ApparentHeading { point: a, from } => {
            c(a);
            from.iter_mut().for_each(|b| clear_expr(b));
        }
        Distance { from, to } | AngleTo { from, to } => {
            from.iter_mut().for_each(|b| clear_expr(b));
            c(to);
        }
        Follow { field, from, distance } => {
            c(field);
            from.iter_mut().for_each(|b| clear_expr(b));
            c(distance);
        }
        Instance { specifiers, .. } => specifiers.iter_mut().for_each(clear_spec),
        IfElse { cond, then, orelse } => {
            c(cond);
            c(then);
            c(orelse);
        }
    }
}

fn clear_spec(s: &mut Specifier) {
    s.span = Span::default();
    use SpecKind::*;
    let o = |e: &mut Option<Expr>| e.iter_mut().for_each(clear_expr);
    match &mut s.kind {
        With { value, .. } => clear_expr(value),
        At(e) | OffsetBy(e) | In(e) | On(e) | Facing(e) | FacingToward(e) | FacingAwayFrom(e) => clear_expr(e),
        OffsetAlong { direction, offset } => {
            clear_expr(direction);
            clear_expr(offset);
        }
        Beside { target, by, .. } => {
            clear_expr(target);
            o(by);
        }
        Beyond { target, offset, from } => {
            clear_expr(target);
            clear_expr(offset);
            o(from);
        }
        Visible { from } => o(from),
        Following { field, from, distance } => {
            clear_expr(field);
            o(from);
            clear_expr(distance);
        }
        ApparentlyFacing { heading, from } => {
            clear_expr(heading);
            o(from);
        }
    }
}
