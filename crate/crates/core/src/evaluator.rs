//! Construction phase. The program runs once; every random choice becomes a
//! distribution node, so the result is a symbolic model that the sampler can
//! draw from repeatedly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;

use scenelang_geometry::VectorField;

use crate::ast::{BinOp, Direction, Expr, ExprKind, PropDef, Side, SpecKind, Specifier, Stmt, StmtKind};
use crate::error::{Error, Result, Span};
use crate::modules::Loader;
use crate::object_model::{builtin_classes, property_ty, ClassDef, Instance};
use crate::specifier::{execute, resolve, SpecOut};
use crate::values::{
    attr, choice, discrete, interval, konst, konst_at, normal, op, point_in, resample, scalar, self_prop, Kind,
    Op, Sym, Ty, Value,
};
use crate::world::{TableMember, World};

/// Anonymous oriented points (`front of car`, `follow ...`) see this far.
const DEFAULT_VIEW_DISTANCE: f64 = 50.0;
const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone)]
pub struct SceneObject {
    pub class: String,
    pub props: BTreeMap<String, Sym>,
    pub span: Span,
    pub plan: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone)]
pub struct Requirement {
    pub cond: Sym,
    /// Soft requirements are only enforced with this probability.
    pub prob: Option<f64>,
    pub span: Span,
    pub label: String,
}

/// A compiled scenario.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    pub world: Arc<World>,
    pub objects: Vec<SceneObject>,
    /// Object properties with mutation noise applied. Requirements and the
    /// built-in checks read these.
    pub final_props: Vec<BTreeMap<String, Sym>>,
    pub ego: usize,
    pub requirements: Vec<Requirement>,
    pub params: BTreeMap<String, Sym>,
}

/// Compiles a scenario against a world. The world's prelude runs first.
pub fn compile(src: &str, world: Arc<World>, loader: &Loader) -> Result<ScenarioModel> {
    let prelude = loader.parse(&world.prelude, &[])?;
    let classes = loader.exported_classes(&prelude);
    let program = loader.parse(src, &classes)?;
    let mut it = Interp::new(world, loader);
    it.exec_block(&prelude.body)?;
    it.exec_block(&program.body)?;
    it.finish()
}

struct Func {
    name: String,
    params: Vec<(String, Option<Val>)>,
    body: Rc<[Stmt]>,
}

#[derive(Clone, Copy, Debug)]
enum Builtin {
    Range,
    Resample,
    Uniform,
    Discrete,
    Normal,
    Abs,
    Max,
    Min,
}

impl Builtin {
    fn from_name(n: &str) -> Option<Builtin> {
        Some(match n {
            "range" => Builtin::Range,
            "resample" => Builtin::Resample,
            "Uniform" => Builtin::Uniform,
            "Discrete" => Builtin::Discrete,
            "Normal" => Builtin::Normal,
            "abs" => Builtin::Abs,
            "max" => Builtin::Max,
            "min" => Builtin::Min,
            _ => return None,
        })
    }
}

#[derive(Clone)]
enum Val {
    Sym(Sym),
    Inst(usize),
    OPoint(Sym, Sym),
    List(Rc<Vec<Val>>),
    Dict(Rc<Vec<(Val, Val)>>),
    Func(Rc<Func>),
    Builtin(Builtin),
    Table(Rc<str>),
    Member(Rc<str>, Rc<str>),
    SelfObj,
}

enum Flow {
    Next,
    Return(Val),
}

fn cerr<T>(msg: impl Into<String>, span: Span) -> Result<T> {
    Err(Error::construct(msg, span))
}

fn lift(r: std::result::Result<Sym, String>, span: Span) -> Result<Sym> {
    r.map_err(|m| Error::construct(m, span))
}

fn none_val() -> Val {
    Val::Sym(konst(Value::None))
}

fn binop(b: BinOp) -> Op {
    match b {
        BinOp::Add => Op::Add,
        BinOp::Sub => Op::Sub,
        BinOp::Mul => Op::Mul,
        BinOp::Div => Op::Div,
        BinOp::Mod => Op::Mod,
        BinOp::Eq => Op::Eq,
        BinOp::Ne => Op::Ne,
        BinOp::Lt => Op::Lt,
        BinOp::Gt => Op::Gt,
        BinOp::Le => Op::Le,
        BinOp::Ge => Op::Ge,
        BinOp::And => Op::And,
        BinOp::Or => Op::Or,
    }
}

/// Preferred orientation of a region known at construction time. An
/// intersection keeps the orientation of its first operand.
pub fn static_orientation(s: &Sym) -> Option<Arc<VectorField>> {
    match &s.kind {
        Kind::Const(Value::Region(r)) => r.orientation(),
        Kind::Op(Op::Intersect, args, _) => static_orientation(&args[0]),
        _ => None,
    }
}

struct Interp<'l> {
    world: Arc<World>,
    loader: &'l Loader,
    globals: HashMap<String, Val>,
    frames: Vec<HashMap<String, Val>>,
    classes: HashMap<String, Arc<ClassDef>>,
    instances: Vec<Instance>,
    scene: Vec<usize>,
    ego: Option<usize>,
    requirements: Vec<Requirement>,
    params: BTreeMap<String, Sym>,
    selves: Vec<Arc<ClassDef>>,
    require_mode: bool,
    imported: HashSet<String>,
}

impl<'l> Interp<'l> {
    fn new(world: Arc<World>, loader: &'l Loader) -> Self {
        let globals = world.globals().into_iter().map(|(k, v)| (k, Val::Sym(konst(v)))).collect();
        let classes = builtin_classes().into_iter().map(|c| (c.name.clone(), c)).collect();
        Interp {
            world,
            loader,
            globals,
            frames: Vec::new(),
            classes,
            instances: Vec::new(),
            scene: Vec::new(),
            ego: None,
            requirements: Vec::new(),
            params: BTreeMap::new(),
            selves: Vec::new(),
            require_mode: false,
            imported: HashSet::new(),
        }
    }

    fn finish(self) -> Result<ScenarioModel> {
        let Some(ego) = self.ego else {
            return cerr("ego is never defined", Span::default());
        };
        let mut objects = Vec::with_capacity(self.scene.len());
        let mut final_props = Vec::with_capacity(self.scene.len());
        for &i in &self.scene {
            let inst = &self.instances[i];
            final_props.push(mutated(&inst.props, inst.span)?);
            objects.push(SceneObject {
                class: inst.class.name.clone(),
                props: inst.props.clone(),
                span: inst.span,
                plan: inst.plan.clone(),
            });
        }
        Ok(ScenarioModel {
            world: self.world,
            objects,
            final_props,
            ego: self.instances[ego].scene_index.expect("ego is an object"),
            requirements: self.requirements,
            params: self.params,
        })
    }

    // ---- statements ----

    fn exec_block(&mut self, body: &[Stmt]) -> Result<Flow> {
        for s in body {
            if let Flow::Return(v) = self.exec(s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn exec(&mut self, s: &Stmt) -> Result<Flow> {
        let span = s.span;
        match &s.kind {
            StmtKind::Import(name) => self.import(name, span)?,
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                if target == "ego" {
                    self.set_ego(v, span)?;
                } else {
                    self.bind(target, v);
                }
            }
            StmtKind::Param(items) => {
                for (name, e) in items {
                    let v = self.sym_expr(e)?;
                    self.params.insert(name.clone(), v);
                }
            }
            StmtKind::ClassDef { name, superclass, props } => {
                self.define_class(name, superclass.as_deref(), props, span)?
            }
            StmtKind::FuncDef { name, params, body } => {
                let mut ps = Vec::with_capacity(params.len());
                for p in params {
                    let d = match &p.default {
                        Some(e) => Some(self.eval(e)?),
                        None => None,
                    };
                    ps.push((p.name.clone(), d));
                }
                let f = Func { name: name.clone(), params: ps, body: body.clone().into() };
                self.bind(name, Val::Func(Rc::new(f)));
            }
            StmtKind::Require { prob, cond } => self.require(*prob, cond, span)?,
            StmtKind::Mutate { targets, scale } => self.mutate(targets, scale.as_ref(), span)?,
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::For { var, count, body } => {
                // `count` is the argument of `range(...)`
                let n = self.eval(count)?;
                let items = match self.call_builtin(Builtin::Range, vec![n], count.span)? {
                    Val::List(l) => l,
                    _ => unreachable!(),
                };
                for it in items.iter() {
                    self.bind(var, it.clone());
                    if let Flow::Return(v) = self.exec_block(body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::If { branches, orelse } => {
                for (c, body) in branches {
                    if self.condition(c)? {
                        return self.exec_block(body);
                    }
                }
                if let Some(b) = orelse {
                    return self.exec_block(b);
                }
            }
            StmtKind::Return(e) => {
                if self.frames.is_empty() {
                    return cerr("return outside a function", span);
                }
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => none_val(),
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Pass => {}
        }
        Ok(Flow::Next)
    }

    fn import(&mut self, name: &str, span: Span) -> Result<()> {
        if !self.imported.insert(name.to_string()) {
            return Ok(());
        }
        let m = self.loader.load(name, span)?;
        let saved = std::mem::take(&mut self.frames);
        let r = self.exec_block(&m.program.body);
        self.frames = saved;
        r.map(|_| ())
    }

    fn bind(&mut self, name: &str, v: Val) {
        match self.frames.last_mut() {
            Some(f) => f.insert(name.to_string(), v),
            None => self.globals.insert(name.to_string(), v),
        };
    }

    fn set_ego(&mut self, v: Val, span: Span) -> Result<()> {
        if self.ego.is_some() {
            return cerr("ego is assigned more than once", span);
        }
        match v {
            Val::Inst(i) if self.instances[i].scene_index.is_some() => {
                self.ego = Some(i);
                self.globals.insert("ego".into(), v);
                Ok(())
            }
            other => cerr(format!("ego must be an object, got {}", self.describe(&other)), span),
        }
    }

    fn define_class(&mut self, name: &str, sup: Option<&str>, props: &[PropDef], span: Span) -> Result<()> {
        let sup_name = sup.unwrap_or("Object");
        let Some(superclass) = self.classes.get(sup_name).cloned() else {
            return cerr(format!("unknown superclass {sup_name}"), span);
        };
        let mut seen = HashSet::new();
        for p in props {
            if !seen.insert(p.name.as_str()) {
                return cerr(format!("property {} defined twice in class {name}", p.name), p.span);
            }
        }
        let c = ClassDef { name: name.to_string(), superclass: Some(superclass), props: props.to_vec() };
        self.classes.insert(name.to_string(), Arc::new(c));
        Ok(())
    }

    fn require(&mut self, prob: Option<f64>, cond: &Expr, span: Span) -> Result<()> {
        if let Some(p) = prob {
            if !(p > 0.0 && p <= 1.0) {
                return cerr(format!("soft requirement probability must be in (0, 1], got {p}"), span);
            }
        }
        self.require_mode = true;
        let r = self.sym_expr(cond);
        self.require_mode = false;
        let c = r?;
        if !c.ty.may_be(Ty::Bool) {
            return cerr(format!("requirement must be a boolean, got {}", c.ty.name()), cond.span);
        }
        let label = match prob {
            Some(p) => format!("require[{p}] (line {})", span.line),
            None => format!("require (line {})", span.line),
        };
        self.requirements.push(Requirement { cond: c, prob, span, label });
        Ok(())
    }

    fn mutate(&mut self, targets: &[Expr], scale: Option<&Expr>, span: Span) -> Result<()> {
        let s = match scale {
            Some(e) => self.scalar_expr(e)?,
            None => scalar(1.0),
        };
        if let Some(x) = s.as_const().and_then(Value::as_scalar) {
            if x < 0.0 {
                return cerr(format!("mutation scale must be non-negative, got {x}"), span);
            }
        }
        let objs: Vec<usize> = if targets.is_empty() {
            self.scene.clone()
        } else {
            let mut out = Vec::new();
            for t in targets {
                match self.eval(t)? {
                    Val::Inst(i) if self.instances[i].scene_index.is_some() => out.push(i),
                    other => return cerr(format!("mutate expects objects, got {}", self.describe(&other)), t.span),
                }
            }
            out
        };
        for i in objs {
            self.instances[i].props.insert("mutationScale".into(), s.clone());
        }
        Ok(())
    }

    fn condition(&mut self, e: &Expr) -> Result<bool> {
        let s = self.sym_expr(e)?;
        match s.as_const() {
            Some(Value::Bool(b)) => Ok(*b),
            Some(v) => cerr(format!("condition must be a boolean, got {}", v.ty().name()), e.span),
            None => cerr("randomness in control flow: condition depends on a random value", e.span),
        }
    }

    // ---- expressions ----

    fn eval(&mut self, e: &Expr) -> Result<Val> {
        let span = e.span;
        Ok(match &e.kind {
            ExprKind::Number(x) => Val::Sym(konst_at(Value::Scalar(*x), span)),
            ExprKind::Str(s) => Val::Sym(konst_at(Value::Str(s.as_str().into()), span)),
            ExprKind::Bool(b) => Val::Sym(konst_at(Value::Bool(*b), span)),
            ExprKind::None => Val::Sym(konst_at(Value::None, span)),
            ExprKind::Name(n) => self.lookup(n, span)?,
            ExprKind::SelfRef => {
                if self.selves.is_empty() {
                    return cerr("self used outside an object definition", span);
                }
                Val::SelfObj
            }
            ExprKind::Attr(base, name) => {
                let b = self.eval(base)?;
                self.attr(b, name, span)?
            }
            ExprKind::Index(base, idx) => {
                let b = self.eval(base)?;
                let i = self.sym_expr(idx)?;
                self.index(b, i, span)?
            }
            ExprKind::Call { func, args, kwargs } => {
                let f = self.eval(func)?;
                let mut a = Vec::with_capacity(args.len());
                for x in args {
                    a.push(self.eval(x)?);
                }
                let mut kw = Vec::with_capacity(kwargs.len());
                for (k, x) in kwargs {
                    kw.push((k.clone(), self.eval(x)?));
                }
                self.call(f, a, kw, span)?
            }
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for x in items {
                    out.push(self.eval(x)?);
                }
                Val::List(Rc::new(out))
            }
            ExprKind::Dict(pairs) => {
                let mut out = Vec::with_capacity(pairs.len());
                for (k, v) in pairs {
                    out.push((self.eval(k)?, self.eval(v)?));
                }
                Val::Dict(Rc::new(out))
            }
            ExprKind::Interval(a, b) => {
                let lo = self.sym_expr(a)?;
                let hi = self.sym_expr(b)?;
                Val::Sym(lift(interval(lo, hi, span), span)?)
            }
            ExprKind::Neg(x) => self.unop(Op::Neg, x, span)?,
            ExprKind::Not(x) => self.unop(Op::Not, x, span)?,
            ExprKind::Deg(x) => self.unop(Op::Deg, x, span)?,
            ExprKind::Binary(o, a, b) => {
                let a = self.sym_expr(a)?;
                let b = self.sym_expr(b)?;
                Val::Sym(self.mk(binop(*o), vec![a, b], span)?)
            }
            ExprKind::Vector(a, b) => {
                let x = self.scalar_expr(a)?;
                let y = self.scalar_expr(b)?;
                Val::Sym(self.mk(Op::MakeVector, vec![x, y], span)?)
            }
            ExprKind::RelativeTo(a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                self.relative_to(a, b, span)?
            }
            ExprKind::OffsetBy(a, b) => {
                let a = self.eval(a)?;
                let off = self.vec_expr(b)?;
                match self.oriented(&a, span)? {
                    Some((p, h)) => Val::OPoint(self.mk(Op::OffsetLocal, vec![p, h.clone(), off], span)?, h),
                    None => {
                        let p = self.vec_of(&a, span)?;
                        Val::Sym(self.mk(Op::Add, vec![p, off], span)?)
                    }
                }
            }
            ExprKind::OffsetAlong { base, direction, offset } => {
                let v1 = self.vec_expr(base)?;
                Val::Sym(self.offset_along(v1, direction, offset, span)?)
            }
            ExprKind::FieldAt(f, v) => {
                let f = self.field_expr(f)?;
                let v = self.vec_expr(v)?;
                Val::Sym(self.mk(Op::FieldAt, vec![f, v], span)?)
            }
            ExprKind::CanSee(x, y) => {
                let x = self.eval(x)?;
                let y = self.eval(y)?;
                Val::Sym(self.can_see(&x, &y, span)?)
            }
            ExprKind::IsIn(x, r) => {
                let x = self.eval(x)?;
                let r = self.region_expr(r)?;
                Val::Sym(self.is_in(&x, r, span)?)
            }
            ExprKind::IsNone { value, negated } => {
                let v = self.eval(value)?;
                let known = match &v {
                    Val::Sym(s) => match s.ty {
                        Ty::None => Some(true),
                        Ty::Any => None,
                        _ => Some(false),
                    },
                    _ => Some(false),
                };
                match (known, v) {
                    (Some(b), _) => Val::Sym(konst_at(Value::Bool(b != *negated), span)),
                    (None, Val::Sym(s)) => {
                        let o = if *negated { Op::IsNotNone } else { Op::IsNone };
                        Val::Sym(self.mk(o, vec![s], span)?)
                    }
                    _ => unreachable!(),
                }
            }
            ExprKind::Visible(r) => {
                let r = self.region_expr(r)?;
                let ego = self.ego_val(span)?;
                let vr = self.visible_region(&ego, span)?;
                Val::Sym(self.mk(Op::Intersect, vec![r, vr], span)?)
            }
            ExprKind::VisibleFrom(r, p) => {
                let r = self.region_expr(r)?;
                let p = self.eval(p)?;
                let vr = self.visible_region(&p, span)?;
                Val::Sym(self.mk(Op::Intersect, vec![r, vr], span)?)
            }
            ExprKind::RelativeHeading { heading, from } => {
                let h1 = self.heading_expr(heading)?;
                let h2 = match from {
                    Some(f) => self.heading_expr(f)?,
                    None => {
                        let ego = self.ego_val(span)?;
                        self.heading_of(&ego, span)?
                    }
                };
                let d = self.mk(Op::Sub, vec![h1, h2], span)?;
                Val::Sym(self.mk(Op::Normalize, vec![d], span)?)
            }
            ExprKind::ApparentHeading { point, from } => {
                let p = self.eval(point)?;
                let Some((pos, h)) = self.oriented(&p, span)? else {
                    return cerr(format!("apparent heading needs an oriented point, got {}", self.describe(&p)), span);
                };
                let v = self.from_or_ego(from.as_deref(), span)?;
                let d = self.mk(Op::Sub, vec![pos, v], span)?;
                let a = self.mk(Op::AngleOf, vec![d], span)?;
                let r = self.mk(Op::Sub, vec![h, a], span)?;
                Val::Sym(self.mk(Op::Normalize, vec![r], span)?)
            }
            ExprKind::Distance { from, to } => {
                let v1 = self.from_or_ego(from.as_deref(), span)?;
                let v2 = self.vec_expr(to)?;
                let d = self.mk(Op::Sub, vec![v2, v1], span)?;
                Val::Sym(self.mk(Op::Norm, vec![d], span)?)
            }
            ExprKind::AngleTo { from, to } => {
                let v1 = self.from_or_ego(from.as_deref(), span)?;
                let v2 = self.vec_expr(to)?;
                let d = self.mk(Op::Sub, vec![v2, v1], span)?;
                Val::Sym(self.mk(Op::AngleOf, vec![d], span)?)
            }
            ExprKind::Follow { field, from, distance } => {
                let (y, h) = self.follow(field, from.as_deref(), distance, span)?;
                Val::OPoint(y, h)
            }
            ExprKind::SideOf(side, o) => {
                let o = self.eval(o)?;
                let (p, h) = self.side_of(&o, *side, span)?;
                Val::OPoint(p, h)
            }
            ExprKind::Instance { class, specifiers } => self.construct(class, specifiers, span)?,
            ExprKind::IfElse { cond, then, orelse } => {
                if self.condition(cond)? {
                    self.eval(then)?
                } else {
                    self.eval(orelse)?
                }
            }
        })
    }

    fn lookup(&self, name: &str, span: Span) -> Result<Val> {
        if let Some(v) = self.frames.last().and_then(|f| f.get(name)) {
            return Ok(v.clone());
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        if self.world.tables.contains_key(name) {
            return Ok(Val::Table(name.into()));
        }
        if let Some(b) = Builtin::from_name(name) {
            return Ok(Val::Builtin(b));
        }
        if name == "ego" {
            return cerr("ego is not defined yet", span);
        }
        cerr(format!("name '{name}' is not defined"), span)
    }

    fn describe(&self, v: &Val) -> String {
        match v {
            Val::Sym(s) => s.ty.name().to_string(),
            Val::Inst(i) => format!("{} instance", self.instances[*i].class.name),
            Val::OPoint(..) => "oriented point".into(),
            Val::List(_) => "list".into(),
            Val::Dict(_) => "dictionary".into(),
            Val::Func(f) => format!("function {}", f.name),
            Val::Builtin(b) => format!("built-in {b:?}"),
            Val::Table(t) => format!("table {t}"),
            Val::Member(t, m) => format!("{t}.{m}"),
            Val::SelfObj => "self".into(),
        }
    }

    fn mk(&self, o: Op, args: Vec<Sym>, span: Span) -> Result<Sym> {
        lift(op(o, args, span), span)
    }

    fn unop(&mut self, o: Op, x: &Expr, span: Span) -> Result<Val> {
        let a = self.sym_expr(x)?;
        Ok(Val::Sym(self.mk(o, vec![a], span)?))
    }

    fn self_class(&self) -> Option<&Arc<ClassDef>> {
        self.selves.last()
    }

    /// Property of an instance. Inside `require`, scene objects are read
    /// after mutation.
    fn prop(&self, idx: usize, name: &str, span: Span) -> Result<Sym> {
        let inst = &self.instances[idx];
        let Some(s) = inst.props.get(name) else {
            return cerr(format!("{} has no property {name}", inst.class.name), span);
        };
        if self.require_mode {
            if let Some(k) = inst.scene_index {
                return Ok(crate::values::obj_prop(k, name, s.ty));
            }
        }
        Ok(s.clone())
    }

    fn self_prop_checked(&self, name: &str) -> Sym {
        self_prop(name, property_ty(name))
    }

    fn attr(&mut self, b: Val, name: &str, span: Span) -> Result<Val> {
        Ok(match b {
            Val::Inst(i) => Val::Sym(self.prop(i, name, span)?),
            Val::SelfObj => Val::Sym(self.self_prop_checked(name)),
            Val::OPoint(p, h) => match name {
                "position" => Val::Sym(p),
                "heading" => Val::Sym(h),
                "viewDistance" => Val::Sym(scalar(DEFAULT_VIEW_DISTANCE)),
                "viewAngle" => Val::Sym(scalar(2.0 * PI)),
                _ => return cerr(format!("oriented point has no property {name}"), span),
            },
            Val::Table(ns) => match self.world.tables[&*ns].get(name) {
                Some(TableMember::Value(v)) => Val::Sym(konst_at(v.clone(), span)),
                Some(_) => Val::Member(ns, name.into()),
                None => return cerr(format!("table {ns} has no member {name}"), span),
            },
            Val::Sym(s) => Val::Sym(lift(attr(s, name, span), span)?),
            other => return cerr(format!("{} has no attribute {name}", self.describe(&other)), span),
        })
    }

    fn index(&mut self, b: Val, i: Sym, span: Span) -> Result<Val> {
        match b {
            Val::List(items) => {
                let Some(x) = i.as_const().and_then(Value::as_scalar) else {
                    return cerr("list index must be a fixed number", span);
                };
                if x.fract() != 0.0 || x < 0.0 || x as usize >= items.len() {
                    return cerr(format!("list index {x} out of range"), span);
                }
                Ok(items[x as usize].clone())
            }
            Val::Sym(s) => Ok(Val::Sym(self.mk(Op::Index, vec![s, i], span)?)),
            other => cerr(format!("cannot index {}", self.describe(&other)), span),
        }
    }

    fn call(&mut self, f: Val, args: Vec<Val>, kwargs: Vec<(String, Val)>, span: Span) -> Result<Val> {
        match f {
            Val::Func(func) => self.call_func(&func, args, kwargs, span),
            Val::Builtin(b) => {
                if !kwargs.is_empty() {
                    return cerr(format!("built-in {b:?} takes no keyword arguments"), span);
                }
                self.call_builtin(b, args, span)
            }
            Val::Member(ns, m) => {
                if !kwargs.is_empty() {
                    return cerr(format!("{ns}.{m} takes no keyword arguments"), span);
                }
                self.call_member(&ns, &m, args, span)
            }
            other => cerr(format!("{} is not callable", self.describe(&other)), span),
        }
    }

    fn call_func(&mut self, f: &Func, args: Vec<Val>, kwargs: Vec<(String, Val)>, span: Span) -> Result<Val> {
        if args.len() > f.params.len() {
            return cerr(format!("{} takes {} arguments, got {}", f.name, f.params.len(), args.len()), span);
        }
        let mut slots: Vec<Option<Val>> = vec![None; f.params.len()];
        for (i, a) in args.into_iter().enumerate() {
            slots[i] = Some(a);
        }
        for (k, v) in kwargs {
            let Some(i) = f.params.iter().position(|(n, _)| *n == k) else {
                return cerr(format!("{} has no parameter {k}", f.name), span);
            };
            if slots[i].is_some() {
                return cerr(format!("{} got parameter {k} twice", f.name), span);
            }
            slots[i] = Some(v);
        }
        let mut frame = HashMap::new();
        for ((name, default), slot) in f.params.iter().zip(slots) {
            let v = match (slot, default) {
                (Some(v), _) => v,
                (None, Some(d)) => d.clone(),
                (None, None) => return cerr(format!("{} is missing argument {name}", f.name), span),
            };
            frame.insert(name.clone(), v);
        }
        if self.frames.len() >= MAX_CALL_DEPTH {
            return cerr("function calls nested too deeply", span);
        }
        self.frames.push(frame);
        let r = self.exec_block(&f.body);
        self.frames.pop();
        Ok(match r? {
            Flow::Return(v) => v,
            Flow::Next => none_val(),
        })
    }

    fn call_builtin(&mut self, b: Builtin, args: Vec<Val>, span: Span) -> Result<Val> {
        let syms = |it: &Self, args: &[Val]| -> Result<Vec<Sym>> { args.iter().map(|a| it.sym_of(a, span)).collect() };
        let arity = |n: usize| -> Result<()> {
            if args.len() != n {
                return cerr(format!("{b:?} takes {n} argument(s), got {}", args.len()), span);
            }
            Ok(())
        };
        Ok(match b {
            Builtin::Range => {
                if args.is_empty() || args.len() > 2 {
                    return cerr("range takes one or two arguments", span);
                }
                let mut bounds = Vec::new();
                for s in syms(self, &args)? {
                    match s.as_const().and_then(Value::as_scalar) {
                        Some(x) if x.fract() == 0.0 => bounds.push(x as i64),
                        Some(x) => return cerr(format!("range bound {x} is not an integer"), span),
                        None => return cerr("randomness in control flow: range bound is random", span),
                    }
                }
                let (lo, hi) = if bounds.len() == 1 { (0, bounds[0]) } else { (bounds[0], bounds[1]) };
                Val::List(Rc::new((lo..hi).map(|i| Val::Sym(scalar(i as f64))).collect()))
            }
            Builtin::Resample => {
                arity(1)?;
                let s = self.sym_of(&args[0], span)?;
                Val::Sym(lift(resample(&s), span)?)
            }
            Builtin::Uniform => Val::Sym(lift(choice(syms(self, &args)?, span), span)?),
            Builtin::Discrete => {
                arity(1)?;
                let Val::Dict(pairs) = &args[0] else {
                    return cerr("Discrete expects a dictionary of values to weights", span);
                };
                let mut vs = Vec::new();
                let mut ws = Vec::new();
                for (k, w) in pairs.iter() {
                    vs.push(self.sym_of(k, span)?);
                    ws.push(self.sym_of(w, span)?);
                }
                Val::Sym(lift(discrete(vs, ws, span), span)?)
            }
            Builtin::Normal => {
                arity(2)?;
                let s = syms(self, &args)?;
                Val::Sym(lift(normal(s[0].clone(), s[1].clone(), span), span)?)
            }
            Builtin::Abs => {
                arity(1)?;
                Val::Sym(self.mk(Op::Abs, syms(self, &args)?, span)?)
            }
            Builtin::Max => Val::Sym(self.mk(Op::Max, syms(self, &args)?, span)?),
            Builtin::Min => Val::Sym(self.mk(Op::Min, syms(self, &args)?, span)?),
        })
    }

    fn call_member(&mut self, ns: &str, m: &str, args: Vec<Val>, span: Span) -> Result<Val> {
        let member = self.world.tables[ns][m].clone();
        let nargs = if matches!(member, TableMember::Scale(_)) { 1 } else { 0 };
        if args.len() != nargs {
            return cerr(format!("{ns}.{m} takes {nargs} argument(s), got {}", args.len()), span);
        }
        Ok(match member {
            TableMember::Value(_) => return cerr(format!("{ns}.{m} is not callable"), span),
            TableMember::Uniform(vs) => {
                Val::Sym(lift(choice(vs.into_iter().map(|v| konst_at(v, span)).collect(), span), span)?)
            }
            TableMember::Discrete(pairs) => {
                let (vs, ws): (Vec<Sym>, Vec<Sym>) =
                    pairs.into_iter().map(|(v, w)| (konst_at(v, span), scalar(w))).unzip();
                Val::Sym(lift(discrete(vs, ws, span), span)?)
            }
            TableMember::Scale(f) => {
                let items: Vec<Sym> = match &args[0] {
                    Val::List(items) => items.iter().map(|x| self.sym_of(x, span)).collect::<Result<_>>()?,
                    Val::Sym(s) => match s.as_const() {
                        Some(Value::List(items)) => items.iter().map(|v| konst(v.clone())).collect(),
                        _ => return cerr(format!("{ns}.{m} expects a list"), span),
                    },
                    other => return cerr(format!("{ns}.{m} expects a list, got {}", self.describe(other)), span),
                };
                let mut out = Vec::with_capacity(items.len());
                for x in items {
                    out.push(self.mk(Op::Mul, vec![x, scalar(f)], span)?);
                }
                Val::Sym(self.mk(Op::List, out, span)?)
            }
        })
    }

    // ---- coercions ----

    fn sym_of(&self, v: &Val, span: Span) -> Result<Sym> {
        match v {
            Val::Sym(s) => Ok(s.clone()),
            Val::List(items) => {
                let syms = items.iter().map(|x| self.sym_of(x, span)).collect::<Result<Vec<_>>>()?;
                self.mk(Op::List, syms, span)
            }
            Val::Inst(_) | Val::OPoint(..) | Val::SelfObj => cerr(
                format!("{} cannot be used as a plain value here; use .position or .heading", self.describe(v)),
                span,
            ),
            other => cerr(format!("cannot use {} as a value", self.describe(other)), span),
        }
    }

    fn vec_of(&self, v: &Val, span: Span) -> Result<Sym> {
        match v {
            Val::Sym(s) if s.ty.may_be(Ty::Vector) => Ok(s.clone()),
            Val::Inst(i) => self.prop(*i, "position", span),
            Val::OPoint(p, _) => Ok(p.clone()),
            Val::SelfObj => Ok(self_prop("position", Ty::Vector)),
            other => cerr(format!("expected a vector, got {}", self.describe(other)), span),
        }
    }

    /// Headings; a vector field means its value at the position of the
    /// object being constructed.
    fn heading_of(&self, v: &Val, span: Span) -> Result<Sym> {
        match v {
            Val::Sym(s) if s.ty == Ty::Field => {
                if self.selves.is_empty() {
                    return cerr("a vector field can only stand for a heading inside an object definition", span);
                }
                self.mk(Op::FieldAt, vec![s.clone(), self_prop("position", Ty::Vector)], span)
            }
            Val::Sym(s) if s.ty.may_be(Ty::Scalar) => Ok(s.clone()),
            Val::Inst(i) => {
                if !self.instances[*i].has_heading() {
                    return cerr(format!("{} has no heading", self.instances[*i].class.name), span);
                }
                self.prop(*i, "heading", span)
            }
            Val::OPoint(_, h) => Ok(h.clone()),
            Val::SelfObj => Ok(self_prop("heading", Ty::Scalar)),
            other => cerr(format!("expected a heading, got {}", self.describe(other)), span),
        }
    }

    /// Position and heading of anything oriented.
    fn oriented(&self, v: &Val, span: Span) -> Result<Option<(Sym, Sym)>> {
        Ok(match v {
            Val::Inst(i) if self.instances[*i].has_heading() => {
                Some((self.prop(*i, "position", span)?, self.prop(*i, "heading", span)?))
            }
            Val::OPoint(p, h) => Some((p.clone(), h.clone())),
            _ => None,
        })
    }

    fn is_pointlike(v: &Val) -> bool {
        matches!(v, Val::Inst(_) | Val::OPoint(..) | Val::SelfObj)
    }

    fn is_field(v: &Val) -> bool {
        matches!(v, Val::Sym(s) if s.ty == Ty::Field)
    }

    fn sym_expr(&mut self, e: &Expr) -> Result<Sym> {
        let v = self.eval(e)?;
        self.sym_of(&v, e.span)
    }

    fn vec_expr(&mut self, e: &Expr) -> Result<Sym> {
        let v = self.eval(e)?;
        self.vec_of(&v, e.span)
    }

    fn heading_expr(&mut self, e: &Expr) -> Result<Sym> {
        let v = self.eval(e)?;
        self.heading_of(&v, e.span)
    }

    fn scalar_expr(&mut self, e: &Expr) -> Result<Sym> {
        let s = self.sym_expr(e)?;
        if !s.ty.may_be(Ty::Scalar) {
            return cerr(format!("expected a scalar, got {}", s.ty.name()), e.span);
        }
        Ok(s)
    }

    fn region_expr(&mut self, e: &Expr) -> Result<Sym> {
        let s = self.sym_expr(e)?;
        if !s.ty.may_be(Ty::Region) {
            return cerr(format!("expected a region, got {}", s.ty.name()), e.span);
        }
        Ok(s)
    }

    fn field_expr(&mut self, e: &Expr) -> Result<Sym> {
        let s = self.sym_expr(e)?;
        if !s.ty.may_be(Ty::Field) {
            return cerr(format!("expected a vector field, got {}", s.ty.name()), e.span);
        }
        Ok(s)
    }

    fn ego_val(&self, span: Span) -> Result<Val> {
        match self.ego {
            Some(i) => Ok(Val::Inst(i)),
            None => cerr("ego is not defined yet", span),
        }
    }

    fn from_or_ego(&mut self, from: Option<&Expr>, span: Span) -> Result<Sym> {
        match from {
            Some(e) => self.vec_expr(e),
            None => {
                let ego = self.ego_val(span)?;
                self.vec_of(&ego, span)
            }
        }
    }

    // ---- operators ----

    fn relative_to(&mut self, a: Val, b: Val, span: Span) -> Result<Val> {
        if Self::is_pointlike(&a) && Self::is_pointlike(&b) {
            return cerr(
                format!("ambiguous: {} relative to {} (use .position or .heading)", self.describe(&a), self.describe(&b)),
                span,
            );
        }
        if Self::is_field(&a) || Self::is_field(&b) {
            let ha = self.heading_of(&a, span)?;
            let hb = self.heading_of(&b, span)?;
            return Ok(Val::Sym(self.mk(Op::Add, vec![ha, hb], span)?));
        }
        if Self::is_pointlike(&b) {
            let s = self.sym_of(&a, span)?;
            return match (s.ty, self.oriented(&b, span)?) {
                (Ty::Vector, Some((p, h))) => Ok(Val::OPoint(self.mk(Op::OffsetLocal, vec![p, h.clone(), s], span)?, h)),
                (Ty::Vector, None) => {
                    let p = self.vec_of(&b, span)?;
                    Ok(Val::Sym(self.mk(Op::Add, vec![s, p], span)?))
                }
                (Ty::Scalar, _) => {
                    let h = self.heading_of(&b, span)?;
                    Ok(Val::Sym(self.mk(Op::Add, vec![s, h], span)?))
                }
                (t, _) => cerr(format!("cannot tell whether {} is a heading or a vector", t.name()), span),
            };
        }
        if Self::is_pointlike(&a) {
            let s = self.sym_of(&b, span)?;
            return match s.ty {
                Ty::Vector => {
                    let p = self.vec_of(&a, span)?;
                    Ok(Val::Sym(self.mk(Op::Add, vec![p, s], span)?))
                }
                Ty::Scalar => {
                    let h = self.heading_of(&a, span)?;
                    Ok(Val::Sym(self.mk(Op::Add, vec![h, s], span)?))
                }
                t => cerr(format!("cannot tell whether {} is a heading or a vector", t.name()), span),
            };
        }
        let x = self.sym_of(&a, span)?;
        let y = self.sym_of(&b, span)?;
        Ok(Val::Sym(self.mk(Op::RelTo, vec![x, y], span)?))
    }

    fn offset_along(&mut self, v1: Sym, direction: &Expr, offset: &Expr, span: Span) -> Result<Sym> {
        let d = self.eval(direction)?;
        let v2 = self.vec_expr(offset)?;
        let h = match &d {
            Val::Sym(f) if f.ty == Ty::Field => self.mk(Op::FieldAt, vec![f.clone(), v1.clone()], span)?,
            _ => self.heading_of(&d, direction.span)?,
        };
        self.mk(Op::OffsetLocal, vec![v1, h, v2], span)
    }

    /// Position, heading (None for plain points), view distance and angle.
    fn viewer(&self, v: &Val, span: Span) -> Result<Vec<Sym>> {
        let none = konst(Value::None);
        let full = scalar(2.0 * PI);
        Ok(match v {
            Val::Inst(i) => {
                let inst = &self.instances[*i];
                let h = if inst.has_heading() { self.prop(*i, "heading", span)? } else { none };
                let a = if inst.props.contains_key("viewAngle") { self.prop(*i, "viewAngle", span)? } else { full };
                vec![self.prop(*i, "position", span)?, h, self.prop(*i, "viewDistance", span)?, a]
            }
            Val::OPoint(p, h) => vec![p.clone(), h.clone(), scalar(DEFAULT_VIEW_DISTANCE), full],
            Val::SelfObj => {
                let c = self.self_class().expect("self context");
                let (h, a) = if c.has_property("heading") {
                    (self_prop("heading", Ty::Scalar), self_prop("viewAngle", Ty::Scalar))
                } else {
                    (none, full)
                };
                vec![self_prop("position", Ty::Vector), h, self_prop("viewDistance", Ty::Scalar), a]
            }
            other => vec![self.vec_of(other, span)?, none, scalar(DEFAULT_VIEW_DISTANCE), full],
        })
    }

    fn visible_region(&self, v: &Val, span: Span) -> Result<Sym> {
        let args = self.viewer(v, span)?;
        self.mk(Op::VisibleRegion, args, span)
    }

    fn is_object(&self, v: &Val) -> Option<usize> {
        match v {
            Val::Inst(i) if self.instances[*i].class.is_object() => Some(*i),
            _ => None,
        }
    }

    fn can_see(&self, x: &Val, y: &Val, span: Span) -> Result<Sym> {
        let mut args = self.viewer(x, span)?;
        match self.is_object(y) {
            Some(i) => {
                for p in ["position", "heading", "width", "height"] {
                    args.push(self.prop(i, p, span)?);
                }
                self.mk(Op::CanSeeBox, args, span)
            }
            None => {
                args.push(self.vec_of(y, span)?);
                self.mk(Op::CanSeePoint, args, span)
            }
        }
    }

    fn is_in(&self, x: &Val, r: Sym, span: Span) -> Result<Sym> {
        match self.is_object(x) {
            Some(i) => {
                let mut args = Vec::with_capacity(5);
                for p in ["position", "heading", "width", "height"] {
                    args.push(self.prop(i, p, span)?);
                }
                args.push(r);
                self.mk(Op::BoxInRegion, args, span)
            }
            None => {
                let v = self.vec_of(x, span)?;
                self.mk(Op::InRegion, vec![v, r], span)
            }
        }
    }

    fn follow(&mut self, field: &Expr, from: Option<&Expr>, distance: &Expr, span: Span) -> Result<(Sym, Sym)> {
        let f = self.field_expr(field)?;
        let v = self.from_or_ego(from, span)?;
        let s = self.scalar_expr(distance)?;
        let y = self.mk(Op::ForwardEuler, vec![v, s, f.clone()], span)?;
        let h = self.mk(Op::FieldAt, vec![f, y.clone()], span)?;
        Ok((y, h))
    }

    fn side_of(&self, o: &Val, side: Side, span: Span) -> Result<(Sym, Sym)> {
        let Some(i) = self.is_object(o) else {
            return cerr(format!("{} of expects an object, got {}", side.words(), self.describe(o)), span);
        };
        let pos = self.prop(i, "position", span)?;
        let h = self.prop(i, "heading", span)?;
        let half = |p: &str, sign: f64| -> Result<Sym> { self.mk(Op::Mul, vec![self.prop(i, p, span)?, scalar(0.5 * sign)], span) };
        let dx = match side {
            Side::Left | Side::FrontLeft | Side::BackLeft => half("width", -1.0)?,
            Side::Right | Side::FrontRight | Side::BackRight => half("width", 1.0)?,
            Side::Front | Side::Back => scalar(0.0),
        };
        let dy = match side {
            Side::Front | Side::FrontLeft | Side::FrontRight => half("height", 1.0)?,
            Side::Back | Side::BackLeft | Side::BackRight => half("height", -1.0)?,
            Side::Left | Side::Right => scalar(0.0),
        };
        let off = self.mk(Op::MakeVector, vec![dx, dy], span)?;
        Ok((self.mk(Op::OffsetLocal, vec![pos, h.clone(), off], span)?, h))
    }

    // ---- object construction ----

    fn construct(&mut self, class_name: &str, specs: &[Specifier], span: Span) -> Result<Val> {
        if self.require_mode {
            return cerr("objects cannot be created inside a requirement", span);
        }
        let Some(class) = self.classes.get(class_name).cloned() else {
            return cerr(format!("unknown class {class_name}"), span);
        };
        self.selves.push(class.clone());
        let r = self.construct_in(&class, specs, span);
        self.selves.pop();
        let (props, plan) = r?;
        let scene_index = class.is_object().then_some(self.scene.len());
        self.instances.push(Instance { class, props, span, scene_index, plan });
        let idx = self.instances.len() - 1;
        if scene_index.is_some() {
            self.scene.push(idx);
        }
        Ok(Val::Inst(idx))
    }

    #[allow(clippy::type_complexity)]
    fn construct_in(
        &mut self,
        class: &Arc<ClassDef>,
        specs: &[Specifier],
        span: Span,
    ) -> Result<(BTreeMap<String, Sym>, Vec<(String, Vec<String>)>)> {
        let mut outs = Vec::with_capacity(specs.len());
        for s in specs {
            outs.push(self.eval_spec(class, s)?);
        }
        let names: Vec<String> = class.defaults().iter().map(|(n, _)| n.to_string()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let plan = resolve(outs, &names, &mut |p| self.eval_default(class, p))?;
        let props = execute(&plan).map_err(|m| Error::construct(m, span))?;
        if class.is_object() {
            for d in ["width", "height"] {
                if let Some(x) = props.get(d).and_then(|s| s.as_const()).and_then(Value::as_scalar) {
                    if !(x > 0.0) {
                        return cerr(format!("{} {d} must be positive, got {x}", class.name), span);
                    }
                }
            }
        }
        let summary = plan.iter().map(|e| (e.head.clone(), e.props.iter().map(|(p, _)| p.clone()).collect())).collect();
        Ok((props, summary))
    }

    /// Default value expressions run in the global scope with `self` bound
    /// to the object under construction.
    fn eval_default(&mut self, class: &Arc<ClassDef>, p: &str) -> Result<(Sym, Span)> {
        let def = class
            .chain()
            .into_iter()
            .rev()
            .find_map(|c| c.props.iter().find(|d| d.name == p))
            .cloned()
            .expect("default exists for every class property");
        let saved = std::mem::take(&mut self.frames);
        let r = self.eval(&def.value).and_then(|v| self.coerce_prop(p, v, def.value.span));
        self.frames = saved;
        Ok((r?, def.span))
    }

    fn coerce_prop(&self, name: &str, v: Val, span: Span) -> Result<Sym> {
        let s = match name {
            "position" => self.vec_of(&v, span)?,
            "heading" => self.heading_of(&v, span)?,
            _ => {
                if Self::is_pointlike(&v) {
                    return cerr(
                        format!("property {name} cannot hold {}; object-valued properties are not supported", self.describe(&v)),
                        span,
                    );
                }
                self.sym_of(&v, span)?
            }
        };
        let want = property_ty(name);
        if want != Ty::Any && !s.ty.may_be(want) {
            return cerr(format!("property {name} expects a {}, got {}", want.name(), s.ty.name()), span);
        }
        Ok(s)
    }

    fn beside_offset(&self, dir: Direction, by: Sym, span: Span) -> Result<Sym> {
        let w = self_prop("width", Ty::Scalar);
        let h = self_prop("height", Ty::Scalar);
        let zero = scalar(0.0);
        let (x, y) = match dir {
            Direction::Left => {
                let a = self.mk(Op::Mul, vec![w, scalar(-0.5)], span)?;
                (self.mk(Op::Sub, vec![a, by], span)?, zero)
            }
            Direction::Right => {
                let a = self.mk(Op::Mul, vec![w, scalar(0.5)], span)?;
                (self.mk(Op::Add, vec![a, by], span)?, zero)
            }
            Direction::Ahead => {
                let a = self.mk(Op::Mul, vec![h, scalar(0.5)], span)?;
                (zero, self.mk(Op::Add, vec![a, by], span)?)
            }
            Direction::Behind => {
                let a = self.mk(Op::Mul, vec![h, scalar(-0.5)], span)?;
                (zero, self.mk(Op::Sub, vec![a, by], span)?)
            }
        };
        self.mk(Op::MakeVector, vec![x, y], span)
    }

    fn eval_spec(&mut self, class: &Arc<ClassDef>, spec: &Specifier) -> Result<SpecOut> {
        let span = spec.span;
        let out = SpecOut::new(spec.kind.head(), span);
        let has_heading = class.has_property("heading");
        let self_pos = || self_prop("position", Ty::Vector);
        let need_heading = |it: &Self| -> Result<()> {
            if has_heading {
                Ok(())
            } else {
                let _ = it;
                cerr(format!("{} has no heading to specify", class.name), span)
            }
        };
        Ok(match &spec.kind {
            SpecKind::With { property, value } => {
                let v = self.eval(value)?;
                out.set(property, self.coerce_prop(property, v, value.span)?)
            }
            SpecKind::At(v) => out.set("position", self.vec_expr(v)?),
            SpecKind::OffsetBy(v) => {
                let off = self.vec_expr(v)?;
                let base = self.from_or_ego(None, span)?;
                out.set("position", self.mk(Op::Add, vec![base, off], span)?)
            }
            SpecKind::OffsetAlong { direction, offset } => {
                let base = self.from_or_ego(None, span)?;
                out.set("position", self.offset_along(base, direction, offset, span)?)
            }
            SpecKind::Beside { dir, target, by } => {
                let mut t = self.eval(target)?;
                let s = match by {
                    Some(b) => self.scalar_expr(b)?,
                    None => scalar(0.0),
                };
                if self.is_object(&t).is_some() {
                    let side = match dir {
                        Direction::Left => Side::Left,
                        Direction::Right => Side::Right,
                        Direction::Ahead => Side::Front,
                        Direction::Behind => Side::Back,
                    };
                    let (p, h) = self.side_of(&t, side, target.span)?;
                    t = Val::OPoint(p, h);
                }
                let off = self.beside_offset(*dir, s, span)?;
                match self.oriented(&t, target.span)? {
                    Some((p, h)) => {
                        let pos = self.mk(Op::OffsetLocal, vec![p, h.clone(), off], span)?;
                        let o = out.set("position", pos);
                        if has_heading {
                            o.offer("heading", h)
                        } else {
                            o
                        }
                    }
                    None => {
                        let v = self.vec_of(&t, target.span)?;
                        out.set("position", self.mk(Op::OffsetLocal, vec![v, self_prop("heading", Ty::Scalar), off], span)?)
                    }
                }
            }
            SpecKind::Beyond { target, offset, from } => {
                let v1 = self.vec_expr(target)?;
                let v2 = self.vec_expr(offset)?;
                let v3 = self.from_or_ego(from.as_ref(), span)?;
                let d = self.mk(Op::Sub, vec![v1.clone(), v3], span)?;
                let a = self.mk(Op::AngleOf, vec![d], span)?;
                out.set("position", self.mk(Op::OffsetLocal, vec![v1, a, v2], span)?)
            }
            SpecKind::Visible { from } => {
                let p = match from {
                    Some(f) => self.eval(f)?,
                    None => self.ego_val(span)?,
                };
                let vr = self.visible_region(&p, span)?;
                out.set("position", lift(point_in(vr, span), span)?)
            }
            SpecKind::In(r) | SpecKind::On(r) => {
                let r = self.region_expr(r)?;
                let x = lift(point_in(r.clone(), span), span)?;
                let o = out.set("position", x.clone());
                match static_orientation(&r) {
                    Some(f) if has_heading => {
                        let h = self.mk(Op::FieldAt, vec![konst(Value::Field(f)), x], span)?;
                        o.offer("heading", h)
                    }
                    _ => o,
                }
            }
            SpecKind::Following { field, from, distance } => {
                let (y, h) = self.follow(field, from.as_ref(), distance, span)?;
                let o = out.set("position", y);
                if has_heading {
                    o.offer("heading", h)
                } else {
                    o
                }
            }
            SpecKind::Facing(h) => {
                need_heading(self)?;
                out.set("heading", self.heading_expr(h)?)
            }
            SpecKind::FacingToward(v) => {
                need_heading(self)?;
                let v = self.vec_expr(v)?;
                let d = self.mk(Op::Sub, vec![v, self_pos()], span)?;
                out.set("heading", self.mk(Op::AngleOf, vec![d], span)?)
            }
            SpecKind::FacingAwayFrom(v) => {
                need_heading(self)?;
                let v = self.vec_expr(v)?;
                let d = self.mk(Op::Sub, vec![self_pos(), v], span)?;
                out.set("heading", self.mk(Op::AngleOf, vec![d], span)?)
            }
            SpecKind::ApparentlyFacing { heading, from } => {
                need_heading(self)?;
                let h = self.heading_expr(heading)?;
                let v = self.from_or_ego(from.as_ref(), span)?;
                let d = self.mk(Op::Sub, vec![self_pos(), v], span)?;
                let a = self.mk(Op::AngleOf, vec![d], span)?;
                out.set("heading", self.mk(Op::Add, vec![h, a], span)?)
            }
        })
    }
}

/// Adds mutation noise to position and heading. A scale that is the
/// constant 0 leaves the properties untouched.
fn mutated(props: &BTreeMap<String, Sym>, span: Span) -> Result<BTreeMap<String, Sym>> {
    let mut out = props.clone();
    let scale = &props["mutationScale"];
    if scale.as_const().and_then(Value::as_scalar) == Some(0.0) {
        return Ok(out);
    }
    let zero = scalar(0.0);
    let sd = |key: &str| lift(op(Op::Mul, vec![scale.clone(), props[key].clone()], span), span);
    let psd = sd("positionStdDev")?;
    let nx = lift(normal(zero.clone(), psd.clone(), span), span)?;
    let ny = lift(normal(zero.clone(), psd, span), span)?;
    let noise = lift(op(Op::MakeVector, vec![nx, ny], span), span)?;
    out.insert("position".into(), lift(op(Op::Add, vec![props["position"].clone(), noise], span), span)?);
    if let Some(h) = props.get("heading") {
        let nh = lift(normal(zero, sd("headingStdDev")?, span), span)?;
        out.insert("heading".into(), lift(op(Op::Add, vec![h.clone(), nh], span), span)?);
    }
    Ok(out)
}
