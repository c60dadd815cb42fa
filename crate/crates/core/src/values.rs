use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use scenelang_geometry::{
    angle_of, box_corners, box_polygon, forward_euler, normalize_angle, offset_local, Region, Sector, Vector,
    VectorField, EULER_STEPS,
};

use crate::error::Span;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Region value: either a polygon set or an exact sector.
#[derive(Clone, Debug)]
pub enum Rgn {
    Poly(Arc<Region>),
    Sector(Sector),
}

impl Rgn {
    pub fn to_region(&self) -> Arc<Region> {
        match self {
            Rgn::Poly(r) => r.clone(),
            Rgn::Sector(s) => Arc::new(s.to_region()),
        }
    }

    pub fn orientation(&self) -> Option<Arc<VectorField>> {
        match self {
            Rgn::Poly(r) => r.orientation().cloned(),
            Rgn::Sector(_) => None,
        }
    }

    pub fn contains_point(&self, p: Vector) -> bool {
        match self {
            Rgn::Poly(r) => r.contains_point(p),
            Rgn::Sector(s) => s.contains_point(p),
        }
    }

    /// Keeps the orientation of `self`, so `visible curb` stays oriented.
    pub fn intersect(&self, other: &Rgn) -> Rgn {
        let a = self.to_region();
        let b = other.to_region();
        Rgn::Poly(Arc::new(a.intersect(&b).with_orientation(self.orientation())))
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vector> {
        match self {
            Rgn::Poly(r) => r.uniform_point(rng),
            Rgn::Sector(s) => {
                if s.radius <= 0.0 || s.angle <= 0.0 {
                    return None;
                }
                let r = s.radius * rng.gen::<f64>().sqrt();
                let t = if s.is_full() {
                    rng.gen::<f64>() * 2.0 * PI
                } else {
                    s.heading + (rng.gen::<f64>() - 0.5) * s.angle
                };
                Some(s.center + scenelang_geometry::rotate(Vector::new(0.0, r), t))
            }
        }
    }
}

/// Concrete values.
#[derive(Clone, Debug)]
pub enum Value {
    None,
    Bool(bool),
    Scalar(f64),
    Vector(Vector),
    Str(Arc<str>),
    Field(Arc<VectorField>),
    Region(Rgn),
    List(Arc<Vec<Value>>),
    Record(Arc<BTreeMap<String, Value>>),
}

impl Value {
    pub fn ty(&self) -> Ty {
        match self {
            Value::None => Ty::None,
            Value::Bool(_) => Ty::Bool,
            Value::Scalar(_) => Ty::Scalar,
            Value::Vector(_) => Ty::Vector,
            Value::Str(_) => Ty::Str,
            Value::Field(_) => Ty::Field,
            Value::Region(_) => Ty::Region,
            Value::List(_) => Ty::List,
            Value::Record(_) => Ty::Record,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<Vector> {
        match self {
            Value::Vector(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn same(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::None, Value::None) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Scalar(a), Value::Scalar(b)) => a == b,
            (Value::Vector(a), Value::Vector(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::List(a), Value::List(b)) => a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.same(y)),
            (Value::Record(a), Value::Record(b)) => {
                a.len() == b.len() && a.iter().zip(b.iter()).all(|((k, x), (l, y))| k == l && x.same(y))
            }
            (Value::Field(a), Value::Field(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::None => f.write_str("None"),
            Value::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Value::Scalar(x) => write!(f, "{x}"),
            Value::Vector(v) => write!(f, "{} @ {}", v.x, v.y),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Field(v) => write!(f, "<field {}>", v.name),
            Value::Region(_) => f.write_str("<region>"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Record(r) => {
                f.write_str("{")?;
                for (i, (k, v)) in r.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Static type of a symbolic value. `Any` when it can only be known at
/// sample time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Any,
    None,
    Bool,
    Scalar,
    Vector,
    Str,
    Field,
    Region,
    List,
    Record,
}

impl Ty {
    pub fn name(self) -> &'static str {
        match self {
            Ty::Any => "value",
            Ty::None => "None",
            Ty::Bool => "boolean",
            Ty::Scalar => "scalar",
            Ty::Vector => "vector",
            Ty::Str => "string",
            Ty::Field => "vector field",
            Ty::Region => "region",
            Ty::List => "list",
            Ty::Record => "record",
        }
    }

    /// Could a value of this static type turn out to be `t`?
    pub fn may_be(self, t: Ty) -> bool {
        self == t || self == Ty::Any
    }

    fn join(self, other: Ty) -> Ty {
        if self == other {
            self
        } else {
            Ty::Any
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Neg,
    Not,
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
    Abs,
    Max,
    Min,
    Deg,
    MakeVector,
    /// Heading sum or vector sum, whichever the operands are.
    RelTo,
    /// origin, heading, offset
    OffsetLocal,
    FieldAt,
    AngleOf,
    Normalize,
    Norm,
    /// start, distance, field
    ForwardEuler,
    /// position, heading or None, distance, angle
    VisibleRegion,
    Intersect,
    InRegion,
    /// position, heading, width, height, region
    BoxInRegion,
    /// viewer position, heading or None, distance, angle, target point
    CanSeePoint,
    /// viewer position, heading or None, distance, angle, then target position, heading, width, height
    CanSeeBox,
    Attr,
    Index,
    IsNone,
    IsNotNone,
    Orientation,
    List,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Neg => "-",
            Op::Not => "not",
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Mod => "%",
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Le => "<=",
            Op::Ge => ">=",
            Op::And => "and",
            Op::Or => "or",
            Op::Abs => "abs",
            Op::Max => "max",
            Op::Min => "min",
            Op::Deg => "deg",
            Op::MakeVector => "@",
            Op::RelTo => "relative to",
            Op::OffsetLocal => "offset",
            Op::FieldAt => "at",
            Op::AngleOf => "angle",
            Op::Normalize => "normalize",
            Op::Norm => "distance",
            Op::ForwardEuler => "follow",
            Op::VisibleRegion => "visible region",
            Op::Intersect => "intersection",
            Op::InRegion => "is in",
            Op::BoxInRegion => "is in",
            Op::CanSeePoint => "can see",
            Op::CanSeeBox => "can see",
            Op::Attr => ".",
            Op::Index => "[]",
            Op::IsNone => "is None",
            Op::IsNotNone => "is not None",
            Op::Orientation => "orientation",
            Op::List => "list",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dist {
    Interval(Sym, Sym),
    Choice(Vec<Sym>),
    Discrete(Vec<Sym>, Vec<Sym>),
    Normal(Sym, Sym),
    PointIn(Sym),
}

impl Dist {
    pub fn params(&self) -> Vec<&Sym> {
        match self {
            Dist::Interval(a, b) | Dist::Normal(a, b) => vec![a, b],
            Dist::Choice(v) => v.iter().collect(),
            Dist::Discrete(v, w) => v.iter().chain(w.iter()).collect(),
            Dist::PointIn(r) => vec![r],
        }
    }

    fn ty(&self) -> Ty {
        match self {
            Dist::Interval(..) | Dist::Normal(..) => Ty::Scalar,
            Dist::Choice(v) | Dist::Discrete(v, _) => {
                v.iter().map(|s| s.ty).reduce(Ty::join).unwrap_or(Ty::Any)
            }
            Dist::PointIn(_) => Ty::Vector,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Kind {
    Const(Value),
    Dist(Dist),
    Op(Op, Vec<Sym>, Option<Arc<str>>),
    /// Property of the object under construction, filled in later.
    SelfProp(String),
    /// Final (post-mutation) property of an instance.
    ObjProp(usize, String),
}

#[derive(Debug)]
pub struct Node {
    pub id: u64,
    pub kind: Kind,
    pub ty: Ty,
    pub span: Span,
    pub has_self: bool,
    pub random: bool,
}

pub type Sym = Arc<Node>;

impl Node {
    pub fn as_const(&self) -> Option<&Value> {
        match &self.kind {
            Kind::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_dist(&self) -> bool {
        matches!(self.kind, Kind::Dist(_))
    }

    pub fn children(&self) -> Vec<&Sym> {
        match &self.kind {
            Kind::Const(_) | Kind::SelfProp(_) | Kind::ObjProp(..) => vec![],
            Kind::Dist(d) => d.params(),
            Kind::Op(_, args, _) => args.iter().collect(),
        }
    }
}

fn node(kind: Kind, ty: Ty, span: Span) -> Sym {
    let (has_self, random) = match &kind {
        Kind::Const(_) => (false, false),
        Kind::SelfProp(_) => (true, true),
        Kind::ObjProp(..) => (false, true),
        Kind::Dist(d) => (d.params().iter().any(|p| p.has_self), true),
        Kind::Op(_, args, _) => (args.iter().any(|a| a.has_self), args.iter().any(|a| a.random)),
    };
    Arc::new(Node { id: fresh_id(), kind, ty, span, has_self, random })
}

pub fn konst(v: Value) -> Sym {
    let ty = v.ty();
    node(Kind::Const(v), ty, Span::default())
}

pub fn konst_at(v: Value, span: Span) -> Sym {
    let ty = v.ty();
    node(Kind::Const(v), ty, span)
}

pub fn scalar(x: f64) -> Sym {
    konst(Value::Scalar(x))
}

pub fn self_prop(name: &str, ty: Ty) -> Sym {
    node(Kind::SelfProp(name.to_string()), ty, Span::default())
}

pub fn obj_prop(obj: usize, name: &str, ty: Ty) -> Sym {
    node(Kind::ObjProp(obj, name.to_string()), ty, Span::default())
}

/// Errors raised while evaluating symbolic values.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// Measure-zero or data-dependent failure; the sample is discarded.
    Reject(String),
    /// Ill-typed or otherwise invalid program.
    Fatal(String, Span),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Reject(m) => write!(f, "{m}"),
            EvalError::Fatal(m, _) => write!(f, "{m}"),
        }
    }
}

type EResult<T> = Result<T, EvalError>;

fn fatal<T>(msg: impl Into<String>) -> EResult<T> {
    Err(EvalError::Fatal(msg.into(), Span::default()))
}

fn op_ty(op: Op, args: &[Sym]) -> Result<Ty, String> {
    let t: Vec<Ty> = args.iter().map(|a| a.ty).collect();
    let bad = || {
        let names: Vec<&str> = t.iter().map(|t| t.name()).collect();
        Err(format!("operator '{}' cannot be applied to {}", op.name(), names.join(" and ")))
    };
    let arity = |n: usize| -> Result<(), String> {
        if args.len() != n {
            Err(format!("operator '{}' expects {n} operands, got {}", op.name(), args.len()))
        } else {
            Ok(())
        }
    };
    let want = |i: usize, ty: Ty| t[i].may_be(ty);
    Ok(match op {
        Op::Neg => {
            arity(1)?;
            match t[0] {
                Ty::Scalar | Ty::Vector | Ty::Any => t[0],
                _ => return bad(),
            }
        }
        Op::Not => {
            arity(1)?;
            if !want(0, Ty::Bool) {
                return bad();
            }
            Ty::Bool
        }
        Op::Add | Op::Sub | Op::RelTo => {
            arity(2)?;
            match (t[0], t[1]) {
                (Ty::Scalar, Ty::Scalar) => Ty::Scalar,
                (Ty::Vector, Ty::Vector) => Ty::Vector,
                (Ty::Any, x) | (x, Ty::Any) if matches!(x, Ty::Scalar | Ty::Vector | Ty::Any) => x,
                _ => return bad(),
            }
        }
        Op::Mul => {
            arity(2)?;
            match (t[0], t[1]) {
                (Ty::Scalar, Ty::Scalar) => Ty::Scalar,
                (Ty::Scalar, Ty::Vector) | (Ty::Vector, Ty::Scalar) => Ty::Vector,
                (Ty::Any, Ty::Scalar) | (Ty::Scalar, Ty::Any) | (Ty::Any, Ty::Any) => Ty::Any,
                (Ty::Any, Ty::Vector) | (Ty::Vector, Ty::Any) => Ty::Vector,
                _ => return bad(),
            }
        }
        Op::Div => {
            arity(2)?;
            match (t[0], t[1]) {
                (Ty::Scalar, Ty::Scalar) => Ty::Scalar,
                (Ty::Vector, Ty::Scalar) => Ty::Vector,
                (a, b) if a.may_be(Ty::Scalar) || a.may_be(Ty::Vector) => {
                    if !b.may_be(Ty::Scalar) {
                        return bad();
                    }
                    if a == Ty::Vector {
                        Ty::Vector
                    } else {
                        Ty::Any
                    }
                }
                _ => return bad(),
            }
        }
        Op::Mod => {
            arity(2)?;
            if !want(0, Ty::Scalar) || !want(1, Ty::Scalar) {
                return bad();
            }
            Ty::Scalar
        }
        Op::Eq | Op::Ne => {
            arity(2)?;
            Ty::Bool
        }
        Op::Lt | Op::Gt | Op::Le | Op::Ge => {
            arity(2)?;
            if !want(0, Ty::Scalar) || !want(1, Ty::Scalar) {
                return bad();
            }
            Ty::Bool
        }
        Op::And | Op::Or => {
            arity(2)?;
            if !want(0, Ty::Bool) || !want(1, Ty::Bool) {
                return bad();
            }
            Ty::Bool
        }
        Op::Abs | Op::Deg | Op::Normalize => {
            arity(1)?;
            if !want(0, Ty::Scalar) {
                return bad();
            }
            Ty::Scalar
        }
        Op::Max | Op::Min => {
            if args.is_empty() || !t.iter().all(|x| x.may_be(Ty::Scalar)) {
                return bad();
            }
            Ty::Scalar
        }
        Op::MakeVector => {
            arity(2)?;
            if !want(0, Ty::Scalar) || !want(1, Ty::Scalar) {
                return bad();
            }
            Ty::Vector
        }
        Op::OffsetLocal => {
            arity(3)?;
            if !want(0, Ty::Vector) || !want(1, Ty::Scalar) || !want(2, Ty::Vector) {
                return bad();
            }
            Ty::Vector
        }
        Op::FieldAt => {
            arity(2)?;
            if !want(0, Ty::Field) || !want(1, Ty::Vector) {
                return bad();
            }
            Ty::Scalar
        }
        Op::AngleOf | Op::Norm => {
            arity(1)?;
            if !want(0, Ty::Vector) {
                return bad();
            }
            Ty::Scalar
        }
        Op::ForwardEuler => {
            arity(3)?;
            if !want(0, Ty::Vector) || !want(1, Ty::Scalar) || !want(2, Ty::Field) {
                return bad();
            }
            Ty::Vector
        }
        Op::VisibleRegion => {
            arity(4)?;
            Ty::Region
        }
        Op::Intersect => {
            arity(2)?;
            if !want(0, Ty::Region) || !want(1, Ty::Region) {
                return bad();
            }
            Ty::Region
        }
        Op::InRegion => {
            arity(2)?;
            if !want(0, Ty::Vector) || !want(1, Ty::Region) {
                return bad();
            }
            Ty::Bool
        }
        Op::BoxInRegion => {
            arity(5)?;
            Ty::Bool
        }
        Op::CanSeePoint => {
            arity(5)?;
            Ty::Bool
        }
        Op::CanSeeBox => {
            arity(8)?;
            Ty::Bool
        }
        Op::Attr => {
            arity(1)?;
            match t[0] {
                Ty::Vector => Ty::Scalar,
                Ty::Record | Ty::Any => Ty::Any,
                _ => return bad(),
            }
        }
        Op::Index => {
            arity(2)?;
            match t[0] {
                Ty::List | Ty::Record | Ty::Any => Ty::Any,
                _ => return bad(),
            }
        }
        Op::IsNone | Op::IsNotNone => {
            arity(1)?;
            Ty::Bool
        }
        Op::Orientation => {
            arity(1)?;
            Ty::Field
        }
        Op::List => Ty::List,
    })
}

/// Builds an operator node, folding it when every operand is constant.
pub fn op(o: Op, args: Vec<Sym>, span: Span) -> Result<Sym, String> {
    op_named(o, args, None, span)
}

pub fn attr(base: Sym, name: &str, span: Span) -> Result<Sym, String> {
    op_named(Op::Attr, vec![base], Some(name.into()), span)
}

fn op_named(o: Op, args: Vec<Sym>, name: Option<Arc<str>>, span: Span) -> Result<Sym, String> {
    let ty = op_ty(o, &args)?;
    if args.iter().all(|a| a.as_const().is_some()) {
        let vals: Vec<Value> = args.iter().map(|a| a.as_const().unwrap().clone()).collect();
        return match apply(o, &vals, name.as_deref()) {
            Ok(v) => Ok(konst_at(v, span)),
            Err(EvalError::Reject(m)) | Err(EvalError::Fatal(m, _)) => Err(m),
        };
    }
    Ok(node(Kind::Op(o, args, name), ty, span))
}

pub fn interval(lo: Sym, hi: Sym, span: Span) -> Result<Sym, String> {
    if !lo.ty.may_be(Ty::Scalar) || !hi.ty.may_be(Ty::Scalar) {
        return Err(format!("interval bounds must be scalars, got {} and {}", lo.ty.name(), hi.ty.name()));
    }
    Ok(dist(Dist::Interval(lo, hi), span))
}

pub fn normal(mean: Sym, sd: Sym, span: Span) -> Result<Sym, String> {
    if !mean.ty.may_be(Ty::Scalar) || !sd.ty.may_be(Ty::Scalar) {
        return Err("Normal parameters must be scalars".into());
    }
    Ok(dist(Dist::Normal(mean, sd), span))
}

pub fn choice(values: Vec<Sym>, span: Span) -> Result<Sym, String> {
    if values.is_empty() {
        return Err("Uniform needs at least one value".into());
    }
    Ok(dist(Dist::Choice(values), span))
}

pub fn discrete(values: Vec<Sym>, weights: Vec<Sym>, span: Span) -> Result<Sym, String> {
    if values.is_empty() || values.len() != weights.len() {
        return Err("Discrete needs a non-empty map of values to weights".into());
    }
    if weights.iter().any(|w| !w.ty.may_be(Ty::Scalar)) {
        return Err("Discrete weights must be scalars".into());
    }
    if weights.iter().all(|w| w.as_const().is_some()) {
        let ws: Vec<f64> = weights.iter().filter_map(|w| w.as_const().and_then(Value::as_scalar)).collect();
        if ws.iter().any(|w| *w < 0.0 || !w.is_finite()) || ws.iter().sum::<f64>() <= 0.0 {
            return Err("Discrete weights must be non-negative and not all zero".into());
        }
    }
    Ok(dist(Dist::Discrete(values, weights), span))
}

pub fn point_in(region: Sym, span: Span) -> Result<Sym, String> {
    if !region.ty.may_be(Ty::Region) {
        return Err(format!("expected a region, got {}", region.ty.name()));
    }
    Ok(dist(Dist::PointIn(region), span))
}

fn dist(d: Dist, span: Span) -> Sym {
    let ty = d.ty();
    node(Kind::Dist(d), ty, span)
}

/// Fresh draw from the same distribution, sharing its parameters. Constants
/// are returned unchanged.
pub fn resample(s: &Sym) -> Result<Sym, String> {
    match &s.kind {
        Kind::Dist(d) => Ok(node(Kind::Dist(d.clone()), s.ty, s.span)),
        Kind::Const(_) => Ok(s.clone()),
        _ => Err("resample expects a primitive distribution".into()),
    }
}

/// Replaces `SelfProp` placeholders. Nodes without placeholders are shared.
pub fn substitute(s: &Sym, lookup: &dyn Fn(&str) -> Option<Sym>) -> Result<Sym, String> {
    let mut memo = HashMap::new();
    subst_rec(s, lookup, &mut memo)
}

fn subst_rec(s: &Sym, lookup: &dyn Fn(&str) -> Option<Sym>, memo: &mut HashMap<u64, Sym>) -> Result<Sym, String> {
    if !s.has_self {
        return Ok(s.clone());
    }
    if let Some(r) = memo.get(&s.id) {
        return Ok(r.clone());
    }
    let out = match &s.kind {
        Kind::SelfProp(p) => lookup(p).ok_or_else(|| format!("self.{p} is not available here"))?,
        Kind::Op(o, args, name) => {
            let args = args.iter().map(|a| subst_rec(a, lookup, memo)).collect::<Result<Vec<_>, _>>()?;
            op_named(*o, args, name.clone(), s.span)?
        }
        Kind::Dist(d) => {
            let mut f = |x: &Sym| subst_rec(x, lookup, memo);
            let nd = match d {
                Dist::Interval(a, b) => Dist::Interval(f(a)?, f(b)?),
                Dist::Normal(a, b) => Dist::Normal(f(a)?, f(b)?),
                Dist::Choice(v) => Dist::Choice(v.iter().map(&mut f).collect::<Result<_, _>>()?),
                Dist::Discrete(v, w) => Dist::Discrete(
                    v.iter().map(&mut f).collect::<Result<_, _>>()?,
                    w.iter().map(&mut f).collect::<Result<_, _>>()?,
                ),
                Dist::PointIn(r) => Dist::PointIn(f(r)?),
            };
            dist(nd, s.span)
        }
        Kind::Const(_) | Kind::ObjProp(..) => s.clone(),
    };
    memo.insert(s.id, out.clone());
    Ok(out)
}

/// Self properties a symbolic value refers to.
pub fn self_refs(s: &Sym) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![s];
    while let Some(n) = stack.pop() {
        if !n.has_self || !seen.insert(n.id) {
            continue;
        }
        if let Kind::SelfProp(p) = &n.kind {
            if !out.contains(p) {
                out.push(p.clone());
            }
        }
        stack.extend(n.children());
    }
    out
}

/// Every distribution node reachable from `roots`, in id order.
pub fn dist_nodes(roots: &[Sym]) -> Vec<Sym> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut stack: Vec<&Sym> = roots.iter().collect();
    while let Some(n) = stack.pop() {
        if !seen.insert(n.id) {
            continue;
        }
        if n.is_dist() {
            out.push(n.clone());
        }
        stack.extend(n.children());
    }
    out.sort_by_key(|n| n.id);
    out
}

fn scalar_arg(v: &Value, what: &str) -> EResult<f64> {
    match v {
        Value::Scalar(x) => Ok(*x),
        other => fatal(format!("{what}: expected a scalar, got {}", other.ty().name())),
    }
}

fn vector_arg(v: &Value, what: &str) -> EResult<Vector> {
    match v {
        Value::Vector(x) => Ok(*x),
        other => fatal(format!("{what}: expected a vector, got {}", other.ty().name())),
    }
}

fn bool_arg(v: &Value, what: &str) -> EResult<bool> {
    match v {
        Value::Bool(x) => Ok(*x),
        other => fatal(format!("{what}: expected a boolean, got {}", other.ty().name())),
    }
}

fn field_arg<'v>(v: &'v Value, what: &str) -> EResult<&'v Arc<VectorField>> {
    match v {
        Value::Field(x) => Ok(x),
        other => fatal(format!("{what}: expected a vector field, got {}", other.ty().name())),
    }
}

fn region_arg<'v>(v: &'v Value, what: &str) -> EResult<&'v Rgn> {
    match v {
        Value::Region(x) => Ok(x),
        other => fatal(format!("{what}: expected a region, got {}", other.ty().name())),
    }
}

fn viewer(args: &[Value]) -> EResult<Sector> {
    let pos = vector_arg(&args[0], "viewer position")?;
    let heading = match &args[1] {
        Value::None => None,
        v => Some(scalar_arg(v, "viewer heading")?),
    };
    let dist = scalar_arg(&args[2], "viewDistance")?;
    let angle = scalar_arg(&args[3], "viewAngle")?;
    Ok(Sector::visible_region(pos, heading, dist, angle))
}

fn dims(w: &Value, h: &Value) -> EResult<(f64, f64)> {
    let w = scalar_arg(w, "width")?;
    let h = scalar_arg(h, "height")?;
    if !(w > 0.0 && h > 0.0) {
        return fatal(format!("bounding box needs positive width and height, got {w} x {h}"));
    }
    Ok((w, h))
}

fn check_finite(v: Value) -> EResult<Value> {
    match &v {
        Value::Scalar(x) if !x.is_finite() => Err(EvalError::Reject("non-finite scalar".into())),
        Value::Vector(p) if !p.is_finite() => Err(EvalError::Reject("non-finite vector".into())),
        _ => Ok(v),
    }
}

/// Applies an operator to concrete operands.
pub fn apply(o: Op, a: &[Value], name: Option<&str>) -> EResult<Value> {
    use Value as V;
    let r = match o {
        Op::Neg => match &a[0] {
            V::Scalar(x) => V::Scalar(-x),
            V::Vector(v) => V::Vector(-*v),
            x => return fatal(format!("cannot negate {}", x.ty().name())),
        },
        Op::Not => V::Bool(!bool_arg(&a[0], "not")?),
        Op::Add | Op::RelTo => match (&a[0], &a[1]) {
            (V::Scalar(x), V::Scalar(y)) => V::Scalar(x + y),
            (V::Vector(x), V::Vector(y)) => V::Vector(*x + *y),
            (x, y) => return fatal(format!("cannot add {} and {}", x.ty().name(), y.ty().name())),
        },
        Op::Sub => match (&a[0], &a[1]) {
            (V::Scalar(x), V::Scalar(y)) => V::Scalar(x - y),
            (V::Vector(x), V::Vector(y)) => V::Vector(*x - *y),
            (x, y) => return fatal(format!("cannot subtract {} from {}", y.ty().name(), x.ty().name())),
        },
        Op::Mul => match (&a[0], &a[1]) {
            (V::Scalar(x), V::Scalar(y)) => V::Scalar(x * y),
            (V::Scalar(x), V::Vector(y)) | (V::Vector(y), V::Scalar(x)) => V::Vector(*y * *x),
            (x, y) => return fatal(format!("cannot multiply {} by {}", x.ty().name(), y.ty().name())),
        },
        Op::Div => {
            let d = scalar_arg(&a[1], "divisor")?;
            if d == 0.0 {
                return fatal("division by zero");
            }
            match &a[0] {
                V::Scalar(x) => V::Scalar(x / d),
                V::Vector(v) => V::Vector(*v * (1.0 / d)),
                x => return fatal(format!("cannot divide {}", x.ty().name())),
            }
        }
        Op::Mod => {
            let d = scalar_arg(&a[1], "modulus")?;
            if d == 0.0 {
                return fatal("modulo by zero");
            }
            V::Scalar(scalar_arg(&a[0], "%")?.rem_euclid(d))
        }
        Op::Eq => V::Bool(a[0].same(&a[1])),
        Op::Ne => V::Bool(!a[0].same(&a[1])),
        Op::Lt | Op::Gt | Op::Le | Op::Ge => {
            let x = scalar_arg(&a[0], "comparison")?;
            let y = scalar_arg(&a[1], "comparison")?;
            V::Bool(match o {
                Op::Lt => x < y,
                Op::Gt => x > y,
                Op::Le => x <= y,
                _ => x >= y,
            })
        }
        Op::And => V::Bool(bool_arg(&a[0], "and")? && bool_arg(&a[1], "and")?),
        Op::Or => V::Bool(bool_arg(&a[0], "or")? || bool_arg(&a[1], "or")?),
        Op::Abs => V::Scalar(scalar_arg(&a[0], "abs")?.abs()),
        Op::Max | Op::Min => {
            let mut best = scalar_arg(&a[0], o.name())?;
            for v in &a[1..] {
                let x = scalar_arg(v, o.name())?;
                best = if o == Op::Max { best.max(x) } else { best.min(x) };
            }
            V::Scalar(best)
        }
        Op::Deg => V::Scalar(scalar_arg(&a[0], "deg")?.to_radians()),
        Op::MakeVector => V::Vector(Vector::new(scalar_arg(&a[0], "@")?, scalar_arg(&a[1], "@")?)),
        Op::OffsetLocal => V::Vector(offset_local(
            vector_arg(&a[0], "offset origin")?,
            scalar_arg(&a[1], "offset heading")?,
            vector_arg(&a[2], "offset")?,
        )),
        Op::FieldAt => V::Scalar(field_arg(&a[0], "at")?.at(vector_arg(&a[1], "at")?)),
        Op::AngleOf => {
            let v = vector_arg(&a[0], "angle")?;
            if v.x == 0.0 && v.y == 0.0 {
                return Err(EvalError::Reject("direction between coincident points".into()));
            }
            V::Scalar(angle_of(v))
        }
        Op::Normalize => V::Scalar(normalize_angle(scalar_arg(&a[0], "heading")?)),
        Op::Norm => V::Scalar(vector_arg(&a[0], "distance")?.norm()),
        Op::ForwardEuler => V::Vector(forward_euler(
            vector_arg(&a[0], "follow")?,
            scalar_arg(&a[1], "follow")?,
            field_arg(&a[2], "follow")?,
            EULER_STEPS,
        )),
        Op::VisibleRegion => V::Region(Rgn::Sector(viewer(a)?)),
        Op::Intersect => V::Region(region_arg(&a[0], "region")?.intersect(region_arg(&a[1], "region")?)),
        Op::InRegion => V::Bool(region_arg(&a[1], "is in")?.contains_point(vector_arg(&a[0], "is in")?)),
        Op::BoxInRegion => {
            let (w, h) = dims(&a[2], &a[3])?;
            let poly = box_polygon(vector_arg(&a[0], "position")?, scalar_arg(&a[1], "heading")?, w, h);
            V::Bool(region_arg(&a[4], "is in")?.to_region().covers_polygon(&poly))
        }
        Op::CanSeePoint => V::Bool(viewer(a)?.contains_point(vector_arg(&a[4], "can see")?)),
        Op::CanSeeBox => {
            let (w, h) = dims(&a[6], &a[7])?;
            let corners = box_corners(vector_arg(&a[4], "position")?, scalar_arg(&a[5], "heading")?, w, h);
            V::Bool(viewer(a)?.intersects_convex(&corners))
        }
        Op::Attr => {
            let n = name.unwrap_or("");
            match &a[0] {
                V::Vector(v) if n == "x" => V::Scalar(v.x),
                V::Vector(v) if n == "y" => V::Scalar(v.y),
                V::Record(r) => match r.get(n) {
                    Some(v) => v.clone(),
                    None => return fatal(format!("record has no field '{n}'")),
                },
                x => return fatal(format!("{} has no attribute '{n}'", x.ty().name())),
            }
        }
        Op::Index => match (&a[0], &a[1]) {
            (V::List(items), V::Scalar(i)) => {
                let idx = *i as i64;
                if idx as f64 != *i || idx < 0 || idx as usize >= items.len() {
                    return fatal(format!("list index {i} out of range"));
                }
                items[idx as usize].clone()
            }
            (V::Record(r), V::Str(k)) => match r.get(&**k) {
                Some(v) => v.clone(),
                None => return fatal(format!("no entry '{k}'")),
            },
            (x, y) => return fatal(format!("cannot index {} with {}", x.ty().name(), y.ty().name())),
        },
        Op::IsNone => V::Bool(matches!(a[0], V::None)),
        Op::IsNotNone => V::Bool(!matches!(a[0], V::None)),
        Op::Orientation => match region_arg(&a[0], "orientation")?.orientation() {
            Some(f) => V::Field(f),
            None => return fatal("region has no preferred orientation"),
        },
        Op::List => V::List(Arc::new(a.to_vec())),
    };
    check_finite(r)
}

/// Draw from a distribution given concrete parameters.
pub fn draw<R: Rng + ?Sized>(d: &Dist, p: &[Value], rng: &mut R, override_region: Option<&Rgn>) -> EResult<Value> {
    match d {
        Dist::Interval(..) => {
            let lo = scalar_arg(&p[0], "interval")?;
            let hi = scalar_arg(&p[1], "interval")?;
            if lo > hi {
                return fatal(format!("interval ({lo}, {hi}) has low > high"));
            }
            if lo == hi {
                return Ok(Value::Scalar(lo));
            }
            Ok(Value::Scalar(lo + rng.gen::<f64>() * (hi - lo)))
        }
        Dist::Normal(..) => {
            let m = scalar_arg(&p[0], "Normal mean")?;
            let s = scalar_arg(&p[1], "Normal stdDev")?;
            if s < 0.0 || !s.is_finite() {
                return fatal(format!("Normal stdDev {s} is negative"));
            }
            if s == 0.0 {
                return Ok(Value::Scalar(m));
            }
            let n = Normal::new(m, s).map_err(|e| EvalError::Fatal(e.to_string(), Span::default()))?;
            Ok(Value::Scalar(n.sample(rng)))
        }
        Dist::Choice(_) => Ok(p[rng.gen_range(0..p.len())].clone()),
        Dist::Discrete(v, _) => {
            let n = v.len();
            let ws: Vec<f64> = p[n..].iter().map(|w| scalar_arg(w, "Discrete weight")).collect::<EResult<_>>()?;
            let total: f64 = ws.iter().sum();
            if ws.iter().any(|w| *w < 0.0) || total <= 0.0 || !total.is_finite() {
                return fatal("Discrete weights must be non-negative and not all zero");
            }
            let mut u = rng.gen::<f64>() * total;
            for (i, w) in ws.iter().enumerate() {
                if u < *w {
                    return Ok(p[i].clone());
                }
                u -= w;
            }
            let last = ws.iter().rposition(|w| *w > 0.0).unwrap_or(n - 1);
            Ok(p[last].clone())
        }
        Dist::PointIn(_) => {
            let r = match override_region {
                Some(r) => r,
                None => region_arg(&p[0], "point in")?,
            };
            match r.uniform_point(rng) {
                Some(v) => Ok(Value::Vector(v)),
                None => Err(EvalError::Reject("empty region".into())),
            }
        }
    }
}

/// Memoized evaluation of symbolic values under one random assignment.
pub struct Evaluator<'a, R: Rng + ?Sized> {
    rng: Option<&'a mut R>,
    pub cache: HashMap<u64, Value>,
    final_props: &'a [BTreeMap<String, Sym>],
    overrides: &'a HashMap<u64, Rgn>,
}

static NO_OVERRIDES: std::sync::LazyLock<HashMap<u64, Rgn>> = std::sync::LazyLock::new(HashMap::new);

impl<'a, R: Rng + ?Sized> Evaluator<'a, R> {
    pub fn new(rng: &'a mut R, final_props: &'a [BTreeMap<String, Sym>], overrides: &'a HashMap<u64, Rgn>) -> Self {
        Evaluator { rng: Some(rng), cache: HashMap::with_capacity(512), final_props, overrides }
    }

    /// Replays a fixed assignment; unassigned distributions are an error.
    pub fn replay(assignment: &Assignment, final_props: &'a [BTreeMap<String, Sym>]) -> Self {
        Evaluator { rng: None, cache: assignment.values.clone(), final_props, overrides: &NO_OVERRIDES }
    }

    pub fn eval(&mut self, s: &Sym) -> EResult<Value> {
        if let Kind::Const(v) = &s.kind {
            return Ok(v.clone());
        }
        if let Some(v) = self.cache.get(&s.id) {
            return Ok(v.clone());
        }
        let v = match &s.kind {
            Kind::Const(_) => unreachable!(),
            Kind::SelfProp(p) => return Err(EvalError::Fatal(format!("unresolved self.{p}"), s.span)),
            Kind::ObjProp(i, p) => {
                let target = self
                    .final_props
                    .get(*i)
                    .and_then(|m| m.get(p))
                    .cloned()
                    .ok_or_else(|| EvalError::Fatal(format!("object has no property {p}"), s.span))?;
                self.eval(&target)?
            }
            Kind::Op(o, args, name) => {
                let mut vals = Vec::with_capacity(args.len());
                match o {
                    Op::And | Op::Or => {
                        let l = self.eval(&args[0])?;
                        let lb = bool_arg(&l, o.name()).map_err(|e| with_span(e, s.span))?;
                        if (*o == Op::And && !lb) || (*o == Op::Or && lb) {
                            self.cache.insert(s.id, Value::Bool(lb));
                            return Ok(Value::Bool(lb));
                        }
                        vals.push(l);
                        vals.push(self.eval(&args[1])?);
                    }
                    _ => {
                        for a in args {
                            vals.push(self.eval(a)?);
                        }
                    }
                }
                apply(*o, &vals, name.as_deref()).map_err(|e| with_span(e, s.span))?
            }
            Kind::Dist(d) => {
                let params: Vec<Value> = d.params().into_iter().map(|p| self.eval(p)).collect::<EResult<_>>()?;
                let Some(rng) = self.rng.as_deref_mut() else {
                    return Err(EvalError::Fatal("distribution missing from assignment".into(), s.span));
                };
                draw(d, &params, rng, self.overrides.get(&s.id)).map_err(|e| with_span(e, s.span))?
            }
        };
        self.cache.insert(s.id, v.clone());
        Ok(v)
    }
}

fn with_span(e: EvalError, span: Span) -> EvalError {
    match e {
        EvalError::Fatal(m, sp) if sp == Span::default() => EvalError::Fatal(m, span),
        e => e,
    }
}

/// Concrete values for distribution nodes.
#[derive(Debug, Clone, Default)]
pub struct Assignment {
    pub values: HashMap<u64, Value>,
}

/// Draws every distribution reachable from `roots`, parameters before
/// dependents, then returns the draws.
pub fn sample_all<R: Rng + ?Sized>(roots: &[Sym], rng: &mut R) -> EResult<Assignment> {
    let nodes = dist_nodes(roots);
    let mut ev = Evaluator::new(rng, &[], &NO_OVERRIDES);
    for n in &nodes {
        ev.eval(n)?;
    }
    let ids: std::collections::HashSet<u64> = nodes.iter().map(|n| n.id).collect();
    let values = ev.cache.into_iter().filter(|(k, _)| ids.contains(k)).collect();
    Ok(Assignment { values })
}

/// Deterministic evaluation under an assignment.
pub fn evaluate(v: &Sym, a: &Assignment) -> EResult<Value> {
    Evaluator::<rand_chacha::ChaCha8Rng>::replay(a, &[]).eval(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp() -> Span {
        Span::default()
    }

    fn unit() -> Sym {
        interval(scalar(0.0), scalar(1.0), sp()).unwrap()
    }

    fn run(s: &Sym, seed: u64) -> Value {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_all(std::slice::from_ref(s), &mut rng).unwrap();
        evaluate(s, &a).unwrap()
    }

    #[test]
    fn constants_fold() {
        let s = op(Op::Add, vec![scalar(0.7), scalar(1.0)], sp()).unwrap();
        assert_eq!(s.as_const().and_then(Value::as_scalar), Some(1.7));
        assert!(op(Op::Add, vec![scalar(1.0), konst(Value::Bool(true))], sp()).is_err());
        assert!(op(Op::AngleOf, vec![konst(Value::Vector(Vector::ZERO))], sp()).is_err());
    }

    #[test]
    fn evaluate_under_assignment() {
        let x = unit();
        let y = op(Op::Add, vec![x.clone(), scalar(1.0)], sp()).unwrap();
        let mut a = Assignment::default();
        a.values.insert(x.id, Value::Scalar(0.7));
        assert_eq!(evaluate(&y, &a).unwrap().as_scalar(), Some(1.7));
        let d = op(Op::MakeVector, vec![x.clone(), x.clone()], sp()).unwrap();
        a.values.insert(x.id, Value::Scalar(0.3));
        assert_eq!(evaluate(&d, &a).unwrap().as_vector(), Some(Vector::new(0.3, 0.3)));
        assert!(evaluate(&d, &Assignment::default()).is_err());
    }

    #[test]
    fn degenerate_parameters() {
        let n = normal(scalar(0.0), scalar(0.0), sp()).unwrap();
        assert_eq!(run(&n, 1).as_scalar(), Some(0.0));
        let i = interval(scalar(5.0), scalar(5.0), sp()).unwrap();
        assert_eq!(run(&i, 1).as_scalar(), Some(5.0));
        let bad = interval(scalar(2.0), scalar(1.0), sp()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_all(&[bad], &mut rng), Err(EvalError::Fatal(..))));
    }

    #[test]
    fn seeds_reproduce() {
        let x = unit();
        let y = normal(x.clone(), scalar(2.0), sp()).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = sample_all(&[y.clone()], &mut r1).unwrap();
        let b = sample_all(&[y.clone()], &mut r2).unwrap();
        assert_eq!(format!("{:?}", evaluate(&y, &a)), format!("{:?}", evaluate(&y, &b)));
    }

    #[test]
    fn uniform_interval_mean() {
        let x = unit();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let a = sample_all(&[x.clone()], &mut rng).unwrap();
            sum += evaluate(&x, &a).unwrap().as_scalar().unwrap();
        }
        let sigma = (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((sum / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn choice_and_discrete() {
        let c = choice(vec![scalar(1.0), scalar(-1.0)], sp()).unwrap();
        let d = discrete(
            vec![konst(Value::Str("a".into())), konst(Value::Str("b".into()))],
            vec![scalar(1.0), scalar(3.0)],
            sp(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let mut bs = 0;
        for _ in 0..n {
            let a = sample_all(&[c.clone(), d.clone()], &mut rng).unwrap();
            let cv = evaluate(&c, &a).unwrap().as_scalar().unwrap();
            assert!(cv == 1.0 || cv == -1.0);
            if let Value::Str(s) = evaluate(&d, &a).unwrap() {
                if &*s == "b" {
                    bs += 1;
                }
            }
        }
        let sd = (0.75 * 0.25 / n as f64).sqrt();
        assert!((bs as f64 / n as f64 - 0.75).abs() < 3.0 * sd);
        assert!(discrete(vec![scalar(1.0)], vec![scalar(0.0)], sp()).is_err());
    }

    #[test]
    fn resample_shares_parameters() {
        let m = unit();
        let n1 = normal(m.clone(), scalar(1.0), sp()).unwrap();
        let n2 = resample(&n1).unwrap();
        assert_ne!(n1.id, n2.id);
        match (&n1.kind, &n2.kind) {
            (Kind::Dist(Dist::Normal(a, _)), Kind::Dist(Dist::Normal(b, _))) => assert_eq!(a.id, b.id),
            _ => panic!(),
        }
        let sum = op(Op::Add, vec![m.clone(), scalar(1.0)], sp()).unwrap();
        assert!(resample(&sum).is_err());
        let c = scalar(3.0);
        assert_eq!(resample(&c).unwrap().id, c.id);
    }

    #[test]
    fn substitution_replaces_placeholders() {
        let w = self_prop("width", Ty::Any);
        let half = op(Op::Div, vec![w.clone(), scalar(2.0)], sp()).unwrap();
        assert!(half.has_self);
        assert_eq!(self_refs(&half), vec!["width".to_string()]);
        let r = substitute(&half, &|p| (p == "width").then(|| scalar(3.0))).unwrap();
        assert_eq!(r.as_const().and_then(Value::as_scalar), Some(1.5));
        assert!(substitute(&half, &|_| None).is_err());
    }

    #[test]
    fn sector_points_are_uniform_inside() {
        let s = Rgn::Sector(Sector::new(Vector::new(1.0, 1.0), 10.0, 0.3, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut near = 0;
        for _ in 0..4000 {
            let p = s.uniform_point(&mut rng).unwrap();
            assert!(s.contains_point(p));
            if p.distance(Vector::new(1.0, 1.0)) < 5.0 {
                near += 1;
            }
        }
        // a quarter of the area lies within half the radius
        assert!((near as f64 / 4000.0 - 0.25).abs() < 0.03);
    }
}
