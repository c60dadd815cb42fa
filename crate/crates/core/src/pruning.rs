//! Static analysis that shrinks the regions object positions are drawn from,
//! removing only points no accepted scene can use.
//!
//! Three passes, each a restriction of a `Point in R` draw:
//! - containment: the object's box must fit in the workspace, so its center
//!   lies in the workspace eroded by half its smallest side;
//! - heading: a relative-heading requirement between two field-aligned
//!   objects at bounded distance rules out cells with no partner cell nearby;
//! - width: an object placed at a guaranteed sideways offset from this one
//!   cannot share a cell thinner than that offset.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use scenelang_geometry::{
    prune_by_heading, prune_by_width, AngleSet, FieldKind, PiecewiseField, Region, VectorField,
};

use crate::evaluator::ScenarioModel;
use crate::values::{Dist, Kind, Op, Rgn, Sym, Value};

/// Slack absorbed by the interval analysis against rounding.
const EPS: f64 = 1e-9;
const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pass {
    Containment,
    Heading,
    Width,
}

impl Pass {
    pub const ALL: [Pass; 3] = [Pass::Containment, Pass::Heading, Pass::Width];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Containment => "containment",
            Pass::Heading => "heading",
            Pass::Width => "width",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which passes to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneSet {
    pub containment: bool,
    pub heading: bool,
    pub width: bool,
}

impl PruneSet {
    pub fn all() -> Self {
        PruneSet { containment: true, heading: true, width: true }
    }

    pub fn none() -> Self {
        PruneSet { containment: false, heading: false, width: false }
    }

    pub fn only(pass: Pass) -> Self {
        let mut s = PruneSet::none();
        s.set(pass, true);
        s
    }

    pub fn contains(&self, pass: Pass) -> bool {
        match pass {
            Pass::Containment => self.containment,
            Pass::Heading => self.heading,
            Pass::Width => self.width,
        }
    }

    pub fn set(&mut self, pass: Pass, on: bool) {
        match pass {
            Pass::Containment => self.containment = on,
            Pass::Heading => self.heading = on,
            Pass::Width => self.width = on,
        }
    }
}

impl Default for PruneSet {
    fn default() -> Self {
        PruneSet::all()
    }
}

impl FromStr for PruneSet {
    type Err = String;

    /// `all`, `none`, or a comma-separated list of pass names.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "all" => return Ok(PruneSet::all()),
            "none" => return Ok(PruneSet::none()),
            _ => {}
        }
        let mut out = PruneSet::none();
        for part in s.split(',') {
            let p = match part.trim() {
                "containment" => Pass::Containment,
                "heading" => Pass::Heading,
                "width" => Pass::Width,
                other => return Err(format!("unknown pruning pass '{other}'")),
            };
            out.set(p, true);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub enum Restriction {
    Containment {
        workspace: Arc<Region>,
        min_radius: f64,
    },
    Heading {
        field: Arc<VectorField>,
        partner: usize,
        /// Allowed values of the relative heading of the object from its partner.
        relative: AngleSet,
        /// Allowed values of f(Q) - f(P) handed to the cell-pair test.
        allowed: AngleSet,
        m: f64,
        delta: f64,
    },
    Width {
        field: Arc<VectorField>,
        partner: usize,
        m: f64,
        min_width: f64,
    },
}

/// One restriction of the draw `node`, which picks the position of `object`.
#[derive(Debug, Clone)]
pub struct PruneContext {
    pub object: usize,
    pub node: Sym,
    pub region: Arc<Region>,
    pub restriction: Restriction,
}

impl PruneContext {
    pub fn pass(&self) -> Pass {
        match self.restriction {
            Restriction::Containment { .. } => Pass::Containment,
            Restriction::Heading { .. } => Pass::Heading,
            Restriction::Width { .. } => Pass::Width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassStats {
    pub pass: Pass,
    pub contexts: usize,
    /// Share of the affected sampling area this pass removed.
    pub removed_fraction: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Pruned {
    /// Replacement regions for `Point in R` draws, by node id.
    pub overrides: HashMap<u64, Rgn>,
    pub stats: Vec<PassStats>,
}

/// `R ∩ erode(C, min_radius)`.
pub fn prune_containment(r: &Region, c: &Region, min_radius: f64) -> Region {
    let eroded = c.erode(min_radius.max(0.0)).expect("radius is non-negative");
    r.intersect(&eroded)
}

/// Runs the enabled passes in the order containment, heading, width. Every
/// restriction of a draw is intersected with the ones before it.
pub fn apply(contexts: &[PruneContext], passes: PruneSet) -> Pruned {
    let mut current: HashMap<u64, Region> = HashMap::new();
    let mut cells_cache: HashMap<*const VectorField, Region> = HashMap::new();
    let mut stats = Vec::new();
    for pass in Pass::ALL {
        if !passes.contains(pass) {
            continue;
        }
        let ctxs: Vec<&PruneContext> = contexts.iter().filter(|c| c.pass() == pass).collect();
        if ctxs.is_empty() {
            continue;
        }
        let mut touched: Vec<u64> = ctxs.iter().map(|c| c.node.id).collect();
        touched.sort_unstable();
        touched.dedup();
        let area = |current: &HashMap<u64, Region>| -> f64 {
            touched
                .iter()
                .map(|id| {
                    let c = ctxs.iter().find(|c| c.node.id == *id).expect("touched node has a context");
                    current.get(id).map_or_else(|| c.region.area(), Region::area)
                })
                .sum()
        };
        let before = area(&current);
        for c in &ctxs {
            let base = current.get(&c.node.id).cloned().unwrap_or_else(|| (*c.region).clone());
            let keep = restriction_region(c, &mut cells_cache);
            current.insert(c.node.id, base.intersect(&keep));
        }
        let after = area(&current);
        let removed_fraction = if before > 0.0 { (1.0 - after / before).clamp(0.0, 1.0) } else { 0.0 };
        stats.push(PassStats { pass, contexts: ctxs.len(), removed_fraction });
    }
    let overrides = current.into_iter().map(|(id, r)| (id, Rgn::Poly(Arc::new(r)))).collect();
    Pruned { overrides, stats }
}

fn cells_union<'c>(f: &Arc<VectorField>, cache: &'c mut HashMap<*const VectorField, Region>) -> &'c Region {
    cache.entry(Arc::as_ptr(f)).or_insert_with(|| {
        let pw = f.as_piecewise().expect("pruning fields are piecewise");
        Region::from_polygons(pw.cells().iter().map(|c| c.polygon.clone()).collect()).unwrap_or_else(|_| Region::empty())
    })
}

fn restriction_region(c: &PruneContext, cache: &mut HashMap<*const VectorField, Region>) -> Region {
    match &c.restriction {
        Restriction::Containment { workspace, min_radius } => prune_containment(&c.region, workspace, *min_radius),
        Restriction::Heading { field, allowed, m, delta, .. } => {
            let pw = field.as_piecewise().expect("pruning fields are piecewise");
            // points off the field's cells take its default heading; keep them
            let outside = c.region.difference(cells_union(field, cache));
            prune_by_heading(pw, allowed, *m, *delta).union(&outside)
        }
        Restriction::Width { field, m, min_width, .. } => {
            let pw = field.as_piecewise().expect("pruning fields are piecewise");
            let outside = c.region.difference(cells_union(field, cache));
            prune_by_width(pw, *m, *min_width).union(&outside)
        }
    }
}

// ---- analysis ----

type Iv = (f64, f64);

fn iv_add(a: Iv, b: Iv) -> Iv {
    (a.0 + b.0, a.1 + b.1)
}

fn iv_neg(a: Iv) -> Iv {
    (-a.1, -a.0)
}

fn iv_mul(a: Iv, b: Iv) -> Iv {
    let p = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (p.iter().cloned().fold(f64::INFINITY, f64::min), p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

fn iv_union(a: Iv, b: Iv) -> Iv {
    (a.0.min(b.0), a.1.max(b.1))
}

fn iv_abs(a: Iv) -> Iv {
    if a.0 >= 0.0 {
        a
    } else if a.1 <= 0.0 {
        iv_neg(a)
    } else {
        (0.0, a.1.max(-a.0))
    }
}

fn finite(a: Iv) -> Option<Iv> {
    (a.0.is_finite() && a.1.is_finite() && a.0 <= a.1).then_some(a)
}

/// Axis-aligned box in the frame of the target object's field heading.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BoxB {
    x: Iv,
    y: Iv,
}

impl BoxB {
    const ZERO: BoxB = BoxB { x: (0.0, 0.0), y: (0.0, 0.0) };

    fn plus(self, o: BoxB) -> BoxB {
        BoxB { x: iv_add(self.x, o.x), y: iv_add(self.y, o.y) }
    }

    fn corners(self) -> [(f64, f64); 4] {
        [(self.x.0, self.y.0), (self.x.1, self.y.0), (self.x.1, self.y.1), (self.x.0, self.y.1)]
    }

    fn max_norm(self) -> f64 {
        self.corners().iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max)
    }
}

/// Whether some `t + 2*pi*k` lies in `[a, b]`.
fn arc_hits(a: f64, b: f64, t: f64) -> bool {
    let k = ((a - t) / (2.0 * PI)).ceil();
    t + 2.0 * PI * k <= b
}

/// Bounding box of the box rotated anticlockwise by every angle in `[lo, hi]`.
fn rot_box(b: BoxB, lo: f64, hi: f64) -> BoxB {
    if hi - lo >= 2.0 * PI {
        let r = b.max_norm();
        return BoxB { x: (-r, r), y: (-r, r) };
    }
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for (cx, cy) in b.corners() {
        let r = cx.hypot(cy);
        if r == 0.0 {
            x = iv_union(x, (0.0, 0.0));
            y = iv_union(y, (0.0, 0.0));
            continue;
        }
        let a0 = cy.atan2(cx) + lo;
        let a1 = cy.atan2(cx) + hi;
        for t in [a0, a1] {
            x = iv_union(x, (r * t.cos(), r * t.cos()));
            y = iv_union(y, (r * t.sin(), r * t.sin()));
        }
        if arc_hits(a0, a1, 0.0) {
            x.1 = x.1.max(r);
        }
        if arc_hits(a0, a1, PI) {
            x.0 = x.0.min(-r);
        }
        if arc_hits(a0, a1, PI / 2.0) {
            y.1 = y.1.max(r);
        }
        if arc_hits(a0, a1, -PI / 2.0) {
            y.0 = y.0.min(-r);
        }
    }
    BoxB { x, y }
}

fn field_range(f: &VectorField) -> Iv {
    match &f.kind {
        FieldKind::Constant(h) => (*h, *h),
        FieldKind::Piecewise(pw) => pw
            .cells()
            .iter()
            .map(|c| c.heading)
            .fold((pw.default_heading(), pw.default_heading()), |acc, h| iv_union(acc, (h, h))),
    }
}

fn const_scalar(s: &Sym) -> Option<f64> {
    s.as_const().and_then(Value::as_scalar)
}

fn const_field(s: &Sym) -> Option<&Arc<VectorField>> {
    match s.as_const() {
        Some(Value::Field(f)) => Some(f),
        _ => None,
    }
}

/// Facts about the final values of a model that hold in every sample.
struct Facts<'m> {
    model: &'m ScenarioModel,
}

impl<'m> Facts<'m> {
    fn unmutated(&self, i: usize) -> bool {
        self.model.objects[i].props.get("mutationScale").and_then(const_scalar) == Some(0.0)
    }

    fn prop(&self, i: usize, p: &str) -> Option<&'m Sym> {
        self.model.final_props.get(i)?.get(p)
    }

    fn const_bool(&self, i: usize, p: &str) -> Option<bool> {
        self.prop(i, p)?.as_const()?.as_bool()
    }

    /// Enclosing interval of a scalar.
    fn bounds(&self, s: &Sym) -> Option<Iv> {
        self.bounds_at(s, 0)
    }

    fn bounds_at(&self, s: &Sym, depth: usize) -> Option<Iv> {
        if depth > MAX_DEPTH {
            return None;
        }
        let b = |x: &Sym| self.bounds_at(x, depth + 1);
        let r = match &s.kind {
            Kind::Const(Value::Scalar(x)) => (*x, *x),
            Kind::Const(_) | Kind::SelfProp(_) => return None,
            Kind::ObjProp(i, p) => return b(self.prop(*i, p)?),
            Kind::Dist(Dist::Interval(lo, hi)) => (b(lo)?.0, b(hi)?.1),
            Kind::Dist(Dist::Normal(m, sd)) => {
                if const_scalar(sd) != Some(0.0) {
                    return None;
                }
                b(m)?
            }
            Kind::Dist(Dist::Choice(vs)) | Kind::Dist(Dist::Discrete(vs, _)) => {
                vs.iter().map(b).collect::<Option<Vec<_>>>()?.into_iter().reduce(iv_union)?
            }
            Kind::Dist(Dist::PointIn(_)) => return None,
            Kind::Op(o, a, name) => match o {
                Op::Add | Op::RelTo => iv_add(b(&a[0])?, b(&a[1])?),
                Op::Sub => iv_add(b(&a[0])?, iv_neg(b(&a[1])?)),
                Op::Mul => iv_mul(b(&a[0])?, b(&a[1])?),
                Op::Div => {
                    let d = b(&a[1])?;
                    if d.0 <= 0.0 && d.1 >= 0.0 {
                        return None;
                    }
                    iv_mul(b(&a[0])?, (1.0 / d.1, 1.0 / d.0))
                }
                Op::Neg => iv_neg(b(&a[0])?),
                Op::Abs => iv_abs(b(&a[0])?),
                Op::Deg => {
                    let x = b(&a[0])?;
                    (x.0.to_radians(), x.1.to_radians())
                }
                Op::Max => {
                    let (x, y) = (b(&a[0])?, b(&a[1])?);
                    (x.0.max(y.0), x.1.max(y.1))
                }
                Op::Min => {
                    let (x, y) = (b(&a[0])?, b(&a[1])?);
                    (x.0.min(y.0), x.1.min(y.1))
                }
                Op::Normalize => (-PI, PI),
                Op::Attr => self.attr_bounds(&a[0], name.as_deref()?, depth)?,
                _ => return None,
            },
        };
        finite(r)
    }

    fn attr_bounds(&self, base: &Sym, name: &str, depth: usize) -> Option<Iv> {
        let of_record = |v: &Value| match v {
            Value::Record(r) => r.get(name).and_then(Value::as_scalar).map(|x| (x, x)),
            _ => None,
        };
        match &base.kind {
            Kind::Const(v) => of_record(v),
            Kind::Dist(Dist::Choice(vs)) | Kind::Dist(Dist::Discrete(vs, _)) => vs
                .iter()
                .map(|v| match v.as_const() {
                    Some(c) => of_record(c),
                    None => self.attr_bounds(v, name, depth + 1),
                })
                .collect::<Option<Vec<_>>>()?
                .into_iter()
                .reduce(iv_union),
            Kind::ObjProp(i, p) if depth < MAX_DEPTH => self.attr_bounds(self.prop(*i, p)?, name, depth + 1),
            _ => None,
        }
    }

    /// Writes a heading as `F(position) + d` with `d` in a known interval.
    fn field_relative(&self, h: &Sym, pos: &Sym) -> Option<(Arc<VectorField>, Iv)> {
        self.field_relative_at(h, pos, 0)
    }

    fn field_relative_at(&self, h: &Sym, pos: &Sym, depth: usize) -> Option<(Arc<VectorField>, Iv)> {
        if depth > MAX_DEPTH {
            return None;
        }
        match &h.kind {
            Kind::Op(Op::FieldAt, a, _) if a[1].id == pos.id => Some((const_field(&a[0])?.clone(), (0.0, 0.0))),
            Kind::Op(Op::Add | Op::RelTo, a, _) => {
                if let Some((f, d)) = self.field_relative_at(&a[0], pos, depth + 1) {
                    return Some((f, iv_add(d, self.bounds(&a[1])?)));
                }
                let (f, d) = self.field_relative_at(&a[1], pos, depth + 1)?;
                Some((f, iv_add(d, self.bounds(&a[0])?)))
            }
            Kind::Op(Op::Sub, a, _) => {
                let (f, d) = self.field_relative_at(&a[0], pos, depth + 1)?;
                Some((f, iv_add(d, iv_neg(self.bounds(&a[1])?))))
            }
            Kind::ObjProp(i, p) => self.field_relative_at(self.prop(*i, p)?, pos, depth + 1),
            _ => None,
        }
    }
}

/// `Point in R` with a constant polygonal R.
fn point_in_const(s: &Sym) -> Option<Arc<Region>> {
    match &s.kind {
        Kind::Dist(Dist::PointIn(r)) => match r.as_const() {
            Some(Value::Region(Rgn::Poly(reg))) => Some(reg.clone()),
            _ => None,
        },
        _ => None,
    }
}

/// Values relative to the target's position and field heading.
#[derive(Debug, Clone, Copy)]
enum Loc {
    Scalar(Iv),
    /// `F(target) + d`
    Head(Iv),
    /// `target + rotate(b, F(target))`
    Vec(BoxB),
    /// A plain vector not tied to the target.
    Abs(BoxB),
}

struct Frame<'f, 'm> {
    facts: &'f Facts<'m>,
    field: Arc<VectorField>,
    range: Iv,
    origin: u64,
    memo: HashMap<u64, Option<Loc>>,
}

impl Frame<'_, '_> {
    fn head_of(&self, l: Loc) -> Option<Iv> {
        match l {
            Loc::Head(d) => Some(d),
            // an absolute heading h, seen from the frame, is h - F(target)
            Loc::Scalar(h) => Some(iv_add(h, iv_neg(self.range))),
            _ => None,
        }
    }

    fn field_offset(&self, g: &Arc<VectorField>) -> Iv {
        iv_add(field_range(g), iv_neg(self.range))
    }

    fn loc(&mut self, s: &Sym, depth: usize) -> Option<Loc> {
        if s.id == self.origin {
            return Some(Loc::Vec(BoxB::ZERO));
        }
        if let Some(l) = self.memo.get(&s.id) {
            return *l;
        }
        let l = if depth > MAX_DEPTH { None } else { self.loc_uncached(s, depth) };
        self.memo.insert(s.id, l);
        l
    }

    fn loc_uncached(&mut self, s: &Sym, depth: usize) -> Option<Loc> {
        let d = depth + 1;
        match &s.kind {
            Kind::Const(Value::Scalar(x)) => Some(Loc::Scalar((*x, *x))),
            Kind::Const(Value::Vector(v)) => Some(Loc::Abs(BoxB { x: (v.x, v.x), y: (v.y, v.y) })),
            Kind::ObjProp(i, p) => {
                let t = self.facts.prop(*i, p)?.clone();
                self.loc(&t, d)
            }
            Kind::Op(o, a, _) => match o {
                Op::FieldAt => {
                    let g = const_field(&a[0])?.clone();
                    if Arc::ptr_eq(&g, &self.field) && a[1].id == self.origin {
                        Some(Loc::Head((0.0, 0.0)))
                    } else {
                        Some(Loc::Head(self.field_offset(&g)))
                    }
                }
                Op::Add | Op::RelTo | Op::Sub => {
                    let x = self.loc(&a[0], d)?;
                    let mut y = self.loc(&a[1], d)?;
                    if *o == Op::Sub {
                        y = match y {
                            Loc::Scalar(v) => Loc::Scalar(iv_neg(v)),
                            Loc::Abs(b) => Loc::Abs(BoxB { x: iv_neg(b.x), y: iv_neg(b.y) }),
                            _ => return None,
                        };
                    }
                    match (x, y) {
                        (Loc::Scalar(p), Loc::Scalar(q)) => Some(Loc::Scalar(iv_add(p, q))),
                        (Loc::Head(p), Loc::Scalar(q)) | (Loc::Scalar(q), Loc::Head(p)) => {
                            Some(Loc::Head(iv_add(p, q)))
                        }
                        (Loc::Abs(p), Loc::Abs(q)) => Some(Loc::Abs(p.plus(q))),
                        (Loc::Vec(p), Loc::Abs(q)) | (Loc::Abs(q), Loc::Vec(p)) => {
                            let r = iv_neg(self.range);
                            Some(Loc::Vec(p.plus(rot_box(q, r.0, r.1))))
                        }
                        _ => None,
                    }
                }
                Op::Normalize => match self.loc(&a[0], d)? {
                    // same rotation either way
                    Loc::Head(h) => Some(Loc::Head(h)),
                    _ => Some(Loc::Scalar(self.facts.bounds(s)?)),
                },
                Op::MakeVector => match (self.loc(&a[0], d)?, self.loc(&a[1], d)?) {
                    (Loc::Scalar(x), Loc::Scalar(y)) => Some(Loc::Abs(BoxB { x, y })),
                    _ => None,
                },
                Op::OffsetLocal => {
                    let Loc::Vec(origin) = self.loc(&a[0], d)? else { return None };
                    let h = self.loc(&a[1], d)?;
                    let h = self.head_of(h)?;
                    let Loc::Abs(off) = self.loc(&a[2], d)? else { return None };
                    Some(Loc::Vec(origin.plus(rot_box(off, h.0, h.1))))
                }
                Op::ForwardEuler => {
                    let Loc::Vec(start) = self.loc(&a[0], d)? else { return None };
                    let Loc::Scalar(dist) = self.loc(&a[1], d)? else { return None };
                    let g = const_field(&a[2])?.clone();
                    let h = self.field_offset(&g);
                    let step = BoxB { x: (0.0, 0.0), y: dist };
                    Some(Loc::Vec(start.plus(rot_box(step, h.0, h.1))))
                }
                _ => Some(Loc::Scalar(self.facts.bounds(s)?)),
            },
            _ => Some(Loc::Scalar(self.facts.bounds(s)?)),
        }
    }
}

// Requirement patterns.

fn conjuncts(s: &Sym) -> Vec<&Sym> {
    match &s.kind {
        Kind::Op(Op::And, a, _) => conjuncts(&a[0]).into_iter().chain(conjuncts(&a[1])).collect(),
        _ => vec![s],
    }
}

/// `e <= k` or `e >= k` (strictness dropped), with the constant on either side.
fn comparison(s: &Sym) -> Option<(&Sym, bool, f64)> {
    let Kind::Op(o, a, _) = &s.kind else { return None };
    let upper = match o {
        Op::Le | Op::Lt => true,
        Op::Ge | Op::Gt => false,
        _ => return None,
    };
    if let Some(k) = const_scalar(&a[1]) {
        Some((&a[0], upper, k))
    } else {
        const_scalar(&a[0]).map(|k| (&a[1], !upper, k))
    }
}

fn obj_prop(s: &Sym, name: &str) -> Option<usize> {
    match &s.kind {
        Kind::ObjProp(i, p) if p == name => Some(*i),
        _ => None,
    }
}

/// `normalize(a.heading - b.heading)`
fn relative_heading(s: &Sym) -> Option<(usize, usize)> {
    let Kind::Op(Op::Normalize, a, _) = &s.kind else { return None };
    let Kind::Op(Op::Sub, d, _) = &a[0].kind else { return None };
    Some((obj_prop(&d[0], "heading")?, obj_prop(&d[1], "heading")?))
}

/// `|a.position - b.position|`
fn distance(s: &Sym) -> Option<(usize, usize)> {
    let Kind::Op(Op::Norm, a, _) = &s.kind else { return None };
    let Kind::Op(Op::Sub, d, _) = &a[0].kind else { return None };
    Some((obj_prop(&d[0], "position")?, obj_prop(&d[1], "position")?))
}

/// Relative-heading constraints `(a, b, A)`: the heading of `a` relative to
/// `b` lies in `A`; and distance bounds `(a, b, k)`.
fn requirement_facts(model: &ScenarioModel) -> (Vec<(usize, usize, AngleSet)>, Vec<(usize, usize, f64)>) {
    let mut headings = Vec::new();
    let mut dists = Vec::new();
    for r in model.requirements.iter().filter(|r| r.prob.is_none()) {
        for c in conjuncts(&r.cond) {
            let Some((e, upper, k)) = comparison(c) else { continue };
            if let Some((a, b)) = relative_heading(e) {
                let set = if upper {
                    AngleSet::from_intervals(vec![(-PI, k)])
                } else {
                    AngleSet::from_intervals(vec![(k, PI)])
                };
                headings.push((a, b, set));
            } else if let Kind::Op(Op::Abs, inner, _) = &e.kind {
                if let Some((a, b)) = relative_heading(&inner[0]) {
                    let set = if upper {
                        AngleSet::from_intervals(vec![(-k, k)])
                    } else {
                        AngleSet::from_intervals(vec![(-PI, -k), (k, PI)])
                    };
                    headings.push((a, b, set));
                }
            } else if let Some((a, b)) = distance(e) {
                if upper {
                    dists.push((a, b, k));
                }
            }
        }
    }
    (headings, dists)
}

fn shifted(set: &AngleSet, by: f64) -> AngleSet {
    let mut out = Vec::new();
    for &(a, b) in set.intervals() {
        for k in [-2.0 * PI, 0.0, 2.0 * PI] {
            out.push((a + by + k, b + by + k));
        }
    }
    AngleSet::from_intervals(out)
}

fn covered_by_cells(r: &Region, pw: &PiecewiseField) -> bool {
    let cells = Region::from_polygons(pw.cells().iter().map(|c| c.polygon.clone()).collect());
    matches!(cells, Ok(c) if r.difference(&c).is_empty())
}

/// Finds every restriction the model supports.
pub fn derive_contexts(model: &ScenarioModel) -> Vec<PruneContext> {
    let facts = Facts { model };
    let n = model.objects.len();
    let mut out = Vec::new();

    // containment
    for i in 0..n {
        let Some(pos) = facts.prop(i, "position") else { continue };
        let Some(region) = point_in_const(pos) else { continue };
        let w = facts.prop(i, "width").and_then(|s| facts.bounds(s));
        let h = facts.prop(i, "height").and_then(|s| facts.bounds(s));
        let min_radius = match (w, h) {
            (Some(w), Some(h)) => (w.0.min(h.0) / 2.0 - EPS).max(0.0),
            _ => 0.0,
        };
        out.push(PruneContext {
            object: i,
            node: pos.clone(),
            region,
            restriction: Restriction::Containment { workspace: model.world.workspace.clone(), min_radius },
        });
    }

    // heading
    let (rels, dists) = requirement_facts(model);
    let half_diag = |i: usize| -> Option<f64> {
        let w = facts.bounds(facts.prop(i, "width")?)?;
        let h = facts.bounds(facts.prop(i, "height")?)?;
        Some(w.1.abs().max(w.0.abs()).hypot(h.1.abs().max(h.0.abs())) / 2.0)
    };
    let mut pairs: Vec<(usize, usize, AngleSet)> = Vec::new();
    for (a, b, set) in rels {
        for (i, j, s) in [(a, b, set.clone()), (b, a, set.negated())] {
            match pairs.iter_mut().find(|(x, y, _)| *x == i && *y == j) {
                Some(p) => p.2 = p.2.intersect(&s),
                None => pairs.push((i, j, s)),
            }
        }
    }
    for (i, j, relative) in pairs {
        if i == j || i >= n || j >= n || !facts.unmutated(i) || !facts.unmutated(j) {
            continue;
        }
        let Some(pos_i) = facts.prop(i, "position") else { continue };
        let Some(region) = point_in_const(pos_i) else { continue };
        let Some(pos_j) = facts.prop(j, "position") else { continue };
        let Some(region_j) = point_in_const(pos_j) else { continue };
        let Some((field, di)) = facts.prop(i, "heading").and_then(|h| facts.field_relative(h, pos_i)) else {
            continue;
        };
        let Some((field_j, dj)) = facts.prop(j, "heading").and_then(|h| facts.field_relative(h, pos_j)) else {
            continue;
        };
        let Some(pw) = field.as_piecewise() else { continue };
        if !Arc::ptr_eq(&field, &field_j) || !covered_by_cells(&region_j, pw) {
            continue;
        }
        let mut m = f64::INFINITY;
        for &(a, b, k) in &dists {
            if (a, b) == (i, j) || (a, b) == (j, i) {
                m = m.min(k);
            }
        }
        // the default visibility requirement keeps objects near the ego
        let ego = model.ego;
        for (viewer, seen) in [(j, i), (i, j)] {
            if viewer == ego && facts.const_bool(seen, "requireVisible") == Some(true) {
                let vd = facts.prop(ego, "viewDistance").and_then(const_scalar);
                if let (Some(vd), Some(hd)) = (vd, half_diag(seen)) {
                    m = m.min(vd + hd);
                }
            }
        }
        if !m.is_finite() {
            continue;
        }
        let center = (di.0 + di.1) / 2.0 - (dj.0 + dj.1) / 2.0;
        let half = (di.1 - di.0) / 2.0 + (dj.1 - dj.0) / 2.0;
        let allowed = shifted(&relative.negated(), center);
        out.push(PruneContext {
            object: i,
            node: pos_i.clone(),
            region,
            restriction: Restriction::Heading {
                field,
                partner: j,
                relative,
                allowed,
                m: m + EPS,
                delta: half / 2.0 + EPS,
            },
        });
    }

    // width
    for i in 0..n {
        let Some(pos_i) = model.objects[i].props.get("position") else { continue };
        let Some(region) = point_in_const(pos_i) else { continue };
        let Some((field, _)) = model.objects[i].props.get("heading").and_then(|h| facts.field_relative(h, pos_i))
        else {
            continue;
        };
        let Some(pw) = field.as_piecewise() else { continue };
        if !covered_by_cells(&model.world.workspace, pw) {
            continue;
        }
        let mut frame =
            Frame { facts: &facts, range: field_range(&field), field: field.clone(), origin: pos_i.id, memo: HashMap::new() };
        let mut best: Option<(f64, f64, usize)> = None;
        for j in (0..n).filter(|&j| j != i && facts.unmutated(j)) {
            let Some(pos_j) = facts.prop(j, "position") else { continue };
            let Some(Loc::Vec(b)) = frame.loc(pos_j, 0) else { continue };
            let gap = if b.x.0 > 0.0 {
                b.x.0
            } else if b.x.1 < 0.0 {
                -b.x.1
            } else {
                0.0
            };
            let gap = gap - EPS;
            if gap <= 0.0 {
                continue;
            }
            let m = b.max_norm() + EPS;
            let better = match best {
                None => true,
                Some((g, bm, _)) => gap > g || (gap == g && m < bm),
            };
            if better {
                best = Some((gap, m, j));
            }
        }
        if let Some((min_width, m, partner)) = best {
            out.push(PruneContext {
                object: i,
                node: pos_i.clone(),
                region,
                restriction: Restriction::Width { field, partner, m, min_width },
            });
        }
    }
    out
}
