//! Specifier resolution: choosing which specifier sets each property and an
//! evaluation order consistent with their dependencies.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::error::{Error, ResolveError, Span};
use crate::values::{self_refs, substitute, Sym};

/// A specifier after its arguments have been evaluated. Values may refer to
/// the object under construction through `SelfProp` placeholders; those
/// references are the specifier's dependencies.
#[derive(Debug, Clone)]
pub struct SpecOut {
    pub head: String,
    pub span: Span,
    pub props: Vec<(String, Sym)>,
    pub optional: Vec<(String, Sym)>,
}

impl SpecOut {
    pub fn new(head: impl Into<String>, span: Span) -> Self {
        SpecOut { head: head.into(), span, props: Vec::new(), optional: Vec::new() }
    }

    pub fn set(mut self, prop: &str, v: Sym) -> Self {
        self.props.push((prop.to_string(), v));
        self
    }

    pub fn offer(mut self, prop: &str, v: Sym) -> Self {
        self.optional.push((prop.to_string(), v));
        self
    }
}

#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub head: String,
    pub span: Span,
    pub is_default: bool,
    /// Properties this entry ends up setting.
    pub props: Vec<(String, Sym)>,
    pub deps: Vec<String>,
}

/// Orders specifiers so every dependency is set before it is read. Class
/// defaults are only requested, through `default_for`, for properties no
/// specifier claims. Independent entries keep source order, user
/// specifiers before defaults.
pub fn resolve(
    specs: Vec<SpecOut>,
    class_props: &[&str],
    default_for: &mut dyn FnMut(&str) -> Result<(Sym, Span), Error>,
) -> Result<Vec<PlanEntry>, Error> {
    // property -> (entry index, value)
    let mut owner: HashMap<String, (usize, Sym)> = HashMap::new();
    let mut optional: Vec<(String, Vec<(usize, Sym)>)> = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        for (p, v) in &s.props {
            if owner.contains_key(p) {
                return Err(ResolveError::SpecifiedTwice { property: p.clone(), span: s.span }.into());
            }
            owner.insert(p.clone(), (i, v.clone()));
        }
        for (p, v) in &s.optional {
            match optional.iter_mut().find(|(q, _)| q == p) {
                Some((_, list)) => list.push((i, v.clone())),
                None => optional.push((p.clone(), vec![(i, v.clone())])),
            }
        }
    }
    for (p, list) in optional {
        if owner.contains_key(&p) {
            continue;
        }
        if list.len() > 1 {
            let span = specs[list[1].0].span;
            return Err(ResolveError::SpecifiedTwice { property: p, span }.into());
        }
        owner.insert(p, list[0].clone());
    }

    let mut entries: Vec<PlanEntry> = specs
        .iter()
        .map(|s| PlanEntry { head: s.head.clone(), span: s.span, is_default: false, props: vec![], deps: vec![] })
        .collect();
    for s in specs.iter().enumerate().flat_map(|(i, s)| s.props.iter().chain(&s.optional).map(move |(p, _)| (i, p))) {
        let (i, p) = s;
        if let Some((o, v)) = owner.get(p) {
            if *o == i && !entries[i].props.iter().any(|(q, _)| q == p) {
                entries[i].props.push((p.clone(), v.clone()));
            }
        }
    }
    for p in class_props {
        if owner.contains_key(*p) {
            continue;
        }
        let (v, span) = default_for(p)?;
        owner.insert(p.to_string(), (entries.len(), v.clone()));
        entries.push(PlanEntry {
            head: format!("default {p}"),
            span,
            is_default: true,
            props: vec![(p.to_string(), v)],
            deps: vec![],
        });
    }

    let n = entries.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for (i, e) in entries.iter_mut().enumerate() {
        let mut deps: Vec<String> = Vec::new();
        for (_, v) in &e.props {
            for d in self_refs(v) {
                if !deps.contains(&d) {
                    deps.push(d);
                }
            }
        }
        for d in &deps {
            let Some((o, _)) = owner.get(d) else {
                return Err(ResolveError::MissingProperty { property: d.clone(), specifier: e.head.clone(), span: e.span }
                    .into());
            };
            if !succ[*o].contains(&i) {
                succ[*o].push(i);
                indeg[i] += 1;
            }
        }
        e.deps = deps;
    }

    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0 && !entries[i].props.is_empty()).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    let live = entries.iter().filter(|e| !e.props.is_empty()).count();
    if order.len() < live {
        let stuck = (0..n).find(|&i| indeg[i] > 0).map(|i| entries[i].span).unwrap_or_default();
        return Err(ResolveError::Cyclic { span: stuck }.into());
    }
    let mut slots: Vec<Option<PlanEntry>> = entries.into_iter().map(Some).collect();
    Ok(order.into_iter().filter_map(|i| slots[i].take()).collect())
}

/// Evaluates a plan in order, replacing each `self.p` by the value chosen
/// for `p` by an earlier entry.
pub fn execute(plan: &[PlanEntry]) -> Result<BTreeMap<String, Sym>, String> {
    let mut out: BTreeMap<String, Sym> = BTreeMap::new();
    for e in plan {
        let mut vals = Vec::with_capacity(e.props.len());
        for (p, v) in &e.props {
            let s = substitute(v, &|name| out.get(name).cloned()).map_err(|m| format!("{}: {m}", e.head))?;
            vals.push((p.clone(), s));
        }
        out.extend(vals);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::values::{op, scalar, self_prop, Op, Ty, Value};

    fn sp(col: u32) -> Span {
        Span { line: 1, col, ..Span::default() }
    }

    fn no_defaults(p: &str) -> Result<(Sym, Span), Error> {
        panic!("unexpected default request for {p}")
    }

    #[test]
    fn dependency_order_beats_source_order() {
        // position needs width, width needs model
        let pos = op(Op::Add, vec![self_prop("width", Ty::Scalar), scalar(1.0)], Span::default()).unwrap();
        let specs = vec![
            SpecOut::new("left of", sp(1)).set("position", pos).offer("heading", scalar(0.5)),
            SpecOut::new("with model", sp(2)).set("model", scalar(2.0)),
        ];
        let mut defaults = |p: &str| -> Result<(Sym, Span), Error> {
            Ok((
                match p {
                    "width" => op(Op::Mul, vec![self_prop("model", Ty::Any), scalar(3.0)], Span::default()).unwrap(),
                    _ => scalar(0.0),
                },
                Span::default(),
            ))
        };
        let plan = resolve(specs, &["position", "heading", "width", "model"], &mut defaults).unwrap();
        let heads: Vec<&str> = plan.iter().map(|e| e.head.as_str()).collect();
        assert_eq!(heads, ["with model", "default width", "left of"]);
        let props = execute(&plan).unwrap();
        assert_eq!(props["position"].as_const().and_then(Value::as_scalar), Some(7.0));
        assert_eq!(props["heading"].as_const().and_then(Value::as_scalar), Some(0.5));
    }

    #[test]
    fn non_optional_overrides_optional() {
        let specs = vec![
            SpecOut::new("on", sp(1)).set("position", scalar(1.0)).offer("heading", scalar(9.0)),
            SpecOut::new("facing", sp(2)).set("heading", scalar(0.3)),
        ];
        let plan = resolve(specs, &["position", "heading"], &mut no_defaults).unwrap();
        let props = execute(&plan).unwrap();
        assert_eq!(props["heading"].as_const().and_then(Value::as_scalar), Some(0.3));
    }

    #[test]
    fn duplicates_are_errors() {
        let specs = vec![
            SpecOut::new("at", sp(1)).set("position", scalar(1.0)),
            SpecOut::new("on", sp(9)).set("position", scalar(2.0)).offer("heading", scalar(0.0)),
        ];
        let e = resolve(specs, &["position", "heading"], &mut no_defaults).unwrap_err();
        assert!(matches!(&e, Error::Resolve(ResolveError::SpecifiedTwice { property, span }) if property == "position" && span.col == 9));
        assert!(e.to_string().contains("property position specified twice"));

        let specs = vec![
            SpecOut::new("on", sp(1)).set("position", scalar(1.0)).offer("heading", scalar(0.0)),
            SpecOut::new("ahead of", sp(5)).set("foo", scalar(2.0)).offer("heading", scalar(1.0)),
        ];
        let e = resolve(specs, &["position", "heading"], &mut no_defaults).unwrap_err();
        assert!(matches!(e, Error::Resolve(ResolveError::SpecifiedTwice { property, .. }) if property == "heading"));
    }

    #[test]
    fn cycles_and_missing_properties() {
        let specs = vec![
            SpecOut::new("left of", sp(1)).set("position", self_prop("heading", Ty::Scalar)),
            SpecOut::new("facing", sp(2)).set("heading", self_prop("position", Ty::Vector)),
        ];
        let e = resolve(specs, &["position", "heading"], &mut no_defaults).unwrap_err();
        assert!(e.to_string().contains("specifiers have cyclic dependencies"));

        let specs = vec![SpecOut::new("ahead of", sp(4)).set("position", self_prop("height", Ty::Scalar))];
        let e = resolve(specs, &["position"], &mut no_defaults).unwrap_err();
        assert!(matches!(e, Error::Resolve(ResolveError::MissingProperty { property, specifier, .. })
            if property == "height" && specifier == "ahead of"));
    }

    #[test]
    fn self_dependency_is_a_cycle() {
        let specs = vec![SpecOut::new("at", sp(1)).set("position", self_prop("position", Ty::Vector))];
        let e = resolve(specs, &["position"], &mut no_defaults).unwrap_err();
        assert!(matches!(e, Error::Resolve(ResolveError::Cyclic { .. })));
    }
}
