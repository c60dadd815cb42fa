use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ast::{Expr, PropDef};
use crate::error::Span;
use crate::parser::Parser;
use crate::values::{Sym, Ty};

#[derive(Debug)]
pub struct ClassDef {
    pub name: String,
    pub superclass: Option<Arc<ClassDef>>,
    /// Default-value expressions declared by this class itself.
    pub props: Vec<PropDef>,
}

/// Built-in properties and their defaults, per owning class. Point also
/// carries a zero-size box so that `left of` and friends resolve for
/// points being constructed.
const BUILTINS: &[(&str, &[(&str, &str)])] = &[
    (
        "Point",
        &[
            ("position", "0 @ 0"),
            ("viewDistance", "50"),
            ("mutationScale", "0"),
            ("positionStdDev", "1"),
            ("width", "0"),
            ("height", "0"),
        ],
    ),
    ("OrientedPoint", &[("heading", "0"), ("viewAngle", "360 deg"), ("headingStdDev", "5 deg")]),
    (
        "Object",
        &[("width", "1"), ("height", "1"), ("allowCollisions", "False"), ("requireVisible", "True")],
    ),
];

/// Point, OrientedPoint and Object, in that order.
pub fn builtin_classes() -> Vec<Arc<ClassDef>> {
    let mut out: Vec<Arc<ClassDef>> = Vec::new();
    for (name, props) in BUILTINS {
        let props = props
            .iter()
            .map(|(p, src)| {
                let value = Parser::new(src, &[]).and_then(|mut ps| ps.expr()).expect("built-in defaults parse");
                PropDef { name: p.to_string(), value, span: Span::default() }
            })
            .collect();
        out.push(Arc::new(ClassDef { name: name.to_string(), superclass: out.last().cloned(), props }));
    }
    out
}

impl ClassDef {
    /// Root-first inheritance chain.
    pub fn chain(&self) -> Vec<&ClassDef> {
        let mut out = vec![self];
        let mut c = self;
        while let Some(s) = &c.superclass {
            out.push(s);
            c = s;
        }
        out.reverse();
        out
    }

    pub fn is_a(&self, name: &str) -> bool {
        self.chain().iter().any(|c| c.name == name)
    }

    /// Instances of Object subclasses are physical objects in the scene.
    pub fn is_object(&self) -> bool {
        self.is_a("Object")
    }

    /// Most-derived default for every property, ordered by where the
    /// property is first introduced along the chain.
    pub fn defaults(&self) -> Vec<(&str, &Expr)> {
        let mut out: Vec<(&str, &Expr)> = Vec::new();
        for c in self.chain() {
            for p in &c.props {
                match out.iter_mut().find(|(n, _)| *n == p.name) {
                    Some(slot) => slot.1 = &p.value,
                    None => out.push((&p.name, &p.value)),
                }
            }
        }
        out
    }

    pub fn has_property(&self, name: &str) -> bool {
        self.chain().iter().any(|c| c.props.iter().any(|p| p.name == name))
    }
}

/// Static type of a built-in property, `Any` for user properties.
pub fn property_ty(name: &str) -> Ty {
    match name {
        "position" => Ty::Vector,
        "heading" | "width" | "height" | "viewDistance" | "viewAngle" | "mutationScale" | "positionStdDev"
        | "headingStdDev" => Ty::Scalar,
        "allowCollisions" | "requireVisible" => Ty::Bool,
        _ => Ty::Any,
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub class: Arc<ClassDef>,
    pub props: BTreeMap<String, Sym>,
    pub span: Span,
    /// Index among scene objects, for instances of Object subclasses.
    pub scene_index: Option<usize>,
    /// Specifier heads in evaluation order, each with the properties it set.
    pub plan: Vec<(String, Vec<String>)>,
}

impl Instance {
    pub fn has_heading(&self) -> bool {
        self.props.contains_key("heading")
    }
}
