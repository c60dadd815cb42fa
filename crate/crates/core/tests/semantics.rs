//! Table-driven checks of operator and specifier semantics with hand-derived
//! expected values, plus a coverage check over the grammar's productions.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenelang_core::evaluator::compile;
use scenelang_core::modules::Loader;
use scenelang_core::values::{Evaluator, Value};
use scenelang_core::world::World;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
enum Want {
    S(f64),
    V(f64, f64),
    B(bool),
}
use Want::*;

struct Case {
    tag: &'static str,
    world: &'static str,
    setup: &'static str,
    expr: &'static str,
    want: Want,
}

const fn c(tag: &'static str, world: &'static str, setup: &'static str, expr: &'static str, want: Want) -> Case {
    Case { tag, world, setup, expr, want }
}

const EGO: &str = "ego = Object at 0 @ 0\n";

fn deg(x: f64) -> f64 {
    x.to_radians()
}

/// Every case. Worlds: `open` has heading 0 everywhere; in `tworoads` the
/// field is 0 for 0 < x < 10.5 on the north-south road, 90 deg at (50, 5)
/// and -90 deg at (50, -5).
fn cases() -> Vec<Case> {
    vec![
        // notation
        c("rotate", "open", EGO, "(0 @ 0) offset along 90 deg by (0 @ 1)", V(-1.0, 0.0)),
        c("rotate", "open", EGO, "(0 @ 0) offset along -90 deg by (0 @ 1)", V(1.0, 0.0)),
        c("offsetLocal", "open", EGO, "((0 @ 1) relative to (OrientedPoint at 5 @ 5, facing 90 deg)).position", V(4.0, 5.0)),
        c("offsetLocal", "open", EGO, "((0 @ -2) relative to (OrientedPoint at 1 @ 1, facing 180 deg)).position", V(1.0, 3.0)),
        c("forwardEuler", "tworoads", EGO, "(follow roadDirection from 50 @ -5 for 4).position", V(54.0, -5.0)),
        c("forwardEuler", "open", EGO, "(follow roadDirection from 0 @ 0 for 4).position", V(0.0, 4.0)),
        // position specifiers
        c("at vector", "open", "ego = Object at 0 @ 0\no = Object at 3 @ 4\n", "o.position", V(3.0, 4.0)),
        c("offset by vector", "open", "ego = Object at 1 @ 2, facing 90 deg\no = Object offset by 1 @ 0\n", "o.position", V(2.0, 2.0)),
        c("offset along direction by vector", "open", "ego = Object at 1 @ 2\no = Object offset along 90 deg by 0 @ 1\n", "o.position", V(0.0, 2.0)),
        c("left of vector", "open", "ego = Object at 9 @ 9\no = Object left of 0 @ 0 by 1, facing 0\n", "o.position", V(-1.5, 0.0)),
        c("left of vector", "open", "ego = Object at 9 @ 9\no = Object left of 0 @ 0, facing 90 deg\n", "o.position", V(0.0, -0.5)),
        c("right of vector", "open", "ego = Object at 9 @ 9\no = Object right of 0 @ 0 by 1, facing 0\n", "o.position", V(1.5, 0.0)),
        c("ahead of vector", "open", "ego = Object at 9 @ 9\no = Object ahead of 0 @ 0 by 1, with height 2\n", "o.position", V(0.0, 2.0)),
        c("behind vector", "open", "ego = Object at 9 @ 9\no = Object behind 5 @ 5, with height 2\n", "o.position", V(5.0, 4.0)),
        c("beyond vector by vector", "open", "ego = Object at 0 @ 0\no = Object beyond 0 @ 10 by 0 @ 5\n", "o.position", V(0.0, 15.0)),
        c("beyond vector by vector", "open", "ego = Object at 9 @ 9\no = Object beyond 10 @ 0 by 0 @ 5 from 0 @ 0\n", "o.position", V(15.0, 0.0)),
        c("beyond vector by vector", "open", "ego = Object at 9 @ 9\no = Object beyond 1 @ 1 by 1 @ 0 from 0 @ 0\n", "o.position", V(1.0 + 0.5f64.sqrt(), 1.0 - 0.5f64.sqrt())),
        c("visible", "open", "ego = Object at 0 @ 0, with viewDistance 5, with viewAngle 90 deg\no = Object visible\n",
          "(distance to o.position) <= 5 and abs(angle to o.position) <= 45 deg", B(true)),
        c("visible from", "open", "ego = Object at 0 @ 0\np = Point at 100 @ 0, with viewDistance 3\no = Object visible from p\n",
          "(distance from p to o.position) <= 3", B(true)),
        c("in region", "tworoads", "ego = Object in road\n", "ego.heading == (roadDirection at ego.position)", B(true)),
        c("in region", "tworoads", "ego = Object in road\n", "ego.position is in road", B(true)),
        c("in region", "mars", "ego = Object in workspace\n", "ego.heading", S(0.0)),
        c("on region", "tworoads", "ego = Object on road, facing 5 deg\n", "ego.heading", S(deg(5.0))),
        c("left of OrientedPoint", "open", "ego = Object at 9 @ 9\nop = OrientedPoint at 0 @ 0\no = Object left of op by 0.25\n", "o.position", V(-0.75, 0.0)),
        c("left of OrientedPoint", "open", "ego = Object at 9 @ 9\nop = OrientedPoint at 0 @ 0, facing 90 deg\no = Object left of op by 0.25\n", "o.position", V(0.0, -0.75)),
        c("left of OrientedPoint", "open", "ego = Object at 9 @ 9\nop = OrientedPoint at 0 @ 0, facing 90 deg\no = Object left of op by 0.25\n", "o.heading", S(FRAC_PI_2)),
        c("right of OrientedPoint", "open", "ego = Object at 9 @ 9\nop = OrientedPoint at 1 @ 1, facing 180 deg\no = Object right of op\n", "o.position", V(0.5, 1.0)),
        c("ahead of OrientedPoint", "open", "ego = Object at 9 @ 9\nop = OrientedPoint at 0 @ 0, facing -90 deg\no = Object ahead of op by 1, with height 4\n", "o.position", V(3.0, 0.0)),
        c("behind OrientedPoint", "open", "ego = Object at 9 @ 9\nop = OrientedPoint at 0 @ 0\no = Object behind op by 1\n", "o.position", V(0.0, -1.5)),
        c("ahead of Object", "open", "ego = Object at 9 @ 9\nx = Object at 0 @ 0, with height 2\no = Object ahead of x, with height 2\n", "o.position", V(0.0, 2.0)),
        c("behind Object", "open", "ego = Object at 9 @ 9\nx = Object at 0 @ 0, facing 90 deg\no = Object behind x\n", "o.position", V(1.0, 0.0)),
        c("left of Object", "open", "ego = Object at 9 @ 9\nx = Object at 0 @ 0, with width 3\no = Object left of x by 1\n", "o.position", V(-3.0, 0.0)),
        c("right of Object", "open", "ego = Object at 9 @ 9\nx = Object at 0 @ 0, facing 180 deg\no = Object right of x\n", "o.position", V(-1.0, 0.0)),
        c("right of Object", "open", "ego = Object at 9 @ 9\nx = Object at 0 @ 0, facing 180 deg\no = Object right of x\n", "o.heading", S(PI)),
        c("following", "tworoads", "ego = Object at 9 @ 9\no = Object following roadDirection from 50 @ -5 for 4\n", "o.position", V(54.0, -5.0)),
        c("following", "tworoads", "ego = Object at 50 @ -5\no = Object following roadDirection for 4\n", "o.heading", S(-FRAC_PI_2)),
        // heading specifiers
        c("facing heading", "open", "ego = Object facing 30 deg\n", "ego.heading", S(deg(30.0))),
        c("facing vectorField", "tworoads", "ego = Object at 50 @ 5, facing roadDirection\n", "ego.heading", S(FRAC_PI_2)),
        c("facing toward", "open", "ego = Object at 0 @ 0, facing toward 1 @ 0\n", "ego.heading", S(-FRAC_PI_2)),
        c("facing away from", "open", "ego = Object at 0 @ 0, facing away from 1 @ 0\n", "ego.heading", S(FRAC_PI_2)),
        c("apparently facing", "open", "ego = Object at 0 @ 0\no = Object at 5 @ 0, apparently facing 90 deg\n", "o.heading", S(0.0)),
        c("apparently facing", "open", "ego = Object at 9 @ 9\no = Object at 0 @ 5, apparently facing 10 deg from 0 @ 0\n", "o.heading", S(deg(10.0))),
        // scalar operators
        c("relative heading", "open", EGO, "relative heading of 30 deg from 45 deg", S(deg(-15.0))),
        c("relative heading", "open", EGO, "relative heading of 170 deg from -170 deg", S(deg(-20.0))),
        c("relative heading", "open", EGO, "relative heading of -135 deg from 135 deg", S(FRAC_PI_2)),
        c("relative heading", "open", "ego = Object facing 90 deg\n", "relative heading of 0", S(-FRAC_PI_2)),
        c("apparent heading", "open", EGO, "apparent heading of (OrientedPoint at 5 @ 0) from 0 @ 0", S(FRAC_PI_2)),
        c("apparent heading", "open", "ego = Object at 0 @ 0\no = Object at 0 @ 5, facing 45 deg\n", "apparent heading of o", S(FRAC_PI_4)),
        c("distance", "open", EGO, "distance from 0 @ 0 to 3 @ 4", S(5.0)),
        c("distance", "open", "ego = Object at 1 @ 1\n", "distance to 4 @ 5", S(5.0)),
        c("angle", "open", EGO, "angle from 0 @ 0 to 1 @ 1", S(-FRAC_PI_4)),
        c("angle", "open", EGO, "angle to -1 @ -1", S(3.0 * FRAC_PI_4)),
        c("angle", "open", EGO, "angle to 1 @ 0", S(-FRAC_PI_2)),
        c("max", "open", EGO, "max(1, 5, 3)", S(5.0)),
        c("min", "open", EGO, "min(4, -2)", S(-2.0)),
        c("negation", "open", EGO, "-(2 + 1)", S(-3.0)),
        c("abs", "open", EGO, "abs(-2.5)", S(2.5)),
        c("addition", "open", EGO, "1.5 + 2", S(3.5)),
        c("multiplication", "open", EGO, "1.5 * 2", S(3.0)),
        // boolean operators
        c("not", "open", EGO, "not (1 < 2)", B(false)),
        c("and", "open", EGO, "1 < 2 and 2 < 1", B(false)),
        c("or", "open", EGO, "1 < 2 or 2 < 1", B(true)),
        c("==", "open", EGO, "2 == 2", B(true)),
        c("!=", "open", EGO, "2 != 2", B(false)),
        c("<", "open", EGO, "1 < 1", B(false)),
        c(">", "open", EGO, "2 > 1", B(true)),
        c("<=", "open", EGO, "1 <= 1", B(true)),
        c(">=", "open", EGO, "0 >= 1", B(false)),
        c("can see vector", "open", "ego = Object at 0 @ 0, with viewDistance 10, with viewAngle 90 deg\n", "ego can see 0 @ 5", B(true)),
        c("can see vector", "open", "ego = Object at 0 @ 0, with viewDistance 10, with viewAngle 90 deg\n", "ego can see 5 @ 1", B(false)),
        c("can see vector", "open", "ego = Object at 0 @ 0\np = Point at 20 @ 0, with viewDistance 3\n", "p can see 22 @ 2", B(true)),
        c("can see Object", "open", "ego = Object at 0 @ 0, with viewDistance 10, with viewAngle 90 deg\no = Object at 0 @ 10.4\n", "ego can see o", B(true)),
        c("can see Object", "open", "ego = Object at 0 @ 0, with viewDistance 10, with viewAngle 90 deg\no = Object at 0 @ 11\n", "ego can see o", B(false)),
        c("can see Object", "open", "ego = Object at 0 @ 0, with viewDistance 10, with viewAngle 90 deg\no = Object at 0 @ -5\n", "ego can see o", B(false)),
        c("can see Object", "open", "ego = Object at 0 @ 0, with viewDistance 10, with viewAngle 90 deg\no = Object at 7.5 @ 7, facing 45 deg\n", "ego can see o", B(true)),
        c("is in vector", "tworoads", EGO, "(0 @ 0) is in road", B(true)),
        c("is in vector", "tworoads", EGO, "(50 @ 50) is in road", B(false)),
        c("is in Object", "tworoads", "ego = Object at 0 @ 0\no = Object at 50 @ 5\n", "o is in road", B(true)),
        c("is in Object", "tworoads", "ego = Object at 0 @ 0\no = Object at 10.4 @ 50\n", "o is in road", B(false)),
        // heading operators
        c("deg", "open", EGO, "180 deg", S(PI)),
        c("F at V", "tworoads", EGO, "roadDirection at 50 @ 5", S(FRAC_PI_2)),
        c("F at V", "tworoads", EGO, "roadDirection at -5 @ 50", S(PI)),
        c("H relative to F", "tworoads", "ego = Object at 50 @ 5, facing 10 deg relative to roadDirection\n", "ego.heading", S(deg(100.0))),
        c("F relative to H", "tworoads", "ego = Object at 50 @ 5, facing roadDirection relative to 10 deg\n", "ego.heading", S(deg(100.0))),
        c("F relative to F", "tworoads", "ego = Object at 50 @ 5, facing roadDirection relative to roadDirection\n", "ego.heading", S(PI)),
        c("H relative to H", "open", EGO, "10 deg relative to 20 deg", S(deg(30.0))),
        // vector operators
        c("vector offset by vector", "open", EGO, "(1 @ 2) offset by (3 @ 4)", V(4.0, 6.0)),
        c("vector offset along direction by vector", "open", EGO, "(5 @ 5) offset along 90 deg by (0 @ 1)", V(4.0, 5.0)),
        c("vector offset along direction by vector", "tworoads", EGO, "(50 @ 5) offset along roadDirection by (0 @ 1)", V(49.0, 5.0)),
        c("vector relative to vector", "open", EGO, "(1 @ 2) relative to (3 @ 4)", V(4.0, 6.0)),
        // region operators
        c("visible region", "open", "ego = Object at 0 @ 0, with viewDistance 10\n", "(0 @ 9.9) is in (visible workspace)", B(true)),
        c("visible region", "open", "ego = Object at 0 @ 0, with viewDistance 10\n", "(0 @ 10.1) is in (visible workspace)", B(false)),
        c("region visible from", "tworoads", "ego = Object at 0 @ 0\np = OrientedPoint at 50 @ 0, facing -90 deg, with viewDistance 20, with viewAngle 60 deg\n",
          "(60 @ 5) is in (road visible from p)", B(true)),
        c("region visible from", "tworoads", "ego = Object at 0 @ 0\np = OrientedPoint at 50 @ 0, facing -90 deg, with viewDistance 20, with viewAngle 60 deg\n",
          "(40 @ 5) is in (road visible from p)", B(false)),
        // oriented point operators
        c("vector relative to OrientedPoint", "open", EGO, "((0 @ 1) relative to (OrientedPoint at 5 @ 5, facing 90 deg)).heading", S(FRAC_PI_2)),
        c("OrientedPoint offset by vector", "open", EGO, "((OrientedPoint at 1 @ 1, facing 180 deg) offset by (0 @ -2)).position", V(1.0, 3.0)),
        c("follow", "tworoads", EGO, "(follow roadDirection from 50 @ -5 for 4).heading", S(-FRAC_PI_2)),
        c("follow", "tworoads", "ego = Object at 50 @ -5\n", "(follow roadDirection for 4).position", V(54.0, -5.0)),
        c("front of", "open", "ego = Object at 0 @ 0, facing 90 deg\n", "(front of ego).position", V(-0.5, 0.0)),
        c("front of", "open", "ego = Object at 0 @ 0, facing 90 deg\n", "(front of ego).heading", S(FRAC_PI_2)),
        c("back of", "open", "ego = Object at 2 @ 3, with height 4\n", "(back of ego).position", V(2.0, 1.0)),
        c("left of", "open", "ego = Object at 2 @ 3, with width 2\n", "(left of ego).position", V(1.0, 3.0)),
        c("right of", "open", "ego = Object at 2 @ 3, with width 2, facing 180 deg\n", "(right of ego).position", V(1.0, 3.0)),
        c("front left of", "open", "ego = Object at 2 @ 3, with width 2, with height 4\n", "(front left of ego).position", V(1.0, 5.0)),
        c("front right of", "open", "ego = Object at 2 @ 3, with width 2, with height 4\n", "(front right of ego).position", V(3.0, 5.0)),
        c("back left of", "open", "ego = Object at 2 @ 3, with width 2, with height 4\n", "(back left of ego).position", V(1.0, 1.0)),
        c("back right of", "open", "ego = Object at 2 @ 3, with width 2, with height 4\n", "(back right of ego).position", V(3.0, 1.0)),
        c("back right of", "open", "ego = Object at 0 @ 0, facing 90 deg, with width 2, with height 4\n", "(back right of ego).position", V(2.0, 1.0)),
        // statements
        c("class definition", "open", "class Wide:\n    width: 3\nego = Wide\n", "ego.width", S(3.0)),
        c("class definition", "open", "class Wide(Object):\n    width: 3\nclass Wider(Wide):\n    width: self.height * 4\nego = Wider\n", "ego.width", S(4.0)),
        c("function definition", "open", "def f(a, b=2):\n    return a * b\nego = Object\n", "f(3) + f(1, b=5)", S(11.0)),
        c("if statement", "open", "k = 2\nif k > 1:\n    m = 5\nelse:\n    m = 7\nego = Object\n", "m", S(5.0)),
        c("for loop", "open", "t = 0\nfor i in range(4):\n    t = t + i\nego = Object\n", "t", S(6.0)),
        c("import", "tworoads", "import common\nego = EgoCar\n", "ego.width", S(1.8)),
        c("assignment", "open", "x = 2\ny = x * x\nego = Object\n", "y", S(4.0)),
        c("interval", "open", "x = (2, 2)\nego = Object\n", "x", S(2.0)),
        c("Uniform", "open", "x = Uniform(4, 4)\nego = Object\n", "x", S(4.0)),
        c("Discrete", "open", "x = Discrete({3: 1, 5: 0})\nego = Object\n", "x", S(3.0)),
        c("Normal", "open", "x = Normal(7, 0)\nego = Object\n", "x", S(7.0)),
        c("diagonal", "open", "x = (0, 1)\ny = x @ x\nego = Object\n", "y.x == y.y", B(true)),
        c("resample", "open", "x = (3, 3)\nego = Object\n", "resample(x)", S(3.0)),
        c("attribute", "tworoads", "ego = Object\n", "CarModel.models['suv'].width", S(2.0)),
        c("conditional expression", "open", "x = None\nego = Object\n", "1 if x is None else 2", S(1.0)),
        c("string", "open", "ego = Object\n", "'RAIN' == 'RAIN'", B(true)),
    ]
}

/// Productions of the operator grammar, position specifiers and heading
/// specifiers, plus the notation helpers and statements.
const PRODUCTIONS: &[&str] = &[
    "rotate", "offsetLocal", "forwardEuler",
    "at vector", "offset by vector", "offset along direction by vector", "left of vector", "right of vector",
    "ahead of vector", "behind vector", "beyond vector by vector", "visible", "visible from", "in region",
    "on region", "left of OrientedPoint", "right of OrientedPoint", "ahead of OrientedPoint",
    "behind OrientedPoint", "ahead of Object", "behind Object", "left of Object", "right of Object", "following",
    "facing heading", "facing vectorField", "facing toward", "facing away from", "apparently facing",
    "max", "min", "negation", "abs", "addition", "multiplication", "relative heading", "apparent heading",
    "distance", "angle",
    "not", "and", "or", "==", "!=", "<", ">", "<=", ">=", "can see vector", "can see Object", "is in vector",
    "is in Object",
    "deg", "F at V", "H relative to F", "F relative to H", "F relative to F", "H relative to H",
    "vector relative to vector", "vector offset by vector", "vector offset along direction by vector",
    "visible region", "region visible from",
    "vector relative to OrientedPoint", "OrientedPoint offset by vector", "follow", "front of", "back of",
    "left of", "right of", "front left of", "front right of", "back left of", "back right of",
    "class definition", "function definition", "if statement", "for loop", "import", "assignment",
    "interval", "Uniform", "Discrete", "Normal", "diagonal", "resample", "attribute",
    "conditional expression", "string",
];

fn eval(case: &Case, seed: u64) -> Result<Value, String> {
    let world = Arc::new(World::bundled(case.world).unwrap());
    let src = format!("{}param result = {}\n", case.setup, case.expr);
    let model = match compile(&src, world, &Loader::new(vec![])) {
        Ok(m) => m,
        Err(e) => return Err(e.to_string()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let none = HashMap::new();
    let mut ev = Evaluator::new(&mut rng, &model.final_props, &none);
    ev.eval(&model.params["result"]).map_err(|e| format!("{e:?}"))
}

fn angle_close(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d < TOL || 2.0 * PI - d < TOL
}

/// Cases whose value differs from the expected one.
pub fn failures() -> Vec<String> {
    let mut out = Vec::new();
    for case in cases() {
        for seed in 0..4 {
            let got = eval(&case, seed);
            let ok = match (case.want, got.as_ref().unwrap_or(&Value::None)) {
                (S(w), Value::Scalar(g)) => (w - g).abs() < TOL || (case.expr.contains("heading") && angle_close(w, *g)),
                (V(x, y), Value::Vector(g)) => (x - g.x).abs() < TOL && (y - g.y).abs() < TOL,
                (B(w), Value::Bool(g)) => w == *g,
                _ => false,
            };
            if !ok {
                out.push(format!("[{}] {} => {got:?}, want {:?}", case.tag, case.expr, case.want));
                break;
            }
        }
    }
    out
}

/// Productions without a case, and case tags naming no production.
pub fn coverage_gaps() -> Vec<String> {
    let tags: BTreeSet<&str> = cases().iter().map(|c| c.tag).collect();
    let mut out: Vec<String> =
        PRODUCTIONS.iter().filter(|p| !tags.contains(**p)).map(|p| format!("no case for {p}")).collect();
    out.extend(tags.iter().filter(|t| !PRODUCTIONS.contains(t)).map(|t| format!("unlisted production {t}")));
    out
}

pub fn case_count() -> usize {
    cases().len()
}

pub fn production_count() -> usize {
    PRODUCTIONS.len()
}

#[test]
fn every_case_matches_its_hand_derived_value() {
    let f = failures();
    assert!(f.is_empty(), "{}", f.join("\n"));
}

#[test]
fn every_production_is_exercised() {
    let gaps = coverage_gaps();
    assert!(gaps.is_empty(), "{gaps:?}");
}
