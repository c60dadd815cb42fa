//! Canonical JSON scene documents.

use std::io;

use scenelang_core::sampler::Scene;
use scenelang_core::values::{Rgn, Value};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value as Json};

pub const SCHEMA_VERSION: u64 = 1;

/// Where a scene came from, recorded next to it.
#[derive(Debug, Clone)]
pub struct Provenance<'a> {
    pub world: &'a str,
    pub seed: u64,
    pub index: u64,
    pub iterations: usize,
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::None => Json::Null,
        Value::Bool(b) => Json::Bool(*b),
        Value::Scalar(x) => num(*x),
        Value::Vector(p) => json!([num(p.x), num(p.y)]),
        Value::Str(s) => Json::String(s.to_string()),
        Value::Field(f) => json!({ "field": f.name }),
        Value::Region(Rgn::Poly(r)) => json!({ "region": { "area": num(r.area()) } }),
        Value::Region(Rgn::Sector(s)) => json!({
            "sector": { "center": [num(s.center.x), num(s.center.y)], "radius": num(s.radius),
                        "heading": num(s.heading), "angle": num(s.angle) }
        }),
        Value::List(l) => Json::Array(l.iter().map(value_to_json).collect()),
        Value::Record(r) => Json::Object(r.iter().map(|(k, v)| (k.clone(), value_to_json(v))).collect()),
    }
}

fn num(x: f64) -> Json {
    // non-finite values have no JSON spelling
    serde_json::Number::from_f64(x).map_or(Json::Null, Json::Number)
}

pub fn scene_document(scene: &Scene, prov: &Provenance) -> Json {
    let objects: Vec<Json> = scene
        .objects
        .iter()
        .map(|o| {
            let props: Map<String, Json> = o.props.iter().map(|(k, v)| (k.clone(), value_to_json(v))).collect();
            json!({
                "class": o.class,
                "properties": props,
                "corners": o.corners.iter().map(|c| json!([num(c.x), num(c.y)])).collect::<Vec<_>>(),
            })
        })
        .collect();
    let params: Map<String, Json> = scene.params.iter().map(|(k, v)| (k.clone(), value_to_json(v))).collect();
    json!({
        "schema": SCHEMA_VERSION,
        "world": prov.world,
        "seed": prov.seed,
        "index": prov.index,
        "iterations": prov.iterations,
        "ego": scene.ego,
        "params": params,
        "objects": objects,
    })
}

/// Pretty printer writing every float with 17 significant digits.
struct Canonical(PrettyFormatter<'static>);

impl Formatter for Canonical {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Keys sorted, two-space indent, trailing newline.
pub fn to_canonical_string(doc: &Json) -> String {
    use serde::Serialize;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Canonical(PrettyFormatter::new()));
    doc.serialize(&mut ser).expect("writing to memory");
    let mut s = String::from_utf8(out).expect("JSON is UTF-8");
    s.push('\n');
    s
}

pub fn parse_document(text: &str) -> serde_json::Result<Json> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_every_bit() {
        let xs = [0.1, -0.0, 1e-300, std::f64::consts::PI, 123456789.123456789, f64::MAX, 5e-324];
        let doc = Json::Array(xs.iter().map(|&x| num(x)).collect());
        let text = to_canonical_string(&doc);
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        let back = parse_document(&text).unwrap();
        for (x, j) in xs.iter().zip(back.as_array().unwrap()) {
            assert_eq!(x.to_bits(), j.as_f64().unwrap().to_bits(), "{x}");
        }
    }

    #[test]
    fn keys_are_sorted() {
        let text = to_canonical_string(&json!({"b": 1, "a": {"z": true, "c": null}}));
        let a = text.find("\"a\"").unwrap();
        assert!(a < text.find("\"b\"").unwrap());
        assert!(text.find("\"c\"").unwrap() < text.find("\"z\"").unwrap());
    }
}
