use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use scenelang_geometry::{Coord, FieldCell, LineString, Polygon, Region, VectorField, AREA_EPS};
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::values::{Rgn, Value};

/// A member of a world table namespace such as `CarModel`.
#[derive(Debug, Clone)]
pub enum TableMember {
    Value(Value),
    /// Callable returning a fresh uniform choice over these values.
    Uniform(Vec<Value>),
    /// Callable returning a fresh weighted choice.
    Discrete(Vec<(Value, f64)>),
    /// Callable multiplying every element of a list by a factor.
    Scale(f64),
}

#[derive(Debug, Clone)]
pub struct World {
    pub name: String,
    pub workspace: Arc<Region>,
    pub regions: BTreeMap<String, Arc<Region>>,
    pub fields: BTreeMap<String, Arc<VectorField>>,
    pub tables: BTreeMap<String, BTreeMap<String, TableMember>>,
    pub prelude: String,
}

const BUNDLED: &[(&str, &str)] = &[
    ("tworoads", include_str!("../worlds/tworoads.world.json")),
    ("mars", include_str!("../worlds/mars.world.json")),
    ("open", include_str!("../worlds/open.world.json")),
    ("heading2", include_str!("../worlds/heading2.world.json")),
    ("strip", include_str!("../worlds/strip.world.json")),
    ("bumper", include_str!("../worlds/bumper.world.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

impl World {
    pub fn bundled(name: &str) -> Option<World> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, src)| World::from_json_str(src).expect("bundled worlds are valid"))
    }

    /// A bundled world name or a path to a world file.
    pub fn load(spec: &str) -> Result<World> {
        if let Some(w) = World::bundled(spec) {
            return Ok(w);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::World(format!("cannot read world {}: {e}", path.display())))?;
        World::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<World> {
        let json: Json = serde_json::from_str(text).map_err(|e| Error::World(format!("invalid JSON: {e}")))?;
        parse_world(&json).map_err(|(path, msg)| Error::World(format!("{path}: {msg}")))
    }
}

type WResult<T> = std::result::Result<T, (String, String)>;

fn err<T>(path: &str, msg: impl Into<String>) -> WResult<T> {
    Err((if path.is_empty() { "/".into() } else { path.to_string() }, msg.into()))
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn object<'j>(j: &'j Json, path: &str) -> WResult<&'j serde_json::Map<String, Json>> {
    j.as_object().map_or_else(|| err(path, "expected an object"), Ok)
}

fn number(j: &Json, path: &str) -> WResult<f64> {
    match j.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => err(path, "expected a finite number"),
    }
}

fn ring(j: &Json, path: &str) -> WResult<LineString<f64>> {
    let Some(pts) = j.as_array() else {
        return err(path, "expected an array of [x, y] points");
    };
    let mut coords = Vec::with_capacity(pts.len() + 1);
    for (i, p) in pts.iter().enumerate() {
        let pp = format!("{path}/{i}");
        match p.as_array().map(|a| a.as_slice()) {
            Some([x, y]) => coords.push(Coord { x: number(x, &format!("{pp}/0"))?, y: number(y, &format!("{pp}/1"))? }),
            _ => return err(&pp, "expected [x, y]"),
        }
    }
    if coords.len() < 3 {
        return err(path, "a ring needs at least 3 points");
    }
    Ok(LineString::new(coords))
}

fn polygon(j: &Json, path: &str) -> WResult<Polygon<f64>> {
    let o = object(j, path)?;
    let ext = ring(o.get("exterior").unwrap_or(&Json::Null), &format!("{path}/exterior"))?;
    let mut holes = Vec::new();
    if let Some(h) = o.get("holes") {
        let Some(arr) = h.as_array() else {
            return err(&format!("{path}/holes"), "expected an array of rings");
        };
        for (i, r) in arr.iter().enumerate() {
            holes.push(ring(r, &format!("{path}/holes/{i}"))?);
        }
    }
    let poly = Polygon::new(ext, holes);
    let r = Region::from_polygons(vec![poly.clone()]).map_err(|e| (path.to_string(), e.to_string()))?;
    if r.area() <= AREA_EPS {
        return err(path, "polygon has zero area");
    }
    Ok(poly)
}

fn refs<'p>(
    j: &Json,
    path: &str,
    polys: &'p BTreeMap<String, Polygon<f64>>,
) -> WResult<Vec<&'p Polygon<f64>>> {
    let Some(arr) = j.as_array() else {
        return err(path, "expected an array of polygon names");
    };
    let mut out = Vec::new();
    for (i, r) in arr.iter().enumerate() {
        let name = r.as_str().map_or_else(|| err(&format!("{path}/{i}"), "expected a polygon name"), Ok)?;
        match polys.get(name) {
            Some(p) => out.push(p),
            None => return err(&format!("{path}/{i}"), format!("unknown polygon '{name}'")),
        }
    }
    Ok(out)
}

fn region_of(ps: &[&Polygon<f64>], path: &str) -> WResult<Region> {
    Region::from_polygons(ps.iter().map(|p| (*p).clone()).collect()).map_err(|e| (path.to_string(), e.to_string()))
}

pub fn json_to_value(j: &Json) -> Value {
    match j {
        Json::Null => Value::None,
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => Value::Scalar(n.as_f64().unwrap_or(f64::NAN)),
        Json::String(s) => Value::Str(s.as_str().into()),
        Json::Array(a) => Value::List(Arc::new(a.iter().map(json_to_value).collect())),
        Json::Object(o) => Value::Record(Arc::new(o.iter().map(|(k, v)| (k.clone(), json_to_value(v))).collect())),
    }
}

fn parse_world(j: &Json) -> WResult<World> {
    let top = object(j, "")?;
    match top.get("schema").and_then(Json::as_u64) {
        Some(1) => {}
        _ => return err("/schema", "expected schema version 1"),
    }
    let name = match top.get("name").and_then(Json::as_str) {
        Some(n) => n.to_string(),
        None => return err("/name", "expected a string"),
    };

    let mut polys = BTreeMap::new();
    if let Some(p) = top.get("polygons") {
        for (k, v) in object(p, "/polygons")? {
            polys.insert(k.clone(), polygon(v, &format!("/polygons/{}", escape(k)))?);
        }
    }

    let ws_refs = refs(top.get("workspace").unwrap_or(&Json::Null), "/workspace", &polys)?;
    let workspace = region_of(&ws_refs, "/workspace")?;
    if workspace.area() <= AREA_EPS {
        return err("/workspace", "workspace is empty");
    }

    let mut fields = BTreeMap::new();
    if let Some(f) = top.get("fields") {
        for (k, v) in object(f, "/fields")? {
            let path = format!("/fields/{}", escape(k));
            let o = object(v, &path)?;
            let field = if let Some(c) = o.get("constant_deg") {
                VectorField::constant(k.clone(), number(c, &format!("{path}/constant_deg"))?.to_radians())
            } else {
                let Some(cells) = o.get("cells").and_then(Json::as_array) else {
                    return err(&path, "expected 'cells' or 'constant_deg'");
                };
                let default = match o.get("default_deg") {
                    Some(d) => number(d, &format!("{path}/default_deg"))?.to_radians(),
                    None => 0.0,
                };
                let mut out: Vec<FieldCell> = Vec::new();
                for (i, c) in cells.iter().enumerate() {
                    let cp = format!("{path}/cells/{i}");
                    let co = object(c, &cp)?;
                    let pname = co.get("polygon").and_then(Json::as_str);
                    let Some(poly) = pname.and_then(|n| polys.get(n)) else {
                        return err(&format!("{cp}/polygon"), "unknown or missing polygon");
                    };
                    let heading = number(co.get("heading_deg").unwrap_or(&Json::Null), &format!("{cp}/heading_deg"))?;
                    if !workspace.covers_polygon(poly) {
                        return err(&format!("{cp}/polygon"), "field polygon lies outside the workspace");
                    }
                    let cell = region_of(&[poly], &cp)?;
                    for (k2, prev) in out.iter().enumerate() {
                        let overlap = cell.intersect(&region_of(&[&prev.polygon], &cp)?).area();
                        if overlap > AREA_EPS {
                            return err(&cp, format!("overlaps cell {k2}"));
                        }
                    }
                    out.push(FieldCell { polygon: poly.clone(), heading: heading.to_radians() });
                }
                VectorField::piecewise(k.clone(), out, default)
            };
            fields.insert(k.clone(), Arc::new(field));
        }
    }

    let mut regions = BTreeMap::new();
    if let Some(r) = top.get("regions") {
        for (k, v) in object(r, "/regions")? {
            let path = format!("/regions/{}", escape(k));
            let o = object(v, &path)?;
            let ps = refs(o.get("polygons").unwrap_or(&Json::Null), &format!("{path}/polygons"), &polys)?;
            let mut region = region_of(&ps, &path)?;
            if let Some(orient) = o.get("orientation") {
                let fname = orient.as_str().unwrap_or("");
                let Some(f) = fields.get(fname) else {
                    return err(&format!("{path}/orientation"), format!("unknown field '{fname}'"));
                };
                region = region.with_orientation(Some(f.clone()));
            }
            regions.insert(k.clone(), Arc::new(region));
        }
    }
    if regions.contains_key("workspace") {
        return err("/regions/workspace", "'workspace' is reserved");
    }

    let mut tables = BTreeMap::new();
    if let Some(t) = top.get("tables") {
        for (ns, members) in object(t, "/tables")? {
            let npath = format!("/tables/{}", escape(ns));
            let mobj = object(members, &npath)?;
            let mut out = BTreeMap::new();
            for (m, spec) in mobj {
                let mp = format!("{npath}/{}", escape(m));
                out.insert(m.clone(), table_member(spec, &mp, mobj)?);
            }
            tables.insert(ns.clone(), out);
        }
    }

    let prelude = match top.get("prelude") {
        None => String::new(),
        Some(Json::String(s)) => s.clone(),
        Some(Json::Array(lines)) => {
            let mut s = String::new();
            for (i, l) in lines.iter().enumerate() {
                let Some(l) = l.as_str() else {
                    return err(&format!("/prelude/{i}"), "expected a string");
                };
                s.push_str(l);
                s.push('\n');
            }
            s
        }
        Some(_) => return err("/prelude", "expected a string or an array of lines"),
    };

    Ok(World { name, workspace: Arc::new(workspace), regions, fields, tables, prelude })
}

fn table_member(spec: &Json, path: &str, siblings: &serde_json::Map<String, Json>) -> WResult<TableMember> {
    let o = object(spec, path)?;
    let map_of = |key: &str| -> WResult<&serde_json::Map<String, Json>> {
        let Some(target) = o.get(key).and_then(Json::as_str) else {
            return err(&format!("{path}/{key}"), "expected a member name");
        };
        match siblings.get(target).and_then(|s| s.get("map")).and_then(Json::as_object) {
            Some(m) if !m.is_empty() => Ok(m),
            _ => err(&format!("{path}/{key}"), format!("'{target}' is not a non-empty map member")),
        }
    };
    if let Some(m) = o.get("map") {
        object(m, &format!("{path}/map"))?;
        Ok(TableMember::Value(json_to_value(m)))
    } else if o.contains_key("uniform_over") {
        Ok(TableMember::Uniform(map_of("uniform_over")?.values().map(json_to_value).collect()))
    } else if o.contains_key("discrete_over") {
        let m = map_of("discrete_over")?;
        let w = o.get("weights").and_then(Json::as_object);
        let Some(w) = w else {
            return err(&format!("{path}/weights"), "expected an object of weights");
        };
        let mut out = Vec::new();
        for (k, v) in m {
            let wt = match w.get(k) {
                Some(x) => number(x, &format!("{path}/weights/{}", escape(k)))?,
                None => return err(&format!("{path}/weights"), format!("missing weight for '{k}'")),
            };
            if wt < 0.0 {
                return err(&format!("{path}/weights/{}", escape(k)), "weights must be non-negative");
            }
            out.push((json_to_value(v), wt));
        }
        if out.iter().all(|(_, w)| *w == 0.0) {
            return err(&format!("{path}/weights"), "weights are all zero");
        }
        Ok(TableMember::Discrete(out))
    } else if let Some(f) = o.get("scale_list") {
        Ok(TableMember::Scale(number(f, &format!("{path}/scale_list"))?))
    } else {
        err(path, "expected one of 'map', 'uniform_over', 'discrete_over', 'scale_list'")
    }
}

impl World {
    /// Named values a scenario sees as globals.
    pub fn globals(&self) -> Vec<(String, Value)> {
        let mut out = vec![("workspace".to_string(), Value::Region(Rgn::Poly(self.workspace.clone())))];
        for (k, r) in &self.regions {
            out.push((k.clone(), Value::Region(Rgn::Poly(r.clone()))));
        }
        for (k, f) in &self.fields {
            out.push((k.clone(), Value::Field(f.clone())));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!(
            r#"{{"schema": 1, "name": "t",
                "polygons": {{"sq": {{"exterior": [[0,0],[10,0],[10,10],[0,10]]}},
                             "far": {{"exterior": [[20,0],[30,0],[30,10],[20,10]]}}}},
                "workspace": ["sq"] {extra}}}"#
        )
    }

    #[test]
    fn bundled_worlds_load() {
        for n in bundled_names() {
            let w = World::bundled(n).unwrap();
            assert!(w.workspace.area() > 0.0, "{n}");
        }
        let w = World::bundled("tworoads").unwrap();
        assert!(w.regions.contains_key("road") && w.regions.contains_key("curb"));
        let f = w.fields["roadDirection"].as_piecewise().unwrap();
        assert_eq!(f.cells().len(), 18);
        assert!(w.regions["road"].orientation().is_some());
    }

    #[test]
    fn field_outside_workspace_is_rejected() {
        let src = minimal(r#", "fields": {"f": {"cells": [{"polygon": "far", "heading_deg": 0}]}}"#);
        let e = World::from_json_str(&src).unwrap_err().to_string();
        assert!(e.contains("/fields/f/cells/0/polygon") && e.contains("outside"), "{e}");
    }

    #[test]
    fn empty_workspace_is_rejected() {
        let src = r#"{"schema": 1, "name": "t", "workspace": []}"#;
        let e = World::from_json_str(src).unwrap_err().to_string();
        assert!(e.contains("/workspace") && e.contains("empty"), "{e}");
    }

    #[test]
    fn overlapping_cells_are_rejected() {
        let src = format!(
            r#"{{"schema": 1, "name": "t",
                "polygons": {{"a": {{"exterior": [[0,0],[10,0],[10,10],[0,10]]}},
                             "b": {{"exterior": [[5,0],[10,0],[10,10],[5,10]]}}}},
                "workspace": ["a"],
                "fields": {{"f": {{"cells": [{{"polygon": "a", "heading_deg": 0}}, {{"polygon": "b", "heading_deg": 90}}]}}}}}}"#
        );
        let e = World::from_json_str(&src).unwrap_err().to_string();
        assert!(e.contains("overlaps"), "{e}");
    }

    #[test]
    fn schema_errors_carry_paths() {
        let e = World::from_json_str(&minimal(r#", "regions": {"r": {"polygons": ["nope"]}}"#)).unwrap_err();
        assert!(e.to_string().contains("/regions/r/polygons/0"), "{e}");
        let e = World::from_json_str(r#"{"schema": 2}"#).unwrap_err();
        assert!(e.to_string().contains("/schema"), "{e}");
    }

    #[test]
    fn tables() {
        let src = minimal(
            r#", "tables": {"M": {"all": {"map": {"a": {"w": 1}, "b": {"w": 2}}},
                                 "pick": {"uniform_over": "all"},
                                 "weighted": {"discrete_over": "all", "weights": {"a": 1, "b": 3}},
                                 "scale": {"scale_list": 0.5}}}"#,
        );
        let w = World::from_json_str(&src).unwrap();
        let m = &w.tables["M"];
        assert!(matches!(&m["pick"], TableMember::Uniform(v) if v.len() == 2));
        assert!(matches!(&m["weighted"], TableMember::Discrete(v) if v[1].1 == 3.0));
        assert!(matches!(m["scale"], TableMember::Scale(s) if s == 0.5));
    }
}
