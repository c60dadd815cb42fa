use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use geo::algorithm::coordinate_position::{CoordPos, CoordinatePosition};
use geo::{
    Area, BooleanOps, BoundingRect, ConvexHull, Coord, Intersects, LineString, MultiPoint,
    MultiPolygon, Orient, Polygon, Relate, TriangulateEarcut,
};
use rand::Rng;

use crate::field::VectorField;
use crate::vector::Vector;
use crate::GeometryError;

/// Grid onto which every coordinate produced by a boolean operation is snapped.
pub const SNAP: f64 = 1e-9;

/// Vertex count of the polygons standing in for discs.
pub const DISC_SEGMENTS: usize = 64;

/// Areas below this are treated as empty.
pub const AREA_EPS: f64 = 1e-9;

fn snap_coord(c: Coord<f64>) -> Coord<f64> {
    geo::coord! { x: (c.x / SNAP).round() * SNAP, y: (c.y / SNAP).round() * SNAP }
}

fn snap_ring(ls: &LineString<f64>) -> LineString<f64> {
    let mut out: Vec<Coord<f64>> = Vec::with_capacity(ls.0.len());
    for c in ls.0.iter().copied().map(snap_coord) {
        if out.last() != Some(&c) {
            out.push(c);
        }
    }
    LineString(out)
}

fn snap_mp(mp: MultiPolygon<f64>) -> MultiPolygon<f64> {
    let polys = mp
        .0
        .into_iter()
        .map(|p| {
            let ext = snap_ring(p.exterior());
            let holes = p.interiors().iter().map(snap_ring).filter(|r| r.0.len() >= 4).collect();
            Polygon::new(ext, holes)
        })
        .filter(|p| p.exterior().0.len() >= 4 && p.unsigned_area() > AREA_EPS)
        .collect();
    MultiPolygon(polys)
}

fn polygon_from_points(points: &[Vector]) -> Polygon<f64> {
    let coords: Vec<Coord<f64>> = points.iter().map(|&v| v.into()).collect();
    Polygon::new(LineString::from(coords), vec![]).orient(geo::orient::Direction::Default)
}

#[derive(Debug)]
struct TriangleTable {
    tris: Vec<[Vector; 3]>,
    cumulative: Vec<f64>,
}

impl TriangleTable {
    fn build(mp: &MultiPolygon<f64>) -> Self {
        let mut tris = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for poly in &mp.0 {
            for t in poly.earcut_triangles() {
                let a = Vector::from(t.v1());
                let b = Vector::from(t.v2());
                let c = Vector::from(t.v3());
                let area = 0.5 * (b - a).cross(c - a).abs();
                if area <= 0.0 {
                    continue;
                }
                acc += area;
                tris.push([a, b, c]);
                cumulative.push(acc);
            }
        }
        TriangleTable { tris, cumulative }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vector> {
        let total = *self.cumulative.last()?;
        let target = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= target).min(self.tris.len() - 1);
        let [a, b, c] = self.tris[idx];
        let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        Some(a + (b - a) * u + (c - a) * v)
    }
}

/// A closed planar set made of polygons with holes, optionally carrying a
/// preferred orientation field.
#[derive(Clone)]
pub struct Region {
    shape: MultiPolygon<f64>,
    orientation: Option<Arc<VectorField>>,
    tris: Arc<OnceLock<TriangleTable>>,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("polygons", &self.shape.0.len())
            .field("area", &self.area())
            .field("oriented", &self.orientation.is_some())
            .finish()
    }
}

impl Region {
    fn raw(shape: MultiPolygon<f64>) -> Self {
        Region { shape, orientation: None, tris: Arc::new(OnceLock::new()) }
    }

    pub fn empty() -> Self {
        Region::raw(MultiPolygon(vec![]))
    }

    /// Normalizes arbitrary input polygons: orientation fixed, overlaps merged,
    /// coordinates snapped.
    pub fn from_polygons(polys: Vec<Polygon<f64>>) -> Result<Self, GeometryError> {
        for p in &polys {
            for c in p.exterior().0.iter().chain(p.interiors().iter().flat_map(|r| r.0.iter())) {
                if !c.x.is_finite() || !c.y.is_finite() {
                    return Err(GeometryError::NonFinite);
                }
            }
            if p.exterior().0.len() < 4 {
                return Err(GeometryError::Degenerate("polygon needs at least 3 vertices".into()));
            }
        }
        let oriented: Vec<Polygon<f64>> =
            polys.into_iter().map(|p| p.orient(geo::orient::Direction::Default)).collect();
        let merged = geo::unary_union(oriented.iter());
        Ok(Region::raw(snap_mp(merged)))
    }

    /// Wraps an already clean multipolygon.
    pub fn from_multipolygon(mp: MultiPolygon<f64>) -> Self {
        Region::raw(snap_mp(mp))
    }

    pub fn from_points(points: &[Vector]) -> Result<Self, GeometryError> {
        Region::from_polygons(vec![polygon_from_points(points)])
    }

    pub fn rectangle(min: Vector, max: Vector) -> Self {
        let poly = polygon_from_points(&[
            min,
            Vector::new(max.x, min.y),
            max,
            Vector::new(min.x, max.y),
        ]);
        Region::raw(MultiPolygon(vec![poly]))
    }

    /// Convex polygon approximating a disc; inscribed when `outer` is false,
    /// circumscribed otherwise.
    pub fn disc(center: Vector, radius: f64, outer: bool) -> Self {
        Region::raw(MultiPolygon(vec![polygon_from_points(&disc_points(center, radius, outer))]))
    }

    pub fn with_orientation(mut self, field: Option<Arc<VectorField>>) -> Self {
        self.orientation = field;
        self
    }

    pub fn orientation(&self) -> Option<&Arc<VectorField>> {
        self.orientation.as_ref()
    }

    pub fn polygons(&self) -> &MultiPolygon<f64> {
        &self.shape
    }

    pub fn area(&self) -> f64 {
        self.shape.unsigned_area()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.0.is_empty() || self.area() <= AREA_EPS
    }

    pub fn bounds(&self) -> Option<(Vector, Vector)> {
        self.shape.bounding_rect().map(|r| (r.min().into(), r.max().into()))
    }

    pub fn contains_point(&self, p: Vector) -> bool {
        let c: Coord<f64> = p.into();
        self.shape.0.iter().any(|poly| poly.coordinate_position(&c) != CoordPos::Outside)
    }

    /// True when the polygon lies inside the region, boundary contact allowed.
    pub fn covers_polygon(&self, poly: &Polygon<f64>) -> bool {
        if self.shape.0.is_empty() {
            return false;
        }
        poly.relate(&self.shape).is_coveredby()
    }

    pub fn intersects_polygon(&self, poly: &Polygon<f64>) -> bool {
        self.shape.intersects(poly)
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.shape.intersects(&other.shape)
    }

    /// Intersection; keeps this region's orientation.
    pub fn intersect(&self, other: &Region) -> Region {
        let shape = if self.shape.0.is_empty() || other.shape.0.is_empty() {
            MultiPolygon(vec![])
        } else {
            snap_mp(self.shape.intersection(&other.shape))
        };
        Region::raw(shape).with_orientation(self.orientation.clone())
    }

    pub fn union(&self, other: &Region) -> Region {
        let shape = if other.shape.0.is_empty() {
            self.shape.clone()
        } else if self.shape.0.is_empty() {
            other.shape.clone()
        } else {
            snap_mp(self.shape.union(&other.shape))
        };
        Region::raw(shape).with_orientation(self.orientation.clone())
    }

    pub fn difference(&self, other: &Region) -> Region {
        let shape = if self.shape.0.is_empty() || other.shape.0.is_empty() {
            self.shape.clone()
        } else {
            snap_mp(self.shape.difference(&other.shape))
        };
        Region::raw(shape).with_orientation(self.orientation.clone())
    }

    /// Minkowski sum with a disc of radius `d`. The disc is replaced by a
    /// circumscribed polygon, so the result always contains the exact dilation.
    pub fn dilate(&self, d: f64) -> Result<Region, GeometryError> {
        check_distance(d)?;
        Ok(self.dilate_unchecked(d))
    }

    pub(crate) fn dilate_unchecked(&self, d: f64) -> Region {
        if d <= 0.0 || self.shape.0.is_empty() {
            return self.clone();
        }
        let band = boundary_band(&self.shape, d, true);
        let mut all: Vec<Polygon<f64>> = self.shape.0.clone();
        all.extend(band);
        Region::raw(snap_mp(geo::unary_union(all.iter()))).with_orientation(self.orientation.clone())
    }

    /// Points whose distance to the complement exceeds `d`. The removed band
    /// is built from inscribed discs, so the result contains the exact erosion
    /// (it may keep a sliver of at most `d * (1 - cos(pi/64))` beyond it).
    pub fn erode(&self, d: f64) -> Result<Region, GeometryError> {
        check_distance(d)?;
        Ok(self.erode_unchecked(d))
    }

    pub(crate) fn erode_unchecked(&self, d: f64) -> Region {
        if d <= 0.0 || self.shape.0.is_empty() {
            return self.clone();
        }
        let band = MultiPolygon(boundary_band(&self.shape, d, false));
        let band = geo::unary_union(band.0.iter());
        Region::raw(snap_mp(self.shape.difference(&band))).with_orientation(self.orientation.clone())
    }

    /// Uniform sample over the region's area; `None` for an empty region.
    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vector> {
        if self.is_empty() {
            return None;
        }
        self.tris.get_or_init(|| TriangleTable::build(&self.shape)).sample(rng)
    }
}

fn check_distance(d: f64) -> Result<(), GeometryError> {
    if d < 0.0 || !d.is_finite() {
        return Err(GeometryError::NegativeDistance(d));
    }
    Ok(())
}

pub(crate) fn disc_points(center: Vector, radius: f64, outer: bool) -> Vec<Vector> {
    let n = DISC_SEGMENTS;
    let r = if outer { radius / (PI / n as f64).cos() } else { radius };
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            center + Vector::new(r * t.cos(), r * t.sin())
        })
        .collect()
}

/// Hulls of every boundary edge swept by a disc polygon.
fn boundary_band(mp: &MultiPolygon<f64>, d: f64, outer: bool) -> Vec<Polygon<f64>> {
    let disc = disc_points(Vector::ZERO, d, outer);
    let mut out = Vec::new();
    for poly in &mp.0 {
        for ring in std::iter::once(poly.exterior()).chain(poly.interiors().iter()) {
            for seg in ring.lines() {
                let a = Vector::from(seg.start);
                let b = Vector::from(seg.end);
                let pts: Vec<geo::Point<f64>> = disc
                    .iter()
                    .flat_map(|&o| [a + o, b + o])
                    .map(|v| geo::Point::new(v.x, v.y))
                    .collect();
                out.push(MultiPoint(pts).convex_hull());
            }
        }
    }
    out
}

/// Corners of an oriented box, anticlockwise starting from back-right.
pub fn box_corners(center: Vector, heading: f64, width: f64, height: f64) -> [Vector; 4] {
    let hw = width / 2.0;
    let hh = height / 2.0;
    let c = |x: f64, y: f64| crate::offset_local(center, heading, Vector::new(x, y));
    [c(hw, -hh), c(hw, hh), c(-hw, hh), c(-hw, -hh)]
}

pub fn box_polygon(center: Vector, heading: f64, width: f64, height: f64) -> Polygon<f64> {
    polygon_from_points(&box_corners(center, heading, width, height))
}

/// Bounding box of an object, rejecting non-positive dimensions.
pub fn bounding_box(center: Vector, heading: f64, width: f64, height: f64) -> Result<Polygon<f64>, GeometryError> {
    if !(width > 0.0 && height > 0.0) {
        return Err(GeometryError::Degenerate(format!("box dimensions {width} x {height}")));
    }
    Ok(box_polygon(center, heading, width, height))
}

/// Separating-axis test on two convex quadrilaterals; touching counts as overlap.
pub fn boxes_overlap(a: &[Vector; 4], b: &[Vector; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let e = poly[(i + 1) % 4] - poly[i];
            let axis = Vector::new(-e.y, e.x);
            let proj = |q: &[Vector; 4]| {
                q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p.dot(axis);
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
    }
    true
}
