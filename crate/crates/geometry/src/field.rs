use geo::algorithm::coordinate_position::{CoordPos, CoordinatePosition};
use geo::{BoundingRect, Coord, Polygon};
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::RTree;

use crate::vector::{normalize_angle, rotate, Vector};
use crate::GeometryError;

/// Steps used by `forward_euler` when following a field.
pub const EULER_STEPS: usize = 4;

#[derive(Debug, Clone)]
pub struct FieldCell {
    pub polygon: Polygon<f64>,
    pub heading: f64,
}

type CellEnvelope = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// Heading field given by polygons of constant heading plus a fallback.
#[derive(Debug, Clone)]
pub struct PiecewiseField {
    cells: Vec<FieldCell>,
    default_heading: f64,
    index: RTree<CellEnvelope>,
}

impl PiecewiseField {
    pub fn new(cells: Vec<FieldCell>, default_heading: f64) -> Self {
        let envelopes = cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| {
                c.polygon.bounding_rect().map(|r| {
                    GeomWithData::new(
                        Rectangle::from_corners([r.min().x, r.min().y], [r.max().x, r.max().y]),
                        i,
                    )
                })
            })
            .collect();
        PiecewiseField { cells, default_heading, index: RTree::bulk_load(envelopes) }
    }

    pub fn cells(&self) -> &[FieldCell] {
        &self.cells
    }

    pub fn default_heading(&self) -> f64 {
        self.default_heading
    }

    /// Index of the first cell containing `p`, boundaries included.
    pub fn cell_at(&self, p: Vector) -> Option<usize> {
        let c: Coord<f64> = p.into();
        self.index
            .locate_all_at_point(&[p.x, p.y])
            .map(|e| e.data)
            .filter(|&i| self.cells[i].polygon.coordinate_position(&c) != CoordPos::Outside)
            .min()
    }

    pub fn at(&self, p: Vector) -> f64 {
        self.cell_at(p).map_or(self.default_heading, |i| self.cells[i].heading)
    }

    /// Relative heading between two cells: f(q) - f(p), normalized.
    pub fn rel_head(&self, p: usize, q: usize) -> Result<f64, GeometryError> {
        let n = self.cells.len();
        if p >= n || q >= n {
            return Err(GeometryError::NotACell);
        }
        Ok(normalize_angle(self.cells[q].heading - self.cells[p].heading))
    }
}

#[derive(Debug, Clone)]
pub enum FieldKind {
    Constant(f64),
    Piecewise(PiecewiseField),
}

/// A named heading field over the plane.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub name: String,
    pub kind: FieldKind,
}

impl VectorField {
    pub fn constant(name: impl Into<String>, heading: f64) -> Self {
        VectorField { name: name.into(), kind: FieldKind::Constant(heading) }
    }

    pub fn piecewise(name: impl Into<String>, cells: Vec<FieldCell>, default_heading: f64) -> Self {
        VectorField { name: name.into(), kind: FieldKind::Piecewise(PiecewiseField::new(cells, default_heading)) }
    }

    pub fn at(&self, p: Vector) -> f64 {
        match &self.kind {
            FieldKind::Constant(h) => *h,
            FieldKind::Piecewise(pw) => pw.at(p),
        }
    }

    pub fn as_piecewise(&self) -> Option<&PiecewiseField> {
        match &self.kind {
            FieldKind::Piecewise(p) => Some(p),
            FieldKind::Constant(_) => None,
        }
    }
}

/// Integrates along the field for `distance` metres in `steps` equal steps.
pub fn forward_euler(start: Vector, distance: f64, field: &VectorField, steps: usize) -> Vector {
    let step = Vector::new(0.0, distance / steps as f64);
    (0..steps).fold(start, |x, _| x + rotate(step, field.at(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use geo::polygon;
    use std::f64::consts::PI;

    fn two_cells() -> VectorField {
        let a = polygon![(x: 0.0, y: 0.0), (x: 10.0, y: 0.0), (x: 10.0, y: 10.0), (x: 0.0, y: 10.0)];
        let b = polygon![(x: 10.0, y: 0.0), (x: 20.0, y: 0.0), (x: 20.0, y: 10.0), (x: 10.0, y: 10.0)];
        VectorField::piecewise(
            "f",
            vec![FieldCell { polygon: a, heading: 0.0 }, FieldCell { polygon: b, heading: PI / 2.0 }],
            -PI / 2.0,
        )
    }

    #[test]
    fn lookup_and_default() {
        let f = two_cells();
        assert_eq!(f.at(Vector::new(5.0, 5.0)), 0.0);
        assert_eq!(f.at(Vector::new(15.0, 5.0)), PI / 2.0);
        // shared edge resolves to the earlier cell
        assert_eq!(f.at(Vector::new(10.0, 5.0)), 0.0);
        assert_eq!(f.at(Vector::new(50.0, 5.0)), -PI / 2.0);
    }

    #[test]
    fn rel_head_is_normalized_difference() {
        let f = two_cells();
        let pw = f.as_piecewise().unwrap();
        assert!((pw.rel_head(0, 1).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((pw.rel_head(1, 0).unwrap() + PI / 2.0).abs() < 1e-12);
        assert!(pw.rel_head(0, 9).is_err());
    }

    #[test]
    fn euler_matches_hand_iteration() {
        let f = two_cells();
        // starting in cell a heading north: four 1 m steps north
        let p = forward_euler(Vector::new(5.0, 1.0), 4.0, &f, EULER_STEPS);
        assert!((p.x - 5.0).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12);
        // in cell b the field points west, so the path leaves b after one step
        let mut x = Vector::new(11.0, 5.0);
        for _ in 0..4 {
            x = x + rotate(Vector::new(0.0, 1.0), f.at(x));
        }
        let q = forward_euler(Vector::new(11.0, 5.0), 4.0, &f, EULER_STEPS);
        assert!((q.x - x.x).abs() < 1e-12 && (q.y - x.y).abs() < 1e-12);
    }

    #[test]
    fn constant_field() {
        let f = VectorField::constant("c", 0.3);
        assert_eq!(f.at(Vector::new(-4.0, 9.0)), 0.3);
        let p = forward_euler(Vector::ZERO, 2.0, &f, EULER_STEPS);
        let e = rotate(Vector::new(0.0, 2.0), 0.3);
        assert!((p.x - e.x).abs() < 1e-12 && (p.y - e.y).abs() < 1e-12);
    }
}
