use std::f64::consts::PI;

use geo::{MultiPolygon, Polygon};

use crate::field::PiecewiseField;
use crate::region::Region;
use crate::vector::{rotate, Vector};

/// Union of closed angle intervals, each within [-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet {
    intervals: Vec<(f64, f64)>,
}

impl AngleSet {
    pub fn full() -> Self {
        AngleSet { intervals: vec![(-PI, PI)] }
    }

    pub fn empty() -> Self {
        AngleSet { intervals: vec![] }
    }

    pub fn from_intervals(intervals: Vec<(f64, f64)>) -> Self {
        let intervals = intervals
            .into_iter()
            .map(|(a, b)| (a.max(-PI), b.min(PI)))
            .filter(|(a, b)| a <= b)
            .collect();
        AngleSet { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn intersect(&self, other: &AngleSet) -> AngleSet {
        let mut out = Vec::new();
        for &(a, b) in &self.intervals {
            for &(c, d) in &other.intervals {
                let lo = a.max(c);
                let hi = b.min(d);
                if lo <= hi {
                    out.push((lo, hi));
                }
            }
        }
        AngleSet { intervals: out }
    }

    /// Mirror image: the set of `-a` for `a` in this set.
    pub fn negated(&self) -> AngleSet {
        AngleSet { intervals: self.intervals.iter().map(|&(a, b)| (-b, -a)).collect() }
    }

    /// Whether [c - half, c + half] meets the set, modulo 2*pi.
    pub fn meets_window(&self, c: f64, half: f64) -> bool {
        if half >= PI {
            return !self.intervals.is_empty();
        }
        [-2.0 * PI, 0.0, 2.0 * PI].iter().any(|k| {
            let lo = c + k - half;
            let hi = c + k + half;
            self.intervals.iter().any(|&(a, b)| lo <= b && a <= hi)
        })
    }

    pub fn contains(&self, a: f64) -> bool {
        self.meets_window(a, 0.0)
    }
}

fn cell_region(p: &Polygon<f64>) -> Region {
    Region::from_multipolygon(MultiPolygon(vec![p.clone()]))
}

/// Keeps the parts of each cell P lying within `m` of some cell Q whose
/// relative heading f(Q) - f(P), widened by 2*delta, can fall in `allowed`.
pub fn prune_by_heading(field: &PiecewiseField, allowed: &AngleSet, m: f64, delta: f64) -> Region {
    let cells = field.cells();
    let regions: Vec<Region> = cells.iter().map(|c| cell_region(&c.polygon)).collect();
    let dilated: Vec<Region> = regions.iter().map(|r| r.dilate_unchecked(m)).collect();
    let mut out = Region::empty();
    for (pi, p) in regions.iter().enumerate() {
        for (qi, dq) in dilated.iter().enumerate() {
            let rel = field.rel_head(pi, qi).expect("cell indices are in range");
            if !allowed.meets_window(rel, 2.0 * delta) {
                continue;
            }
            let piece = p.intersect(dq);
            if !piece.is_empty() {
                out = out.union(&piece);
            }
        }
    }
    out
}

/// True when no disc of diameter `w` fits inside the polygon.
pub fn narrow(p: &Polygon<f64>, w: f64) -> bool {
    cell_region(p).erode_unchecked(w / 2.0).is_empty()
}

/// Extent of the polygon across the direction `heading`.
pub fn lateral_extent(p: &Polygon<f64>, heading: f64) -> f64 {
    let axis = rotate(Vector::new(1.0, 0.0), heading);
    let (lo, hi) = p.exterior().0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let d = Vector::from(*c).dot(axis);
        (lo.min(d), hi.max(d))
    });
    hi - lo
}

/// Replaces every cell too narrow to hold a configuration spread `min_width`
/// across the field by its part within `m` of some other cell.
pub fn prune_by_width(field: &PiecewiseField, m: f64, min_width: f64) -> Region {
    let cells = field.cells();
    let regions: Vec<Region> = cells.iter().map(|c| cell_region(&c.polygon)).collect();
    let dilated: Vec<Region> = regions.iter().map(|r| r.dilate_unchecked(m)).collect();
    let mut out = Region::empty();
    for (i, cell) in cells.iter().enumerate() {
        let thin = lateral_extent(&cell.polygon, cell.heading) < min_width && narrow(&cell.polygon, min_width);
        let kept = if thin {
            let mut near = Region::empty();
            for (j, d) in dilated.iter().enumerate() {
                if j != i {
                    near = near.union(d);
                }
            }
            regions[i].intersect(&near)
        } else {
            regions[i].clone()
        };
        out = out.union(&kept);
    }
    out
}
