use std::f64::consts::PI;

use crate::region::{Region, DISC_SEGMENTS};
use crate::vector::{angle_of, heading_vector, normalize_angle, rotate, Vector};

const ANGLE_EPS: f64 = 1e-12;

/// Closed circular sector. An `angle` of 2*pi or more is a full disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub center: Vector,
    pub radius: f64,
    pub heading: f64,
    pub angle: f64,
}

impl Sector {
    pub fn new(center: Vector, radius: f64, heading: f64, angle: f64) -> Self {
        Sector { center, radius, heading, angle }
    }

    pub fn disc(center: Vector, radius: f64) -> Self {
        Sector { center, radius, heading: 0.0, angle: 2.0 * PI }
    }

    pub fn is_full(&self) -> bool {
        self.angle >= 2.0 * PI - ANGLE_EPS
    }

    fn within_aperture(&self, p: Vector) -> bool {
        if self.is_full() {
            return true;
        }
        let d = p - self.center;
        if d.norm() == 0.0 {
            return true;
        }
        normalize_angle(angle_of(d) - self.heading).abs() <= self.angle / 2.0 + ANGLE_EPS
    }

    pub fn contains_point(&self, p: Vector) -> bool {
        if self.radius < 0.0 {
            return false;
        }
        p.distance(self.center) <= self.radius * (1.0 + 1e-12) && self.within_aperture(p)
    }

    fn edge_points(&self) -> (Vector, Vector) {
        let a = self.center + heading_vector(self.heading - self.angle / 2.0) * self.radius;
        let b = self.center + heading_vector(self.heading + self.angle / 2.0) * self.radius;
        (a, b)
    }

    /// Exact intersection test against a closed convex polygon given by its
    /// vertices in either winding.
    pub fn intersects_convex(&self, poly: &[Vector]) -> bool {
        if self.radius < 0.0 || poly.is_empty() {
            return false;
        }
        if point_in_convex(self.center, poly) {
            return true;
        }
        if poly.iter().any(|&v| self.contains_point(v)) {
            return true;
        }
        let n = poly.len();
        let edges = (0..n).map(|i| (poly[i], poly[(i + 1) % n]));
        if !self.is_full() {
            let (a, b) = self.edge_points();
            for (p, q) in edges.clone() {
                if segments_intersect(self.center, a, p, q) || segments_intersect(self.center, b, p, q) {
                    return true;
                }
            }
        }
        for (p, q) in edges {
            for t in segment_circle(p, q, self.center, self.radius) {
                if self.within_aperture(p + (q - p) * t) {
                    return true;
                }
            }
        }
        false
    }

    /// What a viewer at `position` sees: a sector when it has a heading,
    /// otherwise a full disc.
    pub fn visible_region(position: Vector, heading: Option<f64>, distance: f64, angle: f64) -> Self {
        match heading {
            Some(h) => Sector::new(position, distance, h, angle.min(2.0 * PI)),
            None => Sector::disc(position, distance),
        }
    }

    /// Polygon inscribed in the sector, with vertices on the arc spaced at
    /// most 2*pi/64 apart.
    pub fn to_region(&self) -> Region {
        if self.radius <= 0.0 {
            return Region::empty();
        }
        if self.is_full() {
            return Region::disc(self.center, self.radius, false);
        }
        let steps = ((DISC_SEGMENTS as f64) * self.angle / (2.0 * PI)).ceil().max(1.0) as usize;
        let mut pts = vec![self.center];
        for i in 0..=steps {
            let t = self.heading - self.angle / 2.0 + self.angle * i as f64 / steps as f64;
            pts.push(self.center + rotate(Vector::new(0.0, self.radius), t));
        }
        Region::from_points(&pts).unwrap_or_else(|_| Region::empty())
    }
}

fn point_in_convex(p: Vector, poly: &[Vector]) -> bool {
    let n = poly.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = (b - a).cross(p - a);
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

fn orient(a: Vector, b: Vector, c: Vector) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vector, b: Vector, p: Vector) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed segment intersection.
pub fn segments_intersect(a: Vector, b: Vector, c: Vector, d: Vector) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Parameters in [0, 1] where segment p->q meets the circle.
fn segment_circle(p: Vector, q: Vector, c: Vector, r: f64) -> Vec<f64> {
    let d = q - p;
    let f = p - c;
    let a = d.dot(d);
    if a == 0.0 {
        return vec![];
    }
    let b = 2.0 * f.dot(d);
    let cc = f.dot(f) - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
        .into_iter()
        .filter(|t| (-1e-12..=1.0 + 1e-12).contains(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::box_corners;
    use proptest::prelude::*;

    #[test]
    fn sector_membership() {
        let s = Sector::new(Vector::ZERO, 10.0, 0.0, PI / 2.0);
        assert!(s.contains_point(Vector::new(0.0, 5.0)));
        assert!(s.contains_point(Vector::new(-3.0, 5.0)));
        assert!(!s.contains_point(Vector::new(-6.0, 5.0)));
        assert!(!s.contains_point(Vector::new(0.0, -1.0)));
        assert!(!s.contains_point(Vector::new(0.0, 10.5)));
    }

    #[test]
    fn box_straddling_edge_is_seen() {
        let s = Sector::new(Vector::ZERO, 10.0, 0.0, PI / 2.0);
        // box centred outside the cone with a corner poking in
        let b = box_corners(Vector::new(6.5, 5.0), 0.0, 2.0, 2.0);
        assert!(s.intersects_convex(&b));
        let far = box_corners(Vector::new(9.0, 5.0), 0.0, 2.0, 2.0);
        assert!(!s.intersects_convex(&far));
    }

    #[test]
    fn arc_crossing_edge_counts() {
        let s = Sector::new(Vector::ZERO, 10.0, 0.0, 0.2);
        // wide box crossing the arc; no vertex inside, no radius hit
        let b = [
            Vector::new(-5.0, 9.9),
            Vector::new(5.0, 9.9),
            Vector::new(5.0, 12.0),
            Vector::new(-5.0, 12.0),
        ];
        assert!(s.intersects_convex(&b));
    }

    #[test]
    fn inscribed_polygon_is_inside() {
        let s = Sector::new(Vector::new(1.0, 2.0), 5.0, 0.7, 80f64.to_radians());
        let r = s.to_region();
        let exact = 0.5 * 25.0 * 80f64.to_radians();
        assert!(r.area() <= exact && r.area() > exact * 0.99);
    }

    proptest! {
        #[test]
        fn intersects_matches_sampling(
            x in -12.0f64..12.0, y in -12.0f64..12.0, h in -3.0f64..3.0, ap in 0.1f64..6.5,
        ) {
            let s = Sector::new(Vector::ZERO, 8.0, 0.4, ap);
            let b = box_corners(Vector::new(x, y), h, 1.5, 3.0);
            // any sampled box point inside the sector implies intersection
            let mut hit = false;
            for i in 0..=20 {
                for j in 0..=20 {
                    let u = i as f64 / 20.0;
                    let v = j as f64 / 20.0;
                    let p = b[0] + (b[1] - b[0]) * u + (b[3] - b[0]) * v;
                    if s.contains_point(p) { hit = true; }
                }
            }
            if hit {
                prop_assert!(s.intersects_convex(&b));
            }
        }
    }
}
