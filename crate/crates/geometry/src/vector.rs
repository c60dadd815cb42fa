use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// A point or displacement in the plane, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vector {
    pub x: f64,
    pub y: f64,
}

impl Vector {
    pub const ZERO: Vector = Vector { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vector { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vector) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vector) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn distance(self, o: Vector) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(self, o: Vector) -> Vector {
        Vector::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(self, o: Vector) -> Vector {
        Vector::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        Vector::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(self, k: f64) -> Vector {
        Vector::new(self.x * k, self.y * k)
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {}", self.x, self.y)
    }
}

impl From<Vector> for geo::Coord<f64> {
    fn from(v: Vector) -> Self {
        geo::coord! { x: v.x, y: v.y }
    }
}

impl From<geo::Coord<f64>> for Vector {
    fn from(c: geo::Coord<f64>) -> Self {
        Vector::new(c.x, c.y)
    }
}

/// Rotates `v` anticlockwise by `theta` radians.
pub fn rotate(v: Vector, theta: f64) -> Vector {
    let (s, c) = theta.sin_cos();
    Vector::new(v.x * c - v.y * s, v.x * s + v.y * c)
}

/// Heading of a direction vector. Heading 0 points along +y and grows
/// anticlockwise, so `angle_of(rotate((0,1), h)) == h` for h in (-pi, pi].
pub fn angle_of(v: Vector) -> f64 {
    let a = (-v.x).atan2(v.y);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// `angle_of` rejecting the zero vector, whose direction is undefined.
pub fn try_angle_of(v: Vector) -> Result<f64, crate::GeometryError> {
    if v.x == 0.0 && v.y == 0.0 {
        return Err(crate::GeometryError::DegenerateDirection);
    }
    Ok(angle_of(v))
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Position of the point at local offset `offset` in the frame of a point
/// at `origin` facing `heading`.
pub fn offset_local(origin: Vector, heading: f64, offset: Vector) -> Vector {
    origin + rotate(offset, heading)
}

/// Unit vector pointing along `heading`.
pub fn heading_vector(heading: f64) -> Vector {
    rotate(Vector::new(0.0, 1.0), heading)
}
