//! Planar geometry for scenes of oriented boxes: vectors and headings,
//! polygonal regions, sectors, heading fields and region pruning.

mod field;
mod prune;
mod region;
mod sector;
mod vector;

pub use field::{forward_euler, FieldCell, FieldKind, PiecewiseField, VectorField, EULER_STEPS};
pub use prune::{lateral_extent, narrow, prune_by_heading, prune_by_width, AngleSet};
pub use region::{bounding_box, box_corners, box_polygon, boxes_overlap, Region, AREA_EPS, DISC_SEGMENTS, SNAP};
pub use sector::{segments_intersect, Sector};
pub use vector::{angle_of, heading_vector, normalize_angle, offset_local, rotate, try_angle_of, Vector};

pub use geo::{Coord, LineString, MultiPolygon, Polygon};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("direction of the zero vector is undefined")]
    DegenerateDirection,
    #[error("negative buffer distance {0}")]
    NegativeDistance(f64),
    #[error("polygon is not a cell of the field")]
    NotACell,
}
