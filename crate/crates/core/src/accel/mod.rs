//! Rank-local ray intersection: SAH BVHs, two-level instancing, braid splitting.

mod braid;
mod bvh;
mod local;
mod tri;

pub use braid::{braid_split, Fragment};
pub use bvh::{centroid_bounds, sah_split, Bvh, BvhNode, SAH_BINS};
pub use local::{GeometryPiece, Hit, LocalScene};
pub use tri::{intersect_triangle, TriBvh, TriHit, DET_EPSILON};
