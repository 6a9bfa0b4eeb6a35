//! Point cloud visibility toolkit.
//!
//! Three interchangeable backends decide which points of a cloud are seen
//! from a viewpoint: an exact mesh oracle, hidden point removal, and an
//! octree U-Net feature extractor with a view-conditioned MLP. The
//! applications (view-dependent reconstruction, normal estimation, shadow
//! maps, viewpoint optimization) run on any of them.

extern crate self as pointvis;

pub mod apps;
pub mod backend;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geom;
pub mod hpr;
pub mod io;
pub mod nn;
pub mod octree;
pub mod tensor;

pub use error::{Error, Result};
