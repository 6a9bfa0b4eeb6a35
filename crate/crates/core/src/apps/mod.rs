//! Applications built on per-viewpoint visibility.

pub mod camera;
pub mod delaunay;
pub mod export;
pub mod normals;
pub mod optimize;
pub mod reconstruct;
pub mod shadow;

pub use camera::Camera;
pub use delaunay::delaunay2;
pub use normals::{cube_directions, estimate_normals, normal_viewpoints, view_normals, NormalParams};
pub use optimize::{optimize_view, OptimizeParams, TrajectoryPoint, ViewMode};
pub use reconstruct::{reconstruct_view, reconstruct_with_camera, view_camera, ViewMesh, DEFAULT_EDGE_THRESHOLD};
pub use shadow::{render_shadow, ShadowMap, ShadowParams};
