use rayon::prelude::*;

use super::{Aabb, Bvh, PointCloud, TriangleMesh, Viewpoint, VisibilityResult};
use crate::error::Result;

/// Fraction of the bounding-box diagonal trimmed from both segment ends so a
/// sample does not hit its own face.
pub const SELF_EXCLUSION_FRACTION: f64 = 1e-4;

pub fn self_exclusion_eps(bounds: &Aabb) -> f64 {
    SELF_EXCLUSION_FRACTION * bounds.diagonal()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLabels {
    pub visibility: VisibilityResult,
    /// Set when the viewpoint lies inside the closed surface; labels are
    /// still computed.
    pub viewpoint_inside: bool,
    pub skipped_degenerate: usize,
}

/// Exact segment-occlusion labeling against a mesh. Holds the BVH so many
/// viewpoints can be labeled without rebuilding it.
#[derive(Debug, Clone)]
pub struct VisibilityOracle {
    bvh: Bvh,
    eps: f64,
}

impl VisibilityOracle {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        let bvh = Bvh::build(mesh)?;
        Ok(VisibilityOracle {
            bvh,
            eps: self_exclusion_eps(&mesh.aabb()),
        })
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn label(&self, cloud: &PointCloud, vp: &Viewpoint) -> OracleLabels {
        let labels: Vec<bool> = cloud
            .points()
            .par_iter()
            .map(|p| !self.bvh.segment_hits(p, &vp.position, self.eps))
            .collect();
        let prob = labels.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let viewpoint_inside = self.bvh.contains_point(&vp.position);
        if viewpoint_inside {
            log::warn!("viewpoint {:?} lies inside the mesh", vp.position.as_slice());
        }
        OracleLabels {
            visibility: VisibilityResult {
                labels,
                prob_visible: Some(prob),
            },
            viewpoint_inside,
            skipped_degenerate: self.bvh.degenerate_triangles().len(),
        }
    }
}

pub fn ground_truth_visibility(mesh: &TriangleMesh, cloud: &PointCloud, vp: &Viewpoint) -> Result<OracleLabels> {
    Ok(VisibilityOracle::new(mesh)?.label(cloud, vp))
}
