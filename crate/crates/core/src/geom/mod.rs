//! Core geometric types, BVH segment queries, ground-truth visibility
//! labeling, surface and viewpoint sampling, and noise augmentation.

mod bvh;
mod intersect;
mod mesh;
mod oracle;
mod sampling;
pub mod predicates;
pub mod shapes;

pub use bvh::{Bvh, BvhNode};
pub use intersect::segment_triangle;
pub use mesh::TriangleMesh;
pub use oracle::{ground_truth_visibility, self_exclusion_eps, OracleLabels, VisibilityOracle};
pub use sampling::{add_noise, sample_surface, sample_viewpoints};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on the Euclidean norm of stored unit normals.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }

    pub fn contains(&self, p: &Vec3, slack: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - slack && p[k] <= self.max[k] + slack)
    }

    /// Slab test of the segment `origin + t * dir`, `t` in `[t0, t1]`.
    pub fn intersects_segment(&self, origin: &Vec3, inv_dir: &Vec3, t0: f64, t1: f64) -> bool {
        let mut lo = t0;
        let mut hi = t1;
        for k in 0..3 {
            if inv_dir[k].is_infinite() {
                // Segment parallel to this slab.
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return false;
                }
                continue;
            }
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            lo = lo.max(near);
            hi = hi.min(far);
            if lo > hi {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl BoundingSphere {
    /// Ritter's approximation followed by one refinement pass that shrinks
    /// the radius to the farthest point from the final center.
    pub fn ritter(points: &[Vec3]) -> Self {
        assert!(!points.is_empty());
        let farthest = |from: &Vec3| {
            points
                .iter()
                .max_by(|a, b| (*a - from).norm_squared().total_cmp(&(*b - from).norm_squared()))
                .copied()
                .unwrap()
        };
        let y = farthest(&points[0]);
        let z = farthest(&y);
        let mut center = (y + z) * 0.5;
        let mut radius = (z - y).norm() * 0.5;
        for p in points {
            let d = (p - center).norm();
            if d > radius {
                let new_radius = (radius + d) * 0.5;
                center += (p - center) * ((new_radius - radius) / d);
                radius = new_radius;
            }
        }
        let refined = points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0f64, f64::max);
        BoundingSphere {
            center,
            radius: refined,
        }
    }
}

/// Point positions with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if let Some(i) = n.iter().position(|v| (v.norm() - 1.0).abs() > NORMAL_TOLERANCE) {
                return Err(Error::InvalidInput(format!("normal {i} is not unit length")));
            }
        }
        Ok(PointCloud { points, normals })
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn without_normals(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: None,
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }

    pub fn bounding_sphere(&self) -> BoundingSphere {
        BoundingSphere::ritter(&self.points)
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }

    /// Keeps the points whose mask entry is set.
    pub fn select(&self, mask: &[bool]) -> Result<PointCloud> {
        let points = self
            .points
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(p, _)| *p)
            .collect();
        let normals = self.normals.as_ref().map(|n| {
            n.iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v)
                .collect()
        });
        PointCloud::new(points, normals)
    }

    /// Applies `p -> scale * p + offset` to every point; normals are kept.
    pub fn similarity(&self, scale: f64, offset: &Vec3) -> Result<PointCloud> {
        if !(scale > 0.0) {
            return Err(Error::InvalidInput("similarity scale must be positive".into()));
        }
        let points = self.points.iter().map(|p| p * scale + offset).collect();
        PointCloud::new(points, self.normals.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Viewpoint {
    pub position: Vec3,
}

impl Viewpoint {
    pub fn new(position: Vec3) -> Self {
        Viewpoint { position }
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Viewpoint {
            position: Vec3::new(x, y, z),
        }
    }
}

/// Per-point visibility for one viewpoint. `true` means visible.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityResult {
    pub labels: Vec<bool>,
    pub prob_visible: Option<Vec<f64>>,
}

impl VisibilityResult {
    pub fn from_labels(labels: Vec<bool>) -> Self {
        VisibilityResult {
            labels,
            prob_visible: None,
        }
    }

    /// Labels are derived as `prob >= 0.5`.
    pub fn from_probabilities(prob_visible: Vec<f64>) -> Self {
        let labels = prob_visible.iter().map(|&p| p >= 0.5).collect();
        VisibilityResult {
            labels,
            prob_visible: Some(prob_visible),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.labels.iter().filter(|&&v| v).count()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }
}

/// Unit vector of `v`, or `None` when its norm is zero or not finite.
pub(crate) fn try_normalize(v: &Vec3) -> Option<Vec3> {
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v / n)
}
