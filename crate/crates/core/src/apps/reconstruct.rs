use super::camera::Camera;
use super::delaunay::delaunay2;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3, Viewpoint, VisibilityResult};

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.03;

/// Triangles over visible points of a cloud, one world-space unit normal per
/// triangle facing the viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMesh {
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Vec3>,
}

impl ViewMesh {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Indices of referenced points in increasing order.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.triangles.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Camera used for view-dependent projection: at the viewpoint, aimed at
/// the cloud centroid, field of view fitted to the bounding sphere.
pub fn view_camera(cloud: &PointCloud, vp: &Viewpoint) -> Result<Camera> {
    Camera::fit(vp.position, cloud.centroid(), &cloud.bounding_sphere())
}

pub fn reconstruct_view(cloud: &PointCloud, vis: &VisibilityResult, vp: &Viewpoint, edge_threshold: f64) -> Result<ViewMesh> {
    reconstruct_with_camera(cloud, vis, &view_camera(cloud, vp)?, edge_threshold)
}

pub fn reconstruct_with_camera(cloud: &PointCloud, vis: &VisibilityResult, cam: &Camera, edge_threshold: f64) -> Result<ViewMesh> {
    if vis.len() != cloud.len() {
        return Err(Error::Shape(format!("{} labels for {} points", vis.len(), cloud.len())));
    }
    if !(edge_threshold > 0.0) {
        return Err(Error::InvalidInput("edge threshold must be positive".into()));
    }
    let mut ids = Vec::new();
    let mut proj = Vec::new();
    for i in vis.visible_indices() {
        if let Some(q) = cam.project(&cloud.points()[i]) {
            ids.push(i);
            proj.push(q);
        }
    }
    if ids.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            have: ids.len(),
        });
    }
    let max_edge = edge_threshold * cloud.aabb().diagonal();
    let pts = cloud.points();
    let mut triangles = Vec::new();
    let mut normals = Vec::new();
    for t in delaunay2(&proj)? {
        let tri = t.map(|k| ids[k]);
        let [a, b, c] = tri.map(|i| pts[i]);
        if (b - a).norm() > max_edge || (c - b).norm() > max_edge || (a - c).norm() > max_edge {
            continue;
        }
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if !(len > 0.0) {
            continue;
        }
        let mut n = n / len;
        if n.dot(&(cam.position - (a + b + c) / 3.0)) < 0.0 {
            n = -n;
        }
        triangles.push(tri);
        normals.push(n);
    }
    Ok(ViewMesh { triangles, normals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::predicates::incircle;
    use std::collections::HashMap;

    #[test]
    fn three_points_give_one_triangle() {
        let cloud = PointCloud::from_points(vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]).unwrap();
        let vis = VisibilityResult::from_labels(vec![true; 3]);
        let m = reconstruct_view(&cloud, &vis, &Viewpoint::at(0.3, 0.3, 5.0), 1.0).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.normals[0] - Vec3::z()).norm() < 1e-12);
        let few = VisibilityResult::from_labels(vec![true, false, true]);
        assert!(matches!(reconstruct_view(&cloud, &few, &Viewpoint::at(0.3, 0.3, 5.0), 1.0), Err(Error::InsufficientPoints { .. })));
    }

    #[test]
    fn head_on_grid_is_delaunay_and_covers_the_hull() {
        let n = 12;
        let pts: Vec<Vec3> = (0..n).flat_map(|i| (0..n).map(move |j| Vec3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0))).collect();
        let cloud = PointCloud::from_points(pts).unwrap();
        let vis = VisibilityResult::from_labels(vec![true; cloud.len()]);
        let vp = Viewpoint::new(cloud.centroid() + Vec3::new(0.0, 0.0, 4.0));
        let cam = view_camera(&cloud, &vp).unwrap();
        let m = reconstruct_view(&cloud, &vis, &vp, 10.0).unwrap();
        let proj: Vec<[f64; 2]> = cloud.points().iter().map(|p| cam.project(p).unwrap()).collect();
        for t in &m.triangles {
            let [a, b, c] = t.map(|i| proj[i]);
            let (a, b) = if crate::geom::predicates::orient2d(a, b, c) > 0.0 { (a, b) } else { (b, a) };
            for (i, q) in proj.iter().enumerate() {
                if !t.contains(&i) {
                    assert!(incircle(a, b, c, *q) <= 1e-9);
                }
            }
        }
        assert!(m.vertices().len() == cloud.len());
        assert!(m.normals.iter().all(|n| n.z > 0.999));
    }

    #[test]
    fn hemisphere_is_a_disk() {
        let mesh = crate::geom::shapes::icosphere(10);
        let cloud = crate::geom::sample_surface(&mesh, 3000, 4).unwrap();
        let vp = Viewpoint::at(0.0, 0.0, 3.0);
        let vis = VisibilityResult::from_labels(cloud.points().iter().map(|p| p.z > 0.35).collect());
        let m = reconstruct_view(&cloud, &vis, &vp, 0.15).unwrap();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(edges.values().all(|&c| c <= 2));
        let boundary: Vec<_> = edges.iter().filter(|(_, &c)| c == 1).map(|(e, _)| *e).collect();
        let mut bverts: Vec<usize> = boundary.iter().flat_map(|&(a, b)| [a, b]).collect();
        bverts.sort_unstable();
        bverts.dedup();
        assert!(!boundary.is_empty());
        assert_eq!(boundary.len(), bverts.len());
        assert!(m.triangles.iter().flatten().all(|&i| vis.labels[i]));
    }
}
