use kiddo::{ImmutableKdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reconstruct::{reconstruct_view, DEFAULT_EDGE_THRESHOLD};
use crate::backend::{PreparedCloud, VisibilityBackend};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3, Viewpoint};

/// Viewpoints sit outside the surface only when farther than the cloud's
/// bounding radius; at one radius they are tangent or slightly inside.
pub const DEFAULT_DISTANCE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub edge_threshold: f64,
    /// Viewpoint distance from the bounding-sphere center, in radii.
    pub distance_factor: f64,
}

impl Default for NormalParams {
    fn default() -> Self {
        NormalParams {
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            distance_factor: DEFAULT_DISTANCE_FACTOR,
        }
    }
}

/// The 26 directions of the 3x3x3 neighborhood offsets, normalized.
pub fn cube_directions() -> Vec<Vec3> {
    let mut out = Vec::with_capacity(26);
    for dx in -1..=1 {
        for dy in -1..=1 {
            for dz in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out.push(Vec3::new(dx as f64, dy as f64, dz as f64).normalize());
                }
            }
        }
    }
    out
}

pub fn normal_viewpoints(cloud: &PointCloud, params: &NormalParams) -> Vec<Viewpoint> {
    let s = cloud.bounding_sphere();
    cube_directions()
        .into_iter()
        .map(|d| Viewpoint::new(s.center + d * (s.radius * params.distance_factor)))
        .collect()
}

/// Per-point normals from the view meshes of one viewpoint, each facing the
/// viewpoint; `None` where the point has no incident triangle.
pub fn view_normals(
    cloud: &PointCloud,
    prepared: &dyn PreparedCloud,
    vp: &Viewpoint,
    edge_threshold: f64,
) -> Result<Vec<Option<Vec3>>> {
    let vis = prepared.visibility(vp)?;
    let mut acc = vec![Vec3::zeros(); cloud.len()];
    let mesh = match reconstruct_view(cloud, &vis, vp, edge_threshold) {
        Ok(m) => m,
        Err(Error::InsufficientPoints { .. } | Error::DegenerateTriangulation(_)) => {
            return Ok(vec![None; cloud.len()]);
        }
        Err(e) => return Err(e),
    };
    for (t, n) in mesh.triangles.iter().zip(&mesh.normals) {
        for &i in t {
            acc[i] += n;
        }
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let len = v.norm();
            if !(len > 0.0) {
                return None;
            }
            let mut n = v / len;
            if n.dot(&(vp.position - cloud.points()[i])) < 0.0 {
                n = -n;
            }
            Some(n)
        })
        .collect())
}

/// Multi-view normal estimation. Per-view normals are sign-aligned and
/// averaged; the result faces the side seen by the majority of views.
/// An even split is broken by making the first non-zero component positive.
/// Points no view covers take the normal of the nearest covered point.
pub fn estimate_normals(cloud: &PointCloud, backend: &dyn VisibilityBackend, params: &NormalParams) -> Result<Vec<Vec3>> {
    let prepared = backend.prepare(cloud)?;
    let views = normal_viewpoints(cloud, params);
    let per_view: Vec<Vec<Option<Vec3>>> = views
        .par_iter()
        .map(|vp| view_normals(cloud, prepared.as_ref(), vp, params.edge_threshold))
        .collect::<Result<_>>()?;

    let mut out: Vec<Option<Vec3>> = vec![None; cloud.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut reference: Option<Vec3> = None;
        let mut sum = Vec3::zeros();
        let mut votes = 0i64;
        for view in &per_view {
            if let Some(n) = view[i] {
                let r = *reference.get_or_insert(n);
                if n.dot(&r) >= 0.0 {
                    sum += n;
                    votes += 1;
                } else {
                    sum -= n;
                    votes -= 1;
                }
            }
        }
        let len = sum.norm();
        if len > 0.0 {
            let n = sum / len;
            let flip = match votes.cmp(&0) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                // Even split: the first non-zero component is made positive.
                std::cmp::Ordering::Equal => n.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0),
            };
            *slot = Some(if flip { -n } else { n });
        }
    }

    let donors: Vec<usize> = (0..cloud.len()).filter(|&i| out[i].is_some()).collect();
    if donors.is_empty() {
        return Err(Error::NoVisiblePoints);
    }
    if donors.len() < cloud.len() {
        let coords: Vec<[f64; 3]> = donors.iter().map(|&i| cloud.points()[i].into()).collect();
        let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&coords);
        let filled: Vec<Vec3> = (0..cloud.len())
            .into_par_iter()
            .map(|i| match out[i] {
                Some(n) => n,
                None => {
                    let q: [f64; 3] = cloud.points()[i].into();
                    let nn = tree.nearest_one::<SquaredEuclidean>(&q);
                    out[donors[nn.item as usize]].unwrap()
                }
            })
            .collect();
        return Ok(filled);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{HprBackend, OracleBackend};
    use crate::geom::{sample_surface, shapes, TriangleMesh};
    use crate::hpr::HprParams;
    use std::sync::Arc;

    #[test]
    fn twenty_six_unit_directions() {
        let d = cube_directions();
        assert_eq!(d.len(), 26);
        assert!(d.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mesh = Arc::new(shapes::icosphere(16));
        let cloud = sample_surface(&mesh, 4000, 2).unwrap();
        let backend = OracleBackend::new(mesh);
        let normals = estimate_normals(&cloud, &backend, &NormalParams::default()).unwrap();
        let mean: f64 = normals.iter().zip(cloud.points()).map(|(n, p)| n.dot(&p.normalize())).sum::<f64>() / cloud.len() as f64;
        assert!(mean >= 0.93, "mean cosine {mean}");
        assert!(normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn two_sided_sheet_uses_majority_side() {
        let grid = shapes::planar_grid(1.0, 20);
        let tilt = Vec3::new(0.3, 0.2, 1.0).normalize();
        let rot = nalgebra::Rotation3::rotation_between(&Vec3::z(), &tilt).unwrap();
        let mesh: TriangleMesh = grid.transformed(|p| rot * p + Vec3::new(0.0, 0.0, 0.2));
        let cloud = sample_surface(&mesh, 3000, 5).unwrap();
        let backend = HprBackend::new(HprParams::linear(3.0)).unwrap();
        let all_visible = VisibleEverywhere;
        for b in [&backend as &dyn VisibilityBackend, &all_visible] {
            let normals = estimate_normals(&cloud, b, &NormalParams::default()).unwrap();
            let min_cos = normals.iter().map(|n| n.dot(&tilt).abs()).fold(1.0, f64::min);
            assert!(min_cos >= 0.99, "{min_cos}");
        }
    }

    struct VisibleEverywhere;
    struct AllLabels(usize);
    impl PreparedCloud for AllLabels {
        fn visibility(&self, _: &Viewpoint) -> Result<crate::geom::VisibilityResult> {
            Ok(crate::geom::VisibilityResult::from_labels(vec![true; self.0]))
        }
    }
    impl VisibilityBackend for VisibleEverywhere {
        fn name(&self) -> &str {
            "all"
        }
        fn prepare<'a>(&'a self, cloud: &'a PointCloud) -> Result<Box<dyn PreparedCloud + 'a>> {
            Ok(Box::new(AllLabels(cloud.len())))
        }
    }

    #[test]
    fn single_view_faces_the_viewpoint() {
        let mesh = Arc::new(shapes::cuboid(Vec3::new(1.0, 0.7, 0.5)));
        let cloud = sample_surface(&mesh, 2000, 3).unwrap();
        let backend = OracleBackend::new(mesh);
        let prepared = backend.prepare(&cloud).unwrap();
        let vp = Viewpoint::at(3.0, 2.0, 2.5);
        let normals = view_normals(&cloud, prepared.as_ref(), &vp, DEFAULT_EDGE_THRESHOLD).unwrap();
        let mut seen = 0;
        for (n, p) in normals.iter().zip(cloud.points()) {
            if let Some(n) = n {
                seen += 1;
                assert!(n.dot(&(vp.position - p)) > 0.0);
            }
        }
        assert!(seen > 100);
    }
}
