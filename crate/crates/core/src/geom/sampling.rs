use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{try_normalize, PointCloud, TriangleMesh, Vec3, Viewpoint};
use crate::error::{Error, Result};

/// Area-weighted uniform samples with the source face normals.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for t in 0..mesh.triangles().len() {
        total += mesh.area(t);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidMesh("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let t = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.corners(t);
        let s = rng.random::<f64>().sqrt();
        let r: f64 = rng.random();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r)) + c * (s * r));
        normals.push(mesh.face_cross(t).normalize());
    }
    PointCloud::new(points, Some(normals))
}

/// Uniform directions on the cloud's bounding sphere.
pub fn sample_viewpoints(cloud: &PointCloud, n: usize, seed: u64) -> Result<Vec<Viewpoint>> {
    let sphere = cloud.bounding_sphere();
    if !(sphere.radius > 0.0) {
        return Err(Error::InvalidInput("bounding sphere has zero radius".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(d) = try_normalize(&g) {
            out.push(Viewpoint::new(sphere.center + d * sphere.radius));
        }
    }
    Ok(out)
}

/// Maximum supported noise level (fraction of the bounding-box diagonal).
pub const MAX_NOISE_LEVEL: f64 = 0.1;

/// Independent uniform perturbation of each coordinate in
/// `[-level * diag, level * diag]`. Normals are dropped.
pub fn add_noise(cloud: &PointCloud, level: f64, seed: u64) -> Result<PointCloud> {
    if !(0.0..=MAX_NOISE_LEVEL).contains(&level) {
        return Err(Error::InvalidInput(format!(
            "noise level {level} outside [0, {MAX_NOISE_LEVEL}]"
        )));
    }
    let amplitude = level * cloud.aabb().diagonal();
    if amplitude == 0.0 {
        return Ok(cloud.without_normals());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| p + Vec3::from_fn(|_, _| rng.random_range(-amplitude..=amplitude)))
        .collect();
    PointCloud::from_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    fn unit_square() -> TriangleMesh {
        // Unequal split so the area ratio test is not trivially symmetric.
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.3, 0.0, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 4, 3], [4, 1, 2], [4, 2, 3]]).unwrap()
    }

    #[test]
    fn density_follows_area() {
        let mesh = unit_square();
        let n = 100_000;
        let cloud = sample_surface(&mesh, n, 7).unwrap();
        let mut counts = [0usize; 3];
        for p in cloud.points() {
            // Classify against the three triangles by barycentric containment.
            let t = (0..3)
                .find(|&t| {
                    let [a, b, c] = mesh.corners(t);
                    barycentric_inside(p, &a, &b, &c, 1e-12)
                })
                .expect("sample lies on some triangle");
            counts[t] += 1;
        }
        let areas: Vec<f64> = (0..3).map(|t| mesh.area(t)).collect();
        let mut chi2 = 0.0;
        for t in 0..3 {
            let expected = n as f64 * areas[t];
            assert!((counts[t] as f64 - expected).abs() / expected < 0.02);
            chi2 += (counts[t] as f64 - expected).powi(2) / expected;
        }
        // 2 degrees of freedom; 99.9th percentile is 13.8.
        assert!(chi2 < 13.8, "chi2 = {chi2}");
    }

    pub(crate) fn barycentric_inside(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, tol: f64) -> bool {
        let v0 = b - a;
        let v1 = c - a;
        let v2 = p - a;
        let d00 = v0.dot(&v0);
        let d01 = v0.dot(&v1);
        let d11 = v1.dot(&v1);
        let d20 = v2.dot(&v0);
        let d21 = v2.dot(&v1);
        let den = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / den;
        let w = (d00 * d21 - d01 * d20) / den;
        let u = 1.0 - v - w;
        let plane = (v0.cross(&v1)).normalize().dot(&v2).abs();
        u >= -tol && v >= -tol && w >= -tol && plane <= tol
    }

    #[test]
    fn single_sample_lies_on_mesh() {
        let mesh = shapes::icosphere(2);
        let cloud = sample_surface(&mesh, 1, 3).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points()[0];
        assert!((0..mesh.triangles().len()).any(|t| {
            let [a, b, c] = mesh.corners(t);
            barycentric_inside(&p, &a, &b, &c, 1e-9)
        }));
    }

    #[test]
    fn sampling_is_deterministic() {
        let mesh = shapes::torus(1.0, 0.25, 16, 8);
        let a = sample_surface(&mesh, 500, 11).unwrap();
        let b = sample_surface(&mesh, 500, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&mesh, 500, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_area_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::new(2.0, 0.0, 0.0)];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(sample_surface(&mesh, 10, 0), Err(Error::InvalidMesh(_))));
        assert!(sample_surface(&shapes::icosphere(1), 0, 0).is_err());
    }

    #[test]
    fn viewpoints_on_bounding_sphere() {
        let cloud = sample_surface(&shapes::capsule(0.5, 1.0, 16), 2000, 1).unwrap();
        let s = cloud.bounding_sphere();
        let vps = sample_viewpoints(&cloud, 10_000, 5).unwrap();
        let mut mean = Vec3::zeros();
        for v in &vps {
            let d = v.position - s.center;
            assert!((d.norm() - s.radius).abs() < 1e-9);
            mean += d / s.radius;
        }
        mean /= vps.len() as f64;
        assert!(mean.norm() < 0.05, "mean direction {}", mean.norm());
    }

    #[test]
    fn degenerate_cloud_has_no_viewpoints() {
        let cloud = PointCloud::from_points(vec![Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        assert!(matches!(sample_viewpoints(&cloud, 4, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn noise_bounds() {
        let cloud = sample_surface(&shapes::icosphere(3), 3000, 2).unwrap();
        let zero = add_noise(&cloud, 0.0, 9).unwrap();
        assert_eq!(zero.points(), cloud.points());
        assert!(zero.normals().is_none());

        let s = cloud.aabb().diagonal();
        let noisy = add_noise(&cloud, 0.02, 9).unwrap();
        let max = cloud
            .points()
            .iter()
            .zip(noisy.points())
            .flat_map(|(a, b)| (a - b).iter().map(|c| c.abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        assert!(max <= 0.02 * s);
        assert!(max > 0.015 * s);
        assert_eq!(noisy, add_noise(&cloud, 0.02, 9).unwrap());
        assert!(add_noise(&cloud, 0.2, 9).is_err());
        assert!(add_noise(&cloud, -0.01, 9).is_err());
    }
}
