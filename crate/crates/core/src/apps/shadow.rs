use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::reconstruct::{reconstruct_with_camera, view_camera, ViewMesh, DEFAULT_EDGE_THRESHOLD};
use crate::backend::VisibilityBackend;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3, Viewpoint};

pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_BIAS_FRACTION: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowParams {
    pub resolution: usize,
    /// Depth bias as a fraction of the scene's bounding-box diagonal.
    pub bias_fraction: f64,
    pub edge_threshold: f64,
}

impl Default for ShadowParams {
    fn default() -> Self {
        ShadowParams {
            resolution: DEFAULT_RESOLUTION,
            bias_fraction: DEFAULT_BIAS_FRACTION,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }
}

/// Light-space depth image; uncovered texels hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowMap {
    pub resolution: usize,
    pub depth: Vec<f64>,
    pub camera: Camera,
    pub bias: f64,
    /// Triangle that won each texel, as pixel-space corners with depth.
    owner: Vec<u32>,
    corners: Vec<[(f64, f64, f64); 3]>,
}

const NO_OWNER: u32 = u32::MAX;

/// Perspective-correct depth of the triangle's plane at pixel `(px, py)`.
fn plane_depth(c: &[(f64, f64, f64); 3], px: f64, py: f64) -> Option<f64> {
    let [(u0, v0, z0), (u1, v1, z1), (u2, v2, z2)] = *c;
    let area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0);
    if area == 0.0 {
        return None;
    }
    let w0 = ((u1 - px) * (v2 - py) - (u2 - px) * (v1 - py)) / area;
    let w1 = ((u2 - px) * (v0 - py) - (u0 - px) * (v2 - py)) / area;
    let w2 = 1.0 - w0 - w1;
    let inv = w0 / z0 + w1 / z1 + w2 / z2;
    (inv > 0.0 && inv.is_finite()).then(|| 1.0 / inv)
}

impl ShadowMap {
    pub fn new(camera: Camera, resolution: usize, bias: f64) -> Self {
        ShadowMap {
            resolution,
            depth: vec![f64::INFINITY; resolution * resolution],
            camera,
            bias,
            owner: vec![NO_OWNER; resolution * resolution],
            corners: Vec::new(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.resolution + x]
    }

    pub fn covered(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }

    /// Nearest-depth rasterization with perspective-correct interpolation,
    /// sampled at texel centers.
    pub fn rasterize(&mut self, points: &[Vec3], mesh: &ViewMesh) {
        let res = self.resolution;
        for t in &mesh.triangles {
            let Some(c) = t
                .iter()
                .map(|&i| self.camera.to_pixel(&points[i], res))
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            let c = [c[0], c[1], c[2]];
            let (u0, v0, _) = c[0];
            let (u1, v1, _) = c[1];
            let (u2, v2, _) = c[2];
            let area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0);
            if area == 0.0 {
                continue;
            }
            let xmin = u0.min(u1).min(u2).floor().max(0.0) as usize;
            let ymin = v0.min(v1).min(v2).floor().max(0.0) as usize;
            let xmax = (u0.max(u1).max(u2).ceil().max(0.0) as usize).min(res);
            let ymax = (v0.max(v1).max(v2).ceil().max(0.0) as usize).min(res);
            let slack = -1e-9 * area.abs();
            let id = self.corners.len() as u32;
            let mut won = false;
            for y in ymin..ymax {
                for x in xmin..xmax {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let w0 = ((u1 - px) * (v2 - py) - (u2 - px) * (v1 - py)) / area;
                    let w1 = ((u2 - px) * (v0 - py) - (u0 - px) * (v2 - py)) / area;
                    let w2 = 1.0 - w0 - w1;
                    if w0 * area.abs() < slack || w1 * area.abs() < slack || w2 * area.abs() < slack {
                        continue;
                    }
                    let Some(z) = plane_depth(&c, px, py) else {
                        continue;
                    };
                    let k = y * res + x;
                    if z < self.depth[k] {
                        self.depth[k] = z;
                        self.owner[k] = id;
                        won = true;
                    }
                }
            }
            if won {
                self.corners.push(c);
            }
        }
    }

    /// Map depth under `p`: the plane of the texel's winning triangle
    /// evaluated at the exact image position of `p`, so a surface point
    /// compares against its own surface rather than the texel center.
    /// `None` outside the image.
    pub fn sample(&self, p: &Vec3) -> Option<(f64, f64)> {
        let (u, v, z) = self.camera.to_pixel(p, self.resolution)?;
        if !(u >= 0.0 && v >= 0.0 && u < self.resolution as f64 && v < self.resolution as f64) {
            return None;
        }
        let k = v as usize * self.resolution + u as usize;
        let d = match self.owner[k] {
            NO_OWNER => f64::INFINITY,
            t => plane_depth(&self.corners[t as usize], u, v).unwrap_or(self.depth[k]),
        };
        Some((z, d))
    }

    /// Lit unless the point sits deeper than the map sample plus bias.
    pub fn is_lit(&self, p: &Vec3) -> bool {
        match self.sample(p) {
            Some((z, d)) => z <= d + self.bias,
            None => true,
        }
    }
}

pub fn render_shadow(
    cloud: &PointCloud,
    backend: &dyn VisibilityBackend,
    light: &Viewpoint,
    params: &ShadowParams,
) -> Result<(ShadowMap, Vec<bool>)> {
    if params.resolution == 0 {
        return Err(Error::InvalidInput("shadow map resolution must be positive".into()));
    }
    let sphere = cloud.bounding_sphere();
    if (light.position - sphere.center).norm() <= sphere.radius {
        return Err(Error::InvalidInput("the light must lie outside the bounding sphere".into()));
    }
    let camera = view_camera(cloud, light)?;
    let vis = backend.visibility(cloud, light)?;
    let mesh = reconstruct_with_camera(cloud, &vis, &camera, params.edge_threshold)?;
    let mut map = ShadowMap::new(camera, params.resolution, params.bias_fraction * cloud.aabb().diagonal());
    map.rasterize(cloud.points(), &mesh);
    let lit = cloud.points().iter().map(|p| map.is_lit(p)).collect();
    Ok((map, lit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{HprBackend, OracleBackend};
    use crate::geom::{sample_surface, shapes, TriangleMesh};
    use crate::hpr::HprParams;
    use std::sync::Arc;

    const QUAD_CELLS: u32 = 50;

    fn floor_and_quad() -> (TriangleMesh, PointCloud, usize) {
        let floor = shapes::planar_grid(2.0, 40);
        let quad = shapes::planar_grid(0.5, QUAD_CELLS).transformed(|p| p + Vec3::new(0.2, -0.1, 1.0));
        let quad_pts: Vec<Vec3> = quad.vertices().to_vec();
        let floor_cloud = sample_surface(&floor, 6000, 1).unwrap();
        let mut pts = floor_cloud.points().to_vec();
        let n_floor = pts.len();
        pts.extend(quad_pts);
        let mut mesh = floor;
        mesh.append(&quad);
        (mesh, PointCloud::from_points(pts).unwrap(), n_floor)
    }

    #[test]
    fn one_occluder_footprint() {
        let (mesh, cloud, n_floor) = floor_and_quad();
        let light = Viewpoint::at(0.0, 0.0, 6.0);
        let backend = OracleBackend::new(Arc::new(mesh));
        let (map, lit) = render_shadow(&cloud, &backend, &light, &ShadowParams::default()).unwrap();
        // Points within two texels plus one occluder sample spacing of the
        // footprint border are not scored: the reconstructed quad may stop
        // one sample short of its true edge.
        let texel = 2.0 * (0.5 * map.camera.fov_y).tan() * 6.0 / map.resolution as f64;
        let s = 5.0 / 6.0;
        let m = 2.0 * texel * s + 1.0 / QUAD_CELLS as f64;
        let mut wrong = 0;
        let mut scored = 0;
        for (i, p) in cloud.points()[..n_floor].iter().enumerate() {
            let (dx, dy) = ((p.x * s - 0.2).abs(), (p.y * s + 0.1).abs());
            let inside = dx < 0.5 - m && dy < 0.5 - m;
            let outside = dx > 0.5 + m || dy > 0.5 + m;
            if !inside && !outside {
                continue;
            }
            scored += 1;
            if lit[i] == inside {
                wrong += 1;
            }
        }
        assert!(scored > n_floor * 9 / 10);
        assert_eq!(wrong, 0);
        assert!(lit[n_floor..].iter().all(|&l| l));
    }

    #[test]
    fn unoccluded_scene_is_fully_lit() {
        let mesh = shapes::planar_grid(1.0, 10);
        let cloud = sample_surface(&mesh, 3000, 2).unwrap();
        let backend = HprBackend::new(HprParams::linear(3.0)).unwrap();
        let (map, lit) = render_shadow(&cloud, &backend, &Viewpoint::at(0.3, 0.2, 4.0), &ShadowParams::default()).unwrap();
        assert!(map.covered() > 0);
        assert!(lit.iter().all(|&l| l));
        assert!(render_shadow(&cloud, &backend, &Viewpoint::at(0.0, 0.0, 0.1), &ShadowParams::default()).is_err());
    }

    #[test]
    fn points_seen_from_the_light_are_lit() {
        let mesh = Arc::new(shapes::torus(1.0, 0.4, 32, 16));
        let cloud = sample_surface(&mesh, 5000, 6).unwrap();
        let backend = OracleBackend::new(mesh);
        let light = Viewpoint::at(2.0, -1.5, 2.5);
        let vis = backend.visibility(&cloud, &light).unwrap();
        let (_, lit) = render_shadow(&cloud, &backend, &light, &ShadowParams::default()).unwrap();
        let covered = vis.labels.iter().zip(&lit).filter(|(v, l)| **v && !**l).count();
        assert_eq!(covered, 0);
        assert!(lit.iter().any(|l| !l));
    }

    #[test]
    fn sphere_shadow_matches_tangent_cone() {
        let (r, h, light_h, half) = (0.5, 1.0, 6.0, 2.0);
        let floor = shapes::planar_grid(half, 40);
        let ball = shapes::icosphere(12).transformed(|p| p * r + Vec3::new(0.0, 0.0, h));
        let floor_cloud = sample_surface(&floor, 20000, 3).unwrap();
        let ball_cloud = sample_surface(&ball, 3000, 4).unwrap();
        let n_floor = floor_cloud.len();
        let pts: Vec<Vec3> = floor_cloud.points().iter().chain(ball_cloud.points()).copied().collect();
        let cloud = PointCloud::from_points(pts).unwrap();
        let mut mesh = floor;
        mesh.append(&ball);
        let backend = OracleBackend::new(Arc::new(mesh));
        let light = Viewpoint::at(0.0, 0.0, light_h);
        let (_, lit) = render_shadow(&cloud, &backend, &light, &ShadowParams::default()).unwrap();
        let shadowed = lit[..n_floor].iter().filter(|&&l| !l).count();
        let measured = (shadowed as f64 / n_floor as f64 * (2.0 * half) * (2.0 * half) / std::f64::consts::PI).sqrt();
        let alpha = (r / (light_h - h)).asin();
        let expect = light_h * alpha.tan();
        assert!((measured - expect).abs() / expect < 0.05, "{measured} vs {expect}");
    }
}
