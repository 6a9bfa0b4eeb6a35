//! Watertight ray/triangle intersection (shear-transformed edge functions).
//! Rays hitting a shared edge or vertex register on every incident
//! triangle, so closed meshes have no cracks along silhouettes.

use super::Vec3;

/// Precomputed shear for one ray `origin + t * dir`.
#[derive(Debug, Clone, Copy)]
pub struct ShearedRay {
    pub origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl ShearedRay {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        let kz = dir.iamax();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        ShearedRay {
            origin,
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }

    /// Ray parameter of the hit, if any. Parallel and degenerate triangles
    /// never hit.
    #[inline]
    pub fn hit(&self, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);
        let pa = a - self.origin;
        let pb = b - self.origin;
        let pc = c - self.origin;
        let ax = pa[kx] - self.sx * pa[kz];
        let ay = pa[ky] - self.sy * pa[kz];
        let bx = pb[kx] - self.sx * pb[kz];
        let by = pb[ky] - self.sy * pb[kz];
        let cx = pc[kx] - self.sx * pc[kz];
        let cy = pc[ky] - self.sy * pc[kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * pa[kz];
        let bz = self.sz * pb[kz];
        let cz = self.sz * pc[kz];
        let t = (u * az + v * bz + w * cz) / det;
        Some(t)
    }
}

/// Parameter `t` in `[0, 1]` along `a -> b` where the segment meets the
/// triangle, if it does.
pub fn segment_triangle(a: &Vec3, b: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let ray = ShearedRay::new(*a, b - a);
    ray.hit(&tri[0], &tri[1], &tri[2]).filter(|t| (0.0..=1.0).contains(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_tris() -> [[Vec3; 3]; 2] {
        let p = [
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(1.0, -1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.0),
        ];
        [[p[0], p[1], p[2]], [p[0], p[2], p[3]]]
    }

    #[test]
    fn transversal_hit() {
        let t = quad_tris();
        let a = Vec3::new(0.3, -0.2, -1.0);
        let b = Vec3::new(0.3, -0.2, 3.0);
        let hits: Vec<f64> = t.iter().filter_map(|tri| segment_triangle(&a, &b, tri)).collect();
        assert_eq!(hits.len(), 1);
        assert!((hits[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn shared_edge_hits_both_sides() {
        // The diagonal is shared; a ray exactly through it must not slip through.
        let t = quad_tris();
        let a = Vec3::new(0.25, 0.25, -1.0);
        let b = Vec3::new(0.25, 0.25, 1.0);
        let n = t.iter().filter(|tri| segment_triangle(&a, &b, tri).is_some()).count();
        assert!(n >= 1);
    }

    #[test]
    fn miss_outside() {
        let t = quad_tris();
        let a = Vec3::new(1.5, 0.0, -1.0);
        let b = Vec3::new(1.5, 0.0, 1.0);
        assert!(t.iter().all(|tri| segment_triangle(&a, &b, tri).is_none()));
    }

    #[test]
    fn segment_too_short() {
        let t = quad_tris();
        let a = Vec3::new(0.0, 0.5, -1.0);
        let b = Vec3::new(0.0, 0.5, -0.5);
        assert!(t.iter().all(|tri| segment_triangle(&a, &b, tri).is_none()));
    }
}
