use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BoundingSphere, Vec3};

pub const FOV_MARGIN: f64 = 1.05;
pub const MAX_HALF_FOV: f64 = 85.0 * std::f64::consts::PI / 180.0;

/// Pinhole camera with a square image. Camera space has x right, y up and
/// z along the viewing direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    right: Vec3,
    true_up: Vec3,
    forward: Vec3,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, up_hint: Vec3, fov_y: f64) -> Result<Self> {
        let forward = target - position;
        let dist = forward.norm();
        if !(dist > 0.0) || !dist.is_finite() {
            return Err(Error::InvalidInput("camera position coincides with its target".into()));
        }
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(Error::InvalidInput(format!("field of view {fov_y} rad is out of range")));
        }
        let forward = forward / dist;
        let mut up = up_hint;
        if up.norm() == 0.0 || up.normalize().dot(&forward).abs() > 0.99 {
            up = if forward.z.abs() < 0.99 { Vec3::z() } else { Vec3::y() };
        }
        let right = forward.cross(&up).normalize();
        let true_up = right.cross(&forward);
        Ok(Camera {
            position,
            target,
            up,
            fov_y,
            right,
            true_up,
            forward,
        })
    }

    /// Looks at `target` with the field of view widened until `sphere` fits
    /// with a 5% margin.
    pub fn fit(position: Vec3, target: Vec3, sphere: &BoundingSphere) -> Result<Self> {
        let axis = target - position;
        let to_center = sphere.center - position;
        let dc = to_center.norm();
        let off = if axis.norm() > 0.0 && dc > 0.0 {
            axis.angle(&to_center)
        } else {
            0.0
        };
        let spread = if dc > 0.0 {
            (FOV_MARGIN * sphere.radius / dc).min(1.0).asin()
        } else {
            std::f64::consts::FRAC_PI_2
        };
        let half = (off + spread).clamp(1e-3, MAX_HALF_FOV);
        Camera::look_at(position, target, Vec3::z(), 2.0 * half)
    }

    pub fn forward(&self) -> Vec3 {
        self.forward
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let v = p - self.position;
        Vec3::new(v.dot(&self.right), v.dot(&self.true_up), v.dot(&self.forward))
    }

    /// Normalized image-plane coordinates `(x/z, y/z)`; `None` behind the
    /// camera.
    pub fn project(&self, p: &Vec3) -> Option<[f64; 2]> {
        let c = self.to_camera(p);
        (c.z > 0.0).then(|| [c.x / c.z, c.y / c.z])
    }

    /// Continuous pixel coordinates in a `res x res` image (row 0 at the
    /// top) and the camera-space depth.
    pub fn to_pixel(&self, p: &Vec3, res: usize) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        let t = (0.5 * self.fov_y).tan();
        let u = (c.x / (c.z * t) + 1.0) * 0.5 * res as f64;
        let v = (1.0 - c.y / (c.z * t)) * 0.5 * res as f64;
        Some((u, v, c.z))
    }
}
