//! Hidden point removal: spherical flipping about the viewpoint followed by
//! convex hull membership.

mod hull;

pub use hull::{convex_hull3, ConvexHull3};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, PointCloud, Vec3, Viewpoint, VisibilityResult};

/// The three linear-flip settings swept by default (R = 10^gamma * max d).
pub const DEFAULT_GAMMAS: [f64; 3] = [1.0, 2.0, 3.0];
/// Exponents swept for the exponential kernel.
pub const DEFAULT_EXPONENTIAL_GAMMAS: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_HULL_TOLERANCE: f64 = 1e-8;
pub const JITTER_FRACTION: f64 = 1e-9;
pub const MIN_VIEW_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    LinearFlip,
    Exponential,
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear_flip" | "linear-flip" => Ok(Kernel::LinearFlip),
            "exp" | "exponential" => Ok(Kernel::Exponential),
            other => Err(Error::InvalidInput(format!("unknown HPR kernel `{other}`"))),
        }
    }
}

impl Kernel {
    pub fn default_gammas(self) -> [f64; 3] {
        match self {
            Kernel::LinearFlip => DEFAULT_GAMMAS,
            Kernel::Exponential => DEFAULT_EXPONENTIAL_GAMMAS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HprParams {
    pub kernel: Kernel,
    pub gamma: f64,
    /// Fraction of the flipped cloud's bounding-box diagonal.
    pub hull_tolerance: f64,
}

impl HprParams {
    pub fn linear(gamma: f64) -> Self {
        HprParams {
            kernel: Kernel::LinearFlip,
            gamma,
            hull_tolerance: DEFAULT_HULL_TOLERANCE,
        }
    }

    pub fn exponential(gamma: f64) -> Self {
        HprParams {
            kernel: Kernel::Exponential,
            gamma,
            hull_tolerance: DEFAULT_HULL_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!("gamma {} is not finite", self.gamma)));
        }
        if !(self.hull_tolerance > 0.0) {
            return Err(Error::InvalidInput("hull_tolerance must be positive".into()));
        }
        match self.kernel {
            Kernel::LinearFlip if self.gamma <= 0.0 => {
                Err(Error::InvalidInput(format!("linear flip gamma {} must be positive", self.gamma)))
            }
            Kernel::Exponential if !(self.gamma > 0.0 && self.gamma < 1.0) => Err(Error::InvalidInput(format!(
                "exponential gamma {} must lie in (0, 1)",
                self.gamma
            ))),
            _ => Ok(()),
        }
    }
}

impl Default for HprParams {
    fn default() -> Self {
        HprParams::linear(2.0)
    }
}

/// Maps the cloud into the viewpoint frame. Linear flip:
/// `q + 2 (R - d) q / d`; exponential: `(q / d) d^-gamma`.
pub fn spherical_flip(cloud: &PointCloud, vp: &Viewpoint, params: &HprParams) -> Result<Vec<Vec3>> {
    params.validate()?;
    let q: Vec<Vec3> = cloud.points().iter().map(|p| p - vp.position).collect();
    let d: Vec<f64> = q.iter().map(|v| v.norm()).collect();
    if let Some(i) = d.iter().position(|&d| !(d > MIN_VIEW_DISTANCE)) {
        return Err(Error::InvalidInput(format!("point {i} coincides with the viewpoint")));
    }
    Ok(match params.kernel {
        Kernel::LinearFlip => {
            let r = 10f64.powf(params.gamma) * d.iter().copied().fold(0.0, f64::max);
            q.iter().map(|q| linear_flip_point(q, r)).collect()
        }
        Kernel::Exponential => q
            .iter()
            .zip(&d)
            .map(|(q, &d)| q * (d.powf(-params.gamma) / d))
            .collect(),
    })
}

/// Mirror of `q` about the sphere of radius `r` centred at the origin.
pub fn linear_flip_point(q: &Vec3, r: f64) -> Vec3 {
    let d = q.norm();
    q + q * (2.0 * (r - d) / d)
}

fn jitter(points: &mut [Vec3], amplitude: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(points.len() as u64);
    for p in points {
        *p += Vec3::from_fn(|_, _| rng.random_range(-amplitude..=amplitude));
    }
}

/// Hull of the flipped cloud plus the origin. On a degenerate hull the
/// flipped points are jittered once by `JITTER_FRACTION * diag` and retried.
pub fn flipped_hull(cloud: &PointCloud, vp: &Viewpoint, params: &HprParams) -> Result<(Vec<Vec3>, ConvexHull3)> {
    let mut pts = spherical_flip(cloud, vp, params)?;
    pts.push(Vec3::zeros());
    let diag = Aabb::from_points(&pts).diagonal();
    let tol = params.hull_tolerance * diag;
    match convex_hull3(&pts, tol) {
        Err(Error::DegenerateHull(why)) => {
            log::debug!("degenerate hull ({why}); retrying with jitter");
            let n = pts.len() - 1;
            jitter(&mut pts[..n], JITTER_FRACTION * diag);
            let hull = convex_hull3(&pts, tol)?;
            Ok((pts, hull))
        }
        other => Ok((pts, other?)),
    }
}

/// A point is visible iff its flipped image is a hull vertex or within the
/// hull tolerance of a facet plane.
pub fn hpr_visibility(cloud: &PointCloud, vp: &Viewpoint, params: &HprParams) -> Result<VisibilityResult> {
    let (_, hull) = flipped_hull(cloud, vp, params)?;
    let n = cloud.len();
    let mut labels = vec![false; n];
    for &i in hull.vertices().iter().chain(hull.coplanar()) {
        if i < n {
            labels[i] = true;
        }
    }
    Ok(VisibilityResult::from_labels(labels))
}
