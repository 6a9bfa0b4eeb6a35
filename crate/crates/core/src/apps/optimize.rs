use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3, Viewpoint};
use crate::nn::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewMode {
    /// Minimize the occluded fraction.
    Best,
    /// Maximize it.
    Worst,
}

impl std::str::FromStr for ViewMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "best" => Ok(ViewMode::Best),
            "worst" => Ok(ViewMode::Worst),
            _ => Err(Error::InvalidInput(format!("unknown view mode {s:?} (expected best or worst)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeParams {
    pub iterations: usize,
    /// Step length as a fraction of the bounding-sphere radius.
    pub step: f64,
    pub seed: u64,
    pub start: Option<Viewpoint>,
    /// Step halvings tried before an iteration gives up and stays put.
    pub max_halvings: u32,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        OptimizeParams {
            iterations: 100,
            step: 0.02,
            seed: 0,
            start: None,
            max_halvings: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub viewpoint: Viewpoint,
    pub score: f64,
}

fn on_sphere(center: &Vec3, radius: f64, p: &Vec3) -> Option<Vec3> {
    let d = p - center;
    let n = d.norm();
    (n > 0.0).then(|| center + d * (radius / n))
}

/// Projected gradient steps on the bounding sphere. The trajectory starts
/// with the initial viewpoint and has `iterations + 1` entries; each step is
/// shortened until the score does not get worse.
pub fn optimize_view(cloud: &PointCloud, predictor: &Predictor, mode: ViewMode, params: &OptimizeParams) -> Result<Vec<TrajectoryPoint>> {
    if !(params.step > 0.0 && params.step.is_finite()) {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let sphere = cloud.bounding_sphere();
    let (c, r) = (sphere.center, sphere.radius);
    if !(r > 0.0) {
        return Err(Error::DegenerateHull("cloud has zero extent".into()));
    }
    let start = match params.start {
        Some(vp) => on_sphere(&c, r, &vp.position).ok_or_else(|| Error::InvalidInput("start viewpoint is at the sphere center".into()))?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            loop {
                let d = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                if d.norm() > 1e-6 {
                    break c + d.normalize() * r;
                }
            }
        }
    };
    let cache = predictor.features(cloud)?;
    let sign = match mode {
        ViewMode::Best => -1.0,
        ViewMode::Worst => 1.0,
    };
    let better = |new: f64, old: f64| match mode {
        ViewMode::Best => new <= old,
        ViewMode::Worst => new >= old,
    };

    let mut v = start;
    let (mut s, mut g) = predictor.score_and_grad(cloud, &Viewpoint::new(v), Some(&cache))?;
    let mut out = Vec::with_capacity(params.iterations + 1);
    out.push(TrajectoryPoint {
        viewpoint: Viewpoint::new(v),
        score: s,
    });
    for _ in 0..params.iterations {
        let u = (v - c) / r;
        let gt = g - u * g.dot(&u);
        let len = gt.norm();
        if len > 0.0 {
            let dir = gt * (sign / len);
            let mut alpha = params.step * r;
            for _ in 0..=params.max_halvings {
                let Some(cand) = on_sphere(&c, r, &(v + dir * alpha)) else {
                    break;
                };
                let (sc, gc) = predictor.score_and_grad(cloud, &Viewpoint::new(cand), Some(&cache))?;
                if better(sc, s) {
                    v = cand;
                    s = sc;
                    g = gc;
                    break;
                }
                alpha *= 0.5;
            }
        }
        out.push(TrajectoryPoint {
            viewpoint: Viewpoint::new(v),
            score: s,
        });
    }
    Ok(out)
}
