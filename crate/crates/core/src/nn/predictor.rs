//! Per-cloud feature extraction and per-viewpoint prediction.

use std::borrow::Cow;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::head::{softmax, Head, Workspace};
use super::unet::UNet;
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3, Viewpoint, VisibilityResult};
use crate::hpr::MIN_VIEW_DISTANCE;
use crate::octree::{build_octree, normalize, SplatWeights};
use crate::tensor::{Matrix, Real};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Per-point features for one (cloud, model) pair.
#[derive(Debug)]
pub struct FeatureCache {
    key: u64,
    features: Matrix<f32>,
    wide: OnceLock<Matrix<f64>>,
}

impl FeatureCache {
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    fn wide(&self) -> &Matrix<f64> {
        self.wide.get_or_init(|| self.features.cast())
    }
}

impl Clone for FeatureCache {
    fn clone(&self) -> Self {
        FeatureCache {
            key: self.key,
            features: self.features.clone(),
            wide: OnceLock::new(),
        }
    }
}

/// Per-point `(visible, invisible)` logit pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T = f32> {
    pub values: Vec<[T; 2]>,
}

impl<T: Real> Logits<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn probabilities(&self) -> Vec<(f64, f64)> {
        self.values.iter().map(|p| softmax(p[0].to_f64(), p[1].to_f64())).collect()
    }

    /// Argmax labels; ties count as visible.
    pub fn labels(&self) -> Vec<bool> {
        self.values.iter().map(|p| p[0] >= p[1]).collect()
    }

    pub fn to_result(&self) -> VisibilityResult {
        VisibilityResult {
            labels: self.labels(),
            prob_visible: Some(self.probabilities().into_iter().map(|p| p.0).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Predictor {
    weights: Arc<ModelWeights>,
    weights_hash: u64,
    unet: UNet<f32>,
    head32: Head<f32>,
    head64: Head<f64>,
}

fn hash_weights(w: &ModelWeights) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for name in w.names() {
        name.hash(&mut h);
        let t = w.tensor(name).expect("listed tensor");
        t.dims.hash(&mut h);
        for v in &t.data {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn directions(cloud: &PointCloud, vp: &Viewpoint) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
    let mut dirs = Vec::with_capacity(cloud.len());
    let mut dist = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points().iter().enumerate() {
        let v = vp.position - p;
        let r = v.norm();
        if !(r > MIN_VIEW_DISTANCE) {
            return Err(Error::InvalidInput(format!("viewpoint coincides with point {i}")));
        }
        let d = v / r;
        dirs.push([d.x, d.y, d.z]);
        dist.push(r);
    }
    Ok((dirs, dist))
}

impl Predictor {
    pub fn new(weights: ModelWeights) -> Result<Self> {
        Predictor::from_arc(Arc::new(weights))
    }

    pub fn from_arc(weights: Arc<ModelWeights>) -> Result<Self> {
        Ok(Predictor {
            weights_hash: hash_weights(&weights),
            unet: UNet::new(&weights)?,
            head32: Head::new(&weights)?,
            head64: Head::new(&weights)?,
            weights,
        })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    /// Content hash of the cloud and the model.
    pub fn cache_key(&self, cloud: &PointCloud) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.weights_hash.hash(&mut h);
        cloud.len().hash(&mut h);
        for p in cloud.points() {
            for v in p.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        if let Some(ns) = cloud.normals() {
            for n in ns {
                for v in n.iter() {
                    v.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Runs the U-Net once and splats leaf features to the points.
    pub fn features(&self, cloud: &PointCloud) -> Result<FeatureCache> {
        let d = self.weights.descriptor();
        let mut input = cloud.clone();
        if d.in_channels == 3 {
            input = input.without_normals();
        } else if cloud.normals().is_none() {
            return Err(Error::InvalidInput("the model expects per-point normals".into()));
        }
        let nc = normalize(&input);
        let oct = build_octree(&nc, d.octree_depth)?;
        let leaf = self.unet.forward(&oct)?;
        let features = SplatWeights::new(&oct, &nc)?.apply(&leaf)?;
        Ok(FeatureCache {
            key: self.cache_key(cloud),
            features,
            wide: OnceLock::new(),
        })
    }

    fn resolve<'a>(&self, cloud: &PointCloud, cache: Option<&'a FeatureCache>) -> Result<Cow<'a, FeatureCache>> {
        match cache {
            Some(c) if c.key == self.cache_key(cloud) && c.features.rows() == cloud.len() => Ok(Cow::Borrowed(c)),
            Some(_) => Err(Error::CacheMismatch),
            None => Ok(Cow::Owned(self.features(cloud)?)),
        }
    }

    fn run_logits<T: Real>(head: &Head<T>, feats: &Matrix<T>, dirs: &[[f64; 3]]) -> Vec<[T; 2]> {
        let f = feats.cols();
        let parts: Vec<Vec<[T; 2]>> = dirs
            .par_chunks(CHUNK)
            .enumerate()
            .map_init(Workspace::new, |ws, (ci, d)| {
                let rows = &feats.data()[ci * CHUNK * f..(ci * CHUNK + d.len()) * f];
                head.forward(rows, d, ws);
                ws.logits().chunks_exact(2).map(|p| [p[0], p[1]]).collect()
            })
            .collect();
        parts.concat()
    }

    pub fn logits(&self, cloud: &PointCloud, vp: &Viewpoint, cache: Option<&FeatureCache>) -> Result<Logits<f32>> {
        let cache = self.resolve(cloud, cache)?;
        let (dirs, _) = directions(cloud, vp)?;
        Ok(Logits {
            values: Self::run_logits(&self.head32, &cache.features, &dirs),
        })
    }

    pub fn logits_f64(&self, cloud: &PointCloud, vp: &Viewpoint, cache: Option<&FeatureCache>) -> Result<Logits<f64>> {
        let cache = self.resolve(cloud, cache)?;
        let (dirs, _) = directions(cloud, vp)?;
        Ok(Logits {
            values: Self::run_logits(&self.head64, cache.wide(), &dirs),
        })
    }

    pub fn predict(&self, cloud: &PointCloud, vp: &Viewpoint, cache: Option<&FeatureCache>) -> Result<VisibilityResult> {
        self.predict_with(cloud, vp, cache, Precision::F32)
    }

    pub fn predict_with(
        &self,
        cloud: &PointCloud,
        vp: &Viewpoint,
        cache: Option<&FeatureCache>,
        precision: Precision,
    ) -> Result<VisibilityResult> {
        Ok(match precision {
            Precision::F32 => self.logits(cloud, vp, cache)?.to_result(),
            Precision::F64 => self.logits_f64(cloud, vp, cache)?.to_result(),
        })
    }

    /// Mean invisible probability, evaluated in double precision.
    pub fn invisibility_score(&self, cloud: &PointCloud, vp: &Viewpoint, cache: Option<&FeatureCache>) -> Result<f64> {
        let logits = self.logits_f64(cloud, vp, cache)?;
        let sum: f64 = logits.values.iter().map(|p| softmax(p[0], p[1]).1).sum();
        Ok(sum / cloud.len() as f64)
    }

    /// Score and its analytic gradient with respect to the viewpoint; point
    /// features are held constant.
    pub fn score_and_grad(&self, cloud: &PointCloud, vp: &Viewpoint, cache: Option<&FeatureCache>) -> Result<(f64, Vec3)> {
        let cache = self.resolve(cloud, cache)?;
        let (dirs, dist) = directions(cloud, vp)?;
        let feats = cache.wide();
        let f = feats.cols();
        let n = cloud.len();
        let inv_n = 1.0 / n as f64;
        let head = &self.head64;
        let parts: Vec<(f64, Vec3)> = dirs
            .par_chunks(CHUNK)
            .enumerate()
            .map_init(Workspace::new, |ws, (ci, d)| {
                let start = ci * CHUNK;
                let rows = &feats.data()[start * f..(start + d.len()) * f];
                head.forward(rows, d, ws);
                let score: f64 = ws.logits().chunks_exact(2).map(|p| softmax(p[0], p[1]).1).sum();
                let gd = head.backward(rows, d, ws, inv_n);
                let mut g = Vec3::zeros();
                for (i, (gdi, di)) in gd.iter().zip(d).enumerate() {
                    // d/dvp of (vp - p)/r is (I - d d^T)/r.
                    let dot = gdi[0] * di[0] + gdi[1] * di[1] + gdi[2] * di[2];
                    let r = dist[start + i];
                    for a in 0..3 {
                        g[a] += (gdi[a] - di[a] * dot) / r;
                    }
                }
                (score, g)
            })
            .collect();
        let mut score = 0.0;
        let mut grad = Vec3::zeros();
        for (s, g) in parts {
            score += s;
            grad += g;
        }
        Ok((score * inv_n, grad))
    }

    pub fn invisibility_grad(&self, cloud: &PointCloud, vp: &Viewpoint, cache: Option<&FeatureCache>) -> Result<Vec3> {
        Ok(self.score_and_grad(cloud, vp, cache)?.1)
    }
}

pub fn predict_visibility(
    cloud: &PointCloud,
    vp: &Viewpoint,
    weights: &ModelWeights,
    cache: Option<&FeatureCache>,
) -> Result<VisibilityResult> {
    Predictor::new(weights.clone())?.predict(cloud, vp, cache)
}

pub fn invisibility_score(
    cloud: &PointCloud,
    vp: &Viewpoint,
    weights: &ModelWeights,
    cache: Option<&FeatureCache>,
) -> Result<f64> {
    Predictor::new(weights.clone())?.invisibility_score(cloud, vp, cache)
}

pub fn invisibility_grad(
    cloud: &PointCloud,
    vp: &Viewpoint,
    weights: &ModelWeights,
    cache: Option<&FeatureCache>,
) -> Result<Vec3> {
    Predictor::new(weights.clone())?.invisibility_grad(cloud, vp, cache)
}
