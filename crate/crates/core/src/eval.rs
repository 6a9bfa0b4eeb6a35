//! Accuracy metrics against ground-truth labels.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::VisibilityBackend;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3, Viewpoint, VisibilityResult};
use crate::hpr::{hpr_visibility, HprParams, Kernel};

/// Confusion counts for one comparison. Positive means visible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub visible: usize,
    pub invisible: usize,
    /// Visible points predicted invisible.
    pub false_negatives: usize,
    /// Invisible points predicted visible.
    pub false_positives: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.visible + self.invisible
    }

    pub fn errors(&self) -> usize {
        self.false_negatives + self.false_positives
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            1.0
        } else {
            1.0 - self.errors() as f64 / self.total() as f64
        }
    }

    pub fn false_negative_rate(&self) -> f64 {
        ratio(self.false_negatives, self.visible)
    }

    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.false_positives, self.invisible)
    }

    pub fn merge(&self, o: &Counts) -> Counts {
        Counts {
            visible: self.visible + o.visible,
            invisible: self.invisible + o.invisible,
            false_negatives: self.false_negatives + o.false_negatives,
            false_positives: self.false_positives + o.false_positives,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Counts over the points where `mask` is true (all points when `None`).
pub fn confusion(pred: &VisibilityResult, truth: &VisibilityResult, mask: Option<&[bool]>) -> Result<Counts> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if let Some(m) = mask {
        if m.len() != truth.len() {
            return Err(Error::Shape(format!("mask of {} for {} labels", m.len(), truth.len())));
        }
    }
    let mut c = Counts::default();
    for (i, (&p, &t)) in pred.labels.iter().zip(&truth.labels).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if t {
            c.visible += 1;
            c.false_negatives += usize::from(!p);
        } else {
            c.invisible += 1;
            c.false_positives += usize::from(p);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub viewpoint: usize,
    pub position: [f64; 3],
    pub counts: Counts,
    pub accuracy: f64,
    pub false_negative_rate: f64,
    pub false_positive_rate: f64,
    pub view_ms: f64,
}

impl EvalRow {
    pub fn new(viewpoint: usize, vp: &Viewpoint, counts: Counts, view_ms: f64) -> Self {
        let p = vp.position;
        EvalRow {
            viewpoint,
            position: [p.x, p.y, p.z],
            counts,
            accuracy: counts.accuracy(),
            false_negative_rate: counts.false_negative_rate(),
            false_positive_rate: counts.false_positive_rate(),
            view_ms,
        }
    }
}

pub fn evaluate(pred: &VisibilityResult, truth: &VisibilityResult) -> Result<EvalRow> {
    Ok(EvalRow::new(0, &Viewpoint::at(0.0, 0.0, 0.0), confusion(pred, truth, None)?, 0.0))
}

/// Rates pooled over all points of all viewpoints, plus timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: String,
    pub accuracy: f64,
    pub false_negative_rate: f64,
    pub false_positive_rate: f64,
    pub mean_view_accuracy: f64,
    pub prepare_ms: f64,
    pub median_view_ms: f64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn from_rows(backend: &str, rows: Vec<EvalRow>, prepare_ms: f64) -> Self {
        let total = rows.iter().fold(Counts::default(), |a, r| a.merge(&r.counts));
        let mean = if rows.is_empty() {
            1.0
        } else {
            rows.iter().map(|r| r.accuracy).sum::<f64>() / rows.len() as f64
        };
        let times: Vec<f64> = rows.iter().map(|r| r.view_ms).collect();
        EvalReport {
            backend: backend.to_string(),
            accuracy: total.accuracy(),
            false_negative_rate: total.false_negative_rate(),
            false_positive_rate: total.false_positive_rate(),
            mean_view_accuracy: mean,
            prepare_ms,
            median_view_ms: median(&times),
            rows,
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs `backend` on every viewpoint and scores it against `truth`.
pub fn evaluate_backend(
    backend: &dyn VisibilityBackend,
    cloud: &PointCloud,
    viewpoints: &[Viewpoint],
    truth: &[VisibilityResult],
) -> Result<EvalReport> {
    if viewpoints.len() != truth.len() {
        return Err(Error::Shape(format!("{} viewpoints for {} label sets", viewpoints.len(), truth.len())));
    }
    let t = Instant::now();
    let prepared = backend.prepare(cloud)?;
    let prepare_ms = elapsed_ms(t);
    let mut rows = Vec::with_capacity(viewpoints.len());
    for (k, (vp, gt)) in viewpoints.iter().zip(truth).enumerate() {
        let t = Instant::now();
        let pred = prepared.visibility(vp)?;
        let ms = elapsed_ms(t);
        rows.push(EvalRow::new(k, vp, confusion(&pred, gt, None)?, ms));
    }
    Ok(EvalReport::from_rows(backend.name(), rows, prepare_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaScore {
    pub gamma: f64,
    pub accuracy: f64,
}

/// HPR accuracy for each gamma, pooled over viewpoints.
pub fn hpr_gamma_sweep(
    cloud: &PointCloud,
    viewpoints: &[Viewpoint],
    truth: &[VisibilityResult],
    kernel: Kernel,
    gammas: &[f64],
) -> Result<Vec<GammaScore>> {
    gammas
        .iter()
        .map(|&gamma| {
            let params = match kernel {
                Kernel::LinearFlip => HprParams::linear(gamma),
                Kernel::Exponential => HprParams::exponential(gamma),
            };
            let mut total = Counts::default();
            for (vp, gt) in viewpoints.iter().zip(truth) {
                total = total.merge(&confusion(&hpr_visibility(cloud, vp, &params)?, gt, None)?);
            }
            Ok(GammaScore {
                gamma,
                accuracy: total.accuracy(),
            })
        })
        .collect()
}

/// Exact visibility of points on a sphere: `Some(label)` outside the
/// angular silhouette band of half-width `band` radians, `None` inside it.
pub fn sphere_visibility(center: &Vec3, radius: f64, cloud: &PointCloud, vp: &Viewpoint, band: f64) -> Vec<Option<bool>> {
    let to_vp = vp.position - center;
    let dist = to_vp.norm();
    // Visible cap: angle from the viewpoint axis below acos(R / d).
    let limit = (radius / dist).min(1.0).acos();
    cloud
        .points()
        .iter()
        .map(|p| {
            let theta = (p - center).angle(&to_vp);
            ((theta - limit).abs() >= band).then_some(theta < limit)
        })
        .collect()
}
