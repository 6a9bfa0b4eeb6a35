//! Timing harness: one-time preparation versus per-viewpoint cost, with
//! accuracy against the oracle.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::VisibilityBackend;
use crate::error::{Error, Result};
use crate::eval::{confusion, elapsed_ms, median};
use crate::geom::{sample_surface, sample_viewpoints, TriangleMesh, VisibilityOracle};

pub const CSV_HEADER: &str = "size,backend,n_viewpoints,prepare_ms,median_view_ms,mean_accuracy";
pub const MIN_VIEWPOINTS: usize = 20;
pub const DEFAULT_SIZES: [usize; 5] = [2_000, 8_000, 32_000, 81_000, 200_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub viewpoints: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            viewpoints: MIN_VIEWPOINTS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub backend: String,
    pub n_viewpoints: usize,
    pub prepare_ms: f64,
    pub median_view_ms: f64,
    pub mean_accuracy: f64,
}

/// Backends run one after another, viewpoints sequentially within each.
pub fn bench(mesh: &TriangleMesh, backends: &[&dyn VisibilityBackend], config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.viewpoints < MIN_VIEWPOINTS {
        return Err(Error::InvalidInput(format!("bench needs at least {MIN_VIEWPOINTS} viewpoints")));
    }
    let oracle = VisibilityOracle::new(mesh)?;
    let mut rows = Vec::new();
    for &size in &config.sizes {
        let cloud = sample_surface(mesh, size, config.seed)?;
        let vps = sample_viewpoints(&cloud, config.viewpoints, config.seed ^ 1)?;
        let truth: Vec<_> = vps.iter().map(|vp| oracle.label(&cloud, vp).visibility).collect();
        for b in backends {
            let t = Instant::now();
            let prepared = b.prepare(&cloud)?;
            let prepare_ms = elapsed_ms(t);
            let mut times = Vec::with_capacity(vps.len());
            let mut acc = 0.0;
            for (vp, gt) in vps.iter().zip(&truth) {
                let t = Instant::now();
                let pred = prepared.visibility(vp)?;
                times.push(elapsed_ms(t));
                acc += confusion(&pred, gt, None)?.accuracy();
            }
            log::info!("bench {} at {size} points: median {:.2} ms", b.name(), median(&times));
            rows.push(BenchRow {
                size,
                backend: b.name().to_string(),
                n_viewpoints: vps.len(),
                prepare_ms,
                median_view_ms: median(&times),
                mean_accuracy: acc / vps.len() as f64,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(w: &mut impl Write, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.4},{:.4},{:.6}",
            r.size, r.backend, r.n_viewpoints, r.prepare_ms, r.median_view_ms, r.mean_accuracy
        )?;
    }
    Ok(())
}

/// Least-squares slope of `log(time)` against `log(size)`.
pub fn loglog_slope(sizes: &[usize], times: &[f64]) -> Option<f64> {
    if sizes.len() != times.len() || sizes.len() < 2 || times.iter().any(|&t| !(t > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{HprBackend, OracleBackend};
    use crate::geom::shapes;
    use crate::hpr::HprParams;
    use std::sync::Arc;

    #[test]
    fn oracle_is_exact_and_csv_is_stable() {
        let mesh = Arc::new(shapes::torus(1.0, 0.4, 24, 12));
        let oracle = OracleBackend::new(mesh.clone());
        let hpr = HprBackend::new(HprParams::linear(2.0)).unwrap();
        let config = BenchConfig {
            sizes: vec![300, 600],
            viewpoints: 20,
            seed: 1,
        };
        let rows = bench(&mesh, &[&oracle, &hpr], &config).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().filter(|r| r.backend == "oracle").all(|r| r.mean_accuracy == 1.0));
        let mut out = Vec::new();
        write_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 6);
            f[0].parse::<usize>().unwrap();
            assert!(f[3].parse::<f64>().is_ok() && f[5].parse::<f64>().is_ok());
        }
        assert!(bench(&mesh, &[&oracle], &BenchConfig { viewpoints: 5, ..config }).is_err());
    }

    #[test]
    fn slope_of_power_laws() {
        let sizes = [1000, 2000, 4000, 8000];
        let t: Vec<f64> = sizes.iter().map(|&s| 3e-4 * (s as f64).powf(1.5)).collect();
        assert!((loglog_slope(&sizes, &t).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[5], &[1.0]).is_none());
    }
}
