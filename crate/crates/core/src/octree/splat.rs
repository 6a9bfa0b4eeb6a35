//! Octree-to-point feature interpolation: trilinear over the eight nearest
//! leaf centers, renormalized over occupied voxels.

use super::{morton, NormalizedCloud, Octree, EMPTY};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct SplatWeights {
    leaves: Vec<[u32; 8]>,
    weights: Vec<[f64; 8]>,
    num_leaves: usize,
}

impl SplatWeights {
    pub fn new(oct: &Octree, nc: &NormalizedCloud) -> Result<Self> {
        if nc.len() != oct.num_points() {
            return Err(Error::Shape(format!(
                "cloud has {} points, octree was built over {}",
                nc.len(),
                oct.num_points()
            )));
        }
        let depth = oct.depth();
        let res = (1u32 << depth) as f64;
        let max = (1i64 << depth) - 1;
        let leaves_level = oct.level(depth);
        let mut leaves = Vec::with_capacity(nc.len());
        let mut weights = Vec::with_capacity(nc.len());
        for p in nc.points() {
            let u = p.map(|v| v * res - 0.5);
            let base = u.map(f64::floor);
            let frac = u - base;
            let mut idx = [EMPTY; 8];
            let mut w = [0.0; 8];
            let mut total = 0.0;
            for corner in 0..8 {
                let mut weight = 1.0;
                let mut cell = [0i64; 3];
                for a in 0..3 {
                    let bit = (corner >> a) & 1;
                    cell[a] = base[a] as i64 + bit as i64;
                    weight *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                if weight == 0.0 || cell.iter().any(|&c| c < 0 || c > max) {
                    continue;
                }
                let key = morton::encode(cell[0] as u32, cell[1] as u32, cell[2] as u32);
                if let Some(leaf) = leaves_level.find(key) {
                    idx[corner] = leaf as u32;
                    w[corner] = weight;
                    total += weight;
                }
            }
            if !(total > 0.0) {
                return Err(Error::Shape("point falls outside every occupied leaf".into()));
            }
            for v in &mut w {
                *v /= total;
            }
            leaves.push(idx);
            weights.push(w);
        }
        Ok(SplatWeights {
            leaves,
            weights,
            num_leaves: oct.num_leaves(),
        })
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Occupied contributors of one point as `(leaf, weight)` pairs.
    pub fn contributors(&self, point: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.leaves[point]
            .iter()
            .zip(&self.weights[point])
            .filter(|(&l, _)| l != EMPTY)
            .map(|(&l, &w)| (l as usize, w))
    }

    pub fn apply<T: Real>(&self, leaf_features: &Matrix<T>) -> Result<Matrix<T>> {
        if leaf_features.rows() != self.num_leaves {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows, octree has {} leaves",
                leaf_features.rows(),
                self.num_leaves
            )));
        }
        let c = leaf_features.cols();
        let mut out = Matrix::zeros(self.len(), c);
        for p in 0..self.len() {
            let row = out.row_mut(p);
            for (leaf, w) in self.contributors(p) {
                let w = T::from_f64(w);
                for (o, &f) in row.iter_mut().zip(leaf_features.row(leaf)) {
                    *o += w * f;
                }
            }
        }
        Ok(out)
    }
}

pub fn splat_to_points<T: Real>(oct: &Octree, leaf_features: &Matrix<T>, nc: &NormalizedCloud) -> Result<Matrix<T>> {
    SplatWeights::new(oct, nc)?.apply(leaf_features)
}
