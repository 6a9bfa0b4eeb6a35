//! Sparse octree layers: 3x3x3 convolution, inference-mode norm with ReLU,
//! and the stride-2 down/up maps between adjacent levels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::octree::{NeighborTable, Octree, EMPTY};
use crate::tensor::{matmul_into, Matrix, Real};

/// Upper bound on im2col buffer entries per chunk.
const IM2COL_BUDGET: usize = 1 << 20;

/// Running statistics of one inference-mode normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl NormStats {
    pub fn identity(c: usize) -> Self {
        NormStats {
            mean: vec![0.0; c],
            var: vec![1.0; c],
            scale: vec![1.0; c],
            shift: vec![0.0; c],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Per-channel `(a, c)` with `norm(x) = a x + c`.
    pub fn fold(&self, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.mean.len();
        if self.var.len() != n || self.scale.len() != n || self.shift.len() != n {
            return Err(Error::Shape("norm statistics have unequal lengths".into()));
        }
        let mut a = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            if !(self.var[i] >= 0.0) {
                return Err(Error::corrupt("norm.var", format!("variance {} in channel {i}", self.var[i])));
            }
            let ai = self.scale[i] / (self.var[i] + eps).sqrt();
            a.push(ai);
            c.push(self.shift[i] - ai * self.mean[i]);
        }
        Ok((a, c))
    }
}

/// A folded norm ready to apply in precision `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub a: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> Affine<T> {
    pub fn from_stats(stats: &NormStats, eps: f64) -> Result<Self> {
        let (a, c) = stats.fold(eps)?;
        Ok(Affine {
            a: a.into_iter().map(T::from_f64).collect(),
            c: c.into_iter().map(T::from_f64).collect(),
        })
    }

    pub fn apply_in_place(&self, x: &mut Matrix<T>, relu: bool) -> Result<()> {
        if x.cols() != self.a.len() {
            return Err(Error::Shape(format!("norm over {} channels applied to {}", self.a.len(), x.cols())));
        }
        let cols = x.cols();
        if cols == 0 {
            return Ok(());
        }
        x.data_mut().par_chunks_mut(cols * 256).for_each(|chunk| {
            for row in chunk.chunks_exact_mut(cols) {
                for ((v, &a), &c) in row.iter_mut().zip(&self.a).zip(&self.c) {
                    let y = a * *v + c;
                    *v = if relu { y.relu() } else { y };
                }
            }
        });
        Ok(())
    }
}

pub fn norm_act<T: Real>(x: &Matrix<T>, stats: &NormStats, eps: f64) -> Result<Matrix<T>> {
    let mut y = x.clone();
    Affine::from_stats(stats, eps)?.apply_in_place(&mut y, true)?;
    Ok(y)
}

/// `y[i] = b + sum_k w[k]^T x[nb(i, k)]` with `w` laid out `[27][cin][cout]`.
pub fn conv3_with_table<T: Real>(
    table: &NeighborTable,
    x: &Matrix<T>,
    w: &[T],
    b: Option<&[T]>,
    cout: usize,
) -> Result<Matrix<T>> {
    let (rows, cin) = x.shape();
    if table.len() != rows {
        return Err(Error::Shape(format!("{rows} feature rows for a level of {} nodes", table.len())));
    }
    if w.len() != 27 * cin * cout {
        return Err(Error::Shape(format!("kernel has {} values, expected 27x{cin}x{cout}", w.len())));
    }
    if let Some(b) = b {
        if b.len() != cout {
            return Err(Error::Shape(format!("bias has {} values, expected {cout}", b.len())));
        }
    }
    let mut out = Matrix::zeros(rows, cout);
    if rows == 0 || cout == 0 {
        return Ok(out);
    }
    let k = 27 * cin;
    let chunk_rows = (IM2COL_BUDGET / k.max(1)).clamp(16, 4096);
    let xd = x.data();
    out.data_mut()
        .par_chunks_mut(chunk_rows * cout)
        .enumerate()
        .for_each(|(ci, oc)| {
            let r0 = ci * chunk_rows;
            let m = oc.len() / cout;
            let mut cols = vec![T::ZERO; m * k];
            for (r, dst) in cols.chunks_exact_mut(k).enumerate() {
                for (s, &nb) in table.slots[r0 + r].iter().enumerate() {
                    if nb != EMPTY {
                        let nb = nb as usize;
                        dst[s * cin..(s + 1) * cin].copy_from_slice(&xd[nb * cin..(nb + 1) * cin]);
                    }
                }
            }
            if let Some(b) = b {
                for row in oc.chunks_exact_mut(cout) {
                    row.copy_from_slice(b);
                }
                matmul_into(m, k, cout, &cols, w, T::ONE, oc);
            } else {
                matmul_into(m, k, cout, &cols, w, T::ZERO, oc);
            }
        });
    Ok(out)
}

pub fn sparse_conv3<T: Real>(
    oct: &Octree,
    level: u32,
    x: &Matrix<T>,
    w: &[T],
    b: Option<&[T]>,
    cout: usize,
) -> Result<Matrix<T>> {
    conv3_with_table(&oct.neighbor_table(level)?, x, w, b, cout)
}

/// `y = x w + b` per row with `w` laid out `[cin][cout]`.
pub fn linear<T: Real>(x: &Matrix<T>, w: &[T], b: Option<&[T]>, cout: usize) -> Result<Matrix<T>> {
    let (rows, cin) = x.shape();
    if w.len() != cin * cout || b.is_some_and(|b| b.len() != cout) {
        return Err(Error::Shape(format!("linear map {cin}->{cout} has mismatched parameters")));
    }
    let mut out = Matrix::zeros(rows, cout);
    let beta = match b {
        Some(b) => {
            for r in 0..rows {
                out.row_mut(r).copy_from_slice(b);
            }
            T::ONE
        }
        None => T::ZERO,
    };
    matmul_into(rows, cin, cout, x.data(), w, beta, out.data_mut());
    Ok(out)
}

/// Stride-2 aggregation from `level` to `level - 1`: each parent receives
/// the mean over its occupied children of `w[octant]^T x[child]`, with `w`
/// laid out `[8][cin][cout]`.
pub fn downsample<T: Real>(oct: &Octree, level: u32, x: &Matrix<T>, w: &[T], cout: usize) -> Result<Matrix<T>> {
    if level == 0 || level > oct.depth() {
        return Err(Error::Shape(format!("cannot downsample from level {level}")));
    }
    let (rows, cin) = x.shape();
    let children = oct.level(level);
    if rows != children.len() {
        return Err(Error::Shape(format!("{rows} feature rows for a level of {} nodes", children.len())));
    }
    if w.len() != 8 * cin * cout {
        return Err(Error::Shape(format!("kernel has {} values, expected 8x{cin}x{cout}", w.len())));
    }
    let parents = oct.level(level - 1);
    let mut out = Matrix::zeros(parents.len(), cout);
    // Gather children by octant so each octant is one dense product.
    for oct_k in 0..8 {
        let members: Vec<(usize, usize)> = parents
            .children
            .iter()
            .enumerate()
            .filter_map(|(p, ch)| (ch[oct_k] != EMPTY).then_some((p, ch[oct_k] as usize)))
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut gathered = Vec::with_capacity(members.len() * cin);
        for &(_, c) in &members {
            gathered.extend_from_slice(x.row(c));
        }
        let mut prod = vec![T::ZERO; members.len() * cout];
        matmul_into(
            members.len(),
            cin,
            cout,
            &gathered,
            &w[oct_k * cin * cout..(oct_k + 1) * cin * cout],
            T::ZERO,
            &mut prod,
        );
        for (i, &(p, _)) in members.iter().enumerate() {
            for (o, &v) in out.row_mut(p).iter_mut().zip(&prod[i * cout..(i + 1) * cout]) {
                *o += v;
            }
        }
    }
    for (p, ch) in parents.children.iter().enumerate() {
        let n = ch.iter().filter(|&&c| c != EMPTY).count();
        let inv = T::ONE / T::from_f64(n as f64);
        for v in out.row_mut(p) {
            *v *= inv;
        }
    }
    Ok(out)
}

/// Replicates parent features from `level` to `level + 1` and applies the
/// 1x1 map `w` laid out `[cin][cout]`.
pub fn upsample<T: Real>(oct: &Octree, level: u32, x: &Matrix<T>, w: &[T], cout: usize) -> Result<Matrix<T>> {
    if level >= oct.depth() {
        return Err(Error::Shape(format!("cannot upsample from level {level}")));
    }
    let parents = oct.level(level);
    if x.rows() != parents.len() {
        return Err(Error::Shape(format!("{} feature rows for a level of {} nodes", x.rows(), parents.len())));
    }
    let mapped = linear(x, w, None, cout)?;
    let children = oct.level(level + 1);
    let mut out = Matrix::zeros(children.len(), cout);
    for (c, &p) in children.parent.iter().enumerate() {
        out.row_mut(c).copy_from_slice(mapped.row(p as usize));
    }
    Ok(out)
}
