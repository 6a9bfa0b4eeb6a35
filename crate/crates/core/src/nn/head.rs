//! View-conditioned MLP head: encoded direction, projection to the feature
//! width, elementwise fusion with point features, then affine+norm+ReLU
//! layers down to the (visible, invisible) logit pair.

use super::encoding::encode_into;
use super::unet::{affine, tensor_as};
use super::weights::ModelWeights;
use crate::error::Result;
use crate::tensor::{matmul_bt_into, matmul_into, Real};

#[derive(Debug, Clone)]
struct Dense<T> {
    /// Norm-folded weights `[cin][cout]`.
    w: Vec<T>,
    b: Vec<T>,
    cin: usize,
    cout: usize,
}

#[derive(Debug, Clone)]
pub struct Head<T> {
    frequencies: usize,
    features: usize,
    proj_w: Vec<T>,
    proj_b: Vec<T>,
    hidden: Vec<Dense<T>>,
    out: Dense<T>,
}

/// Scratch buffers reused across chunks.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    enc: Vec<f64>,
    e: Vec<T>,
    u: Vec<T>,
    acts: Vec<Vec<T>>,
    logits: Vec<T>,
}

impl<T: Real> Head<T> {
    pub fn new(weights: &ModelWeights) -> Result<Self> {
        let d = weights.descriptor();
        let f = d.feature_channels();
        let mut hidden = Vec::new();
        let mut cin = f;
        for (k, &h) in d.mlp_hidden.iter().enumerate() {
            let w = &weights.tensor(&format!("head.fc{k}.w"))?.data;
            let norm = affine::<f64>(weights, &format!("head.norm{k}"))?;
            let folded = (0..cin * h).map(|i| T::from_f64(w[i] as f64 * norm.a[i % h])).collect();
            hidden.push(Dense {
                w: folded,
                b: norm.c.iter().map(|&c| T::from_f64(c)).collect(),
                cin,
                cout: h,
            });
            cin = h;
        }
        Ok(Head {
            frequencies: d.frequencies,
            features: f,
            proj_w: tensor_as(weights, "head.proj.w")?,
            proj_b: tensor_as(weights, "head.proj.b")?,
            hidden,
            out: Dense {
                w: tensor_as(weights, "head.out.w")?,
                b: tensor_as(weights, "head.out.b")?,
                cin,
                cout: 2,
            },
        })
    }

    pub fn feature_channels(&self) -> usize {
        self.features
    }

    pub fn frequencies(&self) -> usize {
        self.frequencies
    }

    /// Logits for `n` points; `feats` is `n x F` and `dirs` unit directions.
    /// Results land in `ws.logits` as `n x 2`.
    pub fn forward(&self, feats: &[T], dirs: &[[f64; 3]], ws: &mut Workspace<T>) {
        let n = dirs.len();
        let f = self.features;
        let k = 6 * self.frequencies;
        debug_assert_eq!(feats.len(), n * f);
        ws.enc.resize(n * k, 0.0);
        for (d, e) in dirs.iter().zip(ws.enc.chunks_exact_mut(k)) {
            encode_into(d, self.frequencies, e);
        }
        ws.e.clear();
        ws.e.extend(ws.enc.iter().map(|&v| T::from_f64(v)));

        ws.u.resize(n * f, T::ZERO);
        for row in ws.u.chunks_exact_mut(f) {
            row.copy_from_slice(&self.proj_b);
        }
        matmul_into(n, k, f, &ws.e, &self.proj_w, T::ONE, &mut ws.u);
        for (u, &p) in ws.u.iter_mut().zip(feats) {
            *u *= p;
        }

        ws.acts.resize_with(self.hidden.len(), Vec::new);
        for li in 0..self.hidden.len() {
            let layer = &self.hidden[li];
            let (done, rest) = ws.acts.split_at_mut(li);
            let input: &[T] = if li == 0 { &ws.u } else { &done[li - 1] };
            let out = &mut rest[0];
            dense(layer, n, input, out);
            for v in out.iter_mut() {
                *v = v.relu();
            }
        }
        let last: &[T] = ws.acts.last().map(|v| v.as_slice()).unwrap_or(&ws.u);
        dense(&self.out, n, last, &mut ws.logits);
    }

    /// Gradient of `sum_i weight_i * p_invisible_i` with respect to each
    /// direction, using the activations left in `ws` by `forward`.
    pub fn backward(&self, feats: &[T], dirs: &[[f64; 3]], ws: &Workspace<T>, weight: f64) -> Vec<[f64; 3]> {
        let n = dirs.len();
        let f = self.features;
        let l = self.frequencies;
        let k = 6 * l;

        // Softmax: d p1 / d l1 = p0 p1 = -(d p1 / d l0).
        let mut g: Vec<T> = Vec::with_capacity(n * 2);
        for pair in ws.logits.chunks_exact(2) {
            let (p0, p1) = softmax(pair[0].to_f64(), pair[1].to_f64());
            let s = weight * p0 * p1;
            g.push(T::from_f64(-s));
            g.push(T::from_f64(s));
        }
        let mut layers: Vec<&Dense<T>> = self.hidden.iter().collect();
        layers.push(&self.out);
        for li in (0..layers.len()).rev() {
            let layer = layers[li];
            let mut prev = vec![T::ZERO; n * layer.cin];
            matmul_bt_into(n, layer.cout, layer.cin, &g, &layer.w, T::ZERO, &mut prev);
            if li > 0 {
                for (gv, &a) in prev.iter_mut().zip(&ws.acts[li - 1]) {
                    if !(a > T::ZERO) {
                        *gv = T::ZERO;
                    }
                }
            }
            g = prev;
        }
        // g is now d/d(fused); fused = P * u.
        for (gv, &p) in g.iter_mut().zip(feats) {
            *gv *= p;
        }
        let mut ge = vec![T::ZERO; n * k];
        matmul_bt_into(n, f, k, &g, &self.proj_w, T::ZERO, &mut ge);

        let pi = std::f64::consts::PI;
        (0..n)
            .map(|i| {
                let e = &ws.enc[i * k..(i + 1) * k];
                let ge = &ge[i * k..(i + 1) * k];
                let mut out = [0.0; 3];
                for (c, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    let mut freq = pi;
                    for fi in 0..l {
                        let j = c * 2 * l + 2 * fi;
                        acc += freq * (ge[j].to_f64() * e[j + 1] - ge[j + 1].to_f64() * e[j]);
                        freq *= 2.0;
                    }
                    *o = acc;
                }
                out
            })
            .collect()
    }
}

fn dense<T: Real>(layer: &Dense<T>, n: usize, input: &[T], out: &mut Vec<T>) {
    out.resize(n * layer.cout, T::ZERO);
    for row in out.chunks_exact_mut(layer.cout) {
        row.copy_from_slice(&layer.b);
    }
    matmul_into(n, layer.cin, layer.cout, input, &layer.w, T::ONE, out);
}

/// Numerically stable two-way softmax.
pub fn softmax(l0: f64, l1: f64) -> (f64, f64) {
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Workspace {
            enc: Vec::new(),
            e: Vec::new(),
            u: Vec::new(),
            acts: Vec::new(),
            logits: Vec::new(),
        }
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }
}
