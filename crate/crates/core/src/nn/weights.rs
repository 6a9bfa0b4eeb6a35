//! Named-tensor bundle and the NVPS weight file.
//!
//! Layout (all integers little-endian):
//! `"NVPS"`, u32 version, u32 tensor count, then per tensor a u16 name
//! length, UTF-8 name, u8 rank, u32 dims, and f32 data; finally a u32
//! length-prefixed JSON architecture descriptor.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NVPS";
pub const VERSION: u32 = 1;
pub const TOY_MARGIN: f32 = 3.0;
pub const NORM_SUFFIXES: [&str; 4] = ["mean", "var", "scale", "shift"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub octree_depth: u32,
    pub in_channels: usize,
    /// Encoder widths per stage; the bottleneck is twice the last.
    pub stage_widths: Vec<usize>,
    /// Residual blocks per stage; the bottleneck reuses the last count.
    pub stage_blocks: Vec<usize>,
    /// Number of encoding frequencies L.
    pub frequencies: usize,
    pub mlp_hidden: Vec<usize>,
    pub norm_eps: f64,
}

impl Default for Descriptor {
    fn default() -> Self {
        Descriptor {
            octree_depth: 8,
            in_channels: 3,
            stage_widths: vec![32, 64, 128, 256],
            stage_blocks: vec![2, 2, 2, 2],
            frequencies: 4,
            mlp_hidden: vec![128, 64],
            norm_eps: 1e-5,
        }
    }
}

impl Descriptor {
    /// Per-point feature width produced by the U-Net.
    pub fn feature_channels(&self) -> usize {
        self.stage_widths[0]
    }

    pub fn stages(&self) -> usize {
        self.stage_widths.len()
    }

    pub fn bottleneck_width(&self) -> usize {
        2 * self.stage_widths[self.stages() - 1]
    }

    /// Width after the downsample that ends stage `i`.
    pub fn next_width(&self, i: usize) -> usize {
        if i + 1 < self.stages() {
            self.stage_widths[i + 1]
        } else {
            self.bottleneck_width()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::corrupt("<descriptor>", why));
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.stage_blocks.len() {
            return bad("stage_widths and stage_blocks must be non-empty and equally long".into());
        }
        if self.stage_widths.iter().any(|&w| w == 0) || self.mlp_hidden.iter().any(|&w| w == 0) {
            return bad("zero-width layer".into());
        }
        if !(1..=crate::octree::MAX_DEPTH).contains(&self.octree_depth) || (self.octree_depth as usize) < self.stages() {
            return bad(format!("octree depth {} cannot host {} stages", self.octree_depth, self.stages()));
        }
        if self.in_channels != 3 && self.in_channels != 6 {
            return bad(format!("in_channels must be 3 or 6, got {}", self.in_channels));
        }
        if self.frequencies == 0 || self.mlp_hidden.is_empty() {
            return bad("frequencies and mlp_hidden must be non-empty".into());
        }
        if !(self.norm_eps > 0.0) {
            return bad("norm_eps must be positive".into());
        }
        Ok(())
    }

    /// Every tensor the architecture needs, in canonical file order.
    pub fn expected_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let norm = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c: usize| {
            for s in NORM_SUFFIXES {
                out.push((format!("{prefix}.{s}"), vec![c]));
            }
        };
        let block = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c: usize| {
            for k in 1..=2 {
                out.push((format!("{prefix}.conv{k}.w"), vec![27, c, c]));
                out.push((format!("{prefix}.conv{k}.b"), vec![c]));
                norm(out, &format!("{prefix}.norm{k}"), c);
            }
        };
        let w0 = self.stage_widths[0];
        out.push(("stem.conv.w".into(), vec![27, self.in_channels, w0]));
        out.push(("stem.conv.b".into(), vec![w0]));
        norm(&mut out, "stem.norm", w0);
        for (i, (&w, &n)) in self.stage_widths.iter().zip(&self.stage_blocks).enumerate() {
            for j in 0..n {
                block(&mut out, &format!("stage{i}.block{j}"), w);
            }
            let next = self.next_width(i);
            out.push((format!("stage{i}.down.w"), vec![8, w, next]));
            norm(&mut out, &format!("stage{i}.down.norm"), next);
        }
        let nb = *self.stage_blocks.last().unwrap();
        for j in 0..nb {
            block(&mut out, &format!("bottleneck.block{j}"), self.bottleneck_width());
        }
        for i in (0..self.stages()).rev() {
            let (w, n) = (self.stage_widths[i], self.stage_blocks[i]);
            out.push((format!("up{i}.w"), vec![self.next_width(i), w]));
            norm(&mut out, &format!("up{i}.norm"), w);
            out.push((format!("up{i}.fuse.w"), vec![2 * w, w]));
            out.push((format!("up{i}.fuse.b"), vec![w]));
            norm(&mut out, &format!("up{i}.fuse_norm"), w);
            for j in 0..n {
                block(&mut out, &format!("up{i}.block{j}"), w);
            }
        }
        let f = self.feature_channels();
        out.push(("head.proj.w".into(), vec![6 * self.frequencies, f]));
        out.push(("head.proj.b".into(), vec![f]));
        let mut prev = f;
        for (k, &h) in self.mlp_hidden.iter().enumerate() {
            out.push((format!("head.fc{k}.w"), vec![prev, h]));
            norm(&mut out, &format!("head.norm{k}"), h);
            prev = h;
        }
        out.push(("head.out.w".into(), vec![prev, 2]));
        out.push(("head.out.b".into(), vec![2]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.expected_tensors().iter().map(|(_, d)| d.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} do not match {} values", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor { dims, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    descriptor: Descriptor,
    names: Vec<String>,
    tensors: HashMap<String, Tensor>,
}

impl ModelWeights {
    /// Validates that exactly the descriptor's tensors are present with
    /// matching shapes, finite values and non-negative variances.
    pub fn new(descriptor: Descriptor, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        descriptor.validate()?;
        let names: Vec<String> = tensors.iter().map(|(n, _)| n.clone()).collect();
        let mut map = HashMap::with_capacity(tensors.len());
        for (name, t) in tensors {
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::corrupt(name, "duplicate tensor"));
            }
        }
        let expected = descriptor.expected_tensors();
        for (name, dims) in &expected {
            let t = map.get(name).ok_or_else(|| Error::corrupt(name, "required tensor is missing"))?;
            if &t.dims != dims {
                return Err(Error::corrupt(name, format!("shape {:?}, expected {dims:?}", t.dims)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::corrupt(name, "non-finite value"));
            }
            if name.ends_with(".var") && t.data.iter().any(|&v| v < 0.0) {
                return Err(Error::corrupt(name, "negative variance"));
            }
        }
        if map.len() != expected.len() {
            let known: std::collections::HashSet<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
            let extra = names.iter().find(|n| !known.contains(n.as_str())).unwrap();
            return Err(Error::corrupt(extra, "tensor not used by the architecture"));
        }
        Ok(ModelWeights {
            descriptor,
            names,
            tensors: map,
        })
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::corrupt(name, "required tensor is missing"))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// All weights zero and every norm the identity (var 1, scale 1).
    pub fn zeros(descriptor: Descriptor) -> Result<Self> {
        let tensors = descriptor
            .expected_tensors()
            .into_iter()
            .map(|(name, dims)| {
                let mut t = Tensor::zeros(dims);
                if name.ends_with(".var") || name.ends_with(".scale") {
                    t.data.fill(1.0);
                }
                (name, t)
            })
            .collect();
        ModelWeights::new(descriptor, tensors)
    }

    /// Seeded random weights for tests and fixtures. Kernels use He scaling;
    /// norms get mild random statistics.
    pub fn random(descriptor: Descriptor, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = descriptor
            .expected_tensors()
            .into_iter()
            .map(|(name, dims)| {
                let n: usize = dims.iter().product();
                let data: Vec<f32> = if name.ends_with(".w") {
                    let fan_in: usize = dims[..dims.len() - 1].iter().product();
                    let std = (2.0 / fan_in as f64).sqrt();
                    (0..n)
                        .map(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
                        .collect()
                } else if name.ends_with(".var") {
                    (0..n).map(|_| rng.random_range(0.5..2.0)).collect()
                } else if name.ends_with(".scale") {
                    (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
                } else {
                    (0..n).map(|_| rng.random_range(-0.2..0.2)).collect()
                };
                (name, Tensor { dims, data })
            })
            .collect();
        ModelWeights::new(descriptor, tensors)
    }

    /// `random` weights whose head norms shift every hidden unit well away
    /// from the ReLU kink: two in three units stay active, the rest stay
    /// off. The score is then smooth in the viewpoint.
    pub fn toy(descriptor: Descriptor, seed: u64) -> Result<Self> {
        let mut w = ModelWeights::random(descriptor, seed)?;
        for k in 0..w.descriptor.mlp_hidden.len() {
            for v in &mut w.tensors.get_mut(&format!("head.fc{k}.w")).expect("head layer").data {
                *v *= 0.5;
            }
            let t = w.tensors.get_mut(&format!("head.norm{k}.shift")).expect("head norm");
            for (i, v) in t.data.iter_mut().enumerate() {
                *v = if i % 3 == 2 { -TOY_MARGIN } else { TOY_MARGIN };
            }
        }
        // Keep the logits unsaturated despite the shifted activations.
        let out = w.tensors.get_mut("head.out.w").expect("head output");
        let width = out.dims[0] as f32;
        for v in &mut out.data {
            *v *= 2.0 / (TOY_MARGIN * width.sqrt());
        }
        Ok(w)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.names.len() as u32).to_le_bytes());
        for name in &self.names {
            let t = &self.tensors[name];
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let json = serde_json::to_vec(&self.descriptor)?;
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "<header>")? != MAGIC {
            return Err(Error::corrupt("<header>", "bad magic"));
        }
        let version = r.u32("<header>")?;
        if version != VERSION {
            return Err(Error::corrupt("<header>", format!("unsupported version {version}")));
        }
        let count = r.u32("<header>")? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for i in 0..count {
            let ctx = format!("<tensor #{i}>");
            let len = u16::from_le_bytes(r.take(2, &ctx)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len, &ctx)?)
                .map_err(|_| Error::corrupt(&ctx, "name is not UTF-8"))?
                .to_string();
            let rank = r.take(1, &name)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32(&name)? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::corrupt(&name, "dimension overflow"))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::corrupt(&name, "dimension overflow"))?, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor { dims, data }));
        }
        let len = r.u32("<descriptor>")? as usize;
        let descriptor: Descriptor = serde_json::from_slice(r.take(len, "<descriptor>")?)
            .map_err(|e| Error::corrupt("<descriptor>", e.to_string()))?;
        if r.pos != bytes.len() {
            return Err(Error::corrupt("<trailer>", "unexpected bytes after descriptor"));
        }
        ModelWeights::new(descriptor, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelWeights::from_bytes(&std::fs::read(path)?)
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    ModelWeights::load(path)
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    weights.save(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, ctx: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::corrupt(ctx, "file is truncated")),
        }
    }

    fn u32(&mut self, ctx: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, ctx)?.try_into().unwrap()))
    }
}
