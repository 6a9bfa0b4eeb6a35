//! Residual octree U-Net producing per-leaf features.

use super::layers::{conv3_with_table, downsample, linear, upsample, Affine, NormStats};
use super::weights::{Descriptor, ModelWeights};
use crate::error::{Error, Result};
use crate::octree::{NeighborTable, Octree};
use crate::tensor::{Matrix, Real};

pub(crate) fn tensor_as<T: Real>(weights: &ModelWeights, name: &str) -> Result<Vec<T>> {
    Ok(weights.tensor(name)?.data.iter().map(|&v| T::from_f32(v)).collect())
}

pub(crate) fn norm_stats(weights: &ModelWeights, prefix: &str) -> Result<NormStats> {
    let get = |s: &str| -> Result<Vec<f64>> {
        Ok(weights.tensor(&format!("{prefix}.{s}"))?.data.iter().map(|&v| v as f64).collect())
    };
    Ok(NormStats {
        mean: get("mean")?,
        var: get("var")?,
        scale: get("scale")?,
        shift: get("shift")?,
    })
}

pub(crate) fn affine<T: Real>(weights: &ModelWeights, prefix: &str) -> Result<Affine<T>> {
    let eps = weights.descriptor().norm_eps;
    Affine::from_stats(&norm_stats(weights, prefix)?, eps).map_err(|e| match e {
        Error::CorruptWeights { reason, .. } => Error::corrupt(format!("{prefix}.var"), reason),
        other => other,
    })
}

#[derive(Debug, Clone)]
struct Conv<T> {
    w: Vec<T>,
    b: Vec<T>,
    cout: usize,
}

impl<T: Real> Conv<T> {
    fn load(weights: &ModelWeights, prefix: &str) -> Result<Self> {
        let b = tensor_as(weights, &format!("{prefix}.b"))?;
        Ok(Conv {
            w: tensor_as(weights, &format!("{prefix}.w"))?,
            cout: b.len(),
            b,
        })
    }
}

#[derive(Debug, Clone)]
struct Block<T> {
    conv1: Conv<T>,
    norm1: Affine<T>,
    conv2: Conv<T>,
    norm2: Affine<T>,
}

impl<T: Real> Block<T> {
    fn load(weights: &ModelWeights, prefix: &str) -> Result<Self> {
        Ok(Block {
            conv1: Conv::load(weights, &format!("{prefix}.conv1"))?,
            norm1: affine(weights, &format!("{prefix}.norm1"))?,
            conv2: Conv::load(weights, &format!("{prefix}.conv2"))?,
            norm2: affine(weights, &format!("{prefix}.norm2"))?,
        })
    }

    fn forward(&self, table: &NeighborTable, x: Matrix<T>) -> Result<Matrix<T>> {
        let mut h = conv3_with_table(table, &x, &self.conv1.w, Some(&self.conv1.b), self.conv1.cout)?;
        self.norm1.apply_in_place(&mut h, true)?;
        let mut h = conv3_with_table(table, &h, &self.conv2.w, Some(&self.conv2.b), self.conv2.cout)?;
        self.norm2.apply_in_place(&mut h, false)?;
        for (v, &s) in h.data_mut().iter_mut().zip(x.data()) {
            *v = (*v + s).relu();
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
struct Stage<T> {
    blocks: Vec<Block<T>>,
    down_w: Vec<T>,
    down_norm: Affine<T>,
    down_cout: usize,
}

#[derive(Debug, Clone)]
struct UpStage<T> {
    w: Vec<T>,
    norm: Affine<T>,
    cout: usize,
    fuse: Conv<T>,
    fuse_norm: Affine<T>,
    blocks: Vec<Block<T>>,
}

/// The feature extractor with parameters converted to precision `T`.
#[derive(Debug, Clone)]
pub struct UNet<T> {
    descriptor: Descriptor,
    stem: Conv<T>,
    stem_norm: Affine<T>,
    stages: Vec<Stage<T>>,
    bottleneck: Vec<Block<T>>,
    /// Decoder stages indexed like the encoder (`ups[i]` ends at stage i).
    ups: Vec<UpStage<T>>,
}

impl<T: Real> UNet<T> {
    pub fn new(weights: &ModelWeights) -> Result<Self> {
        let d = weights.descriptor().clone();
        let blocks = |prefix: &str, n: usize| -> Result<Vec<Block<T>>> {
            (0..n).map(|j| Block::load(weights, &format!("{prefix}.block{j}"))).collect()
        };
        let mut stages = Vec::new();
        let mut ups = Vec::new();
        for i in 0..d.stages() {
            stages.push(Stage {
                blocks: blocks(&format!("stage{i}"), d.stage_blocks[i])?,
                down_w: tensor_as(weights, &format!("stage{i}.down.w"))?,
                down_norm: affine(weights, &format!("stage{i}.down.norm"))?,
                down_cout: d.next_width(i),
            });
            ups.push(UpStage {
                w: tensor_as(weights, &format!("up{i}.w"))?,
                norm: affine(weights, &format!("up{i}.norm"))?,
                cout: d.stage_widths[i],
                fuse: Conv::load(weights, &format!("up{i}.fuse"))?,
                fuse_norm: affine(weights, &format!("up{i}.fuse_norm"))?,
                blocks: blocks(&format!("up{i}"), d.stage_blocks[i])?,
            });
        }
        Ok(UNet {
            stem: Conv::load(weights, "stem.conv")?,
            stem_norm: affine(weights, "stem.norm")?,
            stages,
            bottleneck: blocks("bottleneck", *d.stage_blocks.last().unwrap())?,
            ups,
            descriptor: d,
        })
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    /// Per-leaf features `[num_leaves x F]` in canonical leaf order.
    pub fn forward(&self, oct: &Octree) -> Result<Matrix<T>> {
        let d = &self.descriptor;
        if oct.depth() != d.octree_depth {
            return Err(Error::Shape(format!(
                "octree depth {} but the model expects {}",
                oct.depth(),
                d.octree_depth
            )));
        }
        if oct.channels() != d.in_channels {
            return Err(Error::Shape(format!(
                "octree carries {} input channels but the model expects {}",
                oct.channels(),
                d.in_channels
            )));
        }
        let depth = d.octree_depth;
        let s = d.stages() as u32;
        let tables: Vec<NeighborTable> = (0..=s)
            .map(|i| oct.neighbor_table(depth - i))
            .collect::<Result<_>>()?;

        let x: Matrix<T> = oct.signal().cast();
        let mut h = conv3_with_table(&tables[0], &x, &self.stem.w, Some(&self.stem.b), self.stem.cout)?;
        self.stem_norm.apply_in_place(&mut h, true)?;

        let mut skips = Vec::with_capacity(self.stages.len());
        for (i, st) in self.stages.iter().enumerate() {
            for b in &st.blocks {
                h = b.forward(&tables[i], h)?;
            }
            let mut down = downsample(oct, depth - i as u32, &h, &st.down_w, st.down_cout)?;
            st.down_norm.apply_in_place(&mut down, true)?;
            skips.push(h);
            h = down;
        }
        for b in &self.bottleneck {
            h = b.forward(&tables[s as usize], h)?;
        }
        for (i, up) in self.ups.iter().enumerate().rev() {
            let level = depth - i as u32;
            let mut u = upsample(oct, level - 1, &h, &up.w, up.cout)?;
            up.norm.apply_in_place(&mut u, true)?;
            let cat = skips[i].hconcat(&u)?;
            h = linear(&cat, &up.fuse.w, Some(&up.fuse.b), up.fuse.cout)?;
            up.fuse_norm.apply_in_place(&mut h, true)?;
            for b in &up.blocks {
                h = b.forward(&tables[i], h)?;
            }
        }
        Ok(h)
    }
}

pub fn unet_forward(oct: &Octree, weights: &ModelWeights) -> Result<Matrix<f32>> {
    UNet::<f32>::new(weights)?.forward(oct)
}

#[cfg(test)]
#[path = "../../tests/support/unet_reference.rs"]
mod unet_reference;
