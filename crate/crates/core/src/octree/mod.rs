//! Sparse linear octree over a cloud normalized into the unit cube.

pub mod morton;
mod splat;

pub use splat::{splat_to_points, SplatWeights};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3};
use crate::tensor::Matrix;

pub const NORMALIZE_MARGIN: f64 = 1e-4;
pub const MAX_DEPTH: u32 = 12;
pub const DEFAULT_DEPTH: u32 = 8;
pub const EMPTY: u32 = u32::MAX;
/// Slot of the node itself in a 27-entry neighborhood.
pub const SELF_SLOT: usize = 13;

/// Slot index of the neighbor at offset `(dx, dy, dz)`, each in `-1..=1`.
pub fn slot(dx: i32, dy: i32, dz: i32) -> usize {
    ((dx + 1) * 9 + (dy + 1) * 3 + (dz + 1)) as usize
}

pub fn slot_offset(k: usize) -> (i32, i32, i32) {
    let k = k as i32;
    (k / 9 - 1, (k / 3) % 3 - 1, k % 3 - 1)
}

/// Cloud mapped into `[0, 1]^3` by `n = (p - origin) * scale + offset`:
/// isotropic, centred, with `NORMALIZE_MARGIN` clearance on the longest axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    origin: Vec3,
    scale: f64,
    offset: Vec3,
}

impl NormalizedCloud {
    pub fn new(cloud: &PointCloud) -> Self {
        let bounds = cloud.aabb();
        let extent = bounds.extent();
        let longest = extent.max();
        let scale = if longest > 0.0 {
            (1.0 - 2.0 * NORMALIZE_MARGIN) / longest
        } else {
            1.0
        };
        let origin = bounds.min;
        let offset = extent.map(|e| 0.5 - 0.5 * e * scale);
        let points = cloud
            .points()
            .iter()
            .map(|p| (p - origin) * scale + offset)
            .collect();
        NormalizedCloud {
            points,
            normals: cloud.normals().map(|n| n.to_vec()),
            origin,
            scale,
            offset,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn offset(&self) -> Vec3 {
        self.offset
    }

    pub fn to_unit(&self, p: &Vec3) -> Vec3 {
        (p - self.origin) * self.scale + self.offset
    }

    pub fn to_world(&self, n: &Vec3) -> Vec3 {
        (n - self.offset) / self.scale + self.origin
    }
}

pub fn normalize(cloud: &PointCloud) -> NormalizedCloud {
    NormalizedCloud::new(cloud)
}

/// Occupied nodes of one level in increasing key order.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub keys: Vec<u64>,
    /// Index of each node's parent in the level above; empty at level 0.
    pub parent: Vec<u32>,
    /// Child indices by octant (`key & 7`) in the level below, or `EMPTY`;
    /// empty at the leaf level.
    pub children: Vec<[u32; 8]>,
}

impl Level {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn find(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Octree {
    depth: u32,
    levels: Vec<Level>,
    signal: Matrix<f64>,
    leaf_start: Vec<u32>,
    leaf_points: Vec<u32>,
    point_leaf: Vec<u32>,
}

/// Integer voxel coordinates of a normalized point at `depth`.
pub fn voxel_of(p: &Vec3, depth: u32) -> [u32; 3] {
    let res = (1u32 << depth) as f64;
    let max = (1u32 << depth) - 1;
    [0, 1, 2].map(|a| ((p[a] * res).floor().max(0.0) as u32).min(max))
}

fn point_order(nc: &NormalizedCloud, a: usize, b: usize) -> std::cmp::Ordering {
    let pa = &nc.points[a];
    let pb = &nc.points[b];
    let mut ord = pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(pa.z.total_cmp(&pb.z));
    if let Some(n) = &nc.normals {
        ord = ord
            .then(n[a].x.total_cmp(&n[b].x))
            .then(n[a].y.total_cmp(&n[b].y))
            .then(n[a].z.total_cmp(&n[b].z));
    }
    ord
}

pub fn build_octree(nc: &NormalizedCloud, depth: u32) -> Result<Octree> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::InvalidInput(format!("octree depth {depth} outside 1..={MAX_DEPTH}")));
    }
    if nc.is_empty() {
        return Err(Error::InvalidInput("cannot build an octree over zero points".into()));
    }
    let res = (1u32 << depth) as f64;
    let keys: Vec<u64> = nc
        .points
        .iter()
        .map(|p| {
            let [x, y, z] = voxel_of(p, depth);
            morton::encode(x, y, z)
        })
        .collect();
    let mut order: Vec<usize> = (0..nc.len()).collect();
    order.sort_unstable_by(|&a, &b| keys[a].cmp(&keys[b]).then_with(|| point_order(nc, a, b)));

    let channels = if nc.normals.is_some() { 6 } else { 3 };
    let mut leaf_keys = Vec::new();
    let mut leaf_start = vec![0u32];
    let mut signal = Vec::new();
    let mut point_leaf = vec![0u32; nc.len()];
    let mut i = 0;
    while i < order.len() {
        let key = keys[order[i]];
        let mut j = i;
        while j < order.len() && keys[order[j]] == key {
            j += 1;
        }
        let (vx, vy, vz) = morton::decode(key);
        let center = Vec3::new(vx as f64 + 0.5, vy as f64 + 0.5, vz as f64 + 0.5);
        let mut offset = Vec3::zeros();
        let mut normal = Vec3::zeros();
        for &p in &order[i..j] {
            offset += nc.points[p] * res - center;
            if let Some(n) = &nc.normals {
                normal += n[p];
            }
            point_leaf[p] = leaf_keys.len() as u32;
        }
        let count = (j - i) as f64;
        signal.extend((offset / count).iter());
        if channels == 6 {
            let n = normal.try_normalize(0.0).unwrap_or_else(Vec3::zeros);
            signal.extend(n.iter());
        }
        leaf_keys.push(key);
        leaf_start.push(j as u32);
        i = j;
    }
    let leaf_points: Vec<u32> = order.iter().map(|&p| p as u32).collect();
    let signal = Matrix::from_vec(leaf_keys.len(), channels, signal)?;

    let mut levels = vec![Level {
        keys: leaf_keys,
        parent: Vec::new(),
        children: Vec::new(),
    }];
    for _ in 0..depth {
        let child = levels.last_mut().unwrap();
        let mut keys: Vec<u64> = Vec::new();
        let mut children: Vec<[u32; 8]> = Vec::new();
        let mut parent = Vec::with_capacity(child.keys.len());
        for (c, &k) in child.keys.iter().enumerate() {
            let pk = k >> 3;
            if keys.last() != Some(&pk) {
                keys.push(pk);
                children.push([EMPTY; 8]);
            }
            children.last_mut().unwrap()[(k & 7) as usize] = c as u32;
            parent.push((keys.len() - 1) as u32);
        }
        child.parent = parent;
        levels.push(Level {
            keys,
            parent: Vec::new(),
            children,
        });
    }
    levels.reverse();
    Ok(Octree {
        depth,
        levels,
        signal,
        leaf_start,
        leaf_points,
        point_leaf,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub slots: Vec<[u32; 27]>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

impl Octree {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn level(&self, d: u32) -> &Level {
        &self.levels[d as usize]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn num_leaves(&self) -> usize {
        self.levels[self.depth as usize].len()
    }

    pub fn num_points(&self) -> usize {
        self.point_leaf.len()
    }

    /// Per-leaf input signal: mean offset from the voxel center in voxel
    /// units, then the renormalized mean normal when normals exist.
    pub fn signal(&self) -> &Matrix<f64> {
        &self.signal
    }

    pub fn channels(&self) -> usize {
        self.signal.cols()
    }

    pub fn leaf_points(&self, leaf: usize) -> &[u32] {
        &self.leaf_points[self.leaf_start[leaf] as usize..self.leaf_start[leaf + 1] as usize]
    }

    pub fn point_leaf(&self, point: usize) -> usize {
        self.point_leaf[point] as usize
    }

    /// Same-level 3x3x3 neighborhoods by key arithmetic.
    pub fn neighbor_table(&self, level: u32) -> Result<NeighborTable> {
        if level > self.depth {
            return Err(Error::InvalidInput(format!("level {level} exceeds depth {}", self.depth)));
        }
        let lv = self.level(level);
        let max = (1i64 << level) - 1;
        let slots = lv
            .keys
            .iter()
            .map(|&key| {
                let (x, y, z) = morton::decode(key);
                let mut row = [EMPTY; 27];
                for (k, slot) in row.iter_mut().enumerate() {
                    let (dx, dy, dz) = slot_offset(k);
                    let (nx, ny, nz) = (x as i64 + dx as i64, y as i64 + dy as i64, z as i64 + dz as i64);
                    if nx < 0 || ny < 0 || nz < 0 || nx > max || ny > max || nz > max {
                        continue;
                    }
                    if let Some(i) = lv.find(morton::encode(nx as u32, ny as u32, nz as u32)) {
                        *slot = i as u32;
                    }
                }
                row
            })
            .collect();
        Ok(NeighborTable { slots })
    }

    /// Line-oriented text dump: one line per node with level, key, child
    /// mask, and for leaves the point count and signal.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "octree depth={} channels={} leaves={} points={}",
            self.depth,
            self.channels(),
            self.num_leaves(),
            self.num_points()
        );
        for (d, lv) in self.levels.iter().enumerate() {
            for (i, &key) in lv.keys.iter().enumerate() {
                if d < self.depth as usize {
                    let mask = lv.children[i]
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| c != EMPTY)
                        .fold(0u8, |m, (o, _)| m | (1 << o));
                    let _ = writeln!(out, "{d} {key:x} {mask:08b}");
                } else {
                    let sig: Vec<String> = self.signal.row(i).iter().map(|v| format!("{v:.6}")).collect();
                    let _ = writeln!(out, "{d} {key:x} leaf n={} [{}]", self.leaf_points(i).len(), sig.join(" "));
                }
            }
        }
        out
    }
}
