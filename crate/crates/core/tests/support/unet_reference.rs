//! Per-node U-Net evaluator over key maps; it shares no code with the
//! layers it checks.

use std::collections::HashMap;

use pointvis::nn::ModelWeights;
use pointvis::octree::{morton, Octree};

pub struct Reference<'a> {
    pub w: &'a ModelWeights,
    pub oct: &'a Octree,
}

pub type Feats = Vec<Vec<f64>>;

impl Reference<'_> {
    fn t(&self, name: &str) -> Vec<f64> {
        self.w.tensor(name).unwrap().data.iter().map(|&v| v as f64).collect()
    }

    fn norm(&self, prefix: &str, x: &mut Feats, relu: bool) {
        let (m, v, s, b) = (self.t(&format!("{prefix}.mean")), self.t(&format!("{prefix}.var")), self.t(&format!("{prefix}.scale")), self.t(&format!("{prefix}.shift")));
        let eps = self.w.descriptor().norm_eps;
        for row in x.iter_mut() {
            for c in 0..row.len() {
                let y = s[c] * (row[c] - m[c]) / (v[c] + eps).sqrt() + b[c];
                row[c] = if relu { y.max(0.0) } else { y };
            }
        }
    }

    fn conv(&self, prefix: &str, level: u32, x: &Feats) -> Feats {
        let w = self.t(&format!("{prefix}.w"));
        let b = self.t(&format!("{prefix}.b"));
        let cin = x[0].len();
        let cout = b.len();
        let keys = &self.oct.level(level).keys;
        let index: HashMap<(i64, i64, i64), usize> = keys
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let (a, b, c) = morton::decode(k);
                ((a as i64, b as i64, c as i64), i)
            })
            .collect();
        keys.iter()
            .map(|&k| {
                let (a, bb, c) = morton::decode(k);
                let mut out = b.clone();
                for dx in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dz in -1..=1i64 {
                            let slot = ((dx + 1) * 9 + (dy + 1) * 3 + dz + 1) as usize;
                            if let Some(&j) = index.get(&(a as i64 + dx, bb as i64 + dy, c as i64 + dz)) {
                                for o in 0..cout {
                                    for ci in 0..cin {
                                        out[o] += w[(slot * cin + ci) * cout + o] * x[j][ci];
                                    }
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }

    fn block(&self, prefix: &str, level: u32, x: Feats) -> Feats {
        let mut h = self.conv(&format!("{prefix}.conv1"), level, &x);
        self.norm(&format!("{prefix}.norm1"), &mut h, true);
        let mut h = self.conv(&format!("{prefix}.conv2"), level, &h);
        self.norm(&format!("{prefix}.norm2"), &mut h, false);
        for (r, s) in h.iter_mut().zip(&x) {
            for (v, a) in r.iter_mut().zip(s) {
                *v = (*v + a).max(0.0);
            }
        }
        h
    }

    fn down(&self, prefix: &str, level: u32, x: &Feats, cout: usize) -> Feats {
        let w = self.t(&format!("{prefix}.w"));
        let cin = x[0].len();
        let child_keys = &self.oct.level(level).keys;
        self.oct
            .level(level - 1)
            .keys
            .iter()
            .map(|&pk| {
                let mut out = vec![0.0; cout];
                let mut n = 0.0;
                for (ci, &ck) in child_keys.iter().enumerate() {
                    if ck >> 3 == pk {
                        n += 1.0;
                        let o8 = (ck & 7) as usize;
                        for o in 0..cout {
                            for c in 0..cin {
                                out[o] += w[(o8 * cin + c) * cout + o] * x[ci][c];
                            }
                        }
                    }
                }
                out.iter().map(|v| v / n).collect()
            })
            .collect()
    }

    fn up(&self, name: &str, level: u32, x: &Feats, cout: usize) -> Feats {
        let w = self.t(name);
        let cin = x[0].len();
        let parents = &self.oct.level(level).keys;
        self.oct
            .level(level + 1)
            .keys
            .iter()
            .map(|&ck| {
                let p = parents.iter().position(|&k| k == ck >> 3).unwrap();
                (0..cout).map(|o| (0..cin).map(|c| w[c * cout + o] * x[p][c]).sum()).collect()
            })
            .collect()
    }

    pub fn run(&self) -> Feats {
        let d = self.w.descriptor();
        let depth = d.octree_depth;
        let sig = self.oct.signal();
        let x: Feats = (0..sig.rows()).map(|r| sig.row(r).to_vec()).collect();
        let mut h = self.conv("stem.conv", depth, &x);
        self.norm("stem.norm", &mut h, true);
        let mut skips = vec![];
        for i in 0..d.stages() {
            let level = depth - i as u32;
            for j in 0..d.stage_blocks[i] {
                h = self.block(&format!("stage{i}.block{j}"), level, h);
            }
            let mut dn = self.down(&format!("stage{i}.down"), level, &h, d.next_width(i));
            self.norm(&format!("stage{i}.down.norm"), &mut dn, true);
            skips.push(h);
            h = dn;
        }
        let bl = depth - d.stages() as u32;
        for j in 0..*d.stage_blocks.last().unwrap() {
            h = self.block(&format!("bottleneck.block{j}"), bl, h);
        }
        for i in (0..d.stages()).rev() {
            let level = depth - i as u32;
            let mut u = self.up(&format!("up{i}.w"), level - 1, &h, d.stage_widths[i]);
            self.norm(&format!("up{i}.norm"), &mut u, true);
            let fw = self.t(&format!("up{i}.fuse.w"));
            let fb = self.t(&format!("up{i}.fuse.b"));
            let w = d.stage_widths[i];
            h = skips[i]
                .iter()
                .zip(&u)
                .map(|(s, u)| {
                    let cat: Vec<f64> = s.iter().chain(u).copied().collect();
                    (0..w).map(|o| fb[o] + (0..2 * w).map(|c| fw[c * w + o] * cat[c]).sum::<f64>()).collect()
                })
                .collect();
            self.norm(&format!("up{i}.fuse_norm"), &mut h, true);
            for j in 0..d.stage_blocks[i] {
                h = self.block(&format!("up{i}.block{j}"), level, h);
            }
        }
        h
    }
}
