//! Incremental Bowyer-Watson triangulation with exact predicates.

use crate::error::{Error, Result};
use crate::geom::predicates::{incircle, orient2d};

const NONE: u32 = u32::MAX;
/// Super-triangle size relative to the input extent.
const SUPER_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [u32; 3],
    /// `n[i]` lies across edge `(v[i], v[i + 1])`.
    n: [u32; 3],
    alive: bool,
}

struct Builder {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    free: Vec<u32>,
    mark: Vec<u32>,
    stamp: u32,
    last: u32,
}

impl Builder {
    fn p(&self, i: u32) -> [f64; 2] {
        self.pts[i as usize]
    }

    fn alloc(&mut self, t: Tri) -> u32 {
        if let Some(i) = self.free.pop() {
            self.tris[i as usize] = t;
            self.mark[i as usize] = 0;
            i
        } else {
            self.tris.push(t);
            self.mark.push(0);
            (self.tris.len() - 1) as u32
        }
    }

    fn in_circle(&self, t: u32, q: [f64; 2]) -> bool {
        let v = self.tris[t as usize].v;
        incircle(self.p(v[0]), self.p(v[1]), self.p(v[2]), q) > 0.0
    }

    /// Triangle whose closure contains `q`, or `Err(vertex)` when `q`
    /// coincides with an existing vertex.
    fn locate(&self, q: [f64; 2]) -> std::result::Result<u32, u32> {
        let mut t = self.last;
        if !self.tris[t as usize].alive {
            t = self.tris.iter().position(|t| t.alive).unwrap() as u32;
        }
        let mut steps = 0usize;
        let mut rot = 0usize;
        'walk: loop {
            let tri = self.tris[t as usize];
            rot = rot.wrapping_add(1);
            for j in 0..3 {
                let i = (j + rot) % 3;
                let a = self.p(tri.v[i]);
                let b = self.p(tri.v[(i + 1) % 3]);
                if orient2d(a, b, q) < 0.0 && tri.n[i] != NONE {
                    t = tri.n[i];
                    steps += 1;
                    if steps > 4 * self.tris.len() + 16 {
                        break 'walk;
                    }
                    continue 'walk;
                }
            }
            return self.check_vertex(t, q);
        }
        // Exhaustive fallback.
        for (i, tri) in self.tris.iter().enumerate() {
            if tri.alive
                && (0..3).all(|e| orient2d(self.p(tri.v[e]), self.p(tri.v[(e + 1) % 3]), q) >= 0.0)
            {
                return self.check_vertex(i as u32, q);
            }
        }
        unreachable!("point outside the super-triangle")
    }

    fn check_vertex(&self, t: u32, q: [f64; 2]) -> std::result::Result<u32, u32> {
        for &v in &self.tris[t as usize].v {
            if self.p(v) == q {
                return Err(v);
            }
        }
        Ok(t)
    }

    fn insert(&mut self, pi: u32) -> bool {
        let q = self.p(pi);
        let start = match self.locate(q) {
            Ok(t) => t,
            Err(_) => return false,
        };
        self.stamp += 1;
        let stamp = self.stamp;
        let mut cavity = vec![start];
        self.mark[start as usize] = stamp;
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for &nb in &self.tris[t as usize].n {
                if nb != NONE && self.mark[nb as usize] != stamp && self.in_circle(nb, q) {
                    self.mark[nb as usize] = stamp;
                    cavity.push(nb);
                }
            }
        }
        // Boundary edges in counterclockwise order around the cavity.
        let mut boundary = Vec::new();
        for &t in &cavity {
            let tri = self.tris[t as usize];
            for i in 0..3 {
                let nb = tri.n[i];
                if nb == NONE || self.mark[nb as usize] != stamp {
                    boundary.push((tri.v[i], tri.v[(i + 1) % 3], nb));
                }
            }
        }
        for &t in &cavity {
            self.tris[t as usize].alive = false;
            self.free.push(t);
        }
        let mut new_ids = Vec::with_capacity(boundary.len());
        for &(a, b, outer) in &boundary {
            let id = self.alloc(Tri {
                v: [a, b, pi],
                n: [outer, NONE, NONE],
                alive: true,
            });
            if outer != NONE {
                let o = &mut self.tris[outer as usize];
                for i in 0..3 {
                    if o.v[i] == b && o.v[(i + 1) % 3] == a {
                        o.n[i] = id;
                    }
                }
            }
            new_ids.push(id);
        }
        // Link the fan: edge (b, p) of the triangle starting at a meets edge
        // (p, b) of the triangle starting at b.
        let mut by_start = std::collections::HashMap::with_capacity(boundary.len());
        for (k, &(a, _, _)) in boundary.iter().enumerate() {
            by_start.insert(a, new_ids[k]);
        }
        for (k, &(_, b, _)) in boundary.iter().enumerate() {
            let t = new_ids[k];
            let next = by_start[&b];
            self.tris[t as usize].n[1] = next;
            self.tris[next as usize].n[2] = t;
        }
        self.last = *new_ids.last().unwrap();
        true
    }
}

fn spatial_order(points: &[[f64; 2]]) -> Vec<u32> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let spread = |a: usize| (hi[a] - lo[a]).max(f64::MIN_POSITIVE);
    let key = |p: &[f64; 2]| {
        let q = |a: usize| (((p[a] - lo[a]) / spread(a)) * 65535.0) as u32;
        let (x, y) = (q(0), q(1));
        let mut k = 0u64;
        for b in (0..16).rev() {
            k = (k << 2) | (((y >> b) & 1) << 1 | ((x >> b) & 1)) as u64;
        }
        k
    };
    let mut idx: Vec<u32> = (0..points.len() as u32).collect();
    idx.sort_by_key(|&i| (key(&points[i as usize]), i));
    idx
}

/// Delaunay triangles (counterclockwise index triples) of `points`.
/// Duplicate points are ignored after their first occurrence.
pub fn delaunay2(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            have: points.len(),
        });
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("non-finite point in triangulation input".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let c = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
    let d = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE) * SUPER_SCALE;
    let n = points.len() as u32;
    let mut pts = points.to_vec();
    pts.push([c[0] - 2.0 * d, c[1] - d]);
    pts.push([c[0] + 2.0 * d, c[1] - d]);
    pts.push([c[0], c[1] + 2.0 * d]);
    let mut b = Builder {
        pts,
        tris: vec![Tri {
            v: [n, n + 1, n + 2],
            n: [NONE; 3],
            alive: true,
        }],
        free: Vec::new(),
        mark: vec![0],
        stamp: 0,
        last: 0,
    };
    for i in spatial_order(points) {
        b.insert(i);
    }
    let out: Vec<[usize; 3]> = b
        .tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v.map(|v| v as usize))
        .collect();
    if out.is_empty() {
        return Err(Error::DegenerateTriangulation("all points are collinear".into()));
    }
    Ok(out)
}
