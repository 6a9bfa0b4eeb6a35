//! Quickhull in 3D. Facet membership decisions use exact orientation signs;
//! floating plane distances only rank candidates and classify points that
//! lie within the tolerance of a facet plane.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::predicates::orient3d;
use crate::geom::Vec3;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct ConvexHull3 {
    facets: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    vertices: Vec<usize>,
    coplanar: Vec<usize>,
    tolerance: f64,
}

impl ConvexHull3 {
    /// Facets wound so that `(b - a) x (c - a)` points outward.
    pub fn facets(&self) -> &[[usize; 3]] {
        &self.facets
    }

    /// Unit outward normals, parallel to `facets`.
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Sorted indices of the input points that are hull vertices.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Sorted indices of non-vertex points within `tolerance` of the plane
    /// of a facet they are not outside of.
    pub fn coplanar(&self) -> &[usize] {
        &self.coplanar
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn edge_count(&self) -> usize {
        self.facets.len() * 3 / 2
    }
}

#[derive(Debug)]
struct Facet {
    v: [usize; 3],
    // nb[i] is the facet across edge (v[i], v[(i + 1) % 3]).
    nb: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    coplanar: Vec<usize>,
    furthest: usize,
    furthest_dist: f64,
    alive: bool,
}

struct Builder<'a> {
    pts: &'a [Vec3],
    tol: f64,
    facets: Vec<Facet>,
    mark: Vec<u32>,
    visible: Vec<bool>,
    start_at: Vec<usize>,
    end_at: Vec<usize>,
    round: u32,
}

impl<'a> Builder<'a> {
    fn new_facet(&mut self, v: [usize; 3]) -> usize {
        let [a, b, c] = v.map(|i| self.pts[i]);
        let n = (b - a).cross(&(c - a));
        let normal = n.try_normalize(0.0).unwrap_or(n);
        self.facets.push(Facet {
            v,
            nb: [NONE; 3],
            offset: normal.dot(&a),
            normal,
            outside: Vec::new(),
            coplanar: Vec::new(),
            furthest: NONE,
            furthest_dist: f64::NEG_INFINITY,
            alive: true,
        });
        self.mark.push(0);
        self.visible.push(false);
        self.facets.len() - 1
    }

    fn above(&self, f: usize, p: usize) -> bool {
        let [a, b, c] = self.facets[f].v;
        orient3d(&self.pts[a], &self.pts[b], &self.pts[c], &self.pts[p]) < 0.0
    }

    fn distance(&self, f: usize, p: usize) -> f64 {
        let f = &self.facets[f];
        f.normal.dot(&self.pts[p]) - f.offset
    }

    fn push_outside(&mut self, f: usize, p: usize) {
        let d = self.distance(f, p);
        let facet = &mut self.facets[f];
        facet.outside.push(p);
        if d > facet.furthest_dist {
            facet.furthest_dist = d;
            facet.furthest = p;
        }
    }

    /// Files `p` under the first candidate facet it is outside of, else the
    /// first whose plane is within tolerance. Returns false if neither.
    fn assign(&mut self, p: usize, candidates: &[usize]) -> bool {
        for &f in candidates {
            if self.above(f, p) {
                self.push_outside(f, p);
                return true;
            }
        }
        for &f in candidates {
            if self.distance(f, p) >= -self.tol {
                self.facets[f].coplanar.push(p);
                return true;
            }
        }
        false
    }

    fn add_point(&mut self, start: usize) {
        let eye = self.facets[start].furthest;
        self.round += 1;
        let round = self.round;

        let mut visible = vec![start];
        self.mark[start] = round;
        self.visible[start] = true;
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut k = 0;
        while k < visible.len() {
            let f = visible[k];
            k += 1;
            for i in 0..3 {
                let nb = self.facets[f].nb[i];
                if self.mark[nb] != round {
                    self.mark[nb] = round;
                    self.visible[nb] = self.above(nb, eye);
                    if self.visible[nb] {
                        visible.push(nb);
                    }
                }
                if !self.visible[nb] {
                    horizon.push((f, i));
                }
            }
        }

        let mut created = Vec::with_capacity(horizon.len());
        for &(f, i) in &horizon {
            let u = self.facets[f].v[i];
            let w = self.facets[f].v[(i + 1) % 3];
            let other = self.facets[f].nb[i];
            let id = self.new_facet([u, w, eye]);
            self.facets[id].nb[0] = other;
            let slot = self.facets[other]
                .nb
                .iter()
                .position(|&x| x == f)
                .expect("adjacency is symmetric");
            self.facets[other].nb[slot] = id;
            self.start_at[u] = id;
            self.end_at[w] = id;
            created.push(id);
        }
        for &id in &created {
            let [u, w, _] = self.facets[id].v;
            self.facets[id].nb[1] = self.start_at[w];
            self.facets[id].nb[2] = self.end_at[u];
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            let facet = &mut self.facets[f];
            facet.alive = false;
            orphans.append(&mut facet.outside);
            orphans.append(&mut facet.coplanar);
        }
        for p in orphans {
            if p != eye {
                self.assign(p, &created);
            }
        }
        for f in visible {
            self.visible[f] = false;
        }
    }
}

fn link(facets: &mut [Facet], ids: &[usize]) {
    let mut edges = HashMap::new();
    for &f in ids {
        for i in 0..3 {
            edges.insert((facets[f].v[i], facets[f].v[(i + 1) % 3]), f);
        }
    }
    for &f in ids {
        for i in 0..3 {
            let (a, b) = (facets[f].v[i], facets[f].v[(i + 1) % 3]);
            facets[f].nb[i] = edges[&(b, a)];
        }
    }
}

fn initial_simplex(pts: &[Vec3]) -> Result<[usize; 4]> {
    let degenerate = |what: &str| Error::DegenerateHull(format!("input points are {what}"));
    let mut extremes = Vec::with_capacity(6);
    for axis in 0..3 {
        let lo = (0..pts.len()).min_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis])).unwrap();
        let hi = (0..pts.len()).max_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis])).unwrap();
        extremes.push(lo);
        extremes.push(hi);
    }
    let (mut i0, mut i1, mut best) = (0, 0, 0.0);
    for &a in &extremes {
        for &b in &extremes {
            let d = (pts[a] - pts[b]).norm_squared();
            if d > best {
                (i0, i1, best) = (a, b, d);
            }
        }
    }
    if best == 0.0 {
        return Err(degenerate("all coincident"));
    }
    let axis = pts[i1] - pts[i0];
    let (mut i2, mut best) = (NONE, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let d = (p - pts[i0]).cross(&axis).norm_squared();
        if d > best {
            (i2, best) = (i, d);
        }
    }
    if i2 == NONE {
        return Err(degenerate("collinear"));
    }
    let n = (pts[i1] - pts[i0]).cross(&(pts[i2] - pts[i0]));
    let (mut i3, mut best) = (NONE, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let d = n.dot(&(p - pts[i0])).abs();
        if d > best {
            (i3, best) = (i, d);
        }
    }
    if i3 == NONE || orient3d(&pts[i0], &pts[i1], &pts[i2], &pts[i3]) == 0.0 {
        i3 = (0..pts.len())
            .find(|&i| orient3d(&pts[i0], &pts[i1], &pts[i2], &pts[i]) != 0.0)
            .ok_or_else(|| degenerate("coplanar"))?;
    }
    if orient3d(&pts[i0], &pts[i1], &pts[i2], &pts[i3]) < 0.0 {
        std::mem::swap(&mut i1, &mut i2);
    }
    Ok([i0, i1, i2, i3])
}

/// Convex hull of `points`. Points within `tolerance` of the plane of a
/// facet are reported in [`ConvexHull3::coplanar`].
pub fn convex_hull3(points: &[Vec3], tolerance: f64) -> Result<ConvexHull3> {
    if points.len() < 4 {
        return Err(Error::InsufficientPoints { needed: 4, have: points.len() });
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidInput("hull input has non-finite coordinates".into()));
    }
    let [p0, p1, p2, p3] = initial_simplex(points)?;
    let n = points.len();
    let mut b = Builder {
        pts: points,
        tol: tolerance,
        facets: Vec::new(),
        mark: Vec::new(),
        visible: Vec::new(),
        start_at: vec![NONE; n],
        end_at: vec![NONE; n],
        round: 0,
    };
    let ids = [
        b.new_facet([p0, p1, p2]),
        b.new_facet([p0, p3, p1]),
        b.new_facet([p1, p3, p2]),
        b.new_facet([p0, p2, p3]),
    ];
    link(&mut b.facets, &ids);
    for p in 0..n {
        if p != p0 && p != p1 && p != p2 && p != p3 {
            b.assign(p, &ids);
        }
    }

    let mut stack: Vec<usize> = ids.to_vec();
    while let Some(f) = stack.pop() {
        if !b.facets[f].alive || b.facets[f].outside.is_empty() {
            continue;
        }
        let before = b.facets.len();
        b.add_point(f);
        stack.extend((before..b.facets.len()).filter(|&g| !b.facets[g].outside.is_empty()));
    }

    let mut is_vertex = vec![false; n];
    let mut facets = Vec::new();
    let mut normals = Vec::new();
    let mut near = Vec::new();
    for f in b.facets.iter().filter(|f| f.alive) {
        for &v in &f.v {
            is_vertex[v] = true;
        }
        facets.push(f.v);
        normals.push(f.normal);
        near.extend_from_slice(&f.coplanar);
    }
    near.retain(|&p| !is_vertex[p]);
    near.sort_unstable();
    near.dedup();
    Ok(ConvexHull3 {
        facets,
        normals,
        vertices: (0..n).filter(|&i| is_vertex[i]).collect(),
        coplanar: near,
        tolerance,
    })
}
