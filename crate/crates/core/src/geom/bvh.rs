//! Bounding volume hierarchy over mesh triangles, used for segment
//! occlusion queries.

use super::intersect::ShearedRay;
use super::{Aabb, TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub const MAX_LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BvhNode {
    Inner { bounds: Aabb, left: u32, right: u32 },
    Leaf { bounds: Aabb, start: u32, count: u32 },
}

impl BvhNode {
    pub fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Inner { bounds, .. } | BvhNode::Leaf { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangle index (into the source mesh) for each leaf slot.
    order: Vec<u32>,
    /// Corners, stored in leaf order.
    corners: Vec<[Vec3; 3]>,
    degenerate: Vec<u32>,
}

impl Bvh {
    /// Median split on the longest centroid axis; zero-area triangles are
    /// excluded and reported through [`Bvh::degenerate_triangles`].
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::InvalidMesh("cannot build a BVH over an empty mesh".into()));
        }
        let mut degenerate = Vec::new();
        let mut prims: Vec<(u32, Vec3, Aabb)> = Vec::with_capacity(mesh.triangles().len());
        for t in 0..mesh.triangles().len() {
            if mesh.face_cross(t).norm_squared() == 0.0 {
                degenerate.push(t as u32);
                continue;
            }
            let c = mesh.corners(t);
            let b = Aabb::from_points(&c);
            prims.push((t as u32, (c[0] + c[1] + c[2]) / 3.0, b));
        }
        if prims.is_empty() {
            return Err(Error::InvalidMesh("every triangle is degenerate".into()));
        }
        if !degenerate.is_empty() {
            log::warn!("BVH build skipped {} degenerate triangles", degenerate.len());
        }
        let mut nodes = Vec::with_capacity(2 * prims.len() / MAX_LEAF_SIZE + 1);
        build_recursive(&mut prims, 0, &mut nodes);
        let order: Vec<u32> = prims.iter().map(|p| p.0).collect();
        let corners = order.iter().map(|&t| mesh.corners(t as usize)).collect();
        Ok(Bvh {
            nodes,
            order,
            corners,
            degenerate,
        })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn root(&self) -> &BvhNode {
        &self.nodes[0]
    }

    /// Source-mesh triangle indices held by a leaf.
    pub fn leaf_triangles(&self, node: &BvhNode) -> &[u32] {
        match *node {
            BvhNode::Leaf { start, count, .. } => &self.order[start as usize..(start + count) as usize],
            BvhNode::Inner { .. } => &[],
        }
    }

    pub fn degenerate_triangles(&self) -> &[u32] {
        &self.degenerate
    }

    pub fn triangle_count(&self) -> usize {
        self.order.len()
    }

    /// True iff a triangle meets the segment `a -> b` strictly more than
    /// `eps` (world units) away from either endpoint.
    pub fn segment_hits(&self, a: &Vec3, b: &Vec3, eps: f64) -> bool {
        let dir = b - a;
        let len = dir.norm();
        if len <= 2.0 * eps {
            return false;
        }
        let t0 = eps / len;
        let t1 = 1.0 - t0;
        let ray = ShearedRay::new(*a, dir);
        self.any_hit(&ray, &dir, t0, t1, |t| t > t0 && t < t1)
    }

    /// Number of triangle crossings of the ray `origin + t * dir`, `t > 0`.
    pub fn ray_crossings(&self, origin: &Vec3, dir: &Vec3) -> usize {
        let ray = ShearedRay::new(*origin, *dir);
        let inv = dir.map(|c| 1.0 / c);
        let mut count = 0;
        let mut stack = vec![0u32];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            if !node.bounds().intersects_segment(origin, &inv, 0.0, f64::INFINITY) {
                continue;
            }
            match *node {
                BvhNode::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
                BvhNode::Leaf { start, count: n, .. } => {
                    for c in &self.corners[start as usize..(start + n) as usize] {
                        if matches!(ray.hit(&c[0], &c[1], &c[2]), Some(t) if t > 0.0) {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    /// Majority vote of crossing parity over three fixed skew directions.
    pub fn contains_point(&self, p: &Vec3) -> bool {
        const DIRS: [[f64; 3]; 3] = [
            [0.5773, 0.3187, 0.7519],
            [-0.2711, 0.8343, -0.4798],
            [0.6107, -0.5521, -0.5676],
        ];
        let inside = DIRS
            .iter()
            .filter(|d| self.ray_crossings(p, &Vec3::from(**d)) % 2 == 1)
            .count();
        inside >= 2
    }

    fn any_hit(&self, ray: &ShearedRay, dir: &Vec3, t0: f64, t1: f64, accept: impl Fn(f64) -> bool) -> bool {
        let inv = dir.map(|c| 1.0 / c);
        let mut stack = [0u32; 64];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !node.bounds().intersects_segment(&ray.origin, &inv, t0, t1) {
                continue;
            }
            match *node {
                BvhNode::Inner { left, right, .. } => {
                    stack[top] = left;
                    stack[top + 1] = right;
                    top += 2;
                }
                BvhNode::Leaf { start, count, .. } => {
                    for c in &self.corners[start as usize..(start + count) as usize] {
                        if let Some(t) = ray.hit(&c[0], &c[1], &c[2]) {
                            if accept(t) {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

fn build_recursive(prims: &mut [(u32, Vec3, Aabb)], start: usize, nodes: &mut Vec<BvhNode>) -> u32 {
    let bounds = prims.iter().fold(Aabb::empty(), |acc, p| acc.merge(&p.2));
    let index = nodes.len() as u32;
    if prims.len() <= MAX_LEAF_SIZE {
        nodes.push(BvhNode::Leaf {
            bounds,
            start: start as u32,
            count: prims.len() as u32,
        });
        return index;
    }
    let centroid_bounds = Aabb::from_points(prims.iter().map(|p| &p.1));
    let axis = centroid_bounds.longest_axis();
    let mid = prims.len() / 2;
    prims.select_nth_unstable_by(mid, |a, b| a.1[axis].total_cmp(&b.1[axis]));
    // Placeholder, patched once both children exist.
    nodes.push(BvhNode::Leaf {
        bounds,
        start: 0,
        count: 0,
    });
    let (lo, hi) = prims.split_at_mut(mid);
    let left = build_recursive(lo, start, nodes);
    let right = build_recursive(hi, start + mid, nodes);
    nodes[index as usize] = BvhNode::Inner { bounds, left, right };
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(offset: Vec3) -> (Vec<Vec3>, [u32; 3]) {
        (
            vec![offset, offset + Vec3::x(), offset + Vec3::y()],
            [0, 1, 2],
        )
    }

    #[test]
    fn single_triangle_is_one_leaf() {
        let (v, t) = tri(Vec3::zeros());
        let mesh = TriangleMesh::new(v, vec![t]).unwrap();
        let bvh = Bvh::build(&mesh).unwrap();
        assert_eq!(bvh.nodes().len(), 1);
        assert!(matches!(bvh.root(), BvhNode::Leaf { count: 1, .. }));
        let c = Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0);
        assert!(bvh.segment_hits(&(c - Vec3::z()), &(c + Vec3::z()), 1e-6));
    }

    #[test]
    fn disjoint_triangles_split_into_two_children() {
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        // Five copies each in two far-apart clusters so the root must split.
        for k in 0..10u32 {
            let off = if k < 5 { Vec3::new(0.0, 0.0, k as f64 * 0.01) } else { Vec3::new(100.0, 0.0, k as f64 * 0.01) };
            let (v, _) = tri(off);
            let b = verts.len() as u32;
            verts.extend(v);
            tris.push([b, b + 1, b + 2]);
        }
        let mesh = TriangleMesh::new(verts, tris).unwrap();
        let bvh = Bvh::build(&mesh).unwrap();
        let BvhNode::Inner { left, right, .. } = *bvh.root() else {
            panic!("root should be inner");
        };
        let lb = *bvh.nodes()[left as usize].bounds();
        let rb = *bvh.nodes()[right as usize].bounds();
        assert!(lb.max.x < rb.min.x || rb.max.x < lb.min.x);
        let probe = |x: f64| bvh.segment_hits(&Vec3::new(x, 0.2, -1.0), &Vec3::new(x, 0.2, 1.0), 1e-6);
        assert!(probe(0.2));
        assert!(probe(100.2));
        assert!(!probe(50.0));
    }

    #[test]
    fn degenerate_triangles_are_reported() {
        let verts = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(2.0, 0.0, 0.0)];
        let mesh = TriangleMesh::new(verts, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        let bvh = Bvh::build(&mesh).unwrap();
        assert_eq!(bvh.degenerate_triangles(), &[1]);
        assert_eq!(bvh.triangle_count(), 1);
    }

    #[test]
    fn empty_mesh_rejected() {
        let mesh = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(Bvh::build(&mesh), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn leaves_cover_each_triangle_once() {
        let mesh = crate::geom::shapes::icosphere(6);
        let bvh = Bvh::build(&mesh).unwrap();
        let mut seen = vec![0u32; mesh.triangles().len()];
        for node in bvh.nodes() {
            if let BvhNode::Leaf { count, bounds, .. } = node {
                assert!(*count as usize <= MAX_LEAF_SIZE);
                for &t in bvh.leaf_triangles(node) {
                    seen[t as usize] += 1;
                    for c in mesh.corners(t as usize) {
                        assert!(bounds.contains(&c, 0.0));
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }
}
