//! Procedural watertight meshes used for labels, tests and the synthetic
//! dataset.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{TriangleMesh, Vec3};

fn icosahedron() -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v.iter().map(|c| Vec3::from(*c).normalize()).collect(), f)
}

/// Geodesic unit sphere: each icosahedron face split into `frequency^2`
/// triangles, vertices projected to the sphere. `20 * frequency^2` faces.
pub fn icosphere(frequency: u32) -> TriangleMesh {
    let n = frequency.max(1);
    let (base, faces) = icosahedron();
    // Vertices are keyed by their integer barycentric combination of base
    // vertices so that edge vertices shared by two faces are bit-identical.
    let mut index: HashMap<Vec<(u32, u32)>, u32> = HashMap::new();
    let mut verts: Vec<Vec3> = Vec::new();
    let mut vertex = |combo: [(u32, u32); 3]| -> u32 {
        let mut key: Vec<(u32, u32)> = combo.iter().copied().filter(|c| c.1 > 0).collect();
        key.sort_unstable();
        *index.entry(key.clone()).or_insert_with(|| {
            let p: Vec3 = key.iter().map(|&(v, w)| base[v as usize] * w as f64).sum();
            verts.push(p.normalize());
            (verts.len() - 1) as u32
        })
    };
    let mut tris = Vec::with_capacity(20 * (n * n) as usize);
    for f in &faces {
        let id = |i: u32, j: u32| [(f[0], n - i - j), (f[1], i), (f[2], j)];
        let mut grid = vec![vec![0u32; (n + 1) as usize]; (n + 1) as usize];
        for i in 0..=n {
            for j in 0..=(n - i) {
                grid[i as usize][j as usize] = vertex(id(i, j));
            }
        }
        for i in 0..n {
            for j in 0..(n - i) {
                let (i, j) = (i as usize, j as usize);
                tris.push([grid[i][j], grid[i + 1][j], grid[i][j + 1]]);
                if i + j + 1 < n as usize {
                    tris.push([grid[i + 1][j], grid[i + 1][j + 1], grid[i][j + 1]]);
                }
            }
        }
    }
    TriangleMesh::new(verts, tris).expect("icosphere construction is valid")
}

/// Axis-aligned box centred at the origin.
pub fn cuboid(half: Vec3) -> TriangleMesh {
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let mut tris = Vec::with_capacity(12);
    for q in quads {
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    TriangleMesh::new(v, tris).expect("valid cuboid")
}

/// Torus around the z axis with tube radius `minor`.
pub fn torus(major: f64, minor: f64, segments: u32, sides: u32) -> TriangleMesh {
    let (nu, nv) = (segments.max(3), sides.max(3));
    let mut v = Vec::with_capacity((nu * nv) as usize);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let w = 2.0 * PI * j as f64 / nv as f64;
            let r = major + minor * w.cos();
            v.push(Vec3::new(r * u.cos(), r * u.sin(), minor * w.sin()));
        }
    }
    let id = |i: u32, j: u32| (i % nu) * nv + (j % nv);
    let mut tris = Vec::with_capacity((2 * nu * nv) as usize);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    TriangleMesh::new(v, tris).expect("valid torus")
}

/// Surface of revolution around z from a profile `(rho, z)` running from
/// the bottom pole to the top pole (both poles excluded from the profile).
fn revolve(profile: &[(f64, f64)], bottom: f64, top: f64, segments: u32) -> TriangleMesh {
    let ns = segments.max(3);
    let rings = profile.len() as u32;
    let mut v = vec![Vec3::new(0.0, 0.0, bottom)];
    for &(rho, z) in profile {
        for s in 0..ns {
            let a = 2.0 * PI * s as f64 / ns as f64;
            v.push(Vec3::new(rho * a.cos(), rho * a.sin(), z));
        }
    }
    v.push(Vec3::new(0.0, 0.0, top));
    let top_id = v.len() as u32 - 1;
    let ring = |r: u32, s: u32| 1 + r * ns + (s % ns);
    let mut tris = Vec::new();
    for s in 0..ns {
        tris.push([0, ring(0, s + 1), ring(0, s)]);
        tris.push([top_id, ring(rings - 1, s), ring(rings - 1, s + 1)]);
    }
    for r in 0..rings - 1 {
        for s in 0..ns {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    TriangleMesh::new(v, tris).expect("valid surface of revolution")
}

/// Capsule along z: cylinder of `half_length` capped by hemispheres.
pub fn capsule(radius: f64, half_length: f64, segments: u32) -> TriangleMesh {
    let cap_rings = (segments / 4).max(2);
    let mut profile = Vec::new();
    for k in 1..=cap_rings {
        let phi = -PI / 2.0 + (PI / 2.0) * k as f64 / cap_rings as f64;
        profile.push((radius * phi.cos(), -half_length + radius * phi.sin()));
    }
    for k in 0..cap_rings {
        let phi = (PI / 2.0) * k as f64 / cap_rings as f64;
        profile.push((radius * phi.cos(), half_length + radius * phi.sin()));
    }
    revolve(&profile, -half_length - radius, half_length + radius, segments)
}

/// Flat `n x n` grid of quads on z = 0 covering `[-half, half]^2`, facing +z.
/// Open surface; not watertight.
pub fn planar_grid(half: f64, n: u32) -> TriangleMesh {
    let n = n.max(1);
    let mut v = Vec::with_capacity(((n + 1) * (n + 1)) as usize);
    for i in 0..=n {
        for j in 0..=n {
            let x = -half + 2.0 * half * j as f64 / n as f64;
            let y = -half + 2.0 * half * i as f64 / n as f64;
            v.push(Vec3::new(x, y, 0.0));
        }
    }
    let id = |i: u32, j: u32| i * (n + 1) + j;
    let mut tris = Vec::with_capacity((2 * n * n) as usize);
    for i in 0..n {
        for j in 0..n {
            tris.push([id(i, j), id(i, j + 1), id(i + 1, j + 1)]);
            tris.push([id(i, j), id(i + 1, j + 1), id(i + 1, j)]);
        }
    }
    TriangleMesh::new(v, tris).expect("valid grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_face_count_and_closure() {
        for f in [1, 2, 5, 22] {
            let m = icosphere(f);
            assert_eq!(m.triangles().len(), 20 * (f * f) as usize);
            assert!(m.is_watertight(), "frequency {f}");
            // Euler characteristic of a sphere.
            let e = m.triangles().len() * 3 / 2;
            assert_eq!(m.vertices().len() + m.triangles().len() - e, 2);
        }
    }

    #[test]
    fn icosphere_faces_point_outward() {
        let m = icosphere(4);
        for t in 0..m.triangles().len() {
            let [a, b, c] = m.corners(t);
            assert!(m.face_cross(t).dot(&(a + b + c)) > 0.0);
        }
    }

    fn outward(m: &TriangleMesh) -> bool {
        // Divergence theorem: signed volume is positive for outward winding.
        let vol: f64 = (0..m.triangles().len())
            .map(|t| {
                let [a, b, c] = m.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        vol > 0.0
    }

    #[test]
    fn closed_primitives() {
        let c = cuboid(Vec3::new(1.0, 0.5, 0.25));
        assert!(c.is_watertight() && outward(&c));
        let t = torus(1.0, 0.3, 24, 12);
        assert!(t.is_watertight() && outward(&t));
        let cap = capsule(0.5, 1.0, 24);
        assert!(cap.is_watertight() && outward(&cap));
    }

    #[test]
    fn grid_is_open() {
        let g = planar_grid(1.0, 4);
        assert_eq!(g.triangles().len(), 32);
        assert!(!g.is_watertight());
        assert!((g.total_area() - 4.0).abs() < 1e-12);
    }
}
