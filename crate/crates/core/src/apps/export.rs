use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::optimize::TrajectoryPoint;
use super::reconstruct::ViewMesh;
use super::shadow::ShadowMap;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3};

/// OBJ with only the referenced points, renumbered, and one normal per face.
pub fn write_view_mesh_obj(w: &mut impl Write, cloud: &PointCloud, mesh: &ViewMesh) -> Result<()> {
    let used = mesh.vertices();
    let mut remap = vec![0usize; cloud.len()];
    for (k, &i) in used.iter().enumerate() {
        remap[i] = k + 1;
        let p = cloud.points()[i];
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for n in &mesh.normals {
        writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
    }
    for (f, t) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = t.map(|i| remap[i]);
        let n = f + 1;
        writeln!(w, "f {a}//{n} {b}//{n} {c}//{n}")?;
    }
    Ok(())
}

pub fn save_view_mesh_obj(path: impl AsRef<Path>, cloud: &PointCloud, mesh: &ViewMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_view_mesh_obj(&mut w, cloud, mesh)?;
    Ok(w.flush()?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ShadowSidecar {
    pub width: usize,
    pub height: usize,
    pub light: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_y_degrees: f64,
    /// Camera-space depth at gray level 1; level 65535 maps to `depth_max`
    /// and level 0 marks texels no surface covers.
    pub depth_min: f64,
    pub depth_max: f64,
    pub bias: f64,
    pub covered_texels: usize,
}

impl ShadowSidecar {
    pub fn new(map: &ShadowMap) -> Self {
        let (lo, hi) = depth_range(map);
        let v = |p: Vec3| [p.x, p.y, p.z];
        ShadowSidecar {
            width: map.resolution,
            height: map.resolution,
            light: v(map.camera.position),
            target: v(map.camera.target),
            up: v(map.camera.up),
            fov_y_degrees: map.camera.fov_y.to_degrees(),
            depth_min: lo,
            depth_max: hi,
            bias: map.bias,
            covered_texels: map.covered(),
        }
    }
}

fn depth_range(map: &ShadowMap) -> (f64, f64) {
    let finite = map.depth.iter().copied().filter(|d| d.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

/// Binary 16-bit PGM (P5, big-endian samples).
pub fn write_shadow_pgm(w: &mut impl Write, map: &ShadowMap) -> Result<()> {
    let (lo, hi) = depth_range(map);
    let span = hi - lo;
    write!(w, "P5\n{} {}\n65535\n", map.resolution, map.resolution)?;
    let mut buf = Vec::with_capacity(2 * map.depth.len());
    for &d in &map.depth {
        let level: u16 = if !d.is_finite() {
            0
        } else if span > 0.0 {
            1 + ((d - lo) / span * 65534.0).round() as u16
        } else {
            1
        };
        buf.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Writes `<stem>.pgm` and `<stem>.json`.
pub fn save_shadow_map(pgm: impl AsRef<Path>, map: &ShadowMap) -> Result<()> {
    let pgm = pgm.as_ref();
    let mut w = BufWriter::new(File::create(pgm)?);
    write_shadow_pgm(&mut w, map)?;
    w.flush()?;
    let json = pgm.with_extension("json");
    std::fs::write(json, serde_json::to_string_pretty(&ShadowSidecar::new(map))?)?;
    Ok(())
}

pub fn save_oriented_ply(path: impl AsRef<Path>, cloud: &PointCloud, normals: &[Vec3]) -> Result<()> {
    if normals.len() != cloud.len() {
        return Err(Error::Shape(format!("{} normals for {} points", normals.len(), cloud.len())));
    }
    let mut w = BufWriter::new(File::create(path)?);
    crate::io::ply::write_oriented_points(&mut w, cloud.points(), normals)?;
    Ok(w.flush()?)
}

pub fn write_trajectory_csv(w: &mut impl Write, trajectory: &[TrajectoryPoint]) -> Result<()> {
    writeln!(w, "step,x,y,z,score")?;
    for (k, t) in trajectory.iter().enumerate() {
        let p = t.viewpoint.position;
        writeln!(w, "{k},{},{},{},{}", p.x, p.y, p.z, t.score)?;
    }
    Ok(())
}
