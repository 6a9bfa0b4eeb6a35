//! File formats: OBJ (triangles only) and binary PLY meshes, XYZ and PLY
//! clouds, and NVLB label files.

pub mod ply;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{PointCloud, TriangleMesh, Vec3};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "obj" => read_obj(&mut open(path)?),
        "ply" => ply::read_mesh(&mut open(path)?),
        other => Err(Error::InvalidInput(format!("unsupported mesh format `{other}`"))),
    }
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    match extension(path).as_str() {
        "obj" => write_obj(&mut w, mesh)?,
        "ply" => ply::write_mesh(&mut w, mesh)?,
        other => return Err(Error::InvalidInput(format!("unsupported mesh format `{other}`"))),
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "xyz" | "txt" => read_xyz(&mut open(path)?),
        "ply" => ply::read_cloud(&mut open(path)?),
        other => Err(Error::InvalidInput(format!("unsupported cloud format `{other}`"))),
    }
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    match extension(path).as_str() {
        "xyz" | "txt" => write_xyz(&mut w, cloud)?,
        "ply" => ply::write_cloud(&mut w, cloud)?,
        other => return Err(Error::InvalidInput(format!("unsupported cloud format `{other}`"))),
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::parse(format!("line {line}"), format!("bad number `{tok}`")))
}

/// `v x y z` and `f a b c` lines; `a/b/c` index forms and negative
/// (relative) indices are accepted. Other records are ignored.
pub fn read_obj(r: &mut impl BufRead) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok.take(3).map(|t| parse_f64(t, ln + 1)).collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(Error::parse(format!("obj line {}", ln + 1), "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| Error::parse(format!("obj line {}", ln + 1), format!("bad index `{t}`")))?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        if resolved < 0 {
                            return Err(Error::parse(format!("obj line {}", ln + 1), "index out of range"));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::parse(
                        format!("obj line {}", ln + 1),
                        format!("face has {} vertices; only triangles are supported", idx.len()),
                    ));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_obj(w: &mut impl Write, mesh: &TriangleMesh) -> Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// `x y z [nx ny nz]` per line; blank lines and `#` comments are skipped.
pub fn read_xyz(r: &mut impl BufRead) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line.split_whitespace().map(|t| parse_f64(t, ln + 1)).collect::<Result<_>>()?;
        match v.len() {
            3 => points.push(Vec3::new(v[0], v[1], v[2])),
            6 => {
                points.push(Vec3::new(v[0], v[1], v[2]));
                normals.push(Vec3::new(v[3], v[4], v[5]));
            }
            n => return Err(Error::parse(format!("xyz line {}", ln + 1), format!("expected 3 or 6 values, got {n}"))),
        }
    }
    let normals = match normals.len() {
        0 => None,
        n if n == points.len() => Some(normals.iter().map(|n| n.try_normalize(0.0).unwrap_or(*n)).collect()),
        _ => return Err(Error::parse("xyz", "normals present on only some lines")),
    };
    PointCloud::new(points, normals)
}

pub fn write_xyz(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    for (i, p) in cloud.points().iter().enumerate() {
        match cloud.normals() {
            Some(n) => writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n[i].x, n[i].y, n[i].z)?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

pub const LABEL_MAGIC: &[u8; 4] = b"NVLB";
pub const LABEL_VERSION: u32 = 1;

/// 8-byte header (magic, u32 LE version) followed by one 0/1 byte per point.
pub fn encode_labels(labels: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&LABEL_VERSION.to_le_bytes());
    out.extend(labels.iter().map(|&v| v as u8));
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<bool>> {
    if bytes.len() < 8 || &bytes[..4] != LABEL_MAGIC {
        return Err(Error::parse("labels", "missing NVLB header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != LABEL_VERSION {
        return Err(Error::parse("labels", format!("unsupported version {version}")));
    }
    bytes[8..]
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::parse("labels", format!("byte {i} is {b}, expected 0 or 1"))),
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[bool]) -> Result<()> {
    std::fs::write(path, encode_labels(labels))?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    decode_labels(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    #[test]
    fn label_format_layout() {
        let bytes = encode_labels(&[true, false, true]);
        assert_eq!(&bytes[..8], b"NVLB\x01\x00\x00\x00");
        assert_eq!(&bytes[8..], &[1, 0, 1]);
        assert_eq!(decode_labels(&bytes).unwrap(), vec![true, false, true]);
        assert!(decode_labels(b"NVLB\x02\x00\x00\x00").is_err());
        assert!(decode_labels(b"NVLB\x01\x00\x00\x00\x07").is_err());
        assert!(decode_labels(b"XXXX").is_err());
    }

    #[test]
    fn obj_round_trip_and_face_forms() {
        let mesh = shapes::torus(1.0, 0.25, 8, 6);
        let mut buf = Vec::new();
        write_obj(&mut buf, &mesh).unwrap();
        let back = read_obj(&mut buf.as_slice()).unwrap();
        assert_eq!(back, mesh);

        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n";
        let m = read_obj(&mut text.as_bytes()).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        assert!(read_obj(&mut "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n".as_bytes()).is_err());
    }

    #[test]
    fn xyz_with_and_without_normals() {
        let c = read_xyz(&mut "0 0 0\n1 2 3\n".as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.normals().is_none());
        let c = read_xyz(&mut "# header\n0 0 0 0 0 2\n".as_bytes()).unwrap();
        assert_eq!(c.normals().unwrap()[0], Vec3::z());
        assert!(read_xyz(&mut "0 0\n".as_bytes()).is_err());
    }
}
