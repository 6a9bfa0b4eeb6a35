//! Binary little-endian PLY: vertex positions, optional normals, and
//! triangle faces.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::parse("ply header", format!("unknown scalar type `{other}`"))),
        })
    }

    fn read(self, r: &mut impl Read) -> Result<f64> {
        macro_rules! rd {
            ($t:ty) => {{
                let mut b = [0u8; std::mem::size_of::<$t>()];
                r.read_exact(&mut b)?;
                <$t>::from_le_bytes(b) as f64
            }};
        }
        Ok(match self {
            Scalar::I8 => rd!(i8),
            Scalar::U8 => rd!(u8),
            Scalar::I16 => rd!(i16),
            Scalar::U16 => rd!(u16),
            Scalar::I32 => rd!(i32),
            Scalar::U32 => rd!(u32),
            Scalar::F32 => rd!(f32),
            Scalar::F64 => rd!(f64),
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Default)]
struct PlyData {
    vertices: Vec<Vec3>,
    normals: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
}

fn read_header(r: &mut impl BufRead) -> Result<Vec<Element>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::parse("ply header", "missing `ply` magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::parse("ply header", "unexpected end of file"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::parse("ply header", format!("unsupported format `{fmt}`")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse("ply header", format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("ply header", "property before element"))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("ply header", "property before element"))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                });
            }
            other => return Err(Error::parse("ply header", format!("unrecognized line {other:?}"))),
        }
    }
    Ok(elements)
}

fn read_body(r: &mut impl Read, elements: &[Element]) -> Result<PlyData> {
    let mut data = PlyData::default();
    for el in elements {
        let prop_index = |n: &str| {
            el.props
                .iter()
                .position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
        };
        let xyz = [prop_index("x"), prop_index("y"), prop_index("z")];
        let nxyz = [prop_index("nx"), prop_index("ny"), prop_index("nz")];
        let has_normals = nxyz.iter().all(Option::is_some);
        let mut values = vec![0.0f64; el.props.len()];
        for row in 0..el.count {
            let mut face: Option<Vec<u32>> = None;
            for (k, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => values[k] = ty.read(r)?,
                    Property::List { name, count, item } => {
                        let n = count.read(r)? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(item.read(r)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            face = Some(items.iter().map(|&v| v as u32).collect());
                        }
                    }
                }
            }
            if el.name == "vertex" {
                let get = |i: Option<usize>| i.map(|i| values[i]).unwrap_or(0.0);
                if xyz.iter().any(Option::is_none) {
                    return Err(Error::parse("ply vertex", "missing x/y/z"));
                }
                data.vertices.push(Vec3::new(get(xyz[0]), get(xyz[1]), get(xyz[2])));
                if has_normals {
                    data.normals.push(Vec3::new(get(nxyz[0]), get(nxyz[1]), get(nxyz[2])));
                }
            } else if let Some(f) = face {
                if f.len() != 3 {
                    return Err(Error::parse("ply face", format!("face {row} has {} vertices; only triangles are supported", f.len())));
                }
                data.faces.push([f[0], f[1], f[2]]);
            }
        }
    }
    Ok(data)
}

fn read_ply(r: &mut impl BufRead) -> Result<PlyData> {
    let elements = read_header(r)?;
    read_body(r, &elements)
}

pub fn read_mesh(r: &mut impl BufRead) -> Result<TriangleMesh> {
    let data = read_ply(r)?;
    TriangleMesh::new(data.vertices, data.faces)
}

pub fn read_cloud(r: &mut impl BufRead) -> Result<PointCloud> {
    let data = read_ply(r)?;
    let normals = (!data.normals.is_empty()).then(|| {
        data.normals
            .iter()
            .map(|n| n.try_normalize(0.0).unwrap_or(*n))
            .collect()
    });
    PointCloud::new(data.vertices, normals)
}

fn write_header(w: &mut impl Write, vertices: usize, normals: bool, faces: Option<usize>) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {vertices}")?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    if normals {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property float {p}")?;
        }
    }
    if let Some(f) = faces {
        writeln!(w, "element face {f}")?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

fn write_vec(w: &mut impl Write, v: &Vec3) -> Result<()> {
    for c in v.iter() {
        w.write_all(&(*c as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_cloud(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    write_header(w, cloud.len(), cloud.normals().is_some(), None)?;
    for i in 0..cloud.len() {
        write_vec(w, &cloud.points()[i])?;
        if let Some(n) = cloud.normals() {
            write_vec(w, &n[i])?;
        }
    }
    Ok(())
}

/// Oriented points for external surface reconstruction tools.
pub fn write_oriented_points(w: &mut impl Write, points: &[Vec3], normals: &[Vec3]) -> Result<()> {
    write_header(w, points.len(), true, None)?;
    for (p, n) in points.iter().zip(normals) {
        write_vec(w, p)?;
        write_vec(w, n)?;
    }
    Ok(())
}

pub fn write_mesh(w: &mut impl Write, mesh: &TriangleMesh) -> Result<()> {
    write_header(w, mesh.vertices().len(), false, Some(mesh.triangles().len()))?;
    for v in mesh.vertices() {
        write_vec(w, v)?;
    }
    for t in mesh.triangles() {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}
