//! Procedural training and evaluation sets: meshes, sampled clouds,
//! viewpoints and oracle labels, indexed by a JSON manifest.

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{add_noise, sample_surface, sample_viewpoints, shapes, PointCloud, TriangleMesh, Vec3, Viewpoint, VisibilityOracle};
use crate::io;

pub const MANIFEST_VERSION: u32 = 1;
/// Desk-scale default cloud size.
pub const DEFAULT_POINTS: usize = 50_000;
/// Cloud size used for the reported experiments.
pub const FULL_SCALE_POINTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Sphere,
    Box,
    Torus,
    Capsule,
    /// Union of two or three disjoint primitives.
    Csg,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 5] = [ShapeFamily::Sphere, ShapeFamily::Box, ShapeFamily::Torus, ShapeFamily::Capsule, ShapeFamily::Csg];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Box => "box",
            ShapeFamily::Torus => "torus",
            ShapeFamily::Capsule => "capsule",
            ShapeFamily::Csg => "csg",
        }
    }

    /// A random watertight instance of the family.
    pub fn instance(self, rng: &mut impl Rng) -> TriangleMesh {
        match self {
            ShapeFamily::Sphere => {
                let r = rng.random_range(0.5..1.0);
                shapes::icosphere(16).transformed(|p| p * r)
            }
            ShapeFamily::Csg => {
                let parts = rng.random_range(2..=3);
                let mut mesh: Option<TriangleMesh> = None;
                let mut x = 0.0;
                for k in 0..parts {
                    let fam = [ShapeFamily::Sphere, ShapeFamily::Box, ShapeFamily::Torus, ShapeFamily::Capsule][rng.random_range(0..4)];
                    let part = fam.instance(rng);
                    let radius = part.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
                    if k > 0 {
                        x += radius + rng.random_range(0.05..0.3);
                    }
                    let lift = Vec3::new(x, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                    let placed = part.transformed(|p| p + lift);
                    x += radius;
                    match mesh.as_mut() {
                        Some(m) => m.append(&placed),
                        None => mesh = Some(placed),
                    }
                }
                let m = mesh.unwrap();
                let c = m.aabb().center();
                m.transformed(|p| p - c)
            }
            fam => {
                let base = match fam {
                    ShapeFamily::Box => shapes::cuboid(Vec3::new(rng.random_range(0.3..1.0), rng.random_range(0.3..1.0), rng.random_range(0.3..1.0))),
                    ShapeFamily::Torus => {
                        let major = rng.random_range(0.6..1.0);
                        shapes::torus(major, major * rng.random_range(0.15..0.4), 48, 24)
                    }
                    _ => shapes::capsule(rng.random_range(0.25..0.5), rng.random_range(0.3..0.8), 32),
                };
                let rot = random_rotation(rng);
                base.transformed(|p| rot * p)
            }
        }
    }
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown shape family `{s}`")))
    }
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Vector4::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q));
        }
    }
}

/// SplitMix64 step: decorrelated per-shape seeds from one base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub families: Vec<ShapeFamily>,
    pub instances: usize,
    pub viewpoints: usize,
    pub points: usize,
    /// Extra noisy copies of each cloud; labels stay those of the clean one.
    pub noise_levels: Vec<f64>,
    pub meshes: Vec<PathBuf>,
    pub require_watertight: bool,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            families: ShapeFamily::ALL.to_vec(),
            instances: 8,
            viewpoints: 16,
            points: DEFAULT_POINTS,
            noise_levels: vec![0.01, 0.02],
            meshes: Vec::new(),
            require_watertight: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub family: String,
    pub cloud: PathBuf,
    pub mesh: PathBuf,
    pub viewpoints: Vec<[f64; 3]>,
    pub labels: Vec<PathBuf>,
    pub noise: f64,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn viewpoint_list(&self) -> Vec<Viewpoint> {
        self.viewpoints.iter().map(|v| Viewpoint::at(v[0], v[1], v[2])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
    /// Directory that entry paths are relative to.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::parse(path.display().to_string(), format!("unsupported manifest version {}", m.version)));
        }
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn cloud(&self, e: &ManifestEntry) -> Result<PointCloud> {
        io::read_cloud(self.resolve(&e.cloud))
    }

    pub fn mesh(&self, e: &ManifestEntry) -> Result<TriangleMesh> {
        io::read_mesh(self.resolve(&e.mesh))
    }

    pub fn labels(&self, e: &ManifestEntry) -> Result<Vec<Vec<bool>>> {
        e.labels.iter().map(|p| io::read_labels(self.resolve(p))).collect()
    }

    pub fn label_files(&self) -> usize {
        let mut all: Vec<&PathBuf> = self.entries.iter().flat_map(|e| &e.labels).collect();
        all.sort();
        all.dedup();
        all.len()
    }

    /// Every referenced file exists and parses, and label lengths match.
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            let cloud = self.cloud(e)?;
            self.mesh(e)?;
            if e.labels.len() != e.viewpoints.len() {
                return Err(Error::InvalidInput(format!("{}: {} label files for {} viewpoints", e.name, e.labels.len(), e.viewpoints.len())));
            }
            for (p, l) in e.labels.iter().zip(self.labels(e)?) {
                if l.len() != cloud.len() {
                    return Err(Error::Shape(format!("{}: {} labels for {} points", p.display(), l.len(), cloud.len())));
                }
            }
        }
        Ok(())
    }
}

struct Shape {
    name: String,
    family: String,
    mesh: TriangleMesh,
    seed: u64,
}

fn collect_shapes(config: &DatasetConfig) -> Result<Vec<Shape>> {
    let mut out = Vec::new();
    let mut index = 0u64;
    for fam in &config.families {
        for k in 0..config.instances {
            let seed = derive_seed(config.seed, index);
            index += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.push(Shape {
                name: format!("{}_{k:03}", fam.name()),
                family: fam.name().to_string(),
                mesh: fam.instance(&mut rng),
                seed,
            });
        }
    }
    for path in &config.meshes {
        let mesh = io::read_mesh(path)?;
        if config.require_watertight {
            mesh.check_watertight()?;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
        out.push(Shape {
            name: format!("mesh_{stem}_{index:03}"),
            family: "mesh".into(),
            mesh,
            seed: derive_seed(config.seed, index),
        });
        index += 1;
    }
    Ok(out)
}

fn rel(parts: &[&str]) -> PathBuf {
    parts.iter().collect()
}

fn generate_shape(shape: &Shape, config: &DatasetConfig, out: &Path) -> Result<Vec<ManifestEntry>> {
    let mesh_rel = rel(&["meshes", &format!("{}.obj", shape.name)]);
    io::write_mesh(out.join(&mesh_rel), &shape.mesh)?;
    let cloud = sample_surface(&shape.mesh, config.points, shape.seed)?;
    let cloud_rel = rel(&["clouds", &format!("{}.ply", shape.name)]);
    io::write_cloud(out.join(&cloud_rel), &cloud)?;
    let vps = sample_viewpoints(&cloud, config.viewpoints, shape.seed ^ 1)?;
    let oracle = VisibilityOracle::new(&shape.mesh)?;
    let mut labels = Vec::with_capacity(vps.len());
    for (k, vp) in vps.iter().enumerate() {
        let p = rel(&["labels", &format!("{}_v{k:03}.nvlb", shape.name)]);
        io::write_labels(out.join(&p), &oracle.label(&cloud, vp).visibility.labels)?;
        labels.push(p);
    }
    let viewpoints: Vec<[f64; 3]> = vps.iter().map(|v| [v.position.x, v.position.y, v.position.z]).collect();
    let mut entries = vec![ManifestEntry {
        name: shape.name.clone(),
        family: shape.family.clone(),
        cloud: cloud_rel,
        mesh: mesh_rel.clone(),
        viewpoints: viewpoints.clone(),
        labels: labels.clone(),
        noise: 0.0,
        seed: shape.seed,
    }];
    for (j, &level) in config.noise_levels.iter().enumerate() {
        if level == 0.0 {
            continue;
        }
        let noisy = add_noise(&cloud, level, shape.seed ^ (2 + j as u64))?;
        let tag = format!("{}_noise{}", shape.name, (level * 1000.0).round() as u64);
        let p = rel(&["clouds", &format!("{tag}.ply")]);
        io::write_cloud(out.join(&p), &noisy)?;
        entries.push(ManifestEntry {
            name: tag,
            family: shape.family.clone(),
            cloud: p,
            mesh: mesh_rel.clone(),
            viewpoints: viewpoints.clone(),
            labels: labels.clone(),
            noise: level,
            seed: shape.seed,
        });
    }
    Ok(entries)
}

/// Writes meshes, clouds, labels and `manifest.json` under `out`.
pub fn gen_dataset(config: &DatasetConfig, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out = out.as_ref();
    if config.points == 0 || config.viewpoints == 0 {
        return Err(Error::InvalidInput("points and viewpoints must be positive".into()));
    }
    for dir in ["meshes", "clouds", "labels"] {
        std::fs::create_dir_all(out.join(dir))?;
    }
    let shapes = collect_shapes(config)?;
    let per_shape: Vec<Vec<ManifestEntry>> = shapes.par_iter().map(|s| generate_shape(s, config, out)).collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        entries: per_shape.into_iter().flatten().collect(),
        root: out.to_path_buf(),
    };
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::sphere_visibility;

    #[test]
    fn families_are_watertight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for fam in ShapeFamily::ALL {
            for _ in 0..3 {
                let m = fam.instance(&mut rng);
                assert!(m.is_watertight(), "{}", fam.name());
            }
        }
        assert_eq!("Torus".parse::<ShapeFamily>().unwrap(), ShapeFamily::Torus);
        assert!("cone".parse::<ShapeFamily>().is_err());
    }

    #[test]
    fn bookkeeping_for_a_small_grid() {
        let dir = tempfile::tempdir().unwrap();
        let config = DatasetConfig {
            families: vec![ShapeFamily::Sphere, ShapeFamily::Box, ShapeFamily::Torus, ShapeFamily::Capsule],
            instances: 8,
            viewpoints: 8,
            points: 300,
            noise_levels: vec![0.0, 0.02],
            seed: 5,
            ..Default::default()
        };
        let m = gen_dataset(&config, dir.path()).unwrap();
        assert_eq!(m.label_files(), 256);
        assert_eq!(std::fs::read_dir(dir.path().join("labels")).unwrap().count(), 256);
        let loaded = DatasetManifest::load(dir.path().join("manifest.json")).unwrap();
        loaded.validate().unwrap();
        assert_eq!(loaded.entries, m.entries);
        for pair in loaded.entries.chunks(2) {
            let (clean, noisy) = (&pair[0], &pair[1]);
            assert_eq!(clean.noise, 0.0);
            assert_eq!(noisy.noise, 0.02);
            assert_eq!(clean.labels, noisy.labels);
            assert_ne!(loaded.cloud(clean).unwrap().points(), loaded.cloud(noisy).unwrap().points());
        }
        // Same seed, same artifacts.
        let dir2 = tempfile::tempdir().unwrap();
        let again = gen_dataset(&config, dir2.path()).unwrap();
        assert_eq!(again.entries, m.entries);
        let f = &m.entries[3].labels[2];
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(dir2.path().join(f)).unwrap());
    }

    #[test]
    fn sphere_labels_match_the_analytic_cap() {
        let dir = tempfile::tempdir().unwrap();
        let config = DatasetConfig {
            families: vec![ShapeFamily::Sphere],
            instances: 1,
            viewpoints: 4,
            points: 5000,
            noise_levels: vec![],
            ..Default::default()
        };
        let m = gen_dataset(&config, dir.path()).unwrap();
        let e = &m.entries[0];
        let cloud = m.cloud(e).unwrap();
        let radius = m.mesh(e).unwrap().vertices()[0].norm();
        let (mut agree, mut scored) = (0, 0);
        for (vp, labels) in e.viewpoint_list().iter().zip(m.labels(e).unwrap()) {
            for (truth, l) in sphere_visibility(&Vec3::zeros(), radius, &cloud, vp, 2f64.to_radians()).iter().zip(labels) {
                if let Some(t) = truth {
                    scored += 1;
                    agree += usize::from(*t == l);
                }
            }
        }
        assert!(agree as f64 >= 0.99 * scored as f64, "{agree}/{scored}");
    }

    #[test]
    fn bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let open = dir.path().join("open.obj");
        io::write_mesh(&open, &shapes::planar_grid(1.0, 2)).unwrap();
        let config = DatasetConfig {
            families: vec![],
            meshes: vec![open.clone()],
            points: 100,
            viewpoints: 2,
            ..Default::default()
        };
        assert!(matches!(gen_dataset(&config, dir.path()), Err(Error::InvalidMesh(_))));
        let lenient = DatasetConfig {
            require_watertight: false,
            ..config
        };
        assert_eq!(gen_dataset(&lenient, dir.path()).unwrap().entries.len(), 3);
        std::fs::write(dir.path().join("bad.json"), "{\"version\": 9, \"entries\": []}").unwrap();
        assert!(DatasetManifest::load(dir.path().join("bad.json")).is_err());
    }
}
