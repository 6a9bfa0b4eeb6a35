//! Visibility backends behind one trait, created by name from a registry.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{PointCloud, TriangleMesh, Viewpoint, VisibilityOracle, VisibilityResult};
use crate::hpr::{hpr_visibility, HprParams};
use crate::nn::{FeatureCache, ModelWeights, Precision, Predictor};

/// Per-cloud state produced by [`VisibilityBackend::prepare`]; answers any
/// number of viewpoints.
pub trait PreparedCloud: Send + Sync {
    fn visibility(&self, vp: &Viewpoint) -> Result<VisibilityResult>;
}

pub trait VisibilityBackend: Send + Sync {
    fn name(&self) -> &str;

    /// One-time work for a cloud (BVH build, feature extraction).
    fn prepare<'a>(&'a self, cloud: &'a PointCloud) -> Result<Box<dyn PreparedCloud + 'a>>;

    fn visibility(&self, cloud: &PointCloud, vp: &Viewpoint) -> Result<VisibilityResult> {
        self.prepare(cloud)?.visibility(vp)
    }
}

/// Inputs any backend factory may draw on.
#[derive(Debug, Clone, Default)]
pub struct BackendConfig {
    pub mesh: Option<Arc<TriangleMesh>>,
    pub hpr: HprParams,
    pub weights: Option<Arc<ModelWeights>>,
    pub precision: Precision,
}

pub struct OracleBackend {
    mesh: Arc<TriangleMesh>,
}

impl OracleBackend {
    pub fn new(mesh: Arc<TriangleMesh>) -> Self {
        OracleBackend { mesh }
    }
}

struct OracleCloud<'a> {
    oracle: VisibilityOracle,
    cloud: &'a PointCloud,
}

impl PreparedCloud for OracleCloud<'_> {
    fn visibility(&self, vp: &Viewpoint) -> Result<VisibilityResult> {
        Ok(self.oracle.label(self.cloud, vp).visibility)
    }
}

impl VisibilityBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn prepare<'a>(&'a self, cloud: &'a PointCloud) -> Result<Box<dyn PreparedCloud + 'a>> {
        Ok(Box::new(OracleCloud {
            oracle: VisibilityOracle::new(&self.mesh)?,
            cloud,
        }))
    }
}

pub struct HprBackend {
    params: HprParams,
}

impl HprBackend {
    pub fn new(params: HprParams) -> Result<Self> {
        params.validate()?;
        Ok(HprBackend { params })
    }
}

struct HprCloud<'a> {
    params: HprParams,
    cloud: &'a PointCloud,
}

impl PreparedCloud for HprCloud<'_> {
    fn visibility(&self, vp: &Viewpoint) -> Result<VisibilityResult> {
        hpr_visibility(self.cloud, vp, &self.params)
    }
}

impl VisibilityBackend for HprBackend {
    fn name(&self) -> &str {
        "hpr"
    }

    fn prepare<'a>(&'a self, cloud: &'a PointCloud) -> Result<Box<dyn PreparedCloud + 'a>> {
        Ok(Box::new(HprCloud {
            params: self.params,
            cloud,
        }))
    }
}

pub struct NeuralBackend {
    predictor: Predictor,
    precision: Precision,
}

impl NeuralBackend {
    pub fn new(weights: Arc<ModelWeights>, precision: Precision) -> Result<Self> {
        Ok(NeuralBackend {
            predictor: Predictor::from_arc(weights)?,
            precision,
        })
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }
}

struct NeuralCloud<'a> {
    backend: &'a NeuralBackend,
    cache: FeatureCache,
    cloud: &'a PointCloud,
}

impl PreparedCloud for NeuralCloud<'_> {
    fn visibility(&self, vp: &Viewpoint) -> Result<VisibilityResult> {
        self.backend
            .predictor
            .predict_with(self.cloud, vp, Some(&self.cache), self.backend.precision)
    }
}

impl VisibilityBackend for NeuralBackend {
    fn name(&self) -> &str {
        "neural"
    }

    fn prepare<'a>(&'a self, cloud: &'a PointCloud) -> Result<Box<dyn PreparedCloud + 'a>> {
        Ok(Box::new(NeuralCloud {
            backend: self,
            cache: self.predictor.features(cloud)?,
            cloud,
        }))
    }
}

pub type BackendFactory = Box<dyn Fn(&BackendConfig) -> Result<Box<dyn VisibilityBackend>> + Send + Sync>;

pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        BackendRegistry::with_builtins()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `oracle` (needs a mesh), `hpr`, and `neural` (needs weights).
    pub fn with_builtins() -> Self {
        let mut r = BackendRegistry::empty();
        r.register("oracle", |cfg| {
            let mesh = cfg
                .mesh
                .clone()
                .ok_or_else(|| Error::InvalidInput("the oracle backend needs a mesh".into()))?;
            Ok(Box::new(OracleBackend::new(mesh)))
        });
        r.register("hpr", |cfg| Ok(Box::new(HprBackend::new(cfg.hpr)?)));
        r.register("neural", |cfg| {
            let weights = cfg
                .weights
                .clone()
                .ok_or_else(|| Error::InvalidInput("the neural backend needs a weight file".into()))?;
            Ok(Box::new(NeuralBackend::new(weights, cfg.precision)?))
        });
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&BackendConfig) -> Result<Box<dyn VisibilityBackend>> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, cfg: &BackendConfig) -> Result<Box<dyn VisibilityBackend>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownBackend(name.to_string()))?;
        factory(cfg)
    }
}
