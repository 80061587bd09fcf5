//! Scene configuration and result types (JSON).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenefit_core::bounds::Aabb;
use scenefit_core::camera::Camera;
use scenefit_core::loss::LossBreakdown;
use scenefit_core::metrics::{MetricConfig, MetricReport};
use scenefit_core::pose::{FittedPose, OptimizerConfig, PoseVariant};
use scenefit_core::scene::{IcpConfig, Plane, RansacConfig};

use crate::error::IoError;
use crate::Result;

/// One object to place: its id, mask, and (for the fit command) a
/// precomputed asset mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub id: String,
    pub mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_mesh: Option<PathBuf>,
}

/// Camera given inline or as a path to a camera JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraSource {
    Inline(Camera),
    Path(PathBuf),
}

impl CameraSource {
    pub fn load(&self, base: &Path) -> Result<Camera> {
        match self {
            CameraSource::Inline(c) => Ok(*c),
            CameraSource::Path(p) => crate::read_json(&resolve(base, p)),
        }
    }
}

/// Backend selection for one external model service.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceBackend {
    #[default]
    Mock,
    Remote {
        base_url: String,
        #[serde(default)]
        auth_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ServiceEndpointConfig {
    pub backend: ServiceBackend,
}

/// Prompt template overrides; defaults are embedded in the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PromptOverrides {
    pub object_extraction: Option<String>,
    pub background_removal: Option<String>,
    pub segmentation_labels: Option<Vec<String>>,
}

/// Composite-query layout overrides.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AqLayoutConfig {
    pub canvas_width: usize,
    pub canvas_height: usize,
    /// x, y, width, height.
    pub panel_context: [usize; 4],
    pub panel_task: [usize; 4],
    pub outline_color: [u8; 3],
    pub outline_thickness: usize,
    pub label_context: [usize; 2],
    pub label_task: [usize; 2],
}

impl Default for AqLayoutConfig {
    fn default() -> Self {
        AqLayoutConfig {
            canvas_width: 1536,
            canvas_height: 768,
            panel_context: [32, 32, 704, 704],
            panel_task: [800, 32, 704, 704],
            outline_color: [255, 0, 0],
            outline_thickness: 3,
            label_context: [40, 8],
            label_task: [808, 8],
        }
    }
}

/// The four external services plus protocol knobs.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ServicesConfig {
    pub segmenter: ServiceEndpointConfig,
    pub image_editor: ServiceEndpointConfig,
    pub asset_generator: ServiceEndpointConfig,
    pub geometry_estimator: ServiceEndpointConfig,
    pub prompts: PromptOverrides,
    pub aq_layout: Option<AqLayoutConfig>,
}

/// Top-level scene configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_image: Option<PathBuf>,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_point_map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSource>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub ransac: RansacConfig,
    /// Scene/background cloud alignment; shifting only, by default.
    #[serde(default = "default_bg_icp")]
    pub bg_icp: IcpConfig,
    #[serde(default)]
    pub min_confidence: f64,
    #[serde(default = "default_dilation")]
    pub select_dilation_px: usize,
    #[serde(default = "default_percentile")]
    pub background_percentile: f64,
    #[serde(default)]
    pub services: ServicesConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// 0 selects the available parallelism.
    #[serde(default)]
    pub workers: usize,
}

fn default_bg_icp() -> IcpConfig {
    IcpConfig {
        translation_only: true,
        ..Default::default()
    }
}

fn default_dilation() -> usize {
    2
}

fn default_percentile() -> f64 {
    0.005
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Resolve a possibly-relative path against the config directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<(SceneConfig, PathBuf)> {
        let cfg: SceneConfig = crate::read_json(path)?;
        let base = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        cfg.validate(&base)?;
        Ok((cfg, base))
    }

    /// Check id uniqueness and that every referenced input exists.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut ids = BTreeSet::new();
        for obj in &self.objects {
            if !ids.insert(&obj.id) {
                return Err(IoError::InvalidConfig(format!(
                    "duplicate object id {:?}",
                    obj.id
                )));
            }
        }
        let mut required: Vec<&PathBuf> = Vec::new();
        if let Some(p) = &self.input_image {
            required.push(p);
        }
        for obj in &self.objects {
            required.push(&obj.mask);
            if let Some(m) = &obj.asset_mesh {
                required.push(m);
            }
        }
        if let Some(p) = &self.floor_mask {
            required.push(p);
        }
        if let Some(p) = &self.point_map {
            required.push(p);
        }
        if let Some(p) = &self.background_point_map {
            required.push(p);
        }
        if let Some(CameraSource::Path(p)) = &self.camera {
            required.push(p);
        }
        for p in required {
            let full = resolve(base, p);
            if !full.exists() {
                return Err(IoError::InvalidConfig(format!(
                    "referenced path does not exist: {}",
                    full.display()
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one object in a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ObjectRunStatus {
    Fitted,
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectResult {
    pub id: String,
    pub status: ObjectRunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<PoseVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<FittedPose>,
    /// Work-directory-relative path of the transformed mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_csv_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<LossBreakdown>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStatus {
    Ok,
    /// The segmenter produced zero masks; an empty scene, not an error.
    ExplicitEmpty,
}

/// The scene.json payload. Deterministic per seed: no timings, no call
/// counts (those live in the run report).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneResult {
    pub status: SceneStatus,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Camera>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<Plane>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_bounds: Option<Aabb>,
    pub objects: Vec<ObjectResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
}

/// Per-service call counts, written to the run report.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct ServiceCallCounts {
    pub segment: usize,
    pub edit: usize,
    pub generate_asset: usize,
    pub estimate_geometry: usize,
}

impl ServiceCallCounts {
    pub fn total(&self) -> usize {
        self.segment + self.edit + self.generate_asset + self.estimate_geometry
    }
}

/// report.json: operational facts of one run (may differ between a fresh
/// run and a cached rerun; scene.json never does).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub status: SceneStatus,
    pub objects: Vec<ObjectReportRow>,
    pub service_calls: ServiceCallCounts,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectReportRow {
    pub id: String,
    pub status: String,
    pub iterations: usize,
    pub wall_time_s: f64,
}
