//! Pipeline configuration: JSON file format, defaults, validation, and the
//! normalized snapshot recorded in run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use umbra_core::optim::OptimizerConfig;

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    Animated,
    Dataset,
}

/// Service endpoint URLs; all four are absolute `http(s)` URLs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub propose: String,
    pub generate: String,
    pub verify: String,
    pub score: String,
}

impl Endpoints {
    pub fn mock_placeholder() -> Self {
        Self {
            propose: "mock".into(),
            generate: "mock".into(),
            verify: "mock".into(),
            score: "mock".into(),
        }
    }

    pub fn local(port: u16) -> Self {
        let base = format!("http://127.0.0.1:{port}");
        Self {
            propose: format!("{base}/propose"),
            generate: format!("{base}/generate"),
            verify: format!("{base}/verify"),
            score: format!("{base}/score"),
        }
    }
}

/// Optimizer settings as stored in config files (angles in degrees).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub step0_deg: f64,
    pub shrink: f64,
    pub max_iters: usize,
    pub tol_deg: f64,
    pub grad_h_deg: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            step0_deg: 5.0,
            shrink: 0.5,
            max_iters: 30,
            tol_deg: 0.1,
            grad_h_deg: 0.5,
        }
    }
}

impl OptimizerSettings {
    pub fn to_core(&self) -> OptimizerConfig {
        OptimizerConfig {
            step0: self.step0_deg * DEG,
            shrink: self.shrink,
            max_iters: self.max_iters,
            tol: self.tol_deg * DEG,
            grad_h: self.grad_h_deg * DEG,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// One mesh for static mode, five keyframes for animated mode.
    pub mesh_paths: Vec<PathBuf>,
    /// Directory of line-drawing PNGs, dataset mode only.
    pub drawing_dir: Option<PathBuf>,
    pub mode: Mode,
    pub output_dir: PathBuf,
    /// Square raster resolution over the canvas window.
    pub raster_px: usize,
    /// Soft-silhouette softness in canvas units.
    pub sigma: f64,
    /// Box-counting scales in pixels.
    pub scales: Vec<usize>,
    pub seed: u64,
    pub optimizer: OptimizerSettings,
    pub endpoints: Endpoints,
    /// Number of ranked compositions to keep.
    pub k: usize,
    pub subject_override: Option<String>,
    /// Connected components below this fraction of the raster are ignored.
    pub min_area_frac: f64,
    /// Contour conditioning stroke width, pixels.
    pub stroke_px: usize,
    /// Erase band around the contour; defaults to `stroke_px + 1`.
    pub band_px: Option<usize>,
    /// Object keep-out dilation radius, pixels.
    pub dilate_px: usize,
    /// Maximum tolerated fraction of stroke pixels inside the keep-out mask.
    pub mask_violation_max_frac: f64,
    pub service_timeout_secs: u64,
    /// Transport/format retries per request.
    pub service_retries: u32,
    /// Base delay of the exponential backoff between retries.
    pub service_backoff_ms: u64,
    /// Concurrent candidates in the service phase.
    pub service_concurrency: usize,
    /// Run against in-process mock services on a free port.
    pub mock: bool,
    /// Value of the test header attached to /verify requests (mock testing).
    pub vqa_force: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh_paths: Vec::new(),
            drawing_dir: None,
            mode: Mode::Static,
            output_dir: PathBuf::from("out"),
            raster_px: 256,
            sigma: 0.01,
            scales: vec![2, 4, 8, 16, 32],
            seed: 0,
            optimizer: OptimizerSettings::default(),
            endpoints: Endpoints::local(8080),
            k: 4,
            subject_override: None,
            min_area_frac: 0.001,
            stroke_px: 2,
            band_px: None,
            dilate_px: 4,
            mask_violation_max_frac: 0.02,
            service_timeout_secs: 120,
            service_retries: 2,
            service_backoff_ms: 250,
            service_concurrency: 4,
            mock: false,
            vqa_force: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn band_px(&self) -> usize {
        self.band_px.unwrap_or(self.stroke_px + 1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        match self.mode {
            Mode::Static => {
                if self.mesh_paths.len() != 1 {
                    return fail(format!(
                        "static mode needs exactly 1 mesh path, got {}",
                        self.mesh_paths.len()
                    ));
                }
            }
            Mode::Animated => {
                if self.mesh_paths.len() != 5 {
                    return fail(format!(
                        "animated mode needs exactly 5 keyframe meshes, got {}",
                        self.mesh_paths.len()
                    ));
                }
            }
            Mode::Dataset => {
                if self.drawing_dir.is_none() {
                    return fail("dataset mode needs drawing_dir".into());
                }
            }
        }
        if self.raster_px < 16 {
            return fail("raster_px must be at least 16".into());
        }
        if !(self.sigma > 0.0) {
            return fail("sigma must be positive".into());
        }
        if self.scales.is_empty() || self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return fail("scales must be non-empty and strictly increasing".into());
        }
        if self.scales.iter().any(|&s| s == 0 || s > self.raster_px) {
            return fail("scales must lie in 1..=raster_px".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_area_frac) {
            return fail("min_area_frac must be in [0, 1]".into());
        }
        if self.stroke_px == 0 {
            return fail("stroke_px must be at least 1".into());
        }
        if self.band_px() == 0 {
            return fail("band_px must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mask_violation_max_frac) {
            return fail("mask_violation_max_frac must be in [0, 1]".into());
        }
        if self.service_concurrency == 0 {
            return fail("service_concurrency must be at least 1".into());
        }
        if !(self.optimizer.shrink > 0.0 && self.optimizer.shrink < 1.0) {
            return fail("optimizer.shrink must be in (0, 1)".into());
        }
        if !(self.optimizer.step0_deg > 0.0)
            || !(self.optimizer.tol_deg > 0.0)
            || !(self.optimizer.grad_h_deg > 0.0)
        {
            return fail("optimizer angles must be positive".into());
        }
        if !self.mock && self.mode != Mode::Dataset {
            for (name, url) in [
                ("propose", &self.endpoints.propose),
                ("generate", &self.endpoints.generate),
                ("verify", &self.endpoints.verify),
                ("score", &self.endpoints.score),
            ] {
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return fail(format!("endpoint {name} must be an absolute http(s) URL"));
                }
            }
        }
        Ok(())
    }

    /// The snapshot stored in manifests: endpoints are replaced by a
    /// placeholder under mock mode (ports are per-run) and the output
    /// directory is dropped, so identical logical configs snapshot
    /// identically.
    pub fn snapshot(&self) -> PipelineConfig {
        let mut snap = self.clone();
        if snap.mock {
            snap.endpoints = Endpoints::mock_placeholder();
        }
        snap.output_dir = PathBuf::new();
        snap
    }
}
