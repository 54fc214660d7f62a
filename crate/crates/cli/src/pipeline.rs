//! End-to-end orchestration: grid search, candidate generation against the
//! drawing services, filtering, ranking, and atomic persistence of the run
//! manifest and artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use umbra_core::contour::{
    animated_keepout_mask, extract_contours, object_keepout_mask, render_contours, ContourKind,
    ContourSet, MaskError,
};
use umbra_core::optim::{init_grid, optimize_local, FdConfig, OptimResult, StartGrid};
use umbra_core::rank::{
    composite, contribution_filter, deltas, erase_contour, normalize_yes_no, parse_proposal,
    rank, rank_score, PromptProposal, ScoreBundle, STROKE_THRESHOLD,
};
use umbra_core::raster::{shadow_hard, BinaryRaster, GrayRaster, RasterSpec};
use umbra_core::scene::{
    normalize_mesh, normalize_shared, pose_mesh, Mesh, SceneParams, OBJECT_SIZE,
};

use crate::config::PipelineConfig;
use crate::meshio::load_mesh;
use crate::mock::MockServer;
use crate::pngio::{
    encode_binary, encode_grayscale, encode_rgb, frame_overlay, red_overlay,
};
use crate::services::{HttpServices, ServiceError, Services};
use crate::{config::Endpoints, SYSTEM_PROMPT};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Mesh(#[from] crate::meshio::LoadError),
    #[error("cannot start mock services: {0}")]
    Mock(#[from] crate::mock::MockError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How the run ended; drives the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Ranked at least one composition.
    Complete,
    /// Every candidate was rejected; the manifest records a warning.
    NoSurvivors,
    /// A service failed after retries; the manifest is marked failed.
    ServiceFailure,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamsOut {
    pub azimuth: f64,
    pub elevation: f64,
    pub center_radius: f64,
    pub center_azimuth: f64,
    pub rotation: f64,
}

impl From<SceneParams> for ParamsOut {
    fn from(p: SceneParams) -> Self {
        Self {
            azimuth: p.azimuth,
            elevation: p.elevation,
            center_radius: p.center_radius,
            center_azimuth: p.center_azimuth,
            rotation: p.rotation,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoresOut {
    pub clip: f64,
    pub ir: f64,
    pub hps: f64,
}

impl From<ScoreBundle> for ScoresOut {
    fn from(s: ScoreBundle) -> Self {
        Self {
            clip: s.clip,
            ir: s.ir,
            hps: s.hps,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScorePairOut {
    pub full: ScoresOut,
    pub partial: ScoresOut,
    pub d_clip: f64,
    pub d_ir: f64,
    pub d_hps: f64,
    pub rank_score: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum Outcome {
    /// Kept in the final top-K.
    Ranked { rank: usize, score: f64 },
    /// Dropped by a gate, or survived below the top-K cut.
    Rejected { reason: String },
    /// An error stopped this candidate.
    Failed { error: String },
    /// Optimization-only run; services never ran.
    Optimized,
}

#[derive(Clone, Debug, Serialize)]
pub struct StartRecord {
    pub start_index: usize,
    pub init: ParamsOut,
    #[serde(rename = "final")]
    pub final_params: ParamsOut,
    pub fd_init: Option<f64>,
    pub fd_final: Option<f64>,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScorePairOut>,
    /// Artifact name -> path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TopEntry {
    pub rank: usize,
    pub start_index: usize,
    pub rank_score: f64,
    pub composite: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub optimize_secs: f64,
    pub services_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub engine_version: String,
    pub run_id: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub warnings: Vec<String>,
    pub config: PipelineConfig,
    pub records: Vec<StartRecord>,
    pub top_k: Vec<TopEntry>,
    pub timings: Timings,
}

/// Outcome of `run_pipeline`: the manifest, where it was written, and the
/// status the exit code derives from.
pub struct RunOutput {
    pub manifest: Manifest,
    pub run_dir: PathBuf,
    pub status: RunStatus,
}

/// Deterministic run id from the normalized config snapshot.
pub fn run_id(cfg: &PipelineConfig) -> String {
    let snapshot = serde_json::to_string(&cfg.snapshot()).expect("config serializes");
    let digest = Sha256::digest(snapshot.as_bytes());
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("run-{hex}")
}

fn generation_seed(seed: u64, start_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((start_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct StageDir {
    root: PathBuf,
}

impl StageDir {
    fn create(output_dir: &Path, id: &str) -> Result<Self, PipelineError> {
        let root = output_dir.join(format!(".tmp-{id}-{}", std::process::id()));
        if root.exists() {
            fs::remove_dir_all(&root).map_err(|source| PipelineError::Io {
                path: root.clone(),
                source,
            })?;
        }
        fs::create_dir_all(&root).map_err(|source| PipelineError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self { root })
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)
    }

    /// Atomically publish the staged run directory at its final path.
    fn finalize(self, final_dir: &Path) -> Result<(), PipelineError> {
        if final_dir.exists() {
            fs::remove_dir_all(final_dir).map_err(|source| PipelineError::Io {
                path: final_dir.to_path_buf(),
                source,
            })?;
        }
        fs::rename(&self.root, final_dir).map_err(|source| PipelineError::Io {
            path: final_dir.to_path_buf(),
            source,
        })
    }
}

impl Drop for StageDir {
    fn drop(&mut self) {
        // Best-effort cleanup when the run never finalized.
        if self.root.exists() {
            let _ = fs::remove_dir_all(&self.root);
        }
    }
}

fn trace_jsonl(result: &OptimResult) -> Vec<u8> {
    let mut out = Vec::new();
    for (step, point) in result.trace.iter().enumerate() {
        let record = serde_json::json!({
            "step": step,
            "azimuth": point.params.azimuth,
            "elevation": point.params.elevation,
            "center_radius": point.params.center_radius,
            "center_azimuth": point.params.center_azimuth,
            "rotation": point.params.rotation,
            "fd": point.fd,
        });
        writeln!(out, "{record}").expect("writing to a vec cannot fail");
    }
    out
}

fn contour_json(contours: &ContourSet) -> Vec<u8> {
    let list: Vec<serde_json::Value> = contours
        .contours
        .iter()
        .map(|c| {
            serde_json::json!({
                "tag": match c.kind {
                    ContourKind::Outer => "outer",
                    ContourKind::Hole => "hole",
                },
                "points": c.points.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::to_vec_pretty(&serde_json::json!({
        "width": contours.source_spec.width,
        "height": contours.source_spec.height,
        "contours": list,
    }))
    .expect("contour json serializes")
}

/// Binary raster of ink strokes in a grayscale drawing.
fn drawing_strokes(drawing: &GrayRaster) -> BinaryRaster {
    BinaryRaster::from_bits(
        drawing.spec,
        drawing.pixels.iter().map(|&p| p <= STROKE_THRESHOLD).collect(),
    )
}

/// Fraction of stroke pixels that violate the keep-out mask.
fn mask_violation_frac(drawing: &GrayRaster, mask: &BinaryRaster) -> f64 {
    let strokes = drawing_strokes(drawing);
    let total = strokes.count_set();
    if total == 0 {
        return 0.0;
    }
    let violating = strokes
        .bits()
        .iter()
        .zip(mask.bits())
        .filter(|&(&s, &m)| s && m)
        .count();
    violating as f64 / total as f64
}

enum CandidateStatus {
    Survived { score: f64 },
    Rejected(String),
    Failed(String),
}

struct CandidateResult {
    status: CandidateStatus,
    scores: Option<ScorePairOut>,
    artifacts: BTreeMap<String, String>,
    service_failure: Option<String>,
}

impl CandidateResult {
    fn rejected(reason: impl Into<String>, artifacts: BTreeMap<String, String>) -> Self {
        Self {
            status: CandidateStatus::Rejected(reason.into()),
            scores: None,
            artifacts,
            service_failure: None,
        }
    }
}

struct RunContext<'a> {
    cfg: &'a PipelineConfig,
    /// Normalized meshes: one for static mode, five for animated.
    meshes: Vec<Mesh>,
    spec: RasterSpec,
    services: &'a dyn Services,
    stage: &'a StageDir,
}

/// Ask for a prompt proposal, retrying on replies that violate the
/// two-paragraph format.
fn propose_with_retries(
    ctx: &RunContext,
    contour_png: &[u8],
    retries: u32,
) -> Result<Result<PromptProposal, String>, ServiceError> {
    let subject = ctx.cfg.subject_override.as_deref();
    for _ in 0..=retries {
        let reply = ctx.services.propose(contour_png, SYSTEM_PROMPT, subject)?;
        match parse_proposal(&reply) {
            Ok(p) => return Ok(Ok(p)),
            Err(_) => continue,
        }
    }
    Ok(Err("proposal reply violated the two-part format".into()))
}

/// Run the coherence check, retrying replies that are neither yes nor no.
fn verify_with_retries(
    ctx: &RunContext,
    overlay_png: &[u8],
    question: &str,
    retries: u32,
) -> Result<Result<bool, String>, ServiceError> {
    for _ in 0..=retries {
        let answer = ctx.services.verify(overlay_png, question)?;
        if let Some(verdict) = normalize_yes_no(&answer) {
            return Ok(Ok(verdict));
        }
    }
    Ok(Err("verification reply was neither yes nor no".into()))
}

/// Everything after optimization for one start: render, condition, call the
/// services, gate, and score. Service errors abort the run; format errors
/// and gate rejections only end the candidate.
fn process_candidate(
    ctx: &RunContext,
    start_index: usize,
    params: &SceneParams,
) -> CandidateResult {
    let mut artifacts = BTreeMap::new();
    let dir = format!("start_{start_index:02}");
    let save = |name: &str, bytes: &[u8], artifacts: &mut BTreeMap<String, String>| {
        let rel = format!("{dir}/{name}");
        ctx.stage.write(&rel, bytes).expect("stage dir is writable");
        artifacts.insert(
            name.trim_end_matches(".png")
                .trim_end_matches(".json")
                .to_string(),
            rel,
        );
    };

    // Per-frame shadows (one frame in static mode).
    let mut shadows = Vec::new();
    for mesh in &ctx.meshes {
        match shadow_hard(mesh, params, &ctx.spec) {
            Ok(s) => shadows.push(s),
            Err(e) => return CandidateResult::rejected(format!("render failed: {e}"), artifacts),
        }
    }
    let animated = shadows.len() > 1;
    if animated {
        for (k, shadow) in shadows.iter().enumerate() {
            save(
                &format!("shadow_f{k}.png"),
                &encode_binary(shadow).expect("png encode"),
                &mut artifacts,
            );
        }
    } else {
        save(
            "shadow.png",
            &encode_binary(&shadows[0]).expect("png encode"),
            &mut artifacts,
        );
    }

    // The conditioning contour: the shadow outline in static mode, the
    // static-region outline in animated mode.
    let condition_raster = if animated {
        let mut bits = shadows[0].bits().to_vec();
        for shadow in &shadows[1..] {
            for (b, &s) in bits.iter_mut().zip(shadow.bits()) {
                *b &= s;
            }
        }
        BinaryRaster::from_bits(ctx.spec, bits)
    } else {
        shadows[0].clone()
    };
    let contours = match extract_contours(&condition_raster, ctx.cfg.min_area_frac) {
        Ok(c) => c,
        Err(_) => {
            let reason = if animated {
                "static shadow region is empty"
            } else {
                "shadow is empty after optimization"
            };
            return CandidateResult::rejected(reason, artifacts);
        }
    };
    let contour_image = render_contours(&contours, ctx.cfg.stroke_px);
    let contour_png = encode_binary(&contour_image).expect("png encode");
    save("contour.png", &contour_png, &mut artifacts);
    save("contour.json", &contour_json(&contours), &mut artifacts);

    // Keep-out mask: dilated object footprint, plus the dynamic-region rule
    // in animated mode.
    let posed: Vec<Mesh> = ctx.meshes.iter().map(|m| pose_mesh(m, params)).collect();
    let mut keepout = object_keepout_mask(&posed[0], &ctx.spec, ctx.cfg.dilate_px).mask;
    for mesh in &posed[1..] {
        let frame_mask = object_keepout_mask(mesh, &ctx.spec, ctx.cfg.dilate_px).mask;
        let bits = keepout
            .bits()
            .iter()
            .zip(frame_mask.bits())
            .map(|(&a, &b)| a || b)
            .collect();
        keepout = BinaryRaster::from_bits(ctx.spec, bits);
    }
    if animated {
        match animated_keepout_mask(&shadows) {
            Ok(dynamic_mask) => {
                let bits = keepout
                    .bits()
                    .iter()
                    .zip(dynamic_mask.mask.bits())
                    .map(|(&a, &b)| a || b)
                    .collect();
                keepout = BinaryRaster::from_bits(ctx.spec, bits);
            }
            Err(MaskError::NoStaticRegion) => {
                return CandidateResult::rejected("no static shadow region", artifacts)
            }
            Err(e) => {
                return CandidateResult {
                    status: CandidateStatus::Failed(e.to_string()),
                    scores: None,
                    artifacts,
                    service_failure: None,
                }
            }
        }
    }
    let keepout_png = encode_binary(&keepout).expect("png encode");
    save("mask.png", &keepout_png, &mut artifacts);

    // The proposal conditioning image: the contour itself, or the five-color
    // frame overlay for animated scenes.
    let proposal_png = if animated {
        let mut frame_strokes = Vec::new();
        for shadow in &shadows {
            match extract_contours(shadow, ctx.cfg.min_area_frac) {
                Ok(c) => frame_strokes.push(render_contours(&c, ctx.cfg.stroke_px)),
                Err(_) => {
                    return CandidateResult::rejected("a keyframe shadow is empty", artifacts)
                }
            }
        }
        let rgb = frame_overlay(&frame_strokes);
        let png = encode_rgb(ctx.spec.width, ctx.spec.height, rgb).expect("png encode");
        save("overlay.png", &png, &mut artifacts);
        png
    } else {
        contour_png.clone()
    };

    macro_rules! service_try {
        ($expr:expr) => {
            match $expr {
                Ok(v) => v,
                Err(e) => {
                    return CandidateResult {
                        status: CandidateStatus::Failed(format!("service error: {e}")),
                        scores: None,
                        artifacts,
                        service_failure: Some(e.to_string()),
                    }
                }
            }
        };
    }

    let proposal = match service_try!(propose_with_retries(
        ctx,
        &proposal_png,
        ctx.cfg.service_retries
    )) {
        Ok(p) => p,
        Err(msg) => {
            return CandidateResult {
                status: CandidateStatus::Failed(msg),
                scores: None,
                artifacts,
                service_failure: None,
            }
        }
    };

    let gen_seed = generation_seed(ctx.cfg.seed, start_index);
    let drawing_png = service_try!(ctx.services.generate(
        &contour_png,
        &proposal.description,
        &keepout_png,
        gen_seed
    ));
    let drawing_full = match crate::pngio::decode_grayscale(&drawing_png) {
        Ok(d) if (d.spec.width, d.spec.height) == (ctx.spec.width, ctx.spec.height) => d,
        Ok(_) => {
            return CandidateResult {
                status: CandidateStatus::Failed("drawing dimensions differ from canvas".into()),
                scores: None,
                artifacts,
                service_failure: None,
            }
        }
        Err(e) => {
            return CandidateResult {
                status: CandidateStatus::Failed(format!("drawing undecodable: {e}")),
                scores: None,
                artifacts,
                service_failure: None,
            }
        }
    };
    save("drawing_full.png", &drawing_png, &mut artifacts);

    let violation = mask_violation_frac(&drawing_full, &keepout);
    if violation > ctx.cfg.mask_violation_max_frac {
        return CandidateResult::rejected(
            format!("mask violation: {:.1}% of strokes inside the keep-out mask", violation * 100.0),
            artifacts,
        );
    }

    let drawing_partial = erase_contour(&drawing_full, &contours, ctx.cfg.band_px());
    save(
        "drawing_partial.png",
        &encode_grayscale(&drawing_partial).expect("png encode"),
        &mut artifacts,
    );

    // Coherence gate: the contour in red over the drawing, one yes/no
    // question about the outlined component.
    let overlay_rgb = red_overlay(&drawing_full, &contours, ctx.cfg.stroke_px);
    let overlay_png =
        encode_rgb(ctx.spec.width, ctx.spec.height, overlay_rgb).expect("png encode");
    let question = format!("Does the highlighted stroke outline {}?", proposal.component);
    let verdict = match service_try!(verify_with_retries(
        ctx,
        &overlay_png,
        &question,
        ctx.cfg.service_retries
    )) {
        Ok(v) => v,
        Err(msg) => {
            return CandidateResult {
                status: CandidateStatus::Failed(msg),
                scores: None,
                artifacts,
                service_failure: None,
            }
        }
    };
    if !verdict {
        return CandidateResult::rejected("coherence check answered no", artifacts);
    }

    let full_png = encode_grayscale(&drawing_full).expect("png encode");
    let partial_png = encode_grayscale(&drawing_partial).expect("png encode");
    let score_full = service_try!(ctx.services.score(&full_png, &proposal.description));
    let score_partial = service_try!(ctx.services.score(&partial_png, &proposal.description));

    // Final composites: drawing strokes over the shadow and the object
    // footprint, one per frame.
    for (k, (shadow, mesh)) in shadows.iter().zip(&posed).enumerate() {
        let footprint = object_keepout_mask(mesh, &ctx.spec, 0).mask;
        let image = composite(&drawing_partial, shadow, &footprint)
            .expect("specs match by construction");
        let name = if animated {
            format!("composite_f{k}.png")
        } else {
            "composite.png".to_string()
        };
        save(
            &name,
            &encode_grayscale(&image).expect("png encode"),
            &mut artifacts,
        );
    }

    let kept = contribution_filter(&score_full, &score_partial);
    let delta = match deltas(&score_full, &score_partial) {
        Ok(d) => d,
        Err(e) => {
            return CandidateResult {
                status: CandidateStatus::Failed(e.to_string()),
                scores: None,
                artifacts,
                service_failure: None,
            }
        }
    };
    let score = rank_score(&delta);
    let scores = Some(ScorePairOut {
        full: score_full.into(),
        partial: score_partial.into(),
        d_clip: delta.d_clip,
        d_ir: delta.d_ir,
        d_hps: delta.d_hps,
        rank_score: score,
    });
    if !kept {
        return CandidateResult {
            status: CandidateStatus::Rejected(
                "contribution filter: partial drawing scored higher".into(),
            ),
            scores,
            artifacts,
            service_failure: None,
        }
    }
    CandidateResult {
        status: CandidateStatus::Survived { score },
        scores,
        artifacts,
        service_failure: None,
    }
}

fn load_normalized_meshes(cfg: &PipelineConfig) -> Result<Vec<Mesh>, PipelineError> {
    let mut meshes = Vec::new();
    for path in &cfg.mesh_paths {
        meshes.push(load_mesh(path)?);
    }
    let normalized = if meshes.len() == 1 {
        vec![normalize_mesh(&meshes[0], OBJECT_SIZE).map_err(|source| {
            crate::meshio::LoadError::Mesh {
                path: cfg.mesh_paths[0].clone(),
                source,
            }
        })?]
    } else {
        normalize_shared(&meshes, OBJECT_SIZE).map_err(|source| {
            crate::meshio::LoadError::Mesh {
                path: cfg.mesh_paths[0].clone(),
                source,
            }
        })?
    };
    Ok(normalized)
}

/// Optimize every grid start in parallel (bounded by the rayon pool).
fn optimize_phase(cfg: &PipelineConfig, mesh: &Mesh, grid: &StartGrid) -> Vec<OptimResult> {
    let fd_cfg = FdConfig {
        spec: RasterSpec::square(cfg.raster_px),
        sigma: cfg.sigma,
        scales: cfg.scales.clone(),
    };
    let optimizer = cfg.optimizer.to_core();
    grid.starts
        .par_iter()
        .map(|start| optimize_local(mesh, &start.params, &start.bounds, &optimizer, &fd_cfg))
        .collect()
}

/// Full static or animated run: optimize, generate, gate, rank, persist.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let total_timer = Instant::now();

    // Mock services live for the duration of the run.
    let mock_server = if cfg.mock {
        Some(MockServer::start(0, cfg.seed)?)
    } else {
        None
    };
    let endpoints = match &mock_server {
        Some(server) => Endpoints::local(server.port),
        None => cfg.endpoints.clone(),
    };
    let services = HttpServices::new(endpoints, cfg);

    let meshes = load_normalized_meshes(cfg)?;
    let spec = RasterSpec::square(cfg.raster_px);
    let grid = init_grid(cfg.seed);

    let optimize_timer = Instant::now();
    let results = optimize_phase(cfg, &meshes[0], &grid);
    let optimize_secs = optimize_timer.elapsed().as_secs_f64();

    let id = run_id(cfg);
    let stage = StageDir::create(&cfg.output_dir, &id)?;
    for (index, result) in results.iter().enumerate() {
        stage
            .write(&format!("start_{index:02}/trace.jsonl"), &trace_jsonl(result))
            .map_err(|source| PipelineError::Io {
                path: stage.root.clone(),
                source,
            })?;
    }

    // Service phase: candidates processed by a bounded worker pool; any
    // service error aborts the remaining work.
    let services_timer = Instant::now();
    let ctx = RunContext {
        cfg,
        meshes,
        spec,
        services: &services,
        stage: &stage,
    };
    let slots: Vec<Mutex<Option<CandidateResult>>> =
        (0..results.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..cfg.service_concurrency.min(results.len().max(1)) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= results.len() {
                    break;
                }
                if abort.load(Ordering::SeqCst) {
                    continue; // drain remaining indices without running them
                }
                let outcome = if results[index].fd_init.is_nan() {
                    CandidateResult::rejected(
                        "no measurable shadow at this start",
                        BTreeMap::new(),
                    )
                } else {
                    process_candidate(&ctx, index, &results[index].final_params)
                };
                if outcome.service_failure.is_some() {
                    abort.store(true, Ordering::SeqCst);
                }
                *slots[index].lock().unwrap() = Some(outcome);
            });
        }
    });
    let services_secs = services_timer.elapsed().as_secs_f64();

    let outcomes: Vec<Option<CandidateResult>> = slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap())
        .collect();
    let service_failed = abort.load(Ordering::SeqCst);

    // Rank survivors.
    let mut survivor_indices = Vec::new();
    let mut survivor_scores = Vec::new();
    for (index, outcome) in outcomes.iter().enumerate() {
        if let Some(CandidateResult {
            status: CandidateStatus::Survived { score, .. },
            ..
        }) = outcome
        {
            survivor_indices.push(index);
            survivor_scores.push(*score);
        }
    }
    let ranked = rank(&survivor_scores, cfg.k);
    let mut rank_of: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (position, entry) in ranked.iter().enumerate() {
        rank_of.insert(survivor_indices[entry.index], (position + 1, entry.score));
    }

    let mut records = Vec::new();
    for (index, (result, outcome)) in results.iter().zip(outcomes).enumerate() {
        let (status, scores, artifacts) = match outcome {
            None => (
                Outcome::Failed {
                    error: "not processed (run aborted after a service failure)".into(),
                },
                None,
                BTreeMap::new(),
            ),
            Some(c) => {
                let status = match c.status {
                    CandidateStatus::Survived { score, .. } => match rank_of.get(&index) {
                        Some(&(rank, _)) => Outcome::Ranked { rank, score },
                        None => Outcome::Rejected {
                            reason: "below top-K".into(),
                        },
                    },
                    CandidateStatus::Rejected(reason) => Outcome::Rejected { reason },
                    CandidateStatus::Failed(error) => Outcome::Failed { error },
                };
                (status, c.scores, c.artifacts)
            }
        };
        records.push(StartRecord {
            start_index: index,
            init: result.init.into(),
            final_params: result.final_params.into(),
            fd_init: finite_or_none(result.fd_init),
            fd_final: finite_or_none(result.fd_final),
            iterations: result.iterations,
            accepted_steps: result.trace.len().saturating_sub(1),
            outcome: status,
            scores,
            artifacts,
        });
    }

    let mut warnings = Vec::new();
    if ranked.is_empty() && !service_failed {
        warnings.push("no composition survived verification and filtering".to_string());
    }
    let top_k: Vec<TopEntry> = ranked
        .iter()
        .enumerate()
        .map(|(position, entry)| {
            let start_index = survivor_indices[entry.index];
            let composite_name = records[start_index]
                .artifacts
                .get("composite")
                .or_else(|| records[start_index].artifacts.get("composite_f0"))
                .cloned()
                .unwrap_or_default();
            TopEntry {
                rank: position + 1,
                start_index,
                rank_score: entry.score,
                composite: composite_name,
            }
        })
        .collect();

    let timings = if cfg.mock {
        Timings::default()
    } else {
        Timings {
            optimize_secs,
            services_secs,
            total_secs: total_timer.elapsed().as_secs_f64(),
        }
    };
    let status = if service_failed {
        RunStatus::ServiceFailure
    } else if ranked.is_empty() {
        RunStatus::NoSurvivors
    } else {
        RunStatus::Complete
    };
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        run_id: id.clone(),
        status: if service_failed { "failed" } else { "complete" }.to_string(),
        failure: service_failed.then(|| "a drawing service failed after retries".to_string()),
        warnings,
        config: cfg.snapshot(),
        records,
        top_k,
        timings,
    };
    let manifest_bytes =
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    stage
        .write("manifest.json", &manifest_bytes)
        .map_err(|source| PipelineError::Io {
            path: stage.root.clone(),
            source,
        })?;
    let run_dir = cfg.output_dir.join(&id);
    stage.finalize(&run_dir)?;

    Ok(RunOutput {
        manifest,
        run_dir,
        status,
    })
}

/// Optimization-only run: grid, ascent, traces, shadows, manifest; no
/// services are contacted.
pub fn run_optimize(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let total_timer = Instant::now();
    let meshes = load_normalized_meshes(cfg)?;
    let spec = RasterSpec::square(cfg.raster_px);
    let grid = init_grid(cfg.seed);
    let optimize_timer = Instant::now();
    let results = optimize_phase(cfg, &meshes[0], &grid);
    let optimize_secs = optimize_timer.elapsed().as_secs_f64();

    let id = run_id(cfg);
    let stage = StageDir::create(&cfg.output_dir, &id)?;
    let mut records = Vec::new();
    for (index, result) in results.iter().enumerate() {
        let mut artifacts = BTreeMap::new();
        let dir = format!("start_{index:02}");
        stage
            .write(&format!("{dir}/trace.jsonl"), &trace_jsonl(result))
            .map_err(|source| PipelineError::Io {
                path: stage.root.clone(),
                source,
            })?;
        artifacts.insert("trace".to_string(), format!("{dir}/trace.jsonl"));
        if let Ok(shadow) = shadow_hard(&meshes[0], &result.final_params, &spec) {
            let png = encode_binary(&shadow).expect("png encode");
            stage
                .write(&format!("{dir}/shadow.png"), &png)
                .map_err(|source| PipelineError::Io {
                    path: stage.root.clone(),
                    source,
                })?;
            artifacts.insert("shadow".to_string(), format!("{dir}/shadow.png"));
        }
        records.push(StartRecord {
            start_index: index,
            init: result.init.into(),
            final_params: result.final_params.into(),
            fd_init: finite_or_none(result.fd_init),
            fd_final: finite_or_none(result.fd_final),
            iterations: result.iterations,
            accepted_steps: result.trace.len().saturating_sub(1),
            outcome: Outcome::Optimized,
            scores: None,
            artifacts,
        });
    }
    let timings = if cfg.mock {
        Timings::default()
    } else {
        Timings {
            optimize_secs,
            services_secs: 0.0,
            total_secs: total_timer.elapsed().as_secs_f64(),
        }
    };
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        run_id: id.clone(),
        status: "complete".to_string(),
        failure: None,
        warnings: Vec::new(),
        config: cfg.snapshot(),
        records,
        top_k: Vec::new(),
        timings,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    stage
        .write("manifest.json", &manifest_bytes)
        .map_err(|source| PipelineError::Io {
            path: stage.root.clone(),
            source,
        })?;
    let run_dir = cfg.output_dir.join(&id);
    stage.finalize(&run_dir)?;
    Ok(RunOutput {
        manifest,
        run_dir,
        status: RunStatus::Complete,
    })
}

#[derive(Debug, Serialize)]
pub struct DatasetPair {
    pub drawing: String,
    pub condition: String,
}

#[derive(Debug, Serialize)]
pub struct DatasetSummary {
    pub pairs: Vec<DatasetPair>,
    pub skipped: Vec<String>,
}

/// Build contour-condition training pairs from a directory of line-drawing
/// PNGs: per drawing, extract enclosed regions, merge down to four, and emit
/// a condition image for each merged region plus their union.
pub fn run_dataset(cfg: &PipelineConfig) -> Result<DatasetSummary, PipelineError> {
    cfg.validate()?;
    let dir = cfg.drawing_dir.as_ref().expect("validated");
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| PipelineError::Io {
            path: dir.clone(),
            source,
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
        .collect();
    entries.sort();

    fs::create_dir_all(&cfg.output_dir).map_err(|source| PipelineError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("drawing")
            .to_string();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("{}: unreadable: {e}", path.display());
                skipped.push(stem);
                continue;
            }
        };
        let drawing = match crate::pngio::decode_grayscale(&bytes) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{}: undecodable: {e}", path.display());
                skipped.push(stem);
                continue;
            }
        };
        let strokes = drawing_strokes(&drawing);
        let regions = match umbra_core::contour::extract_closed_regions(&strokes) {
            Ok(r) => r,
            Err(_) => {
                log::info!("{}: no closed regions, skipped", path.display());
                skipped.push(stem);
                continue;
            }
        };
        let merged = umbra_core::contour::greedy_merge(&regions, 4);

        // Condition images: each merged region, then the union of all.
        let mut condition_rasters = Vec::new();
        for region in &merged.regions {
            condition_rasters.push(umbra_core::contour::region_to_raster(region, strokes.spec));
        }
        let mut union = BinaryRaster::filled(strokes.spec, false);
        for region in &merged.regions {
            for &(x, y) in &region.pixels {
                union.set(x, y, true);
            }
        }
        condition_rasters.push(union);

        for (i, raster) in condition_rasters.iter().enumerate() {
            let name = if i < merged.regions.len() {
                format!("{stem}_cond{i}.png")
            } else {
                format!("{stem}_union.png")
            };
            let contours = match extract_contours(raster, 0.0) {
                Ok(c) => c,
                Err(_) => {
                    log::warn!("{stem}: condition {i} produced no traceable contour");
                    continue;
                }
            };
            let image = render_contours(&contours, cfg.stroke_px);
            let png = encode_binary(&image).expect("png encode");
            let out_path = cfg.output_dir.join(&name);
            fs::write(&out_path, png).map_err(|source| PipelineError::Io {
                path: out_path.clone(),
                source,
            })?;
            pairs.push(DatasetPair {
                drawing: path.display().to_string(),
                condition: name,
            });
        }
    }
    let summary = DatasetSummary { pairs, skipped };
    let index_path = cfg.output_dir.join("pairs.json");
    let bytes = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    fs::write(&index_path, bytes).map_err(|source| PipelineError::Io {
        path: index_path.clone(),
        source,
    })?;
    Ok(summary)
}
