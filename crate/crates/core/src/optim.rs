//! Multi-start, box-constrained gradient ascent on the fractal dimension of
//! the shadow boundary.
//!
//! The search is seeded with a 48-configuration grid (12 azimuths at 30
//! degree spacing times 4 elevations, each with a random object rotation) and
//! every start optimizes only within its own neighborhood box, so solutions
//! stay distinct and physically reproducible.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fractal::{scene_fd, FdError};
use crate::raster::RasterSpec;
use crate::scene::{Mesh, SceneParams};

const DEG: f64 = core::f64::consts::PI / 180.0;

/// Grid azimuth count (30-degree spacing).
pub const GRID_AZIMUTHS: usize = 12;
/// Grid elevations, degrees; four settings to vary shadow length.
pub const GRID_ELEVATIONS_DEG: [f64; 4] = [20.0, 35.0, 50.0, 65.0];
/// Half-widths of the per-start neighborhood box for
/// (azimuth, elevation, rotation), radians. The azimuth half-width is half
/// the grid spacing, so neighboring boxes never overlap.
pub const NEIGHBORHOOD_HALF_WIDTH: [f64; 3] = [15.0 * DEG, 7.5 * DEG, 30.0 * DEG];

/// Box constraints on the free parameters (azimuth, elevation, rotation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBounds {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl ParamBounds {
    /// The neighborhood box around a start configuration.
    pub fn around(params: &SceneParams) -> Self {
        let center = params.free();
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..3 {
            lo[k] = center[k] - NEIGHBORHOOD_HALF_WIDTH[k];
            hi[k] = center[k] + NEIGHBORHOOD_HALF_WIDTH[k];
        }
        Self { lo, hi }
    }

    pub fn clamp(&self, free: [f64; 3]) -> [f64; 3] {
        let mut out = free;
        for k in 0..3 {
            out[k] = out[k].clamp(self.lo[k], self.hi[k]);
        }
        out
    }

    pub fn contains(&self, free: [f64; 3]) -> bool {
        (0..3).all(|k| free[k] >= self.lo[k] && free[k] <= self.hi[k])
    }
}

/// One seeded configuration and the box it may move in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Start {
    pub params: SceneParams,
    pub bounds: ParamBounds,
}

/// The full multi-start grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StartGrid {
    pub starts: Vec<Start>,
}

/// Hyperparameters of the projected ascent loop. All angles are radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Initial step length.
    pub step0: f64,
    /// Multiplier applied to the step after a rejected candidate.
    pub shrink: f64,
    pub max_iters: usize,
    /// Stop once the step length falls below this.
    pub tol: f64,
    /// Central-difference probe offset.
    pub grad_h: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step0: 5.0 * DEG,
            shrink: 0.5,
            max_iters: 30,
            tol: 0.1 * DEG,
            grad_h: 0.5 * DEG,
        }
    }
}

/// Rendering settings the objective is evaluated with.
#[derive(Clone, Debug, PartialEq)]
pub struct FdConfig {
    pub spec: RasterSpec,
    pub sigma: f64,
    pub scales: Vec<usize>,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            spec: RasterSpec::square(256),
            sigma: 0.01,
            scales: crate::fractal::DEFAULT_SCALES.to_vec(),
        }
    }
}

/// One accepted point of an optimization run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub params: SceneParams,
    pub fd: f64,
}

/// Outcome of one local optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    pub init: SceneParams,
    pub final_params: SceneParams,
    /// NaN when the start never produced a measurable shadow.
    pub fd_init: f64,
    pub fd_final: f64,
    /// Ascent iterations executed (accepted or not).
    pub iterations: usize,
    /// The initial point followed by every accepted step.
    pub trace: Vec<TracePoint>,
}

/// Build the 48-start grid: azimuths `k * 30 deg`, the four grid elevations,
/// and a rotation drawn uniformly from `[0, 2pi)` by a PRNG keyed on
/// `(seed, start index)`. Ties are applied to every start.
pub fn init_grid(seed: u64) -> StartGrid {
    let mut starts = Vec::with_capacity(GRID_AZIMUTHS * GRID_ELEVATIONS_DEG.len());
    for az_idx in 0..GRID_AZIMUTHS {
        for (el_idx, &elev_deg) in GRID_ELEVATIONS_DEG.iter().enumerate() {
            let index = az_idx * GRID_ELEVATIONS_DEG.len() + el_idx;
            let mut key = [0u8; 32];
            key[..8].copy_from_slice(&seed.to_le_bytes());
            key[8..16].copy_from_slice(&(index as u64).to_le_bytes());
            let mut rng = ChaCha8Rng::from_seed(key);
            let rotation: f64 = rng.random::<f64>() * core::f64::consts::TAU;
            let params = SceneParams::tied(az_idx as f64 * 30.0 * DEG, elev_deg * DEG, rotation);
            starts.push(Start {
                params,
                bounds: ParamBounds::around(&params),
            });
        }
    }
    StartGrid { starts }
}

/// Central-difference gradient of `f` over the free parameters. Returns
/// `None` when any of the six probes fails or is non-finite.
pub fn central_gradient<F>(mut f: F, params: &SceneParams, h: f64) -> Option<[f64; 3]>
where
    F: FnMut(&SceneParams) -> Option<f64>,
{
    let center = params.free();
    let mut grad = [0.0; 3];
    for k in 0..3 {
        let mut plus = center;
        plus[k] += h;
        let mut minus = center;
        minus[k] -= h;
        let fp = f(&params.with_free(plus))?;
        let fm = f(&params.with_free(minus))?;
        if !fp.is_finite() || !fm.is_finite() {
            return None;
        }
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Some(grad)
}

/// Central-difference gradient of the shadow-boundary fractal dimension.
pub fn gradient_fd(
    mesh: &Mesh,
    params: &SceneParams,
    h: f64,
    fd_cfg: &FdConfig,
) -> Option<[f64; 3]> {
    central_gradient(
        |p| scene_fd(mesh, p, &fd_cfg.spec, fd_cfg.sigma, &fd_cfg.scales).ok().map(|v| v.fd),
        params,
        h,
    )
}

fn eval_fd(mesh: &Mesh, params: &SceneParams, fd_cfg: &FdConfig) -> Result<f64, FdError> {
    scene_fd(mesh, params, &fd_cfg.spec, fd_cfg.sigma, &fd_cfg.scales).map(|v| v.fd)
}

/// Projected gradient ascent within `bounds`: step along the normalized
/// gradient, clamp to the box, and accept only strict improvements; rejected
/// candidates shrink the step. Stops at `max_iters`, once the step falls
/// below `tol`, or when the gradient becomes unavailable.
pub fn optimize_local(
    mesh: &Mesh,
    start: &SceneParams,
    bounds: &ParamBounds,
    cfg: &OptimizerConfig,
    fd_cfg: &FdConfig,
) -> OptimResult {
    let Ok(mut fd_cur) = eval_fd(mesh, start, fd_cfg) else {
        // Degenerate start: nothing to measure, nothing to improve.
        return OptimResult {
            init: *start,
            final_params: *start,
            fd_init: f64::NAN,
            fd_final: f64::NAN,
            iterations: 0,
            trace: Vec::new(),
        };
    };
    let fd_init = fd_cur;
    let mut current = *start;
    let mut trace = alloc::vec![TracePoint {
        params: current,
        fd: fd_cur,
    }];
    let mut step = cfg.step0;
    let mut iterations = 0;

    while iterations < cfg.max_iters && step >= cfg.tol {
        iterations += 1;
        let Some(grad) = central_gradient(
            |p| eval_fd(mesh, p, fd_cfg).ok(),
            &current,
            cfg.grad_h,
        ) else {
            break;
        };
        let norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let free = current.free();
        let mut candidate = [0.0; 3];
        for k in 0..3 {
            candidate[k] = free[k] + step * grad[k] / norm;
        }
        let candidate = current.with_free(bounds.clamp(candidate));
        match eval_fd(mesh, &candidate, fd_cfg) {
            Ok(fd_cand) if fd_cand > fd_cur => {
                current = candidate;
                fd_cur = fd_cand;
                trace.push(TracePoint {
                    params: current,
                    fd: fd_cur,
                });
            }
            _ => step *= cfg.shrink,
        }
    }

    OptimResult {
        init: *start,
        final_params: current,
        fd_init,
        fd_final: fd_cur,
        iterations,
        trace,
    }
}

/// Optimize every start of the grid, in start order.
pub fn run_all_starts(
    mesh: &Mesh,
    grid: &StartGrid,
    cfg: &OptimizerConfig,
    fd_cfg: &FdConfig,
) -> Vec<OptimResult> {
    grid.starts
        .iter()
        .map(|s| optimize_local(mesh, &s.params, &s.bounds, cfg, fd_cfg))
        .collect()
}
