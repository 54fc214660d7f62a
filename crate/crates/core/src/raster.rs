//! Hard and soft rasterization of projected shadow silhouettes.
//!
//! Rasters are row-major with pixel `(x, y)` at index `y * width + x`;
//! `x` grows with the window's x axis and `y` with its y axis. Pixel centers
//! sample the window at `(i + 0.5) / width` of its extent.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math::Vec2;
use crate::scene::{
    light_position, pose_mesh, project_triangles, AbovePlaneLight, Mesh, SceneParams,
    LIGHT_DISTANCE,
};

/// A projected triangle in canvas coordinates.
pub type Tri2 = [Vec2; 3];

/// Axis-aligned world rectangle mapped onto a raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Window {
    /// The square window covering the canvas disk.
    pub const CANVAS: Window = Window {
        min_x: -1.0,
        min_y: -1.0,
        max_x: 1.0,
        max_y: 1.0,
    };

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Raster dimensions plus the world window they cover.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterSpec {
    pub width: usize,
    pub height: usize,
    pub window: Window,
}

impl RasterSpec {
    pub fn new(width: usize, height: usize, window: Window) -> Self {
        assert!(width >= 1 && height >= 1, "raster must have pixels");
        assert!(
            window.width() > 0.0 && window.height() > 0.0,
            "window must have positive area"
        );
        Self {
            width,
            height,
            window,
        }
    }

    /// Square raster over the canvas window.
    pub fn square(side: usize) -> Self {
        Self::new(side, side, Window::CANVAS)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// World coordinates of the center of pixel `(x, y)`.
    pub fn pixel_center(&self, x: usize, y: usize) -> Vec2 {
        Vec2::new(
            self.window.min_x + (x as f64 + 0.5) * self.window.width() / self.width as f64,
            self.window.min_y + (y as f64 + 0.5) * self.window.height() / self.height as f64,
        )
    }

    /// Pixel size in world units along x.
    pub fn pixel_size(&self) -> f64 {
        self.window.width() / self.width as f64
    }
}

/// Binary canvas-aligned image.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryRaster {
    pub spec: RasterSpec,
    bits: Vec<bool>,
}

impl BinaryRaster {
    pub fn filled(spec: RasterSpec, value: bool) -> Self {
        Self {
            bits: vec![value; spec.len()],
            spec,
        }
    }

    pub fn from_bits(spec: RasterSpec, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), spec.len(), "bit count must match spec");
        Self { spec, bits }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.spec.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.spec.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Canvas-aligned image of coverage values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftRaster {
    pub spec: RasterSpec,
    values: Vec<f64>,
}

impl SoftRaster {
    pub fn from_values(spec: RasterSpec, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), spec.len(), "value count must match spec");
        Self { spec, values }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.spec.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Binary raster of pixels whose value exceeds `threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryRaster {
        BinaryRaster::from_bits(self.spec, self.values.iter().map(|&v| v > threshold).collect())
    }
}

/// 8-bit grayscale image; drawings use 0 for ink on a 255 background.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayRaster {
    pub spec: RasterSpec,
    pub pixels: Vec<u8>,
}

impl GrayRaster {
    pub fn filled(spec: RasterSpec, value: u8) -> Self {
        Self {
            pixels: vec![value; spec.len()],
            spec,
        }
    }

    pub fn from_pixels(spec: RasterSpec, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), spec.len(), "pixel count must match spec");
        Self { spec, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.spec.width + x]
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("softness must be positive")]
    InvalidSigma,
    #[error(transparent)]
    AbovePlaneLight(#[from] AbovePlaneLight),
}

/// How [`shadow_raster`] should rasterize the projected silhouette.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RenderMode {
    Hard,
    Soft { sigma: f64 },
}

/// A rendered shadow in either representation.
#[derive(Clone, Debug, PartialEq)]
pub enum ShadowRaster {
    Hard(BinaryRaster),
    Soft(SoftRaster),
}

/// Inclusive point-in-triangle test: points on an edge belong to the
/// triangles on both sides. Degenerate triangles cover exactly their segment.
fn covers(tri: &Tri2, p: Vec2) -> bool {
    let d0 = (tri[1] - tri[0]).cross(p - tri[0]);
    let d1 = (tri[2] - tri[1]).cross(p - tri[1]);
    let d2 = (tri[0] - tri[2]).cross(p - tri[2]);
    if d0 == 0.0 && d1 == 0.0 && d2 == 0.0 {
        // Collinear with a degenerate triangle (or equal to a vertex twice
        // over): contained iff within the segment's bounding box.
        let (min_x, max_x) = min_max(tri[0].x, tri[1].x, tri[2].x);
        let (min_y, max_y) = min_max(tri[0].y, tri[1].y, tri[2].y);
        return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
    }
    let has_neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let has_pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    !(has_neg && has_pos)
}

fn min_max(a: f64, b: f64, c: f64) -> (f64, f64) {
    (a.min(b).min(c), a.max(b).max(c))
}

/// Distance from `p` to the segment `ab`.
fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.length_squared();
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Signed Euclidean distance from `p` to the triangle boundary; negative
/// inside (inclusive of the boundary, where it is zero).
fn signed_distance(tri: &Tri2, p: Vec2) -> f64 {
    let d = segment_distance(p, tri[0], tri[1])
        .min(segment_distance(p, tri[1], tri[2]))
        .min(segment_distance(p, tri[2], tri[0]));
    if covers(tri, p) {
        -d
    } else {
        d
    }
}

/// Pixel range `[lo, hi)` covered by the world interval `[min_w, max_w]`.
fn pixel_range(min_w: f64, max_w: f64, axis_min: f64, axis_extent: f64, pixels: usize) -> (usize, usize) {
    let scale = pixels as f64 / axis_extent;
    let lo = libm::floor((min_w - axis_min) * scale - 0.5);
    let hi = libm::ceil((max_w - axis_min) * scale + 0.5);
    let lo = if lo < 0.0 { 0 } else { lo as usize };
    let hi = if hi < 0.0 { 0 } else { (hi as usize).min(pixels) };
    (lo.min(pixels), hi)
}

/// Set each pixel whose center lies inside or on the boundary of at least one
/// triangle.
pub fn rasterize_hard(tris: &[Tri2], spec: &RasterSpec) -> BinaryRaster {
    let mut out = BinaryRaster::filled(*spec, false);
    for tri in tris {
        let (min_x, max_x) = min_max(tri[0].x, tri[1].x, tri[2].x);
        let (min_y, max_y) = min_max(tri[0].y, tri[1].y, tri[2].y);
        let (x_lo, x_hi) = pixel_range(min_x, max_x, spec.window.min_x, spec.window.width(), spec.width);
        let (y_lo, y_hi) = pixel_range(min_y, max_y, spec.window.min_y, spec.window.height(), spec.height);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                if !out.get(x, y) && covers(tri, spec.pixel_center(x, y)) {
                    out.set(x, y, true);
                }
            }
        }
    }
    out
}

/// `ln(logistic(x))`, computed without overflow for large `|x|`.
fn ln_logistic(x: f64) -> f64 {
    // ln sigma(x) = -softplus(-x)
    let t = -x;
    let softplus = t.max(0.0) + libm::log1p(libm::exp(-libm::fabs(t)));
    -softplus
}

/// Culling radius in units of sigma. Outside this band a triangle's factor
/// differs from 1 by less than `logistic(-12) ~ 6e-6`, keeping the
/// truncation steps far below finite-difference gradient resolution.
const CULL_SIGMAS: f64 = 12.0;

/// Soft silhouette: per pixel, the complementary product of per-triangle
/// logistic factors of signed distance over `sigma`,
/// `p = 1 - prod_j (1 - logistic(-s_j / sigma))`, accumulated in log space.
///
/// Triangles contribute factor 1 outside their bounding box inflated by
/// `CULL_SIGMAS * sigma`.
pub fn rasterize_soft(tris: &[Tri2], spec: &RasterSpec, sigma: f64) -> Result<SoftRaster, RenderError> {
    if !(sigma > 0.0) {
        return Err(RenderError::InvalidSigma);
    }
    let mut log_miss = vec![0.0f64; spec.len()];
    let cull = CULL_SIGMAS * sigma;
    for tri in tris {
        let (min_x, max_x) = min_max(tri[0].x, tri[1].x, tri[2].x);
        let (min_y, max_y) = min_max(tri[0].y, tri[1].y, tri[2].y);
        let (x_lo, x_hi) = pixel_range(
            min_x - cull,
            max_x + cull,
            spec.window.min_x,
            spec.window.width(),
            spec.width,
        );
        let (y_lo, y_hi) = pixel_range(
            min_y - cull,
            max_y + cull,
            spec.window.min_y,
            spec.window.height(),
            spec.height,
        );
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let s = signed_distance(tri, spec.pixel_center(x, y));
                // 1 - logistic(-s/sigma) = logistic(s/sigma)
                log_miss[y * spec.width + x] += ln_logistic(s / sigma);
            }
        }
    }
    let values = log_miss.iter().map(|&m| -libm::expm1(m)).collect();
    Ok(SoftRaster::from_values(*spec, values))
}

/// Render the shadow of a normalized mesh under the given scene parameters:
/// pose the mesh, place the light, project every triangle onto the canvas,
/// and rasterize.
pub fn shadow_raster(
    mesh: &Mesh,
    params: &SceneParams,
    spec: &RasterSpec,
    mode: RenderMode,
) -> Result<ShadowRaster, RenderError> {
    let posed = pose_mesh(mesh, params);
    let light = light_position(params, LIGHT_DISTANCE);
    let tris = project_triangles(&posed, &light)?;
    Ok(match mode {
        RenderMode::Hard => ShadowRaster::Hard(rasterize_hard(&tris, spec)),
        RenderMode::Soft { sigma } => ShadowRaster::Soft(rasterize_soft(&tris, spec, sigma)?),
    })
}

/// Convenience wrapper returning the binary shadow.
pub fn shadow_hard(
    mesh: &Mesh,
    params: &SceneParams,
    spec: &RasterSpec,
) -> Result<BinaryRaster, RenderError> {
    match shadow_raster(mesh, params, spec, RenderMode::Hard)? {
        ShadowRaster::Hard(r) => Ok(r),
        ShadowRaster::Soft(_) => unreachable!(),
    }
}

/// Convenience wrapper returning the soft shadow.
pub fn shadow_soft(
    mesh: &Mesh,
    params: &SceneParams,
    spec: &RasterSpec,
    sigma: f64,
) -> Result<SoftRaster, RenderError> {
    match shadow_raster(mesh, params, spec, RenderMode::Soft { sigma })? {
        ShadowRaster::Soft(r) => Ok(r),
        ShadowRaster::Hard(_) => unreachable!(),
    }
}

/// Intersection-over-union of two binary rasters.
pub fn binary_iou(a: &BinaryRaster, b: &BinaryRaster) -> f64 {
    assert_eq!(a.spec, b.spec);
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
