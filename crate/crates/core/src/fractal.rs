//! Smooth box-counting fractal dimension of the shadow boundary.
//!
//! The chain is: soft silhouette -> morphological-gradient boundary map ->
//! per-scale soft box occupancy -> least-squares slope of `ln N` against
//! `ln(1/eps)`. Every stage is smooth in the silhouette values and exact (up
//! to a `1e-15` occupancy clamp) on binary inputs, so the same code is both
//! the optimization objective and the measurement tool.

use alloc::vec::Vec;

use thiserror::Error;

use crate::raster::{shadow_soft, RasterSpec, RenderError, SoftRaster};
use crate::scene::{Mesh, SceneParams};

/// Box sizes (pixels) used by default: five octaves, with the coarsest box
/// leaving at least 8 boxes per side on a 256-pixel raster.
pub const DEFAULT_SCALES: [usize; 5] = [2, 4, 8, 16, 32];

/// Minimum soft box count per scale for a meaningful log-log fit.
pub const MIN_BOXES_PER_SCALE: f64 = 3.0;

/// Pixel values are clamped to `1 - OCCUPANCY_CLAMP` before the log-space
/// occupancy product so that `ln(1 - v)` stays finite; the resulting count
/// error is below `1e-15` per occupied box.
pub const OCCUPANCY_CLAMP: f64 = 1e-15;

/// Per-scale soft box occupancy counts.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxCountCurve {
    /// Box sizes in pixels, strictly increasing.
    pub scales: Vec<usize>,
    /// Soft count of occupied boxes per scale.
    pub counts: Vec<f64>,
}

/// A fractal dimension together with the curve it was fitted to.
#[derive(Clone, Debug, PartialEq)]
pub struct FdValue {
    pub fd: f64,
    pub curve: BoxCountCurve,
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum FdError {
    /// The shadow is absent or too degenerate for a box-count fit.
    #[error("shadow is empty or degenerate (fewer than {MIN_BOXES_PER_SCALE} occupied boxes at some scale)")]
    EmptyShadow,
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Morphological gradient with a 3x3 neighborhood and replicated borders:
/// per pixel, the neighborhood maximum minus the neighborhood minimum. On a
/// binary input this is exactly 1 on boundary-adjacent pixels and 0 elsewhere.
pub fn boundary_map(raster: &SoftRaster) -> SoftRaster {
    let (w, h) = (raster.spec.width, raster.spec.height);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let ny = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let v = raster.get(nx, ny);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            out.push(hi - lo);
        }
    }
    SoftRaster::from_values(raster.spec, out)
}

/// Neumaier compensated summation, so box counts are exact to well below the
/// oracle-comparison tolerance even at tens of thousands of boxes.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if libm::fabs(sum) >= libm::fabs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Partition the raster into disjoint `eps x eps` boxes (the raster is
/// implicitly zero-padded to the next multiple of `eps`) and accumulate per
/// box the soft occupancy `1 - prod_i (1 - v_i)`, computed in log space.
pub fn box_count_curve(map: &SoftRaster, scales: &[usize]) -> BoxCountCurve {
    let (w, h) = (map.spec.width, map.spec.height);
    let mut counts = Vec::with_capacity(scales.len());
    for &eps in scales {
        assert!(eps >= 1, "box size must be positive");
        let boxes_x = w.div_ceil(eps);
        let boxes_y = h.div_ceil(eps);
        let occupancies = (0..boxes_x * boxes_y).map(|b| {
            let bx = (b % boxes_x) * eps;
            let by = (b / boxes_x) * eps;
            let mut log_empty = 0.0f64;
            for y in by..(by + eps).min(h) {
                for x in bx..(bx + eps).min(w) {
                    let v = map.get(x, y).min(1.0 - OCCUPANCY_CLAMP);
                    log_empty += libm::log1p(-v);
                }
            }
            -libm::expm1(log_empty)
        });
        counts.push(compensated_sum(occupancies));
    }
    BoxCountCurve {
        scales: scales.to_vec(),
        counts,
    }
}

/// Least-squares slope of `ln N(eps)` against `ln(1/eps)`.
pub fn fractal_dimension(curve: &BoxCountCurve) -> Result<FdValue, FdError> {
    if curve.counts.iter().any(|&c| c < MIN_BOXES_PER_SCALE) {
        return Err(FdError::EmptyShadow);
    }
    let n = curve.scales.len() as f64;
    let xs: Vec<f64> = curve.scales.iter().map(|&e| -libm::log(e as f64)).collect();
    let ys: Vec<f64> = curve.counts.iter().map(|&c| libm::log(c)).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - x_mean) * (y - y_mean);
        var += (x - x_mean) * (x - x_mean);
    }
    Ok(FdValue {
        fd: cov / var,
        curve: curve.clone(),
    })
}

/// Fractal dimension of the soft shadow boundary for a scene configuration.
pub fn scene_fd(
    mesh: &Mesh,
    params: &SceneParams,
    spec: &RasterSpec,
    sigma: f64,
    scales: &[usize],
) -> Result<FdValue, FdError> {
    let soft = shadow_soft(mesh, params, spec, sigma)?;
    fractal_dimension(&box_count_curve(&boundary_map(&soft), scales))
}

/// The minimized objective: the negated fractal dimension of the shadow
/// boundary.
pub fn objective(
    mesh: &Mesh,
    params: &SceneParams,
    spec: &RasterSpec,
    sigma: f64,
    scales: &[usize],
) -> Result<f64, FdError> {
    Ok(-scene_fd(mesh, params, spec, sigma, scales)?.fd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryRaster;

    fn soft_from_bits(bits: &BinaryRaster) -> SoftRaster {
        SoftRaster::from_values(
            bits.spec,
            bits.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    #[test]
    fn boundary_of_constant_raster_is_zero() {
        let spec = RasterSpec::square(32);
        let flat = SoftRaster::from_values(spec, vec![0.37; spec.len()]);
        assert!(boundary_map(&flat).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_of_single_pixel_is_three_by_three_block() {
        let spec = RasterSpec::square(16);
        let mut bits = BinaryRaster::filled(spec, false);
        bits.set(8, 8, true);
        let boundary = boundary_map(&soft_from_bits(&bits));
        for y in 0..16 {
            for x in 0..16 {
                let expected = (7..=9).contains(&x) && (7..=9).contains(&y);
                assert_eq!(boundary.get(x, y) == 1.0, expected, "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn boundary_of_filled_square_hugs_its_border() {
        let spec = RasterSpec::square(32);
        let mut bits = BinaryRaster::filled(spec, false);
        for y in 8..20 {
            for x in 10..22 {
                bits.set(x, y, true);
            }
        }
        let boundary = boundary_map(&soft_from_bits(&bits));
        // Brute-force 3x3 min/max oracle.
        for y in 0..32 {
            for x in 0..32 {
                let mut any = false;
                let mut all = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = (x as i64 + dx).clamp(0, 31) as usize;
                        let ny = (y as i64 + dy).clamp(0, 31) as usize;
                        any |= bits.get(nx, ny);
                        all &= bits.get(nx, ny);
                    }
                }
                let expected = if any && !all { 1.0 } else { 0.0 };
                assert_eq!(boundary.get(x, y), expected, "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn counts_of_blank_map_are_zero() {
        let spec = RasterSpec::square(64);
        let blank = SoftRaster::from_values(spec, vec![0.0; spec.len()]);
        let curve = box_count_curve(&blank, &DEFAULT_SCALES);
        assert!(curve.counts.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_pixel_counts_one_box_at_every_scale() {
        let spec = RasterSpec::square(64);
        let mut bits = BinaryRaster::filled(spec, false);
        bits.set(17, 42, true);
        let curve = box_count_curve(&soft_from_bits(&bits), &DEFAULT_SCALES);
        for &c in &curve.counts {
            assert!((c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_counts_match_integer_counts() {
        let spec = RasterSpec::square(64);
        let mut bits = BinaryRaster::filled(spec, false);
        // Deterministic speckle.
        let mut state = 0x9e3779b97f4a7c15u64;
        for y in 0..64 {
            for x in 0..64 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if state >> 62 == 0 {
                    bits.set(x, y, true);
                }
            }
        }
        let curve = box_count_curve(&soft_from_bits(&bits), &DEFAULT_SCALES);
        for (&eps, &count) in curve.scales.iter().zip(&curve.counts) {
            let boxes = 64usize.div_ceil(eps);
            let mut expected = 0usize;
            for by in 0..boxes {
                for bx in 0..boxes {
                    let mut occupied = false;
                    for y in by * eps..((by + 1) * eps).min(64) {
                        for x in bx * eps..((bx + 1) * eps).min(64) {
                            occupied |= bits.get(x, y);
                        }
                    }
                    expected += occupied as usize;
                }
            }
            assert!(
                (count - expected as f64).abs() < 1e-9,
                "eps {eps}: soft {count} vs integer {expected}"
            );
        }
    }

    #[test]
    fn exact_power_law_recovers_dimension() {
        // N(eps) = C * eps^(-d) with C = 1000, d = 1.37.
        let d = 1.37;
        let curve = BoxCountCurve {
            scales: DEFAULT_SCALES.to_vec(),
            counts: DEFAULT_SCALES
                .iter()
                .map(|&e| 1000.0 * libm::pow(e as f64, -d))
                .collect(),
        };
        let fd = fractal_dimension(&curve).unwrap().fd;
        assert!((fd - d).abs() < 1e-12, "got {fd}");
    }

    #[test]
    fn degenerate_counts_are_rejected() {
        let curve = BoxCountCurve {
            scales: vec![2, 4, 8],
            counts: vec![10.0, 4.0, 2.0],
        };
        assert_eq!(fractal_dimension(&curve).unwrap_err(), FdError::EmptyShadow);
    }

    #[test]
    fn horizontal_line_has_dimension_one() {
        let spec = RasterSpec::square(256);
        let mut bits = BinaryRaster::filled(spec, false);
        for x in 64..192 {
            bits.set(x, 133, true);
        }
        let curve = box_count_curve(&soft_from_bits(&bits), &DEFAULT_SCALES);
        let fd = fractal_dimension(&curve).unwrap().fd;
        assert!((fd - 1.0).abs() <= 0.08, "got {fd}");
    }

    #[test]
    fn sierpinski_carpet_has_expected_dimension() {
        // Depth-5 carpet on a 243-pixel grid: a pixel survives if no base-3
        // digit position has both coordinates equal to 1.
        let spec = RasterSpec::square(256);
        let mut bits = BinaryRaster::filled(spec, false);
        for y in 0..243usize {
            for x in 0..243usize {
                let (mut xx, mut yy) = (x, y);
                let mut keep = true;
                for _ in 0..5 {
                    if xx % 3 == 1 && yy % 3 == 1 {
                        keep = false;
                        break;
                    }
                    xx /= 3;
                    yy /= 3;
                }
                if keep {
                    bits.set(x, y, true);
                }
            }
        }
        let curve = box_count_curve(&soft_from_bits(&bits), &DEFAULT_SCALES);
        let fd = fractal_dimension(&curve).unwrap().fd;
        let theory = libm::log(8.0) / libm::log(3.0);
        assert!((fd - theory).abs() <= 0.08, "got {fd}, want {theory}");
    }

    #[test]
    fn translation_by_coarsest_box_preserves_counts() {
        let spec = RasterSpec::square(128);
        let mut a = BinaryRaster::filled(spec, false);
        let mut b = BinaryRaster::filled(spec, false);
        for y in 10..30 {
            for x in 5..45 {
                a.set(x, y, true);
                b.set(x + 32, y + 32, true);
            }
        }
        let ca = box_count_curve(&soft_from_bits(&a), &DEFAULT_SCALES);
        let cb = box_count_curve(&soft_from_bits(&b), &DEFAULT_SCALES);
        assert_eq!(ca.counts, cb.counts);
    }
}
