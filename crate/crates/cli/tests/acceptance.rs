//! Acceptance suite: one test per engine-level guarantee, each printing a
//! PASS line (run with `--nocapture` to see them). Oracles are implemented
//! here, independently of the library code they check.

mod common;

use std::time::Instant;

use common::{fast_mock_config, write_box_obj};
use rayon::prelude::*;
use umbra_core::contour::{animated_keepout_mask, greedy_merge, Region, RegionSet};
use umbra_core::fractal::{
    boundary_map, box_count_curve, fractal_dimension, DEFAULT_SCALES,
};
use umbra_core::math::{Vec2, Vec3};
use umbra_core::optim::{
    central_gradient, gradient_fd, init_grid, optimize_local, FdConfig, OptimizerConfig,
};
use umbra_core::rank::{contribution_filter, deltas, gaussian_cdf, rank, ScoreBundle};
use umbra_core::raster::{
    binary_iou, rasterize_hard, rasterize_soft, shadow_hard, BinaryRaster, RasterSpec,
    SoftRaster, Tri2,
};
use umbra_core::scene::{
    light_position, normalize_mesh, pose_mesh, project_vertex, Mesh, SceneParams,
};

const DEG: f64 = std::f64::consts::PI / 180.0;

struct XorShift(u64);

impl XorShift {
    fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
    fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }
}

fn box_mesh(w: f64, d: f64, h: f64) -> Mesh {
    let mut vertices = Vec::new();
    for z in [0.0, h] {
        for y in [0.0, d] {
            for x in [0.0, w] {
                vertices.push(Vec3::new(x, y, z));
            }
        }
    }
    let quads = [
        [0, 1, 3, 2],
        [4, 6, 7, 5],
        [0, 2, 6, 4],
        [1, 5, 7, 3],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
    ];
    let mut triangles = Vec::new();
    for q in quads {
        triangles.push([q[0], q[1], q[2]]);
        triangles.push([q[0], q[2], q[3]]);
    }
    Mesh {
        vertices,
        triangles,
    }
}

#[test]
fn acceptance_01_projection_exactness() {
    let timer = Instant::now();
    let mut rng = XorShift(0xacce_0001);
    for _ in 0..1000 {
        let params = SceneParams::tied(
            rng.in_range(0.0, std::f64::consts::TAU),
            rng.in_range(0.2, 1.4),
            0.0,
        );
        let light = light_position(&params, 3.0);
        let point = Vec3::new(
            rng.in_range(-1.0, 1.0),
            rng.in_range(-1.0, 1.0),
            rng.in_range(0.0, 0.5),
        );
        let hit = project_vertex(&light, point).unwrap();
        let s = Vec3::new(hit.x, hit.y, 0.0);
        let dir = point - light.position;
        let residual = dir.cross(s - light.position).length() / dir.length();
        assert!(residual < 1e-9, "collinearity residual {residual}");

        // Plane fixed-point property is exact, not approximate.
        let grounded = Vec3::new(point.x, point.y, 0.0);
        assert_eq!(project_vertex(&light, grounded).unwrap(), grounded.xy());
    }
    let elapsed = timer.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("ACCEPTANCE 1 PASS: projection exactness (1000 pairs, residual < 1e-9, plane fixed, {elapsed:?})");
}

#[test]
fn acceptance_02_shadow_geometry_vs_hull_oracle() {
    let timer = Instant::now();
    let mesh = normalize_mesh(&box_mesh(1.0, 1.0, 1.0), 0.5).unwrap();
    let params = SceneParams::tied(0.0, 45.0 * DEG, 0.3);
    let spec = RasterSpec::square(256);
    let shadow = shadow_hard(&mesh, &params, &spec).unwrap();

    // Oracle: project the posed corners analytically, take the convex hull,
    // and rasterize by point-in-polygon over pixel centers.
    let posed = pose_mesh(&mesh, &params);
    let light = light_position(&params, umbra_core::scene::LIGHT_DISTANCE);
    let corners: Vec<Vec2> = posed
        .vertices
        .iter()
        .map(|&v| {
            let t = light.position.z / (light.position.z - v.z);
            Vec2::new(
                light.position.x + t * (v.x - light.position.x),
                light.position.y + t * (v.y - light.position.y),
            )
        })
        .collect();
    let hull = convex_hull(&corners);
    let mut oracle = BinaryRaster::filled(spec, false);
    for y in 0..spec.height {
        for x in 0..spec.width {
            if hull_contains(&hull, spec.pixel_center(x, y)) {
                oracle.set(x, y, true);
            }
        }
    }
    let iou = binary_iou(&shadow, &oracle);
    let elapsed = timer.elapsed();
    assert!(iou >= 0.98, "IoU {iou}");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("ACCEPTANCE 2 PASS: unit-box shadow vs convex-hull oracle (IoU {iou:.4}, {elapsed:?})");
}

fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup_by(|a, b| a == b);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).cross(b - o);
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn hull_contains(hull: &[Vec2], p: Vec2) -> bool {
    hull.len() >= 3
        && (0..hull.len()).all(|i| {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            (b - a).cross(p - a) >= 0.0
        })
}

#[test]
fn acceptance_03_soft_hard_convergence() {
    // Twenty random multi-triangle silhouette configurations; thresholding
    // the sigma = 0.005 soft raster at 0.5 must agree with the hard
    // rasterizer to IoU >= 0.99.
    let spec = RasterSpec::square(256);
    let mut rng = XorShift(0xacce_0003);
    for case in 0..20 {
        let n = 3 + (rng.next_u64() % 5) as usize;
        let mut tris: Vec<Tri2> = Vec::new();
        for _ in 0..n {
            // Anchored triangles with a guaranteed minimum size, so the
            // union has substantial area.
            let cx = rng.in_range(-0.5, 0.5);
            let cy = rng.in_range(-0.5, 0.5);
            let mut corner = || {
                Vec2::new(cx + rng.in_range(-0.45, 0.45), cy + rng.in_range(-0.45, 0.45))
            };
            tris.push([corner(), corner(), corner()]);
        }
        let hard = rasterize_hard(&tris, &spec);
        let soft = rasterize_soft(&tris, &spec, 0.005).unwrap().threshold(0.5);
        let iou = binary_iou(&hard, &soft);
        assert!(iou >= 0.99, "case {case}: IoU {iou}");
    }
    println!("ACCEPTANCE 3 PASS: soft>0.5 at sigma 0.005 matches hard (20 scenes, IoU >= 0.99)");
}

/// Independent integer chain: binary 3x3 boundary, exact box counts, same
/// closed-form regression.
fn integer_oracle(bits: &BinaryRaster, scales: &[usize]) -> (Vec<usize>, f64) {
    let (w, h) = (bits.spec.width, bits.spec.height);
    let mut boundary = vec![false; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut any = false;
            let mut all = true;
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let cx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let cy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let v = bits.get(cx, cy);
                    any |= v;
                    all &= v;
                }
            }
            boundary[y as usize * w + x as usize] = any && !all;
        }
    }
    let mut counts = Vec::new();
    for &eps in scales {
        let mut n = 0;
        for by in (0..h).step_by(eps) {
            for bx in (0..w).step_by(eps) {
                let mut occ = false;
                for y in by..(by + eps).min(h) {
                    for x in bx..(bx + eps).min(w) {
                        occ |= boundary[y * w + x];
                    }
                }
                n += occ as usize;
            }
        }
        counts.push(n);
    }
    let xs: Vec<f64> = scales.iter().map(|&e| -(e as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let var: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    (counts, cov / var)
}

fn soft_from_bits(bits: &BinaryRaster) -> SoftRaster {
    SoftRaster::from_values(
        bits.spec,
        bits.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )
}

#[test]
fn acceptance_04_fd_oracle_equivalence_and_calibration() {
    let timer = Instant::now();
    let spec = RasterSpec::square(64);
    let mut rng = XorShift(0xacce_0004);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 100 {
        attempts += 1;
        assert!(attempts < 400, "cannot find enough non-degenerate rasters");
        let mut bits = BinaryRaster::filled(spec, false);
        for _ in 0..2 + (rng.next_u64() % 4) {
            let x0 = (rng.next_u64() % 48) as usize;
            let y0 = (rng.next_u64() % 48) as usize;
            let bw = 4 + (rng.next_u64() % 14) as usize;
            let bh = 4 + (rng.next_u64() % 14) as usize;
            for y in y0..(y0 + bh).min(64) {
                for x in x0..(x0 + bw).min(64) {
                    bits.set(x, y, true);
                }
            }
        }
        let (oracle_counts, oracle_fd) = integer_oracle(&bits, &DEFAULT_SCALES);
        if oracle_counts.iter().any(|&c| c < 3) {
            continue;
        }
        checked += 1;
        let curve = box_count_curve(&boundary_map(&soft_from_bits(&bits)), &DEFAULT_SCALES);
        for (soft, &exact) in curve.counts.iter().zip(&oracle_counts) {
            assert!((soft - exact as f64).abs() < 1e-9, "{soft} vs {exact}");
        }
        let fd = fractal_dimension(&curve).unwrap().fd;
        assert!((fd - oracle_fd).abs() < 1e-9, "{fd} vs {oracle_fd}");
    }

    // Calibration: a 128-px line is one-dimensional.
    let spec = RasterSpec::square(256);
    let mut line = BinaryRaster::filled(spec, false);
    for x in 64..192 {
        line.set(x, 133, true);
    }
    let line_fd = fractal_dimension(&box_count_curve(&soft_from_bits(&line), &DEFAULT_SCALES))
        .unwrap()
        .fd;
    assert!((line_fd - 1.0).abs() <= 0.08, "line fd {line_fd}");

    // Calibration: depth-5 base-3 carpet on a 243-px grid.
    let mut carpet = BinaryRaster::filled(spec, false);
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
                carpet.set(x, y, true);
            }
        }
    }
    let carpet_fd =
        fractal_dimension(&box_count_curve(&soft_from_bits(&carpet), &DEFAULT_SCALES))
            .unwrap()
            .fd;
    let theory = 8.0f64.ln() / 3.0f64.ln();
    assert!(
        (carpet_fd - theory).abs() <= 0.08,
        "carpet fd {carpet_fd} vs {theory}"
    );

    let elapsed = timer.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 4 PASS: FD oracle equivalence (100 rasters, 1e-9) and calibration \
(line {line_fd:.4}, carpet {carpet_fd:.4} vs {theory:.4}, {elapsed:?})"
    );
}

#[test]
fn acceptance_05_gradient_consistency() {
    // Analytic objective: gradients recovered within 1e-6.
    let quadratic = |p: &SceneParams| {
        let f = p.free();
        Some(-(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]))
    };
    let g = central_gradient(quadratic, &SceneParams::tied(0.1, 0.0, 0.0), 1e-3).unwrap();
    assert!((g[0] - (-0.2)).abs() < 1e-6);
    assert!(g[1].abs() < 1e-6 && g[2].abs() < 1e-6);

    // Richardson self-consistency on two non-degenerate scenes; sigma 0.02
    // keeps the differenced gradients above the rasterization noise floor.
    let mesh = normalize_mesh(&box_mesh(2.0, 0.9, 1.1), 0.5).unwrap();
    let fd_cfg = FdConfig {
        spec: RasterSpec::square(256),
        sigma: 0.02,
        scales: DEFAULT_SCALES.to_vec(),
    };
    let h = 0.5 * DEG;
    let mut worst: f64 = 0.0;
    for (az, el, rot) in [(1.2, 30.0, 0.3), (2.5, 50.0, 2.0)] {
        let params = SceneParams::tied(az, el * DEG, rot);
        let g1 = gradient_fd(&mesh, &params, h, &fd_cfg).unwrap();
        let g2 = gradient_fd(&mesh, &params, h / 2.0, &fd_cfg).unwrap();
        for k in 0..3 {
            if g2[k].abs() > 1e-3 {
                let rel = ((g1[k] - g2[k]) / g2[k]).abs();
                worst = worst.max(rel);
                assert!(rel < 0.05, "axis {k}: rel {rel}");
            }
        }
    }
    println!("ACCEPTANCE 5 PASS: analytic gradients to 1e-6; Richardson h vs h/2 within 5% (worst {worst:.4})");
}

#[test]
fn acceptance_06_optimizer_contract_full_grid() {
    let timer = Instant::now();
    let mesh = normalize_mesh(&box_mesh(2.5, 0.5, 0.5), 0.5).unwrap();
    let fd_cfg = FdConfig {
        spec: RasterSpec::square(256),
        sigma: 0.01,
        scales: DEFAULT_SCALES.to_vec(),
    };
    let cfg = OptimizerConfig::default();
    let grid = init_grid(17);
    let results: Vec<_> = grid
        .starts
        .par_iter()
        .map(|s| optimize_local(&mesh, &s.params, &s.bounds, &cfg, &fd_cfg))
        .collect();
    assert_eq!(results.len(), 48);

    let mut improved = 0;
    for (start, result) in grid.starts.iter().zip(&results) {
        assert!(
            result.fd_final >= result.fd_init - 1e-9,
            "start regressed: {} -> {}",
            result.fd_init,
            result.fd_final
        );
        let mut last = f64::NEG_INFINITY;
        for point in &result.trace {
            assert!(point.fd >= last, "non-monotone trace");
            last = point.fd;
            assert!(
                start.bounds.contains(point.params.free()),
                "iterate escaped its neighborhood box"
            );
        }
        if result.fd_final > result.fd_init {
            improved += 1;
        }
    }
    let elapsed = timer.elapsed();
    assert!(
        improved * 100 >= 60 * 48,
        "only {improved}/48 starts strictly improved"
    );
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 6 PASS: 48-start optimizer contract (monotone, bounded, {improved}/48 improved, {elapsed:?})"
    );
}

#[test]
fn acceptance_07_animated_mask_oracle() {
    let spec = RasterSpec::square(64);
    let mut rng = XorShift(0xacce_0007);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 50 {
        attempts += 1;
        assert!(attempts < 200, "cannot generate enough masked inputs");
        let mut frames = Vec::new();
        let sx = 4 + (rng.next_u64() % 40) as usize;
        let sy = 4 + (rng.next_u64() % 40) as usize;
        for _ in 0..5 {
            let mut frame = BinaryRaster::filled(spec, false);
            for y in sy..(sy + 10).min(64) {
                for x in sx..(sx + 10).min(64) {
                    frame.set(x, y, true);
                }
            }
            let nx = (rng.next_u64() % 56) as usize;
            let ny = (rng.next_u64() % 56) as usize;
            for y in ny..(ny + 7).min(64) {
                for x in nx..(nx + 7).min(64) {
                    frame.set(x, y, true);
                }
            }
            frames.push(frame);
        }
        let Ok(mask) = animated_keepout_mask(&frames) else {
            continue;
        };
        checked += 1;

        // Brute-force nearest-squared-distance oracle.
        let mut static_px = Vec::new();
        let mut dynamic_px = Vec::new();
        for y in 0..64i64 {
            for x in 0..64i64 {
                let count = frames
                    .iter()
                    .filter(|f| f.get(x as usize, y as usize))
                    .count();
                if count == 5 {
                    static_px.push((x, y));
                } else if count > 0 {
                    dynamic_px.push((x, y));
                }
            }
        }
        for y in 0..64i64 {
            for x in 0..64i64 {
                let nearest = |set: &[(i64, i64)]| {
                    set.iter()
                        .map(|&(px, py)| (px - x) * (px - x) + (py - y) * (py - y))
                        .min()
                        .unwrap_or(i64::MAX)
                };
                let expected = nearest(&dynamic_px) < nearest(&static_px);
                assert_eq!(
                    mask.mask.get(x as usize, y as usize),
                    expected,
                    "pixel ({x}, {y})"
                );
            }
        }
    }

    // The five-keyframe count is enforced.
    let frame = BinaryRaster::filled(spec, true);
    assert!(animated_keepout_mask(&vec![frame.clone(); 4]).is_err());
    assert!(animated_keepout_mask(&vec![frame; 6]).is_err());
    println!("ACCEPTANCE 7 PASS: animated mask exact vs brute-force oracle (50 inputs); 5-frame count enforced");
}

/// Adaptive Simpson quadrature of the standard normal density.
fn phi_oracle(x: f64) -> f64 {
    fn density(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
    fn simpson(a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (density(a) + 4.0 * density(0.5 * (a + b)) + density(b))
    }
    fn adaptive(a: f64, b: f64, whole: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(a, m);
        let right = simpson(m, b);
        if depth == 0 || (left + right - whole).abs() < 1e-12 {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive(a, m, left, depth - 1) + adaptive(m, b, right, depth - 1)
        }
    }
    // Integrate from 0 to x and add the half mass below 0.
    0.5 + adaptive(0.0, x, simpson(0.0, x), 40)
}

#[test]
fn acceptance_08_ranking_math() {
    // Gaussian CDF against numerical quadrature.
    let phi1 = gaussian_cdf(1.0);
    assert!((phi1 - 0.8413447).abs() < 1e-6, "phi(1) = {phi1}");
    assert!((phi1 - phi_oracle(1.0)).abs() < 1e-7);
    assert_eq!(gaussian_cdf(0.0), 0.5);

    // Deltas and R against a hand-rolled oracle on random bundles.
    let mut rng = XorShift(0xacce_0008);
    for _ in 0..500 {
        let full = ScoreBundle {
            clip: rng.in_range(0.05, 40.0),
            ir: rng.in_range(-2.0, 2.0),
            hps: rng.in_range(0.0, 1.0),
        };
        let partial = ScoreBundle {
            clip: rng.in_range(0.05, 40.0),
            ir: rng.in_range(-2.0, 2.0),
            hps: rng.in_range(0.0, 1.0),
        };
        let d = deltas(&full, &partial).unwrap();
        let oracle_clip = full.clip.powi(2) / partial.clip.powi(2);
        let oracle_ir = gaussian_cdf(full.ir).powi(2) - gaussian_cdf(partial.ir).powi(2);
        let oracle_hps = full.hps.powi(2) - partial.hps.powi(2);
        assert!((d.d_clip - oracle_clip).abs() < 1e-12);
        assert!((d.d_ir - oracle_ir).abs() < 1e-12);
        assert!((d.d_hps - oracle_hps).abs() < 1e-12);
        let r = umbra_core::rank::rank_score(&d);
        assert!((r - oracle_clip * oracle_ir * oracle_hps).abs() < 1e-12);
    }

    // Worked example from the delta definitions.
    let d = deltas(
        &ScoreBundle {
            clip: 0.30,
            ir: 1.0,
            hps: 0.24,
        },
        &ScoreBundle {
            clip: 0.25,
            ir: -1.0,
            hps: 0.20,
        },
    )
    .unwrap();
    assert!((d.d_clip - 1.44).abs() < 1e-12);
    let expected_ir = phi_oracle(1.0).powi(2) - phi_oracle(-1.0).powi(2);
    assert!((d.d_ir - expected_ir).abs() < 2e-6);

    // Exhaustive 3^3 sign-pattern table for the contribution filter: keep
    // iff neither reward nor preference got worse; CLIP never discards.
    for clip_cmp in [-1, 0, 1] {
        for ir_cmp in [-1, 0, 1] {
            for hps_cmp in [-1, 0, 1] {
                let partial = ScoreBundle {
                    clip: 1.0,
                    ir: 0.3,
                    hps: 0.5,
                };
                let full = ScoreBundle {
                    clip: 1.0 + 0.1 * clip_cmp as f64,
                    ir: 0.3 + 0.1 * ir_cmp as f64,
                    hps: 0.5 + 0.1 * hps_cmp as f64,
                };
                let expected = ir_cmp >= 0 && hps_cmp >= 0;
                assert_eq!(
                    contribution_filter(&full, &partial),
                    expected,
                    "pattern ({clip_cmp}, {ir_cmp}, {hps_cmp})"
                );
            }
        }
    }

    // Top-K ordering equals a brute-force sort.
    let scores: Vec<f64> = (0..64).map(|_| rng.in_range(-5.0, 5.0)).collect();
    let ranked = rank(&scores, 10);
    let mut brute: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (got, want) in ranked.iter().zip(brute.iter().take(10)) {
        assert_eq!(got.index, want.0);
        assert!((got.score - want.1).abs() < 1e-12);
    }
    println!("ACCEPTANCE 8 PASS: deltas/R to 1e-12, phi(1) vs quadrature, 27-case filter table, brute-force top-K");
}

#[test]
fn acceptance_09_dataset_constructor() {
    // Worked merge example.
    let areas = [1usize, 2, 3, 4, 5, 6];
    let set = RegionSet {
        regions: areas
            .iter()
            .enumerate()
            .map(|(row, &a)| Region {
                pixels: (0..a).map(|x| (x, row)).collect(),
            })
            .collect(),
    };
    let merged = greedy_merge(&set, 4);
    let mut got: Vec<usize> = merged.regions.iter().map(|r| r.area()).collect();
    got.sort_unstable();
    assert_eq!(got, vec![4, 5, 6, 6]);

    // Pixel conservation on 100 random region sets.
    let mut rng = XorShift(0xacce_0009);
    for _ in 0..100 {
        let count = 2 + (rng.next_u64() % 10) as usize;
        let set = RegionSet {
            regions: (0..count)
                .map(|row| Region {
                    pixels: (0..1 + (rng.next_u64() % 25) as usize)
                        .map(|x| (x, row))
                        .collect(),
                })
                .collect(),
        };
        let merged = greedy_merge(&set, 4);
        let before: usize = set.regions.iter().map(|r| r.area()).sum();
        let after: usize = merged.regions.iter().map(|r| r.area()).sum();
        assert_eq!(before, after);
        assert!(merged.regions.len() <= 4.max(set.regions.len().min(4)));
    }

    // Five condition images per drawing: 4 merged regions + the union.
    let dir = tempfile::tempdir().unwrap();
    let drawings = dir.path().join("d");
    std::fs::create_dir_all(&drawings).unwrap();
    let spec = RasterSpec::square(128);
    let mut gray = umbra_core::raster::GrayRaster::filled(spec, 255);
    let mut draw_box = |x0: usize, y0: usize, side: usize, gray: &mut umbra_core::raster::GrayRaster| {
        for i in 0..side {
            for (x, y) in [
                (x0 + i, y0),
                (x0 + i, y0 + side - 1),
                (x0, y0 + i),
                (x0 + side - 1, y0 + i),
            ] {
                gray.pixels[y * 128 + x] = 0;
            }
        }
    };
    for (i, side) in [6usize, 8, 10, 12, 14, 16].iter().enumerate() {
        draw_box(4 + (i % 3) * 40, 8 + (i / 3) * 50, *side, &mut gray);
    }
    std::fs::write(
        drawings.join("six.png"),
        umbra_cli::pngio::encode_grayscale(&gray).unwrap(),
    )
    .unwrap();
    let mut cfg = umbra_cli::config::PipelineConfig::default();
    cfg.mode = umbra_cli::config::Mode::Dataset;
    cfg.drawing_dir = Some(drawings);
    cfg.output_dir = dir.path().join("out");
    let summary = umbra_cli::pipeline::run_dataset(&cfg).unwrap();
    assert_eq!(summary.pairs.len(), 5);
    println!("ACCEPTANCE 9 PASS: merge {{1..6}} -> {{4,5,6,6}}, pixel conservation x100, 5 conditions per drawing");
}

#[test]
fn acceptance_10_end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_box_obj(dir.path(), "box.obj", 2.0, 0.8, 0.9);

    let cfg_a = fast_mock_config(mesh.clone(), &dir.path().join("a"), 77);
    let cfg_b = fast_mock_config(mesh.clone(), &dir.path().join("b"), 77);
    let run_a = umbra_cli::pipeline::run_pipeline(&cfg_a).unwrap();
    let run_b = umbra_cli::pipeline::run_pipeline(&cfg_b).unwrap();
    assert_eq!(run_a.manifest.records.len(), 48);
    assert_eq!(run_b.manifest.records.len(), 48);
    assert!(!run_a.manifest.top_k.is_empty(), "mock run should rank compositions");

    let collect = |root: &std::path::Path| {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(cur) = stack.pop() {
            for entry in std::fs::read_dir(&cur).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push((
                        p.strip_prefix(root).unwrap().display().to_string(),
                        std::fs::read(&p).unwrap(),
                    ));
                }
            }
        }
        files.sort();
        files
    };
    let files_a = collect(&run_a.run_dir);
    let files_b = collect(&run_b.run_dir);
    assert_eq!(files_a.len(), files_b.len());
    let mut png_count = 0;
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(&files_b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs across runs");
        if name_a.ends_with(".png") {
            png_count += 1;
        }
    }
    assert!(png_count > 48, "expected many PNG artifacts, got {png_count}");

    // The VQA-"no" path: zero ranked entries and exit code 4 from the CLI.
    let out = dir.path().join("no");
    let cfg_path = dir.path().join("fast.json");
    std::fs::write(
        &cfg_path,
        serde_json::to_string_pretty(&fast_mock_config(
            mesh.clone(),
            &dir.path().join("unused"),
            77,
        ))
        .unwrap(),
    )
    .unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_umbra"))
        .args([
            "generate",
            "--config",
            cfg_path.to_str().unwrap(),
            "--mock",
            "--mesh",
            mesh.to_str().unwrap(),
            "--seed",
            "77",
            "--out",
            out.to_str().unwrap(),
            "--vqa-force",
            "no",
        ])
        .output()
        .expect("umbra binary runs");
    assert_eq!(status.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&status.stderr));
    let manifest_path = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap()
        .join("manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["records"].as_array().unwrap().len(), 48);
    assert_eq!(manifest["top_k"].as_array().unwrap().len(), 0);
    println!("ACCEPTANCE 10 PASS: byte-identical mock runs, 48 records, VQA-no gives 0 ranked and exit code 4");
}
