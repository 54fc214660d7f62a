//! Exact squared Euclidean distance transform (two-pass lower-envelope
//! algorithm, one 1D transform per column then per row).
//!
//! Seeds are at integer pixel coordinates, so all outputs are exact integer
//! values representable in f64; comparisons against other transforms or
//! squared radii are therefore exact.

use alloc::vec;
use alloc::vec::Vec;

const INF: f64 = f64::INFINITY;

/// 1D squared-distance transform of sampled function `f`, writing into `d`.
fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        if f[q] == INF && f[v[k]] == INF {
            continue;
        }
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s > z[k] {
                break;
            }
            if k == 0 {
                break;
            }
            k -= 1;
        }
        if f[v[k]] == INF {
            // Everything so far was unreachable; start over at q.
            v[k] = q;
        } else {
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = if f[p] == INF {
            INF
        } else {
            let dq = q as f64 - p as f64;
            dq * dq + f[p]
        };
    }
}

/// Squared Euclidean distance from every pixel to the nearest seed pixel.
/// Pixels with no seed anywhere map to infinity.
pub(crate) fn squared_distance_transform(
    width: usize,
    height: usize,
    mut is_seed: impl FnMut(usize, usize) -> bool,
) -> Vec<f64> {
    let mut grid = vec![INF; width * height];
    for y in 0..height {
        for x in 0..width {
            if is_seed(x, y) {
                grid[y * width + x] = 0.0;
            }
        }
    }
    let longest = width.max(height);
    let mut f = vec![0.0f64; longest];
    let mut d = vec![0.0f64; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0f64; longest + 1];

    // Columns first.
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        transform_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = d[y];
        }
    }
    // Then rows.
    for y in 0..height {
        f[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        transform_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&d[..width]);
    }
    grid
}
