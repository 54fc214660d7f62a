//! Shared builders and oracles for integration tests.
#![allow(dead_code)]

use umbra_core::math::{Vec2, Vec3};
use umbra_core::scene::Mesh;

/// Axis-aligned box `[0,w] x [0,d] x [0,h]` as a triangle mesh.
pub fn box_mesh(w: f64, d: f64, h: f64) -> Mesh {
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

/// UV sphere of the given radius centered at `(0, 0, center_z)`.
pub fn uv_sphere(radius: f64, center_z: f64, stacks: usize, slices: usize) -> Mesh {
    let mut vertices = Vec::new();
    for i in 0..=stacks {
        let v = i as f64 / stacks as f64;
        let polar = v * std::f64::consts::PI;
        for j in 0..slices {
            let azimuth = j as f64 / slices as f64 * std::f64::consts::TAU;
            vertices.push(Vec3::new(
                radius * polar.sin() * azimuth.cos(),
                radius * polar.sin() * azimuth.sin(),
                center_z + radius * polar.cos(),
            ));
        }
    }
    let idx = |i: usize, j: usize| i * slices + (j % slices);
    let mut triangles = Vec::new();
    for i in 0..stacks {
        for j in 0..slices {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh {
        vertices,
        triangles,
    }
}

/// Small deterministic PRNG for test inputs.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }
}

/// Convex hull by monotone chain; returns counter-clockwise vertices.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
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

/// Point-in-convex-polygon test (inclusive), hull in counter-clockwise order.
pub fn hull_contains(hull: &[Vec2], p: Vec2) -> bool {
    let n = hull.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        if (b - a).cross(p - a) < 0.0 {
            return false;
        }
    }
    true
}
