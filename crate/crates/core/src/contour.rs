//! Shadow-contour extraction and rendering, stroke keep-out masks, and the
//! closed-region machinery used for dataset construction.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dist::squared_distance_transform;
use crate::raster::{rasterize_hard, BinaryRaster, RasterSpec, Tri2};
use crate::scene::Mesh;

/// Whether a contour bounds a component from outside or rings a hole.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContourKind {
    Outer,
    Hole,
}

/// A closed pixel polyline: consecutive points are 8-neighbors and the last
/// point is an 8-neighbor of the first (the closing edge is implicit).
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub kind: ContourKind,
    pub points: Vec<(usize, usize)>,
}

/// All contours traced from one binary raster.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
    pub source_spec: RasterSpec,
}

/// Binary raster where set pixels forbid stroke placement.
#[derive(Clone, Debug, PartialEq)]
pub struct KeepoutMask {
    pub mask: BinaryRaster,
}

/// A connected component of enclosed background pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// Pixels in row-major order.
    pub pixels: Vec<(usize, usize)>,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// Enclosed regions in discovery (row-major) order.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    pub regions: Vec<Region>,
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum ContourError {
    #[error("no connected component passes the area filter")]
    EmptyShadow,
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("animated masks need exactly 5 keyframes, got {0}")]
    FrameCount(usize),
    #[error("keyframe rasters must share one spec")]
    SpecMismatch,
    #[error("no pixel is shadowed in every keyframe")]
    NoStaticRegion,
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("the drawing encloses no regions")]
    NoClosedRegions,
}

/// 8-neighborhood in clockwise order (in raster index space).
const MOORE: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn in_bounds(x: i64, y: i64, w: usize, h: usize) -> bool {
    x >= 0 && y >= 0 && x < w as i64 && y < h as i64
}

/// Moore-neighbor boundary trace with Jacob's stopping criterion: walk the
/// component boundary starting at `start`, whose neighbor `backtrack` lies
/// off the component, and stop upon re-entering `start` from the same
/// backtrack pixel.
fn moore_trace(
    is_fg: impl Fn(i64, i64) -> bool,
    start: (i64, i64),
    backtrack: (i64, i64),
    cap: usize,
) -> Vec<(usize, usize)> {
    let dir_of = |from: (i64, i64), to: (i64, i64)| -> usize {
        MOORE
            .iter()
            .position(|&(dx, dy)| (from.0 + dx, from.1 + dy) == to)
            .expect("backtrack must be a Moore neighbor")
    };
    let mut points = vec![(start.0 as usize, start.1 as usize)];
    let start_dir = dir_of(start, backtrack);
    let mut cur = start;
    let mut back_dir = start_dir;
    while points.len() < cap {
        let mut found = None;
        for step in 1..=8 {
            let dir = (back_dir + step) % 8;
            let (dx, dy) = MOORE[dir];
            let next = (cur.0 + dx, cur.1 + dy);
            if is_fg(next.0, next.1) {
                found = Some((next, dir));
                break;
            }
        }
        let Some((next, dir)) = found else {
            break; // isolated pixel
        };
        // Direction from `next` back to the last empty pixel scanned, i.e.
        // the neighbor checked just before `next` was found.
        let (pdx, pdy) = MOORE[(dir + 7) % 8];
        let prev_empty = (cur.0 + pdx, cur.1 + pdy);
        let next_back = dir_of(next, prev_empty);
        if next == start && next_back == start_dir {
            break;
        }
        points.push((next.0 as usize, next.1 as usize));
        cur = next;
        back_dir = next_back;
    }
    points
}

/// Label 8-connected components of `predicate` pixels; returns a label grid
/// (`usize::MAX` for background) and per-label areas, labels in row-major
/// discovery order.
fn connected_components(
    w: usize,
    h: usize,
    eight_connected: bool,
    predicate: impl Fn(usize, usize) -> bool,
) -> (Vec<usize>, Vec<usize>) {
    const NONE: usize = usize::MAX;
    let mut labels = vec![NONE; w * h];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if labels[start] != NONE || !predicate(start % w, start / w) {
            continue;
        }
        let label = areas.len();
        areas.push(0);
        labels[start] = label;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            areas[label] += 1;
            let (x, y) = ((idx % w) as i64, (idx / w) as i64);
            for &(dx, dy) in MOORE.iter() {
                if !eight_connected && dx != 0 && dy != 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if in_bounds(nx, ny, w, h) {
                    let nidx = ny as usize * w + nx as usize;
                    if labels[nidx] == NONE && predicate(nx as usize, ny as usize) {
                        labels[nidx] = label;
                        stack.push(nidx);
                    }
                }
            }
        }
    }
    (labels, areas)
}

/// Trace outer and hole boundaries of every foreground component whose area
/// is at least `min_area_frac` of the raster.
///
/// Foreground components are 8-connected and holes (enclosed background) are
/// 4-connected; contours list foreground pixels. Traces shorter than 4 pixels
/// are discarded as untraceable speckle.
pub fn extract_contours(
    shadow: &BinaryRaster,
    min_area_frac: f64,
) -> Result<ContourSet, ContourError> {
    let (w, h) = (shadow.spec.width, shadow.spec.height);
    let (fg_labels, fg_areas) =
        connected_components(w, h, true, |x, y| shadow.get(x, y));
    let min_area = min_area_frac * (w * h) as f64;
    let kept: Vec<bool> = fg_areas.iter().map(|&a| a as f64 >= min_area).collect();

    let (bg_labels, bg_areas) = connected_components(w, h, false, |x, y| !shadow.get(x, y));
    // Background components touching the raster border are outside space;
    // the rest are holes.
    let mut enclosed = vec![true; bg_areas.len()];
    for x in 0..w {
        for &y in &[0, h - 1] {
            let l = bg_labels[y * w + x];
            if l != usize::MAX {
                enclosed[l] = false;
            }
        }
    }
    for y in 0..h {
        for &x in &[0, w - 1] {
            let l = bg_labels[y * w + x];
            if l != usize::MAX {
                enclosed[l] = false;
            }
        }
    }

    let fg = &fg_labels;
    let is_fg_of = move |label: usize| {
        move |x: i64, y: i64| in_bounds(x, y, w, h) && fg[y as usize * w + x as usize] == label
    };
    let cap = 4 * w * h;
    let mut contours = Vec::new();

    // Outer contour per kept component, anchored at its first row-major pixel
    // (whose left neighbor is guaranteed off-component).
    let mut seen = vec![false; fg_areas.len()];
    for idx in 0..w * h {
        let label = fg_labels[idx];
        if label == usize::MAX || seen[label] {
            continue;
        }
        seen[label] = true;
        if !kept[label] {
            continue;
        }
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        let points = moore_trace(is_fg_of(label), (x, y), (x - 1, y), cap);
        if points.len() >= 4 {
            contours.push(Contour {
                kind: ContourKind::Outer,
                points,
            });
        }
    }

    // Hole contours: anchor each enclosed background component at its first
    // row-major pixel; the pixel to its left belongs to the enclosing
    // foreground component.
    let mut seen_bg = vec![false; bg_areas.len()];
    for idx in 0..w * h {
        let label = bg_labels[idx];
        if label == usize::MAX || seen_bg[label] {
            continue;
        }
        seen_bg[label] = true;
        if !enclosed[label] {
            continue;
        }
        let (hx, hy) = ((idx % w) as i64, (idx / w) as i64);
        let owner = fg_labels[hy as usize * w + (hx - 1) as usize];
        if !kept[owner] {
            continue;
        }
        let points = moore_trace(is_fg_of(owner), (hx - 1, hy), (hx, hy), cap);
        if points.len() >= 4 {
            contours.push(Contour {
                kind: ContourKind::Hole,
                points,
            });
        }
    }

    if contours.is_empty() {
        return Err(ContourError::EmptyShadow);
    }
    Ok(ContourSet {
        contours,
        source_spec: shadow.spec,
    })
}

/// Disc-brush pixel offsets for a stroke of the given width: offsets within
/// Euclidean distance `stroke_px / 2` of the center.
fn brush_offsets(stroke_px: usize) -> Vec<(i64, i64)> {
    let r = stroke_px as i64;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            // dx^2 + dy^2 <= (stroke_px / 2)^2, kept in integers.
            if 4 * (dx * dx + dy * dy) <= (stroke_px * stroke_px) as i64 {
                offsets.push((dx, dy));
            }
        }
    }
    offsets
}

/// Draw every contour polyline with a disc brush of width `stroke_px`.
pub fn render_contours(contours: &ContourSet, stroke_px: usize) -> BinaryRaster {
    assert!(stroke_px >= 1, "stroke width must be at least 1 pixel");
    let spec = contours.source_spec;
    let mut out = BinaryRaster::filled(spec, false);
    let offsets = brush_offsets(stroke_px);
    for contour in &contours.contours {
        for &(x, y) in &contour.points {
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if in_bounds(nx, ny, spec.width, spec.height) {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Orthographic footprint of the posed mesh (triangles projected straight
/// down), dilated by a disc of radius `dilate_px`.
pub fn object_keepout_mask(posed_mesh: &Mesh, spec: &RasterSpec, dilate_px: usize) -> KeepoutMask {
    let tris: Vec<Tri2> = posed_mesh
        .triangles
        .iter()
        .map(|t| {
            [
                posed_mesh.vertices[t[0]].xy(),
                posed_mesh.vertices[t[1]].xy(),
                posed_mesh.vertices[t[2]].xy(),
            ]
        })
        .collect();
    let footprint = rasterize_hard(&tris, spec);
    KeepoutMask {
        mask: dilate(&footprint, dilate_px),
    }
}

/// Dilate by a disc of radius `radius_px` (inclusive).
pub fn dilate(raster: &BinaryRaster, radius_px: usize) -> BinaryRaster {
    if radius_px == 0 {
        return raster.clone();
    }
    let (w, h) = (raster.spec.width, raster.spec.height);
    let dist = squared_distance_transform(w, h, |x, y| raster.get(x, y));
    let limit = (radius_px * radius_px) as f64;
    let bits = dist.iter().map(|&d| d <= limit).collect();
    BinaryRaster::from_bits(raster.spec, bits)
}

/// Keep-out mask for animated scenes: pixels shadowed in every keyframe form
/// the static region, pixels shadowed in some but not all frames the dynamic
/// region, and a pixel is forbidden iff it is strictly closer to the dynamic
/// region than to the static region.
pub fn animated_keepout_mask(frames: &[BinaryRaster]) -> Result<KeepoutMask, MaskError> {
    if frames.len() != 5 {
        return Err(MaskError::FrameCount(frames.len()));
    }
    let spec = frames[0].spec;
    if frames.iter().any(|f| f.spec != spec) {
        return Err(MaskError::SpecMismatch);
    }
    let (w, h) = (spec.width, spec.height);
    let mut is_static = vec![true; w * h];
    let mut any = vec![false; w * h];
    for frame in frames {
        for (i, &b) in frame.bits().iter().enumerate() {
            is_static[i] &= b;
            any[i] |= b;
        }
    }
    if is_static.iter().all(|&s| !s) {
        return Err(MaskError::NoStaticRegion);
    }
    let dist_static = squared_distance_transform(w, h, |x, y| is_static[y * w + x]);
    let dist_dynamic =
        squared_distance_transform(w, h, |x, y| any[y * w + x] && !is_static[y * w + x]);
    let bits = dist_dynamic
        .iter()
        .zip(&dist_static)
        .map(|(&dd, &ds)| dd < ds)
        .collect();
    Ok(KeepoutMask {
        mask: BinaryRaster::from_bits(spec, bits),
    })
}

/// Enclosed regions of a stroke drawing: flood the background from every
/// border pixel (4-connected); the background components that remain are the
/// closed regions, in row-major discovery order.
pub fn extract_closed_regions(drawing: &BinaryRaster) -> Result<RegionSet, RegionError> {
    let (w, h) = (drawing.spec.width, drawing.spec.height);
    let (bg_labels, bg_areas) = connected_components(w, h, false, |x, y| !drawing.get(x, y));
    let mut enclosed = vec![true; bg_areas.len()];
    for x in 0..w {
        for &y in &[0, h - 1] {
            let l = bg_labels[y * w + x];
            if l != usize::MAX {
                enclosed[l] = false;
            }
        }
    }
    for y in 0..h {
        for &x in &[0, w - 1] {
            let l = bg_labels[y * w + x];
            if l != usize::MAX {
                enclosed[l] = false;
            }
        }
    }
    let mut regions: Vec<Region> = Vec::new();
    let mut region_of = vec![usize::MAX; bg_areas.len()];
    for idx in 0..w * h {
        let label = bg_labels[idx];
        if label == usize::MAX || !enclosed[label] {
            continue;
        }
        if region_of[label] == usize::MAX {
            region_of[label] = regions.len();
            regions.push(Region { pixels: Vec::new() });
        }
        regions[region_of[label]].pixels.push((idx % w, idx / w));
    }
    if regions.is_empty() {
        return Err(RegionError::NoClosedRegions);
    }
    Ok(RegionSet { regions })
}

/// Iteratively replace the two smallest regions by their union until at most
/// `target` remain. Adjacency is not required; area ties are broken by
/// earlier discovery order, and a merged region keeps the earlier slot.
pub fn greedy_merge(set: &RegionSet, target: usize) -> RegionSet {
    let mut regions: Vec<Region> = set.regions.clone();
    while regions.len() > target && regions.len() >= 2 {
        let mut order: Vec<usize> = (0..regions.len()).collect();
        order.sort_by_key(|&i| (regions[i].area(), i));
        let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
        let merged = regions.remove(b);
        merge_sorted(&mut regions[a].pixels, merged.pixels);
    }
    RegionSet { regions }
}

/// Merge two row-major sorted pixel lists, preserving order.
fn merge_sorted(dst: &mut Vec<(usize, usize)>, src: Vec<(usize, usize)>) {
    let mut merged = Vec::with_capacity(dst.len() + src.len());
    let (mut i, mut j) = (0, 0);
    let key = |p: &(usize, usize)| (p.1, p.0);
    while i < dst.len() && j < src.len() {
        if key(&dst[i]) <= key(&src[j]) {
            merged.push(dst[i]);
            i += 1;
        } else {
            merged.push(src[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&dst[i..]);
    merged.extend_from_slice(&src[j..]);
    *dst = merged;
}

/// Binary raster with exactly the pixels of `region` set.
pub fn region_to_raster(region: &Region, spec: RasterSpec) -> BinaryRaster {
    let mut out = BinaryRaster::filled(spec, false);
    for &(x, y) in &region.pixels {
        out.set(x, y, true);
    }
    out
}
