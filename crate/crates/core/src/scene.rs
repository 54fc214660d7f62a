//! Scene geometry: mesh ingestion, normalization, posing, light placement,
//! and projection of shadow points onto the canvas plane.
//!
//! The canvas is the disk of radius [`CANVAS_RADIUS`] in the plane `z = 0`.
//! Objects rest on the canvas; the spotlight sits at distance
//! [`LIGHT_DISTANCE`] from the canvas center and is treated as a point
//! projector, so the shadow of a vertex is the intersection of the light ray
//! through it with `z = 0`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math::{Vec2, Vec3};

/// Radius of the canvas disk, in world units.
pub const CANVAS_RADIUS: f64 = 1.0;
/// Longest bounding-box dimension of a normalized object.
pub const OBJECT_SIZE: f64 = 0.5;
/// Distance of the light from the canvas center.
pub const LIGHT_DISTANCE: f64 = 3.0;
/// Object centers are placed at this fraction of the canvas radius so the
/// shadow extends toward the canvas center.
pub const CENTER_RADIUS_FACTOR: f64 = 0.8;

/// Triangle soup in canvas-centric world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    /// Vertex-index triples; every index is `< vertices.len()`.
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Axis-aligned bounding box, or `None` for a mesh without vertices.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for &v in &self.vertices[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }
}

/// The five scene parameters. Light azimuth/elevation give the spotlight
/// direction; the object center sits at polar coordinates
/// (`center_radius`, `center_azimuth`) on the canvas and the object is spun
/// by `rotation` about its vertical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    /// Light azimuth, radians.
    pub azimuth: f64,
    /// Light elevation above the canvas plane, radians, in `(0, pi/2)`.
    pub elevation: f64,
    /// Object center distance from the canvas center.
    pub center_radius: f64,
    /// Object center azimuth, radians.
    pub center_azimuth: f64,
    /// Object rotation about the vertical axis, radians.
    pub rotation: f64,
}

impl SceneParams {
    /// The tied configuration: the object center azimuth equals the light
    /// azimuth and the center radius is fixed at
    /// [`CENTER_RADIUS_FACTOR`] `*` [`CANVAS_RADIUS`], so the shadow extends
    /// toward the canvas center and only (azimuth, elevation, rotation)
    /// remain free.
    pub fn tied(azimuth: f64, elevation: f64, rotation: f64) -> Self {
        Self {
            azimuth,
            elevation,
            center_radius: CENTER_RADIUS_FACTOR * CANVAS_RADIUS,
            center_azimuth: azimuth,
            rotation,
        }
    }

    /// The three free parameters in optimizer order.
    pub fn free(&self) -> [f64; 3] {
        [self.azimuth, self.elevation, self.rotation]
    }

    /// Rebuild params from free values, re-applying the azimuth tie and
    /// keeping this configuration's center radius.
    pub fn with_free(&self, free: [f64; 3]) -> Self {
        Self {
            azimuth: free[0],
            elevation: free[1],
            center_radius: self.center_radius,
            center_azimuth: free[0],
            rotation: free[2],
        }
    }
}

/// Point-light position; `|position| == LIGHT_DISTANCE` by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LightPose {
    pub position: Vec3,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("OBJ parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no faces")]
    Empty,
    #[error("mesh bounding box has zero extent")]
    Degenerate,
}

/// The projected point would lie at or behind the light along the ray.
#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("point is at or above the light height; no forward intersection with the canvas")]
pub struct AbovePlaneLight;

/// Parse Wavefront OBJ text into a triangle mesh.
///
/// Only `v` and `f` records are interpreted; everything else is skipped.
/// Faces are 1-based and fan-triangulated, so a quad `a b c d` becomes the
/// triangles `(a, b, c)` and `(a, c, d)` with vertex order preserved.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    // Face corner indices are validated against the final vertex count, since
    // OBJ permits faces to precede the vertices they reference.
    let mut faces: Vec<(usize, Vec<usize>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for coord in coords.iter_mut() {
                    let field = fields.next().ok_or_else(|| MeshError::Parse {
                        line: line_no,
                        msg: String::from("vertex needs 3 coordinates"),
                    })?;
                    *coord = field.parse().map_err(|_| MeshError::Parse {
                        line: line_no,
                        msg: format!("bad coordinate `{field}`"),
                    })?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for field in fields {
                    // Accept `i`, `i/t`, `i/t/n`, `i//n`; only the vertex
                    // index matters here.
                    let vertex_field = field.split('/').next().unwrap_or("");
                    let index: i64 = vertex_field.parse().map_err(|_| MeshError::Parse {
                        line: line_no,
                        msg: format!("bad face index `{field}`"),
                    })?;
                    if index < 1 {
                        return Err(MeshError::Parse {
                            line: line_no,
                            msg: format!("face index {index} is not 1-based"),
                        });
                    }
                    corners.push((index - 1) as usize);
                }
                if corners.len() < 3 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        msg: String::from("face needs at least 3 vertices"),
                    });
                }
                faces.push((line_no, corners));
            }
            _ => {}
        }
    }

    let mut triangles = Vec::new();
    for (line_no, corners) in faces {
        for &corner in &corners {
            if corner >= vertices.len() {
                return Err(MeshError::Parse {
                    line: line_no,
                    msg: format!(
                        "face index {} out of range ({} vertices)",
                        corner + 1,
                        vertices.len()
                    ),
                });
            }
        }
        for i in 1..corners.len() - 1 {
            triangles.push([corners[0], corners[i], corners[i + 1]]);
        }
    }

    if triangles.is_empty() {
        return Err(MeshError::Empty);
    }
    Ok(Mesh {
        vertices,
        triangles,
    })
}

/// Uniformly scale and translate so the longest bounding-box dimension equals
/// `size`, the bounding-box center lies on the vertical axis (`x = y = 0`),
/// and the object rests on the canvas (`min z = 0`).
pub fn normalize_mesh(mesh: &Mesh, size: f64) -> Result<Mesh, MeshError> {
    let (lo, hi) = mesh.bounding_box().ok_or(MeshError::Degenerate)?;
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    if !(longest > 0.0) {
        return Err(MeshError::Degenerate);
    }
    let scale = size / longest;
    let center_x = (lo.x + hi.x) * 0.5;
    let center_y = (lo.y + hi.y) * 0.5;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| {
            Vec3::new(
                (v.x - center_x) * scale,
                (v.y - center_y) * scale,
                (v.z - lo.z) * scale,
            )
        })
        .collect();
    Ok(Mesh {
        vertices,
        triangles: mesh.triangles.clone(),
    })
}

/// Normalize a set of keyframe meshes with one shared transform, computed
/// from the union of their bounding boxes, so relative motion between frames
/// survives normalization. A single mesh reduces to [`normalize_mesh`].
pub fn normalize_shared(meshes: &[Mesh], size: f64) -> Result<Vec<Mesh>, MeshError> {
    let mut boxes = meshes.iter().filter_map(|m| m.bounding_box());
    let Some((mut lo, mut hi)) = boxes.next() else {
        return Err(MeshError::Degenerate);
    };
    for (l, h) in boxes {
        lo = lo.min(l);
        hi = hi.max(h);
    }
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    if !(longest > 0.0) {
        return Err(MeshError::Degenerate);
    }
    let scale = size / longest;
    let center_x = (lo.x + hi.x) * 0.5;
    let center_y = (lo.y + hi.y) * 0.5;
    Ok(meshes
        .iter()
        .map(|mesh| Mesh {
            vertices: mesh
                .vertices
                .iter()
                .map(|v| {
                    Vec3::new(
                        (v.x - center_x) * scale,
                        (v.y - center_y) * scale,
                        (v.z - lo.z) * scale,
                    )
                })
                .collect(),
            triangles: mesh.triangles.clone(),
        })
        .collect())
}

/// Spin the mesh by `rotation` about the vertical axis through its
/// bounding-box center, then translate so the (post-rotation) bounding-box
/// center lands at the object's polar position on the canvas. Heights are
/// untouched.
pub fn pose_mesh(mesh: &Mesh, params: &SceneParams) -> Mesh {
    let Some((lo, hi)) = mesh.bounding_box() else {
        return mesh.clone();
    };
    let pivot = Vec2::new((lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5);
    let (sin, cos) = (libm::sin(params.rotation), libm::cos(params.rotation));
    let mut rotated: Vec<Vec3> = mesh
        .vertices
        .iter()
        .map(|v| {
            let dx = v.x - pivot.x;
            let dy = v.y - pivot.y;
            Vec3::new(
                pivot.x + dx * cos - dy * sin,
                pivot.y + dx * sin + dy * cos,
                v.z,
            )
        })
        .collect();

    // Rotation about the bbox center can shift the bbox center of an
    // asymmetric object, so recompute it before translating.
    let mut lo2 = rotated[0];
    let mut hi2 = rotated[0];
    for &v in &rotated[1..] {
        lo2 = lo2.min(v);
        hi2 = hi2.max(v);
    }
    let target_x = params.center_radius * libm::cos(params.center_azimuth);
    let target_y = params.center_radius * libm::sin(params.center_azimuth);
    let shift_x = target_x - (lo2.x + hi2.x) * 0.5;
    let shift_y = target_y - (lo2.y + hi2.y) * 0.5;
    for v in &mut rotated {
        v.x += shift_x;
        v.y += shift_y;
    }
    Mesh {
        vertices: rotated,
        triangles: mesh.triangles.clone(),
    }
}

/// Spotlight position for the given azimuth/elevation at distance `distance`
/// from the canvas center.
pub fn light_position(params: &SceneParams, distance: f64) -> LightPose {
    let (sin_az, cos_az) = (libm::sin(params.azimuth), libm::cos(params.azimuth));
    let (sin_el, cos_el) = (libm::sin(params.elevation), libm::cos(params.elevation));
    LightPose {
        position: Vec3::new(
            distance * cos_el * cos_az,
            distance * cos_el * sin_az,
            distance * sin_el,
        ),
    }
}

/// Intersect the ray from the light through `point` with the canvas plane
/// `z = 0` and return the intersection's canvas coordinates.
///
/// Points already on the plane map to themselves exactly.
pub fn project_vertex(light: &LightPose, point: Vec3) -> Result<Vec2, AbovePlaneLight> {
    if point.z == 0.0 {
        return Ok(point.xy());
    }
    let lz = light.position.z;
    if point.z >= lz {
        return Err(AbovePlaneLight);
    }
    let t = lz / (lz - point.z);
    let hit = light.position + (point - light.position) * t;
    Ok(hit.xy())
}

/// Project every triangle of `mesh` onto the canvas plane.
pub fn project_triangles(
    mesh: &Mesh,
    light: &LightPose,
) -> Result<Vec<[Vec2; 3]>, AbovePlaneLight> {
    let mut projected = Vec::with_capacity(mesh.vertices.len());
    for &v in &mesh.vertices {
        projected.push(project_vertex(light, v)?);
    }
    Ok(mesh
        .triangles
        .iter()
        .map(|t| [projected[t[0]], projected[t[1]], projected[t[2]]])
        .collect())
}
