//! Composition scoring math: score deltas, the contribution filter, top-K
//! ranking, and the raster edits (contour erasure, layered composite) that
//! produce the full/partial drawing pair.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::contour::ContourSet;
use crate::dist::squared_distance_transform;
use crate::raster::{BinaryRaster, GrayRaster};

/// Composite gray levels (out of 255).
pub const SHADOW_GRAY: u8 = 128;
pub const OBJECT_GRAY: u8 = 64;
pub const INK: u8 = 0;
pub const PAPER: u8 = 255;
/// Drawing pixels at or below this value count as strokes.
pub const STROKE_THRESHOLD: u8 = 127;

/// A parsed visual-prompt proposal: the model's interpretation of the
/// contour, the drawing description used as the generation prompt, and the
/// component of the subject the contour outlines (e.g. "the body of a fish").
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptProposal {
    pub reasoning: String,
    pub description: String,
    pub component: String,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum ProposalParseError {
    #[error("reply is not two paragraphs separated by a blank line")]
    MissingSeparator,
    #[error("reasoning paragraph names no outlined component")]
    MissingComponent,
}

/// Raw scores of one drawing against its description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBundle {
    /// Embedding similarity; must be positive.
    pub clip: f64,
    /// Unnormalized reward score.
    pub ir: f64,
    /// Human-preference score in `[0, 1]`.
    pub hps: f64,
}

/// Per-metric improvement of the full drawing over the partial one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deltas {
    pub d_clip: f64,
    pub d_ir: f64,
    pub d_hps: f64,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("partial CLIP score must be positive")]
pub struct DivisionDomain;

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("rasters must share one spec")]
pub struct SpecMismatch;

/// Parse the two-paragraph proposal reply: the first paragraph explains the
/// interpretation and must name the outlined component after "outline of";
/// the remainder is the drawing description.
pub fn parse_proposal(reply: &str) -> Result<PromptProposal, ProposalParseError> {
    let normalized = reply.replace("\r\n", "\n");
    let trimmed = normalized.trim();
    let (reasoning, description) = split_paragraphs(trimmed)
        .ok_or(ProposalParseError::MissingSeparator)?;
    let component = extract_component(&reasoning)
        .ok_or(ProposalParseError::MissingComponent)?;
    Ok(PromptProposal {
        reasoning,
        description,
        component,
    })
}

fn split_paragraphs(text: &str) -> Option<(String, String)> {
    let mut search_from = 0;
    while let Some(pos) = text[search_from..].find('\n') {
        let abs = search_from + pos;
        // A blank line: the next line is empty or whitespace-only.
        let rest = &text[abs + 1..];
        let next_line_end = rest.find('\n').map(|p| abs + 1 + p).unwrap_or(text.len());
        if text[abs + 1..next_line_end].trim().is_empty() && next_line_end < text.len() {
            let first = text[..abs].trim();
            let second = text[next_line_end + 1..].trim();
            if !first.is_empty() && !second.is_empty() {
                return Some((first.to_string(), second.to_string()));
            }
        }
        search_from = abs + 1;
    }
    None
}

fn extract_component(reasoning: &str) -> Option<String> {
    let lower = reasoning.to_lowercase();
    let anchor = "outline of ";
    let at = lower.find(anchor)? + anchor.len();
    let tail = &reasoning[at..];
    let end = tail.find('.').unwrap_or(tail.len());
    let component = tail[..end].trim();
    if component.is_empty() {
        None
    } else {
        Some(component.to_string())
    }
}

/// Normalize a free-text verification answer to yes/no; `None` when the
/// reply is neither.
pub fn normalize_yes_no(answer: &str) -> Option<bool> {
    let first_word: String = answer
        .trim()
        .split_whitespace()
        .next()?
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect();
    match first_word.to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Standard Gaussian CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Keep a composition only if the full drawing scores at least as well as
/// the partial one on both reward and preference; a strictly higher partial
/// score on either means the shadow contour failed to improve the drawing.
pub fn contribution_filter(full: &ScoreBundle, partial: &ScoreBundle) -> bool {
    full.ir >= partial.ir && full.hps >= partial.hps
}

/// Improvement scores of full over partial: the squared CLIP ratio, and the
/// squared differences of the Gaussian-mapped reward and of the preference
/// score.
pub fn deltas(full: &ScoreBundle, partial: &ScoreBundle) -> Result<Deltas, DivisionDomain> {
    if !(partial.clip > 0.0) {
        return Err(DivisionDomain);
    }
    let phi_full = gaussian_cdf(full.ir);
    let phi_partial = gaussian_cdf(partial.ir);
    Ok(Deltas {
        d_clip: (full.clip * full.clip) / (partial.clip * partial.clip),
        d_ir: phi_full * phi_full - phi_partial * phi_partial,
        d_hps: full.hps * full.hps - partial.hps * partial.hps,
    })
}

/// Overall ranking score: the product of the three improvement scores.
pub fn rank_score(d: &Deltas) -> f64 {
    d.d_clip * d.d_ir * d.d_hps
}

/// A candidate index with its ranking score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub score: f64,
}

/// Order candidates by descending score (ties keep input order) and return
/// the best `k`, or fewer if fewer survive.
pub fn rank(scores: &[f64], k: usize) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = scores
        .iter()
        .enumerate()
        .map(|(index, &score)| Ranked { index, score })
        .collect();
    ranked.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(core::cmp::Ordering::Equal));
    ranked.truncate(k);
    ranked
}

/// Erase the conditioning contour from a drawing: every pixel within
/// `band_px` of a contour point is reset to paper.
pub fn erase_contour(drawing: &GrayRaster, contours: &ContourSet, band_px: usize) -> GrayRaster {
    assert!(band_px >= 1, "erase band must be at least 1 pixel");
    let spec = drawing.spec;
    assert_eq!(
        (spec.width, spec.height),
        (contours.source_spec.width, contours.source_spec.height),
        "drawing and contour dimensions must match"
    );
    let (w, h) = (spec.width, spec.height);
    let mut on_contour = alloc::vec![false; w * h];
    for contour in &contours.contours {
        for &(x, y) in &contour.points {
            on_contour[y * w + x] = true;
        }
    }
    let dist = squared_distance_transform(w, h, |x, y| on_contour[y * w + x]);
    let limit = (band_px * band_px) as f64;
    let pixels = drawing
        .pixels
        .iter()
        .zip(&dist)
        .map(|(&p, &d)| if d <= limit { PAPER } else { p })
        .collect();
    GrayRaster::from_pixels(spec, pixels)
}

/// Layer the final composition: paper, then the shadow in gray, then the
/// object footprint in dark gray with a one-pixel ink outline, then the
/// drawing strokes in ink. Later layers overwrite earlier ones.
pub fn composite(
    drawing_partial: &GrayRaster,
    shadow: &BinaryRaster,
    footprint: &BinaryRaster,
) -> Result<GrayRaster, SpecMismatch> {
    let spec = drawing_partial.spec;
    if shadow.spec != spec || footprint.spec != spec {
        return Err(SpecMismatch);
    }
    let (w, h) = (spec.width, spec.height);
    let mut out = GrayRaster::filled(spec, PAPER);
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if shadow.get(x, y) {
                out.pixels[idx] = SHADOW_GRAY;
            }
            if footprint.get(x, y) {
                // Outline where any 8-neighbor (or the raster edge) leaves
                // the footprint.
                let mut interior = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0
                            || ny < 0
                            || nx >= w as i64
                            || ny >= h as i64
                            || !footprint.get(nx as usize, ny as usize)
                        {
                            interior = false;
                        }
                    }
                }
                out.pixels[idx] = if interior { OBJECT_GRAY } else { INK };
            }
            if drawing_partial.pixels[idx] <= STROKE_THRESHOLD {
                out.pixels[idx] = INK;
            }
        }
    }
    Ok(out)
}
