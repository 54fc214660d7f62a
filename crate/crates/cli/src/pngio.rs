//! Raster <-> 8-bit PNG conversions and the colored contour overlays.
//!
//! Binary rasters encode as 0/255 grayscale; soft rasters quantize with
//! half-up rounding. Drawings are grayscale with ink at 0 on a 255 paper
//! background. Overlays are the only RGB payloads.

use std::io::Cursor;

use image::{GrayImage, ImageFormat, RgbImage};
use thiserror::Error;
use umbra_core::contour::ContourSet;
use umbra_core::raster::{BinaryRaster, GrayRaster, RasterSpec, SoftRaster, Window};

#[derive(Debug, Error)]
pub enum PngError {
    #[error("png encode failed: {0}")]
    Encode(image::ImageError),
    #[error("png decode failed: {0}")]
    Decode(image::ImageError),
}

fn gray_image(width: usize, height: usize, pixels: Vec<u8>) -> GrayImage {
    GrayImage::from_raw(width as u32, height as u32, pixels)
        .expect("pixel buffer matches dimensions")
}

fn encode_gray(img: &GrayImage) -> Result<Vec<u8>, PngError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(PngError::Encode)?;
    Ok(out.into_inner())
}

pub fn encode_binary(raster: &BinaryRaster) -> Result<Vec<u8>, PngError> {
    let pixels = raster.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_gray(&gray_image(raster.spec.width, raster.spec.height, pixels))
}

pub fn encode_soft(raster: &SoftRaster) -> Result<Vec<u8>, PngError> {
    let pixels = raster
        .values()
        .iter()
        .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    encode_gray(&gray_image(raster.spec.width, raster.spec.height, pixels))
}

pub fn encode_grayscale(raster: &GrayRaster) -> Result<Vec<u8>, PngError> {
    encode_gray(&gray_image(
        raster.spec.width,
        raster.spec.height,
        raster.pixels.clone(),
    ))
}

pub fn encode_rgb(width: usize, height: usize, pixels: Vec<u8>) -> Result<Vec<u8>, PngError> {
    let img = RgbImage::from_raw(width as u32, height as u32, pixels)
        .expect("pixel buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(PngError::Encode)?;
    Ok(out.into_inner())
}

/// Decode a PNG to a grayscale raster over the canvas window.
pub fn decode_grayscale(bytes: &[u8]) -> Result<GrayRaster, PngError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(PngError::Decode)?
        .into_luma8();
    let spec = RasterSpec::new(img.width() as usize, img.height() as usize, Window::CANVAS);
    Ok(GrayRaster::from_pixels(spec, img.into_raw()))
}

/// Decode a PNG to a binary raster; pixels at or above 128 are set.
pub fn decode_binary(bytes: &[u8]) -> Result<BinaryRaster, PngError> {
    let gray = decode_grayscale(bytes)?;
    let bits = gray.pixels.iter().map(|&p| p >= 128).collect();
    Ok(BinaryRaster::from_bits(gray.spec, bits))
}

/// Overlay the contour in pure red over a grayscale drawing; the check image
/// for coherence verification.
pub fn red_overlay(drawing: &GrayRaster, contours: &ContourSet, stroke_px: usize) -> Vec<u8> {
    let (w, h) = (drawing.spec.width, drawing.spec.height);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for &p in &drawing.pixels {
        rgb.extend_from_slice(&[p, p, p]);
    }
    let strokes = umbra_core::contour::render_contours(contours, stroke_px);
    for (i, &on) in strokes.bits().iter().enumerate() {
        if on {
            rgb[i * 3] = 255;
            rgb[i * 3 + 1] = 0;
            rgb[i * 3 + 2] = 0;
        }
    }
    rgb
}

/// Frame colors of the animated contour overlay, in frame order.
pub const FRAME_COLORS: [[u8; 3]; 5] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 0, 255],
    [0, 255, 255],
];

/// Overlay per-frame contour strokes in distinct colors on white; later
/// frames draw over earlier ones.
pub fn frame_overlay(frame_strokes: &[BinaryRaster]) -> Vec<u8> {
    let spec = frame_strokes[0].spec;
    let (w, h) = (spec.width, spec.height);
    let mut rgb = vec![255u8; w * h * 3];
    for (strokes, color) in frame_strokes.iter().zip(FRAME_COLORS.iter()) {
        for (i, &on) in strokes.bits().iter().enumerate() {
            if on {
                rgb[i * 3..i * 3 + 3].copy_from_slice(color);
            }
        }
    }
    rgb
}
