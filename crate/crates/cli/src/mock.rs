//! Deterministic in-process mock services for testing and offline runs.
//!
//! Every response is a pure function of the request payload and the server
//! seed, so identical runs produce identical bytes regardless of request
//! order. `/verify` answers yes unless the request carries a `force: no`
//! header.

use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use umbra_core::rank::{INK, PAPER, STROKE_THRESHOLD};
use umbra_core::raster::GrayRaster;

use crate::pngio::{decode_binary, decode_grayscale, encode_grayscale};

#[derive(Debug, Error)]
pub enum MockError {
    #[error("cannot bind mock server: {0}")]
    PortInUse(std::io::Error),
}

/// A running mock-service server; shuts down on drop.
pub struct MockServer {
    pub port: u16,
    server: Arc<tiny_http::Server>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind to the given port (0 picks a free one) and serve forever.
    pub fn start(port: u16, seed: u64) -> Result<Self, MockError> {
        let listener =
            TcpListener::bind(("127.0.0.1", port)).map_err(MockError::PortInUse)?;
        let port = listener.local_addr().map_err(MockError::PortInUse)?.port();
        let server = Arc::new(
            tiny_http::Server::from_listener(listener, None)
                .map_err(|e| MockError::PortInUse(std::io::Error::other(e)))?,
        );
        let stop = Arc::new(AtomicBool::new(false));
        let worker = Arc::clone(&server);
        let worker_stop = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            for request in worker.incoming_requests() {
                if worker_stop.load(Ordering::SeqCst) {
                    break;
                }
                handle_request(request, seed);
            }
        });
        Ok(Self {
            port,
            server,
            stop,
            handle: Some(handle),
        })
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_request(mut request: tiny_http::Request, seed: u64) {
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        respond(request, 400, json!({"error": "unreadable body"}));
        return;
    }
    let payload: Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(e) => {
            respond(request, 400, json!({"error": format!("bad json: {e}")}));
            return;
        }
    };
    let url = request.url().to_string();
    let reply = match url.as_str() {
        "/propose" => propose_reply(&payload),
        "/generate" => generate_reply(&payload, seed),
        "/verify" => verify_reply(&request),
        "/score" => score_reply(&payload),
        _ => Err("unknown endpoint".to_string()),
    };
    match reply {
        Ok(value) => respond(request, 200, value),
        Err(msg) => respond(request, 400, json!({"error": msg})),
    }
}

fn respond(request: tiny_http::Request, status: u16, value: Value) {
    let data = value.to_string();
    let response = tiny_http::Response::from_string(data)
        .with_status_code(status)
        .with_header(
            tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap(),
        );
    let _ = request.respond(response);
}

fn propose_reply(payload: &Value) -> Result<Value, String> {
    let subject = payload
        .get("subject_override")
        .and_then(|v| v.as_str())
        .unwrap_or("fish");
    let reply = format!(
        "The provided contour shows an outline of the body of a {subject}. The reason is that \
the closed stroke forms a rounded mass near the canvas center, wide enough to read as a torso, \
and its gentle curves suggest an organic figure.\n\nA minimalist line drawing of a {subject} in \
a calm resting pose. The {subject} has a small round eye and a softly curved back. The {subject} \
is drifting gently to the left. The style is playful, with sparse unbroken strokes and generous \
negative space."
    );
    Ok(json!({ "reply_text": reply }))
}

fn b64_field(payload: &Value, key: &str) -> Result<Vec<u8>, String> {
    let text = payload
        .get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| format!("missing `{key}`"))?;
    BASE64.decode(text).map_err(|e| format!("`{key}` is not base64: {e}"))
}

/// Echo the conditioning contour (outside the keep-out mask) and add
/// seed-hashed decorative dots, all guaranteed outside the mask.
fn generate_reply(payload: &Value, seed: u64) -> Result<Value, String> {
    let contour_png = b64_field(payload, "contour_png_b64")?;
    let keepout_png = b64_field(payload, "keepout_png_b64")?;
    let prompt = payload
        .get("prompt")
        .and_then(|v| v.as_str())
        .ok_or("missing `prompt`")?;
    let request_seed = payload.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);

    let contour = decode_binary(&contour_png).map_err(|e| e.to_string())?;
    let keepout = decode_binary(&keepout_png).map_err(|e| e.to_string())?;
    if contour.spec != keepout.spec {
        return Err("contour and keepout dimensions differ".into());
    }
    let spec = contour.spec;
    let (w, h) = (spec.width, spec.height);
    let mut drawing = GrayRaster::filled(spec, PAPER);
    for y in 0..h {
        for x in 0..w {
            if contour.get(x, y) && !keepout.get(x, y) {
                drawing.pixels[y * w + x] = INK;
            }
        }
    }

    // Decorative strokes at hash-derived positions, skipped when any pixel
    // of the dot would violate the mask.
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(request_seed.to_le_bytes());
    hasher.update(&contour_png);
    hasher.update(prompt.as_bytes());
    hasher.update(&keepout_png);
    let digest = hasher.finalize();
    let mut stream = digest.to_vec();
    let draw_dot = |cx: usize, cy: usize, drawing: &mut GrayRaster| {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    drawing.pixels[ny as usize * w + nx as usize] = INK;
                }
            }
        }
    };
    let mut placed = 0;
    let mut cursor = 0;
    while placed < 24 && cursor + 4 <= stream.len() {
        let x = u16::from_le_bytes([stream[cursor], stream[cursor + 1]]) as usize % w;
        let y = u16::from_le_bytes([stream[cursor + 2], stream[cursor + 3]]) as usize % h;
        cursor += 4;
        if cursor + 4 > stream.len() {
            // Extend the byte stream by rehashing.
            let mut rehash = Sha256::new();
            rehash.update(&stream);
            stream = rehash.finalize().to_vec();
            cursor = 0;
        }
        let mut clear = true;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    clear = false;
                } else if keepout.get(nx as usize, ny as usize) {
                    clear = false;
                }
            }
        }
        if clear {
            draw_dot(x, y, &mut drawing);
            placed += 1;
        }
    }

    let png = encode_grayscale(&drawing).map_err(|e| e.to_string())?;
    Ok(json!({ "drawing_png_b64": BASE64.encode(png) }))
}

fn verify_reply(request: &tiny_http::Request) -> Result<Value, String> {
    let forced_no = request
        .headers()
        .iter()
        .any(|h| h.field.as_str().as_str().eq_ignore_ascii_case("force")
            && h.value.as_str().trim().eq_ignore_ascii_case("no"));
    Ok(json!({ "answer": if forced_no { "no" } else { "yes" } }))
}

/// Deterministic scores from a hash of (image bytes, text), biased by the
/// drawing's ink fraction so fuller drawings score higher.
fn score_reply(payload: &Value) -> Result<Value, String> {
    let image_png = b64_field(payload, "image_png_b64")?;
    let text = payload
        .get("text")
        .and_then(|v| v.as_str())
        .ok_or("missing `text`")?;
    let gray = decode_grayscale(&image_png).map_err(|e| e.to_string())?;
    let ink = gray
        .pixels
        .iter()
        .filter(|&&p| p <= STROKE_THRESHOLD)
        .count() as f64
        / gray.pixels.len() as f64;

    let mut hasher = Sha256::new();
    hasher.update(&image_png);
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let unit = |offset: usize| -> f64 {
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[offset..offset + 8]);
        (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
    };

    // Ink-fraction bias dominates the hash jitter, so a drawing containing
    // strictly more ink scores strictly higher.
    let clip = 20.0 + 20.0 * ink + 2.0 * unit(0);
    let ir = 3.0 * ink + 0.02 * (unit(8) - 0.5);
    let hps = (0.2 + 0.5 * ink + 0.01 * (unit(16) - 0.5)).clamp(0.0, 1.0);
    Ok(json!({ "clip": clip, "ir": ir, "hps": hps }))
}
