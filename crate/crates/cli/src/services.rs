//! HTTP clients for the external drawing services.
//!
//! All four services speak JSON over HTTP:
//!
//! ```text
//! POST /propose  {contour_png_b64, system_prompt, subject_override?} -> {reply_text}
//! POST /generate {contour_png_b64, prompt, keepout_png_b64, seed}    -> {drawing_png_b64}
//! POST /verify   {image_png_b64, question}                           -> {answer}
//! POST /score    {image_png_b64, text}                               -> {clip, ir, hps}
//! ```
//!
//! Non-200 responses and timeouts are transport errors; transport errors are
//! retried with exponential backoff before giving up.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::json;
use thiserror::Error;
use umbra_core::rank::ScoreBundle;

use crate::config::{Endpoints, PipelineConfig};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("request to {url} failed: {msg}")]
    Transport { url: String, msg: String },
    #[error("{url} returned status {status}")]
    Status { url: String, status: u16 },
    #[error("bad response from {url}: {msg}")]
    BadResponse { url: String, msg: String },
}

/// The calls the pipeline makes against the outside world. Implemented over
/// HTTP; test doubles implement it directly.
pub trait Services: Sync {
    fn propose(
        &self,
        contour_png: &[u8],
        system_prompt: &str,
        subject_override: Option<&str>,
    ) -> Result<String, ServiceError>;

    fn generate(
        &self,
        contour_png: &[u8],
        prompt: &str,
        keepout_png: &[u8],
        seed: u64,
    ) -> Result<Vec<u8>, ServiceError>;

    fn verify(&self, image_png: &[u8], question: &str) -> Result<String, ServiceError>;

    fn score(&self, image_png: &[u8], text: &str) -> Result<ScoreBundle, ServiceError>;
}

/// Blocking HTTP client with retry.
pub struct HttpServices {
    agent: ureq::Agent,
    endpoints: Endpoints,
    retries: u32,
    backoff: Duration,
    /// Optional test header attached to /verify requests.
    vqa_force: Option<String>,
}

impl HttpServices {
    pub fn new(endpoints: Endpoints, cfg: &PipelineConfig) -> Self {
        let agent_cfg = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.service_timeout_secs)))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(agent_cfg),
            endpoints,
            retries: cfg.service_retries,
            backoff: Duration::from_millis(cfg.service_backoff_ms),
            vqa_force: cfg.vqa_force.clone(),
        }
    }

    fn post(
        &self,
        url: &str,
        body: &serde_json::Value,
        extra_header: Option<(&str, &str)>,
    ) -> Result<serde_json::Value, ServiceError> {
        let mut attempt = 0;
        loop {
            let mut request = self.agent.post(url);
            if let Some((name, value)) = extra_header {
                request = request.header(name, value);
            }
            let result = request.send_json(body);
            match result {
                Ok(mut response) => {
                    if response.status().as_u16() != 200 {
                        let err = ServiceError::Status {
                            url: url.into(),
                            status: response.status().as_u16(),
                        };
                        if attempt < self.retries {
                            attempt += 1;
                            std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                            continue;
                        }
                        return Err(err);
                    }
                    return response.body_mut().read_json().map_err(|e| {
                        ServiceError::BadResponse {
                            url: url.into(),
                            msg: e.to_string(),
                        }
                    });
                }
                Err(e) => {
                    if attempt < self.retries {
                        attempt += 1;
                        std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                        continue;
                    }
                    return Err(ServiceError::Transport {
                        url: url.into(),
                        msg: e.to_string(),
                    });
                }
            }
        }
    }
}

fn field_str<'a>(value: &'a serde_json::Value, key: &str, url: &str) -> Result<&'a str, ServiceError> {
    value
        .get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| ServiceError::BadResponse {
            url: url.into(),
            msg: format!("missing string field `{key}`"),
        })
}

fn field_f64(value: &serde_json::Value, key: &str, url: &str) -> Result<f64, ServiceError> {
    value
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| ServiceError::BadResponse {
            url: url.into(),
            msg: format!("missing numeric field `{key}`"),
        })
}

impl Services for HttpServices {
    fn propose(
        &self,
        contour_png: &[u8],
        system_prompt: &str,
        subject_override: Option<&str>,
    ) -> Result<String, ServiceError> {
        let url = &self.endpoints.propose;
        let mut body = json!({
            "contour_png_b64": BASE64.encode(contour_png),
            "system_prompt": system_prompt,
        });
        if let Some(subject) = subject_override {
            body["subject_override"] = json!(subject);
        }
        let reply = self.post(url, &body, None)?;
        Ok(field_str(&reply, "reply_text", url)?.to_string())
    }

    fn generate(
        &self,
        contour_png: &[u8],
        prompt: &str,
        keepout_png: &[u8],
        seed: u64,
    ) -> Result<Vec<u8>, ServiceError> {
        let url = &self.endpoints.generate;
        let body = json!({
            "contour_png_b64": BASE64.encode(contour_png),
            "prompt": prompt,
            "keepout_png_b64": BASE64.encode(keepout_png),
            "seed": seed,
        });
        let reply = self.post(url, &body, None)?;
        let b64 = field_str(&reply, "drawing_png_b64", url)?;
        BASE64.decode(b64).map_err(|e| ServiceError::BadResponse {
            url: url.clone(),
            msg: format!("drawing_png_b64 is not base64: {e}"),
        })
    }

    fn verify(&self, image_png: &[u8], question: &str) -> Result<String, ServiceError> {
        let url = &self.endpoints.verify;
        let body = json!({
            "image_png_b64": BASE64.encode(image_png),
            "question": question,
        });
        let header = self.vqa_force.as_deref().map(|v| ("force", v));
        let reply = self.post(url, &body, header)?;
        Ok(field_str(&reply, "answer", url)?.to_string())
    }

    fn score(&self, image_png: &[u8], text: &str) -> Result<ScoreBundle, ServiceError> {
        let url = &self.endpoints.score;
        let body = json!({
            "image_png_b64": BASE64.encode(image_png),
            "text": text,
        });
        let reply = self.post(url, &body, None)?;
        Ok(ScoreBundle {
            clip: field_f64(&reply, "clip", url)?,
            ir: field_f64(&reply, "ir", url)?,
            hps: field_f64(&reply, "hps", url)?,
        })
    }
}

