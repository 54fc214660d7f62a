//! Pipeline layer around `umbra-core`: configuration, mesh and PNG IO,
//! HTTP drawing-service clients, deterministic mock services, and the
//! end-to-end orchestration that turns a mesh into ranked shadow-drawing
//! compositions.

pub mod config;
pub mod meshio;
pub mod mock;
pub mod pipeline;
pub mod pngio;
pub mod services;

/// System prompt sent with every visual-prompt proposal request.
pub const SYSTEM_PROMPT: &str = include_str!("../assets/system_prompt.txt");
