//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use umbra_cli::config::PipelineConfig;

/// Write a box OBJ with the given dimensions and return its path.
pub fn write_box_obj(dir: &Path, name: &str, w: f64, d: f64, h: f64) -> PathBuf {
    let mut text = String::new();
    for z in [0.0, h] {
        for y in [0.0, d] {
            for x in [0.0, w] {
                text.push_str(&format!("v {x} {y} {z}\n"));
            }
        }
    }
    let quads = [
        [1, 2, 4, 3],
        [5, 7, 8, 6],
        [1, 3, 7, 5],
        [2, 6, 8, 4],
        [1, 5, 6, 2],
        [3, 4, 8, 7],
    ];
    for q in quads {
        text.push_str(&format!("f {} {} {} {}\n", q[0], q[1], q[2], q[3]));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// A cheap-but-complete pipeline configuration against mock services.
pub fn fast_mock_config(mesh: PathBuf, out: &Path, seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.mesh_paths = vec![mesh];
    cfg.output_dir = out.to_path_buf();
    cfg.seed = seed;
    cfg.mock = true;
    cfg.raster_px = 128;
    cfg.scales = vec![2, 4, 8, 16];
    cfg.optimizer.max_iters = 2;
    cfg.service_backoff_ms = 10;
    cfg
}
