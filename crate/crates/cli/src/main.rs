use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use umbra_cli::config::{Mode, PipelineConfig};
use umbra_cli::mock::MockServer;
use umbra_cli::pipeline::{run_dataset, run_optimize, run_pipeline, RunStatus};

/// Shadow-drawing composition engine.
///
/// Searches scene parameters (light direction, object pose) that give a 3D
/// object a visually rich cast shadow, drives external drawing services to
/// complete the shadow contour into a line drawing, and ranks the results.
#[derive(Parser)]
#[command(name = "umbra", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the pipeline subcommands; every flag overrides the
/// corresponding config-file field.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh path; repeat five times for animated keyframes.
    #[arg(long)]
    mesh: Vec<PathBuf>,
    /// Grid and generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (runs are written to <out>/<run-id>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ranked compositions to keep.
    #[arg(long)]
    k: Option<usize>,
    /// Subject override passed to the prompt proposal service.
    #[arg(long)]
    subject: Option<String>,
    /// Run against in-process deterministic mock services.
    #[arg(long)]
    mock: bool,
    #[arg(long = "endpoint.propose", value_name = "URL")]
    endpoint_propose: Option<String>,
    #[arg(long = "endpoint.generate", value_name = "URL")]
    endpoint_generate: Option<String>,
    #[arg(long = "endpoint.verify", value_name = "URL")]
    endpoint_verify: Option<String>,
    #[arg(long = "endpoint.score", value_name = "URL")]
    endpoint_score: Option<String>,
    /// Force every coherence check to this answer (mock testing).
    #[arg(long, value_name = "ANSWER")]
    vqa_force: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Grid search and fractal-dimension ascent only; no services.
    Optimize(Overrides),
    /// Full static pipeline: optimize, generate, verify, score, rank.
    Generate(Overrides),
    /// Animated pipeline over five keyframe meshes.
    Animate(Overrides),
    /// Build contour-condition training pairs from a directory of drawings.
    Dataset {
        #[command(flatten)]
        overrides: Overrides,
        /// Directory of line-drawing PNGs.
        #[arg(long)]
        drawings: Option<PathBuf>,
    },
    /// Serve the deterministic mock services until interrupted.
    MockServe {
        /// Port to bind (0 picks a free port).
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Seed folded into every generated drawing.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SERVICE: u8 = 3;
const EXIT_NO_SURVIVORS: u8 = 4;

fn build_config(overrides: &Overrides, mode: Mode) -> Result<PipelineConfig, String> {
    let mut cfg = match &overrides.config {
        Some(path) => PipelineConfig::from_file(path).map_err(|e| e.to_string())?,
        None => PipelineConfig::default(),
    };
    cfg.mode = mode;
    if !overrides.mesh.is_empty() {
        cfg.mesh_paths = overrides.mesh.clone();
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    if let Some(k) = overrides.k {
        cfg.k = k;
    }
    if let Some(subject) = &overrides.subject {
        cfg.subject_override = Some(subject.clone());
    }
    if overrides.mock {
        cfg.mock = true;
    }
    if let Some(url) = &overrides.endpoint_propose {
        cfg.endpoints.propose = url.clone();
    }
    if let Some(url) = &overrides.endpoint_generate {
        cfg.endpoints.generate = url.clone();
    }
    if let Some(url) = &overrides.endpoint_verify {
        cfg.endpoints.verify = url.clone();
    }
    if let Some(url) = &overrides.endpoint_score {
        cfg.endpoints.score = url.clone();
    }
    if let Some(answer) = &overrides.vqa_force {
        cfg.vqa_force = Some(answer.clone());
    }
    Ok(cfg)
}

fn run(command: Command) -> ExitCode {
    match command {
        Command::Optimize(overrides) => {
            let cfg = match build_config(&overrides, Mode::Static) {
                Ok(cfg) => cfg,
                Err(msg) => return config_failure(&msg),
            };
            match run_optimize(&cfg) {
                Ok(output) => {
                    println!("wrote {}", output.run_dir.join("manifest.json").display());
                    ExitCode::SUCCESS
                }
                Err(e) => pipeline_failure(e),
            }
        }
        Command::Generate(overrides) => {
            let cfg = match build_config(&overrides, Mode::Static) {
                Ok(cfg) => cfg,
                Err(msg) => return config_failure(&msg),
            };
            run_full(&cfg)
        }
        Command::Animate(overrides) => {
            let cfg = match build_config(&overrides, Mode::Animated) {
                Ok(cfg) => cfg,
                Err(msg) => return config_failure(&msg),
            };
            run_full(&cfg)
        }
        Command::Dataset {
            overrides,
            drawings,
        } => {
            let mut cfg = match build_config(&overrides, Mode::Dataset) {
                Ok(cfg) => cfg,
                Err(msg) => return config_failure(&msg),
            };
            if let Some(dir) = drawings {
                cfg.drawing_dir = Some(dir);
            }
            match run_dataset(&cfg) {
                Ok(summary) => {
                    println!(
                        "emitted {} condition images ({} drawings skipped) into {}",
                        summary.pairs.len(),
                        summary.skipped.len(),
                        cfg.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => pipeline_failure(e),
            }
        }
        Command::MockServe { port, seed } => match MockServer::start(port, seed) {
            Ok(server) => {
                println!(
                    "mock services listening on http://127.0.0.1:{}/{{propose,generate,verify,score}}",
                    server.port
                );
                loop {
                    std::thread::park();
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_SERVICE)
            }
        },
    }
}

fn run_full(cfg: &PipelineConfig) -> ExitCode {
    match run_pipeline(cfg) {
        Ok(output) => {
            println!("wrote {}", output.run_dir.join("manifest.json").display());
            for entry in &output.manifest.top_k {
                println!(
                    "  rank {}: start {} (score {:.6})",
                    entry.rank, entry.start_index, entry.rank_score
                );
            }
            match output.status {
                RunStatus::Complete => ExitCode::SUCCESS,
                RunStatus::NoSurvivors => {
                    eprintln!("warning: no composition survived; see manifest warnings");
                    ExitCode::from(EXIT_NO_SURVIVORS)
                }
                RunStatus::ServiceFailure => {
                    eprintln!("error: a drawing service failed; manifest marked failed");
                    ExitCode::from(EXIT_SERVICE)
                }
            }
        }
        Err(e) => pipeline_failure(e),
    }
}

fn config_failure(msg: &str) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn pipeline_failure(e: umbra_cli::pipeline::PipelineError) -> ExitCode {
    use umbra_cli::pipeline::PipelineError;
    eprintln!("error: {e}");
    match e {
        PipelineError::Config(_) | PipelineError::Mesh(_) => ExitCode::from(EXIT_CONFIG),
        PipelineError::Mock(_) => ExitCode::from(EXIT_SERVICE),
        PipelineError::Io { .. } => ExitCode::from(EXIT_SERVICE),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    run(Cli::parse().command)
}
