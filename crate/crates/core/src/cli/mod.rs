//! Command-line surface. Each subcommand is a thin wrapper over a library
//! function so results can be reproduced without the binary.

mod dataset;
mod eval;
mod fixtures;
mod serve;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::gateway::GatewayConfig;

pub use dataset::{augment_dataset, dataset_stats, split_manifest, AugmentSummary, ClassCount, DatasetStats};
pub use eval::{eval_classify, eval_detect, read_classification_inputs, read_detection_dirs};
pub use fixtures::{make_fixtures, FixtureSpec, FixtureSpecEntry};
pub use serve::build_registry;

#[derive(Debug, Parser)]
#[command(name = "paddy", version, about = "Paddy disease diagnosis toolkit")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with optional [augment] and [gateway] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset inspection and preparation.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Offline evaluation reports.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Fixture store authoring.
    #[command(subcommand)]
    Fixtures(FixturesCmd),
    /// Long-running services.
    #[command(subcommand)]
    Serve(ServeCmd),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Per-class image counts for a directory-per-class tree.
    Stats { dir: PathBuf },
    /// Assign train/test splits in a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        /// Output manifest; defaults to rewriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write augmented variants of every train item.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        multiplier: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Classification report from `id,prob_0..prob_12` predictions.
    Classify {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Detection report from per-image prediction and label files.
    Detect {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gts: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixturesCmd {
    /// Build a fixture store from images and a JSON spec keyed by file name.
    Make {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ServeCmd {
    /// HTTP gateway with an embedded broker and optional in-process workers.
    Gateway(GatewayArgs),
    /// Worker pool consuming from a remote gateway's broker.
    Worker(WorkerArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Backend id: `fixture` or `heuristic`.
    #[arg(long, default_value = "heuristic")]
    pub backend: String,
    /// Fixture store; required for the fixture backend.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Classifier used to verify detections.
    #[arg(long)]
    pub verifier: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GatewayArgs {
    #[arg(long, default_value_t = 0)]
    pub classification_workers: usize,
    #[arg(long, default_value_t = 0)]
    pub detection_workers: usize,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WorkerArgs {
    /// `classification` or `detection`.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Gateway base URL hosting the broker routes.
    #[arg(long, env = "PADDY_BROKER_URL", default_value = "http://127.0.0.1:8080")]
    pub broker_url: String,
    #[arg(long, env = "PADDY_BROKER_TOKEN")]
    pub broker_token: Option<String>,
    /// Shared data directory holding the gateway's blob store.
    #[arg(long, env = "PADDY_DATA_DIR", default_value = "paddy-data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub heartbeat_ms: u64,
    #[command(flatten)]
    pub backend: BackendArgs,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub augment: Option<AugmentConfig>,
    pub gateway: Option<GatewayConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| {
                    let before = &text[..s.start];
                    let line = before.matches('\n').count() + 1;
                    (line, s.start - before.rfind('\n').map_or(0, |i| i + 1) + 1)
                })
                .unwrap_or((0, 0));
            Error::Parse { path: path.display().to_string(), line, column, message: e.message().to_string() }
        })
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Dataset(cmd) => dataset::run(cmd, &GlobalOpts { seed: cli.seed, json: cli.json }, config, out),
        Command::Eval(cmd) => eval::run(cmd, cli.json, out),
        Command::Fixtures(FixturesCmd::Make { images, spec, out: dest }) => {
            let store = make_fixtures(&images, &FixtureSpec::load(&spec)?)?;
            store.save(&dest)?;
            let n = store.classifications.len().max(store.detections.len());
            if cli.json {
                writeln!(out, "{}", serde_json::json!({ "out": dest, "images": n }))?;
            } else {
                writeln!(out, "wrote {} ({n} images)", dest.display())?;
            }
            Ok(())
        }
        Command::Serve(ServeCmd::Gateway(args)) => serve::gateway(args, config, out),
        Command::Serve(ServeCmd::Worker(args)) => serve::worker(args, out),
    }
}

pub(crate) struct GlobalOpts {
    pub seed: Option<u64>,
    pub json: bool,
}
