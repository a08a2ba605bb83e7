//! `subbasis`: corpus generation, feature extraction, intelligibility
//! classifier training and assessment, speaker embeddings, adaptation
//! benchmarks and gradient checks from one configuration file.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use subbasis_core::adapt::AdaptationConfig;
use subbasis_core::classifier::{AssessmentMode, LabelConfig};
use subbasis_core::subspace::InputConfig;
use subbasis_core::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "subbasis", version, about = "Spectro-temporal subspace basis features and speaker adaptation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; unset keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set classifier.max_epochs=20`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for per-utterance stages and benchmark runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic multi-speaker corpus (WAVs plus manifest.csv).
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract one subspace feature vector per manifest row.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the bottleneck intelligibility classifier.
    Train {
        /// Feature set directory written by `extract`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "SB+TB")]
        input: InputConfig,
        /// Label heads; defaults to the configured `classifier.labels`.
        #[arg(long)]
        labels: Option<LabelConfig>,
        /// Blocks to train on; defaults to every block except the test block.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<String>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained classifier per intelligibility group.
    Assess {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Blocks to test on; defaults to the test block.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "5-way")]
        mode: Vec<AssessmentMode>,
        /// Output prefix; writes `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average bottleneck outputs into one embedding per speaker.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Blocks to average over; defaults to every block except the test block.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<String>,
        /// STBF output; speaker ids go to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare adaptation systems on the word classification task.
    Benchmark {
        #[arg(long)]
        manifest: PathBuf,
        /// Embeddings per auxiliary feature, e.g. `sbe=emb_sb.stbf`.
        #[arg(long = "embeddings", value_name = "KIND=PATH")]
        embeddings: Vec<String>,
        /// Systems to compare; the first is the significance baseline.
        #[arg(long, value_delimiter = ',', default_value = "si,sbe,sbe-lhuc")]
        configs: Vec<AdaptationConfig>,
        /// Hidden layer receiving LHUC scaling.
        #[arg(long)]
        lhuc_layer: Option<usize>,
        /// Output directory for `benchmark.csv` and `benchmark.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks of every layer kind and the classifier.
    GradCheck {
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Optional JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for o in &common.overrides {
        cfg.set(o)?;
    }
    if let Some(w) = common.workers {
        cfg.benchmark.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let workers = cli.common.workers.unwrap_or_else(subbasis_core::parallel::default_workers);
    match cli.command {
        Command::GenCorpus { out } => commands::gen_corpus(&cfg, &out),
        Command::Extract { manifest, out } => commands::extract(&cfg, &manifest, &out, workers),
        Command::Train {
            features,
            input,
            labels,
            blocks,
            out,
        } => commands::train(&cfg, &features, input, labels, &blocks, &out),
        Command::Assess {
            model,
            features,
            blocks,
            mode,
            out,
        } => commands::assess(&cfg, &model, &features, &blocks, &mode, &out),
        Command::Embed {
            model,
            features,
            blocks,
            out,
        } => commands::embed(&cfg, &model, &features, &blocks, &out),
        Command::Benchmark {
            manifest,
            embeddings,
            configs,
            lhuc_layer,
            out,
        } => commands::benchmark(&cfg, &manifest, &embeddings, &configs, lhuc_layer, &out, workers),
        Command::GradCheck { tolerance, out } => commands::grad_check(&cfg, tolerance, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
