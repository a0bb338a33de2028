mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use disc::metrics::Modality;

use config::Overrides;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(disc::Error),
}

impl From<disc::Error> for CliError {
    fn from(e: disc::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    /// 2 = configuration or usage, 3 = data, 4 = numeric failure.
    pub fn exit_code(&self) -> u8 {
        use disc::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.root() {
                E::Config(_) | E::InvalidInput(_) => 2,
                E::NonFinite(_) => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Image,
    Tabular,
}

impl From<Preset> for Modality {
    fn from(p: Preset) -> Self {
        match p {
            Preset::Image => Modality::Image,
            Preset::Tabular => Modality::Tabular,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "disc", version, about = "Diffusion-trajectory statistics for distribution-shift characterization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a preset run configuration as JSON.
    InitConfig {
        #[arg(long, value_enum, default_value = "image")]
        preset: Preset,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic corpora of one seed.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the denoiser; writes a checkpoint and the loss curve.
    TrainDiffusion {
        #[arg(long)]
        config: PathBuf,
        /// Training corpus (raster or CSV); overrides `train_data`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Extract trajectory embeddings for a corpus.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run config whose `trajectory` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        /// Base seed of the forward-noise streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample id of the first row.
        #[arg(long, default_value_t = 0)]
        first_id: u64,
    },
    /// Fit an isolation forest on in-distribution embeddings.
    FitIforest {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 256)]
        subsample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_standardize: bool,
    },
    /// Score embeddings with a fitted forest (higher = more in-distribution).
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Adds an in/out decision column: out iff score < threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// K-means over embeddings; reports clustering accuracy when labeled.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the number of distinct family labels.
        #[arg(long)]
        k: Option<usize>,
        /// In-distribution embeddings used to fit the standardizer.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_standardize: bool,
    },
    /// Train an MLP head on labeled embeddings and predict a second set.
    Classify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full benchmark and write report JSON and CSV.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the scalar-statistic counterexample and its power table.
    TheoryDemo {
        /// JSON parameters; the built-in example when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    use commands::*;
    match cmd {
        Command::InitConfig { preset, out } => init_config(preset.into(), out.as_deref()),
        Command::GenData { config, preset, overrides } => gen_data(config.as_deref(), preset.map(Into::into), &overrides),
        Command::TrainDiffusion { config, data, overrides } => train_diffusion(&config, data.as_deref(), &overrides),
        Command::Embed { checkpoint, corpus, out, config, levels, draws, seed, first_id } => embed(EmbedArgs {
            checkpoint: &checkpoint,
            corpus: &corpus,
            out: &out,
            config: config.as_deref(),
            levels,
            draws,
            seed,
            first_id,
        }),
        Command::FitIforest { embeddings, out, trees, subsample, seed, no_standardize } => {
            fit_iforest(&embeddings, &out, trees, subsample, seed, !no_standardize)
        }
        Command::Score { model, embeddings, out, threshold } => score(&model, &embeddings, &out, threshold),
        Command::Cluster { embeddings, out, k, reference, restarts, seed, no_standardize } => cluster(ClusterArgs {
            embeddings: &embeddings,
            out: &out,
            k,
            reference: reference.as_deref(),
            restarts,
            seed,
            standardize: !no_standardize,
        }),
        Command::Classify { train, test, out, epochs, seed } => classify(&train, &test, &out, epochs, seed),
        Command::Bench { config, preset, overrides } => bench(config.as_deref(), preset.map(Into::into), &overrides),
        Command::TheoryDemo { params, epsilon, out } => theory_demo(params.as_deref(), epsilon, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
