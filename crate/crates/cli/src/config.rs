use std::path::{Path, PathBuf};

use disc::detectors::ClassifierConfig;
use disc::diffusion::DenoiserConfig;
use disc::eval::{BenchConfig, DataSpec, FamilySpec, ProtocolConfig, TrajectorySpec};
use disc::metrics::Modality;
use disc::numerics::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub protocol: ProtocolConfig,
    pub baseline_classifier: ClassifierConfig,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Scores below this are declared out-of-distribution by `score`.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub level_clustering: bool,
}

fn yes() -> bool {
    true
}

/// Top-level JSON document shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub modality: Modality,
    pub data: DataSpec,
    pub families: Vec<FamilySpec>,
    pub diffusion: DiffusionSection,
    pub trajectory: TrajectorySpec,
    pub detectors: DetectorSection,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// External training corpus for `train-diffusion`; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_data: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(modality: Modality) -> Self {
        let b = match modality {
            Modality::Image => BenchConfig::image_default(),
            Modality::Tabular => BenchConfig::tabular_default(),
        };
        RunConfig {
            modality,
            data: b.data,
            families: b.families,
            diffusion: DiffusionSection {
                denoiser: b.denoiser,
                train: b.denoiser_train,
            },
            trajectory: b.trajectory,
            detectors: DetectorSection {
                protocol: b.protocol,
                baseline_classifier: b.baseline_classifier,
                standardize: true,
                threshold: None,
                level_clustering: b.level_clustering,
            },
            seeds: b.seeds,
            output_dir: PathBuf::from("out"),
            train_data: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: must list at least one seed".into()));
        }
        if self.data.modality() != self.modality {
            return Err(CliError::Config(format!(
                "data: modality {:?} does not match top-level modality {:?}",
                self.data.modality(),
                self.modality
            )));
        }
        if let Some(p) = &self.train_data {
            if !p.exists() {
                return Err(CliError::Config(format!("train_data: file {} does not exist", p.display())));
            }
        }
        self.to_bench().validate().map_err(CliError::from)
    }

    pub fn to_bench(&self) -> BenchConfig {
        BenchConfig {
            seeds: self.seeds.clone(),
            data: self.data.clone(),
            families: self.families.clone(),
            denoiser: self.diffusion.denoiser.clone(),
            denoiser_train: self.diffusion.train.clone(),
            trajectory: self.trajectory.clone(),
            baseline_classifier: self.detectors.baseline_classifier.clone(),
            protocol: self.detectors.protocol.clone(),
            level_clustering: self.detectors.level_clustering,
        }
    }
}

/// Flags that override fields of a loaded [`RunConfig`].
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Denoiser training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of noise levels in the trajectory grid.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Forward-noise draws averaged per level.
    #[arg(long)]
    pub draws: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(e) = self.epochs {
            cfg.diffusion.train.epochs = e;
        }
        if let Some(l) = self.levels {
            cfg.trajectory.levels = l;
        }
        if let Some(d) = self.draws {
            cfg.trajectory.n_draws = d;
        }
    }
}

/// Loads `--config` or falls back to a preset, then applies overrides.
pub fn resolve(
    config: Option<&Path>,
    preset: Option<Modality>,
    overrides: &Overrides,
) -> Result<RunConfig, CliError> {
    let mut cfg = match (config, preset) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(m)) => RunConfig::preset(m),
        (None, None) => return Err(CliError::Config("either --config or --preset is required".into())),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}
