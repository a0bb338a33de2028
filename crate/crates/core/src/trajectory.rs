//! Trajectory embeddings: per-level discrepancy statistics between a noised
//! sample and its reconstruction, concatenated level-major across a grid of
//! timesteps, plus z-score standardization and the embedding file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{forward_noise, reverse_reconstruct, DenoiserModel, NoisePredictor};
use crate::error::check_dim;
use crate::io::{config_hash, write_atomic, write_json, Provenance};
use crate::metrics::{
    dwt_band_histograms, feature_distance, kl_divergence, lbp_histogram, local_complexity, mse,
    rank_order_consistency, ssim, Histogram, Image, MetricKind, MetricSuiteConfig, Modality,
};
use crate::numerics::RngState;
use crate::{Error, Result, TOOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reconstruction {
    /// One-step posterior mean.
    Tweedie,
    /// Ancestral reverse pass over `n_steps` sub-steps (clamped to `t`).
    Reverse { n_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Strictly increasing timesteps in `1..=T`.
    pub grid: Vec<usize>,
    pub n_draws: usize,
    pub metrics: MetricSuiteConfig,
    pub base_seed: u64,
    pub reconstruction: Reconstruction,
}

/// `n` timesteps evenly spaced over `[0.05 T, 0.95 T]`, rounded.
pub fn default_grid(steps: usize, n: usize) -> Vec<usize> {
    let lo = 0.05 * steps as f64;
    let hi = 0.95 * steps as f64;
    let mut grid: Vec<usize> = (0..n)
        .map(|i| {
            let u = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            ((lo + u * (hi - lo)).round() as usize).clamp(1, steps)
        })
        .collect();
    grid.dedup();
    grid
}

impl TrajectoryConfig {
    pub fn new(modality: Modality, steps: usize, base_seed: u64) -> Self {
        TrajectoryConfig {
            grid: default_grid(steps, 10),
            n_draws: 1,
            metrics: MetricSuiteConfig::for_modality(modality),
            base_seed,
            reconstruction: Reconstruction::Tweedie,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("trajectory grid is empty"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("trajectory grid must be strictly increasing"));
        }
        if self.grid[0] == 0 || *self.grid.last().unwrap() > steps {
            return Err(Error::config(format!("trajectory grid must lie in 1..={steps}")));
        }
        if self.n_draws == 0 {
            return Err(Error::config("n_draws must be at least 1"));
        }
        if let Reconstruction::Reverse { n_steps: 0 } = self.reconstruction {
            return Err(Error::config("reverse reconstruction needs n_steps >= 1"));
        }
        self.metrics.validate()
    }

    pub fn layout(&self) -> Vec<MetricKind> {
        self.metrics.layout()
    }

    pub fn dim(&self) -> usize {
        self.grid.len() * self.layout().len()
    }

    /// Column names `m{metric}_t{step}`, level-major.
    pub fn column_names(&self) -> Vec<String> {
        let layout = self.layout();
        self.grid
            .iter()
            .flat_map(|t| layout.iter().map(move |m| format!("m{}_t{}", m.name(), t)))
            .collect()
    }

    /// Column indices of one metric across all levels.
    pub fn metric_columns(&self, metric: MetricKind) -> Vec<usize> {
        let layout = self.layout();
        let m = layout.len();
        match layout.iter().position(|&k| k == metric) {
            Some(pos) => (0..self.grid.len()).map(|l| l * m + pos).collect(),
            None => Vec::new(),
        }
    }

    /// Column indices of one level.
    pub fn level_columns(&self, level: usize) -> Vec<usize> {
        let m = self.layout().len();
        (level * m..(level + 1) * m).collect()
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// What embedding extraction needs from a denoiser. Inputs and outputs of
/// the reconstruction methods are in model space.
pub trait TrajectoryModel: NoisePredictor {
    fn data_dim(&self) -> usize;
    /// `(height, width)` when samples are images.
    fn image_shape(&self) -> Option<(usize, usize)>;
    fn to_model(&self, x: &[f64]) -> Vec<f64>;
    fn to_data(&self, z: &[f64]) -> Vec<f64>;
    /// Reconstruction of `x_t` plus the learned features of `x_t`.
    fn reconstruct(
        &self,
        x_t: &[f64],
        t: usize,
        mode: Reconstruction,
        rng: &mut RngState,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
    fn features(&self, x: &[f64], t: usize) -> Result<Vec<f64>>;
    fn local_complexity(&self, x_t: &[f64], t: usize, k: usize, r: f64, rng: &mut RngState) -> Result<f64>;
}

impl TrajectoryModel for DenoiserModel {
    fn data_dim(&self) -> usize {
        DenoiserModel::data_dim(self)
    }

    fn image_shape(&self) -> Option<(usize, usize)> {
        match self.data_shape() {
            [h, w] => Some((*h, *w)),
            _ => None,
        }
    }

    fn to_model(&self, x: &[f64]) -> Vec<f64> {
        self.normalizer().to_model(x)
    }

    fn to_data(&self, z: &[f64]) -> Vec<f64> {
        self.normalizer().to_data(z)
    }

    fn reconstruct(
        &self,
        x_t: &[f64],
        t: usize,
        mode: Reconstruction,
        rng: &mut RngState,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (eps, feats) = self.predict_with_features(x_t, t)?;
        let x_hat = match mode {
            Reconstruction::Tweedie => {
                let sched = self.schedule();
                let a = sched.alpha_bar(t).sqrt();
                let s = sched.sigma(t);
                x_t.iter().zip(&eps).map(|(x, e)| (x - s * e) / a).collect()
            }
            Reconstruction::Reverse { n_steps } => {
                reverse_reconstruct(self, x_t, t, n_steps.min(t), rng)?
            }
        };
        Ok((x_hat, feats))
    }

    fn features(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        DenoiserModel::features(self, x, t)
    }

    fn local_complexity(&self, x_t: &[f64], t: usize, k: usize, r: f64, rng: &mut RngState) -> Result<f64> {
        local_complexity(self, x_t, t, k, r, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEmbedding {
    pub sample_id: u64,
    pub config_hash: String,
    /// Level-major: all metrics of `grid[0]`, then `grid[1]`, ...
    pub values: Vec<f64>,
}

struct LevelInputs<'a> {
    x_t: &'a [f64],
    x_hat: &'a [f64],
    feats_t: &'a [f64],
}

fn image_of<M: TrajectoryModel + ?Sized>(model: &M, z: &[f64]) -> Result<Image> {
    let (h, w) = model
        .image_shape()
        .ok_or_else(|| Error::invalid("image metrics need a 2-d data shape"))?;
    Image::new(w, h, model.to_data(z))
        .map(|img| img.clamped())
}

#[allow(clippy::too_many_arguments)]
fn level_metrics<M: TrajectoryModel + ?Sized>(
    model: &M,
    cfg: &MetricSuiteConfig,
    layout: &[MetricKind],
    t: usize,
    inputs: &LevelInputs<'_>,
    lc_rng: &mut RngState,
    out: &mut [f64],
) -> Result<()> {
    let needs_images = layout.iter().any(|m| {
        matches!(
            m,
            MetricKind::Ssim | MetricKind::LbpKl | MetricKind::DwtKlLh | MetricKind::DwtKlHl | MetricKind::DwtKlHh
        )
    });
    let images = if needs_images {
        Some((image_of(model, inputs.x_t)?, image_of(model, inputs.x_hat)?))
    } else {
        None
    };
    let mut dwt: Option<([Histogram; 3], [Histogram; 3])> = None;
    for (slot, &metric) in out.iter_mut().zip(layout) {
        let value = match metric {
            MetricKind::Mse => mse(inputs.x_t, inputs.x_hat)?,
            MetricKind::Ssim => {
                let (a, b) = images.as_ref().unwrap();
                ssim(a, b, cfg.ssim_window)?
            }
            MetricKind::FeatureDistance => {
                let f_hat = model.features(inputs.x_hat, t)?;
                feature_distance(inputs.feats_t, &f_hat)?
            }
            MetricKind::LocalComplexity => {
                model.local_complexity(inputs.x_t, t, cfg.lc_draws, cfg.lc_radius, lc_rng)?
            }
            MetricKind::LbpKl => {
                let (a, b) = images.as_ref().unwrap();
                kl_divergence(
                    &lbp_histogram(a, cfg.lbp_bins, cfg.smoothing)?,
                    &lbp_histogram(b, cfg.lbp_bins, cfg.smoothing)?,
                )?
            }
            MetricKind::DwtKlLh | MetricKind::DwtKlHl | MetricKind::DwtKlHh => {
                if dwt.is_none() {
                    let (a, b) = images.as_ref().unwrap();
                    dwt = Some((
                        dwt_band_histograms(a, cfg.dwt_bins, cfg.dwt_clip, cfg.smoothing)?,
                        dwt_band_histograms(b, cfg.dwt_bins, cfg.dwt_clip, cfg.smoothing)?,
                    ));
                }
                let (ha, hb) = dwt.as_ref().unwrap();
                let band = match metric {
                    MetricKind::DwtKlLh => 0,
                    MetricKind::DwtKlHl => 1,
                    _ => 2,
                };
                kl_divergence(&ha[band], &hb[band])?
            }
            MetricKind::RankOrder => rank_order_consistency(inputs.x_t, inputs.x_hat, cfg.tie_tol)?,
        };
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "metric {} at level t={t} evaluated to {value}",
                metric.name()
            )));
        }
        *slot = value;
    }
    Ok(())
}

/// Embedding of one data-space sample. Noise for `(sample_id, t, draw)`
/// comes from its own stream, so results do not depend on batch order.
pub fn extract_embedding<M: TrajectoryModel + ?Sized>(
    model: &M,
    x: &[f64],
    cfg: &TrajectoryConfig,
    sample_id: u64,
) -> Result<TrajectoryEmbedding> {
    cfg.validate(model.schedule().steps())?;
    check_dim("sample", model.data_dim(), x.len())?;
    let layout = cfg.layout();
    if cfg.metrics.modality == Modality::Image && model.image_shape().is_none() {
        return Err(Error::invalid("image metrics on a model without a 2-d data shape"));
    }
    let m = layout.len();
    let z = model.to_model(x);
    let mut values = vec![0.0; cfg.grid.len() * m];
    let mut level = vec![0.0; m];
    for (li, &t) in cfg.grid.iter().enumerate() {
        let acc = &mut values[li * m..(li + 1) * m];
        for draw in 0..cfg.n_draws {
            let mut rng = RngState::derive(cfg.base_seed, &[sample_id, t as u64, draw as u64]);
            let eps = rng.gaussian_vec(z.len());
            let x_t = forward_noise(&z, t, &eps, model.schedule())?;
            let (x_hat, feats_t) = model.reconstruct(&x_t, t, cfg.reconstruction, &mut rng.split(1))?;
            let inputs = LevelInputs {
                x_t: &x_t,
                x_hat: &x_hat,
                feats_t: &feats_t,
            };
            level_metrics(model, &cfg.metrics, &layout, t, &inputs, &mut rng.split(2), &mut level)?;
            for (a, v) in acc.iter_mut().zip(&level) {
                *a += v;
            }
        }
        let inv = 1.0 / cfg.n_draws as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    Ok(TrajectoryEmbedding {
        sample_id,
        config_hash: cfg.hash(),
        values,
    })
}

/// Embeds every sample in order; sample ids are `first_id + index`.
pub fn embed_all<M: TrajectoryModel + ?Sized>(
    model: &M,
    samples: &[Vec<f64>],
    cfg: &TrajectoryConfig,
    first_id: u64,
) -> Result<Vec<TrajectoryEmbedding>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| extract_embedding(model, x, cfg, first_id + i as u64))
        .collect()
}

/// Per-dimension z-scoring fitted on in-distribution embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub floor: f64,
}

impl Standardizer {
    pub const DEFAULT_FLOOR: f64 = 1e-9;

    /// Population mean and standard deviation per column.
    pub fn fit(rows: &[Vec<f64>], floor: f64) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid("standardizer needs at least 2 rows"));
        }
        if !(floor > 0.0) {
            return Err(Error::invalid("standardizer floor must be positive"));
        }
        let d = rows[0].len();
        for r in rows {
            check_dim("standardizer row", d, r.len())?;
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { mean, std, floor })
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim("standardizer input", self.mean.len(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s.max(self.floor))
            .collect())
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Keeps only the listed columns of every row.
pub fn select_columns(rows: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| columns.iter().map(|&c| r[c]).collect())
        .collect()
}

/// Sidecar describing an embedding CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub format_version: u32,
    pub provenance: Provenance,
    pub config: TrajectoryConfig,
    pub columns: Vec<String>,
}

impl EmbeddingSidecar {
    pub const FORMAT_VERSION: u32 = 1;
}

/// In-memory form of an embedding CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub sample_ids: Vec<u64>,
    pub labels: Option<Vec<String>>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn from_embeddings(
        embeddings: &[TrajectoryEmbedding],
        labels: Option<Vec<String>>,
        cfg: &TrajectoryConfig,
    ) -> Self {
        EmbeddingTable {
            sample_ids: embeddings.iter().map(|e| e.sample_id).collect(),
            labels,
            columns: cfg.column_names(),
            rows: embeddings.iter().map(|e| e.values.clone()).collect(),
        }
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sample_id".to_string()];
        if self.labels.is_some() {
            header.push("family_label".to_string());
        }
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![self.sample_ids[i].to_string()];
            if let Some(l) = &self.labels {
                rec.push(l[i].clone());
            }
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::data(format!("csv flush failed: {e}")))
    }

    /// Writes `path` and `path.json` (sidecar) atomically.
    pub fn write(&self, path: &Path, cfg: &TrajectoryConfig) -> Result<()> {
        write_atomic(path, &self.to_csv_bytes()?)?;
        let sidecar = EmbeddingSidecar {
            format_version: EmbeddingSidecar::FORMAT_VERSION,
            provenance: Provenance {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: cfg.hash(),
            },
            config: cfg.clone(),
            columns: self.columns.clone(),
        };
        write_json(&sidecar_path(path), &sidecar)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("sample_id") {
            return Err(Error::data(format!(
                "{}: first column must be sample_id",
                path.display()
            )));
        }
        let has_labels = header.get(1).map(String::as_str) == Some("family_label");
        let first_value = if has_labels { 2 } else { 1 };
        let columns = header[first_value..].to_vec();
        let mut table = EmbeddingTable {
            sample_ids: Vec::new(),
            labels: has_labels.then(Vec::new),
            columns,
            rows: Vec::new(),
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row_no = line + 2;
            let id = rec[0]
                .parse::<u64>()
                .map_err(|_| Error::data(format!("row {row_no}: bad sample_id {:?}", &rec[0])))?;
            table.sample_ids.push(id);
            if let Some(l) = table.labels.as_mut() {
                l.push(rec[1].to_string());
            }
            let row = rec
                .iter()
                .skip(first_value)
                .enumerate()
                .map(|(c, s)| {
                    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::data(format!(
                            "row {row_no}, column {}: non-numeric value {s:?}",
                            header[c + first_value]
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}
