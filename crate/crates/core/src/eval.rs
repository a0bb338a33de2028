//! Evaluation metrics and the end-to-end benchmark: data generation,
//! denoiser and baseline training, embedding extraction, and the three
//! downstream protocols (iForest AUROC, k-means clustering accuracy,
//! supervised MLP accuracy) repeated over seeds.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detectors::{
    BaselineScores, ClassifierConfig, ClassifierHead, IForestConfig, IsolationForest, KMeansConfig, KMeansModel,
    ScalarBaselines,
};
use crate::diffusion::{train_denoiser, DataNormalizer, DenoiserConfig, DenoiserModel};
use crate::error::check_dim;
use crate::io::{config_hash, write_atomic, write_json, Provenance};
use crate::metrics::{MetricKind, MetricSuiteConfig, Modality};
use crate::numerics::{RngState, TrainConfig};
use crate::shiftgen::{
    apply_covariate_shift, gen_id_images, gen_id_tabular_with_components, gen_semantic_tabular, Corpus, ImageClass,
    InputGradient, ShiftKind, ShiftSpec, TabularMixture, ID_LABEL,
};
use crate::trajectory::{default_grid, embed_all, Reconstruction, Standardizer, TrajectoryConfig};
use crate::{Error, Result, TOOL_VERSION};

/// Probability that a random ID score exceeds a random OOD score, ties
/// counting one half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::invalid("auroc needs non-empty ID and OOD score sets"));
    }
    if id_scores.iter().chain(ood_scores).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("auroc input contains NaN".into()));
    }
    let (n1, n2) = (id_scores.len() as u64, ood_scores.len() as u64);
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&v| (v, true))
        .chain(ood_scores.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // doubled ranks keep tie averages integral
    let mut rank2_id: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let doubled = (i + 1 + j) as u64;
        rank2_id += doubled * all[i..j].iter().filter(|e| e.1).count() as u64;
        i = j;
    }
    let u2_id = rank2_id - n1 * (n1 + 1);
    let total2 = 2 * n1 * n2;
    let n = (n1 * n2) as f64;
    // evaluating the smaller side directly makes auroc(a,b) + auroc(b,a) == 1
    Ok(if 2 * u2_id <= total2 {
        (u2_id as f64 / 2.0) / n
    } else {
        1.0 - ((total2 - u2_id) as f64 / 2.0) / n
    })
}

/// Maximum-weight perfect matching on a square matrix; returns the column
/// matched to each row and the total weight.
pub fn hungarian_max(weights: &[Vec<i64>]) -> (Vec<usize>, i64) {
    let n = weights.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let max = weights.iter().flatten().copied().max().unwrap_or(0);
    let cost = |i: usize, j: usize| max - weights[i][j];
    // potentials formulation, 1-based with a virtual column 0
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| weights[i][row_to_col[i]]).sum();
    (row_to_col, total)
}

/// Best matching by exhaustive permutation search (Heap's algorithm).
pub fn brute_force_max(weights: &[Vec<i64>]) -> i64 {
    let n = weights.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let score = |p: &[usize]| (0..n).map(|i| weights[i][p[i]]).sum::<i64>();
    let mut best = score(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.max(score(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Fraction of samples matched under the best cluster-to-family bijection.
/// Cluster ids must lie in `0..k` where `k` is the number of families.
pub fn clustering_accuracy(assignments: &[usize], labels: &[String]) -> Result<f64> {
    check_dim("clustering labels", assignments.len(), labels.len())?;
    if assignments.is_empty() {
        return Err(Error::invalid("clustering accuracy over no samples"));
    }
    let mut families: Vec<&String> = labels.iter().collect();
    families.sort();
    families.dedup();
    let k = families.len();
    let clusters = assignments.iter().max().unwrap() + 1;
    if clusters > k {
        return Err(Error::invalid(format!(
            "{clusters} clusters cannot be matched one-to-one with {k} families"
        )));
    }
    let mut table = vec![vec![0i64; k]; k];
    for (&a, l) in assignments.iter().zip(labels) {
        let f = families.binary_search(&l).unwrap();
        table[a][f] += 1;
    }
    let best = if k <= 8 { brute_force_max(&table) } else { hungarian_max(&table).1 };
    Ok(best as f64 / assignments.len() as f64)
}

/// Fixed per-class split: the first half of each label's samples (in a
/// seeded order) versus the rest.
pub fn stratified_split(labels: &[String], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_label: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = RngState::derive(seed, &[0x7370_6c74]);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for idx in by_label.values_mut() {
        rng.shuffle(idx);
        let half = idx.len() / 2;
        a.extend_from_slice(&idx[..half]);
        b.extend_from_slice(&idx[half..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub label: String,
    pub kind: ShiftKind,
}

impl FamilySpec {
    pub fn new(label: &str, kind: ShiftKind) -> Self {
        FamilySpec { label: label.into(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageData {
    pub side: usize,
    pub id_classes: Vec<ImageClass>,
    pub n_train: usize,
    pub n_fit: usize,
    pub n_test: usize,
    pub n_per_family: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularData {
    pub dim: usize,
    pub components: usize,
    pub n_train: usize,
    pub n_fit: usize,
    pub n_test: usize,
    pub n_per_family: usize,
    /// Separation of the held-out component, in pooled standard deviations.
    pub semantic_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "snake_case")]
pub enum DataSpec {
    Image(ImageData),
    Tabular(TabularData),
}

impl DataSpec {
    pub fn modality(&self) -> Modality {
        match self {
            DataSpec::Image(_) => Modality::Image,
            DataSpec::Tabular(_) => Modality::Tabular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub levels: usize,
    pub n_draws: usize,
    pub reconstruction: Reconstruction,
    /// Overrides the modality's default metric suite.
    #[serde(default)]
    pub metrics: Option<MetricSuiteConfig>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec { levels: 10, n_draws: 1, reconstruction: Reconstruction::Tweedie, metrics: None }
    }
}

impl TrajectorySpec {
    pub fn build(&self, modality: Modality, steps: usize, base_seed: u64) -> TrajectoryConfig {
        let mut cfg = TrajectoryConfig::new(modality, steps, base_seed);
        cfg.grid = default_grid(steps, self.levels);
        cfg.n_draws = self.n_draws;
        cfg.reconstruction = self.reconstruction;
        if let Some(m) = &self.metrics {
            cfg.metrics = m.clone();
        }
        cfg
    }
}

/// Downstream protocol settings shared by every detector row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub iforest: IForestConfig,
    pub kmeans_restarts: usize,
    pub head: ClassifierConfig,
    /// Cluster ID test samples as one more family.
    pub include_id_cluster: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            iforest: IForestConfig::default(),
            kmeans_restarts: 5,
            head: ClassifierConfig::default(),
            include_id_cluster: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub seeds: Vec<u64>,
    pub data: DataSpec,
    pub families: Vec<FamilySpec>,
    pub denoiser: DenoiserConfig,
    pub denoiser_train: TrainConfig,
    pub trajectory: TrajectorySpec,
    /// Toy classifier behind the scalar baselines and FGSM.
    pub baseline_classifier: ClassifierConfig,
    pub protocol: ProtocolConfig,
    /// Also cluster each level's columns on their own.
    #[serde(default)]
    pub level_clustering: bool,
}

impl BenchConfig {
    pub fn image_default() -> Self {
        BenchConfig {
            seeds: vec![0, 1, 2, 3, 4],
            data: DataSpec::Image(ImageData {
                side: 16,
                id_classes: vec![ImageClass::Blobs, ImageClass::Stripes],
                n_train: 600,
                n_fit: 200,
                n_test: 200,
                n_per_family: 200,
            }),
            families: vec![
                FamilySpec::new("fgsm", ShiftKind::Fgsm { epsilon: 0.1 }),
                FamilySpec::new("flip_h", ShiftKind::FlipH),
                FamilySpec::new("occlusion", ShiftKind::Occlusion { p: 0.2 }),
                FamilySpec::new("semantic_checkers", ShiftKind::Semantic { class: ImageClass::Checkers }),
                FamilySpec::new("gaussian_noise", ShiftKind::GaussianNoise { s: 0.3 }),
            ],
            denoiser: DenoiserConfig { hidden: vec![256, 256], ..Default::default() },
            denoiser_train: TrainConfig { learning_rate: 1e-3, epochs: 100, batch_size: 32, ..Default::default() },
            trajectory: TrajectorySpec { n_draws: 8, ..Default::default() },
            baseline_classifier: ClassifierConfig::default(),
            protocol: ProtocolConfig::default(),
            level_clustering: false,
        }
    }

    pub fn tabular_default() -> Self {
        BenchConfig {
            seeds: vec![0, 1, 2, 3, 4],
            data: DataSpec::Tabular(TabularData {
                dim: 8,
                components: 3,
                n_train: 1000,
                n_fit: 300,
                n_test: 300,
                n_per_family: 300,
                semantic_sigma: 4.0,
            }),
            families: vec![
                FamilySpec::new("new_component", ShiftKind::NewComponent),
                FamilySpec::new("feature_shuffle", ShiftKind::FeatureShuffle { j: 0 }),
                FamilySpec::new("scale_shift", ShiftKind::ScaleShift { a: 1.5, b: 0.0 }),
            ],
            denoiser: DenoiserConfig { hidden: vec![128, 128], ..Default::default() },
            denoiser_train: TrainConfig { learning_rate: 1e-3, epochs: 60, batch_size: 32, ..Default::default() },
            trajectory: TrajectorySpec { n_draws: 8, ..Default::default() },
            baseline_classifier: ClassifierConfig::default(),
            protocol: ProtocolConfig::default(),
            level_clustering: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.families.is_empty() {
            return Err(Error::config("at least one OOD family is required"));
        }
        let mut labels: Vec<&str> = self.families.iter().map(|f| f.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.families.len() || labels.contains(&ID_LABEL) {
            return Err(Error::config("family labels must be distinct and differ from \"id\""));
        }
        let (modality, dim) = match &self.data {
            DataSpec::Image(d) => {
                if d.id_classes.is_empty() {
                    return Err(Error::config("data.id_classes must not be empty"));
                }
                (Modality::Image, d.side * d.side)
            }
            DataSpec::Tabular(d) => (Modality::Tabular, d.dim),
        };
        for f in &self.families {
            ShiftSpec::new(f.kind.clone(), 0, f.label.clone())
                .validate(modality, dim)
                .map_err(|e| Error::config(format!("family {}: {e}", f.label)))?;
            if let (ShiftKind::Semantic { class }, DataSpec::Image(d)) = (&f.kind, &self.data) {
                if d.id_classes.contains(class) {
                    return Err(Error::config(format!("family {}: class {} is in distribution", f.label, class.name())));
                }
            }
        }
        self.denoiser_train.validate()?;
        self.trajectory
            .build(modality, self.denoiser.schedule.steps, 0)
            .validate(self.denoiser.schedule.steps)
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Features of one detector row across every split.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFeatures {
    pub name: String,
    /// Single oriented score used directly for AUROC (no iForest).
    pub scalar: bool,
    pub fit: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    /// `(label, features)` per OOD family.
    pub families: Vec<(String, Vec<Vec<f64>>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorResult {
    pub detector: String,
    pub auroc: f64,
    pub clustering_accuracy: f64,
    pub supervised_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyScore {
    pub detector: String,
    pub family: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelClustering {
    pub t: usize,
    pub clustering_accuracy: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn seed_for(seed: u64, tag: u64) -> u64 {
    RngState::derive(seed, &[tag]).next_u64()
}

fn kmeans_accuracy(rows: &RowFeatures, cols: Option<&[usize]>, cfg: &ProtocolConfig, seed: u64) -> Result<f64> {
    let pick = |x: &Vec<f64>| -> Vec<f64> {
        match cols {
            Some(c) => c.iter().map(|&j| x[j]).collect(),
            None => x.clone(),
        }
    };
    let mut data = Vec::new();
    let mut labels = Vec::new();
    if cfg.include_id_cluster {
        data.extend(rows.test.iter().map(pick));
        labels.extend(std::iter::repeat_n(ID_LABEL.to_string(), rows.test.len()));
    }
    for (label, xs) in &rows.families {
        data.extend(xs.iter().map(pick));
        labels.extend(std::iter::repeat_n(label.clone(), xs.len()));
    }
    let fit: Vec<Vec<f64>> = rows.fit.iter().map(pick).collect();
    let data = Standardizer::fit(&fit, Standardizer::DEFAULT_FLOOR)?.apply_all(&data)?;
    let mut k_labels = labels.clone();
    k_labels.sort();
    k_labels.dedup();
    let km = KMeansModel::fit(
        &data,
        &KMeansConfig { k: k_labels.len(), max_iter: 300, restarts: cfg.kmeans_restarts, seed },
    )?;
    clustering_accuracy(&km.assign_all(&data)?, &labels)
}

/// Runs the three protocols on one row of features.
pub fn evaluate_features(
    rows: &RowFeatures,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<(DetectorResult, Vec<FamilyScore>)> {
    let wrap = |stage: &str, e: Error| e.in_stage(format!("{}:{stage}", rows.name));
    if rows.families.is_empty() || rows.test.is_empty() || rows.fit.len() < 2 {
        return Err(Error::invalid(format!("row {} lacks data for evaluation", rows.name)));
    }
    // binary detection
    let score_of: Box<dyn Fn(&[f64]) -> Result<f64>> = if rows.scalar {
        Box::new(|x: &[f64]| Ok(x[0]))
    } else {
        let forest = IsolationForest::fit(&rows.fit, &IForestConfig { seed: seed_for(seed, 1), ..cfg.iforest })
            .map_err(|e| wrap("iforest", e))?;
        Box::new(move |x: &[f64]| forest.score(x))
    };
    let test_scores = rows.test.iter().map(|x| score_of(x)).collect::<Result<Vec<_>>>()?;
    let mut ood_scores = Vec::new();
    let mut family_scores = vec![{
        let (mean, std) = mean_std(&test_scores);
        FamilyScore { detector: rows.name.clone(), family: ID_LABEL.into(), n: test_scores.len(), mean, std }
    }];
    for (label, xs) in &rows.families {
        let s = xs.iter().map(|x| score_of(x)).collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&s);
        family_scores.push(FamilyScore { detector: rows.name.clone(), family: label.clone(), n: s.len(), mean, std });
        ood_scores.extend(s);
    }
    let auroc_value = auroc(&test_scores, &ood_scores).map_err(|e| wrap("auroc", e))?;

    let clustering = kmeans_accuracy(rows, None, cfg, seed_for(seed, 2)).map_err(|e| wrap("kmeans", e))?;

    // supervised family classification on a stratified half split
    let mut feats: Vec<Vec<f64>> = rows.test.clone();
    let mut labels = vec![ID_LABEL.to_string(); rows.test.len()];
    for (label, xs) in &rows.families {
        feats.extend(xs.iter().cloned());
        labels.extend(std::iter::repeat_n(label.clone(), xs.len()));
    }
    let (train_idx, eval_idx) = stratified_split(&labels, seed_for(seed, 3));
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<String>) {
        (idx.iter().map(|&i| feats[i].clone()).collect(), idx.iter().map(|&i| labels[i].clone()).collect())
    };
    let (tx, ty) = pick(&train_idx);
    let (ex, ey) = pick(&eval_idx);
    let mut head_cfg = cfg.head.clone();
    head_cfg.train.seed = seed_for(seed, 4);
    let head = ClassifierHead::train(&tx, &ty, &head_cfg).map_err(|e| wrap("mlp", e))?;
    let supervised = head.accuracy(&ex, &ey)?;

    Ok((
        DetectorResult {
            detector: rows.name.clone(),
            auroc: auroc_value,
            clustering_accuracy: clustering,
            supervised_accuracy: supervised,
        },
        family_scores,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub detectors: Vec<DetectorResult>,
    pub family_scores: Vec<FamilyScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_clustering: Vec<LevelClustering>,
    pub denoiser_final_loss: Option<f64>,
    pub baseline_classifier_accuracy: f64,
    pub wall_clock_seconds: f64,
}

impl SeedResult {
    pub fn detector(&self, name: &str) -> Option<&DetectorResult> {
        self.detectors.iter().find(|d| d.detector == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        Summary { mean, std, median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSummary {
    pub detector: String,
    pub auroc: Summary,
    pub clustering_accuracy: Summary,
    pub supervised_accuracy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub config: BenchConfig,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedResult>,
    pub summary: Vec<DetectorSummary>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn summary_of(&self, detector: &str) -> Option<&DetectorSummary> {
        self.summary.iter().find(|s| s.detector == detector)
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> ExperimentReport {
        let mut r = self.clone();
        r.wall_clock_seconds = 0.0;
        r.per_seed.iter_mut().for_each(|s| s.wall_clock_seconds = 0.0);
        r
    }

    /// One row per detector and metric; timings are left out.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["detector".to_string(), "metric".into(), "mean".into(), "std".into(), "median".into()];
        header.extend(self.seeds.iter().map(|s| format!("seed_{s}")));
        w.write_record(&header)?;
        for s in &self.summary {
            for (metric, summary, get) in [
                ("auroc", s.auroc, (|d: &DetectorResult| d.auroc) as fn(&DetectorResult) -> f64),
                ("clustering_accuracy", s.clustering_accuracy, |d| d.clustering_accuracy),
                ("supervised_accuracy", s.supervised_accuracy, |d| d.supervised_accuracy),
            ] {
                let mut rec = vec![
                    s.detector.clone(),
                    metric.to_string(),
                    summary.mean.to_string(),
                    summary.std.to_string(),
                    summary.median.to_string(),
                ];
                for seed in &self.per_seed {
                    rec.push(seed.detector(&s.detector).map(get).map(|v| v.to_string()).unwrap_or_default());
                }
                w.write_record(&rec)?;
            }
        }
        w.into_inner().map_err(|e| Error::data(format!("csv flush failed: {e}")))
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_json(&dir.join(format!("{stem}.json")), self)?;
        write_atomic(&dir.join(format!("{stem}.csv")), &self.to_csv_bytes()?)
    }
}

/// Everything the protocols consume for one seed.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub train: Corpus,
    /// Class labels of the training set, seen by the toy classifier.
    pub train_classes: Vec<String>,
    pub fit: Corpus,
    pub test: Corpus,
    pub families: Vec<Corpus>,
}

/// Generates the corpora of one seed and fits the toy classifier behind the
/// scalar baselines (and the FGSM family).
pub fn generate_data(cfg: &BenchConfig, seed: u64) -> Result<(SeedData, ScalarBaselines)> {
    let mut classifier_cfg = cfg.baseline_classifier.clone();
    classifier_cfg.train.seed = seed_for(seed, 30);
    match &cfg.data {
        DataSpec::Image(d) => gen_image_data(cfg, d, seed, &classifier_cfg),
        DataSpec::Tabular(d) => gen_tabular_data(cfg, d, seed, &classifier_cfg),
    }
}

fn image_split(d: &ImageData, n: usize, seed: u64, split: u64) -> Result<Corpus> {
    let k = d.id_classes.len();
    let parts = d
        .id_classes
        .iter()
        .enumerate()
        .map(|(ci, &class)| {
            let count = n / k + usize::from(ci < n % k);
            gen_id_images(class, count, d.side, seed_for(seed, split))
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::concat(&parts)
}

fn gen_image_data(
    cfg: &BenchConfig,
    d: &ImageData,
    seed: u64,
    classifier_cfg: &ClassifierConfig,
) -> Result<(SeedData, ScalarBaselines)> {
    let train = image_split(d, d.n_train, seed, 10)?;
    let fit = image_split(d, d.n_fit, seed, 11)?;
    let test = image_split(d, d.n_test, seed, 12)?;
    let train_classes = train.labels.clone();
    let head = ClassifierHead::train(&train.samples, &train_classes, classifier_cfg)
        .map_err(|e| e.in_stage("train-classifier"))?;
    let baselines = ScalarBaselines::fit(head, &train.samples, &train_classes)
        .map_err(|e| e.in_stage("fit-baselines"))?;
    let mut families = Vec::new();
    for (fi, f) in cfg.families.iter().enumerate() {
        let fam_seed = seed_for(seed, 100 + fi as u64);
        let corpus = match &f.kind {
            ShiftKind::Semantic { class } => gen_id_images(*class, d.n_per_family, d.side, fam_seed)?.relabel(&f.label),
            kind => {
                let base = image_split(d, d.n_per_family, fam_seed, 13)?;
                let spec = ShiftSpec::new(kind.clone(), seed_for(fam_seed, 1), f.label.clone());
                apply_covariate_shift(&base, &spec, Some(&baselines.head as &dyn InputGradient))?
            }
        };
        families.push(corpus);
    }
    Ok((SeedData { train, train_classes, fit, test, families }, baselines))
}

fn gen_tabular_data(
    cfg: &BenchConfig,
    d: &TabularData,
    seed: u64,
    classifier_cfg: &ClassifierConfig,
) -> Result<(SeedData, ScalarBaselines)> {
    let mixture = TabularMixture::random(d.dim, d.components, seed_for(seed, 20))?;
    let (train, comps) = gen_id_tabular_with_components(&mixture, d.n_train, seed_for(seed, 10))?;
    let (fit, _) = gen_id_tabular_with_components(&mixture, d.n_fit, seed_for(seed, 11))?;
    let (test, _) = gen_id_tabular_with_components(&mixture, d.n_test, seed_for(seed, 12))?;
    let train_classes: Vec<String> = comps.iter().map(|c| format!("c{c}")).collect();
    let head = ClassifierHead::train(&train.samples, &train_classes, classifier_cfg)
        .map_err(|e| e.in_stage("train-classifier"))?;
    let baselines = ScalarBaselines::fit(head, &train.samples, &train_classes)
        .map_err(|e| e.in_stage("fit-baselines"))?;
    let mut families = Vec::new();
    for (fi, f) in cfg.families.iter().enumerate() {
        let fam_seed = seed_for(seed, 100 + fi as u64);
        let corpus = match &f.kind {
            ShiftKind::NewComponent => gen_semantic_tabular(&mixture, d.n_per_family, d.semantic_sigma, fam_seed, &f.label)?,
            kind => {
                let (base, _) = gen_id_tabular_with_components(&mixture, d.n_per_family, fam_seed)?;
                let spec = ShiftSpec::new(kind.clone(), seed_for(fam_seed, 1), f.label.clone());
                apply_covariate_shift(&base, &spec, None)?
            }
        };
        families.push(corpus);
    }
    Ok((SeedData { train, train_classes, fit, test, families }, baselines))
}

/// Builds the standard row set from embeddings and baseline scores.
fn build_rows(
    traj: &TrajectoryConfig,
    emb: &[Vec<Vec<f64>>],
    base: &[Vec<BaselineScores>],
    labels: &[String],
) -> Vec<RowFeatures> {
    let make = |name: &str, scalar: bool, f: &dyn Fn(usize, usize) -> Vec<f64>| -> RowFeatures {
        let split = |s: usize| (0..emb[s].len()).map(|i| f(s, i)).collect::<Vec<_>>();
        RowFeatures {
            name: name.into(),
            scalar,
            fit: split(0),
            test: split(1),
            families: (2..emb.len()).map(|s| (labels[s - 2].clone(), split(s))).collect(),
        }
    };
    let mse_cols = traj.metric_columns(MetricKind::Mse);
    let mut rows = vec![
        make("disc", false, &|s, i| emb[s][i].clone()),
        make("disc_mse", false, &|s, i| mse_cols.iter().map(|&c| emb[s][i][c]).collect()),
    ];
    for (k, name) in BaselineScores::NAMES.iter().enumerate() {
        rows.push(make(name, true, &|s, i| vec![base[s][i].oriented()[k]]));
    }
    rows.push(make("all_detectors", false, &|s, i| base[s][i].oriented().to_vec()));
    rows
}

/// Pixels map to [-1, 1]; tabular data is z-scored with one pooled mean/std.
pub fn default_normalizer(modality: Modality, train: &[Vec<f64>]) -> Result<DataNormalizer> {
    match modality {
        Modality::Image => Ok(DataNormalizer::UNIT_INTERVAL),
        Modality::Tabular => DataNormalizer::fit_global(train),
    }
}

/// One benchmark repetition.
pub fn run_seed(cfg: &BenchConfig, seed: u64) -> Result<SeedResult> {
    let start = Instant::now();
    let modality = cfg.data.modality();
    let (data, baselines) = generate_data(cfg, seed).map_err(|e| e.in_stage("generate-data"))?;
    let baseline_classifier_accuracy = baselines.head.accuracy(&data.train.samples, &data.train_classes)?;

    let normalizer = default_normalizer(modality, &data.train.samples)?;
    let mut train_cfg = cfg.denoiser_train.clone();
    train_cfg.seed = seed_for(seed, 40);
    let trained = train_denoiser(&data.train.samples, &data.train.shape, &cfg.denoiser, normalizer, &train_cfg)
        .map_err(|e| e.in_stage("train-denoiser"))?;
    let model: DenoiserModel = trained.model;

    let traj = cfg.trajectory.build(modality, cfg.denoiser.schedule.steps, seed_for(seed, 50));
    let mut splits: Vec<&Corpus> = vec![&data.fit, &data.test];
    splits.extend(data.families.iter());
    let mut emb = Vec::with_capacity(splits.len());
    let mut base = Vec::with_capacity(splits.len());
    let mut next_id = 0u64;
    for c in &splits {
        let e = embed_all(&model, &c.samples, &traj, next_id).map_err(|e| e.in_stage("embed"))?;
        next_id += c.len() as u64;
        emb.push(e.into_iter().map(|e| e.values).collect::<Vec<_>>());
        base.push(
            c.samples
                .iter()
                .map(|x| baselines.scores(x))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage("baseline-scores"))?,
        );
    }
    let labels: Vec<String> = cfg.families.iter().map(|f| f.label.clone()).collect();
    let rows = build_rows(&traj, &emb, &base, &labels);
    let eval_seed = seed_for(seed, 60);
    let mut detectors = Vec::new();
    let mut family_scores = Vec::new();
    for r in &rows {
        let (d, f) = evaluate_features(r, &cfg.protocol, eval_seed).map_err(|e| e.in_stage("evaluate"))?;
        detectors.push(d);
        family_scores.extend(f);
    }
    let mut level_clustering = Vec::new();
    if cfg.level_clustering {
        for (l, &t) in traj.grid.iter().enumerate() {
            let acc = kmeans_accuracy(&rows[0], Some(&traj.level_columns(l)), &cfg.protocol, seed_for(eval_seed, 2))
                .map_err(|e| e.in_stage(format!("evaluate:disc_t{t}")))?;
            level_clustering.push(LevelClustering { t, clustering_accuracy: acc });
        }
    }
    Ok(SeedResult {
        seed,
        detectors,
        family_scores,
        level_clustering,
        denoiser_final_loss: trained.loss_curve.last().copied(),
        baseline_classifier_accuracy,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let per_seed = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s).map_err(|e| e.in_stage(format!("seed {s}"))))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = per_seed[0].detectors.iter().map(|d| d.detector.clone()).collect();
    let summary = names
        .iter()
        .map(|name| {
            let get = |f: fn(&DetectorResult) -> f64| -> Vec<f64> {
                per_seed.iter().map(|s| f(s.detector(name).unwrap())).collect()
            };
            DetectorSummary {
                detector: name.clone(),
                auroc: Summary::of(&get(|d| d.auroc)),
                clustering_accuracy: Summary::of(&get(|d| d.clustering_accuracy)),
                supervised_accuracy: Summary::of(&get(|d| d.supervised_accuracy)),
            }
        })
        .collect();
    Ok(ExperimentReport {
        schema_version: ExperimentReport::SCHEMA_VERSION,
        provenance: Provenance { tool_version: TOOL_VERSION.into(), config_hash: cfg.hash() },
        config: cfg.clone(),
        seeds: cfg.seeds.clone(),
        per_seed,
        summary,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
