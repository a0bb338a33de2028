//! Synthetic corpora: procedural grayscale image classes, Gaussian-mixture
//! tables, covariate shifts applied to existing corpora, CSV ingestion and
//! the on-disk corpus formats.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::io::{read_json, write_atomic, write_json};
use crate::metrics::Modality;
use crate::numerics::RngState;
use crate::{Error, Result};

/// Label carried by in-distribution samples that have no class of their own.
pub const ID_LABEL: &str = "id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub modality: Modality,
    /// `[height, width]` for images, `[d]` for tables.
    pub shape: Vec<usize>,
}

impl Corpus {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<String>, modality: Modality, shape: Vec<usize>) -> Result<Self> {
        check_dim("corpus labels", samples.len(), labels.len())?;
        let dim: usize = shape.iter().product();
        match (modality, shape.len()) {
            (Modality::Image, 2) | (Modality::Tabular, 1) => {}
            _ => return Err(Error::invalid(format!("shape {shape:?} does not fit {modality:?} data"))),
        }
        for s in &samples {
            check_dim("corpus sample", dim, s.len())?;
        }
        Ok(Corpus { samples, labels, modality, shape })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    /// Sorted distinct labels.
    pub fn families(&self) -> Vec<String> {
        self.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn relabel(mut self, label: &str) -> Self {
        self.labels.iter_mut().for_each(|l| *l = label.to_string());
        self
    }

    pub fn concat(parts: &[Corpus]) -> Result<Corpus> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut out = Corpus {
            samples: Vec::new(),
            labels: Vec::new(),
            modality: first.modality,
            shape: first.shape.clone(),
        };
        for p in parts {
            if p.modality != out.modality || p.shape != out.shape {
                return Err(Error::invalid("concatenated corpora differ in modality or shape"));
            }
            out.samples.extend(p.samples.iter().cloned());
            out.labels.extend(p.labels.iter().cloned());
        }
        Ok(out)
    }

    /// Samples at the given positions, in that order.
    pub fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            modality: self.modality,
            shape: self.shape.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageClass {
    Blobs,
    Stripes,
    Checkers,
}

impl ImageClass {
    pub const ALL: [ImageClass; 3] = [ImageClass::Blobs, ImageClass::Stripes, ImageClass::Checkers];

    pub fn name(self) -> &'static str {
        match self {
            ImageClass::Blobs => "blobs",
            ImageClass::Stripes => "stripes",
            ImageClass::Checkers => "checkers",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown image class {s:?}")))
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

fn blobs_image(side: usize, rng: &mut RngState) -> Vec<f64> {
    let s = side as f64;
    // mid-gray pedestal under the bumps
    let pedestal = rng.uniform_range(0.15, 0.35);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..1 + rng.below(3))
        .map(|_| {
            // columns biased to the left half so mirroring is visible
            let cx = rng.uniform_range(0.1, 0.5) * s;
            let cy = rng.uniform_range(0.15, 0.85) * s;
            let sigma = rng.uniform_range(0.08, 0.2) * s;
            let amp = rng.uniform_range(0.4, 0.65);
            (cx, cy, sigma, amp)
        })
        .collect();
    let mut px = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let v: f64 = bumps
                .iter()
                .map(|(cx, cy, sg, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sg * sg)).exp())
                .sum();
            px[r * side + c] = (pedestal + v).clamp(0.0, 1.0);
        }
    }
    px
}

fn stripes_image(side: usize, rng: &mut RngState) -> Vec<f64> {
    let theta = rng.uniform_range(20.0, 70.0).to_radians();
    let cycles = rng.uniform_range(1.5, 4.0);
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let amp = rng.uniform_range(0.3, 0.5);
    let k = 2.0 * PI * cycles / side as f64;
    let (ct, st) = (theta.cos(), theta.sin());
    let mut px = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let u = c as f64 * ct + r as f64 * st;
            px[r * side + c] = (0.5 + amp * (k * u + phase).sin()).clamp(0.0, 1.0);
        }
    }
    px
}

fn checkers_image(side: usize, rng: &mut RngState) -> Vec<f64> {
    let cell = 2 + rng.below(3);
    let (dr, dc) = (rng.below(cell), rng.below(cell));
    let lo = rng.uniform_range(0.0, 0.3);
    let hi = rng.uniform_range(0.7, 1.0);
    let mut px = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let parity = ((r + dr) / cell + (c + dc) / cell) % 2;
            px[r * side + c] = if parity == 0 { lo } else { hi };
        }
    }
    px
}

/// `n` square images of one class; labels are the class name. Sample `i`
/// depends only on `(seed, class, i)`.
pub fn gen_id_images(class: ImageClass, n: usize, side: usize, seed: u64) -> Result<Corpus> {
    if side < 8 || side % 2 != 0 {
        return Err(Error::invalid(format!("image side must be even and >= 8, got {side}")));
    }
    let samples = (0..n)
        .map(|i| {
            let mut rng = RngState::derive(seed, &[0x696d_67, class.tag(), i as u64]);
            match class {
                ImageClass::Blobs => blobs_image(side, &mut rng),
                ImageClass::Stripes => stripes_image(side, &mut rng),
                ImageClass::Checkers => checkers_image(side, &mut rng),
            }
        })
        .collect();
    Corpus::new(samples, vec![class.name().to_string(); n], Modality::Image, vec![side, side])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftKind {
    /// Fresh draws with no transformation; a null-control family.
    Identity,
    FlipH,
    Occlusion { p: f64 },
    GaussianNoise { s: f64 },
    Fgsm { epsilon: f64 },
    Semantic { class: ImageClass },
    ScaleShift { a: f64, b: f64 },
    FeatureShuffle { j: usize },
    NewComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub seed: u64,
    pub label: String,
}

impl ShiftSpec {
    pub fn new(kind: ShiftKind, seed: u64, label: impl Into<String>) -> Self {
        ShiftSpec { kind, seed, label: label.into() }
    }

    pub fn validate(&self, modality: Modality, dim: usize) -> Result<()> {
        let image_only = |what: &str| {
            if modality == Modality::Image {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} applies to images only")))
            }
        };
        let tabular_only = |what: &str| {
            if modality == Modality::Tabular {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} applies to tabular data only")))
            }
        };
        match self.kind {
            ShiftKind::Identity => Ok(()),
            ShiftKind::FlipH => image_only("flip_h"),
            ShiftKind::Occlusion { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::invalid(format!("occlusion fraction must lie in (0, 1), got {p}")));
                }
                image_only("occlusion")
            }
            ShiftKind::GaussianNoise { s } => {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid(format!("noise scale must be positive, got {s}")));
                }
                Ok(())
            }
            ShiftKind::Fgsm { epsilon } => {
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::invalid(format!("fgsm epsilon must be non-negative, got {epsilon}")));
                }
                image_only("fgsm")
            }
            ShiftKind::Semantic { .. } => image_only("semantic class"),
            ShiftKind::ScaleShift { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::invalid("scale_shift parameters must be finite"));
                }
                tabular_only("scale_shift")
            }
            ShiftKind::FeatureShuffle { j } => {
                if j >= dim {
                    return Err(Error::invalid(format!("feature_shuffle column {j} out of range for {dim} features")));
                }
                tabular_only("feature_shuffle")
            }
            ShiftKind::NewComponent => tabular_only("new_component"),
        }
    }
}

/// A differentiable classifier used to build FGSM perturbations.
pub trait InputGradient {
    fn class_index(&self, label: &str) -> Option<usize>;
    /// Gradient of the cross-entropy loss for `class` with respect to `x`.
    fn loss_input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>>;
}

/// Transforms every sample of `corpus`; the result carries `spec.label`.
pub fn apply_covariate_shift(
    corpus: &Corpus,
    spec: &ShiftSpec,
    classifier: Option<&dyn InputGradient>,
) -> Result<Corpus> {
    spec.validate(corpus.modality, corpus.dim())?;
    let mut samples = corpus.samples.clone();
    match spec.kind {
        ShiftKind::Identity => {}
        ShiftKind::FlipH => {
            let w = corpus.shape[1];
            for s in &mut samples {
                s.chunks_mut(w).for_each(|row| row.reverse());
            }
        }
        ShiftKind::Occlusion { p } => {
            let count = (p * corpus.dim() as f64).floor() as usize;
            for (i, s) in samples.iter_mut().enumerate() {
                let mut rng = RngState::derive(spec.seed, &[0x6f63_63, i as u64]);
                let mut idx: Vec<usize> = (0..s.len()).collect();
                rng.shuffle(&mut idx);
                for &k in &idx[..count] {
                    s[k] = 0.0;
                }
            }
        }
        ShiftKind::GaussianNoise { s: scale } => {
            let clamp = corpus.modality == Modality::Image;
            for (i, s) in samples.iter_mut().enumerate() {
                let mut rng = RngState::derive(spec.seed, &[0x6e6f_6973, i as u64]);
                for v in s.iter_mut() {
                    *v += scale * rng.gaussian();
                    if clamp {
                        *v = v.clamp(0.0, 1.0);
                    }
                }
            }
        }
        ShiftKind::Fgsm { epsilon } => {
            let clf = classifier.ok_or_else(|| Error::invalid("fgsm needs a trained classifier"))?;
            if epsilon > 0.0 {
                for (s, label) in samples.iter_mut().zip(&corpus.labels) {
                    let class = clf
                        .class_index(label)
                        .ok_or_else(|| Error::invalid(format!("fgsm: classifier has no class {label:?}")))?;
                    let g = clf.loss_input_gradient(s, class)?;
                    for (v, gi) in s.iter_mut().zip(&g) {
                        let sign = if *gi > 0.0 {
                            1.0
                        } else if *gi < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *v = (*v + epsilon * sign).clamp(0.0, 1.0);
                    }
                }
            }
        }
        ShiftKind::ScaleShift { a, b } => {
            for s in &mut samples {
                s.iter_mut().for_each(|v| *v = a * *v + b);
            }
        }
        ShiftKind::FeatureShuffle { j } => {
            let mut rng = RngState::derive(spec.seed, &[0x7368_7566, j as u64]);
            let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            rng.shuffle(&mut col);
            for (s, v) in samples.iter_mut().zip(col) {
                s[j] = v;
            }
        }
        ShiftKind::Semantic { .. } | ShiftKind::NewComponent => {
            return Err(Error::invalid(
                "semantic shifts are generated, not applied; use the corpus generators",
            ))
        }
    }
    Corpus::new(samples, vec![spec.label.clone(); corpus.len()], corpus.modality, corpus.shape.clone())
}

/// Lower-triangular Cholesky factor; fails unless `a` is positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        check_dim("covariance row", n, a[i].len())?;
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 1e-12) {
                    return Err(Error::invalid(format!("degenerate covariance: pivot {i} is {d}")));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-9 * (1.0 + a[i][j].abs()) {
                return Err(Error::invalid("covariance is not symmetric"));
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMixture {
    pub weights: Vec<f64>,
    pub components: Vec<MixtureComponent>,
}

impl TabularMixture {
    /// Seeded mixture with correlated components: means uniform in
    /// `[-3, 3]^d`, covariance `A Aᵀ / d + 0.3 I` with Gaussian `A`.
    pub fn random(d: usize, components: usize, seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid("tabular data needs at least 2 dimensions"));
        }
        if components == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let mut rng = RngState::derive(seed, &[0x6d69_78]);
        let comps = (0..components)
            .map(|_| {
                let mean = (0..d).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
                let a: Vec<Vec<f64>> = (0..d).map(|_| rng.gaussian_vec(d)).collect();
                let covariance = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| {
                                let s: f64 = (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>() / d as f64;
                                s + if i == j { 0.3 } else { 0.0 }
                            })
                            .collect()
                    })
                    .collect();
                MixtureComponent { mean, covariance }
            })
            .collect();
        Ok(TabularMixture {
            weights: vec![1.0 / components as f64; components],
            components: comps,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d < 2 {
            return Err(Error::invalid("tabular data needs at least 2 dimensions"));
        }
        check_dim("mixture weights", self.components.len(), self.weights.len())?;
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights must be non-negative and sum to 1"));
        }
        for c in &self.components {
            check_dim("component mean", d, c.mean.len())?;
            check_dim("component covariance", d, c.covariance.len())?;
        }
        Ok(())
    }

    /// Weighted within-component standard deviation, averaged over axes.
    pub fn pooled_std(&self) -> f64 {
        let d = self.dim() as f64;
        let var: f64 = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * (0..c.mean.len()).map(|i| c.covariance[i][i]).sum::<f64>() / d)
            .sum();
        var.sqrt()
    }

    /// Component whose mean sits at least `k` pooled standard deviations
    /// from every existing mean, with the weighted average covariance.
    pub fn held_out_component(&self, k: f64, seed: u64) -> Result<MixtureComponent> {
        self.validate()?;
        let d = self.dim();
        let sigma = self.pooled_std();
        let mut centroid = vec![0.0; d];
        let mut covariance = vec![vec![0.0; d]; d];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for i in 0..d {
                centroid[i] += w * c.mean[i];
                for j in 0..d {
                    covariance[i][j] += w * c.covariance[i][j];
                }
            }
        }
        let mut rng = RngState::derive(seed, &[0x6e65_77]);
        let dir = rng.gaussian_vec(d);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let min_dist = |m: &[f64]| -> f64 {
            self.components
                .iter()
                .map(|c| c.mean.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        let mut radius = k * sigma;
        loop {
            let mean: Vec<f64> = centroid.iter().zip(&dir).map(|(c, u)| c + radius * u / norm).collect();
            if min_dist(&mean) >= k * sigma {
                return Ok(MixtureComponent { mean, covariance });
            }
            radius += 0.5 * sigma;
        }
    }
}

fn sample_component(c: &MixtureComponent, chol: &[Vec<f64>], rng: &mut RngState) -> Vec<f64> {
    let z = rng.gaussian_vec(c.mean.len());
    c.mean
        .iter()
        .enumerate()
        .map(|(i, m)| m + (0..=i).map(|k| chol[i][k] * z[k]).sum::<f64>())
        .collect()
}

/// `n` mixture draws labeled [`ID_LABEL`].
pub fn gen_id_tabular(mixture: &TabularMixture, n: usize, seed: u64) -> Result<Corpus> {
    gen_id_tabular_with_components(mixture, n, seed).map(|(c, _)| c)
}

/// As [`gen_id_tabular`], also returning each draw's component index.
pub fn gen_id_tabular_with_components(mixture: &TabularMixture, n: usize, seed: u64) -> Result<(Corpus, Vec<usize>)> {
    mixture.validate()?;
    let chols = mixture
        .components
        .iter()
        .map(|c| cholesky(&c.covariance))
        .collect::<Result<Vec<_>>>()?;
    let mut comps = Vec::with_capacity(n);
    let samples = (0..n)
        .map(|i| {
            let mut rng = RngState::derive(seed, &[0x7461_62, i as u64]);
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut k = mixture.weights.len() - 1;
            for (j, w) in mixture.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = j;
                    break;
                }
            }
            comps.push(k);
            sample_component(&mixture.components[k], &chols[k], &mut rng)
        })
        .collect();
    let corpus = Corpus::new(samples, vec![ID_LABEL.to_string(); n], Modality::Tabular, vec![mixture.dim()])?;
    Ok((corpus, comps))
}

/// `n` draws from a held-out component `k_sigma` pooled deviations away.
pub fn gen_semantic_tabular(
    mixture: &TabularMixture,
    n: usize,
    k_sigma: f64,
    seed: u64,
    label: &str,
) -> Result<Corpus> {
    let comp = mixture.held_out_component(k_sigma, seed)?;
    let chol = cholesky(&comp.covariance)?;
    let samples = (0..n)
        .map(|i| {
            let mut rng = RngState::derive(seed, &[0x7365_6d, i as u64]);
            sample_component(&comp, &chol, &mut rng)
        })
        .collect();
    Corpus::new(samples, vec![label.to_string(); n], Modality::Tabular, vec![mixture.dim()])
}

/// Numeric CSV with a header. Features keep column order; the label
/// column, if named, is extracted as text.
pub fn load_csv_tabular(path: &Path, label_column: Option<&str>) -> Result<Corpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv_tabular(&bytes, label_column).map_err(|e| match e {
        Error::Data(m) => Error::data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_csv_tabular(bytes: &[u8], label_column: Option<&str>) -> Result<Corpus> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::data("empty file"));
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::data(format!("missing label column {name:?}")))?,
        ),
        None => None,
    };
    let n_features = header.len() - label_idx.map_or(0, |_| 1);
    if n_features == 0 {
        return Err(Error::data("no feature columns"));
    }
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::data(format!(
                "ragged row {row}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let mut x = Vec::with_capacity(n_features);
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                labels.push(cell.trim().to_string());
                continue;
            }
            let v = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::data(format!("row {row}, column {} ({}): non-numeric value {cell:?}", c + 1, header[c]))
                })?;
            x.push(v);
        }
        if label_idx.is_none() {
            labels.push(ID_LABEL.to_string());
        }
        samples.push(x);
    }
    if samples.is_empty() {
        return Err(Error::data("no data rows"));
    }
    Corpus::new(samples, labels, Modality::Tabular, vec![n_features])
}

/// Tabular corpus as CSV: `f0..f{d-1}` then `label`.
pub fn write_csv_tabular(corpus: &Corpus, path: &Path) -> Result<()> {
    if corpus.modality != Modality::Tabular {
        return Err(Error::invalid("csv corpora hold tabular data"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..corpus.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (s, l) in corpus.samples.iter().zip(&corpus.labels) {
        let mut rec: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        rec.push(l.clone());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("csv flush failed: {e}")))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub format_version: u32,
    pub n: usize,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub labels: Vec<String>,
}

impl RasterHeader {
    pub const FORMAT_VERSION: u32 = 1;
    pub const DTYPE: &'static str = "float32-le";
}

pub fn raster_header_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

/// Image corpus as a flat little-endian f32 raster plus a JSON header.
pub fn write_raster(corpus: &Corpus, path: &Path) -> Result<()> {
    if corpus.modality != Modality::Image {
        return Err(Error::invalid("raster corpora hold images"));
    }
    let mut bytes = Vec::with_capacity(corpus.len() * corpus.dim() * 4);
    for s in &corpus.samples {
        for v in s {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    write_atomic(path, &bytes)?;
    let header = RasterHeader {
        format_version: RasterHeader::FORMAT_VERSION,
        n: corpus.len(),
        shape: corpus.shape.clone(),
        dtype: RasterHeader::DTYPE.into(),
        labels: corpus.labels.clone(),
    };
    write_json(&raster_header_path(path), &header)
}

pub fn read_raster(path: &Path) -> Result<Corpus> {
    let header: RasterHeader = read_json(&raster_header_path(path))?;
    if header.format_version != RasterHeader::FORMAT_VERSION {
        return Err(Error::data(format!("unsupported raster format_version {}", header.format_version)));
    }
    if header.dtype != RasterHeader::DTYPE {
        return Err(Error::data(format!("unsupported raster dtype {:?}", header.dtype)));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let dim: usize = header.shape.iter().product();
    if bytes.len() != header.n * dim * 4 {
        return Err(Error::data(format!(
            "{}: expected {} bytes for {} samples, found {}",
            path.display(),
            header.n * dim * 4,
            header.n,
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(dim * 4)
        .map(|chunk| {
            chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect();
    Corpus::new(samples, header.labels, Modality::Image, header.shape)
}

/// Reads either format, chosen by the presence of a raster header.
pub fn read_corpus(path: &Path, label_column: Option<&str>) -> Result<Corpus> {
    if raster_header_path(path).exists() {
        read_raster(path)
    } else {
        load_csv_tabular(path, label_column)
    }
}

/// Writes either format according to the corpus modality.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    match corpus.modality {
        Modality::Image => write_raster(corpus, path),
        Modality::Tabular => write_csv_tabular(corpus, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn image_generation_is_deterministic_and_bounded() {
        for class in ImageClass::ALL {
            let a = gen_id_images(class, 40, 16, 7).unwrap();
            let b = gen_id_images(class, 40, 16, 7).unwrap();
            assert_eq!(a, b);
            assert!(a.samples.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a.families(), vec![class.name().to_string()]);
        }
        assert!(gen_id_images(ImageClass::Blobs, 1, 7, 1).is_err());
        assert!(gen_id_images(ImageClass::Blobs, 1, 6, 1).is_err());
    }

    #[test]
    fn stripes_mean_intensity_near_half() {
        let c = gen_id_images(ImageClass::Stripes, 500, 16, 3).unwrap();
        let mean = c.samples.iter().flatten().sum::<f64>() / (500.0 * 256.0);
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn prefix_of_a_larger_corpus_is_the_smaller_corpus() {
        let a = gen_id_images(ImageClass::Checkers, 5, 8, 2).unwrap();
        let b = gen_id_images(ImageClass::Checkers, 9, 8, 2).unwrap();
        assert_eq!(a.samples[..], b.samples[..5]);
    }

    #[test]
    fn flips_are_involutions_and_change_blobs() {
        let c = gen_id_images(ImageClass::Blobs, 10, 16, 1).unwrap();
        let spec = ShiftSpec::new(ShiftKind::FlipH, 0, "flip_h");
        let once = apply_covariate_shift(&c, &spec, None).unwrap();
        assert_ne!(once.samples, c.samples);
        let twice = apply_covariate_shift(&once, &spec, None).unwrap();
        assert_eq!(twice.samples, c.samples);
        assert_eq!(once.families(), vec!["flip_h".to_string()]);
        assert_eq!(once.samples[0][0], c.samples[0][15]);
    }

    #[test]
    fn occlusion_zeroes_floor_count() {
        let c = Corpus::new(vec![vec![0.5; 256]; 5], vec!["id".into(); 5], Modality::Image, vec![16, 16]).unwrap();
        let spec = ShiftSpec::new(ShiftKind::Occlusion { p: 0.2 }, 9, "occlusion");
        let out = apply_covariate_shift(&c, &spec, None).unwrap();
        for s in &out.samples {
            assert_eq!(s.iter().filter(|v| **v == 0.0).count(), 51);
        }
        assert_ne!(out.samples[0], out.samples[1]);
        let bad = ShiftSpec::new(ShiftKind::Occlusion { p: 1.0 }, 9, "occlusion");
        assert!(apply_covariate_shift(&c, &bad, None).is_err());
    }

    struct Linear;
    impl InputGradient for Linear {
        fn class_index(&self, label: &str) -> Option<usize> {
            (label == "id").then_some(0)
        }
        fn loss_input_gradient(&self, x: &[f64], _class: usize) -> Result<Vec<f64>> {
            Ok((0..x.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect())
        }
    }

    #[test]
    fn fgsm_steps_along_gradient_sign() {
        let c = Corpus::new(vec![vec![0.5; 64]; 2], vec!["id".into(); 2], Modality::Image, vec![8, 8]).unwrap();
        let zero = ShiftSpec::new(ShiftKind::Fgsm { epsilon: 0.0 }, 0, "fgsm");
        assert_eq!(apply_covariate_shift(&c, &zero, Some(&Linear)).unwrap().samples, c.samples);
        let spec = ShiftSpec::new(ShiftKind::Fgsm { epsilon: 0.1 }, 0, "fgsm");
        let out = apply_covariate_shift(&c, &spec, Some(&Linear)).unwrap();
        assert!((out.samples[0][0] - 0.6).abs() < 1e-12);
        assert!((out.samples[0][1] - 0.4).abs() < 1e-12);
        assert!(apply_covariate_shift(&c, &spec, None).is_err());
    }

    #[test]
    fn noise_is_clamped_for_images() {
        let c = gen_id_images(ImageClass::Checkers, 4, 8, 1).unwrap();
        let spec = ShiftSpec::new(ShiftKind::GaussianNoise { s: 0.5 }, 1, "gaussian_noise");
        let out = apply_covariate_shift(&c, &spec, None).unwrap();
        assert!(out.samples.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(out.samples, c.samples);
    }

    #[test]
    fn shift_modality_checks() {
        let m = TabularMixture::random(3, 1, 0).unwrap();
        let t = gen_id_tabular(&m, 5, 0).unwrap();
        assert!(apply_covariate_shift(&t, &ShiftSpec::new(ShiftKind::FlipH, 0, "x"), None).is_err());
        assert!(apply_covariate_shift(&t, &ShiftSpec::new(ShiftKind::FeatureShuffle { j: 3 }, 0, "x"), None).is_err());
        let s = apply_covariate_shift(&t, &ShiftSpec::new(ShiftKind::ScaleShift { a: 2.0, b: 1.0 }, 0, "x"), None).unwrap();
        assert_eq!(s.samples[0][1], 2.0 * t.samples[0][1] + 1.0);
    }

    #[test]
    fn single_component_sample_mean() {
        let m = TabularMixture {
            weights: vec![1.0],
            components: vec![MixtureComponent {
                mean: vec![1.0, -2.0, 0.5],
                covariance: vec![vec![1.0, 0.5, 0.0], vec![0.5, 2.0, 0.3], vec![0.0, 0.3, 0.5]],
            }],
        };
        let c = gen_id_tabular(&m, 10_000, 5).unwrap();
        // 0.05 is about 3.5 standard errors for the widest axis
        for j in 0..3 {
            let mean = c.samples.iter().map(|s| s[j]).sum::<f64>() / 1e4;
            assert!((mean - m.components[0].mean[j]).abs() < 0.05, "dim {j}: {mean}");
        }
        let cov01 = c.samples.iter().map(|s| (s[0] - 1.0) * (s[1] + 2.0)).sum::<f64>() / 1e4;
        assert!((cov01 - 0.5).abs() < 0.06, "{cov01}");
        assert_eq!(c, gen_id_tabular(&m, 10_000, 5).unwrap());
    }

    #[test]
    fn degenerate_covariance_rejected() {
        let m = TabularMixture {
            weights: vec![1.0],
            components: vec![MixtureComponent {
                mean: vec![0.0, 0.0],
                covariance: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            }],
        };
        assert!(gen_id_tabular(&m, 3, 0).is_err());
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = vec![vec![4.0, 2.0, 0.4], vec![2.0, 3.0, 0.5], vec![0.4, 0.5, 1.0]];
        let l = cholesky(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((s - a[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semantic_component_is_separated() {
        let m = TabularMixture::random(6, 3, 11).unwrap();
        let held = m.held_out_component(4.0, 2).unwrap();
        let sigma = m.pooled_std();
        for c in &m.components {
            let d: f64 = c.mean.iter().zip(&held.mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d >= 4.0 * sigma);
        }
        let s = gen_semantic_tabular(&m, 20, 4.0, 2, "new_component").unwrap();
        assert_eq!(s.families(), vec!["new_component".to_string()]);
    }

    #[test]
    fn csv_parsing_rules() {
        let c = parse_csv_tabular(b"a,b,y\n1,2.5,x\n-3,4e-2,z\n0.125,7,x\n", Some("y")).unwrap();
        assert_eq!(c.samples, vec![vec![1.0, 2.5], vec![-3.0, 0.04], vec![0.125, 7.0]]);
        assert_eq!(c.labels, vec!["x", "z", "x"]);
        let e = parse_csv_tabular(b"a,b\n1,NaN\n", None).unwrap_err().to_string();
        assert!(e.contains("row 1") && e.contains("column 2"), "{e}");
        let e = parse_csv_tabular(b"a,b\n", None).unwrap_err().to_string();
        assert!(e.contains("no data rows"), "{e}");
        assert!(parse_csv_tabular(b"", None).unwrap_err().to_string().contains("empty"));
        assert!(parse_csv_tabular(b"a,b\n1,2\n3\n", None).unwrap_err().to_string().contains("ragged"));
        assert!(parse_csv_tabular(b"a,b\n1,2\n", Some("y")).unwrap_err().to_string().contains("missing label"));
    }

    #[test]
    fn corpus_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = gen_id_images(ImageClass::Blobs, 3, 8, 1).unwrap();
        let p = dir.path().join("img.f32");
        write_corpus(&img, &p).unwrap();
        let back = read_corpus(&p, None).unwrap();
        assert_eq!(back.labels, img.labels);
        for (a, b) in back.samples.iter().flatten().zip(img.samples.iter().flatten()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let m = TabularMixture::random(3, 2, 0).unwrap();
        let tab = gen_id_tabular(&m, 4, 0).unwrap();
        let p = dir.path().join("tab.csv");
        write_corpus(&tab, &p).unwrap();
        assert_eq!(read_corpus(&p, Some("label")).unwrap(), tab);
    }

    proptest! {
        #[test]
        fn feature_shuffle_preserves_multiset(seed in 0u64..1000, j in 0usize..4) {
            let m = TabularMixture::random(4, 2, seed).unwrap();
            let c = gen_id_tabular(&m, 30, seed).unwrap();
            let out = apply_covariate_shift(&c, &ShiftSpec::new(ShiftKind::FeatureShuffle { j }, seed, "shuf"), None).unwrap();
            let sorted = |cor: &Corpus, k: usize| {
                let mut v: Vec<f64> = cor.samples.iter().map(|s| s[k]).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            for k in 0..4 {
                prop_assert_eq!(sorted(&c, k), sorted(&out, k));
                if k != j {
                    let col = |cor: &Corpus| cor.samples.iter().map(|s| s[k]).collect::<Vec<_>>();
                    prop_assert_eq!(col(&c), col(&out));
                }
            }
        }

        #[test]
        fn shifts_preserve_count_and_shape(seed in 0u64..500, p in 0.01f64..0.99) {
            let c = gen_id_images(ImageClass::Stripes, 3, 8, seed).unwrap();
            for kind in [ShiftKind::FlipH, ShiftKind::Occlusion { p }, ShiftKind::GaussianNoise { s: p }] {
                let out = apply_covariate_shift(&c, &ShiftSpec::new(kind, seed, "s"), None).unwrap();
                prop_assert_eq!(out.len(), c.len());
                prop_assert_eq!(&out.shape, &c.shape);
            }
        }
    }
}
