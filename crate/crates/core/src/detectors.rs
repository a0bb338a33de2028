//! Decision machinery on top of embeddings or raw features: isolation
//! forest, k-means, an MLP classifier head, scalar confidence baselines and
//! the threshold rule. Every score is oriented so that larger means more
//! in-distribution, except the raw energy value.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::io::write_atomic;
use crate::numerics::{softmax, train, Activation, Dataset, DenseNet, Loss, RngState, Targets, TrainConfig};
use crate::shiftgen::{cholesky, InputGradient};
use crate::trajectory::Standardizer;
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Harmonic number approximation with the convention `H(1) = 1`.
pub fn harmonic(m: usize) -> f64 {
    match m {
        0 => 0.0,
        1 => 1.0,
        _ => (m as f64).ln() + EULER_GAMMA,
    }
}

/// Average unsuccessful-search path length in a binary search tree of `n`.
pub fn c_factor(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum INode {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ITree {
    /// Node 0 is the root.
    pub nodes: Vec<INode>,
}

impl ITree {
    fn grow(data: &[Vec<f64>], idx: &mut [usize], height_limit: usize, rng: &mut RngState) -> ITree {
        let mut tree = ITree { nodes: Vec::new() };
        tree.build(data, idx, 0, height_limit, rng);
        tree
    }

    fn build(&mut self, data: &[Vec<f64>], idx: &mut [usize], depth: usize, limit: usize, rng: &mut RngState) -> usize {
        let me = self.nodes.len();
        self.nodes.push(INode::Leaf { size: idx.len() });
        if idx.len() <= 1 || depth >= limit {
            return me;
        }
        let d = data[idx[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..d)
            .filter_map(|f| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(data[i][f]), hi.max(data[i][f]))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return me;
        }
        let (feature, lo, hi) = ranges[rng.below(ranges.len())];
        let mut value = rng.uniform_range(lo, hi);
        if !(value > lo) {
            value = 0.5 * (lo + hi);
        }
        let mut split = 0;
        for k in 0..idx.len() {
            if data[idx[k]][feature] < value {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(data, l, depth + 1, limit, rng);
        let right = self.build(data, r, depth + 1, limit, rng);
        self.nodes[me] = INode::Split { feature, value, left, right };
        me
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                INode::Leaf { size } => return depth + c_factor(size),
                INode::Split { feature, value, left, right } => {
                    node = if x[feature] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &ITree, n: usize) -> usize {
            match t.nodes[n] {
                INode::Leaf { .. } => 0,
                INode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IForestConfig {
    pub subsample: usize,
    pub trees: usize,
    pub seed: u64,
}

impl Default for IForestConfig {
    fn default() -> Self {
        IForestConfig { subsample: 256, trees: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub format_version: u32,
    pub dim: usize,
    /// Effective subsample size (`min(ψ, n)`).
    pub subsample: usize,
    pub height_limit: usize,
    pub seed: u64,
    pub trees: Vec<ITree>,
}

impl IsolationForest {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn fit(data: &[Vec<f64>], cfg: &IForestConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("isolation forest needs at least one sample"));
        }
        if cfg.trees == 0 || cfg.subsample == 0 {
            return Err(Error::config("isolation forest needs trees >= 1 and subsample >= 1"));
        }
        let dim = data[0].len();
        for x in data {
            check_dim("iforest sample", dim, x.len())?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("isolation forest input contains a non-finite value".into()));
            }
        }
        let psi = cfg.subsample.min(data.len());
        let height_limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..cfg.trees)
            .map(|t| {
                let mut rng = RngState::derive(cfg.seed, &[0x6966_6f72, t as u64]);
                let mut all: Vec<usize> = (0..data.len()).collect();
                // partial Fisher-Yates: the first psi slots form the subsample
                for i in 0..psi {
                    let j = i + rng.below(all.len() - i);
                    all.swap(i, j);
                }
                ITree::grow(data, &mut all[..psi], height_limit, &mut rng)
            })
            .collect();
        Ok(IsolationForest {
            format_version: Self::FORMAT_VERSION,
            dim,
            subsample: psi,
            height_limit,
            seed: cfg.seed,
            trees,
        })
    }

    pub fn expected_path_length(&self, x: &[f64]) -> Result<f64> {
        check_dim("iforest input", self.dim, x.len())?;
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Anomaly score `2^(-E[h]/c(ψ))` in `(0, 1)`; larger is more anomalous.
    pub fn anomaly_score(&self, x: &[f64]) -> Result<f64> {
        let h = self.expected_path_length(x)?;
        let c = c_factor(self.subsample);
        Ok(if c > 0.0 { (-h / c).exp2() } else { 0.5 })
    }

    /// Oriented score (`1 - anomaly`): larger means more in-distribution.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(1.0 - self.anomaly_score(x)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig { k, max_iter: 300, restarts: 5, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub format_version: u32,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the kept restart.
    pub inertia_history: Vec<f64>,
    pub seed: u64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut RngState) -> Vec<Vec<f64>> {
    let mut centroids = vec![data[rng.below(data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = data.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(data.len())
        };
        centroids.push(data[pick].clone());
        let c = centroids.last().unwrap();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, c));
        }
    }
    centroids
}

struct LloydRun {
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn lloyd(data: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> Result<LloydRun> {
    let k = centroids.len();
    let dim = data[0].len();
    let mut assign = vec![usize::MAX; data.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = vec![0.0; data.len()];
        for (i, x) in data.iter().enumerate() {
            let (j, d) = nearest(&centroids, x);
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
            dists[i] = d;
            inertia += d;
        }
        if let Some(&prev) = history.last() {
            if inertia > prev * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::NonFinite(format!(
                    "k-means inertia increased from {prev} to {inertia} at iteration {iterations}"
                )));
            }
        }
        history.push(inertia);
        if !changed || iterations >= max_iter {
            return Ok(LloydRun { centroids, inertia, iterations, history });
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in data.iter().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // farthest point from its own centroid takes the empty slot
                let far = (0..data.len())
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap();
                centroids[j] = data[far].clone();
                dists[far] = 0.0;
            }
        }
    }
}

impl KMeansModel {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn fit(data: &[Vec<f64>], cfg: &KMeansConfig) -> Result<Self> {
        if cfg.k == 0 {
            return Err(Error::invalid("k-means needs k >= 1"));
        }
        if cfg.k > data.len() {
            return Err(Error::invalid(format!("k-means with k={} on {} samples", cfg.k, data.len())));
        }
        let dim = data[0].len();
        for x in data {
            check_dim("k-means sample", dim, x.len())?;
        }
        let mut best: Option<LloydRun> = None;
        for r in 0..cfg.restarts.max(1) {
            let mut rng = RngState::derive(cfg.seed, &[0x6b6d_6e73, r as u64]);
            let init = kmeans_pp(data, cfg.k, &mut rng);
            let run = lloyd(data, init, cfg.max_iter)?;
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
        }
        let run = best.unwrap();
        if run.centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("k-means produced a non-finite centroid".into()));
        }
        Ok(KMeansModel {
            format_version: Self::FORMAT_VERSION,
            centroids: run.centroids,
            inertia: run.inertia,
            iterations: run.iterations,
            inertia_history: run.history,
            seed: cfg.seed,
        })
    }

    /// Nearest centroid; ties go to the lowest cluster id.
    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        check_dim("k-means input", self.centroids[0].len(), x.len())?;
        Ok(nearest(&self.centroids, x).0)
    }

    pub fn assign_all(&self, data: &[Vec<f64>]) -> Result<Vec<usize>> {
        data.iter().map(|x| self.assign(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: vec![64, 64],
            train: TrainConfig {
                learning_rate: 1e-3,
                epochs: 100,
                batch_size: 32,
                ..TrainConfig::default()
            },
        }
    }
}

/// MLP over standardized inputs with a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    pub net: DenseNet,
}

impl ClassifierHead {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn train(features: &[Vec<f64>], labels: &[String], cfg: &ClassifierConfig) -> Result<Self> {
        check_dim("classifier labels", features.len(), labels.len())?;
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::invalid("classifier needs at least two classes"));
        }
        // canonical sample order ahead of the seeded shuffle
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.sort_by(|&a, &b| {
            features[a]
                .iter()
                .zip(&features[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
                .then_with(|| labels[a].cmp(&labels[b]))
        });
        let sorted: Vec<Vec<f64>> = order.iter().map(|&i| features[i].clone()).collect();
        let standardizer = Standardizer::fit(&sorted, 1e-6)?;
        let inputs = sorted
            .iter()
            .map(|x| standardizer.apply(x))
            .collect::<Result<Vec<_>>>()?;
        let targets = order
            .iter()
            .map(|&i| classes.binary_search(&labels[i]).unwrap())
            .collect();
        let mut dims = vec![features[0].len()];
        dims.extend(&cfg.hidden);
        dims.push(classes.len());
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Identity);
        let mut rng = RngState::derive(cfg.train.seed, &[0x636c_6673]);
        let net = DenseNet::glorot(&dims, &acts, &mut rng)?;
        let data = Dataset { inputs, targets: Targets::Classes(targets) };
        let out = train(net, &data, Loss::CrossEntropy, &cfg.train)?;
        Ok(ClassifierHead {
            format_version: Self::FORMAT_VERSION,
            classes,
            standardizer,
            net: out.net,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(&self.standardizer.apply(x)?)
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Logits and the last hidden activation.
    pub fn logits_and_features(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let fwd = self.net.forward(&self.standardizer.apply(x)?)?;
        let feats = fwd.inputs.last().cloned().unwrap_or_default();
        Ok((fwd.output, feats))
    }

    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let l = self.logits(x)?;
        Ok(argmax(&l))
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(x)?])
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[String]) -> Result<f64> {
        check_dim("accuracy labels", features.len(), labels.len())?;
        if features.is_empty() {
            return Err(Error::invalid("accuracy over an empty set"));
        }
        let mut hits = 0;
        for (x, l) in features.iter().zip(labels) {
            if self.predict(x)? == l {
                hits += 1;
            }
        }
        Ok(hits as f64 / features.len() as f64)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl InputGradient for ClassifierHead {
    fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    fn loss_input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        let z = self.standardizer.apply(x)?;
        let mut p = softmax(&self.net.predict(&z)?);
        p[class] -= 1.0;
        let (_, gz) = self.net.gradient(&z, &p)?;
        Ok(gz
            .iter()
            .zip(&self.standardizer.std)
            .map(|(g, s)| g / s.max(self.standardizer.floor))
            .collect())
    }
}

/// Class means and a shared ridge-regularized precision matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisStats {
    pub means: Vec<Vec<f64>>,
    pub precision: Vec<Vec<f64>>,
}

impl MahalanobisStats {
    pub const DEFAULT_RIDGE: f64 = 1e-6;

    pub fn fit(features: &[Vec<f64>], classes: &[usize], n_classes: usize, ridge: f64) -> Result<Self> {
        check_dim("mahalanobis labels", features.len(), classes.len())?;
        if features.is_empty() {
            return Err(Error::invalid("mahalanobis fit on no samples"));
        }
        let d = features[0].len();
        let mut means = vec![vec![0.0; d]; n_classes];
        let mut counts = vec![0usize; n_classes];
        for (f, &c) in features.iter().zip(classes) {
            check_dim("mahalanobis feature", d, f.len())?;
            if c >= n_classes {
                return Err(Error::invalid(format!("class index {c} out of range")));
            }
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(f) {
                *m += v;
            }
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            if n == 0 {
                return Err(Error::invalid("mahalanobis fit with an empty class"));
            }
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
        let mut cov = vec![vec![0.0; d]; d];
        for (f, &c) in features.iter().zip(classes) {
            let r: Vec<f64> = f.iter().zip(&means[c]).map(|(a, b)| a - b).collect();
            for i in 0..d {
                for j in 0..=i {
                    cov[i][j] += r[i] * r[j];
                }
            }
        }
        let n = features.len() as f64;
        for i in 0..d {
            for j in 0..=i {
                cov[i][j] /= n;
                cov[j][i] = cov[i][j];
            }
            cov[i][i] += ridge;
        }
        Ok(MahalanobisStats { means, precision: spd_inverse(&cov)? })
    }

    pub fn identity(means: Vec<Vec<f64>>) -> Self {
        let d = means[0].len();
        let precision = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        MahalanobisStats { means, precision }
    }

    /// Squared distance to the nearest class mean.
    pub fn min_distance(&self, f: &[f64]) -> Result<f64> {
        check_dim("mahalanobis input", self.precision.len(), f.len())?;
        let mut best = f64::INFINITY;
        for m in &self.means {
            let r: Vec<f64> = f.iter().zip(m).map(|(a, b)| a - b).collect();
            let q: f64 = self
                .precision
                .iter()
                .zip(&r)
                .map(|(row, ri)| ri * row.iter().zip(&r).map(|(p, rj)| p * rj).sum::<f64>())
                .sum();
            best = best.min(q);
        }
        Ok(best)
    }
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let l = cholesky(a)?;
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            y[i] = (rhs - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k][i] * inv[k][col]).sum();
            inv[i][col] = (y[i] - s) / l[i][i];
        }
    }
    Ok(inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub msp: f64,
    pub max_logit: f64,
    /// Raw `-logsumexp(logits)`; smaller means more in-distribution.
    pub energy: f64,
    /// Negated squared distance to the nearest class mean.
    pub mahalanobis: f64,
}

impl BaselineScores {
    pub const NAMES: [&'static str; 4] = ["msp", "max_logit", "energy", "mahalanobis"];

    /// All four with larger-is-more-in-distribution orientation.
    pub fn oriented(&self) -> [f64; 4] {
        [self.msp, self.max_logit, -self.energy, self.mahalanobis]
    }
}

pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Scores that only need logits.
pub fn logit_scores(logits: &[f64]) -> (f64, f64, f64) {
    let lse = logsumexp(logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ((max - lse).exp(), max, -lse)
}

/// A classifier trained on ID classes plus Mahalanobis statistics on its
/// penultimate features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarBaselines {
    pub head: ClassifierHead,
    pub stats: Option<MahalanobisStats>,
}

impl ScalarBaselines {
    pub fn fit(head: ClassifierHead, id_inputs: &[Vec<f64>], id_labels: &[String]) -> Result<Self> {
        let mut feats = Vec::with_capacity(id_inputs.len());
        let mut cls = Vec::with_capacity(id_inputs.len());
        for (x, l) in id_inputs.iter().zip(id_labels) {
            feats.push(head.logits_and_features(x)?.1);
            cls.push(
                head.class_index(l)
                    .ok_or_else(|| Error::invalid(format!("unknown class {l:?}")))?,
            );
        }
        let stats = MahalanobisStats::fit(&feats, &cls, head.classes.len(), MahalanobisStats::DEFAULT_RIDGE)?;
        Ok(ScalarBaselines { head, stats: Some(stats) })
    }

    pub fn scores(&self, x: &[f64]) -> Result<BaselineScores> {
        let stats = self
            .stats
            .as_ref()
            .ok_or_else(|| Error::invalid("mahalanobis statistics are not fitted"))?;
        let (logits, feats) = self.head.logits_and_features(x)?;
        let (msp, max_logit, energy) = logit_scores(&logits);
        Ok(BaselineScores {
            msp,
            max_logit,
            energy,
            mahalanobis: -stats.min_distance(&feats)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    In,
    Out,
}

/// Declares out-of-distribution iff `score < tau`.
pub fn threshold_decide(score: f64, tau: f64) -> Result<Decision> {
    if !score.is_finite() {
        return Err(Error::NonFinite(format!("score {score} cannot be thresholded")));
    }
    Ok(if score < tau { Decision::Out } else { Decision::In })
}

/// `sample_id,score` CSV.
pub fn write_scores_csv(path: &Path, ids: &[u64], scores: &[f64]) -> Result<()> {
    check_dim("score ids", scores.len(), ids.len())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "score"])?;
    for (id, s) in ids.iter().zip(scores) {
        w.write_record([id.to_string(), s.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("csv flush failed: {e}")))?;
    write_atomic(path, &bytes)
}

pub fn read_scores_csv(path: &Path) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut scores = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::data(format!("{}: malformed row {}", path.display(), i + 1));
        ids.push(rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?);
        scores.push(rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?);
    }
    Ok((ids, scores))
}
