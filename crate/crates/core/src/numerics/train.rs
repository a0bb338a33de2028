use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients, RngState};
use crate::error::check_dim;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// `epochs == 0` is accepted and means "return the initial network".
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if let OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return Err(Error::config("adam needs beta1, beta2 in [0,1) and epsilon > 0"));
            }
        }
        Ok(())
    }
}

/// First/second moment buffers for Adam; plain SGD keeps none.
#[derive(Debug, Clone)]
pub struct AdamState {
    kind: OptimizerKind,
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl AdamState {
    pub fn new(net: &DenseNet, kind: OptimizerKind) -> Self {
        AdamState {
            kind,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            step: 0,
        }
    }

    /// Applies one update with already-averaged gradients.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients, lr: f64) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                        *w -= lr * gw;
                    }
                    for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                        *b -= lr * gb;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p[i] -= lr * mh / (vh.sqrt() + epsilon);
                    }
                };
                for (idx, layer) in net.layers_mut().iter_mut().enumerate() {
                    let g = &grads.layers[idx];
                    let m = &mut self.m.layers[idx];
                    let v = &mut self.v.layers[idx];
                    update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
                    update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Squared error summed over outputs, averaged over samples.
    Mse,
    /// Softmax cross-entropy against class indices.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<Vec<f64>>),
    Classes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: DenseNet,
    /// Mean per-sample loss of each epoch.
    pub loss_curve: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss of one prediction and its gradient with respect to the output.
fn loss_and_grad(loss: Loss, output: &[f64], target: TargetRef<'_>) -> (f64, Vec<f64>) {
    match (loss, target) {
        (Loss::Mse, TargetRef::Vector(t)) => {
            let mut l = 0.0;
            let g = output
                .iter()
                .zip(t)
                .map(|(y, t)| {
                    let r = y - t;
                    l += r * r;
                    2.0 * r
                })
                .collect();
            (l, g)
        }
        (Loss::CrossEntropy, TargetRef::Class(c)) => {
            let mut p = softmax(output);
            let l = -p[c].max(f64::MIN_POSITIVE).ln();
            p[c] -= 1.0;
            (l, p)
        }
        _ => unreachable!("targets validated against loss"),
    }
}

#[derive(Clone, Copy)]
enum TargetRef<'a> {
    Vector(&'a [f64]),
    Class(usize),
}

fn validate_dataset(net: &DenseNet, data: &Dataset, loss: Loss) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for x in &data.inputs {
        check_dim("training input", net.input_dim(), x.len())?;
    }
    match (&data.targets, loss) {
        (Targets::Regression(t), Loss::Mse) => {
            check_dim("regression targets", data.len(), t.len())?;
            for y in t {
                check_dim("regression target", net.output_dim(), y.len())?;
            }
        }
        (Targets::Classes(c), Loss::CrossEntropy) => {
            check_dim("class targets", data.len(), c.len())?;
            if let Some(&bad) = c.iter().find(|&&c| c >= net.output_dim()) {
                return Err(Error::invalid(format!(
                    "class label {bad} out of range for {} outputs",
                    net.output_dim()
                )));
            }
        }
        _ => return Err(Error::invalid("targets do not match the chosen loss")),
    }
    Ok(())
}

/// Minibatch training with a seeded per-epoch shuffle. Gradients within a
/// batch are summed in shuffle order, so equal configs give bit-identical
/// weights.
pub fn train(mut net: DenseNet, data: &Dataset, loss: Loss, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    validate_dataset(&net, data, loss)?;
    let mut rng = RngState::with_stream(cfg.seed, 0x7472_6169_6e);
    let mut opt = AdamState::new(&net, cfg.optimizer);
    let mut grads = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            for &i in batch {
                let fwd = net.forward(&data.inputs[i])?;
                let target = match &data.targets {
                    Targets::Regression(t) => TargetRef::Vector(&t[i]),
                    Targets::Classes(c) => TargetRef::Class(c[i]),
                };
                let (l, g) = loss_and_grad(loss, &fwd.output, target);
                total += l;
                net.backward_into(&fwd, &g, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut net, &grads, cfg.learning_rate);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(non_finite_loss(epoch, mean, cfg.learning_rate));
        }
        curve.push(mean);
    }
    Ok(TrainOutcome {
        net,
        loss_curve: curve,
    })
}

pub(crate) fn non_finite_loss(epoch: usize, value: f64, lr: f64) -> Error {
    Error::NonFinite(format!(
        "training loss became {value} in epoch {epoch}; the run diverged, \
         try a smaller learning_rate than {lr}"
    ))
}
