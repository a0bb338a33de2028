//! Variance-preserving diffusion: the linear beta schedule, the forward
//! corruption `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`, a
//! noise-prediction denoiser conditioned on the timestep, and the two
//! reconstruction routes (one-step posterior mean and ancestral sampling).
//!
//! Timesteps are 1-based: `t = 1` is the least noisy level and `t = T` the
//! most noisy one.

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::io::Provenance;
use crate::numerics::{
    non_finite_loss_pub, Activation, AdamState, DenseNet, Gradients, NetDocument, RngState,
    TrainConfig,
};
use crate::{Error, Result};

/// Width of the sinusoidal timestep embedding appended to the denoiser input.
pub const TIME_EMBED_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_min: f64,
    beta_max: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            steps: 200,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

impl NoiseSchedule {
    /// Betas linear from `beta_min` to `beta_max` inclusive; `abar` is the
    /// running product of `1 - beta`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::config(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(NoiseSchedule {
            beta_min,
            beta_max,
            betas,
            alpha_bars,
        })
    }

    pub fn from_params(p: ScheduleParams) -> Result<Self> {
        Self::linear(p.steps, p.beta_min, p.beta_max)
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            steps: self.steps(),
            beta_min: self.beta_min,
            beta_max: self.beta_max,
        }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!(
                "timestep {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `abar_t`; `alpha_bar(0)` is 1 (clean data).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Noise level `sigma_t = sqrt(1 - abar_t)`.
    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t)).sqrt()
    }
}

pub fn forward_noise(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    check_dim("noise vector", x0.len(), eps.len())?;
    let a = sched.alpha_bar(t).sqrt();
    let s = sched.sigma(t);
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect())
}

/// Anything that predicts the noise component of `x_t`.
pub trait NoisePredictor {
    fn schedule(&self) -> &NoiseSchedule;
    fn predict_noise(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// Tweedie estimate `x0_hat = (x_t - sqrt(1 - abar) eps_hat) / sqrt(abar)`.
pub fn denoise_posterior_mean<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    let sched = model.schedule();
    sched.check_step(t)?;
    let eps = model.predict_noise(x_t, t)?;
    check_dim("predicted noise", x_t.len(), eps.len())?;
    Ok(tweedie(sched, x_t, &eps, t))
}

fn tweedie(sched: &NoiseSchedule, x_t: &[f64], eps: &[f64], t: usize) -> Vec<f64> {
    let a = sched.alpha_bar(t).sqrt();
    let s = sched.sigma(t);
    x_t.iter().zip(eps).map(|(x, e)| (x - s * e) / a).collect()
}

/// Timesteps visited by a reverse pass of `n_steps` from `t`:
/// `t - floor(i t / n)` for `i = 0..n`, strictly decreasing and ending at or
/// above 1.
pub fn reverse_grid(t: usize, n_steps: usize) -> Vec<usize> {
    (0..n_steps).map(|i| t - i * t / n_steps).collect()
}

/// Ancestral DDPM reconstruction from `x_t` down to a clean estimate over an
/// evenly spaced sub-grid. Each step forms the posterior-mean estimate of
/// `x_0`, then samples `x_s ~ q(x_s | x_tau, x0_hat)`; the final step returns
/// the estimate itself, so `n_steps == 1` is the one-step posterior mean.
pub fn reverse_reconstruct<P: NoisePredictor + ?Sized>(
    model: &P,
    x_t: &[f64],
    t: usize,
    n_steps: usize,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    let sched = model.schedule();
    sched.check_step(t)?;
    if n_steps == 0 || n_steps > t {
        return Err(Error::invalid(format!(
            "n_steps must be in 1..={t}, got {n_steps}"
        )));
    }
    let grid = reverse_grid(t, n_steps);
    let mut x = x_t.to_vec();
    for (i, &tau) in grid.iter().enumerate() {
        let eps = model.predict_noise(&x, tau)?;
        check_dim("predicted noise", x.len(), eps.len())?;
        let x0_hat = tweedie(sched, &x, &eps, tau);
        let Some(&s) = grid.get(i + 1) else {
            return Ok(x0_hat);
        };
        let ab_t = sched.alpha_bar(tau);
        let ab_s = sched.alpha_bar(s);
        let alpha_ts = ab_t / ab_s;
        let beta_ts = 1.0 - alpha_ts;
        let c0 = ab_s.sqrt() * beta_ts / (1.0 - ab_t);
        let ct = alpha_ts.sqrt() * (1.0 - ab_s) / (1.0 - ab_t);
        let std = ((1.0 - ab_s) / (1.0 - ab_t) * beta_ts).sqrt();
        for (xv, x0) in x.iter_mut().zip(&x0_hat) {
            *xv = c0 * x0 + ct * *xv + std * rng.gaussian();
        }
    }
    unreachable!("grid is non-empty")
}

/// `[sin(pi (j+1) u / 2), cos(pi (j+1) u / 2)]` for `j = 0..8`, `u = t / T`.
pub fn timestep_embedding(t: usize, steps: usize) -> [f64; TIME_EMBED_DIM] {
    let u = t as f64 / steps as f64;
    let mut out = [0.0; TIME_EMBED_DIM];
    for j in 0..TIME_EMBED_DIM / 2 {
        let arg = std::f64::consts::FRAC_PI_2 * (j + 1) as f64 * u;
        out[2 * j] = arg.sin();
        out[2 * j + 1] = arg.cos();
    }
    out
}

/// Global affine map between data space and the space the denoiser works in:
/// `model = (data - shift) / scale`. A single scalar pair keeps cross-feature
/// orderings intact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataNormalizer {
    pub shift: f64,
    pub scale: f64,
}

impl DataNormalizer {
    /// Pixels in [0, 1] mapped to [-1, 1].
    pub const UNIT_INTERVAL: DataNormalizer = DataNormalizer {
        shift: 0.5,
        scale: 0.5,
    };

    pub const IDENTITY: DataNormalizer = DataNormalizer {
        shift: 0.0,
        scale: 1.0,
    };

    /// Mean and standard deviation pooled over every coordinate.
    pub fn fit_global(data: &[Vec<f64>]) -> Result<Self> {
        let n: usize = data.iter().map(Vec::len).sum();
        if n < 2 {
            return Err(Error::invalid("need at least two values to fit a normalizer"));
        }
        let mean = data.iter().flatten().sum::<f64>() / n as f64;
        let var = data.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Ok(DataNormalizer {
            shift: mean,
            scale: var.sqrt().max(1e-12),
        })
    }

    pub fn to_model(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.shift) / self.scale).collect()
    }

    pub fn to_data(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.scale + self.shift).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub schedule: ScheduleParams,
    pub hidden: Vec<usize>,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            schedule: ScheduleParams::default(),
            hidden: vec![256, 256],
        }
    }
}

/// One time-conditioned network standing in for the whole family of
/// per-level denoisers. Input is `x_t` (model space) followed by the
/// timestep embedding; output is the predicted noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    net: DenseNet,
    schedule: NoiseSchedule,
    data_shape: Vec<usize>,
    normalizer: DataNormalizer,
}

impl DenoiserModel {
    pub fn new(
        net: DenseNet,
        schedule: NoiseSchedule,
        data_shape: Vec<usize>,
        normalizer: DataNormalizer,
    ) -> Result<Self> {
        let dim: usize = data_shape.iter().product();
        if dim == 0 {
            return Err(Error::invalid("data shape must be non-empty"));
        }
        check_dim("denoiser input", dim + TIME_EMBED_DIM, net.input_dim())?;
        check_dim("denoiser output", dim, net.output_dim())?;
        Ok(DenoiserModel {
            net,
            schedule,
            data_shape,
            normalizer,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn data_shape(&self) -> &[usize] {
        &self.data_shape
    }

    pub fn data_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn normalizer(&self) -> DataNormalizer {
        self.normalizer
    }

    pub fn net_input(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        self.schedule.check_step(t)?;
        check_dim("denoiser sample", self.data_dim(), x_t.len())?;
        let mut input = Vec::with_capacity(x_t.len() + TIME_EMBED_DIM);
        input.extend_from_slice(x_t);
        input.extend_from_slice(&timestep_embedding(t, self.schedule.steps()));
        Ok(input)
    }

    /// Post-activations of the last hidden layer, used as a learned feature
    /// space for perceptual-style distances.
    pub fn features(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        let fwd = self.net.forward(&self.net_input(x_t, t)?)?;
        Ok(fwd.inputs.last().cloned().unwrap_or_default())
    }

    /// Predicted noise and penultimate features from one forward pass.
    pub fn predict_with_features(&self, x_t: &[f64], t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut fwd = self.net.forward(&self.net_input(x_t, t)?)?;
        let feats = fwd.inputs.pop().unwrap_or_default();
        Ok((fwd.output, feats))
    }

    pub fn to_checkpoint(&self, provenance: Option<Provenance>) -> DenoiserCheckpoint {
        DenoiserCheckpoint {
            format_version: DenoiserCheckpoint::FORMAT_VERSION,
            kind: DenoiserCheckpoint::KIND.to_string(),
            net: self.net.to_document(),
            schedule: self.schedule.params(),
            data_shape: self.data_shape.clone(),
            normalizer: self.normalizer,
            time_embed_dim: TIME_EMBED_DIM,
            provenance,
        }
    }

    pub fn from_checkpoint(ck: &DenoiserCheckpoint) -> Result<Self> {
        if ck.format_version != DenoiserCheckpoint::FORMAT_VERSION || ck.kind != DenoiserCheckpoint::KIND {
            return Err(Error::data(format!(
                "unsupported checkpoint (kind {}, format_version {})",
                ck.kind, ck.format_version
            )));
        }
        check_dim("checkpoint time embedding", TIME_EMBED_DIM, ck.time_embed_dim)?;
        DenoiserModel::new(
            DenseNet::from_document(&ck.net)?,
            NoiseSchedule::from_params(ck.schedule)?,
            ck.data_shape.clone(),
            ck.normalizer,
        )
    }
}

impl NoisePredictor for DenoiserModel {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        self.net.predict(&self.net_input(x_t, t)?)
    }
}

/// Single versioned document holding the network, schedule and data shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserCheckpoint {
    pub format_version: u32,
    pub kind: String,
    pub net: NetDocument,
    pub schedule: ScheduleParams,
    pub data_shape: Vec<usize>,
    pub normalizer: DataNormalizer,
    pub time_embed_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl DenoiserCheckpoint {
    pub const FORMAT_VERSION: u32 = 1;
    pub const KIND: &'static str = "disc-denoiser";
}

#[derive(Debug, Clone)]
pub struct DenoiserTraining {
    pub model: DenoiserModel,
    /// Mean per-sample `|eps - eps_hat|^2` of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Builds a freshly initialized denoiser: silu hidden layers, identity output.
pub fn init_denoiser(
    data_shape: &[usize],
    cfg: &DenoiserConfig,
    normalizer: DataNormalizer,
    seed: u64,
) -> Result<DenoiserModel> {
    let schedule = NoiseSchedule::from_params(cfg.schedule)?;
    let dim: usize = data_shape.iter().product();
    let mut dims = vec![dim + TIME_EMBED_DIM];
    dims.extend(&cfg.hidden);
    dims.push(dim);
    let mut acts = vec![Activation::Silu; cfg.hidden.len()];
    acts.push(Activation::Identity);
    let mut rng = RngState::with_stream(seed, 0x696e_6974);
    let net = DenseNet::glorot(&dims, &acts, &mut rng)?;
    DenoiserModel::new(net, schedule, data_shape.to_vec(), normalizer)
}

/// Trains on the noise-prediction objective with `t ~ U{1..T}` and
/// `eps ~ N(0, I)` drawn afresh for every sample visit. `data` is in data
/// space; it is mapped through `normalizer` before noising.
pub fn train_denoiser(
    data: &[Vec<f64>],
    data_shape: &[usize],
    cfg: &DenoiserConfig,
    normalizer: DataNormalizer,
    train: &TrainConfig,
) -> Result<DenoiserTraining> {
    train.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("denoiser training set is empty"));
    }
    let dim: usize = data_shape.iter().product();
    for x in data {
        check_dim("denoiser training sample", dim, x.len())?;
    }
    let mut model = init_denoiser(data_shape, cfg, normalizer, train.seed)?;
    let steps = model.schedule.steps();
    let clean: Vec<Vec<f64>> = data.iter().map(|x| normalizer.to_model(x)).collect();

    let mut rng = RngState::with_stream(train.seed, 0x6466_6e73);
    let mut opt = AdamState::new(&model.net, train.optimizer);
    let mut grads = Gradients::zeros_like(&model.net);
    let mut order: Vec<usize> = (0..clean.len()).collect();
    let mut curve = Vec::with_capacity(train.epochs);
    let mut input = vec![0.0; dim + TIME_EMBED_DIM];

    for epoch in 0..train.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(train.batch_size) {
            grads.reset();
            for &i in batch {
                let t = 1 + rng.below(steps);
                let eps = rng.gaussian_vec(dim);
                let a = model.schedule.alpha_bar(t).sqrt();
                let s = model.schedule.sigma(t);
                for k in 0..dim {
                    input[k] = a * clean[i][k] + s * eps[k];
                }
                input[dim..].copy_from_slice(&timestep_embedding(t, steps));
                let fwd = model.net.forward(&input)?;
                let mut loss = 0.0;
                let g: Vec<f64> = fwd
                    .output
                    .iter()
                    .zip(&eps)
                    .map(|(p, e)| {
                        let r = p - e;
                        loss += r * r;
                        2.0 * r
                    })
                    .collect();
                total += loss;
                model.net.backward_into(&fwd, &g, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.net, &grads, train.learning_rate);
        }
        let mean = total / clean.len() as f64;
        if !mean.is_finite() {
            return Err(non_finite_loss_pub(epoch, mean, train.learning_rate));
        }
        curve.push(mean);
    }
    Ok(DenoiserTraining {
        model,
        loss_curve: curve,
    })
}

/// Mean noise-prediction loss of `model` on fresh `(t, eps)` draws.
pub fn probe_loss(model: &DenoiserModel, data: &[Vec<f64>], draws_per_sample: usize, seed: u64) -> Result<f64> {
    let mut rng = RngState::with_stream(seed, 0x7072_6f62);
    let steps = model.schedule.steps();
    let mut total = 0.0;
    let mut count = 0usize;
    for x in data {
        let z = model.normalizer.to_model(x);
        for _ in 0..draws_per_sample {
            let t = 1 + rng.below(steps);
            let eps = rng.gaussian_vec(z.len());
            let x_t = forward_noise(&z, t, &eps, &model.schedule)?;
            let pred = model.predict_noise(&x_t, t)?;
            total += pred.iter().zip(&eps).map(|(p, e)| (p - e).powi(2)).sum::<f64>();
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}
