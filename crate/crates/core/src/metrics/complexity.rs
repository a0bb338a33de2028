use crate::diffusion::DenoiserModel;
use crate::numerics::{Activation, DenseNet, RngState};
use crate::{Error, Result};

/// Sign bits (`pre > 0`) of every pre-activation that feeds a
/// non-identity activation, concatenated layer by layer.
pub fn sign_pattern(net: &DenseNet, input: &[f64]) -> Result<Vec<bool>> {
    let fwd = net.forward(input)?;
    let mut bits = Vec::new();
    for (layer, pre) in net.layers().iter().zip(&fwd.pre) {
        if layer.activation != Activation::Identity {
            bits.extend(pre.iter().map(|&z| z > 0.0));
        }
    }
    Ok(bits)
}

/// Mean pairwise normalized Hamming distance between the activation sign
/// patterns of `k` perturbed copies `input + r * eps_j`. Only the first
/// `perturbed_len` coordinates are perturbed (conditioning inputs such as a
/// timestep embedding stay fixed). Perturbations are drawn in order
/// `eps_0, eps_1, ...`, each as `perturbed_len` standard normals.
pub fn local_complexity_net(
    net: &DenseNet,
    input: &[f64],
    perturbed_len: usize,
    k: usize,
    r: f64,
    rng: &mut RngState,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("local complexity needs at least 2 draws"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid("local complexity radius must be positive"));
    }
    if perturbed_len > input.len() {
        return Err(Error::invalid("perturbed span exceeds the input"));
    }
    let mut patterns = Vec::with_capacity(k);
    let mut x = input.to_vec();
    for _ in 0..k {
        for (i, v) in x.iter_mut().take(perturbed_len).enumerate() {
            *v = input[i] + r * rng.gaussian();
        }
        patterns.push(sign_pattern(net, &x)?);
    }
    let len = patterns[0].len();
    if len == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            let diff = patterns[i]
                .iter()
                .zip(&patterns[j])
                .filter(|(a, b)| a != b)
                .count();
            total += diff as f64 / len as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Local complexity of the denoiser around `x_t` at timestep `t`.
pub fn local_complexity(
    model: &DenoiserModel,
    x_t: &[f64],
    t: usize,
    k: usize,
    r: f64,
    rng: &mut RngState,
) -> Result<f64> {
    let input = model.net_input(x_t, t)?;
    local_complexity_net(model.net(), &input, x_t.len(), k, r, rng)
}
