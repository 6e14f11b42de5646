//! Verification machinery built on a smooth sigmoid surrogate of the spiking
//! network: finite-difference gradients, the node-perturbation estimator run
//! on the surrogate, and update-variance measurement.

use crate::error::{Error, Result};
use crate::learning::loco_delta;
use crate::numerics::{Matrix, Rng};

/// Deterministic rate network: `x_l = sigmoid(W_l x_{l-1})`.
#[derive(Clone, Debug)]
pub struct SurrogateNet {
    pub weights: Vec<Matrix>,
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn mse(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / out.len() as f64
}

impl SurrogateNet {
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Shape("surrogate needs at least one layer".into()));
        }
        for pair in weights.windows(2) {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::Shape(format!(
                    "layer {:?} cannot follow {:?}",
                    pair[1].shape(),
                    pair[0].shape()
                )));
            }
        }
        Ok(Self { weights })
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`.
    pub fn random(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape("surrogate needs at least two layer sizes".into()));
        }
        let weights = sizes
            .windows(2)
            .map(|w| {
                let scale = 1.0 / (w[0] as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| rng.normal() * scale).collect();
                Matrix::from_vec(w[1], w[0], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Activations of every layer, input included. `noise[l]` is added to
    /// the pre-activation of layer `l + 1`.
    pub fn forward_with(&self, input: &[f64], noise: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        let mut acts = vec![input.to_vec()];
        for (l, w) in self.weights.iter().enumerate() {
            let mut a = w.matvec(acts.last().unwrap())?;
            if let Some(noise) = noise {
                for (ai, ni) in a.iter_mut().zip(&noise[l]) {
                    *ai += ni;
                }
            }
            acts.push(a.into_iter().map(sigmoid).collect());
        }
        Ok(acts)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with(input, None)?.pop().unwrap())
    }

    pub fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        let out = self.forward(input)?;
        if out.len() != target.len() {
            return Err(Error::Shape(format!("{} outputs against {} targets", out.len(), target.len())));
        }
        Ok(mse(&out, target))
    }

    /// Exact gradient of the MSE loss for every layer via the chain rule.
    pub fn backprop(&self, input: &[f64], target: &[f64]) -> Result<Vec<Matrix>> {
        let acts = self.forward_with(input, None)?;
        let out = acts.last().unwrap();
        let n = out.len() as f64;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(o, t)| 2.0 * (o - t) / n * o * (1.0 - o))
            .collect();
        let mut grads = vec![Matrix::zeros(0, 0); self.depth()];
        for l in (0..self.depth()).rev() {
            grads[l] = Matrix::outer(&delta, &acts[l]);
            if l > 0 {
                let back = self.weights[l].transpose().matvec(&delta)?;
                delta = back
                    .iter()
                    .zip(&acts[l])
                    .map(|(b, x)| b * x * (1.0 - x))
                    .collect();
            }
        }
        Ok(grads)
    }
}

/// Central-difference gradient of the loss w.r.t. the weights of `layer` (1-based).
pub fn fd_gradient(net: &SurrogateNet, input: &[f64], target: &[f64], layer: usize, h: f64) -> Result<Matrix> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    if layer == 0 || layer > net.depth() {
        return Err(Error::Shape(format!("layer {layer} outside 1..={}", net.depth())));
    }
    let mut probe = net.clone();
    let (rows, cols) = net.weights[layer - 1].shape();
    let mut grad = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let w0 = net.weights[layer - 1][(r, c)];
            probe.weights[layer - 1].row_mut(r)[c] = w0 + h;
            let up = probe.loss(input, target)?;
            probe.weights[layer - 1].row_mut(r)[c] = w0 - h;
            let down = probe.loss(input, target)?;
            probe.weights[layer - 1].row_mut(r)[c] = w0;
            grad.row_mut(r)[c] = (up - down) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Trial-averaged node-perturbation update on the surrogate, one matrix per
/// layer, using `td / sigma` scaling and unit learning rate. `td_hook` may
/// replace the measured loss difference.
pub fn mean_np_delta(
    net: &SurrogateNet,
    input: &[f64],
    target: &[f64],
    sigma: f64,
    trials: usize,
    seed: u64,
    td_hook: Option<&dyn Fn(f64) -> f64>,
) -> Result<Vec<Matrix>> {
    if sigma <= 0.0 || trials == 0 {
        return Err(Error::Config("need sigma > 0 and at least one trial".into()));
    }
    let clean = net.forward_with(input, None)?;
    let base = mse(clean.last().unwrap(), target);
    let mut sums: Vec<Matrix> = net.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    for trial in 0..trials {
        let mut rng = Rng::substream(seed, &[trial as u64]);
        let xi: Vec<Vec<f64>> = net
            .weights
            .iter()
            .map(|w| (0..w.rows()).map(|_| rng.normal()).collect())
            .collect();
        let noise: Vec<Vec<f64>> = xi.iter().map(|v| v.iter().map(|x| sigma * x).collect()).collect();
        let perturbed = net.forward_with(input, Some(&noise))?;
        let mut td = mse(perturbed.last().unwrap(), target) - base;
        if let Some(hook) = td_hook {
            td = hook(td);
        }
        for (l, sum) in sums.iter_mut().enumerate() {
            sum.add_outer(-td / sigma, &xi[l], &clean[l])?;
        }
    }
    Ok(sums.iter().map(|s| s.scale(1.0 / (sigma * trials as f64))).collect())
}

fn cosine_flat(a: &[Matrix], b: &[Matrix]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.as_slice().iter().zip(y.as_slice()) {
            ab += p * q;
            aa += p * p;
            bb += q * q;
        }
    }
    if aa == 0.0 || bb == 0.0 {
        f64::NAN
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Cosine between the trial-mean node-perturbation update and the negative
/// finite-difference gradient, over all layers. NaN when either side vanishes.
pub fn np_bias_check(
    net: &SurrogateNet,
    input: &[f64],
    target: &[f64],
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mean = mean_np_delta(net, input, target, sigma, trials, seed, None)?;
    alignment(net, input, target, &mean)
}

/// Cosine between `deltas` and the negative finite-difference gradient.
pub fn alignment(net: &SurrogateNet, input: &[f64], target: &[f64], deltas: &[Matrix]) -> Result<f64> {
    let neg_grad = (1..=net.depth())
        .map(|l| fd_gradient(net, input, target, l, 1e-5).map(|g| g.scale(-1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(cosine_flat(deltas, &neg_grad))
}

/// Trace of the empirical covariance of the vectorised deltas, before and
/// after projecting each through `p`.
pub fn variance_report(deltas: &[Matrix], p: &Matrix) -> Result<(f64, f64)> {
    if deltas.len() < 2 {
        return Err(Error::Config("variance needs at least two deltas".into()));
    }
    let shape = deltas[0].shape();
    if deltas.iter().any(|d| d.shape() != shape) {
        return Err(Error::Shape("deltas differ in shape".into()));
    }
    let projected = deltas.iter().map(|d| loco_delta(d, p)).collect::<Result<Vec<_>>>()?;
    Ok((trace_covariance(deltas), trace_covariance(&projected)))
}

fn trace_covariance(samples: &[Matrix]) -> f64 {
    let n = samples.len() as f64;
    let len = samples[0].as_slice().len();
    let mut mean = vec![0.0; len];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.as_slice()) {
            *m += v / n;
        }
    }
    samples
        .iter()
        .map(|s| s.as_slice().iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0)
}
