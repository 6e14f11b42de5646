//! Leaky integrate-and-fire network and its clean / perturbed forward runs.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Membrane dynamics shared by every layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifParams {
    /// Membrane time constant in simulation ticks.
    pub tau_mem: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    /// Simulation window length T.
    pub t_steps: usize,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_mem: 20.0,
            v_threshold: 1.0,
            v_reset: 0.0,
            t_steps: 20,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_mem > 0.0) {
            return Err(Error::Config(format!("tau_mem must be positive, got {}", self.tau_mem)));
        }
        if !(self.v_threshold > self.v_reset) {
            return Err(Error::Config(format!(
                "v_threshold ({}) must exceed v_reset ({})",
                self.v_threshold, self.v_reset
            )));
        }
        if self.t_steps == 0 {
            return Err(Error::Config("t_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-tick retention factor `1 - 1/tau`.
    pub fn decay(&self) -> f64 {
        1.0 - 1.0 / self.tau_mem
    }
}

/// Fully connected spiking network. `weights[l]` maps layer `l` to layer `l + 1`
/// and has shape `layer_sizes[l + 1] × layer_sizes[l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    lif: LifParams,
}

impl Network {
    pub fn new(layer_sizes: Vec<usize>, weights: Vec<Matrix>, lif: LifParams) -> Result<Self> {
        lif.validate()?;
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least two layer sizes".into()));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if weights.len() != layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                layer_sizes.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.shape() != (layer_sizes[l + 1], layer_sizes[l]) {
                return Err(Error::Config(format!(
                    "weights[{l}] has shape {:?}, expected {:?}",
                    w.shape(),
                    (layer_sizes[l + 1], layer_sizes[l])
                )));
            }
            if !w.is_finite() {
                return Err(Error::NumericBlowup { layer: l + 1 });
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
            lif,
        })
    }

    /// Glorot-uniform initialisation scaled by `gain`.
    pub fn initialize(layer_sizes: Vec<usize>, lif: LifParams, gain: f64, rng: &mut Rng) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("a network needs at least two layer sizes".into()));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| bound * (2.0 * rng.uniform() - 1.0))
                    .collect();
                Matrix::from_vec(fan_out, fan_in, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layer_sizes, weights, lif)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers L.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn lif(&self) -> &LifParams {
        &self.lif
    }
}

/// Rate-coded input spike train: indices of the input neurons that fire at
/// each tick.
#[derive(Clone, Debug, PartialEq)]
pub struct InputRaster {
    pub active: Vec<Vec<usize>>,
}

/// Draws a Bernoulli spike train from firing probabilities.
pub fn encode_input(rates: &[f64], t_steps: usize, rng: &mut Rng) -> InputRaster {
    let active = (0..t_steps)
        .map(|_| {
            rates
                .iter()
                .enumerate()
                .filter_map(|(i, &p)| rng.bernoulli(p).then_some(i))
                .collect()
        })
        .collect();
    InputRaster { active }
}

/// Membrane-potential perturbation: layer `l` (1-based) receives
/// `sigma * xi[l - 1][i]` at every tick.
#[derive(Clone, Copy, Debug)]
pub struct Perturbation<'a> {
    pub sigma: f64,
    pub xi: &'a [Vec<f64>],
}

/// Result of one forward simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardRun {
    /// `rates[0]` is the input firing probability vector; `rates[l]` is the
    /// mean spikes-per-tick of layer `l`.
    pub rates: Vec<Vec<f64>>,
    /// Spike counts of layers `1..=L` over the window.
    pub spike_counts: Vec<Vec<u32>>,
}

impl ForwardRun {
    pub fn output_rates(&self) -> &[f64] {
        self.rates.last().unwrap()
    }
}

/// Simulates `net` on a fixed input raster.
pub fn simulate(
    net: &Network,
    input_rates: &[f64],
    raster: &InputRaster,
    perturbation: Option<Perturbation<'_>>,
) -> Result<ForwardRun> {
    if input_rates.len() != net.input_dim() {
        return Err(Error::Config(format!(
            "input of length {} for a network with {} inputs",
            input_rates.len(),
            net.input_dim()
        )));
    }
    if let Some(p) = &perturbation {
        if p.xi.len() != net.depth()
            || p.xi.iter().zip(&net.layer_sizes[1..]).any(|(x, &n)| x.len() != n)
        {
            return Err(Error::Config("perturbation does not match layer sizes".into()));
        }
    }
    let lif = net.lif;
    let decay = lif.decay();
    let t_steps = raster.active.len();

    let drive: Vec<Vec<f64>> = net.layer_sizes[1..]
        .iter()
        .enumerate()
        .map(|(l, &n)| match &perturbation {
            Some(p) => p.xi[l].iter().map(|x| p.sigma * x).collect(),
            None => vec![0.0; n],
        })
        .collect();
    let mut potentials: Vec<Vec<f64>> = net.layer_sizes[1..]
        .iter()
        .map(|&n| vec![lif.v_reset; n])
        .collect();
    let mut counts: Vec<Vec<u32>> = net.layer_sizes[1..].iter().map(|&n| vec![0; n]).collect();
    let mut spikes: Vec<usize> = Vec::new();

    for active in &raster.active {
        spikes.clear();
        spikes.extend_from_slice(active);
        for (l, w) in net.weights.iter().enumerate() {
            let v = &mut potentials[l];
            let mut fired = Vec::new();
            for (i, vi) in v.iter_mut().enumerate() {
                let row = w.row(i);
                let input: f64 = spikes.iter().map(|&j| row[j]).sum();
                *vi = *vi * decay + input + drive[l][i];
                if !vi.is_finite() {
                    return Err(Error::NumericBlowup { layer: l + 1 });
                }
                if *vi >= lif.v_threshold {
                    *vi = lif.v_reset;
                    fired.push(i);
                    counts[l][i] += 1;
                }
            }
            spikes = fired;
        }
    }

    let mut rates = Vec::with_capacity(net.depth() + 1);
    rates.push(input_rates.to_vec());
    let denom = t_steps.max(1) as f64;
    rates.extend(
        counts
            .iter()
            .map(|c| c.iter().map(|&k| k as f64 / denom).collect::<Vec<_>>()),
    );
    Ok(ForwardRun {
        rates,
        spike_counts: counts,
    })
}

/// Unperturbed run with input spikes drawn from `rng`.
pub fn forward_clean(net: &Network, input_rates: &[f64], rng: &mut Rng) -> Result<ForwardRun> {
    let raster = encode_input(input_rates, net.lif.t_steps, rng);
    simulate(net, input_rates, &raster, None)
}

/// Perturbed run. Given an `rng` in the same state as the clean run's, the
/// input spike train is identical and only the perturbation differs.
pub fn forward_perturbed(
    net: &Network,
    input_rates: &[f64],
    sigma: f64,
    xi: &[Vec<f64>],
    rng: &mut Rng,
) -> Result<ForwardRun> {
    let raster = encode_input(input_rates, net.lif.t_steps, rng);
    simulate(net, input_rates, &raster, Some(Perturbation { sigma, xi }))
}

/// Loss on output firing rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error against the target vector.
    #[default]
    Mse,
    /// Cross-entropy of `softmax(rates)` against a one-hot target.
    SoftmaxCrossEntropy,
}

pub fn loss(kind: LossKind, output_rates: &[f64], target: &[f64]) -> Result<f64> {
    if output_rates.len() != target.len() {
        return Err(Error::Config(format!(
            "{} output rates against a target of length {}",
            output_rates.len(),
            target.len()
        )));
    }
    let n = output_rates.len() as f64;
    Ok(match kind {
        LossKind::Mse => {
            output_rates
                .iter()
                .zip(target)
                .map(|(r, t)| (r - t).powi(2))
                .sum::<f64>()
                / n
        }
        LossKind::SoftmaxCrossEntropy => {
            let max = output_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + output_rates.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
            target
                .iter()
                .zip(output_rates)
                .map(|(t, r)| t * (log_z - r))
                .sum()
        }
    })
}

pub fn one_hot(len: usize, class: usize) -> Result<Vec<f64>> {
    if class >= len {
        return Err(Error::Config(format!("class {class} out of range for {len} outputs")));
    }
    let mut v = vec![0.0; len];
    v[class] = 1.0;
    Ok(v)
}

/// MSE loss against the one-hot encoding of `target`.
pub fn class_loss(output_rates: &[f64], target: usize) -> Result<f64> {
    loss(LossKind::Mse, output_rates, &one_hot(output_rates.len(), target)?)
}

/// Index of the largest rate; ties go to the lowest index.
pub fn predict(output_rates: &[f64]) -> usize {
    let mut best = 0;
    for (i, &r) in output_rates.iter().enumerate() {
        if r > output_rates[best] {
            best = i;
        }
    }
    best
}

/// Which layers receive membrane perturbations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PerturbScope {
    #[default]
    AllLayers,
    HiddenOnly,
}

/// Everything one learning trial produces: both runs, both losses, and the
/// perturbation that separated them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub clean: ForwardRun,
    pub perturbed: ForwardRun,
    pub clean_loss: f64,
    pub perturbed_loss: f64,
    /// `perturbed_loss - clean_loss`.
    pub td_error: f64,
    /// Unit-variance draws, one vector per layer `1..=L`.
    pub xi: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl TrialRecord {
    /// Clean-run firing rates, `clean_rates()[0]` being the input.
    pub fn clean_rates(&self) -> &[Vec<f64>] {
        &self.clean.rates
    }
}

/// Runs the clean and perturbed passes of one sample on a shared input raster.
///
/// Draw order from `rng`: the input raster, then `xi` layer by layer.
pub fn run_trial(
    net: &Network,
    input_rates: &[f64],
    target: &[f64],
    loss_kind: LossKind,
    sigma: f64,
    scope: PerturbScope,
    rng: &mut Rng,
) -> Result<TrialRecord> {
    let raster = encode_input(input_rates, net.lif.t_steps, rng);
    let depth = net.depth();
    let xi: Vec<Vec<f64>> = net.layer_sizes[1..]
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            if scope == PerturbScope::HiddenOnly && l + 1 == depth {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.normal()).collect()
            }
        })
        .collect();
    let clean = simulate(net, input_rates, &raster, None)?;
    let perturbed = simulate(net, input_rates, &raster, Some(Perturbation { sigma, xi: &xi }))?;
    let clean_loss = loss(loss_kind, clean.output_rates(), target)?;
    let perturbed_loss = loss(loss_kind, perturbed.output_rates(), target)?;
    Ok(TrialRecord {
        clean,
        perturbed,
        clean_loss,
        perturbed_loss,
        td_error: perturbed_loss - clean_loss,
        xi,
        sigma,
    })
}
