//! Online training loop shared by every experiment.

use crate::data::{Dataset, Readout, Sample};
use crate::error::{Error, Result};
use crate::learning::{apply_update, np_factors, project_onto_basis, Delta, RuleKind, UpdateReport, UpdateRule};
use crate::numerics::{Matrix, Rng};
use crate::projector::{LayerProjector, ProjectorParams};
use crate::snn::{forward_clean, loss, LossKind, Network, PerturbScope};

/// Substream domains; see [`crate::numerics::Rng::substream`].
pub(crate) mod domain {
    pub const TRIAL: u64 = 1;
    pub const OBSERVE: u64 = 2;
    pub const REFRESH: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
}

/// Which forward run supplies the input-side rates of an update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RateSource {
    #[default]
    Clean,
    Perturbed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub rule: UpdateRule,
    pub loss: LossKind,
    pub scope: PerturbScope,
    pub rate_source: RateSource,
    /// Samples averaged per applied update; 1 is plain online learning.
    pub batch_size: usize,
    pub projector: ProjectorParams,
    pub seed: u64,
}

/// What one training sample did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub clean_loss: f64,
    pub td_error: f64,
    /// Present when this sample completed an update.
    pub report: Option<UpdateReport>,
    /// Directions removed from each layer's update (`s` for LOCO, `n - k` for
    /// rank-constrained, 0 otherwise).
    pub removed_ranks: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub(super) struct BatchAccumulator {
    pub(super) sums: Vec<Matrix>,
    pub(super) pre_norms: Vec<f64>,
    pub(super) td_sum: f64,
    pub(super) count: usize,
}

/// Network plus all learning state needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub(super) net: Network,
    pub(super) settings: TrainSettings,
    /// One per weight layer for LOCO and rank-constrained rules, else empty.
    pub(super) projectors: Vec<LayerProjector>,
    /// Principal bases used by the rank-constrained rule.
    pub(super) bases: Vec<Option<Matrix>>,
    pub(super) samples_seen: u64,
    pub(super) updates: u64,
    pub(super) batch: Option<BatchAccumulator>,
}

impl Trainer {
    pub fn new(net: Network, settings: TrainSettings) -> Result<Self> {
        settings.rule.validate()?;
        settings.projector.validate()?;
        if settings.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let projectors = match settings.rule.kind {
            RuleKind::Np => Vec::new(),
            RuleKind::Loco | RuleKind::RankConstrained { .. } => net.layer_sizes()[..net.depth()]
                .iter()
                .map(|&n| LayerProjector::new(n, settings.projector))
                .collect(),
        };
        let bases = vec![None; net.depth()];
        Ok(Self {
            net,
            settings,
            projectors,
            bases,
            samples_seen: 0,
            updates: 0,
            batch: None,
        })
    }

    /// Fresh network initialised from the `INIT` substream of `seed`.
    pub fn init_network(layer_sizes: Vec<usize>, lif: crate::snn::LifParams, gain: f64, seed: u64) -> Result<Network> {
        Network::initialize(layer_sizes, lif, gain, &mut Rng::substream(seed, &[domain::INIT]))
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    pub fn projectors(&self) -> &[LayerProjector] {
        &self.projectors
    }

    pub fn bases(&self) -> &[Option<Matrix>] {
        &self.bases
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Swaps the update rule, keeping weights and projector state. Used by the
    /// learning-rate sweep.
    pub fn set_eta(&mut self, eta: f64) -> Result<()> {
        let rule = UpdateRule { eta, ..self.settings.rule };
        rule.validate()?;
        self.settings.rule = rule;
        Ok(())
    }

    /// Runs one learning trial on `sample` and, when a batch completes,
    /// applies the update.
    pub fn step(&mut self, sample: &Sample, readout: &Readout) -> Result<StepOutcome> {
        let target = readout.target(sample.label)?;
        let mut rng = Rng::substream(self.settings.seed, &[domain::TRIAL, self.samples_seen]);
        let trial = crate::snn::run_trial(
            &self.net,
            &sample.rates,
            &target,
            self.settings.loss,
            self.settings.rule.sigma,
            self.settings.scope,
            &mut rng,
        )?;
        let use_perturbed = self.settings.rate_source == RateSource::Perturbed;

        let depth = self.net.depth();
        let mut deltas = Vec::with_capacity(depth);
        let mut pre_norms = Vec::with_capacity(depth);
        let mut removed = Vec::with_capacity(depth);
        for layer in 1..=depth {
            let raw = np_factors(&self.settings.rule, &trial, layer, use_perturbed)?;
            pre_norms.push(raw.frobenius_norm());
            let (delta, s) = match self.settings.rule.kind {
                RuleKind::Np => (raw, 0),
                RuleKind::Loco => {
                    let projection = self.projectors[layer - 1].build_projection(&raw.pre);
                    let s = projection.removed_rank();
                    (raw.with_pre(projection.apply(&raw.pre)), s)
                }
                RuleKind::RankConstrained { .. } => match &self.bases[layer - 1] {
                    Some(basis) => {
                        let s = basis.rows() - basis.cols();
                        (raw.with_pre(project_onto_basis(&raw.pre, basis)?), s)
                    }
                    None => (raw, 0),
                },
            };
            deltas.push(delta);
            removed.push(s);
        }

        self.samples_seen += 1;
        let report = self.accumulate(deltas, pre_norms, trial.td_error)?;

        if !self.projectors.is_empty() {
            let rates = if use_perturbed { &trial.perturbed.rates } else { &trial.clean.rates };
            for (l, projector) in self.projectors.iter_mut().enumerate() {
                let mut orng = Rng::substream(self.settings.seed, &[domain::OBSERVE, l as u64, self.samples_seen]);
                projector.observe(&rates[l], &mut orng)?;
            }
        }
        if report.is_some() && self.updates % self.settings.projector.refresh_period as u64 == 0 {
            self.refresh()?;
        }

        Ok(StepOutcome {
            clean_loss: trial.clean_loss,
            td_error: trial.td_error,
            report,
            removed_ranks: removed,
        })
    }

    fn accumulate(&mut self, deltas: Vec<crate::learning::RankOne>, pre_norms: Vec<f64>, td: f64) -> Result<Option<UpdateReport>> {
        if self.settings.batch_size == 1 {
            let deltas: Vec<Delta> = deltas.into_iter().map(Delta::Outer).collect();
            let report = apply_update(&mut self.net, &deltas, Some(pre_norms), td)?;
            self.updates += 1;
            return Ok(Some(report));
        }
        let acc = self.batch.get_or_insert_with(|| BatchAccumulator {
            sums: self.net.weights().iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            pre_norms: vec![0.0; deltas.len()],
            td_sum: 0.0,
            count: 0,
        });
        for ((sum, d), (acc_norm, n)) in acc.sums.iter_mut().zip(&deltas).zip(acc.pre_norms.iter_mut().zip(&pre_norms)) {
            sum.add_outer(1.0, &d.post, &d.pre)?;
            *acc_norm += n;
        }
        acc.td_sum += td;
        acc.count += 1;
        if acc.count < self.settings.batch_size {
            return Ok(None);
        }
        let acc = self.batch.take().expect("batch present");
        let k = 1.0 / acc.count as f64;
        let deltas: Vec<Delta> = acc.sums.iter().map(|m| Delta::Dense(m.scale(k))).collect();
        let pre: Vec<f64> = acc.pre_norms.iter().map(|n| n * k).collect();
        let report = apply_update(&mut self.net, &deltas, Some(pre), acc.td_sum * k)?;
        self.updates += 1;
        Ok(Some(report))
    }

    /// Recomputes cluster centres (LOCO) or principal bases (rank rule).
    pub fn refresh(&mut self) -> Result<()> {
        let seed = self.settings.seed;
        for (l, projector) in self.projectors.iter_mut().enumerate() {
            match self.settings.rule.kind {
                RuleKind::Loco => {
                    let mut rng = Rng::substream(seed, &[domain::REFRESH, l as u64, projector.refreshes()]);
                    projector.refresh(&mut rng)?;
                }
                RuleKind::RankConstrained { k } => {
                    if k >= projector.dim() || projector.buffer_fill() < 2 {
                        continue;
                    }
                    let pcs = projector.principal_basis(k);
                    if pcs.count() > 0 {
                        self.bases[l] = Some(pcs.basis);
                    }
                }
                RuleKind::Np => {}
            }
        }
        Ok(())
    }

    /// Clean-run accuracy and loss on `ds`; sample `i` uses its own
    /// evaluation substream so results do not depend on training history.
    pub fn evaluate(&self, ds: &Dataset) -> Result<Evaluation> {
        evaluate(&self.net, ds, self.settings.loss, self.settings.seed)
    }
}

pub fn evaluate(net: &Network, ds: &Dataset, loss_kind: LossKind, seed: u64) -> Result<Evaluation> {
    if ds.is_empty() {
        return Ok(Evaluation { accuracy: 0.0, mean_loss: 0.0 });
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for (i, s) in ds.samples.iter().enumerate() {
        let mut rng = Rng::substream(seed, &[domain::EVAL, i as u64]);
        let run = forward_clean(net, &s.rates, &mut rng)?;
        let out = run.output_rates();
        if ds.readout.decode(out) == s.label {
            correct += 1;
        }
        total_loss += loss(loss_kind, out, &ds.readout.target(s.label)?)?;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        mean_loss: total_loss / ds.len() as f64,
    })
}

/// Seeded permutation of `0..n` for epoch `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = Rng::substream(seed, &[domain::SHUFFLE, epoch]);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order
}
