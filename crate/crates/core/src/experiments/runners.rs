//! Experiment drivers behind the command-line subcommands. Each writes
//! `config.resolved` and its CSV outputs into the configured output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use crate::data::{class_incremental_stream, load_mnist_dir, load_nettalk, Dataset, Split};
use crate::error::{Error, Result};
use crate::learning::{max_stable_lr, RuleKind, StabilityProbe, StabilityTable};
use crate::snn::Network;

use super::checkpoint;
use super::config::{DatasetKind, ExperimentConfig, Mode, RankSpec};
use super::metrics::{metric_fields, metrics_header, CsvWriter, MetricRow};
use super::trainer::{epoch_order, Evaluation, StepOutcome, TrainSettings, Trainer};

pub struct Datasets {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the configured dataset and applies the subset sizes. NETtalk words
/// are split by index: every fifth sample is held out for testing.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    cfg.check_paths()?;
    let limit = |ds: Dataset, n: usize| if n == 0 { ds } else { ds.truncated(n) };
    let (train, test) = match cfg.dataset {
        DatasetKind::Mnist => (
            load_mnist_dir(&cfg.mnist_dir, Split::Train)?,
            load_mnist_dir(&cfg.mnist_dir, Split::Test)?,
        ),
        DatasetKind::Nettalk => {
            let (all, _) = load_nettalk(&cfg.nettalk_path)?;
            let mut test = all.filtered(|i, _| i % 5 == 0);
            test.split = Split::Test;
            (all.filtered(|i, _| i % 5 != 0), test)
        }
    };
    Ok(Datasets {
        train: limit(train, cfg.train_subset),
        test: limit(test, cfg.test_subset),
    })
}

fn check_layers(layers: &[usize], data: &Datasets) -> Result<()> {
    let (first, last) = (layers[0], *layers.last().unwrap());
    if first != data.train.input_dim || last != data.train.readout.output_dim() {
        return Err(Error::Config(format!(
            "layers {layers:?} do not fit the data: input {} and output {}",
            data.train.input_dim,
            data.train.readout.output_dim()
        )));
    }
    Ok(())
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("config.resolved");
    std::fs::write(&path, cfg.resolved()).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

/// Optional sinks for a training run.
#[derive(Default)]
pub struct Hooks<'a> {
    pub metrics: Option<&'a mut CsvWriter>,
    /// Wall-clock per metric row; kept apart so metrics stay reproducible.
    pub timing: Option<&'a mut CsvWriter>,
    pub on_step: Option<&'a mut dyn FnMut(&StepOutcome)>,
}

pub struct TrainOutcome {
    pub trainer: Trainer,
    pub rows: Vec<MetricRow>,
    pub final_eval: Evaluation,
    /// Layer whose potentials stopped being finite, if the run diverged.
    pub diverged: Option<usize>,
    pub epochs_completed: usize,
}

#[derive(Default)]
struct Interval {
    loss: f64,
    samples: usize,
    norms: Vec<f64>,
    ranks: Vec<f64>,
    updates: usize,
}

impl Interval {
    fn add(&mut self, o: &StepOutcome) {
        self.loss += o.clean_loss;
        self.samples += 1;
        if self.ranks.len() < o.removed_ranks.len() {
            self.ranks.resize(o.removed_ranks.len(), 0.0);
        }
        for (acc, &s) in self.ranks.iter_mut().zip(&o.removed_ranks) {
            *acc += s as f64;
        }
        if let Some(r) = &o.report {
            if self.norms.len() < r.applied_norms.len() {
                self.norms.resize(r.applied_norms.len(), 0.0);
            }
            for (acc, n) in self.norms.iter_mut().zip(&r.applied_norms) {
                *acc += n;
            }
            self.updates += 1;
        }
    }

    fn row(&mut self, epoch: usize, samples_seen: u64, accuracy: f64, layers: usize) -> MetricRow {
        let mean = |v: &[f64], n: usize| -> Vec<f64> {
            (0..layers)
                .map(|l| if n == 0 { 0.0 } else { v.get(l).copied().unwrap_or(0.0) / n as f64 })
                .collect()
        };
        let row = MetricRow {
            epoch,
            samples_seen,
            train_loss: if self.samples == 0 { 0.0 } else { self.loss / self.samples as f64 },
            test_accuracy: accuracy,
            dw_norms: mean(&self.norms, self.updates),
            ranks: mean(&self.ranks, self.samples),
        };
        *self = Interval::default();
        row
    }
}

/// Continues training `trainer` for `epochs` passes over `train`, evaluating
/// on `test` every `eval_every` samples (or at each epoch end when 0).
/// `epoch_offset` shifts the shuffle streams so repeated calls differ.
pub fn train_epochs(
    mut trainer: Trainer,
    train: &Dataset,
    test: &Dataset,
    epochs: usize,
    epoch_offset: usize,
    eval_every: usize,
    hooks: &mut Hooks<'_>,
) -> Result<TrainOutcome> {
    let layers = trainer.network().depth();
    let seed = trainer.settings().seed;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut interval = Interval::default();
    let mut diverged = None;
    let mut epochs_completed = 0;
    let mut last_eval = None;

    let emit = |rows: &mut Vec<MetricRow>, row: MetricRow, hooks: &mut Hooks<'_>| -> Result<()> {
        if let Some(w) = hooks.metrics.as_deref_mut() {
            w.row(&metric_fields(&row))?;
        }
        if let Some(w) = hooks.timing.as_deref_mut() {
            w.row(&[row.samples_seen.to_string(), format!("{:.3}", start.elapsed().as_secs_f64())])?;
        }
        rows.push(row);
        Ok(())
    };

    if epochs == 0 {
        let e = trainer.evaluate(test)?;
        let row = interval.row(0, trainer.samples_seen(), e.accuracy, layers);
        emit(&mut rows, row, hooks)?;
        last_eval = Some(e);
    }

    'outer: for epoch in 0..epochs {
        let order = epoch_order(train.len(), seed, (epoch_offset + epoch) as u64);
        for (i, &idx) in order.iter().enumerate() {
            match trainer.step(&train.samples[idx], &train.readout) {
                Ok(outcome) => {
                    interval.add(&outcome);
                    if let Some(f) = hooks.on_step.as_deref_mut() {
                        f(&outcome);
                    }
                }
                Err(Error::NumericBlowup { layer }) => {
                    warn!("diverged in layer {layer} after {} samples", trainer.samples_seen());
                    diverged = Some(layer);
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
            let last = i + 1 == order.len();
            let periodic = eval_every > 0 && trainer.samples_seen() % eval_every as u64 == 0;
            if periodic || (last && eval_every == 0) || (last && !periodic && epoch + 1 == epochs) {
                let e = trainer.evaluate(test)?;
                info!(
                    "epoch {epoch} samples {} accuracy {:.4}",
                    trainer.samples_seen(),
                    e.accuracy
                );
                let row = interval.row(epoch_offset + epoch, trainer.samples_seen(), e.accuracy, layers);
                emit(&mut rows, row, hooks)?;
                last_eval = Some(e);
            }
        }
        epochs_completed += 1;
    }

    let final_eval = match (diverged, last_eval) {
        (None, Some(e)) => e,
        _ => Evaluation { accuracy: 0.0, mean_loss: f64::NAN },
    };
    Ok(TrainOutcome {
        trainer,
        rows,
        final_eval,
        diverged,
        epochs_completed,
    })
}

fn fresh_trainer(cfg: &ExperimentConfig, layers: Vec<usize>, settings: TrainSettings) -> Result<Trainer> {
    let net = Trainer::init_network(layers, cfg.lif, cfg.init_gain, settings.seed)?;
    Trainer::new(net, settings)
}

fn settings_for(cfg: &ExperimentConfig, kind: RuleKind) -> TrainSettings {
    let mut s = cfg.train_settings();
    s.rule.kind = kind;
    s
}

/// Trains one network from scratch, writing `metrics.csv` and `timing.csv`
/// under `dir` when given.
pub fn train_fresh(
    cfg: &ExperimentConfig,
    layers: Vec<usize>,
    settings: TrainSettings,
    data: &Datasets,
    dir: Option<&Path>,
    on_step: Option<&mut dyn FnMut(&StepOutcome)>,
) -> Result<TrainOutcome> {
    let trainer = fresh_trainer(cfg, layers, settings)?;
    let depth = trainer.network().depth();
    let (mut metrics, mut timing) = match dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            (
                Some(CsvWriter::create(&d.join("metrics.csv"), &metrics_header(depth))?),
                Some(CsvWriter::create(
                    &d.join("timing.csv"),
                    &["samples_seen".to_string(), "wall_time_s".to_string()],
                )?),
            )
        }
        None => (None, None),
    };
    let mut hooks = Hooks {
        metrics: metrics.as_mut(),
        timing: timing.as_mut(),
        on_step: on_step.map(|f| -> &mut dyn FnMut(&StepOutcome) { f }),
    };
    train_epochs(trainer, &data.train, &data.test, cfg.epochs, 0, cfg.eval_every, &mut hooks)
}

fn strings<const N: usize>(fields: [&dyn ToString; N]) -> Vec<String> {
    fields.iter().map(|f| f.to_string()).collect()
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn mode_check(cfg: &ExperimentConfig, mode: Mode) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig { mode, ..cfg.clone() };
    cfg.validate()?;
    Ok(cfg)
}

/// Single training run. Returns the final evaluation; a divergence is
/// reported as an error after the partial outputs are written.
pub fn run_standard(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let cfg = mode_check(cfg, Mode::Standard)?;
    let data = load_datasets(&cfg)?;
    check_layers(&cfg.layers, &data)?;
    let dir = prepare_output(&cfg)?;
    let outcome = train_fresh(&cfg, cfg.layers.clone(), cfg.train_settings(), &data, Some(&dir), None)?;
    checkpoint::save(&dir.join("checkpoint.bin"), &outcome.trainer, outcome.epochs_completed as u64)?;
    let mut summary = CsvWriter::create(
        &dir.join("summary.csv"),
        &header(&["rule", "epochs", "samples_seen", "final_accuracy", "final_loss", "diverged"]),
    )?;
    summary.row(&strings([
        &cfg.rule_kind().name(),
        &outcome.epochs_completed,
        &outcome.trainer.samples_seen(),
        &outcome.final_eval.accuracy,
        &outcome.final_eval.mean_loss,
        &outcome.diverged.is_some(),
    ]))?;
    if let Some(layer) = outcome.diverged {
        return Err(Error::NumericBlowup { layer });
    }
    Ok(outcome)
}

/// Continues a run from `checkpoint.bin` for the configured number of
/// further epochs, appending to a fresh metrics file in the output directory.
pub fn resume_standard(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<TrainOutcome> {
    let data = load_datasets(cfg)?;
    let (trainer, epoch) = checkpoint::load(checkpoint_path)?;
    check_layers(trainer.network().layer_sizes(), &data)?;
    let dir = prepare_output(cfg)?;
    let depth = trainer.network().depth();
    let mut metrics = CsvWriter::create(&dir.join("metrics.csv"), &metrics_header(depth))?;
    let mut hooks = Hooks { metrics: Some(&mut metrics), ..Default::default() };
    let outcome = train_epochs(trainer, &data.train, &data.test, cfg.epochs, epoch as usize, cfg.eval_every, &mut hooks)?;
    checkpoint::save(
        &dir.join("checkpoint.bin"),
        &outcome.trainer,
        epoch + outcome.epochs_completed as u64,
    )?;
    if let Some(layer) = outcome.diverged {
        return Err(Error::NumericBlowup { layer });
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub rule: String,
    /// Depth for the depth sweep, rank for the rank sweep.
    pub label: String,
    pub accuracy: f64,
    pub diverged: bool,
}

fn hidden_layers(input: usize, output: usize, depth: usize, width: usize) -> Vec<usize> {
    let mut layers = vec![input];
    layers.extend(std::iter::repeat(width).take(depth - 2));
    layers.push(output);
    layers
}

/// Final accuracy per depth for LOCO and NP under the same budget.
pub fn run_depth_sweep(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let cfg = mode_check(cfg, Mode::DepthSweep)?;
    let data = load_datasets(&cfg)?;
    let dir = prepare_output(&cfg)?;
    let (input, output) = (data.train.input_dim, data.train.readout.output_dim());
    let mut summary = CsvWriter::create(
        &dir.join("summary.csv"),
        &header(&["depth", "rule", "final_accuracy", "diverged"]),
    )?;
    let mut cells = Vec::new();
    for &depth in &cfg.depths {
        for kind in [RuleKind::Loco, RuleKind::Np] {
            let layers = hidden_layers(input, output, depth, cfg.hidden_width);
            let cell_dir = dir.join(format!("depth{depth}_{}", kind.name()));
            let o = train_fresh(&cfg, layers, settings_for(&cfg, kind), &data, Some(&cell_dir), None)?;
            info!("depth {depth} {}: accuracy {:.4}", kind.name(), o.final_eval.accuracy);
            let cell = Cell {
                rule: kind.name(),
                label: depth.to_string(),
                accuracy: o.final_eval.accuracy,
                diverged: o.diverged.is_some(),
            };
            summary.row(&strings([&depth, &cell.rule, &cell.accuracy, &cell.diverged]))?;
            cells.push(cell);
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseResult {
    pub rule: String,
    pub phase: usize,
    pub class: usize,
    /// Accuracy on the test samples of every class learned so far.
    pub accuracy: f64,
}

/// Class-incremental training for LOCO and NP; one row per rule and phase.
pub fn run_continual(cfg: &ExperimentConfig) -> Result<Vec<PhaseResult>> {
    let cfg = mode_check(cfg, Mode::Continual)?;
    let data = load_datasets(&cfg)?;
    check_layers(&cfg.layers, &data)?;
    let dir = prepare_output(&cfg)?;
    let phases = class_incremental_stream(&data.train, &data.test, &cfg.order)?;
    let mut summary = CsvWriter::create(
        &dir.join("summary.csv"),
        &header(&["rule", "phase", "class", "accuracy_learned_classes"]),
    )?;
    let mut results = Vec::new();
    for kind in [RuleKind::Loco, RuleKind::Np] {
        let mut trainer = fresh_trainer(&cfg, cfg.layers.clone(), settings_for(&cfg, kind))?;
        for (k, phase) in phases.iter().enumerate() {
            let mut hooks = Hooks::default();
            let o = train_epochs(trainer, &phase.train, &phase.eval, cfg.epochs, k * cfg.epochs, 0, &mut hooks)?;
            if let Some(layer) = o.diverged {
                return Err(Error::NumericBlowup { layer });
            }
            let accuracy = o.trainer.evaluate(&phase.eval)?.accuracy;
            info!("{} phase {k} (class {}): accuracy {accuracy:.4}", kind.name(), phase.class);
            summary.row(&strings([&kind.name(), &k, &phase.class, &accuracy]))?;
            results.push(PhaseResult {
                rule: kind.name(),
                phase: k,
                class: phase.class,
                accuracy,
            });
            trainer = o.trainer;
        }
    }
    Ok(results)
}

/// Accuracy of the rank-constrained rule for each `k`; `full` trains plain NP.
pub fn run_rank_sweep(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let cfg = mode_check(cfg, Mode::RankSweep)?;
    let data = load_datasets(&cfg)?;
    check_layers(&cfg.layers, &data)?;
    let dir = prepare_output(&cfg)?;
    let mut summary = CsvWriter::create(
        &dir.join("summary.csv"),
        &header(&["k", "final_accuracy", "diverged"]),
    )?;
    let mut cells = Vec::new();
    for &rank in &cfg.ranks {
        let kind = match rank {
            RankSpec::K(k) => RuleKind::RankConstrained { k },
            RankSpec::Full => RuleKind::Np,
        };
        let cell_dir = dir.join(format!("k{rank}"));
        let o = train_fresh(&cfg, cfg.layers.clone(), settings_for(&cfg, kind), &data, Some(&cell_dir), None)?;
        info!("k={rank}: accuracy {:.4}", o.final_eval.accuracy);
        let cell = Cell {
            rule: kind.name(),
            label: rank.to_string(),
            accuracy: o.final_eval.accuracy,
            diverged: o.diverged.is_some(),
        };
        summary.row(&strings([&rank, &cell.accuracy, &cell.diverged]))?;
        cells.push(cell);
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LrSweep {
    pub np: StabilityTable,
    pub loco: StabilityTable,
}

impl LrSweep {
    /// `max_stable(LOCO) / max_stable(NP)`; `None` when either has no stable point.
    pub fn gamma(&self) -> Option<f64> {
        Some(self.loco.max_stable()? / self.np.max_stable()?)
    }
}

/// One short run at `eta` from the shared initial network, scored on a
/// held-out probe set.
pub fn stability_probe(
    cfg: &ExperimentConfig,
    kind: RuleKind,
    eta: f64,
    data: &Datasets,
    init: &Network,
) -> Result<StabilityProbe> {
    let probe_set = data.test.truncated(cfg.lr_probe);
    let mut settings = settings_for(cfg, kind);
    settings.rule.eta = eta;
    let mut trainer = Trainer::new(init.clone(), settings)?;
    let initial_loss = trainer.evaluate(&probe_set)?.mean_loss;
    let mut done = 0;
    let mut epoch = 0;
    'outer: while done < cfg.lr_budget {
        for idx in epoch_order(data.train.len(), cfg.seed, epoch) {
            match trainer.step(&data.train.samples[idx], &data.train.readout) {
                Ok(_) => {}
                Err(Error::NumericBlowup { .. }) => {
                    return Ok(StabilityProbe { eta, initial_loss, final_loss: None });
                }
                Err(e) => return Err(e),
            }
            done += 1;
            if done == cfg.lr_budget {
                break 'outer;
            }
        }
        epoch += 1;
    }
    let final_loss = trainer.evaluate(&probe_set)?.mean_loss;
    Ok(StabilityProbe {
        eta,
        initial_loss,
        final_loss: final_loss.is_finite().then_some(final_loss),
    })
}

/// Largest stable learning rate for NP and LOCO and their ratio.
pub fn run_lr_sweep(cfg: &ExperimentConfig) -> Result<LrSweep> {
    let cfg = mode_check(cfg, Mode::LrSweep)?;
    let data = load_datasets(&cfg)?;
    check_layers(&cfg.layers, &data)?;
    if data.train.is_empty() {
        return Err(Error::Config("learning-rate sweep needs training data".into()));
    }
    let dir = prepare_output(&cfg)?;
    let init = Trainer::init_network(cfg.layers.clone(), cfg.lif, cfg.init_gain, cfg.seed)?;
    let mut table = CsvWriter::create(
        &dir.join("lr_table.csv"),
        &header(&["rule", "eta", "initial_loss", "final_loss", "stable"]),
    )?;
    let mut sweep_rule = |kind: RuleKind| -> Result<StabilityTable> {
        let t = max_stable_lr(&cfg.lr_grid, |eta| stability_probe(&cfg, kind, eta, &data, &init))?;
        for p in &t.probes {
            let fin = p.final_loss.map_or("diverged".to_string(), |l| l.to_string());
            table.row(&strings([&kind.name(), &p.eta, &p.initial_loss, &fin, &p.is_stable()]))?;
        }
        Ok(t)
    };
    let sweep = LrSweep {
        np: sweep_rule(RuleKind::Np)?,
        loco: sweep_rule(RuleKind::Loco)?,
    };
    let show = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
    let mut summary = CsvWriter::create(&dir.join("summary.csv"), &header(&["quantity", "value"]))?;
    summary.row(&strings([&"max_stable_eta_np", &show(sweep.np.max_stable())]))?;
    summary.row(&strings([&"max_stable_eta_loco", &show(sweep.loco.max_stable())]))?;
    summary.row(&strings([&"gamma", &show(sweep.gamma())]))?;
    Ok(sweep)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MagnitudeTrack {
    /// Applied ‖ΔW‖_F of each LOCO update, all layers together.
    pub loco_applied: Vec<f64>,
    /// Norm of the same LOCO update before projection.
    pub loco_pre_projection: Vec<f64>,
    /// Applied norm of each update in the paired NP run.
    pub np_applied: Vec<f64>,
}

impl MagnitudeTrack {
    pub fn mean(v: &[f64]) -> f64 {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// Paired LOCO and NP runs with the same seed, logging every update norm.
pub fn run_magnitude_track(cfg: &ExperimentConfig) -> Result<MagnitudeTrack> {
    let cfg = mode_check(cfg, Mode::MagnitudeTrack)?;
    let data = load_datasets(&cfg)?;
    check_layers(&cfg.layers, &data)?;
    let dir = prepare_output(&cfg)?;
    let mut track = MagnitudeTrack::default();
    for kind in [RuleKind::Loco, RuleKind::Np] {
        let mut applied = Vec::new();
        let mut pre = Vec::new();
        let mut record = |o: &StepOutcome| {
            if let Some(r) = &o.report {
                applied.push(r.total_applied());
                pre.push(r.total_pre_projection());
            }
        };
        let cell_dir = dir.join(kind.name());
        let o = train_fresh(&cfg, cfg.layers.clone(), settings_for(&cfg, kind), &data, Some(&cell_dir), Some(&mut record))?;
        if let Some(layer) = o.diverged {
            return Err(Error::NumericBlowup { layer });
        }
        match kind {
            RuleKind::Loco => {
                track.loco_applied = applied;
                track.loco_pre_projection = pre;
            }
            _ => track.np_applied = applied,
        }
    }
    let mut series = CsvWriter::create(
        &dir.join("magnitude.csv"),
        &header(&["update", "loco_applied", "loco_pre_projection", "np_applied"]),
    )?;
    let n = track.loco_applied.len().max(track.np_applied.len());
    let cell = |v: &[f64], i: usize| v.get(i).map_or(String::new(), |x| x.to_string());
    for i in 0..n {
        series.row(&[
            (i + 1).to_string(),
            cell(&track.loco_applied, i),
            cell(&track.loco_pre_projection, i),
            cell(&track.np_applied, i),
        ])?;
    }
    let mut summary = CsvWriter::create(&dir.join("summary.csv"), &header(&["quantity", "value"]))?;
    summary.row(&strings([&"mean_loco_applied", &MagnitudeTrack::mean(&track.loco_applied)]))?;
    summary.row(&strings([&"mean_np_applied", &MagnitudeTrack::mean(&track.np_applied)]))?;
    Ok(track)
}

/// Runs the experiment selected by `cfg.mode`.
pub fn run_mode(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.mode {
        Mode::Standard => run_standard(cfg).map(|_| ()),
        Mode::DepthSweep => run_depth_sweep(cfg).map(|_| ()),
        Mode::Continual => run_continual(cfg).map(|_| ()),
        Mode::RankSweep => run_rank_sweep(cfg).map(|_| ()),
        Mode::LrSweep => run_lr_sweep(cfg).map(|_| ()),
        Mode::MagnitudeTrack => run_magnitude_track(cfg).map(|_| ()),
    }
}
