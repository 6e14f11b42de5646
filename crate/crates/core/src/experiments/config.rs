//! Flat `key = value` experiment configuration.
//!
//! Grammar: one assignment per line, `#` starts a comment, blank lines are
//! ignored, keys are case-sensitive, lists are comma-separated. Every key has
//! a default, so an empty file is a valid configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::learning::{NpVariant, RuleKind, UpdateRule};
use crate::projector::ProjectorParams;
use crate::snn::{LifParams, LossKind, PerturbScope};

use super::trainer::{RateSource, TrainSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Standard,
    Continual,
    DepthSweep,
    RankSweep,
    LrSweep,
    MagnitudeTrack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Nettalk,
}

/// Rule family; the rank of the constrained rule is a separate key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleName {
    Np,
    Loco,
    Rank,
}

/// Rank used by the rank sweep: a fixed `k` or the unconstrained rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankSpec {
    K(usize),
    Full,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($variant:expr => $name:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!("unknown {} `{other}`", $what))),
                }
            }
        }
    };
}

keyword_enum!(Mode, "mode",
    Mode::Standard => "standard",
    Mode::Continual => "continual",
    Mode::DepthSweep => "depth_sweep",
    Mode::RankSweep => "rank_sweep",
    Mode::LrSweep => "lr_sweep",
    Mode::MagnitudeTrack => "magnitude_track",
);
keyword_enum!(DatasetKind, "dataset", DatasetKind::Mnist => "mnist", DatasetKind::Nettalk => "nettalk");
keyword_enum!(RuleName, "rule", RuleName::Np => "np", RuleName::Loco => "loco", RuleName::Rank => "rank");
keyword_enum!(NpVariant, "np_variant", NpVariant::Paper => "paper", NpVariant::Classic => "classic");
keyword_enum!(LossKind, "loss", LossKind::Mse => "mse", LossKind::SoftmaxCrossEntropy => "softmax_xent");
keyword_enum!(PerturbScope, "perturb scope", PerturbScope::AllLayers => "all", PerturbScope::HiddenOnly => "hidden");
keyword_enum!(RateSource, "rate source", RateSource::Clean => "clean", RateSource::Perturbed => "perturbed");

impl fmt::Display for RankSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankSpec::K(k) => write!(f, "{k}"),
            RankSpec::Full => f.write_str("full"),
        }
    }
}

impl FromStr for RankSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            Ok(RankSpec::Full)
        } else {
            parse_num(s, "rank").map(RankSpec::K)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dataset: DatasetKind,
    pub mnist_dir: PathBuf,
    pub nettalk_path: PathBuf,
    pub layers: Vec<usize>,
    pub lif: LifParams,
    pub init_gain: f64,
    pub rule: RuleName,
    pub eta: f64,
    pub sigma: f64,
    pub rank_k: usize,
    pub np_variant: NpVariant,
    pub loss: LossKind,
    pub perturb: PerturbScope,
    pub rate_source: RateSource,
    pub batch_size: usize,
    pub projector: ProjectorParams,
    pub epochs: usize,
    /// 0 keeps the whole split.
    pub train_subset: usize,
    pub test_subset: usize,
    pub seed: u64,
    /// Samples between evaluations; 0 evaluates once per epoch.
    pub eval_every: usize,
    pub output_dir: PathBuf,
    pub depths: Vec<usize>,
    pub hidden_width: usize,
    pub ranks: Vec<RankSpec>,
    pub lr_grid: Vec<f64>,
    /// Training samples per learning-rate probe.
    pub lr_budget: usize,
    /// Held-out samples used to measure probe loss.
    pub lr_probe: usize,
    /// Class order for continual runs.
    pub order: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Standard,
            dataset: DatasetKind::Mnist,
            mnist_dir: PathBuf::from("data/mnist"),
            nettalk_path: PathBuf::from("data/nettalk/nettalk.data"),
            layers: vec![784, 100, 10],
            lif: LifParams::default(),
            init_gain: 1.0,
            rule: RuleName::Loco,
            eta: 0.05,
            sigma: 0.25,
            rank_k: 8,
            np_variant: NpVariant::Paper,
            loss: LossKind::Mse,
            perturb: PerturbScope::AllLayers,
            rate_source: RateSource::Clean,
            batch_size: 1,
            projector: ProjectorParams::default(),
            epochs: 3,
            train_subset: 10_000,
            test_subset: 2_000,
            seed: 1,
            eval_every: 0,
            output_dir: PathBuf::from("runs/default"),
            depths: vec![3, 4, 5, 6, 7, 8],
            hidden_width: 100,
            ranks: vec![
                RankSpec::K(1),
                RankSpec::K(2),
                RankSpec::K(4),
                RankSpec::K(8),
                RankSpec::K(16),
                RankSpec::Full,
            ],
            lr_grid: vec![0.025, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2],
            lr_budget: 2_000,
            lr_probe: 500,
            order: (0..10).collect(),
        }
    }
}

fn parse_num<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(v.trim(), key)).collect()
}

fn parse_keyword<T: FromStr<Err = Error>>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = parse_keyword(value, key)?,
            "dataset" => self.dataset = parse_keyword(value, key)?,
            "mnist_dir" => self.mnist_dir = PathBuf::from(value),
            "nettalk_path" => self.nettalk_path = PathBuf::from(value),
            "layers" => self.layers = parse_list(value, key)?,
            "lif.tau_mem" => self.lif.tau_mem = parse_num(value, key)?,
            "lif.v_threshold" => self.lif.v_threshold = parse_num(value, key)?,
            "lif.v_reset" => self.lif.v_reset = parse_num(value, key)?,
            "lif.t_steps" => self.lif.t_steps = parse_num(value, key)?,
            "init_gain" => self.init_gain = parse_num(value, key)?,
            "rule" => self.rule = parse_keyword(value, key)?,
            "eta" => self.eta = parse_num(value, key)?,
            "sigma" => self.sigma = parse_num(value, key)?,
            "rank_k" => self.rank_k = parse_num(value, key)?,
            "np_variant" => self.np_variant = parse_keyword(value, key)?,
            "loss" => self.loss = parse_keyword(value, key)?,
            "perturb" => self.perturb = parse_keyword(value, key)?,
            "rate_source" => self.rate_source = parse_keyword(value, key)?,
            "batch_size" => self.batch_size = parse_num(value, key)?,
            "projector.buffer" => self.projector.capacity = parse_num(value, key)?,
            "projector.clusters" => self.projector.clusters = parse_num(value, key)?,
            "projector.refresh" => self.projector.refresh_period = parse_num(value, key)?,
            "epochs" => self.epochs = parse_num(value, key)?,
            "train_subset" => self.train_subset = parse_num(value, key)?,
            "test_subset" => self.test_subset = parse_num(value, key)?,
            "seed" => self.seed = parse_num(value, key)?,
            "eval_every" => self.eval_every = parse_num(value, key)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "depths" => self.depths = parse_list(value, key)?,
            "hidden_width" => self.hidden_width = parse_num(value, key)?,
            "ranks" => {
                self.ranks = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|v| parse_keyword(v.trim(), key)).collect::<Result<_>>()?
                }
            }
            "lr_grid" => self.lr_grid = parse_list(value, key)?,
            "lr_budget" => self.lr_budget = parse_num(value, key)?,
            "lr_probe" => self.lr_probe = parse_num(value, key)?,
            "order" => self.order = parse_list(value, key)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its effective value, in a form [`Self::parse`] reads back.
    pub fn resolved(&self) -> String {
        let p = |s: &Path| s.display().to_string();
        let entries: Vec<(&str, String)> = vec![
            ("mode", self.mode.to_string()),
            ("dataset", self.dataset.to_string()),
            ("mnist_dir", p(&self.mnist_dir)),
            ("nettalk_path", p(&self.nettalk_path)),
            ("layers", join(&self.layers)),
            ("lif.tau_mem", self.lif.tau_mem.to_string()),
            ("lif.v_threshold", self.lif.v_threshold.to_string()),
            ("lif.v_reset", self.lif.v_reset.to_string()),
            ("lif.t_steps", self.lif.t_steps.to_string()),
            ("init_gain", self.init_gain.to_string()),
            ("rule", self.rule.to_string()),
            ("eta", self.eta.to_string()),
            ("sigma", self.sigma.to_string()),
            ("rank_k", self.rank_k.to_string()),
            ("np_variant", self.np_variant.to_string()),
            ("loss", self.loss.to_string()),
            ("perturb", self.perturb.to_string()),
            ("rate_source", self.rate_source.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("projector.buffer", self.projector.capacity.to_string()),
            ("projector.clusters", self.projector.clusters.to_string()),
            ("projector.refresh", self.projector.refresh_period.to_string()),
            ("epochs", self.epochs.to_string()),
            ("train_subset", self.train_subset.to_string()),
            ("test_subset", self.test_subset.to_string()),
            ("seed", self.seed.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("output_dir", p(&self.output_dir)),
            ("depths", join(&self.depths)),
            ("hidden_width", self.hidden_width.to_string()),
            ("ranks", join(&self.ranks)),
            ("lr_grid", join(&self.lr_grid)),
            ("lr_budget", self.lr_budget.to_string()),
            ("lr_probe", self.lr_probe.to_string()),
            ("order", join(&self.order)),
        ];
        entries.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn rule_kind(&self) -> RuleKind {
        match self.rule {
            RuleName::Np => RuleKind::Np,
            RuleName::Loco => RuleKind::Loco,
            RuleName::Rank => RuleKind::RankConstrained { k: self.rank_k },
        }
    }

    pub fn update_rule(&self) -> UpdateRule {
        UpdateRule {
            kind: self.rule_kind(),
            eta: self.eta,
            sigma: self.sigma,
            variant: self.np_variant,
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            rule: self.update_rule(),
            loss: self.loss,
            scope: self.perturb,
            rate_source: self.rate_source,
            batch_size: self.batch_size,
            projector: self.projector,
            seed: self.seed,
        }
    }

    /// Checks values that do not depend on the data files.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(Error::Config("`layers` needs at least two nonzero sizes".into()));
        }
        self.lif.validate()?;
        self.update_rule().validate()?;
        self.projector.validate()?;
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return Err(Error::Config("`init_gain` must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("`batch_size` must be at least 1".into()));
        }
        match self.mode {
            Mode::DepthSweep => {
                if self.depths.is_empty() || self.depths.iter().any(|d| !(3..=11).contains(d)) {
                    return Err(Error::Config("`depths` must be a nonempty subset of 3..=11".into()));
                }
                if self.hidden_width == 0 {
                    return Err(Error::Config("`hidden_width` must be nonzero".into()));
                }
            }
            Mode::RankSweep => {
                if self.ranks.is_empty() {
                    return Err(Error::Config("`ranks` is empty".into()));
                }
                let order = |r: &RankSpec| match r {
                    RankSpec::K(k) => *k,
                    RankSpec::Full => usize::MAX,
                };
                if self.ranks.windows(2).any(|w| order(&w[0]) >= order(&w[1]))
                    || self.ranks.contains(&RankSpec::K(0))
                {
                    return Err(Error::Config("`ranks` must be positive and strictly ascending".into()));
                }
            }
            Mode::LrSweep => {
                if self.lr_budget == 0 || self.lr_probe == 0 {
                    return Err(Error::Config("`lr_budget` and `lr_probe` must be nonzero".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Fails when a data path needed by this configuration is missing.
    pub fn check_paths(&self) -> Result<()> {
        let missing = |p: &Path| Error::Config(format!("data path `{}` does not exist", p.display()));
        match self.dataset {
            DatasetKind::Mnist if !self.mnist_dir.is_dir() => Err(missing(&self.mnist_dir)),
            DatasetKind::Nettalk if !self.nettalk_path.is_file() => Err(missing(&self.nettalk_path)),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = ExperimentConfig::parse("# header\n  eta = 0.3  # trailing\n\nlayers=784, 50 ,10\n").unwrap();
        assert_eq!(cfg.eta, 0.3);
        assert_eq!(cfg.layers, vec![784, 50, 10]);
    }

    #[test]
    fn resolved_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.rule = RuleName::Rank;
        cfg.eta = 0.1 + 0.2;
        cfg.loss = LossKind::SoftmaxCrossEntropy;
        cfg.ranks = vec![RankSpec::K(3), RankSpec::Full];
        cfg.lif.v_threshold = 0.7;
        assert_eq!(ExperimentConfig::parse(&cfg.resolved()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        for text in ["colour = red", "eta = fast", "rule = sgd", "no equals sign"] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 3, "{text}");
        }
    }

    #[test]
    fn overrides_apply_last() {
        let mut cfg = ExperimentConfig::parse("seed = 4").unwrap();
        cfg.apply_override("seed=9").unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(cfg.apply_override("seed").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.layers = vec![784];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig { mode: Mode::DepthSweep, ..Default::default() };
        cfg.depths = vec![3, 12];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig { mode: Mode::RankSweep, ..Default::default() };
        cfg.ranks = vec![RankSpec::K(4), RankSpec::K(2)];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_data_path_is_reported() {
        let cfg = ExperimentConfig { mnist_dir: PathBuf::from("/nonexistent/mnist"), ..Default::default() };
        assert_eq!(cfg.check_paths().unwrap_err().exit_code(), 3);
    }
}
