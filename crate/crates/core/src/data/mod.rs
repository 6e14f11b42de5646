//! Dataset ingestion and rate encoding.

mod mnist;
mod nettalk;
mod stream;

pub use mnist::{encode_idx_images, encode_idx_labels, load_mnist, load_mnist_dir, parse_mnist, MNIST_SIDE};
pub use nettalk::{load_nettalk, parse_nettalk, NettalkCodebook, ALPHABET, WINDOW};
pub use stream::{class_incremental_stream, Phase};

use crate::error::{Error, Result};
use crate::snn::{one_hot, predict};

/// One rate-coded example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Firing probabilities in `[0, 1]`.
    pub rates: Vec<f64>,
    pub label: usize,
    /// Continual-learning phase the sample belongs to (0 outside that mode).
    pub task_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// How class labels map to output target vectors and back.
#[derive(Clone, Debug, PartialEq)]
pub enum Readout {
    /// One output neuron per class, decoded by argmax.
    OneHot { classes: usize },
    /// Each class owns a binary code row; decoded by nearest row.
    Codebook { rows: Vec<Vec<f64>> },
}

impl Readout {
    pub fn output_dim(&self) -> usize {
        match self {
            Readout::OneHot { classes } => *classes,
            Readout::Codebook { rows } => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn target(&self, label: usize) -> Result<Vec<f64>> {
        match self {
            Readout::OneHot { classes } => one_hot(*classes, label),
            Readout::Codebook { rows } => rows
                .get(label)
                .cloned()
                .ok_or_else(|| Error::Config(format!("class {label} outside the codebook"))),
        }
    }

    pub fn decode(&self, output_rates: &[f64]) -> usize {
        match self {
            Readout::OneHot { .. } => predict(output_rates),
            Readout::Codebook { rows } => {
                let mut best = (0, f64::INFINITY);
                for (k, row) in rows.iter().enumerate() {
                    let d: f64 = row.iter().zip(output_rates).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                best.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub input_dim: usize,
    pub split: Split,
    pub readout: Readout,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples (all of them when `n` is larger).
    pub fn truncated(&self, n: usize) -> Dataset {
        self.filtered(|i, _| i < n)
    }

    pub fn filtered(&self, mut keep: impl FnMut(usize, &Sample) -> bool) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .enumerate()
                .filter(|(i, s)| keep(*i, s))
                .map(|(_, s)| s.clone())
                .collect(),
            readout: self.readout.clone(),
            ..*self
        }
    }

    /// Checks every sample against the dataset's declared bounds.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.rates.len() != self.input_dim {
                return Err(Error::format("dataset", format!("sample {i} has {} inputs", s.rates.len())));
            }
            if s.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::format("dataset", format!("sample {i} has a rate outside [0, 1]")));
            }
            if s.label >= self.num_classes {
                return Err(Error::format("dataset", format!("sample {i} has label {}", s.label)));
            }
        }
        Ok(())
    }
}
