use super::Dataset;
use crate::error::{Error, Result};

/// One phase of a class-incremental curriculum.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub task_id: usize,
    pub class: usize,
    /// Training samples of this phase's class only.
    pub train: Dataset,
    /// Test samples of every class learned so far.
    pub eval: Dataset,
}

/// Splits `train` into single-class phases following `order`; the evaluation
/// set of phase `k` holds the test samples of `order[..=k]`.
pub fn class_incremental_stream(train: &Dataset, test: &Dataset, order: &[usize]) -> Result<Vec<Phase>> {
    if order.is_empty() {
        return Err(Error::Config("class order is empty".into()));
    }
    for (i, &c) in order.iter().enumerate() {
        if c >= train.num_classes {
            return Err(Error::Config(format!("class {c} is not in the dataset")));
        }
        if order[..i].contains(&c) {
            return Err(Error::Config(format!("class {c} repeated in order")));
        }
    }
    Ok(order
        .iter()
        .enumerate()
        .map(|(k, &class)| {
            let mut phase_train = train.filtered(|_, s| s.label == class);
            for s in &mut phase_train.samples {
                s.task_id = k;
            }
            let learned = &order[..=k];
            Phase {
                task_id: k,
                class,
                train: phase_train,
                eval: test.filtered(|_, s| learned.contains(&s.label)),
            }
        })
        .collect())
}
