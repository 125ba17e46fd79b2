//! k-split train/test protocol.

use super::metrics::{EvalReport, TaskReport};
use super::split::{holdout, split_protocol};
use super::train::{evaluate, train, EpochRecord, TrainConfig};
use crate::error::Result;
use crate::gnn::EmbeddingTable;
use crate::graph::GlobalSample;
use crate::model::{Model, ModelConfig, PreparedSample};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome {
    pub report: EvalReport,
    pub histories: Vec<Vec<EpochRecord>>,
}

fn task_seed(seed: u64, task: usize) -> u64 {
    seed.wrapping_add(task as u64 + 1)
}

/// Trains one fresh model per split on the other `k - 1` splits (minus a
/// validation hold-out) and tests it on its own split.
pub fn run_protocol<T: Scalar>(
    samples: &[GlobalSample],
    table: &EmbeddingTable,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    splits: usize,
) -> Result<ProtocolOutcome> {
    let prepared: Vec<PreparedSample<T>> = crate::model::prepare_samples(samples, table, model_config.gnn_options())?;
    let tasks = split_protocol(samples.len(), splits, train_config.seed)?;
    let mut reports = Vec::with_capacity(tasks.len());
    let mut histories = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let seed = task_seed(train_config.seed, i);
        let (fit, validation) = holdout(&task.train, train_config.validation_fraction, seed);
        let pick = |idx: &[usize]| idx.iter().map(|&j| prepared[j].clone()).collect::<Vec<_>>();
        let model = Model::<T>::new(model_config.clone(), table.clone(), seed)?;
        let config = TrainConfig {
            seed,
            ..train_config.clone()
        };
        let outcome = train(model, &pick(&fit), &pick(&validation), &config)?;
        let test = pick(&task.test);
        let (metrics, confusion) = evaluate(&outcome.model, &test)?;
        log::info!(
            "task {i}: accuracy {:.4} after {} epochs",
            metrics.accuracy,
            outcome.history.len()
        );
        reports.push(TaskReport {
            task: i,
            samples: test.len(),
            metrics,
            confusion,
        });
        histories.push(outcome.history);
    }
    Ok(ProtocolOutcome {
        report: EvalReport::new(reports),
        histories,
    })
}
