//! Mini-batch Adam training with validation early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::total_loss;
use super::metrics::{ConfusionMatrix, Metrics};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, PreparedSample};
use crate::numeric::{Adam, AdamConfig, Tape, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the node-variance term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Smallest validation-loss decrease that counts as an improvement.
    pub min_delta: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            lambda: 0.1,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: 50,
            batch_size: 16,
            patience: 10,
            min_delta: 1e-4,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Validation("train.lambda must be finite and ≥ 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("train.learning_rate must be positive".into()));
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return Err(Error::Validation("train.min_delta must be finite and ≥ 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("train.batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Validation("train.validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub classification_loss: f64,
    pub variance_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Probabilities clamped in the log of the cross-entropy.
    pub clamped: usize,
}

/// Loss history as CSV, empty validation cells when no validation set.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,classification_loss,variance_loss,validation_loss,validation_accuracy\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_default();
    for r in history {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{},{}\n",
            r.epoch,
            r.loss,
            r.classification_loss,
            r.variance_loss,
            opt(r.validation_loss),
            opt(r.validation_accuracy)
        ));
    }
    out
}

fn batch_diagnostic<T>(batch: &[&PreparedSample<T>]) -> String {
    batch
        .iter()
        .map(|s| format!("{}@{}", s.subject, s.anchor_day))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Trains `model` on `train`, keeping the parameters with the lowest
/// validation loss when `validation` is non-empty.
pub fn train<T: Scalar>(
    mut model: Model<T>,
    train: &[PreparedSample<T>],
    validation: &[PreparedSample<T>],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let layers = model.config.layers;
    let mut params: Vec<Tensor<T>> = model.params.to_vec().into_iter().cloned().collect();
    let mut adam = Adam::new(config.adam(), &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor<T>>)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut clamped = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_class, mut sum_var) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedSample<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::new();
            let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
            let bound = ModelParams::from_vec(layers, vars.clone())?;
            let parts = total_loss(&mut tape, &bound, &batch, &model.config, config.lambda).map_err(|e| match e {
                Error::Numeric(m) => {
                    Error::Numeric(format!("epoch {epoch}, batch [{}]: {m}", batch_diagnostic(&batch)))
                }
                other => other,
            })?;
            let loss = tape.value(parts.total).item().as_f64();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch [{}]",
                    batch_diagnostic(&batch)
                )));
            }
            let grads = tape
                .backward(parts.total)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch [{}]: {e}", batch_diagnostic(&batch))))?;
            clamped += tape.clamp_count();
            let grads: Vec<Tensor<T>> = vars
                .iter()
                .zip(&params)
                .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            adam.step(&mut params, &grads)?;
            let w = batch.len() as f64;
            sum_total += w * loss;
            sum_class += w * tape.value(parts.classification).item().as_f64();
            sum_var += w * tape.value(parts.variance).item().as_f64();
        }
        let n = train.len() as f64;
        let mut record = EpochRecord {
            epoch,
            loss: sum_total / n,
            classification_loss: sum_class / n,
            variance_loss: sum_var / n,
            validation_loss: None,
            validation_accuracy: None,
        };
        if !validation.is_empty() {
            model.params = ModelParams::from_vec(layers, params.clone())?;
            let (vloss, vacc) = validation_scores(&model, validation)?;
            record.validation_loss = Some(vloss);
            record.validation_accuracy = Some(vacc);
            if best.as_ref().is_none_or(|b| vloss < b.0 - config.min_delta) {
                best = Some((vloss, epoch, params.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log::debug!("epoch {epoch}: loss {:.6}", record.loss);
        history.push(record);
        if config.patience > 0 && stale >= config.patience {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, final_params) = match best {
        Some((_, epoch, p)) => (epoch, p),
        None => (history.len(), params),
    };
    model.params = ModelParams::from_vec(layers, final_params)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stopped_early,
        clamped,
    })
}

/// Mean cross-entropy and accuracy.
fn validation_scores<T: Scalar>(model: &Model<T>, samples: &[PreparedSample<T>]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let p = model.predict_proba(s)?;
        loss -= p[s.label].max(1e-12).ln();
        if crate::model::argmax(&p) == s.label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Predictions of `model` summarized as metrics and a confusion matrix.
pub fn evaluate<T: Scalar>(model: &Model<T>, samples: &[PreparedSample<T>]) -> Result<(Metrics, ConfusionMatrix)> {
    let mut cm = ConfusionMatrix::new(model.config.classes);
    for s in samples {
        cm.record(s.label, model.predict(s)?)?;
    }
    Ok((Metrics::from_confusion(&cm), cm))
}
