//! End-to-end gradient verification on a small seeded batch.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnn::EmbeddingTable;
use crate::model::{Model, ModelConfig, ModelParams, PreparedSample};
use crate::numeric::{compare_gradients, Tape, Tensor};
use crate::stream::{EventStreams, SECONDS_PER_DAY};
use crate::synth::{generate, ScenarioSpec, SYNTH_DAY_ORIGIN};
use crate::training::total_loss;

/// Two 3-day samples (one silent day shared by both) and a small model.
#[derive(Clone, Debug)]
pub struct ToyProblem {
    pub model: Model<f64>,
    pub batch: Vec<PreparedSample<f64>>,
    pub lambda: f64,
}

pub fn toy_problem(seed: u64) -> Result<ToyProblem> {
    let spec = ScenarioSpec {
        subjects: 1,
        days: 4,
        episode_minutes: 150.0,
        seed,
        ..ScenarioSpec::default()
    };
    let mut data = generate(&spec)?.dataset;
    let silent = (SYNTH_DAY_ORIGIN + SECONDS_PER_DAY)..(SYNTH_DAY_ORIGIN + 2 * SECONDS_PER_DAY);
    let subject = &mut data.subjects[0];
    let kept: Vec<_> = subject
        .streams
        .iter()
        .filter(|e| !silent.contains(&e.start))
        .cloned()
        .collect();
    subject.streams = EventStreams::from_events(kept, &data.vocab)?;
    let config = ModelConfig {
        node_dim: 6,
        edge_dim: 5,
        rep_dim: 7,
        attention_dim: 4,
        layers: 2,
        max_span: 4,
        ..ModelConfig::default()
    };
    let table = EmbeddingTable::fallback(&data.vocab, config.node_dim, seed);
    let samples = data.samples(3, &table)?;
    let mut model = Model::new(config, table, seed)?;
    // non-zero biases so their gradients are exercised away from zero
    model.params.gnn.empty_day = model.params.gnn.empty_day.map(|_| 0.1);
    model.params.temporal.classifier_bias = Tensor::vector(vec![0.05, -0.02, 0.03, 0.0])?;
    let batch = model.prepare(&samples[..2])?;
    Ok(ToyProblem {
        model,
        batch,
        lambda: 0.5,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelGradReport {
    pub params: Vec<ParamError>,
    pub max_rel_error: f64,
    pub coordinates_checked: usize,
}

/// Compares tape gradients of the total loss with central differences for
/// every coordinate. `corrupt` perturbs one analytic entry first, as a
/// negative control.
pub fn model_gradient_check(problem: &ToyProblem, eps: f64, corrupt: bool) -> Result<ModelGradReport> {
    let model = &problem.model;
    let layers = model.config.layers;
    let params: Vec<Tensor<f64>> = model.params.to_vec().into_iter().cloned().collect();
    let batch: Vec<&PreparedSample<f64>> = problem.batch.iter().collect();
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty gradient-check batch".into()));
    }

    let mut tape = Tape::new();
    let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
    let bound = ModelParams::from_vec(layers, vars.clone())?;
    let loss = total_loss(&mut tape, &bound, &batch, &model.config, problem.lambda)?.total;
    let grads = tape.backward(loss)?;
    let mut analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(&params)
        .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    if corrupt {
        let g = &mut analytic[0];
        let mut data = g.data().to_vec();
        data[0] += 1.0;
        *g = Tensor::new(g.shape().to_vec(), data)?;
    }

    let value = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<_> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let bound = ModelParams::from_vec(layers, vars)?;
        let loss = total_loss(&mut tape, &bound, &batch, &model.config, problem.lambda)?.total;
        Ok(tape.value(loss).item())
    };
    let report = compare_gradients(value, &params, &analytic, eps, None)?;
    let params = model
        .config
        .layout()
        .into_iter()
        .zip(&report.per_param)
        .map(|((name, _), &e)| ParamError { name, max_rel_error: e })
        .collect();
    Ok(ModelGradReport {
        params,
        max_rel_error: report.max_rel_error,
        coordinates_checked: report.coordinates_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_batch_shape() {
        let p = toy_problem(1).unwrap();
        assert_eq!(p.batch.len(), 2);
        assert!(p.batch.iter().all(|s| s.inputs.len() == 3));
        assert!(p.batch.iter().all(|s| s.inputs.iter().any(|i| i.is_empty())));
    }
}
