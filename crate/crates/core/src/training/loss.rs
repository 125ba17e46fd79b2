//! Classification and node-variance losses.

use crate::error::{Error, Result};
use crate::model::{sample_forward, ModelConfig, ModelParams, PreparedSample, SampleForward};
use crate::numeric::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Mean of `-ln p[label]` over the batch.
pub fn cross_entropy<T: Scalar>(tape: &mut Tape<T>, probs: &[Var], labels: &[usize]) -> Result<Var> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::dim(format!(
            "cross entropy over {} predictions and {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = tape.nll(probs[0], labels[0])?;
    for (&p, &y) in probs.iter().zip(labels).skip(1) {
        let term = tape.nll(p, y)?;
        total = tape.add(total, term)?;
    }
    tape.scale(total, T::one() / T::of(probs.len() as f64))
}

/// `-sigmoid(mean_j var_j)` where `var_j` is the population variance of
/// column `j` over all stacked node states. Fewer than two rows give `-0.5`.
pub fn node_variance_loss<T: Scalar>(tape: &mut Tape<T>, states: &[Var]) -> Result<Var> {
    let rows: usize = states.iter().map(|&s| tape.shape(s)[0]).sum();
    if rows < 2 {
        return Ok(tape.constant(Tensor::from_raw(vec![], vec![T::of(-0.5)])));
    }
    let stacked = if states.len() == 1 {
        states[0]
    } else {
        tape.concat_rows(states)?
    };
    let mean = tape.mean_rows(stacked)?;
    let neg_mean = tape.scale(mean, -T::one())?;
    let centered = tape.add_row(stacked, neg_mean)?;
    let squared = tape.mul(centered, centered)?;
    let variances = tape.mean_rows(squared)?;
    let avg = tape.mean(variances)?;
    let s = tape.sigmoid(avg)?;
    tape.scale(s, -T::one())
}

/// Handles of a recorded batch loss.
#[derive(Clone, Debug)]
pub struct LossParts {
    pub total: Var,
    pub classification: Var,
    pub variance: Var,
    pub forwards: Vec<SampleForward>,
}

/// `L_c + λ L_n` over a batch; the variance term pools the final node
/// states of every graph in the batch.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<Var>,
    batch: &[&PreparedSample<T>],
    config: &ModelConfig,
    lambda: f64,
) -> Result<LossParts> {
    let forwards = batch
        .iter()
        .map(|s| sample_forward(tape, params, s, config))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<Var> = forwards.iter().map(|f| f.probs).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let classification = cross_entropy(tape, &probs, &labels)?;
    let states: Vec<Var> = forwards
        .iter()
        .flat_map(|f| f.locals.iter().filter_map(|l| l.states))
        .collect();
    let variance = node_variance_loss(tape, &states)?;
    let total = if lambda == 0.0 {
        classification
    } else {
        let weighted = tape.scale(variance, T::of(lambda))?;
        tape.add(classification, weighted)?
    };
    Ok(LossParts {
        total,
        classification,
        variance,
        forwards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(tape: &Tape<f64>, v: Var) -> f64 {
        tape.value(v).item()
    }

    #[test]
    fn certain_prediction_has_zero_loss() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(vec![0.0, 1.0, 0.0, 0.0]).unwrap());
        let l = cross_entropy(&mut tape, &[p], &[1]).unwrap();
        assert_eq!(value(&tape, l), 0.0);
    }

    #[test]
    fn uniform_prediction_costs_ln4() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(vec![0.25; 4]).unwrap());
        let l = cross_entropy(&mut tape, &[p], &[3]).unwrap();
        assert!((value(&tape, l) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn batch_loss_is_mean_of_terms() {
        let rows = [
            (vec![0.7, 0.1, 0.1, 0.1], 0),
            (vec![0.2, 0.5, 0.2, 0.1], 2),
            (vec![0.1, 0.1, 0.1, 0.7], 3),
        ];
        let expected = (-(0.7f64.ln()) - 0.2f64.ln() - 0.7f64.ln()) / 3.0;
        let mut tape = Tape::new();
        let probs: Vec<Var> = rows
            .iter()
            .map(|(p, _)| tape.constant(Tensor::vector(p.clone()).unwrap()))
            .collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let l = cross_entropy(&mut tape, &probs, &labels).unwrap();
        assert!((value(&tape, l) - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_states_give_half() {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap());
        let l = node_variance_loss(&mut tape, &[s]).unwrap();
        assert_eq!(value(&tape, l), -0.5);
        let single = tape.constant(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap());
        let l = node_variance_loss(&mut tape, &[single]).unwrap();
        assert_eq!(value(&tape, l), -0.5);
    }

    #[test]
    fn hand_computed_column_variances() {
        // columns (0,2,4,6) and (1,1,3,3): variances 5 and 1
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 1.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![4.0, 3.0], vec![6.0, 3.0]]).unwrap());
        let l = node_variance_loss(&mut tape, &[a, b]).unwrap();
        let expected = -1.0 / (1.0 + (-3.0f64).exp());
        assert!((value(&tape, l) - expected).abs() < 1e-15);
    }
}
