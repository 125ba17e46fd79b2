//! Position-aware single-head self-attention over the day representations
//! and the classification head.

use crate::error::{Error, Result};
use crate::numeric::{Tape, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalParams<P> {
    /// `d_a × d_p`
    pub query_proj: P,
    /// `d_a × d_p`
    pub key_proj: P,
    /// `d_p × d_p`
    pub value_proj: P,
    /// `classes × d_p`
    pub classifier: P,
    /// `classes`
    pub classifier_bias: P,
}

/// Sinusoidal position code: even coordinates `sin(i / 10000^(2k/d))`,
/// odd coordinates the matching cosine.
pub fn position_embedding(index: usize, dim: usize, max_positions: usize) -> Result<Vec<f64>> {
    if index >= max_positions {
        return Err(Error::Range(format!(
            "position {index} outside table of {max_positions}"
        )));
    }
    Ok((0..dim)
        .map(|c| {
            let pair = (c / 2) as f64;
            let angle = index as f64 / 10_000f64.powf(2.0 * pair / dim as f64);
            if c % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect())
}

/// `T × dim` matrix of position codes for positions `0..len`.
pub fn position_table<T: Scalar>(len: usize, dim: usize, max_positions: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(len * dim);
    for i in 0..len {
        data.extend(position_embedding(i, dim, max_positions)?.into_iter().map(T::of));
    }
    Tensor::matrix(len, dim, data)
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalForward {
    /// Sum of the attended day representations.
    pub global: Var,
    /// `T × T` attention, rows sum to one.
    pub attention: Var,
}

/// Scores `[W_q(g_i+p_i)]ᵀ[W_p(g_j+p_j)] / √d_p`, row softmax `γ`, and
/// `g* = Σ_i Σ_j γ_ij W_g g_j`.
pub fn global_self_attention<T: Scalar>(
    tape: &mut Tape<T>,
    reps: &[Var],
    params: &TemporalParams<Var>,
    max_positions: usize,
) -> Result<GlobalForward> {
    if reps.is_empty() {
        return Err(Error::dim("global attention needs at least one day"));
    }
    let stacked = tape.concat_rows(reps)?;
    let dim = tape.shape(stacked)[1];
    let positions = tape.constant(position_table(reps.len(), dim, max_positions)?);
    let placed = tape.add(stacked, positions)?;
    let queries = tape.linear(placed, params.query_proj)?;
    let keys = tape.linear(placed, params.key_proj)?;
    let scores = tape.linear(queries, keys)?;
    let scaled = tape.scale(scores, T::one() / T::of(dim as f64).sqrt())?;
    let attention = tape.softmax(scaled)?;
    let values = tape.linear(stacked, params.value_proj)?;
    let attended = tape.matmul(attention, values)?;
    let global = tape.sum_rows(attended)?;
    Ok(GlobalForward { global, attention })
}

/// Fully connected layer with softmax; returns class probabilities.
pub fn classify<T: Scalar>(tape: &mut Tape<T>, global: Var, params: &TemporalParams<Var>) -> Result<Var> {
    let logits = tape.linear(global, params.classifier)?;
    let logits = tape.add(logits, params.classifier_bias)?;
    tape.softmax(logits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_is_sin0_cos1() {
        let p = position_embedding(0, 64, 8).unwrap();
        for (c, v) in p.iter().enumerate() {
            assert_eq!(*v, if c % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn positions_bounded_and_distinct() {
        for i in 0..8 {
            let p = position_embedding(i, 64, 8).unwrap();
            assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let a = position_embedding(0, 64, 8).unwrap();
        let b = position_embedding(1, 64, 8).unwrap();
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap > 1e-3);
    }

    #[test]
    fn index_past_table_is_range_error() {
        assert!(matches!(position_embedding(8, 4, 8), Err(Error::Range(_))));
    }
}
