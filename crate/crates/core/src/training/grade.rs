//! Grade regression from frozen per-subject representations.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::stream::FEATURE_DIM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeReport {
    pub mae: f64,
    pub r2: f64,
    /// 0 when either series is constant; see `pearson_degenerate`.
    pub pearson: f64,
    pub pearson_degenerate: bool,
    pub predictions: Vec<f64>,
    pub truths: Vec<f64>,
}

impl GradeReport {
    pub fn new(predictions: Vec<f64>, truths: Vec<f64>) -> Result<Self> {
        if predictions.len() != truths.len() || truths.is_empty() {
            return Err(Error::dim("prediction and truth series must be equal and non-empty"));
        }
        let n = truths.len() as f64;
        let mae = predictions.iter().zip(&truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
        let mean_t = truths.iter().sum::<f64>() / n;
        let mean_p = predictions.iter().sum::<f64>() / n;
        let ss_res: f64 = predictions.iter().zip(&truths).map(|(p, t)| (t - p).powi(2)).sum();
        let ss_tot: f64 = truths.iter().map(|t| (t - mean_t).powi(2)).sum();
        let r2 = if ss_tot == 0.0 {
            if ss_res == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - ss_res / ss_tot
        };
        let cov: f64 = predictions
            .iter()
            .zip(&truths)
            .map(|(p, t)| (p - mean_p) * (t - mean_t))
            .sum();
        let var_p: f64 = predictions.iter().map(|p| (p - mean_p).powi(2)).sum();
        let (pearson, pearson_degenerate) = if var_p == 0.0 || ss_tot == 0.0 {
            (0.0, true)
        } else {
            ((cov / (var_p * ss_tot).sqrt()).clamp(-1.0, 1.0), false)
        };
        Ok(GradeReport {
            mae,
            r2,
            pearson,
            pearson_degenerate,
            predictions,
            truths,
        })
    }
}

/// Z-scores every column; constant columns become zero.
pub fn standardize(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = features.first() else {
        return Vec::new();
    };
    let n = features.len() as f64;
    let dims = first.len();
    let mut out = features.to_vec();
    for j in 0..dims {
        let mean = features.iter().map(|f| f[j]).sum::<f64>() / n;
        let sd = (features.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for row in &mut out {
            row[j] = if sd > 0.0 { (row[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Leave-one-out inverse-distance-weighted KNN regression on standardized
/// features. Exact duplicates of the query share the prediction equally.
pub fn knn_loo(features: &[Vec<f64>], targets: &[f64], k: usize) -> Result<Vec<f64>> {
    if features.len() != targets.len() {
        return Err(Error::dim("feature and target counts differ"));
    }
    if features.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "grade regression needs at least 2 subjects, got {}",
            features.len()
        )));
    }
    if k == 0 {
        return Err(Error::Validation("grade.k must be positive".into()));
    }
    let z = standardize(features);
    Ok((0..z.len())
        .map(|i| {
            let mut near: Vec<(f64, usize)> = (0..z.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    (d, j)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(k);
            let exact: Vec<usize> = near.iter().filter(|(d, _)| *d == 0.0).map(|p| p.1).collect();
            if !exact.is_empty() {
                return exact.iter().map(|&j| targets[j]).sum::<f64>() / exact.len() as f64;
            }
            let wsum: f64 = near.iter().map(|(d, _)| 1.0 / d).sum();
            near.iter().map(|(d, j)| targets[*j] / d).sum::<f64>() / wsum
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeComparison {
    pub subjects: Vec<String>,
    pub graph: GradeReport,
    pub baseline: GradeReport,
}

/// Mean `g*` over every full-span window of the term versus the mean 108-d
/// daily duration feature, each followed by leave-one-out KNN.
pub fn grade_regression<T: Scalar>(
    model: &Model<T>,
    dataset: &Dataset,
    span: usize,
    k: usize,
) -> Result<GradeComparison> {
    let mut ids = Vec::new();
    let mut graph_features = Vec::new();
    let mut baseline_features = Vec::new();
    let mut targets = Vec::new();
    for subject in &dataset.subjects {
        let Some(&gpa) = dataset.gpa.get(&subject.id) else {
            continue;
        };
        let samples = dataset.term_samples(subject, span, &model.embeddings)?;
        if samples.is_empty() {
            continue;
        }
        let prepared = model.prepare(&samples)?;
        let mut mean = vec![0.0; model.config.rep_dim];
        for p in &prepared {
            for (m, v) in mean.iter_mut().zip(model.global_representation(p)?) {
                *m += v / prepared.len() as f64;
            }
        }
        let days = dataset.daily_features(subject);
        let mut feature = vec![0.0; FEATURE_DIM];
        for d in &days {
            for (f, v) in feature.iter_mut().zip(d.as_slice()) {
                *f += v / days.len() as f64;
            }
        }
        ids.push(subject.id.clone());
        graph_features.push(mean);
        baseline_features.push(feature);
        targets.push(gpa);
    }
    let graph = GradeReport::new(knn_loo(&graph_features, &targets, k)?, targets.clone())?;
    let baseline = GradeReport::new(knn_loo(&baseline_features, &targets, k)?, targets)?;
    Ok(GradeComparison {
        subjects: ids,
        graph,
        baseline,
    })
}
