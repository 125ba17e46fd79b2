//! Accuracy and support-weighted precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[truth][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim("truth and prediction lengths differ"));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let classes = self.classes();
        if truth >= classes || predicted >= classes {
            return Err(Error::Range(format!(
                "class pair ({truth}, {predicted}) outside {classes} classes"
            )));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Per-class scores weighted by true-class support. A class with no
    /// predictions has precision 0; F1 is 0 when precision and recall are.
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        let total = m.total();
        if total == 0 {
            return Metrics::default();
        }
        let n = total as f64;
        let mut out = Metrics::default();
        for c in 0..m.classes() {
            let tp = m.counts[c][c] as f64;
            out.accuracy += tp / n;
            let support = m.support(c);
            if support == 0 {
                continue;
            }
            let weight = support as f64 / n;
            let predicted = m.predicted(c);
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = tp / support as f64;
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            out.precision += weight * precision;
            out.recall += weight * recall;
            out.f1 += weight * f1;
        }
        out
    }

    pub fn mean(items: &[Metrics]) -> Metrics {
        if items.is_empty() {
            return Metrics::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics {
            accuracy: sum(|m| m.accuracy),
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: usize,
    pub samples: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskReport>,
    /// Unweighted mean over tasks.
    pub average: Metrics,
}

impl EvalReport {
    pub fn new(tasks: Vec<TaskReport>) -> Self {
        let metrics: Vec<Metrics> = tasks.iter().map(|t| t.metrics).collect();
        EvalReport {
            average: Metrics::mean(&metrics),
            tasks,
        }
    }

    /// One row per task and a final `average` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,samples,accuracy,precision,recall,f1\n");
        let row = |out: &mut String, task: &str, samples: usize, m: &Metrics| {
            out.push_str(&format!(
                "{task},{samples},{:.6},{:.6},{:.6},{:.6}\n",
                m.accuracy, m.precision, m.recall, m.f1
            ));
        };
        for t in &self.tasks {
            row(&mut out, &t.task.to_string(), t.samples, &t.metrics);
        }
        let total = self.tasks.iter().map(|t| t.samples).sum();
        row(&mut out, "average", total, &self.average);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
