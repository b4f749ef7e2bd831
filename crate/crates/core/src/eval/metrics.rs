use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[gold][pred]` over an ordered label set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, gold: &str, pred: &str) -> u64 {
        let idx = |l: &str| self.labels.iter().position(|x| x == l);
        match (idx(gold), idx(pred)) {
            (Some(g), Some(p)) => self.counts[g][p],
            _ => 0,
        }
    }
}

pub fn confusion<S: AsRef<str>>(gold: &[S], pred: &[S], label_set: &[String]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Evaluation(format!(
            "gold has {} labels, predictions {}",
            gold.len(),
            pred.len()
        )));
    }
    let index: HashMap<&str, usize> = label_set
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let lookup = |l: &str| {
        index
            .get(l)
            .copied()
            .ok_or_else(|| Error::Evaluation(format!("unknown label `{l}`")))
    };
    let mut matrix = ConfusionMatrix::zeros(label_set.to_vec());
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (lookup(g.as_ref())?, lookup(p.as_ref())?);
        matrix.counts[g][p] += 1;
    }
    Ok(matrix)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of the label (mean over runs once aggregated).
    pub support: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: Vec<LabelScores>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-label P/R/F1 (undefined ratios count as 0) and their unweighted means
/// over the whole label set.
pub fn macro_prf(matrix: &ConfusionMatrix) -> MacroScores {
    let n = matrix.labels.len();
    let per_label: Vec<LabelScores> = (0..n)
        .map(|k| {
            let tp = matrix.counts[k][k];
            let predicted: u64 = (0..n).map(|g| matrix.counts[g][k]).sum();
            let gold: u64 = matrix.counts[k].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, gold);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            LabelScores {
                label: matrix.labels[k].clone(),
                precision,
                recall,
                f1,
                support: gold as f64,
            }
        })
        .collect();
    let mean = |f: fn(&LabelScores) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_label.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MacroScores {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        per_label,
    }
}

impl MacroScores {
    /// Element-wise mean over runs. Per-label rows are matched by label name;
    /// all runs must share the label set.
    pub fn mean(runs: &[MacroScores]) -> Result<MacroScores> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Evaluation("cannot average zero runs".into()))?;
        let k = runs.len() as f64;
        let avg = |f: &dyn Fn(&MacroScores) -> f64| runs.iter().map(f).sum::<f64>() / k;
        let mut per_label = Vec::with_capacity(first.per_label.len());
        for (i, row) in first.per_label.iter().enumerate() {
            let rows = runs
                .iter()
                .map(|r| {
                    r.per_label
                        .get(i)
                        .filter(|x| x.label == row.label)
                        .ok_or_else(|| Error::Evaluation("runs disagree on label set".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            let lavg = |f: fn(&LabelScores) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
            per_label.push(LabelScores {
                label: row.label.clone(),
                precision: lavg(|s| s.precision),
                recall: lavg(|s| s.recall),
                f1: lavg(|s| s.f1),
                support: lavg(|s| s.support),
            });
        }
        Ok(MacroScores {
            precision: avg(&|r| r.precision),
            recall: avg(&|r| r.recall),
            f1: avg(&|r| r.f1),
            per_label,
        })
    }
}
