//! Gesture classifiers and evaluation.

pub mod dtw;
pub mod knn;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::{seed, Error, Result};

pub use dtw::{bundle_distance, dtw_distance};
pub use knn::{KnnClassifier, ZScore};

/// Nearest training bundle by summed DTW distance; ties go to the lowest
/// training index. Returns `(index, label)`.
pub fn dtw_1nn_classify<'a, S: AsRef<[f64]>>(
    train: &'a [(Vec<S>, String)],
    query: &[S],
) -> Result<(usize, &'a str)> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, (bundle, _)) in train.iter().enumerate() {
        let d = bundle_distance(bundle, query)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok((best.1, &train[best.1].1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metrics in percent; confusion rows are normalized by true-class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
    pub confusion: Vec<Vec<f64>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate<S: AsRef<str>>(predictions: &[S], truths: &[S], classes: &[String]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to evaluate"));
    }
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let lookup = |s: &str| {
        index
            .get(s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown label '{s}'")))
    };
    let c = classes.len();
    let mut counts = vec![vec![0usize; c]; c];
    for (p, t) in predictions.iter().zip(truths) {
        counts[lookup(t.as_ref())?][lookup(p.as_ref())?] += 1;
    }
    let total = predictions.len();
    let correct: usize = (0..c).map(|i| counts[i][i]).sum();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|i| {
            let support: usize = counts[i].iter().sum();
            let predicted: usize = counts.iter().map(|r| r[i]).sum();
            let precision = ratio(counts[i][i], predicted);
            let recall = ratio(counts[i][i], support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: classes[i].clone(),
                support,
                precision: 100.0 * precision,
                recall: 100.0 * recall,
                f1: 100.0 * f1,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    let confusion = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter().map(|&v| ratio(v, n)).collect()
        })
        .collect();
    Ok(EvalReport {
        accuracy: 100.0 * ratio(correct, total),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        classes: classes.to_vec(),
        per_class,
        counts,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train_fraction_pct: u32,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffled split. Each class with at least two samples keeps at
/// least one on either side.
pub fn stratified_split<S: AsRef<str>>(labels: &[S], train_fraction: f64, split_seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_ref()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ci, (_, mut idx)) in by_class.into_iter().enumerate() {
        let mut rng = seed::rng(seed::derive(split_seed, ci as u64));
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut n_train = (train_fraction * n as f64).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        } else {
            n_train = n;
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        seed: split_seed,
        train_fraction_pct: (train_fraction * 100.0).round() as u32,
        train,
        test,
    })
}

/// Test-side predictions of one classifier over a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub indices: Vec<usize>,
    pub predicted: Vec<String>,
    pub truth: Vec<String>,
}

impl Predictions {
    pub fn evaluate(&self, classes: &[String]) -> Result<EvalReport> {
        evaluate(&self.predicted, &self.truth, classes)
    }
}

/// Fit k-NN on the split's training rows and predict its test rows.
pub fn knn_split_predict(rows: &[Vec<f64>], labels: &[String], split: &Split, k: usize) -> Result<Predictions> {
    let train: Vec<Vec<f64>> = split.train.iter().map(|&i| rows[i].clone()).collect();
    let train_labels: Vec<String> = split.train.iter().map(|&i| labels[i].clone()).collect();
    let knn = KnnClassifier::fit(&train, &train_labels, k)?;
    Ok(Predictions {
        indices: split.test.clone(),
        predicted: split.test.iter().map(|&i| knn.predict(&rows[i])).collect::<Result<_>>()?,
        truth: split.test.iter().map(|&i| labels[i].clone()).collect(),
    })
}

/// DTW 1-NN over per-sample bundles.
pub fn dtw_split_predict<S: AsRef<[f64]> + Clone>(
    bundles: &[Vec<S>],
    labels: &[String],
    split: &Split,
) -> Result<Predictions> {
    let train: Vec<(Vec<S>, String)> = split
        .train
        .iter()
        .map(|&i| (bundles[i].clone(), labels[i].clone()))
        .collect();
    let predicted = split
        .test
        .iter()
        .map(|&i| dtw_1nn_classify(&train, &bundles[i]).map(|(_, l)| l.to_string()))
        .collect::<Result<_>>()?;
    Ok(Predictions {
        indices: split.test.clone(),
        predicted,
        truth: split.test.iter().map(|&i| labels[i].clone()).collect(),
    })
}

/// Sorted distinct labels.
pub fn class_set<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    let mut v: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
    v.sort();
    v.dedup();
    v
}
