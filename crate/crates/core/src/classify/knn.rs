//! k-nearest-neighbour classification of z-scored feature vectors.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-feature standardization fitted on training rows. Constant features
/// get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("cannot fit on zero rows"))?;
        let d = first.len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::ConfigMismatch(format!("row {i} has {} features, expected {d}", rows[i].len())));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::ConfigMismatch(format!(
                "feature vector has {} values, the model expects {}",
                row.len(),
                self.mean.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier {
    pub k: usize,
    pub scaler: ZScore,
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl KnnClassifier {
    /// `k` is clamped to the training size with a warning.
    pub fn fit(rows: &[Vec<f64>], labels: &[String], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let scaler = ZScore::fit(rows)?;
        let k = if k > rows.len() {
            log::warn!("k = {k} exceeds the {} training samples; using k = {}", rows.len(), rows.len());
            rows.len()
        } else {
            k
        };
        let rows = rows.iter().map(|r| scaler.apply(r)).collect::<Result<_>>()?;
        Ok(Self {
            k,
            scaler,
            rows,
            labels: labels.to_vec(),
        })
    }

    /// Majority label of the `k` nearest training rows; ties go to the label
    /// with the smallest summed distance.
    pub fn predict(&self, query: &[f64]) -> Result<String> {
        let q = self.scaler.apply(query)?;
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // (label, votes, summed distance) in order of first appearance.
        let mut tally: Vec<(&str, usize, f64)> = Vec::new();
        for &(d, i) in &dist[..self.k] {
            let label = self.labels[i].as_str();
            match tally.iter_mut().find(|t| t.0 == label) {
                Some(t) => {
                    t.1 += 1;
                    t.2 += d;
                }
                None => tally.push((label, 1, d)),
            }
        }
        let best = tally
            .iter()
            .fold(None::<&(&str, usize, f64)>, |best, t| match best {
                Some(b) if b.1 > t.1 || (b.1 == t.1 && b.2 <= t.2) => Some(b),
                _ => Some(t),
            })
            .expect("k >= 1");
        Ok(best.0.to_string())
    }

    pub fn predict_all(&self, queries: &[Vec<f64>]) -> Result<Vec<String>> {
        queries.iter().map(|q| self.predict(q)).collect()
    }
}
