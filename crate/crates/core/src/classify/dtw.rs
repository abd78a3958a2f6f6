//! Dynamic time warping with absolute-difference cost and the symmetric
//! `min(D[i-1][j], D[i][j-1], D[i-1][j-1]) + |a_i - b_j|` recursion.

use crate::{Error, Result};

pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("dtw needs two non-empty series"));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, &x) in a.iter().enumerate() {
        for j in 0..m {
            let cost = (x - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Sum of per-channel distances between two equally shaped bundles.
pub fn bundle_distance<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ConfigMismatch(format!(
            "bundle with {} series compared against one with {}",
            a.len(),
            b.len()
        )));
    }
    a.iter().zip(b).map(|(x, y)| dtw_distance(x.as_ref(), y.as_ref())).sum()
}
