//! Soft K-means pseudolabeling of an unlabeled query pool.
//!
//! Clusters start at the per-class means of the labeled features. Each
//! iteration softly assigns query points by a softmax over negative squared
//! distances, then recomputes centroids from the labeled features (weight 1
//! on their own class) plus the query points (soft weights).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftKMeansConfig {
    /// Inverse temperature of the soft assignment.
    pub beta: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
}

impl Default for SoftKMeansConfig {
    fn default() -> Self {
        SoftKMeansConfig {
            beta: 5.0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

impl SoftKMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::validation(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::validation(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub centroids: Vec<Vec<f64>>,
    /// One row per query point; rows sum to 1.
    pub responsibilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftKMeansResult {
    pub pseudolabels: Vec<usize>,
    pub state: ClusterState,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Arithmetic mean of each class's features.
pub fn init_centroids(per_class: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    per_class
        .iter()
        .enumerate()
        .map(|(c, feats)| {
            let first = feats
                .first()
                .ok_or_else(|| Error::validation(format!("class {c} has no labeled features")))?;
            let mut mean = vec![0.0; first.len()];
            for f in feats {
                if f.len() != mean.len() {
                    return Err(Error::validation(format!("class {c}: mixed feature dimensions")));
                }
                for (m, v) in mean.iter_mut().zip(f) {
                    *m += v;
                }
            }
            let n = feats.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            Ok(mean)
        })
        .collect()
}

/// Row-normalized `exp(-beta · ‖x − c‖²)`.
pub fn soft_assign(features: &[Vec<f64>], centroids: &[Vec<f64>], beta: f64) -> Result<Vec<Vec<f64>>> {
    let dim = centroids
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::validation("no centroids"))?;
    features
        .iter()
        .map(|x| {
            if x.len() != dim || centroids.iter().any(|c| c.len() != dim) {
                return Err(Error::validation("feature and centroid dimensions differ"));
            }
            let scores: Vec<f64> = centroids.iter().map(|c| -beta * sq_dist(x, c)).collect();
            Ok(crate::probe::softmax(&scores))
        })
        .collect()
}

/// Runs soft K-means from the labeled class means and returns hard
/// pseudolabels (argmax of the final responsibilities).
pub fn run_soft_kmeans(
    ways: usize,
    support: &[Vec<f64>],
    support_labels: &[usize],
    query: &[Vec<f64>],
    config: &SoftKMeansConfig,
) -> Result<SoftKMeansResult> {
    config.validate()?;
    if support.len() != support_labels.len() {
        return Err(Error::validation("support features and labels differ in length"));
    }
    let mut per_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); ways];
    for (f, &l) in support.iter().zip(support_labels) {
        if l >= ways {
            return Err(Error::validation(format!("label {l} outside [0, {ways})")));
        }
        per_class[l].push(f.clone());
    }
    let mut centroids = init_centroids(&per_class)?;
    let dim = centroids[0].len();
    if query.iter().any(|q| q.len() != dim) {
        return Err(Error::validation("query dimension differs from support"));
    }
    // labeled sums and counts are fixed across iterations
    let mut labeled_sum = vec![vec![0.0; dim]; ways];
    let mut labeled_count = vec![0.0; ways];
    for (c, feats) in per_class.iter().enumerate() {
        labeled_count[c] = feats.len() as f64;
        for f in feats {
            for (s, v) in labeled_sum[c].iter_mut().zip(f) {
                *s += v;
            }
        }
    }

    let mut iterations = 0;
    let mut converged = query.is_empty();
    while !converged && iterations < config.max_iters {
        let resp = soft_assign(query, &centroids, config.beta)?;
        let mut next = labeled_sum.clone();
        let mut mass = labeled_count.clone();
        for (x, r) in query.iter().zip(&resp) {
            for c in 0..ways {
                mass[c] += r[c];
                for (s, v) in next[c].iter_mut().zip(x) {
                    *s += r[c] * v;
                }
            }
        }
        for (c, row) in next.iter_mut().enumerate() {
            row.iter_mut().for_each(|v| *v /= mass[c]);
        }
        let displacement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        converged = displacement < config.tol;
    }

    let responsibilities = soft_assign(query, &centroids, config.beta)?;
    let pseudolabels = responsibilities.iter().map(|r| argmax(r).0).collect();
    Ok(SoftKMeansResult {
        pseudolabels,
        state: ClusterState {
            centroids,
            responsibilities,
        },
        iterations,
        converged,
    })
}
