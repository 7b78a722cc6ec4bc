//! Latent-space statistics of cropped versus uncropped embeddings.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cropgeom::ContextFraction;
use crate::error::{Error, Result};

fn mean_of(feats: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; feats[0].len()];
    for f in feats {
        for (a, v) in m.iter_mut().zip(f) {
            *a += v;
        }
    }
    let n = feats.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_groups(groups: &[Vec<Vec<f64>>]) -> Result<usize> {
    if groups.is_empty() {
        return Err(Error::validation("no classes given"));
    }
    let mut dim = None;
    for (c, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::validation(format!("class {c} is empty")));
        }
        for f in g {
            match dim {
                None => dim = Some(f.len()),
                Some(d) if d != f.len() => {
                    return Err(Error::validation(format!("class {c}: mixed feature dimensions")))
                }
                _ => {}
            }
        }
    }
    Ok(dim.unwrap_or(0))
}

/// Per-class centroids.
pub fn class_centroids(groups: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    check_groups(groups)?;
    Ok(groups.iter().map(|g| mean_of(g)).collect())
}

/// Mean over classes of the mean squared distance of members to their class
/// centroid (the trace of the population covariance).
pub fn class_variance(groups: &[Vec<Vec<f64>>]) -> Result<f64> {
    let centroids = class_centroids(groups)?;
    let total: f64 = groups
        .iter()
        .zip(&centroids)
        .map(|(g, c)| g.iter().map(|f| dist(f, c).powi(2)).sum::<f64>() / g.len() as f64)
        .sum();
    Ok(total / groups.len() as f64)
}

/// Mean over classes of the distance between each class centroid and its
/// reference centroid.
pub fn centroid_shift(groups: &[Vec<Vec<f64>>], reference: &[Vec<f64>]) -> Result<f64> {
    if groups.len() != reference.len() {
        return Err(Error::validation(format!(
            "{} classes but {} reference centroids",
            groups.len(),
            reference.len()
        )));
    }
    let centroids = class_centroids(groups)?;
    let mut total = 0.0;
    for (c, (a, b)) in centroids.iter().zip(reference).enumerate() {
        if a.len() != b.len() {
            return Err(Error::validation(format!("class {c}: reference dimension differs")));
        }
        total += dist(a, b);
    }
    Ok(total / groups.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub lambda: f64,
    pub variance: f64,
    pub centroid_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub points: Vec<VariancePoint>,
}

/// Variance and centroid shift at each context fraction. `at_lambda(λ)`
/// returns class-grouped features at that fraction, and the λ=1 groups
/// provide the reference centroids.
pub fn variance_curve<F>(grid: &[ContextFraction], mut at_lambda: F) -> Result<VarianceCurve>
where
    F: FnMut(ContextFraction) -> Result<Vec<Vec<Vec<f64>>>>,
{
    let full = ContextFraction::new(1.0)?;
    let reference = class_centroids(&at_lambda(full)?)?;
    let mut points = Vec::with_capacity(grid.len());
    for &l in grid {
        let groups = at_lambda(l)?;
        let centroid_distance = if l.get() == 1.0 {
            0.0
        } else {
            centroid_shift(&groups, &reference)?
        };
        points.push(VariancePoint {
            lambda: l.get(),
            variance: class_variance(&groups)?,
            centroid_distance,
        });
    }
    Ok(VarianceCurve { points })
}

/// Mean and top-2 principal axes of a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub total_variance: f64,
}

const RANK_RTOL: f64 = 1e-10;

/// Fits the 2-D PCA basis of `reference` from its population covariance.
///
/// Each axis is signed so that its largest-magnitude component is positive.
pub fn pca_fit(reference: &[Vec<f64>]) -> Result<PcaBasis> {
    if reference.len() < 3 {
        return Err(Error::validation(format!(
            "pca needs at least 3 samples, got {}",
            reference.len()
        )));
    }
    let d = reference[0].len();
    if reference.iter().any(|f| f.len() != d) {
        return Err(Error::validation("pca input has mixed feature dimensions"));
    }
    if d < 2 {
        return Err(Error::validation("pca needs dimension >= 2"));
    }
    let mean = mean_of(reference);
    let n = reference.len();
    let centered = DMatrix::from_fn(n, d, |i, j| reference[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > top * RANK_RTOL && eig.eigenvalues[i] > 0.0)
        .count();
    if rank < 2 {
        return Err(Error::DegenerateCovariance { rank });
    }
    let axis = |k: usize| {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    Ok(PcaBasis {
        mean,
        axes: [axis(0), axis(1)],
        explained_variance: [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]],
        total_variance: eig.eigenvalues.iter().sum(),
    })
}

pub fn pca_project(basis: &PcaBasis, features: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let d = basis.mean.len();
    features
        .iter()
        .map(|f| {
            if f.len() != d {
                return Err(Error::validation(format!(
                    "feature dimension {} does not match basis {d}",
                    f.len()
                )));
            }
            let dot = |axis: &[f64]| {
                axis.iter()
                    .zip(f.iter().zip(&basis.mean))
                    .map(|(a, (x, m))| a * (x - m))
                    .sum::<f64>()
            };
            Ok([dot(&basis.axes[0]), dot(&basis.axes[1])])
        })
        .collect()
}
