//! Linear softmax head trained on frozen embeddings with full-batch
//! gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_weight: f64,
    pub normalize_features: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2_weight: 1e-4,
            normalize_features: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be positive"));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(Error::validation("l2_weight must be non-negative"));
        }
        Ok(())
    }
}

/// Scales `x` to unit Euclidean norm.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::validation("cannot normalize a zero or non-finite vector"));
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

/// Weight matrix (ways × dim, row-major) and bias of a softmax classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    ways: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Inputs are scaled to unit norm before the affine map.
    pub normalize: bool,
    /// Objective value before each step and after the last one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(ways: usize, dim: usize, normalize: bool) -> Self {
        LinearHead {
            ways,
            dim,
            weights: vec![0.0; ways * dim],
            bias: vec![0.0; ways],
            normalize,
            loss_history: Vec::new(),
        }
    }

    pub fn from_parts(ways: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != ways * dim || bias.len() != ways {
            return Err(Error::validation("head parameter shapes do not match ways x dim"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::validation("head parameters must be finite"));
        }
        Ok(LinearHead {
            ways,
            dim,
            weights,
            bias,
            normalize: false,
            loss_history: Vec::new(),
        })
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::validation(format!(
                "feature has dimension {}, head expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Logits for an already-preprocessed input.
    fn raw_logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if self.normalize {
            Ok(self.raw_logits(&normalize(x)?))
        } else {
            Ok(self.raw_logits(x))
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Most probable class (lowest index on ties) and its probability.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index and value of the maximum; the first index wins ties.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Weighted mean softmax cross-entropy plus `l2_weight · ‖W‖²` over a
/// fixed, preprocessed training set.
#[derive(Debug, Clone)]
pub struct Objective {
    ways: usize,
    dim: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    weights: Vec<f64>,
    weight_sum: f64,
    l2_weight: f64,
}

impl Objective {
    pub fn new(
        ways: usize,
        features: &[Vec<f64>],
        labels: &[usize],
        sample_weights: Option<&[f64]>,
        l2_weight: f64,
        normalize_features: bool,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::validation("empty training set"));
        }
        if features.len() != labels.len() {
            return Err(Error::validation(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::validation("zero-dimensional features"));
        }
        for (i, f) in features.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::validation(format!("feature {i} has dimension {}", f.len())));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("feature {i} is not finite")));
            }
        }
        let mut present = vec![false; ways];
        for &l in labels {
            if l >= ways {
                return Err(Error::validation(format!("label {l} outside [0, {ways})")));
            }
            present[l] = true;
        }
        if let Some(c) = present.iter().position(|p| !p) {
            return Err(Error::validation(format!("class {c} has no training samples")));
        }
        let weights = match sample_weights {
            Some(w) => {
                if w.len() != features.len() {
                    return Err(Error::validation("sample weight count mismatch"));
                }
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::validation("sample weights must be finite and non-negative"));
                }
                w.to_vec()
            }
            None => vec![1.0; features.len()],
        };
        let weight_sum: f64 = weights.iter().sum();
        if weight_sum <= 0.0 {
            return Err(Error::validation("sample weights sum to zero"));
        }
        let features = if normalize_features {
            features.iter().map(|f| normalize(f)).collect::<Result<_>>()?
        } else {
            features.to_vec()
        };
        Ok(Objective {
            ways,
            dim,
            features,
            labels: labels.to_vec(),
            weights,
            weight_sum,
            l2_weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss(&self, head: &LinearHead) -> f64 {
        self.evaluate(head, false).0
    }

    /// Gradient with respect to (W, b), same layout as the head.
    pub fn gradient(&self, head: &LinearHead) -> (Vec<f64>, Vec<f64>) {
        let (_, gw, gb) = self.evaluate(head, true);
        (gw, gb)
    }

    fn evaluate(&self, head: &LinearHead, want_grad: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let (w, d) = (self.ways, self.dim);
        let mut gw = if want_grad { vec![0.0; w * d] } else { Vec::new() };
        let mut gb = if want_grad { vec![0.0; w] } else { Vec::new() };
        let mut loss = 0.0;
        for ((x, &y), &omega) in self.features.iter().zip(&self.labels).zip(&self.weights) {
            let logits = head.raw_logits(x);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            loss += omega * (lse - logits[y]);
            if want_grad {
                for c in 0..w {
                    let p = (logits[c] - lse).exp();
                    let delta = omega * (p - if c == y { 1.0 } else { 0.0 });
                    gb[c] += delta;
                    for (g, v) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                        *g += delta * v;
                    }
                }
            }
        }
        let inv = 1.0 / self.weight_sum;
        loss *= inv;
        loss += self.l2_weight * head.weights.iter().map(|v| v * v).sum::<f64>();
        if want_grad {
            for (g, wv) in gw.iter_mut().zip(&head.weights) {
                *g = *g * inv + 2.0 * self.l2_weight * wv;
            }
            for g in &mut gb {
                *g *= inv;
            }
        }
        (loss, gw, gb)
    }
}

/// Trains a zero-initialized head by full-batch gradient descent.
pub fn train_head(
    ways: usize,
    features: &[Vec<f64>],
    labels: &[usize],
    sample_weights: Option<&[f64]>,
    config: &TrainConfig,
) -> Result<LinearHead> {
    config.validate()?;
    let objective = Objective::new(
        ways,
        features,
        labels,
        sample_weights,
        config.l2_weight,
        config.normalize_features,
    )?;
    let mut head = LinearHead::zeros(ways, objective.dim(), config.normalize_features);
    let mut history = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, gw, gb) = objective.evaluate(&head, true);
        history.push(loss);
        for (p, g) in head.weights.iter_mut().zip(&gw) {
            *p -= config.learning_rate * g;
        }
        for (p, g) in head.bias.iter_mut().zip(&gb) {
            *p -= config.learning_rate * g;
        }
    }
    history.push(objective.loss(&head));
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("training diverged to a non-finite loss".into()));
    }
    head.loss_history = history;
    Ok(head)
}

/// JSON export of a trained head with its class labels.
#[derive(Debug, Serialize)]
pub struct HeadExport<'a> {
    pub classes: &'a [String],
    pub weights: Vec<&'a [f64]>,
    pub bias: &'a [f64],
    pub normalize: bool,
}

impl<'a> HeadExport<'a> {
    pub fn new(head: &'a LinearHead, classes: &'a [String]) -> Self {
        HeadExport {
            classes,
            weights: head.weights.chunks_exact(head.dim).collect(),
            bias: &head.bias,
            normalize: head.normalize,
        }
    }
}
