//! Confidence-gated multi-crop inference.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cropgeom::{ContextFraction, MULTIPLE_LADDER};
use crate::error::{Error, Result};
use crate::probe::LinearHead;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Full-image predictions at or above this confidence skip the crops.
    pub threshold: f64,
    pub crop_ladder: Vec<ContextFraction>,
    /// Whether the full image competes with the crops below threshold.
    pub include_original: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            threshold: 0.8,
            crop_ladder: MULTIPLE_LADDER
                .iter()
                .map(|&l| ContextFraction::new(l).expect("ladder in range"))
                .collect(),
            include_original: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::validation(format!(
                "fusion threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    /// Index into the crop list passed to [`fused_predict`].
    Crop(usize),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Original => f.write_str("original"),
            Provenance::Crop(k) => write!(f, "crop_{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedPrediction {
    pub label: usize,
    pub confidence: f64,
    pub full_label: usize,
    pub full_confidence: f64,
    pub provenance: Provenance,
}

pub fn fused_predict(
    head: &LinearHead,
    full_feature: &[f64],
    crop_features: &[Vec<f64>],
    config: &FusionConfig,
) -> Result<FusedPrediction> {
    config.validate()?;
    let (full_label, full_confidence) = head.predict(full_feature)?;
    let mut best = FusedPrediction {
        label: full_label,
        confidence: full_confidence,
        full_label,
        full_confidence,
        provenance: Provenance::Original,
    };
    if full_confidence >= config.threshold {
        return Ok(best);
    }
    if crop_features.is_empty() {
        log::debug!("no crops below threshold; keeping the full-image prediction");
        return Ok(best);
    }
    let mut first = config.include_original;
    for (k, crop) in crop_features.iter().enumerate() {
        let (label, confidence) = head.predict(crop)?;
        if !first || confidence > best.confidence {
            best.label = label;
            best.confidence = confidence;
            best.provenance = Provenance::Crop(k);
            first = true;
        }
    }
    Ok(best)
}
