//! Training-method resolution and crop-manifest planning.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cropgeom::{
    interpolate_context, plan_augments, AugmentMode, AugmentPlan, ContextFraction, DEFAULT_PAD_PX,
};
use crate::datamodel::{BoundingBox, BoxSource, Crop, CropRequest, DatasetManifest, FeatureKey, ImageRecord};
use crate::error::{Error, Result};

/// The augmentation applied when a method names only its box source:
/// one padded crop for human boxes, the three-crop ladder otherwise.
pub fn default_mode(source: BoxSource) -> AugmentMode {
    match source {
        BoxSource::Gt => AugmentMode::PadPx(DEFAULT_PAD_PX),
        BoxSource::Sam | BoxSource::Salient => AugmentMode::Multiple,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeChoice {
    SourceDefault,
    Mode(AugmentMode),
}

impl ModeChoice {
    pub fn resolve(self, source: BoxSource) -> AugmentMode {
        match self {
            ModeChoice::SourceDefault => default_mode(source),
            ModeChoice::Mode(m) => m,
        }
    }
}

impl FromStr for ModeChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "default" {
            Ok(ModeChoice::SourceDefault)
        } else {
            s.parse().map(ModeChoice::Mode)
        }
    }
}

impl fmt::Display for ModeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeChoice::SourceDefault => f.write_str("default"),
            ModeChoice::Mode(m) => m.fmt(f),
        }
    }
}

/// How the support set of an episode is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Method {
    name: String,
    augment: Option<(BoxSource, AugmentMode)>,
}

impl Method {
    pub fn baseline() -> Self {
        Method {
            name: "baseline".into(),
            augment: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn augment(&self) -> Option<(BoxSource, AugmentMode)> {
        self.augment
    }
}

impl FromStr for Method {
    type Err = Error;
    /// `baseline`, `<source>-<mode>` or a bare `<mode>` (ground-truth boxes).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "baseline" {
            return Ok(Method::baseline());
        }
        let (source, mode) = match s.split_once('-') {
            Some((src, mode)) if src.parse::<BoxSource>().is_ok() => (src.parse()?, mode),
            _ => (BoxSource::Gt, s),
        };
        let mode: ModeChoice = mode.parse()?;
        Ok(Method {
            name: s.to_owned(),
            augment: Some((source, mode.resolve(source))),
        })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Key for `crop` of `image`; a crop covering the whole image is the
/// full-image key.
pub fn crop_key(image: &ImageRecord, crop: &BoundingBox) -> FeatureKey {
    if crop.is_full(image.width, image.height) {
        FeatureKey::full(&image.id)
    } else {
        FeatureKey::boxed(&image.id, *crop)
    }
}

/// Augmentation plan for one image, falling back to the whole image when
/// the box source has no box for it.
pub fn image_plan(image: &ImageRecord, source: BoxSource, mode: AugmentMode) -> Result<AugmentPlan> {
    let source_box = match image.box_for(source) {
        Some(b) => b,
        None => {
            log::warn!("image {}: no {} box, using the full image", image.id, source.name());
            image.full_box()
        }
    };
    plan_augments(mode, &source_box, image.width, image.height)
}

/// Feature keys used to train on `image` under `method`.
pub fn training_keys(image: &ImageRecord, method: &Method) -> Result<Vec<FeatureKey>> {
    match method.augment {
        None => Ok(vec![FeatureKey::full(&image.id)]),
        Some((source, mode)) => {
            let plan = image_plan(image, source, mode)?;
            let mut keys = Vec::with_capacity(plan.crops.len() + 1);
            if plan.keep_original {
                keys.push(FeatureKey::full(&image.id));
            }
            for c in &plan.crops {
                let k = crop_key(image, c);
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
            Ok(keys)
        }
    }
}

/// Inference-time crops of `image` on the given ladder; empty when the
/// source has no box (the caller then keeps the full-image prediction).
pub fn ladder_keys(image: &ImageRecord, source: BoxSource, ladder: &[ContextFraction]) -> Result<Vec<FeatureKey>> {
    let Some(b) = image.box_for(source) else {
        log::debug!("image {}: no {} box for inference crops", image.id, source.name());
        return Ok(Vec::new());
    };
    let mut keys = Vec::with_capacity(ladder.len());
    for &l in ladder {
        let k = crop_key(image, &interpolate_context(&b, l, image.width, image.height)?);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    Ok(keys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub sources: Vec<BoxSource>,
    pub modes: Vec<ModeChoice>,
    /// Inference crops: box source and ladder.
    pub fusion: Option<(BoxSource, Vec<ContextFraction>)>,
    /// Ground-truth context fractions for latent analysis.
    pub analysis_grid: Vec<ContextFraction>,
    /// Skip images lacking a requested box instead of failing.
    pub skip_missing: bool,
}

/// Every embedding the requested experiments need, one request per key:
/// each image's full view first, then its crops in request order.
pub fn plan_crops(manifest: &DatasetManifest, req: &PlanRequest) -> Result<Vec<CropRequest>> {
    if !req.skip_missing {
        for &source in &req.sources {
            let missing: Vec<&str> = manifest
                .images
                .iter()
                .filter(|i| i.box_for(source).is_none())
                .map(|i| i.id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(Error::validation(format!(
                    "{} image(s) lack a {} box: {}",
                    missing.len(),
                    source.name(),
                    missing.join(", ")
                )));
            }
        }
    }
    let mut out = Vec::new();
    let mut seen: HashSet<FeatureKey> = HashSet::new();
    let mut push = |out: &mut Vec<CropRequest>, key: FeatureKey, purpose: String| {
        if seen.insert(key.clone()) {
            out.push(CropRequest {
                image_id: key.image_id,
                crop: key.crop,
                purpose,
            });
        }
    };
    for image in &manifest.images {
        push(&mut out, FeatureKey::full(&image.id), "full".into());
        for &source in &req.sources {
            let Some(b) = image.box_for(source) else { continue };
            for &choice in &req.modes {
                let mode = choice.resolve(source);
                let plan = plan_augments(mode, &b, image.width, image.height)?;
                for c in &plan.crops {
                    push(
                        &mut out,
                        crop_key(image, c),
                        format!("support:{}-{}", source.name(), choice),
                    );
                }
            }
        }
        if let Some((source, ladder)) = &req.fusion {
            for k in ladder_keys(image, *source, ladder)? {
                push(&mut out, k, format!("inference:{}", source.name()));
            }
        }
        if !req.analysis_grid.is_empty() {
            if let Some(gt) = image.gt_box {
                for &l in &req.analysis_grid {
                    let c = interpolate_context(&gt, l, image.width, image.height)?;
                    push(&mut out, crop_key(image, &c), "analysis".into());
                }
            }
        }
    }
    Ok(out)
}

/// Count of box-crop requests (excluding full views).
pub fn count_crops(requests: &[CropRequest]) -> usize {
    requests.iter().filter(|r| r.crop != Crop::Full).count()
}
