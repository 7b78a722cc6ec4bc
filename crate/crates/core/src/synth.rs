//! Synthetic embedding model with a context knob.
//!
//! An image `i` of class `c` seen with context fraction λ embeds as
//!
//! ```text
//! x = f_c + λ·(m + h_c + g_i) + ε
//! ```
//!
//! where `f_c` is the class's object signal, `m` a background mean shared by
//! all classes, `h_c` class-correlated context, `g_i` the image's own
//! background and `ε` sensor noise. `g_i` is fixed per image, so sweeping λ
//! models cropping the same picture more or less tightly. Spreads are
//! expected norms: each coordinate draws with standard deviation
//! `σ / sqrt(d)`.
//!
//! With `ctx_overlap = ρ > 0` the context of class `c` leans towards the
//! object direction of class `c + 1`: `h_c = σ_h·(ρ·f̂_{c+1} + sqrt(1-ρ²)·z)`.
//! Full images then carry a decoy cue that a head trained only on tight
//! crops never learns to discount.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cropgeom::{ContextFraction, MULTIPLE_LADDER};
use crate::datamodel::{
    BoundingBox, BoxSource, Crop, CropRequest, DatasetManifest, DerivedBoxes, FeatureKey,
    FeatureStore, ImageRecord,
};
use crate::error::{Error, Result};
use crate::plan::{plan_crops, ModeChoice, PlanRequest};
use crate::rng::{derive_seed, rng_from_seed, EngineRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    /// Norm of each class's object signal `f_c`.
    pub fg_scale: f64,
    /// Norm of the shared background mean `m`.
    pub bg_mean_scale: f64,
    /// Expected norm of the per-image background `g_i`.
    pub bg_spread: f64,
    /// Expected norm of the class context `h_c`.
    pub ctx_scale: f64,
    /// Share of `h_c` aligned with the next class's object, in [0, 1].
    pub ctx_overlap: f64,
    /// Expected norm of the noise `ε`.
    pub noise: f64,
    pub seed: u64,
    pub images_per_class: usize,
    /// Max jitter (pixels) of the sam / salient boxes around the object.
    pub sam_jitter: u32,
    pub salient_jitter: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 5,
            dim: 64,
            fg_scale: 1.0,
            bg_mean_scale: 0.5,
            bg_spread: 2.0,
            ctx_scale: 0.3,
            ctx_overlap: 0.0,
            noise: 0.05,
            seed: 0,
            images_per_class: 200,
            sam_jitter: 4,
            salient_jitter: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::validation("synthetic dimension must be >= 2"));
        }
        if self.classes < 2 {
            return Err(Error::validation("synthetic data needs at least 2 classes"));
        }
        let scales = [
            self.fg_scale,
            self.bg_mean_scale,
            self.bg_spread,
            self.ctx_scale,
            self.noise,
        ];
        if scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::validation("synthetic scales must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.ctx_overlap) {
            return Err(Error::validation("ctx_overlap must lie in [0, 1]"));
        }
        Ok(())
    }
}

// stream tags for derive_seed
const STREAM_CLASS: u64 = 1 << 60;
const STREAM_CONTEXT: u64 = 2 << 60;
const STREAM_BG_MEAN: u64 = 3 << 60;
const STREAM_IMAGE: u64 = 4 << 60;
const STREAM_NOISE: u64 = 5 << 60;
const STREAM_GEOMETRY: u64 = 6 << 60;

fn gaussian(rng: &mut EngineRng, dim: usize, std: f64) -> Vec<f64> {
    (0..dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn direction(rng: &mut EngineRng, dim: usize, scale: f64) -> Vec<f64> {
    loop {
        let v = gaussian(rng, dim, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| scale * x / n).collect();
        }
    }
}

/// The fixed class-level vectors of a [`SynthConfig`].
#[derive(Debug, Clone)]
pub struct SynthModel {
    config: SynthConfig,
    object: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
    bg_mean: Vec<f64>,
}

impl SynthModel {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let per_coord = |s: f64| s / (d as f64).sqrt();
        let unit: Vec<Vec<f64>> = (0..config.classes)
            .map(|c| {
                let mut rng = rng_from_seed(derive_seed(config.seed, STREAM_CLASS | c as u64));
                direction(&mut rng, d, 1.0)
            })
            .collect();
        let object = unit
            .iter()
            .map(|u| u.iter().map(|v| config.fg_scale * v).collect())
            .collect();
        let rho = config.ctx_overlap;
        let context = (0..config.classes)
            .map(|c| {
                let mut rng = rng_from_seed(derive_seed(config.seed, STREAM_CONTEXT | c as u64));
                let z = gaussian(&mut rng, d, per_coord(config.ctx_scale));
                let decoy = &unit[(c + 1) % config.classes];
                z.iter()
                    .zip(decoy)
                    .map(|(z, u)| config.ctx_scale * rho * u + (1.0 - rho * rho).sqrt() * z)
                    .collect()
            })
            .collect();
        let mut rng = rng_from_seed(derive_seed(config.seed, STREAM_BG_MEAN));
        let bg_mean = direction(&mut rng, d, config.bg_mean_scale);
        Ok(SynthModel {
            config,
            object,
            context,
            bg_mean,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn object(&self, class: usize) -> &[f64] {
        &self.object[class]
    }

    pub fn context(&self, class: usize) -> &[f64] {
        &self.context[class]
    }

    pub fn bg_mean(&self) -> &[f64] {
        &self.bg_mean
    }

    fn image_stream(&self, class: usize, image: usize) -> u64 {
        ((class as u64) << 32) | image as u64
    }

    fn background(&self, class: usize, image: usize) -> Vec<f64> {
        let d = self.config.dim;
        let mut rng = rng_from_seed(derive_seed(
            self.config.seed,
            STREAM_IMAGE ^ self.image_stream(class, image),
        ));
        gaussian(&mut rng, d, self.config.bg_spread / (d as f64).sqrt())
    }

    /// Expected feature of class `class` at context `lambda`.
    pub fn class_mean(&self, class: usize, lambda: f64) -> Vec<f64> {
        self.object[class]
            .iter()
            .zip(&self.bg_mean)
            .zip(&self.context[class])
            .map(|((f, m), h)| f + lambda * (m + h))
            .collect()
    }

    /// Embedding of image `image` of class `class` seen with context `lambda`.
    pub fn generate(&self, class: usize, image: usize, lambda: ContextFraction) -> Vec<f64> {
        let l = lambda.get();
        let d = self.config.dim;
        let g = self.background(class, image);
        let mut noise_rng = rng_from_seed(derive_seed(
            derive_seed(self.config.seed, STREAM_NOISE ^ self.image_stream(class, image)),
            l.to_bits(),
        ));
        let eps = gaussian(&mut noise_rng, d, self.config.noise / (d as f64).sqrt());
        (0..d)
            .map(|k| {
                self.object[class][k]
                    + l * (self.bg_mean[k] + self.context[class][k] + g[k])
                    + eps[k]
            })
            .collect()
    }
}

/// Context fraction of `crop` around `object` in a `width × height` image:
/// the mean, over edges with room to grow, of how far the crop edge sits
/// between the object edge and the image border.
pub fn effective_context(crop: &BoundingBox, object: &BoundingBox, width: u32, height: u32) -> f64 {
    if crop.is_full(width, height) {
        return 1.0;
    }
    let edges = [
        (object.x_min() as f64, object.x_min() as f64 - crop.x_min() as f64),
        (object.y_min() as f64, object.y_min() as f64 - crop.y_min() as f64),
        (
            width as f64 - object.x_max() as f64,
            crop.x_max() as f64 - object.x_max() as f64,
        ),
        (
            height as f64 - object.y_max() as f64,
            crop.y_max() as f64 - object.y_max() as f64,
        ),
    ];
    let (sum, n) = edges
        .iter()
        .filter(|(room, _)| *room > 0.0)
        .fold((0.0, 0), |(s, n), (room, grown)| {
            (s + (grown / room).clamp(0.0, 1.0), n + 1)
        });
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}

/// A synthetic dataset: manifest plus the model that embeds its crops.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub model: SynthModel,
}

fn jitter(rng: &mut EngineRng, b: &BoundingBox, amount: u32, width: u32, height: u32) -> BoundingBox {
    if amount == 0 {
        return *b;
    }
    let a = amount as i64;
    let mut shift = |v: u32, lo: i64, hi: i64| (v as i64 + rng.random_range(-a..=a)).clamp(lo, hi) as u32;
    let x0 = shift(b.x_min(), 0, b.x_max() as i64 - 1);
    let y0 = shift(b.y_min(), 0, b.y_max() as i64 - 1);
    let x1 = shift(b.x_max(), x0 as i64 + 1, width as i64);
    let y1 = shift(b.y_max(), y0 as i64 + 1, height as i64);
    BoundingBox::new(x0, y0, x1, y1).expect("jittered box stays ordered")
}

impl SynthDataset {
    pub fn new(config: SynthConfig) -> Result<Self> {
        let model = SynthModel::new(config)?;
        let mut images = Vec::with_capacity(config.classes * config.images_per_class);
        for c in 0..config.classes {
            for i in 0..config.images_per_class {
                let mut rng = rng_from_seed(derive_seed(
                    config.seed,
                    STREAM_GEOMETRY ^ (((c as u64) << 32) | i as u64),
                ));
                let width = rng.random_range(320..=480u32);
                let height = rng.random_range(240..=360u32);
                let bw = (width as f64 * rng.random_range(0.3..0.6)) as u32;
                let bh = (height as f64 * rng.random_range(0.3..0.6)) as u32;
                let x0 = rng.random_range(0..=width - bw);
                let y0 = rng.random_range(0..=height - bh);
                let gt = BoundingBox::new(x0, y0, x0 + bw, y0 + bh)?;
                let sam = jitter(&mut rng, &gt, config.sam_jitter, width, height);
                let salient = jitter(&mut rng, &gt, config.salient_jitter, width, height);
                images.push(ImageRecord {
                    id: image_id(c, i),
                    width,
                    height,
                    label: class_name(c),
                    gt_box: Some(gt),
                    point: None,
                    derived_boxes: DerivedBoxes {
                        sam: Some(sam),
                        salient: Some(salient),
                    },
                });
            }
        }
        let manifest = DatasetManifest {
            name: format!("synth-{}", config.seed),
            classes: (0..config.classes).map(class_name).collect(),
            images,
        }
        .validated()?;
        Ok(SynthDataset { manifest, model })
    }

    fn locate(&self, image_id: &str) -> Result<(usize, usize, &ImageRecord)> {
        let parse = || -> Option<(usize, usize)> {
            let rest = image_id.strip_prefix("syn_c")?;
            let (c, i) = rest.split_once("_i")?;
            Some((c.parse().ok()?, i.parse().ok()?))
        };
        let (c, i) = parse().ok_or_else(|| Error::validation(format!("not a synthetic image id: {image_id}")))?;
        let idx = c * self.model.config.images_per_class + i;
        let rec = self
            .manifest
            .images
            .get(idx)
            .filter(|r| r.id == image_id)
            .ok_or_else(|| Error::validation(format!("unknown synthetic image {image_id}")))?;
        Ok((c, i, rec))
    }

    /// Context fraction that `crop` represents for this image.
    pub fn lambda_of(&self, key: &FeatureKey) -> Result<f64> {
        let (_, _, rec) = self.locate(&key.image_id)?;
        Ok(match key.crop {
            Crop::Full => 1.0,
            Crop::Box(b) => {
                b.check_fits(rec.width, rec.height)?;
                effective_context(&b, &rec.gt_box.expect("synthetic images carry gt"), rec.width, rec.height)
            }
        })
    }

    pub fn embed(&self, key: &FeatureKey) -> Result<Vec<f64>> {
        let (c, i, _) = self.locate(&key.image_id)?;
        let l = ContextFraction::new(self.lambda_of(key)?)?;
        Ok(self.model.generate(c, i, l))
    }

    /// Embeds every requested crop into a fresh store.
    pub fn fill_store(&self, requests: &[CropRequest]) -> Result<FeatureStore> {
        let mut store = FeatureStore::new(self.model.config.dim)?;
        for r in requests {
            let key = r.key();
            if !store.contains(&key) {
                let v = self.embed(&key)?;
                store.insert_f64(key, &v)?;
            }
        }
        Ok(store)
    }

    /// Crop requests covering every augmentation mode for every box source,
    /// the inference ladder on salient boxes and the analysis grid on gt.
    pub fn standard_requests(&self) -> Result<Vec<CropRequest>> {
        let modes: Vec<ModeChoice> = ["replace", "minimal", "pad60", "pad150", "ctx20", "ctx50", "multiple"]
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_>>()?;
        let req = PlanRequest {
            sources: vec![BoxSource::Gt, BoxSource::Sam, BoxSource::Salient],
            modes,
            fusion: Some((
                BoxSource::Salient,
                MULTIPLE_LADDER.iter().map(|&l| ContextFraction::new(l)).collect::<Result<_>>()?,
            )),
            analysis_grid: (0..=10)
                .map(|k| ContextFraction::new(k as f64 / 10.0))
                .collect::<Result<_>>()?,
            skip_missing: false,
        };
        plan_crops(&self.manifest, &req)
    }

    /// Store covering [`SynthDataset::standard_requests`].
    pub fn standard_store(&self) -> Result<FeatureStore> {
        self.fill_store(&self.standard_requests()?)
    }
}

pub fn class_name(c: usize) -> String {
    format!("class{c}")
}

pub fn image_id(c: usize, i: usize) -> String {
    format!("syn_c{c}_i{i}")
}
