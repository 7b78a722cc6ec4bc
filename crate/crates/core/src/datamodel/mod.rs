//! Dataset manifest, bounding boxes, feature keys and the on-disk caches
//! shared by every other module.

mod cache;
mod crops;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{FeatureStore, MAGIC};
pub use crops::{read_crop_manifest, read_feature_records, write_crop_manifest, CropRequest, FeatureRecord};

/// Axis-aligned pixel rectangle, half-open: `[x_min, x_max) × [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::validation(format!(
                "malformed box ({x_min},{y_min},{x_max},{y_max}): need x_min < x_max and y_min < y_max"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// The box covering a whole `width × height` image.
    pub fn full(width: u32, height: u32) -> Result<Self> {
        Self::new(0, 0, width, height)
    }

    pub fn x_min(&self) -> u32 {
        self.x_min
    }
    pub fn y_min(&self) -> u32 {
        self.y_min
    }
    pub fn x_max(&self) -> u32 {
        self.x_max
    }
    pub fn y_max(&self) -> u32 {
        self.y_max
    }
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }
    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }
    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn check_fits(&self, width: u32, height: u32) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "box {self} exceeds image bounds {width}x{height}"
            )))
        }
    }

    pub fn is_full(&self, width: u32, height: u32) -> bool {
        self.x_min == 0 && self.y_min == 0 && self.x_max == width && self.y_max == height
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min)) as u64;
        let iy = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min)) as u64;
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = Error;
    fn try_from(v: [u32; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.as_array()
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

impl FromStr for BoundingBox {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::validation(format!("bad box {s:?}: {e}")))?;
        let arr: [u32; 4] = parts
            .try_into()
            .map_err(|_| Error::validation(format!("bad box {s:?}: need 4 integers")))?;
        BoundingBox::try_from(arr)
    }
}

/// Which region of an image an embedding was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Crop {
    Full,
    Box(BoundingBox),
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crop::Full => f.write_str("full"),
            Crop::Box(b) => b.fmt(f),
        }
    }
}

impl FromStr for Crop {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            Ok(Crop::Full)
        } else {
            s.parse().map(Crop::Box)
        }
    }
}

/// Canonical lookup key into a [`FeatureStore`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureKey {
    pub image_id: String,
    pub crop: Crop,
}

impl FeatureKey {
    pub fn full(image_id: impl Into<String>) -> Self {
        FeatureKey {
            image_id: image_id.into(),
            crop: Crop::Full,
        }
    }

    pub fn boxed(image_id: impl Into<String>, bbox: BoundingBox) -> Self {
        FeatureKey {
            image_id: image_id.into(),
            crop: Crop::Box(bbox),
        }
    }
}

/// Builds a key from raw coordinates, validating the box.
pub fn canonical_key(image_id: &str, crop: Option<[u32; 4]>) -> Result<FeatureKey> {
    let crop = match crop {
        None => Crop::Full,
        Some(c) => Crop::Box(BoundingBox::try_from(c)?),
    };
    Ok(FeatureKey {
        image_id: image_id.to_owned(),
        crop,
    })
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.image_id, self.crop)
    }
}

impl FromStr for FeatureKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (id, crop) = s
            .rsplit_once('#')
            .ok_or_else(|| Error::validation(format!("bad feature key {s:?}")))?;
        Ok(FeatureKey {
            image_id: id.to_owned(),
            crop: crop.parse()?,
        })
    }
}

/// Boxes produced by automatic object localization, cached in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedBoxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sam: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salient: Option<BoundingBox>,
}

/// Where an object box comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxSource {
    Gt,
    Sam,
    Salient,
}

impl BoxSource {
    pub fn name(&self) -> &'static str {
        match self {
            BoxSource::Gt => "gt",
            BoxSource::Sam => "sam",
            BoxSource::Salient => "salient",
        }
    }
}

impl FromStr for BoxSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(BoxSource::Gt),
            "sam" => Ok(BoxSource::Sam),
            "salient" => Ok(BoxSource::Salient),
            other => Err(Error::validation(format!("unknown box source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_box: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "is_empty_derived")]
    pub derived_boxes: DerivedBoxes,
}

fn is_empty_derived(d: &DerivedBoxes) -> bool {
    d.sam.is_none() && d.salient.is_none()
}

impl ImageRecord {
    pub fn full_box(&self) -> BoundingBox {
        // width/height are validated positive on load
        BoundingBox {
            x_min: 0,
            y_min: 0,
            x_max: self.width,
            y_max: self.height,
        }
    }

    pub fn box_for(&self, source: BoxSource) -> Option<BoundingBox> {
        match source {
            BoxSource::Gt => self.gt_box,
            BoxSource::Sam => self.derived_boxes.sam,
            BoxSource::Salient => self.derived_boxes.salient,
        }
    }

    /// The annotator click: the recorded point, else the center of the gt box.
    pub fn click_point(&self) -> Option<[u32; 2]> {
        self.point.or_else(|| {
            self.gt_box.map(|b| {
                [
                    b.x_min + (b.width() - 1) / 2,
                    b.y_min + (b.height() - 1) / 2,
                ]
            })
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::validation(format!("image {:?}: {msg}", self.id));
        if self.id.is_empty() {
            return Err(Error::validation("image with empty id"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(bad(format!("zero size {}x{}", self.width, self.height)));
        }
        let boxes = [
            ("gt_box", self.gt_box),
            ("derived_boxes.sam", self.derived_boxes.sam),
            ("derived_boxes.salient", self.derived_boxes.salient),
        ];
        for (name, b) in boxes {
            if let Some(b) = b {
                if !b.fits(self.width, self.height) {
                    return Err(bad(format!(
                        "{name} {b} exceeds image bounds {}x{}",
                        self.width, self.height
                    )));
                }
            }
        }
        if let Some([x, y]) = self.point {
            if x >= self.width || y >= self.height {
                return Err(bad(format!("point ({x},{y}) outside image")));
            }
            if let Some(gt) = self.gt_box {
                if !gt.contains_point(x, y) {
                    return Err(bad(format!("point ({x},{y}) outside gt_box {gt}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub classes: Vec<String>,
    pub images: Vec<ImageRecord>,
}

impl DatasetManifest {
    /// Validates every record; fills `classes` from the images when absent.
    pub fn validated(mut self) -> Result<Self> {
        if self.classes.is_empty() {
            let mut seen = HashSet::new();
            for img in &self.images {
                if seen.insert(img.label.clone()) {
                    self.classes.push(img.label.clone());
                }
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let classes: HashSet<&str> = self.classes.iter().map(String::as_str).collect();
        if classes.len() != self.classes.len() {
            return Err(Error::validation("duplicate class labels in manifest"));
        }
        let mut ids = HashSet::new();
        for img in &self.images {
            img.validate()?;
            if !ids.insert(img.id.as_str()) {
                return Err(Error::validation(format!("duplicate image id {:?}", img.id)));
            }
            if !classes.contains(img.label.as_str()) {
                return Err(Error::validation(format!(
                    "image {:?}: label {:?} not in classes",
                    img.id, img.label
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        m.validated()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Index from image id to record position.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    /// Images of each class, in manifest order.
    pub fn by_class(&self) -> BTreeMap<&str, Vec<&ImageRecord>> {
        let mut out: BTreeMap<&str, Vec<&ImageRecord>> = BTreeMap::new();
        for c in &self.classes {
            out.insert(c.as_str(), Vec::new());
        }
        for img in &self.images {
            out.entry(img.label.as_str()).or_default().push(img);
        }
        out
    }
}
