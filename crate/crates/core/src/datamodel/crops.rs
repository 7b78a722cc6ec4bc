use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datamodel::{BoundingBox, Crop, FeatureKey};
use crate::error::{Error, Result};

/// One line of the crop manifest handed to the embedding extractor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CropRequest {
    pub image_id: String,
    #[serde(serialize_with = "ser_crop", deserialize_with = "de_crop")]
    pub crop: Crop,
    pub purpose: String,
}

impl CropRequest {
    pub fn key(&self) -> FeatureKey {
        FeatureKey {
            image_id: self.image_id.clone(),
            crop: self.crop,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CropRepr {
    Tag(String),
    Box([u32; 4]),
}

fn ser_crop<S: Serializer>(crop: &Crop, s: S) -> std::result::Result<S::Ok, S::Error> {
    match crop {
        Crop::Full => CropRepr::Tag("full".into()),
        Crop::Box(b) => CropRepr::Box(b.as_array()),
    }
    .serialize(s)
}

fn de_crop<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Crop, D::Error> {
    use serde::de::Error as _;
    match CropRepr::deserialize(d)? {
        CropRepr::Tag(t) if t == "full" => Ok(Crop::Full),
        CropRepr::Tag(t) => Err(D::Error::custom(format!("unknown crop {t:?}"))),
        CropRepr::Box(b) => BoundingBox::try_from(b)
            .map(Crop::Box)
            .map_err(D::Error::custom),
    }
}

pub fn write_crop_manifest(path: impl AsRef<Path>, requests: &[CropRequest]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in requests {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn read_ndjson<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::validation(format!("{what} {} line {}: {e}", path.display(), n + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_crop_manifest(path: impl AsRef<Path>) -> Result<Vec<CropRequest>> {
    read_ndjson(path.as_ref(), "crop manifest")
}

/// One embedded crop as emitted by an extractor, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub image_id: String,
    #[serde(serialize_with = "ser_crop", deserialize_with = "de_crop")]
    pub crop: Crop,
    pub vector: Vec<f32>,
}

impl FeatureRecord {
    pub fn key(&self) -> FeatureKey {
        FeatureKey {
            image_id: self.image_id.clone(),
            crop: self.crop,
        }
    }
}

pub fn read_feature_records(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    read_ndjson(path.as_ref(), "feature file")
}
