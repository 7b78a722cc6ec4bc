use std::collections::BTreeMap;
use std::path::Path;

use crate::datamodel::{BoundingBox, Crop, FeatureKey};
use crate::error::{CodecError, Error, Result};

pub const MAGIC: &[u8; 8] = b"FSCACHE1";

const TAG_FULL: u8 = 0;
const TAG_BOX: u8 = 1;

/// Embeddings keyed by (image id, crop), all of one dimension.
///
/// Vectors are held at cache precision (`f32`) and widened on lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    entries: BTreeMap<FeatureKey, Vec<f32>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::validation(format!("invalid feature dimension {dim}")));
        }
        Ok(FeatureStore {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &FeatureKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &FeatureKey> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, &[f32])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Inserts or replaces an entry.
    pub fn insert(&mut self, key: FeatureKey, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(CodecError::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            }
            .into());
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::NonFinite(key.to_string()).into());
        }
        if key.image_id.len() > u16::MAX as usize {
            return Err(CodecError::IdTooLong(key.image_id.len()).into());
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    /// Narrows a 64-bit vector to cache precision and inserts it.
    pub fn insert_f64(&mut self, key: FeatureKey, vector: &[f64]) -> Result<()> {
        self.insert(key, vector.iter().map(|&v| v as f32).collect())
    }

    pub fn get(&self, key: &FeatureKey) -> Result<&[f32]> {
        self.entries
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::NotFound(key.clone()))
    }

    pub fn get_f64(&self, key: &FeatureKey) -> Result<Vec<f64>> {
        Ok(self.get(key)?.iter().map(|&v| v as f64).collect())
    }

    /// Keys from `wanted` that are absent, sorted and deduplicated.
    pub fn missing<'a>(&self, wanted: impl IntoIterator<Item = &'a FeatureKey>) -> Vec<FeatureKey> {
        let mut out: Vec<FeatureKey> = wanted
            .into_iter()
            .filter(|k| !self.entries.contains_key(*k))
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Copies every entry of `other` into `self`; later entries win.
    pub fn merge(&mut self, other: FeatureStore) -> Result<()> {
        if other.dim != self.dim {
            return Err(CodecError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            }
            .into());
        }
        self.entries.extend(other.entries);
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.entries.len() * (24 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, vec) in &self.entries {
            let id = key.image_id.as_bytes();
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id);
            match key.crop {
                Crop::Full => out.push(TAG_FULL),
                Crop::Box(b) => {
                    out.push(TAG_BOX);
                    for c in b.as_array() {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
            }
            for v in vec {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic").ok() != Some(MAGIC.as_slice()) {
            return Err(CodecError::BadMagic.into());
        }
        let dim = r.u32("dimension")? as usize;
        if dim == 0 {
            return Err(CodecError::DimensionMismatch {
                expected: 1,
                found: 0,
            }
            .into());
        }
        let count = r.u32("record count")? as usize;
        let mut store = FeatureStore::new(dim)?;
        for _ in 0..count {
            let id_len = r.u16("id length")? as usize;
            let id = std::str::from_utf8(r.take(id_len, "image id")?)
                .map_err(|_| CodecError::InvalidId)?
                .to_owned();
            let crop = match r.u8("crop tag")? {
                TAG_FULL => Crop::Full,
                TAG_BOX => {
                    let mut c = [0u32; 4];
                    for v in &mut c {
                        *v = r.u32("box")?;
                    }
                    Crop::Box(BoundingBox::try_from(c)?)
                }
                t => return Err(CodecError::UnknownCropTag(t).into()),
            };
            let raw = r.take(4 * dim, "vector")?;
            let vec: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let key = FeatureKey { image_id: id, crop };
            if store.entries.contains_key(&key) {
                return Err(CodecError::DuplicateKey(key.to_string()).into());
            }
            store.insert(key, vec)?;
        }
        if r.pos != bytes.len() {
            return Err(CodecError::TrailingBytes(count).into());
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CodecError::Truncated(what)),
        }
    }

    fn u8(&mut self, what: &'static str) -> std::result::Result<u8, CodecError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> std::result::Result<u16, CodecError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, CodecError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_store() -> FeatureStore {
        let mut s = FeatureStore::new(4).unwrap();
        s.insert(FeatureKey::full("a"), vec![1.0, -2.5, 0.0, f32::MIN_POSITIVE])
            .unwrap();
        s.insert(
            FeatureKey::boxed("a", BoundingBox::new(1, 2, 3, 4).unwrap()),
            vec![0.1, 0.2, 0.3, -0.0],
        )
        .unwrap();
        s.insert(FeatureKey::full("β-img"), vec![1e30, -1e-30, 7.0, 8.0])
            .unwrap();
        s
    }

    #[test]
    fn three_entry_round_trip_is_bit_exact() {
        let s = sample_store();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.fscache");
        s.write(&path).unwrap();
        let back = FeatureStore::read(&path).unwrap();
        assert_eq!(back.len(), 3);
        for ((k1, v1), (k2, v2)) in s.iter().zip(back.iter()) {
            assert_eq!(k1, k2);
            let b1: Vec<u32> = v1.iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u32> = v2.iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let mut s = FeatureStore::new(1).unwrap();
        s.insert(FeatureKey::boxed("ab", BoundingBox::new(1, 2, 3, 4).unwrap()), vec![1.0])
            .unwrap();
        let bytes = s.encode();
        let mut expected = b"FSCACHE1".to_vec();
        expected.extend([1, 0, 0, 0, 1, 0, 0, 0, 2, 0, b'a', b'b', 1]);
        expected.extend([1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0]);
        expected.extend(1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample_store().encode();
        bytes[0] = b'X';
        let err = FeatureStore::decode(&bytes).unwrap_err();
        assert!(matches!(err, Error::Codec(CodecError::BadMagic)));
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn truncated() {
        let bytes = sample_store().encode();
        for cut in [3, 10, 14, bytes.len() - 1] {
            let err = FeatureStore::decode(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, Error::Codec(CodecError::Truncated(_)) | Error::Codec(CodecError::BadMagic)),
                "{cut}: {err}"
            );
        }
        assert!(matches!(
            FeatureStore::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Codec(CodecError::Truncated("vector")))
        ));
    }

    #[test]
    fn dimension_mismatch_on_insert_and_merge() {
        let mut s = FeatureStore::new(4).unwrap();
        assert!(matches!(
            s.insert(FeatureKey::full("x"), vec![1.0; 3]),
            Err(Error::Codec(CodecError::DimensionMismatch { expected: 4, found: 3 }))
        ));
        assert!(matches!(
            s.merge(FeatureStore::new(5).unwrap()),
            Err(Error::Codec(CodecError::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut s = FeatureStore::new(2).unwrap();
        assert!(s.insert(FeatureKey::full("x"), vec![f32::NAN, 0.0]).is_err());
        assert!(s.insert(FeatureKey::full("x"), vec![f32::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn absent_key_is_not_found_not_io() {
        let s = sample_store();
        let err = s.get(&FeatureKey::full("zzz")).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
        let io = FeatureStore::read("/nonexistent/dir/cache.fscache").unwrap_err();
        assert!(matches!(io, Error::Io(_)));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = sample_store().encode();
        bytes.push(0);
        assert!(matches!(
            FeatureStore::decode(&bytes),
            Err(Error::Codec(CodecError::TrailingBytes(3)))
        ));
    }

    fn arb_store() -> impl Strategy<Value = FeatureStore> {
        (1usize..6).prop_flat_map(|dim| {
            let entry = (
                "[a-z0-9]{1,8}",
                proptest::option::of((0u32..50, 0u32..50, 1u32..50, 1u32..50)),
                proptest::collection::vec(
                    any::<f32>().prop_filter("finite", |v| v.is_finite()),
                    dim,
                ),
            );
            proptest::collection::vec(entry, 0..12).prop_map(move |entries| {
                let mut s = FeatureStore::new(dim).unwrap();
                for (id, b, v) in entries {
                    let key = match b {
                        None => FeatureKey::full(id),
                        Some((x, y, w, h)) => {
                            FeatureKey::boxed(id, BoundingBox::new(x, y, x + w, y + h).unwrap())
                        }
                    };
                    s.insert(key, v).unwrap();
                }
                s
            })
        })
    }

    proptest! {
        #[test]
        fn codec_round_trip(store in arb_store()) {
            let bytes = store.encode();
            let back = FeatureStore::decode(&bytes).unwrap();
            prop_assert_eq!(back.encode(), bytes);
            prop_assert_eq!(back.dim(), store.dim());
            prop_assert_eq!(back.len(), store.len());
        }
    }
}
