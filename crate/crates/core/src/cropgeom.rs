//! Bounding-box arithmetic and augmentation planning.
//!
//! Every crop produced here contains its source box and stays inside the
//! image. Interpolated coordinates are rounded outward so containment and
//! nesting survive integer pixel coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::BoundingBox;
use crate::error::{Error, Result};

/// Fraction of the remaining context kept around an object: 0 is the
/// minimal box, 1 the whole image.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ContextFraction(f64);

impl ContextFraction {
    pub fn new(lambda: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(ContextFraction(lambda))
        } else {
            Err(Error::validation(format!(
                "context fraction {lambda} outside [0, 1]"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ContextFraction {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        ContextFraction::new(v)
    }
}

impl FromStr for ContextFraction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("not a context fraction: {s:?}")))?;
        ContextFraction::new(v)
    }
}

impl From<ContextFraction> for f64 {
    fn from(c: ContextFraction) -> f64 {
        c.0
    }
}

/// The ladder used by [`AugmentMode::Multiple`].
pub const MULTIPLE_LADDER: [f64; 3] = [0.2, 0.5, 0.8];

/// Default total context padding for ground-truth boxes, in pixels.
pub const DEFAULT_PAD_PX: u32 = 60;

/// A recipe turning one object box into training crops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AugmentMode {
    /// Train on the padded crop only, dropping the original image.
    Replace,
    Minimal,
    /// `X` extra pixels in both width and height (X/2 per side).
    PadPx(u32),
    ContextPct(ContextFraction),
    Multiple,
}

impl AugmentMode {
    pub fn keeps_original(&self) -> bool {
        !matches!(self, AugmentMode::Replace)
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AugmentMode::Replace => f.write_str("replace"),
            AugmentMode::Minimal => f.write_str("minimal"),
            AugmentMode::PadPx(x) => write!(f, "pad{x}"),
            AugmentMode::ContextPct(l) => write!(f, "ctx{}", fmt_pct(l.get())),
            AugmentMode::Multiple => f.write_str("multiple"),
        }
    }
}

fn fmt_pct(lambda: f64) -> String {
    let pct = lambda * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

impl FromStr for AugmentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("unknown augmentation mode {s:?}"));
        match s {
            "replace" => return Ok(AugmentMode::Replace),
            "minimal" => return Ok(AugmentMode::Minimal),
            "multiple" => return Ok(AugmentMode::Multiple),
            _ => {}
        }
        if let Some(x) = s.strip_prefix("pad").or_else(|| s.strip_prefix('+')) {
            let x: i64 = x.parse().map_err(|_| bad())?;
            if x < 0 || x > u32::MAX as i64 {
                return Err(Error::validation(format!("padding {x} must be non-negative")));
            }
            return Ok(AugmentMode::PadPx(x as u32));
        }
        if let Some(p) = s.strip_prefix("ctx").or_else(|| s.strip_suffix('%')) {
            let pct: f64 = p.parse().map_err(|_| bad())?;
            return Ok(AugmentMode::ContextPct(ContextFraction::new(pct / 100.0)?));
        }
        Err(bad())
    }
}

impl From<AugmentMode> for String {
    fn from(m: AugmentMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for AugmentMode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Crops planned for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPlan {
    pub mode: AugmentMode,
    pub crops: Vec<BoundingBox>,
    pub keep_original: bool,
}

fn check_box(b: &BoundingBox, width: u32, height: u32) -> Result<()> {
    b.check_fits(width, height)
}

/// Moves every edge outward by `pad_per_side`, clamped to the image.
pub fn pad_box(b: &BoundingBox, pad_per_side: u32, width: u32, height: u32) -> Result<BoundingBox> {
    check_box(b, width, height)?;
    BoundingBox::new(
        b.x_min().saturating_sub(pad_per_side),
        b.y_min().saturating_sub(pad_per_side),
        b.x_max().saturating_add(pad_per_side).min(width),
        b.y_max().saturating_add(pad_per_side).min(height),
    )
}

// Values within this distance of an integer are treated as that integer
// before outward rounding, so exact midpoints don't grow by a pixel.
const SNAP: f64 = 1e-9;

fn floor_snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v.floor()
    }
}

fn ceil_snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v.ceil()
    }
}

/// Linear interpolation between `b` (λ=0) and the full image (λ=1).
pub fn interpolate_context(
    b: &BoundingBox,
    lambda: ContextFraction,
    width: u32,
    height: u32,
) -> Result<BoundingBox> {
    check_box(b, width, height)?;
    let l = lambda.get();
    let lo = |v: u32| floor_snap((1.0 - l) * v as f64).max(0.0) as u32;
    let hi = |v: u32, limit: u32| {
        let v = v as f64;
        ceil_snap(v + l * (limit as f64 - v)).min(limit as f64) as u32
    };
    BoundingBox::new(
        lo(b.x_min()).min(b.x_min()),
        lo(b.y_min()).min(b.y_min()),
        hi(b.x_max(), width).max(b.x_max()),
        hi(b.y_max(), height).max(b.y_max()),
    )
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::validation(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_points(width: u32, height: u32, points: &[(u32, u32)]) -> Result<Self> {
        let mut m = Self::empty(width, height);
        for &(x, y) in points {
            m.set(x, y, true)?;
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) -> Result<()> {
        if x >= self.width || y >= self.height {
            return Err(Error::validation(format!(
                "pixel ({x},{y}) outside {}x{} mask",
                self.width, self.height
            )));
        }
        self.data[y as usize * self.width as usize + x as usize] = v;
        Ok(())
    }
}

/// Tightest half-open box around the true pixels of `mask`.
pub fn mask_to_box(mask: &BinaryMask) -> Result<BoundingBox> {
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    let w = mask.width as usize;
    for (i, _) in mask.data.iter().enumerate().filter(|(_, &v)| v) {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        bounds = Some(match bounds {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x0, y0, x1, y1) = bounds.ok_or(Error::EmptyMask)?;
    BoundingBox::new(x0, y0, x1 + 1, y1 + 1)
}

/// [`mask_to_box`] with a check that the mask matches the image size.
pub fn mask_to_box_for(mask: &BinaryMask, width: u32, height: u32) -> Result<BoundingBox> {
    if mask.width != width || mask.height != height {
        return Err(Error::validation(format!(
            "mask is {}x{}, image is {width}x{height}",
            mask.width, mask.height
        )));
    }
    mask_to_box(mask)
}

/// Crops for one image under `mode`, deduplicated. Crops equal to the whole
/// image are dropped when the original is kept.
pub fn plan_augments(
    mode: AugmentMode,
    source: &BoundingBox,
    width: u32,
    height: u32,
) -> Result<AugmentPlan> {
    check_box(source, width, height)?;
    let raw = match mode {
        AugmentMode::Replace => vec![pad_box(source, DEFAULT_PAD_PX / 2, width, height)?],
        AugmentMode::Minimal => vec![*source],
        AugmentMode::PadPx(x) => vec![pad_box(source, x / 2, width, height)?],
        AugmentMode::ContextPct(l) => vec![interpolate_context(source, l, width, height)?],
        AugmentMode::Multiple => MULTIPLE_LADDER
            .iter()
            .map(|&l| interpolate_context(source, ContextFraction(l), width, height))
            .collect::<Result<_>>()?,
    };
    let keep_original = mode.keeps_original();
    let mut crops: Vec<BoundingBox> = Vec::with_capacity(raw.len());
    for c in raw {
        if keep_original && c.is_full(width, height) {
            continue;
        }
        if !crops.contains(&c) {
            crops.push(c);
        }
    }
    Ok(AugmentPlan {
        mode,
        crops,
        keep_original,
    })
}
