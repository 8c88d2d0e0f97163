//! Seeded geometric augmentation of an image together with its instance masks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::instances::InstanceAnnotation;
use crate::raster::{BinaryMask, Raster};
use crate::rle::Rle;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Raster,
    pub annotations: Vec<InstanceAnnotation>,
    pub image_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Clockwise,
    CounterClockwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub p_rot90: f64,
    /// Largest shift as a fraction of the image side, per axis.
    pub max_translate_frac: f64,
    /// Per-axis scale factor range `(lo, hi)`.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { p_hflip: 0.5, p_vflip: 0.5, p_rot90: 0.5, max_translate_frac: 0.1, scale_range: (0.8, 1.2), seed: 0 }
    }
}

impl AugmentPolicy {
    /// A policy that never changes anything.
    pub fn identity(seed: u64) -> Self {
        Self { p_hflip: 0.0, p_vflip: 0.0, p_rot90: 0.0, max_translate_frac: 0.0, scale_range: (1.0, 1.0), seed }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_hflip", self.p_hflip), ("p_vflip", self.p_vflip), ("p_rot90", self.p_rot90)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(self.max_translate_frac.is_finite() && self.max_translate_frac >= 0.0) {
            return Err(invalid("max_translate_frac must be >= 0"));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(format!("scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// Parameters drawn for one `(seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: Option<Rotation>,
    pub dx: f64,
    pub dy: f64,
    pub sx: f64,
    pub sy: f64,
}

impl AugmentDraw {
    /// Draw order is fixed: hflip, vflip, rot90, rotation direction, dx, dy,
    /// sx, sy. One value is consumed per step whatever the outcome.
    pub fn sample(policy: &AugmentPolicy, index: u64, width: usize, height: usize) -> Self {
        let mut rng = SplitMix64::for_stream(policy.seed, index);
        let hflip = rng.chance(policy.p_hflip);
        let vflip = rng.chance(policy.p_vflip);
        let rotate = rng.chance(policy.p_rot90);
        let dir = if rng.chance(0.5) { Rotation::Clockwise } else { Rotation::CounterClockwise };
        let tx = policy.max_translate_frac * width as f64;
        let ty = policy.max_translate_frac * height as f64;
        let dx = rng.uniform(-tx, tx);
        let dy = rng.uniform(-ty, ty);
        let (lo, hi) = policy.scale_range;
        let sx = rng.uniform(lo, hi);
        let sy = rng.uniform(lo, hi);
        Self { hflip, vflip, rot90: rotate.then_some(dir), dx, dy, sx, sy }
    }
}

fn map_annotations(
    s: &Sample,
    width: usize,
    height: usize,
    f: impl Fn(&BinaryMask) -> BinaryMask,
) -> Vec<InstanceAnnotation> {
    s.annotations
        .iter()
        .filter_map(|a| {
            let m = f(&a.mask_rle.decode());
            debug_assert_eq!((m.width(), m.height()), (width, height));
            InstanceAnnotation::from_rle(a.instance_id, &a.image_id, a.class_id, Rle::encode(&m)).ok()
        })
        .collect()
}

/// Moves every pixel through `src_of(dst)` without interpolation.
fn remap_raster(img: &Raster, w: usize, h: usize, src_of: impl Fn(usize, usize) -> (usize, usize)) -> Raster {
    let c = img.channels();
    let mut data = Vec::with_capacity(w * h * c);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = src_of(x, y);
            data.extend_from_slice(img.pixel(sx, sy));
        }
    }
    Raster::new(w, h, c, data).expect("remap keeps channel count")
}

fn remap_mask(m: &BinaryMask, w: usize, h: usize, src_of: impl Fn(usize, usize) -> (usize, usize)) -> BinaryMask {
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = src_of(x, y);
            out.set(x, y, m.get(sx, sy));
        }
    }
    out
}

/// Mirror about the vertical (`Horizontal`) or horizontal (`Vertical`) axis.
pub fn flip(s: &Sample, axis: Axis) -> Sample {
    let (w, h) = (s.image.width(), s.image.height());
    let src = move |x: usize, y: usize| match axis {
        Axis::Horizontal => (w - 1 - x, y),
        Axis::Vertical => (x, h - 1 - y),
    };
    Sample {
        image: remap_raster(&s.image, w, h, src),
        annotations: map_annotations(s, w, h, |m| remap_mask(m, w, h, src)),
        image_id: s.image_id.clone(),
    }
}

/// Exact quarter turn of a square sample. Clockwise sends `(x, y)` to `(S-1-y, x)`.
pub fn rotate90(s: &Sample, direction: Rotation) -> Result<Sample> {
    if !s.image.is_square() {
        return Err(invalid(format!("rotate90 needs a square image, got {}x{}", s.image.width(), s.image.height())));
    }
    let n = s.image.width();
    let src = move |x: usize, y: usize| match direction {
        Rotation::Clockwise => (y, n - 1 - x),
        Rotation::CounterClockwise => (n - 1 - y, x),
    };
    Ok(Sample {
        image: remap_raster(&s.image, n, n, src),
        annotations: map_annotations(s, n, n, |m| remap_mask(m, n, n, src)),
        image_id: s.image_id.clone(),
    })
}

/// Scale about the image center by `(sx, sy)`, then shift by `(dx, dy)`.
///
/// Images are sampled bilinearly with black outside the canvas; masks use
/// nearest neighbour. Annotations left with no pixels are dropped.
pub fn translate_scale(s: &Sample, dx: f64, dy: f64, sx: f64, sy: f64) -> Result<Sample> {
    if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
        return Err(invalid(format!("scale factors must be positive, got ({sx}, {sy})")));
    }
    if !(dx.is_finite() && dy.is_finite()) {
        return Err(invalid("translation must be finite"));
    }
    let (w, h, c) = (s.image.width(), s.image.height(), s.image.channels());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    // inverse map of x' = cx + sx * (x + 0.5 - cx) + dx - 0.5
    let inv = move |x: usize, y: usize| {
        (cx + (x as f64 + 0.5 - dx - cx) / sx - 0.5, cy + (y as f64 + 0.5 - dy - cy) / sy - 0.5)
    };

    let img = &s.image;
    let tap = |x: isize, y: isize, ch: usize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            img.get(x as usize, y as usize, ch) as f64
        }
    };
    let mut data = Vec::with_capacity(w * h * c);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = inv(x, y);
            let (x0, y0) = (fx.floor(), fy.floor());
            let (ax, ay) = (fx - x0, fy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let v = (tap(x0, y0, ch) * (1.0 - ax) + tap(x0 + 1, y0, ch) * ax) * (1.0 - ay)
                    + (tap(x0, y0 + 1, ch) * (1.0 - ax) + tap(x0 + 1, y0 + 1, ch) * ax) * ay;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    let image = Raster::new(w, h, c, data)?;

    let warp = |m: &BinaryMask| {
        let mut out = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = inv(x, y);
                let (nx, ny) = ((fx + 0.5).floor(), (fy + 0.5).floor());
                if nx >= 0.0 && ny >= 0.0 && nx < w as f64 && ny < h as f64 {
                    out.set(x, y, m.get(nx as usize, ny as usize));
                }
            }
        }
        out
    };
    Ok(Sample { image, annotations: map_annotations(s, w, h, warp), image_id: s.image_id.clone() })
}

/// Applies the augmentation drawn for `(policy.seed, index)`.
///
/// Order: horizontal flip, vertical flip, quarter turn (square images only;
/// skipped otherwise), translate/scale (skipped when it is the identity).
pub fn apply_policy(s: &Sample, policy: &AugmentPolicy, index: u64) -> Sample {
    let draw = AugmentDraw::sample(policy, index, s.image.width(), s.image.height());
    let mut out = s.clone();
    if draw.hflip {
        out = flip(&out, Axis::Horizontal);
    }
    if draw.vflip {
        out = flip(&out, Axis::Vertical);
    }
    if let Some(dir) = draw.rot90 {
        if let Ok(rotated) = rotate90(&out, dir) {
            out = rotated;
        }
    }
    let identity = draw.dx == 0.0 && draw.dy == 0.0 && draw.sx == 1.0 && draw.sy == 1.0;
    if !identity {
        out = translate_scale(&out, draw.dx, draw.dy, draw.sx, draw.sy).expect("policy draws positive finite scales");
    }
    out
}
