//! Fundus photograph normalization.
//!
//! [`preprocess_pair`] runs margin crop, circularization, Gaussian blend
//! normalization (image only), resize, and finally mask dilation. The
//! geometric part of the pipeline is captured by a [`GeometricTransform`] so
//! masks follow their image exactly.

mod blur;
mod morphology;
mod resample;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use morphology::dilate;
pub use resample::{resize, resize_bilinear, resize_mask, resize_mask_nearest};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{BBox, BinaryMask, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub blur_sigma: f64,
    pub w_orig: f64,
    pub w_blur: f64,
    pub gamma_offset: f64,
    pub output_side: usize,
    /// Pixels whose brightest channel is at or below this are blank margin.
    pub blank_threshold: u8,
    pub dilation_kernel: usize,
    pub dilation_iterations: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 20.0,
            w_orig: 4.0,
            w_blur: -4.0,
            gamma_offset: 128.0,
            output_side: 1024,
            blank_threshold: 10,
            dilation_kernel: 5,
            dilation_iterations: 2,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma.is_finite() && self.blur_sigma > 0.0) {
            return Err(invalid(format!("blur_sigma must be > 0, got {}", self.blur_sigma)));
        }
        if !(self.w_orig.is_finite() && self.w_blur.is_finite() && self.gamma_offset.is_finite()) {
            return Err(invalid("blend weights and gamma_offset must be finite"));
        }
        if self.output_side < 32 {
            return Err(invalid(format!("output_side must be >= 32, got {}", self.output_side)));
        }
        if self.dilation_kernel == 0 || self.dilation_kernel.is_multiple_of(2) {
            return Err(invalid(format!("dilation_kernel must be odd and >= 1, got {}", self.dilation_kernel)));
        }
        Ok(())
    }
}

/// Composite geometry applied by [`preprocess_pair`]: crop to `crop_rect`,
/// stretch by `(scale_x, scale_y)` to a square of side `max(w, h)`, then
/// resize that square to `output_side`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricTransform {
    pub crop_rect: BBox,
    pub scale_x: f64,
    pub scale_y: f64,
    pub output_side: usize,
}

impl GeometricTransform {
    /// Side of the circularized square before the final resize.
    pub fn square_side(&self) -> usize {
        self.crop_rect.w.max(self.crop_rect.h) as usize
    }

    /// Maps a source pixel coordinate to output pixel coordinates.
    ///
    /// Pixel centers sit at integer coordinates, matching the resamplers.
    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        let f = self.output_side as f64 / self.square_side() as f64;
        let map = |v: f64, origin: u32, scale: f64| (v - origin as f64 + 0.5) * scale * f - 0.5;
        (map(x, self.crop_rect.x, self.scale_x), map(y, self.crop_rect.y, self.scale_y))
    }

    /// Applies the geometry to a mask (nearest neighbor, no dilation).
    ///
    /// The composite map is resampled in a single pass, so each output pixel
    /// reads the source pixel nearest to its exact preimage.
    pub fn warp_mask(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        let r = self.crop_rect;
        if !r.fits_in(mask.width(), mask.height()) || r.w == 0 || r.h == 0 {
            return Err(invalid(format!("crop {r:?} does not fit a {}x{} mask", mask.width(), mask.height())));
        }
        let n = self.output_side;
        let f = n as f64 / self.square_side() as f64;
        let source = |o: usize, origin: u32, len: u32, scale: f64| {
            let v = ((o as f64 + 0.5) / (scale * f)).floor() as usize;
            origin as usize + v.min(len as usize - 1)
        };
        let xs: Vec<usize> = (0..n).map(|o| source(o, r.x, r.w, self.scale_x)).collect();
        let mut out = BinaryMask::new(n, n);
        for oy in 0..n {
            let sy = source(oy, r.y, r.h, self.scale_y);
            for (ox, &sx) in xs.iter().enumerate() {
                if mask.get(sx, sy) && inside_inscribed_circle(ox, oy, n) {
                    out.set(ox, oy, true);
                }
            }
        }
        Ok(out)
    }
}

/// `clamp(w_orig * orig + w_blur * blurred + gamma_offset)` for one sample.
///
/// Evaluated in `f64`, which covers the full signed range of the weighted
/// sum, then rounded and clamped to `0..=255`.
#[inline]
pub fn blend_sample(orig: u8, blurred: u8, cfg: &PreprocessConfig) -> u8 {
    let v = cfg.w_orig * orig as f64 + cfg.w_blur * blurred as f64 + cfg.gamma_offset;
    v.round().clamp(0.0, 255.0) as u8
}

/// Weighted sum of the image and its Gaussian blur, offset by `gamma_offset`.
pub fn blend_normalize(img: &Raster, cfg: &PreprocessConfig) -> Result<Raster> {
    let blurred = gaussian_blur(img, cfg.blur_sigma)?;
    let data = img.data().iter().zip(blurred.data()).map(|(&o, &b)| blend_sample(o, b, cfg)).collect();
    Raster::new(img.width(), img.height(), img.channels(), data)
}

/// Crops a raster to `rect`, which must lie inside it.
pub fn crop(img: &Raster, rect: BBox) -> Result<Raster> {
    if rect.w == 0 || rect.h == 0 || !rect.fits_in(img.width(), img.height()) {
        return Err(invalid(format!("crop rect {rect:?} outside {}x{}", img.width(), img.height())));
    }
    let c = img.channels();
    let mut data = Vec::with_capacity(rect.area() as usize * c);
    for y in rect.y..rect.bottom() {
        let start = (y as usize * img.width() + rect.x as usize) * c;
        data.extend_from_slice(&img.data()[start..start + rect.w as usize * c]);
    }
    Raster::new(rect.w as usize, rect.h as usize, c, data)
}

pub fn crop_mask(mask: &BinaryMask, rect: BBox) -> Result<BinaryMask> {
    if rect.w == 0 || rect.h == 0 || !rect.fits_in(mask.width(), mask.height()) {
        return Err(invalid(format!("crop rect {rect:?} outside {}x{}", mask.width(), mask.height())));
    }
    let mut data = Vec::with_capacity(rect.area() as usize);
    for y in rect.y..rect.bottom() {
        let start = y as usize * mask.width() + rect.x as usize;
        data.extend_from_slice(&mask.data()[start..start + rect.w as usize]);
    }
    BinaryMask::from_vec(rect.w as usize, rect.h as usize, data)
}

/// Tightest crop around pixels whose brightest channel exceeds `blank_threshold`.
pub fn crop_blank_margins(img: &Raster, blank_threshold: u8) -> Result<(Raster, BBox)> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.max_channel(x, y) > blank_threshold {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::NoForeground);
    }
    let rect = BBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32);
    Ok((crop(img, rect)?, rect))
}

/// True when the pixel center lies inside the circle inscribed in a `side` square.
#[inline]
pub fn inside_inscribed_circle(x: usize, y: usize, side: usize) -> bool {
    let c = side as f64 / 2.0;
    let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
    dx * dx + dy * dy <= c * c
}

/// Stretches a margin-cropped image to a square of side `max(w, h)` and
/// blanks everything outside the inscribed circle.
///
/// The input is expected to be tight already, so the stretched foreground
/// spans the whole square and the re-crop is the identity; the returned
/// transform has `crop_rect` covering the full input.
pub fn circularize(img: &Raster) -> Result<(Raster, GeometricTransform)> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(invalid(format!("circularize needs at least 2x2, got {w}x{h}")));
    }
    let side = w.max(h);
    let mut out = resize_bilinear(img, side, side)?;
    for y in 0..side {
        for x in 0..side {
            if !inside_inscribed_circle(x, y, side) {
                for c in 0..out.channels() {
                    out.set(x, y, c, 0);
                }
            }
        }
    }
    let transform = GeometricTransform {
        crop_rect: BBox::new(0, 0, w as u32, h as u32),
        scale_x: side as f64 / w as f64,
        scale_y: side as f64 / h as f64,
        output_side: side,
    };
    Ok((out, transform))
}

/// Full normalization of an image and its lesion mask.
pub fn preprocess_pair(
    img: &Raster,
    mask: &BinaryMask,
    cfg: &PreprocessConfig,
) -> Result<(Raster, BinaryMask, GeometricTransform)> {
    cfg.validate()?;
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(invalid(format!(
            "image is {}x{} but mask is {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let (cropped, crop_rect) = crop_blank_margins(img, cfg.blank_threshold)?;
    let (square, circ) = circularize(&cropped)?;
    let normalized = blend_normalize(&square, cfg)?;
    let out_img = resize(&normalized, cfg.output_side)?;

    let transform =
        GeometricTransform { crop_rect, scale_x: circ.scale_x, scale_y: circ.scale_y, output_side: cfg.output_side };
    let warped = transform.warp_mask(mask)?;
    let out_mask = dilate(&warped, cfg.dilation_kernel, cfg.dilation_iterations)?;
    Ok((out_img, out_mask, transform))
}
