//! Pixel-center aligned resampling: output index `d` samples source
//! coordinate `(d + 0.5) * src / dst - 0.5`.

use crate::error::{invalid, Result};
use crate::raster::{BinaryMask, Raster};

fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize).min(src_len - 1)
}

/// Bilinear resize with edge clamping. Same-size resizes are exact copies.
pub fn resize_bilinear(img: &Raster, width: usize, height: usize) -> Result<Raster> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("resize target must be non-empty, got {width}x{height}")));
    }
    let (sw, sh, c) = (img.width(), img.height(), img.channels());
    let taps = |dst: usize, src_len: usize, dst_len: usize| {
        let s = source_coord(dst, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..width).map(|x| taps(x, sw, width)).collect();
    let mut data = Vec::with_capacity(width * height * c);
    for y in 0..height {
        let (y0, y1, fy) = taps(y, sh, height);
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let top = img.get(x0, y0, ch) as f64 * (1.0 - fx) + img.get(x1, y0, ch) as f64 * fx;
                let bot = img.get(x0, y1, ch) as f64 * (1.0 - fx) + img.get(x1, y1, ch) as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::new(width, height, c, data)
}

/// Nearest-neighbor resize; binary values are preserved exactly.
pub fn resize_mask_nearest(mask: &BinaryMask, width: usize, height: usize) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("resize target must be non-empty, got {width}x{height}")));
    }
    let xs: Vec<usize> = (0..width).map(|x| nearest_index(x, mask.width(), width)).collect();
    let mut out = BinaryMask::new(width, height);
    for y in 0..height {
        let sy = nearest_index(y, mask.height(), height);
        for (x, &sx) in xs.iter().enumerate() {
            out.set(x, y, mask.get(sx, sy));
        }
    }
    Ok(out)
}

/// Resizes a square image to `side × side` (bilinear).
pub fn resize(img: &Raster, side: usize) -> Result<Raster> {
    if side < 1 {
        return Err(invalid("resize side must be at least 1"));
    }
    if !img.is_square() {
        return Err(invalid(format!("resize expects a square image, got {}x{}", img.width(), img.height())));
    }
    resize_bilinear(img, side, side)
}

/// Mask counterpart of [`resize`] (nearest neighbor).
pub fn resize_mask(mask: &BinaryMask, side: usize) -> Result<BinaryMask> {
    if side < 1 {
        return Err(invalid("resize side must be at least 1"));
    }
    resize_mask_nearest(mask, side, side)
}
