use crate::error::{invalid, Result};
use crate::raster::Raster;

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur with edge-replicated borders.
///
/// Both passes accumulate in `f64`; the result is rounded once at the end.
pub fn gaussian_blur(img: &Raster, sigma: f64) -> Result<Raster> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.data();

    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0f64; w * h * c];
    for y in 0..h {
        let row = &src[y * w * c..(y + 1) * w * c];
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &t) in taps.iter().enumerate() {
                    let sx = clamp(x as isize + k as isize - radius, w);
                    acc += t * row[sx * c + ch] as f64;
                }
                horiz[(y * w + x) * c + ch] = acc;
            }
        }
    }

    let mut out = vec![0u8; w * h * c];
    let stride = w * c;
    for y in 0..h {
        for i in 0..stride {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let sy = clamp(y as isize + k as isize - radius, h);
                acc += t * horiz[sy * stride + i];
            }
            out[y * stride + i] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    Raster::new(w, h, c, out)
}
