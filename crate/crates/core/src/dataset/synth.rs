//! Synthetic fundus photographs with known lesion ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{BinaryMask, Raster};
use crate::rng::SplitMix64;

const PLACEMENT_TRIES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub side: usize,
    pub n_exudates: usize,
    pub n_mas: usize,
    /// Minimum clearance in pixels between the bounding circles of two lesions.
    #[serde(default = "default_gap")]
    pub min_gap: usize,
}

fn default_gap() -> usize {
    8
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { side: 256, n_exudates: 4, n_mas: 6, min_gap: default_gap() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFundus {
    pub image: Raster,
    pub exudates: BinaryMask,
    pub microaneurysms: BinaryMask,
}

/// A disc in continuous pixel coordinates (pixel centers at `i + 0.5`).
#[derive(Debug, Clone, Copy)]
struct Disc {
    cx: f64,
    cy: f64,
    r: f64,
}

impl Disc {
    fn contains(&self, x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy);
        dx * dx + dy * dy <= self.r * self.r
    }

    fn paint(&self, mask: &mut BinaryMask) {
        let x0 = (self.cx - self.r).floor().max(0.0) as usize;
        let y0 = (self.cy - self.r).floor().max(0.0) as usize;
        let x1 = ((self.cx + self.r).ceil() as usize).min(mask.width() - 1);
        let y1 = ((self.cy + self.r).ceil() as usize).min(mask.height() - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
    }
}

/// Renders an orange retina disc on black with `n_exudates` bright irregular
/// blobs (radius 3-10 px) and `n_mas` dark dots (radius 1-3 px). Lesions lie
/// inside the disc and are separated by at least `min_gap` pixels, so each
/// one is its own connected component in the returned masks.
pub fn generate_synthetic_fundus(seed: u64, params: &SynthParams) -> Result<SyntheticFundus> {
    let side = params.side;
    if side < 64 {
        return Err(invalid(format!("synthetic side must be >= 64, got {side}")));
    }
    let mut rng = SplitMix64::new(seed);
    let retina = Disc { cx: side as f64 / 2.0, cy: side as f64 / 2.0, r: (0.45 * side as f64).floor() };

    let requested = params.n_exudates + params.n_mas;
    let mut placed: Vec<Disc> = Vec::with_capacity(requested);
    let mut place = |rng: &mut SplitMix64, radius: f64| -> Result<Disc> {
        let reach = retina.r - radius - 2.0;
        for _ in 0..PLACEMENT_TRIES {
            if reach <= 0.0 {
                break;
            }
            let cx = (retina.cx - reach + rng.below((2.0 * reach) as u64 + 1) as f64).floor() + 0.5;
            let cy = (retina.cy - reach + rng.below((2.0 * reach) as u64 + 1) as f64).floor() + 0.5;
            let (dx, dy) = (cx - retina.cx, cy - retina.cy);
            if (dx * dx + dy * dy).sqrt() + radius > retina.r - 2.0 {
                continue;
            }
            let clear = placed.iter().all(|d| {
                let (ex, ey) = (cx - d.cx, cy - d.cy);
                (ex * ex + ey * ey).sqrt() >= d.r + radius + params.min_gap as f64
            });
            if clear {
                let disc = Disc { cx, cy, r: radius };
                placed.push(disc);
                return Ok(disc);
            }
        }
        Err(Error::Capacity { placed: placed.len(), requested })
    };

    let mut exudates = BinaryMask::new(side, side);
    for _ in 0..params.n_exudates {
        let radius = 3.0 + rng.below(8) as f64;
        let bound = place(&mut rng, radius)?;
        // core disc plus 1-3 lobes whose centers sit inside the core, so the blob stays connected
        let core = Disc { r: radius * 0.75, ..bound };
        core.paint(&mut exudates);
        for _ in 0..1 + rng.below(3) {
            let angle = rng.uniform(0.0, std::f64::consts::TAU);
            let lobe_r = (radius * rng.uniform(0.3, 0.5)).max(1.0);
            let offset = (radius - lobe_r).min(core.r - 1.0) * rng.uniform(0.3, 1.0);
            Disc { cx: bound.cx + offset * angle.cos(), cy: bound.cy + offset * angle.sin(), r: lobe_r }
                .paint(&mut exudates);
        }
    }

    let mut microaneurysms = BinaryMask::new(side, side);
    for _ in 0..params.n_mas {
        let radius = 1.0 + rng.below(3) as f64;
        place(&mut rng, radius)?.paint(&mut microaneurysms);
    }

    let mut data = vec![0u8; side * side * 3];
    for y in 0..side {
        for x in 0..side {
            if !retina.contains(x, y) {
                continue;
            }
            let (dx, dy) = (x as f64 + 0.5 - retina.cx, y as f64 + 0.5 - retina.cy);
            let falloff = 1.0 - 0.35 * (dx * dx + dy * dy) / (retina.r * retina.r);
            let noise = rng.uniform(-4.0, 4.0);
            let mut rgb = [200.0 * falloff + noise, 105.0 * falloff + noise, 45.0 * falloff + noise];
            if exudates.get(x, y) {
                rgb = [250.0, 232.0, 130.0 + noise];
            } else if microaneurysms.get(x, y) {
                rgb = [95.0 + noise, 22.0, 14.0];
            }
            let i = (y * side + x) * 3;
            for c in 0..3 {
                data[i + c] = rgb[c].round().clamp(12.0, 255.0) as u8;
            }
        }
    }
    Ok(SyntheticFundus { image: Raster::new(side, side, 3, data)?, exudates, microaneurysms })
}
