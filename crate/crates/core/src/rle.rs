//! Run-length encoded binary masks.
//!
//! Pixels are scanned row-major. `counts` alternates background and
//! foreground run lengths and always starts with background, so a mask whose
//! first pixel is foreground begins with a zero. JSON form:
//! `{"size": [H, W], "counts": [..]}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BBox, BinaryMask};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawRle")]
pub struct Rle {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

#[derive(Deserialize)]
struct RawRle {
    size: [u32; 2],
    counts: Vec<u32>,
}

impl TryFrom<RawRle> for Rle {
    type Error = String;

    fn try_from(raw: RawRle) -> std::result::Result<Self, String> {
        let total: u64 = raw.counts.iter().map(|&c| c as u64).sum();
        let expect = raw.size[0] as u64 * raw.size[1] as u64;
        if total != expect {
            return Err(format!(
                "RLE counts sum to {total} but size {}x{} has {expect} pixels",
                raw.size[0], raw.size[1]
            ));
        }
        Ok(Rle { size: raw.size, counts: raw.counts })
    }
}

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in mask.data() {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        Self { size: [mask.height() as u32, mask.width() as u32], counts }
    }

    /// Builds an encoding from foreground runs given as `(start, len)` in
    /// row-major pixel offsets. Runs must be sorted and non-overlapping.
    pub fn from_runs(width: usize, height: usize, runs: &[(usize, usize)]) -> Self {
        let mut counts = Vec::with_capacity(runs.len() * 2 + 1);
        let mut cursor = 0usize;
        for &(start, len) in runs {
            debug_assert!(start >= cursor, "runs must be sorted and disjoint");
            if start == cursor && !counts.is_empty() {
                // adjacent runs merge into the previous foreground count
                *counts.last_mut().unwrap() += len as u32;
            } else {
                counts.push((start - cursor) as u32);
                counts.push(len as u32);
            }
            cursor = start + len;
        }
        let total = width * height;
        if cursor < total || counts.is_empty() {
            counts.push((total - cursor) as u32);
        }
        Self { size: [height as u32, width as u32], counts }
    }

    pub fn height(&self) -> usize {
        self.size[0] as usize
    }

    pub fn width(&self) -> usize {
        self.size[1] as usize
    }

    pub fn decode(&self) -> BinaryMask {
        let mut data = Vec::with_capacity(self.width() * self.height());
        for (i, &c) in self.counts.iter().enumerate() {
            data.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
        }
        BinaryMask::from_vec(self.width(), self.height(), data).expect("RLE counts are validated against size")
    }

    /// Foreground runs as half-open `(start, end)` pixel offsets.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.counts.len() / 2);
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            let next = pos + c as usize;
            if i % 2 == 1 && c > 0 {
                out.push((pos, next));
            }
            pos = next;
        }
        out
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Tight bounding box, computed from the runs without decoding.
    pub fn bbox(&self) -> Result<BBox> {
        let w = self.width();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (start, end) in self.runs() {
            let (ys, ye) = (start / w, (end - 1) / w);
            y0 = y0.min(ys);
            y1 = y1.max(ye);
            if ys == ye {
                x0 = x0.min(start % w);
                x1 = x1.max((end - 1) % w);
            } else {
                // a run crossing a row boundary touches both the last and first column
                x0 = 0;
                x1 = w - 1;
            }
        }
        if x0 == usize::MAX {
            return Err(Error::NoForeground);
        }
        Ok(BBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32))
    }

    /// Number of pixels set in both masks. Sizes must match.
    pub fn intersection_area(&self, other: &Rle) -> u64 {
        let (a, b) = (self.runs(), other.runs());
        let (mut i, mut j, mut total) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                total += (hi - lo) as u64;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }
}
