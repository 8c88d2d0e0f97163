use crate::error::{invalid, Result};
use crate::raster::BinaryMask;

/// Dilation by a `kernel × kernel` square, repeated `iterations` times.
///
/// The square is separable, so each pass is a horizontal then a vertical
/// running-max computed with prefix counts. Pixels outside the grid count
/// as background.
pub fn dilate(mask: &BinaryMask, kernel: usize, iterations: usize) -> Result<BinaryMask> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(invalid(format!("dilation kernel must be odd and >= 1, got {kernel}")));
    }
    let radius = kernel / 2;
    let mut current = mask.clone();
    if radius == 0 {
        return Ok(current);
    }
    let (w, h) = (mask.width(), mask.height());
    let mut line = Vec::new();
    let mut prefix = Vec::new();
    for _ in 0..iterations {
        let mut horiz = BinaryMask::new(w, h);
        for y in 0..h {
            line.clear();
            line.extend((0..w).map(|x| current.get(x, y)));
            spread(&line, radius, &mut prefix, |x, v| horiz.set(x, y, v));
        }
        let mut vert = BinaryMask::new(w, h);
        for x in 0..w {
            line.clear();
            line.extend((0..h).map(|y| horiz.get(x, y)));
            spread(&line, radius, &mut prefix, |y, v| vert.set(x, y, v));
        }
        current = vert;
    }
    Ok(current)
}

fn spread(line: &[bool], radius: usize, prefix: &mut Vec<u32>, mut put: impl FnMut(usize, bool)) {
    prefix.clear();
    prefix.push(0);
    for &b in line {
        let last = *prefix.last().unwrap();
        prefix.push(last + b as u32);
    }
    let n = line.len();
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        put(i, prefix[hi] > prefix[lo]);
    }
}
