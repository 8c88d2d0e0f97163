//! PNG reading and writing between files and core rasters.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use fundus_core::{BinaryMask, Raster};
use image::{DynamicImage, ImageFormat};

use crate::error::{CliError, CliResult};

/// 8-bit gray stays single channel; everything else is converted to RGB.
pub fn read_raster(path: &Path) -> CliResult<Raster> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| CliError::io(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = match img {
        DynamicImage::ImageLuma8(g) => Raster::new(w, h, 1, g.into_raw()),
        other => Raster::new(w, h, 3, other.into_rgb8().into_raw()),
    };
    raster.map_err(|e| CliError::from(e).at(path))
}

/// Any nonzero sample marks foreground.
pub fn read_mask(path: &Path) -> CliResult<BinaryMask> {
    Ok(BinaryMask::from_nonzero(&read_raster(path)?))
}

pub fn encode_png(r: &Raster) -> CliResult<Vec<u8>> {
    let color = if r.channels() == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
    let mut buf = Cursor::new(Vec::new());
    image::write_buffer_with_format(&mut buf, r.data(), r.width() as u32, r.height() as u32, color, ImageFormat::Png)
        .map_err(|e| CliError::internal(format!("PNG encoding failed: {e}")))?;
    Ok(buf.into_inner())
}

pub fn write_raster(path: &Path, r: &Raster) -> CliResult<()> {
    fs::write(path, encode_png(r)?).map_err(|e| CliError::io(path, e))
}

/// Written as 0/255 gray.
pub fn write_mask(path: &Path, m: &BinaryMask) -> CliResult<()> {
    write_raster(path, &m.to_raster())
}

/// Width and height from the PNG header.
pub fn png_dimensions(path: &Path) -> CliResult<(u32, u32)> {
    image::image_dimensions(path).map_err(|e| CliError::io(path, e))
}

/// `*.png` files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_and_gray_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = Raster::new(3, 2, 3, (0..18).map(|v| v * 10).collect()).unwrap();
        let gray = Raster::new(3, 2, 1, vec![0, 1, 2, 250, 251, 252]).unwrap();
        for (name, r) in [("rgb.png", &rgb), ("gray.png", &gray)] {
            let p = dir.path().join(name);
            write_raster(&p, r).unwrap();
            assert_eq!(&read_raster(&p).unwrap(), r);
            assert_eq!(png_dimensions(&p).unwrap(), (3, 2));
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_vec(2, 2, vec![true, false, false, true]).unwrap();
        let p = dir.path().join("m.png");
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
    }

    #[test]
    fn corrupt_png_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        fs::write(&p, b"not a png").unwrap();
        assert_eq!(read_raster(&p).unwrap_err().kind.exit_code(), 2);
    }
}
