use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use super::{Mask, RasterImage};
use crate::error::{Error, Result};

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::ImageIo { path: path.to_path_buf(), source }
}

/// Loads an 8-bit PNG/JPEG; `v / 255` maps bytes onto `[0, 1]`. Alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let dynamic = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, bytes) = match dynamic {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) => {
            (1, dynamic.to_luma8().into_raw())
        }
        other => (3, other.to_rgb8().into_raw()),
    };
    let data = bytes.into_iter().map(|b| f64::from(b) / 255.0).collect();
    RasterImage::new(w, h, channels, data)
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit image; the format follows the file extension.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.samples().iter().map(|&v| to_byte(v)).collect();
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer size"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer size"))
    };
    dynamic.save(path).map_err(|e| image_err(path, e))
}

/// Masks are stored as 8-bit grayscale, 255 = valid.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = mask.data().iter().map(|&v| if v { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer size")
        .save(path)
        .map_err(|e| image_err(path, e))
}

/// Any pixel with luminance ≥ 128 is valid.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let gray = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    Ok(Mask::new(w, h, gray.into_raw().into_iter().map(|b| b >= 128).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_byte_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = RasterImage::new(
            3,
            2,
            3,
            (0..18).map(|i| f64::from((i * 14) as u8) / 255.0).collect(),
        )
        .unwrap();
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);

        let mask = Mask::new(3, 2, vec![true, false, true, false, false, true]);
        let mpath = dir.path().join("m.png");
        save_mask(&mask, &mpath).unwrap();
        assert_eq!(load_mask(&mpath).unwrap(), mask);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(load_image("/nonexistent/a.png"), Err(Error::ImageIo { .. })));
    }
}
