use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::RgbImage;
use crate::{Error, Result};

/// Decodes a raster file into `[0, 1]` channels.
///
/// 8-bit channels are divided by 255 and 16-bit channels by 65535. Grayscale
/// input is replicated to three channels and alpha is dropped.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::ImageDecode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(from_dynamic(decoded))
}

/// Decodes an in-memory raster; `path` only names it in errors.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    Ok(from_dynamic(decode_dynamic(bytes, path)?))
}

fn decode_dynamic(bytes: &[u8], path: &Path) -> Result<DynamicImage> {
    let decode_err = |message: String| Error::ImageDecode {
        path: path.to_path_buf(),
        message,
    };
    ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))
}

/// Reads an object-label raster: every distinct non-black color (or gray
/// level) is one object. Returns the dimensions and a per-pixel object id,
/// 0 for background, ids numbered from 1 in increasing color order.
pub fn load_label_raster(path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = decode_dynamic(&bytes, path)?.to_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let key = |p: &image::Rgb<u16>| (u64::from(p.0[0]) << 32) | (u64::from(p.0[1]) << 16) | u64::from(p.0[2]);
    let mut ids: BTreeMap<u64, u32> = img.pixels().map(key).filter(|&k| k != 0).map(|k| (k, 0)).collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i as u32 + 1;
    }
    let labels = img.pixels().map(|p| ids.get(&key(p)).copied().unwrap_or(0)).collect();
    Ok((w, h, labels))
}

fn from_dynamic(img: DynamicImage) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<[f64; 3]> = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 65535.0))
            .collect(),
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => img
            .to_rgb32f()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c).clamp(0.0, 1.0)))
            .collect(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 255.0))
            .collect(),
    };
    RgbImage::from_raw_unchecked(w, h, pixels)
}

/// Writes an 8-bit RGB PNG (channels rounded to the nearest 1/255).
pub fn save_rgb8(img: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = image::RgbImage::new(img.width() as u32, img.height() as u32);
    for (dst, src) in buf.pixels_mut().zip(img.pixels()) {
        dst.0 = src.map(|c| (c * 255.0).round() as u8);
    }
    buf.save(path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        other => Error::ImageDecode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_scaling() {
        let g16 = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        let img = from_dynamic(DynamicImage::ImageLuma16(g16));
        assert_eq!(img.pixels(), &[[0.0; 3], [1.0; 3]]);

        let rgba = image::RgbaImage::from_raw(1, 1, vec![51, 102, 255, 7]).unwrap();
        let img = from_dynamic(DynamicImage::ImageRgba8(rgba));
        assert_eq!(img.pixel(0, 0), [0.2, 0.4, 1.0]);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RgbImage::from_fn(3, 2, |x, y| [x as f64 / 255.0, y as f64 / 255.0, 1.0]).unwrap();
        save_rgb8(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn label_raster_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.png");
        let buf = image::GrayImage::from_raw(4, 1, vec![0, 9, 3, 9]).unwrap();
        buf.save(&path).unwrap();
        assert_eq!(load_label_raster(&path).unwrap(), (4, 1, vec![0, 2, 1, 2]));
    }

    #[test]
    fn garbage_bytes_fail_to_decode() {
        let err = decode_image(b"not an image", Path::new("x.png")).unwrap_err();
        assert!(matches!(err, Error::ImageDecode { .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image(Path::new("/definitely/not/here.png")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }
}
