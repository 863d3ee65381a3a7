//! 8/16-bit PNG ingestion and 8-bit PNG output.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::ImageBuffer;
use crate::error::{Error, Result};

/// Channel handling for grayscale inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrayMode {
    /// Keep a single channel.
    #[default]
    Native,
    /// Replicate gray into three identical channels.
    ExpandToRgb,
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn color_name(img: &DynamicImage) -> String {
    format!("{:?}", img.color())
}

/// Loads an RGB or grayscale PNG, scaling samples by the bit-depth maximum.
pub fn load_png(path: impl AsRef<Path>, gray: GrayMode) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match &img {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(|&v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, planarize(b.as_raw(), h * w, |v| v as f32 / 255.0)),
        DynamicImage::ImageRgb16(b) => (3, planarize(b.as_raw(), h * w, |v| v as f32 / 65535.0)),
        other => {
            return Err(Error::UnsupportedColorType {
                path: path.to_path_buf(),
                color_type: color_name(other),
            })
        }
    };
    let (channels, data) = if channels == 1 && gray == GrayMode::ExpandToRgb {
        let mut rgb = Vec::with_capacity(3 * data.len());
        for _ in 0..3 {
            rgb.extend_from_slice(&data);
        }
        (3, rgb)
    } else {
        (channels, data)
    };
    ImageBuffer::new(channels, h, w, data)
}

fn planarize<T: Copy>(interleaved: &[T], pixels: usize, scale: impl Fn(T) -> f32) -> Vec<f32> {
    let mut out = vec![0.0f32; 3 * pixels];
    for (p, px) in interleaved.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * pixels + p] = scale(px[c]);
        }
    }
    out
}

/// Loads a single-channel label map (Gray8 or Gray16) as raw integer ids.
pub fn load_label_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids = match &img {
        DynamicImage::ImageLuma8(b) => b.as_raw().iter().map(|&v| v as u16).collect(),
        DynamicImage::ImageLuma16(b) => b.as_raw().clone(),
        other => {
            return Err(Error::UnsupportedColorType {
                path: path.to_path_buf(),
                color_type: format!("{} (label maps must be single-channel)", color_name(other)),
            })
        }
    };
    Ok((h, w, ids))
}

/// `round(x * 255)` with halves rounded up.
#[inline]
pub fn quantize_u8(x: f32) -> u8 {
    (x as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Interleaved 8-bit samples of an image with one or three channels.
pub fn to_interleaved_u8(img: &ImageBuffer) -> Result<Vec<u8>> {
    let c = img.channels();
    if c != 1 && c != 3 {
        return Err(Error::InvalidArgument(format!("PNG output needs 1 or 3 channels, got {c}")));
    }
    let n = img.pixel_count();
    let mut out = vec![0u8; c * n];
    for ch in 0..c {
        for (p, &v) in img.plane(ch).iter().enumerate() {
            out[p * c + ch] = quantize_u8(v);
        }
    }
    Ok(out)
}

/// Writes an 8-bit Gray or RGB PNG.
pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_interleaved_u8(img)?;
    let color = if img.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Writes a Gray8 PNG of raw byte values (label maps, map visualizations).
pub fn save_gray8(height: usize, width: usize, bytes: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image::save_buffer_with_format(
        path,
        bytes,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(0.0), 0);
        assert_eq!(quantize_u8(0.5), 128);
    }

    #[test]
    fn every_byte_survives_round_trip() {
        for b in 0..=255u8 {
            assert_eq!(quantize_u8(b as f32 / 255.0), b);
        }
    }

    #[test]
    fn scale_examples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        save_gray8(1, 3, &[255, 0, 128], &path).unwrap();
        let img = load_png(&path, GrayMode::Native).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 128.0 / 255.0]);
        assert!((img.data()[2] - 0.50196).abs() < 1e-5);
        let rgb = load_png(&path, GrayMode::ExpandToRgb).unwrap();
        assert_eq!(rgb.channels(), 3);
        assert_eq!(rgb.plane(2), img.plane(0));
    }

    #[test]
    fn sixteen_bit_and_rgba() {
        let dir = tempfile::tempdir().unwrap();
        let p16 = dir.path().join("g16.png");
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![65535u16, 0]).unwrap();
        buf.save(&p16).unwrap();
        let img = load_png(&p16, GrayMode::Native).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0]);

        let prgba = dir.path().join("rgba.png");
        image::RgbaImage::new(2, 2).save(&prgba).unwrap();
        match load_png(&prgba, GrayMode::Native) {
            Err(Error::UnsupportedColorType { color_type, .. }) => assert!(color_type.contains("Rgba8")),
            other => panic!("expected color-type error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_png("/definitely/not/here.png", GrayMode::Native), Err(Error::Io { .. })));
    }

    #[test]
    fn random_round_trip_within_half_step() {
        let mut rng = crate::Rng::new(5);
        let img = ImageBuffer::from_fn(3, 17, 13, |_, _, _| rng.next_f64() as f32);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.png");
        save_png(&img, &path).unwrap();
        let back = load_png(&path, GrayMode::Native).unwrap();
        let max = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max);
        assert!(max <= 1.0 / 510.0 + 1e-7, "max error {max}");
    }
}
