//! Fixed pairwise per-pixel features.
//!
//! For each image and each window size `w` in {3, 9} there are seven local
//! statistics, in this order: luma mean, luma standard deviation, mean
//! gradient magnitude, R mean, G mean, B mean, mean chroma. Blocks are laid
//! out as `A_w3, A_w9, B_w3, B_w9, (A-B)_w3, (A-B)_w9`, 42 values per pixel.
//! Borders are reflect-101.

use ndarray::Array2;

use crate::distortions::reflect101;
use crate::error::{Error, Result};
use crate::imagecore::ImageBuffer;

pub const WINDOWS: [usize; 2] = [3, 9];
pub const STATS_PER_SCALE: usize = 7;
pub const IMAGE_FEATURES: usize = STATS_PER_SCALE * WINDOWS.len();
pub const PAIR_FEATURES: usize = 3 * IMAGE_FEATURES;
pub const FEATURE_SCHEMA: &str = "pair-local-stats-42/v1";

/// Per-pixel pair features: one row per pixel in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub height: usize,
    pub width: usize,
    pub rows: Array2<f64>,
}

impl PairFeatures {
    /// Features of the reversed pair `(B, A)`. Exact: the image blocks trade
    /// places and the differences change sign.
    pub fn reversed(&self) -> PairFeatures {
        let mut rows = self.rows.clone();
        for mut row in rows.rows_mut() {
            for i in 0..IMAGE_FEATURES {
                row.swap(i, i + IMAGE_FEATURES);
                row[i + 2 * IMAGE_FEATURES] = -row[i + 2 * IMAGE_FEATURES];
            }
        }
        PairFeatures { rows, ..*self }
    }
}

/// Mean over a `k x k` window centred on every pixel.
pub fn box_mean(plane: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let norm = 1.0 / k as f64;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += row[reflect101(x as isize + d, w)];
            }
            tmp[y * w + x] = acc * norm;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += tmp[reflect101(y as isize + d, h) * w + x];
            }
            out[y * w + x] = acc * norm;
        }
    }
    out
}

/// Central-difference gradient magnitude of luma.
pub fn gradient_magnitude(luma: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| luma[reflect101(y, h) * w + reflect101(x, w)];
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = 0.5 * (at(y, x + 1) - at(y, x - 1));
            let gy = 0.5 * (at(y + 1, x) - at(y - 1, x));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// RMS deviation of the channels from their per-pixel mean.
pub fn chroma(img: &ImageBuffer) -> Vec<f64> {
    let c = img.channels();
    let n = img.pixel_count();
    (0..n)
        .map(|p| {
            let vals: Vec<f64> = (0..c).map(|ch| img.data()[ch * n + p] as f64).collect();
            let g = vals.iter().sum::<f64>() / c as f64;
            (vals.iter().map(|v| (v - g) * (v - g)).sum::<f64>() / c as f64).sqrt()
        })
        .collect()
}

/// The 14 single-image statistics per pixel, as `14 x (H W)` planes.
pub fn image_features(img: &ImageBuffer) -> Result<Vec<Vec<f64>>> {
    let (c, h, w) = img.dims();
    if c != 3 {
        return Err(Error::InvalidArgument(format!("features need 3 channels, got {c}")));
    }
    let luma = img.luma();
    // Centring on the global mean keeps E[x^2] - E[x]^2 well conditioned.
    let centre = luma.iter().sum::<f64>() / luma.len() as f64;
    let centred: Vec<f64> = luma.iter().map(|v| v - centre).collect();
    let squared: Vec<f64> = centred.iter().map(|v| v * v).collect();
    let grad = gradient_magnitude(&luma, h, w);
    let chroma = chroma(img);
    let planes: Vec<Vec<f64>> = (0..3).map(|ch| img.plane(ch).iter().map(|&v| v as f64).collect()).collect();
    let mut out = Vec::with_capacity(IMAGE_FEATURES);
    for k in WINDOWS {
        let m = box_mean(&centred, h, w, k);
        let m2 = box_mean(&squared, h, w, k);
        out.push(m.iter().map(|v| v + centre).collect());
        out.push(m.iter().zip(&m2).map(|(a, b)| (b - a * a).max(0.0).sqrt()).collect());
        out.push(box_mean(&grad, h, w, k));
        for p in &planes {
            out.push(box_mean(p, h, w, k));
        }
        out.push(box_mean(&chroma, h, w, k));
    }
    Ok(out)
}

pub fn featurize_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<PairFeatures> {
    if !a.same_dims(b) {
        return Err(Error::DimMismatch(format!("pair dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    let fa = image_features(a)?;
    let fb = image_features(b)?;
    let n = a.pixel_count();
    let mut rows = Array2::zeros((n, PAIR_FEATURES));
    for (p, mut row) in rows.rows_mut().into_iter().enumerate() {
        for i in 0..IMAGE_FEATURES {
            row[i] = fa[i][p];
            row[i + IMAGE_FEATURES] = fb[i][p];
            row[i + 2 * IMAGE_FEATURES] = fa[i][p] - fb[i][p];
        }
    }
    Ok(PairFeatures {
        height: a.height(),
        width: a.width(),
        rows,
    })
}
