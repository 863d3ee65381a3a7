//! Global features of an image and its predicted distortion map.
//!
//! Layout (67 values for six kinds): RGB means (3), RGB standard deviations
//! (3), map channel means (6), map channel standard deviations (6), an
//! 8-bin histogram per map channel on uniform bins over [0, 1] (48, channel
//! major), and the mean luma gradient magnitude (1).

use crate::distortions::N_KINDS;
use crate::error::{Error, Result};
use crate::imagecore::{DistortionMap, ImageBuffer};
use crate::predictor::gradient_magnitude;

pub const HIST_BINS: usize = 8;
pub const SCORE_FEATURES: usize = 3 * 2 + N_KINDS * 2 + N_KINDS * HIST_BINS + 1;
pub const SCORE_FEATURE_SCHEMA: &str = "global-image-map-67/v1";

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let m = xs.clone().sum::<f64>() / n;
    let v = xs.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Bin of `v` among [`HIST_BINS`] uniform bins; 1.0 falls in the last one.
pub fn hist_bin(v: f32) -> usize {
    ((v as f64 * HIST_BINS as f64).floor() as usize).min(HIST_BINS - 1)
}

pub fn featurize_scoring_input(img: &ImageBuffer, map: &DistortionMap) -> Result<Vec<f64>> {
    let (c, h, w) = img.dims();
    if c != 3 {
        return Err(Error::InvalidArgument(format!("scoring needs 3 channels, got {c}")));
    }
    if (map.height(), map.width()) != (h, w) || map.n_types() != N_KINDS {
        return Err(Error::DimMismatch(format!("map {:?} for image {:?}", map.dims(), img.dims())));
    }
    let mut out = Vec::with_capacity(SCORE_FEATURES);
    let rgb: Vec<(f64, f64)> = (0..3).map(|ch| mean_std(img.plane(ch).iter().map(|&v| v as f64))).collect();
    out.extend(rgb.iter().map(|p| p.0));
    out.extend(rgb.iter().map(|p| p.1));
    let maps: Vec<(f64, f64)> = (0..N_KINDS).map(|j| mean_std(map.plane(j).iter().map(|&v| v as f64))).collect();
    out.extend(maps.iter().map(|p| p.0));
    out.extend(maps.iter().map(|p| p.1));
    let n = (h * w) as f64;
    for j in 0..N_KINDS {
        let mut hist = [0usize; HIST_BINS];
        for &v in map.plane(j) {
            hist[hist_bin(v)] += 1;
        }
        out.extend(hist.iter().map(|&k| k as f64 / n));
    }
    let grad = gradient_magnitude(&img.luma(), h, w);
    out.push(grad.iter().sum::<f64>() / n);
    debug_assert_eq!(out.len(), SCORE_FEATURES);
    Ok(out)
}
