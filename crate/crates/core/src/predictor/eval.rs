//! Held-out evaluation of a map predictor.

use serde::{Deserialize, Serialize};

use crate::distortions::{DistortionBank, DistortionKind, N_KINDS};
use crate::error::{Error, Result};
use crate::imagecore::{DistortionMap, ImageBuffer};
use crate::masks::{rect_mask_at, MaskSet, MaskSource};
use crate::scorer::srcc;
use crate::synth::{synthesize, RegionAssignment, Triplet};

use super::MapPredictor;

/// Regions count for disentanglement when their intensity exceeds this.
pub const DISENTANGLE_THRESHOLD: f32 = 0.2;
pub const DEFAULT_ALPHA_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Statistics of `|F(A,B) + F(B,A) - 1|` over all pixels and channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntisymStats {
    pub mean: f64,
    pub max: f64,
    pub per_channel: Vec<f64>,
    pub pairs: usize,
    pub samples: usize,
}

/// Residual statistics over `(F(A,B), F(B,A))` map pairs.
pub fn antisymmetry_stats(maps: &[(DistortionMap, DistortionMap)]) -> Result<AntisymStats> {
    let mut sum = vec![0.0; N_KINDS];
    let mut count = vec![0usize; N_KINDS];
    let mut max = 0.0f64;
    for (ab, ba) in maps {
        if ab.dims() != ba.dims() || ab.n_types() != N_KINDS {
            return Err(Error::DimMismatch(format!("map pair {:?} vs {:?}", ab.dims(), ba.dims())));
        }
        for j in 0..N_KINDS {
            for (x, y) in ab.plane(j).iter().zip(ba.plane(j)) {
                let r = (*x as f64 + *y as f64 - 1.0).abs();
                sum[j] += r;
                count[j] += 1;
                max = max.max(r);
            }
        }
    }
    let samples: usize = count.iter().sum();
    if samples == 0 {
        return Err(Error::InvalidArgument("no pairs to evaluate".into()));
    }
    Ok(AntisymStats {
        mean: sum.iter().sum::<f64>() / samples as f64,
        max,
        per_channel: sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect(),
        pairs: maps.len(),
        samples,
    })
}

pub fn eval_antisymmetry(model: &impl MapPredictor, pairs: &[(ImageBuffer, ImageBuffer)]) -> Result<AntisymStats> {
    let maps = pairs
        .iter()
        .map(|(a, b)| Ok((model.predict(a, b)?, model.predict(b, a)?)))
        .collect::<Result<Vec<_>>>()?;
    antisymmetry_stats(&maps)
}

/// Rows are the true kind, columns the predicted kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub matrix: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub regions: usize,
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// For every region with intensity above [`DISENTANGLE_THRESHOLD`], compares
/// its operator with the argmax over channels of the region-mean prediction.
/// Predictions use the forward orientation `F(distorted, pristine)`.
pub fn eval_disentanglement(model: &impl MapPredictor, triplets: &[Triplet]) -> Result<Confusion> {
    let mut matrix = vec![vec![0usize; N_KINDS]; N_KINDS];
    for t in triplets {
        let (distorted, pristine) = if t.swapped {
            (&t.reference, &t.test)
        } else {
            (&t.test, &t.reference)
        };
        if !t.assignments.iter().any(|a| a.alpha > DISENTANGLE_THRESHOLD) {
            continue;
        }
        let pred = model.predict(distorted, pristine)?;
        let n = pred.pixel_count();
        for a in t.assignments.iter().filter(|a| a.alpha > DISENTANGLE_THRESHOLD) {
            let mut means = vec![0.0; N_KINDS];
            let mut count = 0usize;
            for p in t.masks.region_pixels(a.region) {
                for (j, m) in means.iter_mut().enumerate() {
                    *m += pred.data()[j * n + p] as f64;
                }
                count += 1;
            }
            if count == 0 {
                continue;
            }
            matrix[a.kind.id()][argmax(&means)] += 1;
        }
    }
    let regions: usize = matrix.iter().flatten().sum();
    let correct: usize = (0..N_KINDS).map(|j| matrix[j][j]).sum();
    Ok(Confusion {
        accuracy: if regions == 0 {
            0.0
        } else {
            correct as f64 / regions as f64
        },
        matrix,
        regions,
    })
}

/// Probe for intensity tracking: the central rectangle (half of each side)
/// distorted with `kind` at `alpha`, the rest pristine.
pub fn monotonicity_scene(
    bank: &DistortionBank,
    base: &ImageBuffer,
    kind: DistortionKind,
    alpha: f64,
    seed: u64,
) -> Result<(ImageBuffer, DistortionMap, MaskSet)> {
    let (h, w) = (base.height(), base.width());
    let (rh, rw) = ((h / 2).max(1), (w / 2).max(1));
    let centre = rect_mask_at(h, w, (h - rh) / 2, (w - rw) / 2, rh, rw)?;
    let rest = crate::masks::BinaryMask::new(h, w, centre.data().iter().map(|&v| 1 - v).collect())?;
    let masks = MaskSet::from_masks(&[centre, rest], vec![MaskSource::Rect, MaskSource::Background])?;
    let assignments = [
        RegionAssignment {
            region: 0,
            kind,
            alpha: alpha as f32,
            seed,
        },
        RegionAssignment {
            region: 1,
            kind,
            alpha: 0.0,
            seed,
        },
    ];
    let (test, y) = synthesize(bank, base, &masks, &assignments)?;
    Ok((test, y, masks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityResult {
    pub alphas: Vec<f64>,
    /// Mean predicted channel `kind` inside the distorted region, per alpha.
    pub means: Vec<f64>,
    pub srcc: f64,
    /// Set when the means are all equal and the correlation is undefined.
    pub degenerate: bool,
}

pub fn eval_monotonicity(
    model: &impl MapPredictor,
    bank: &DistortionBank,
    base: &ImageBuffer,
    kind: DistortionKind,
    alphas: &[f64],
    seed: u64,
) -> Result<MonotonicityResult> {
    let means = alphas
        .iter()
        .map(|&a| {
            let (test, _, masks) = monotonicity_scene(bank, base, kind, a, seed)?;
            let pred = model.predict(&test, base)?;
            let plane = pred.plane(kind.id());
            let (sum, count) = masks
                .region_pixels(0)
                .fold((0.0, 0usize), |(s, c), p| (s + plane[p] as f64, c + 1));
            Ok(sum / count as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = srcc(alphas, &means)?;
    Ok(MonotonicityResult {
        alphas: alphas.to_vec(),
        means,
        srcc: r.value,
        degenerate: r.degenerate,
    })
}
