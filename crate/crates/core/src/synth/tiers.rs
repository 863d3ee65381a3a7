//! Ordinal quality tiers built from a shared draw per scene.

use serde::{Deserialize, Serialize};

use crate::distortions::{DistortionBank, DistortionKind, N_KINDS};
use crate::error::{Error, Result};
use crate::imagecore::{rng_derive, ImageBuffer, Rng};
use crate::masks::MaskSet;

use super::engine::{synthesize, RegionAssignment};

pub const DEFAULT_TIER_SCHEDULE: [f64; 3] = [0.2, 0.5, 0.9];

/// Operator and seed for one region of a scene; the intensity comes from the tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierDraw {
    #[serde(rename = "op")]
    pub kind: DistortionKind,
    pub seed: u64,
}

/// One scene across all tiers.
#[derive(Debug, Clone, PartialEq)]
pub struct TierScene {
    pub masks: MaskSet,
    pub draws: Vec<TierDraw>,
    /// `images[s]` belongs to tier `-s`; `images[0]` is the base image.
    pub images: Vec<ImageBuffer>,
}

impl TierScene {
    pub fn assignments(&self, alpha: f32) -> Vec<RegionAssignment> {
        self.draws
            .iter()
            .enumerate()
            .map(|(region, d)| RegionAssignment {
                region,
                kind: d.kind,
                alpha,
                seed: d.seed,
            })
            .collect()
    }
}

/// Image sets ordered by quality. Tier `-s` holds every scene distorted at
/// `alphas[s]`; `alphas[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TierSet {
    pub alphas: Vec<f32>,
    pub scenes: Vec<TierScene>,
    pub base_seed: u64,
}

impl TierSet {
    /// Number of tiers including tier 0.
    pub fn tier_count(&self) -> usize {
        self.alphas.len()
    }

    /// Tier ids `0, -1, ..., -T`.
    pub fn tier_ids(&self) -> Vec<i32> {
        (0..self.tier_count()).map(|s| -(s as i32)).collect()
    }

    /// Images of tier `-s`.
    pub fn tier(&self, s: usize) -> Vec<&ImageBuffer> {
        self.scenes.iter().map(|sc| &sc.images[s]).collect()
    }

    /// Keeps only the scenes at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TierSet {
        TierSet {
            alphas: self.alphas.clone(),
            scenes: indices.iter().map(|&i| self.scenes[i].clone()).collect(),
            base_seed: self.base_seed,
        }
    }
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("tier schedule is empty".into()));
    }
    let mut prev = 0.0;
    for &a in schedule {
        if !(a > prev) || a > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "tier schedule {schedule:?} must be strictly increasing within (0, 1]"
            )));
        }
        prev = a;
    }
    Ok(())
}

/// Builds `1 + schedule.len()` tiers. Scene `i` draws its operators and
/// seeds once from `rng_derive(base, i)` where `base` is the next draw of
/// `rng`, and every tier reuses that draw so only the intensity varies.
/// Every region is distorted; there is no pristine option inside a tier.
pub fn build_tier_schedule(
    bank: &DistortionBank,
    base_images: &[ImageBuffer],
    schedule: &[f64],
    masks_per_image: &[MaskSet],
    rng: &mut Rng,
) -> Result<TierSet> {
    validate_schedule(schedule)?;
    if masks_per_image.len() != base_images.len() {
        return Err(Error::DimMismatch(format!(
            "{} mask sets for {} images",
            masks_per_image.len(),
            base_images.len()
        )));
    }
    let base_seed = rng.next_u64();
    let alphas: Vec<f32> = std::iter::once(0.0)
        .chain(schedule.iter().map(|&a| a as f32))
        .collect();
    let scenes = base_images
        .iter()
        .zip(masks_per_image)
        .enumerate()
        .map(|(i, (image, masks))| {
            let mut r = rng_derive(base_seed, i as u64);
            let draws: Vec<TierDraw> = (0..masks.len())
                .map(|_| TierDraw {
                    kind: DistortionKind::from_id(r.index(N_KINDS)).expect("index below N_KINDS"),
                    seed: r.next_u64(),
                })
                .collect();
            let mut scene = TierScene {
                masks: masks.clone(),
                draws,
                images: vec![image.clone()],
            };
            for &alpha in &alphas[1..] {
                let (img, _) = synthesize(bank, image, masks, &scene.assignments(alpha))?;
                scene.images.push(img);
            }
            Ok(scene)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TierSet {
        alphas,
        scenes,
        base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortions::distortion_magnitude;
    use crate::synth::engine::scene_for_item;

    fn bases(n: usize) -> (Vec<ImageBuffer>, Vec<MaskSet>) {
        (0..n)
            .map(|i| {
                let s = scene_for_item(21, i as u64, 40, 40);
                let m = s.masks().unwrap();
                (s.image, m)
            })
            .unzip()
    }

    #[test]
    fn single_step_schedule() {
        let (imgs, masks) = bases(4);
        let set = build_tier_schedule(&DistortionBank::default(), &imgs, &[0.2], &masks, &mut Rng::new(1)).unwrap();
        assert_eq!(set.tier_ids(), vec![0, -1]);
        for (i, sc) in set.scenes.iter().enumerate() {
            assert_eq!(sc.images[0], imgs[i]);
            assert!(distortion_magnitude(&sc.images[0], &sc.images[1]).unwrap() > 0.0);
        }
    }

    #[test]
    fn magnitude_increases_across_tiers() {
        let (imgs, masks) = bases(8);
        let set = build_tier_schedule(
            &DistortionBank::default(),
            &imgs,
            &DEFAULT_TIER_SCHEDULE,
            &masks,
            &mut Rng::new(2),
        )
        .unwrap();
        for sc in &set.scenes {
            let mags: Vec<f64> = sc
                .images
                .iter()
                .map(|im| distortion_magnitude(&sc.images[0], im).unwrap())
                .collect();
            assert!(mags.windows(2).all(|w| w[1] > w[0]), "{mags:?} for {:?}", sc.draws);
        }
    }

    #[test]
    fn rejects_bad_schedules() {
        let (imgs, masks) = bases(1);
        for bad in [&[][..], &[0.5, 0.5], &[0.5, 0.2], &[0.0, 0.3], &[0.5, 1.2]] {
            assert!(build_tier_schedule(&DistortionBank::default(), &imgs, bad, &masks, &mut Rng::new(0)).is_err());
        }
    }
}
