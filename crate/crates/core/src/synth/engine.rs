//! Per-region compositing of distortions and the matching ground truth.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::distortions::{DistortionBank, DistortionKind, N_KINDS};
use crate::error::{Error, Result};
use crate::imagecore::{mix64, rng_derive, DistortionMap, ImageBuffer, Rng};
use crate::masks::{sample_mask_pool, MaskSet, PoolBranch, DEFAULT_P_RANDOM};
use crate::scenes::{generate_scene, Scene};

pub const DEFAULT_P_ZERO: f64 = 0.2;
pub const DEFAULT_P_SWAP: f64 = 0.25;
pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_W_HIGH: f64 = 10.0;

/// Shape of the non-zero part of the intensity law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityShape {
    Uniform,
    Beta { a: f64, b: f64 },
}

/// Zero-inflated intensity distribution: a region stays pristine with
/// probability `p_zero`, otherwise its intensity follows `shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityLaw {
    pub shape: IntensityShape,
    pub p_zero: f64,
}

impl Default for IntensityLaw {
    fn default() -> Self {
        Self {
            shape: IntensityShape::Uniform,
            p_zero: DEFAULT_P_ZERO,
        }
    }
}

impl IntensityLaw {
    pub fn beta(a: f64, b: f64) -> Self {
        Self {
            shape: IntensityShape::Beta { a, b },
            ..Self::default()
        }
    }

    /// Every region pristine.
    pub fn always_zero() -> Self {
        Self {
            p_zero: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_zero) {
            return Err(Error::InvalidArgument(format!("p_zero {} outside [0, 1]", self.p_zero)));
        }
        if let IntensityShape::Beta { a, b } = self.shape {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta({a}, {b}) needs positive finite shapes")));
            }
        }
        Ok(())
    }

    /// Draws one intensity. Values are rounded to f32 so they are stored
    /// losslessly in maps and manifests.
    pub fn sample(&self, rng: &mut Rng) -> f32 {
        if rng.bernoulli(self.p_zero) {
            return 0.0;
        }
        let v = match self.shape {
            IntensityShape::Uniform => rng.next_f64(),
            IntensityShape::Beta { a, b } => Beta::new(a, b).expect("validated beta shapes").sample(rng),
        };
        (v.clamp(0.0, 1.0)) as f32
    }
}

/// Operator, intensity and stream seed for one mask region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionAssignment {
    #[serde(rename = "k")]
    pub region: usize,
    #[serde(rename = "op")]
    pub kind: DistortionKind,
    pub alpha: f32,
    pub seed: u64,
}

/// One assignment per region: operator uniform over the bank, intensity
/// from `law`, seed from `rng`.
pub fn sample_assignments(masks: &MaskSet, law: &IntensityLaw, rng: &mut Rng) -> Vec<RegionAssignment> {
    (0..masks.len())
        .map(|region| {
            let kind = DistortionKind::from_id(rng.index(N_KINDS)).expect("index below N_KINDS");
            let alpha = law.sample(rng);
            let seed = rng.next_u64();
            RegionAssignment {
                region,
                kind,
                alpha,
                seed,
            }
        })
        .collect()
}

/// Composites `I_test = sum_k m_k * x_{j_k}(I_ref, alpha_k)` and builds
/// `Y^(j) = sum_{k: j_k = j} alpha_k * m_k`.
///
/// Each operator runs on the full frame with a stream seeded from the
/// region seed; only the region's pixels are kept. Regions with zero
/// intensity are copied from the reference without running an operator.
pub fn synthesize(
    bank: &DistortionBank,
    reference: &ImageBuffer,
    masks: &MaskSet,
    assignments: &[RegionAssignment],
) -> Result<(ImageBuffer, DistortionMap)> {
    let (c, h, w) = reference.dims();
    if (masks.height(), masks.width()) != (h, w) {
        return Err(Error::DimMismatch(format!(
            "masks {}x{} for a {h}x{w} image",
            masks.height(),
            masks.width()
        )));
    }
    if assignments.len() != masks.len() {
        return Err(Error::DimMismatch(format!(
            "{} assignments for {} masks",
            assignments.len(),
            masks.len()
        )));
    }
    let n = h * w;
    let mut test = reference.data().to_vec();
    let mut target = DistortionMap::zeros(N_KINDS, h, w);
    for (k, a) in assignments.iter().enumerate() {
        if a.region != k {
            return Err(Error::InvalidArgument(format!("assignment {k} names region {}", a.region)));
        }
        if !(0.0..=1.0).contains(&a.alpha) {
            return Err(Error::InvalidArgument(format!("region {k} intensity {} outside [0, 1]", a.alpha)));
        }
        if a.alpha == 0.0 {
            continue;
        }
        let distorted = bank.apply(a.kind, reference, a.alpha as f64, &mut Rng::new(a.seed))?;
        let y = target.data_mut();
        for p in masks.region_pixels(k) {
            for ch in 0..c {
                test[ch * n + p] = distorted.data()[ch * n + p];
            }
            y[a.kind.id() * n + p] = a.alpha;
        }
    }
    Ok((ImageBuffer::new(c, h, w, test)?, target))
}

/// Focal weights: `w_high` where `|Y| > beta`, else 1. Same layout as `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub dims: (usize, usize, usize),
    pub data: Vec<f64>,
}

pub fn make_weight_map(target: &DistortionMap, beta: f64, w_high: f64) -> Result<WeightMap> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside [0, 1)")));
    }
    if !(w_high >= 1.0) {
        return Err(Error::InvalidArgument(format!("w_high {w_high} < 1")));
    }
    let data = target
        .data()
        .iter()
        .map(|&v| if v.abs() > beta as f32 { w_high } else { 1.0 })
        .collect();
    Ok(WeightMap {
        dims: target.dims(),
        data,
    })
}

/// A synthesized training unit and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    /// Second argument of the predictor (`I_B`).
    pub reference: ImageBuffer,
    /// First argument of the predictor (`I_A`).
    pub test: ImageBuffer,
    /// Regression target for `F(test, reference)`.
    pub target: DistortionMap,
    pub assignments: Vec<RegionAssignment>,
    pub masks: MaskSet,
    pub branch: PoolBranch,
    /// Roles exchanged and target complemented.
    pub swapped: bool,
    pub master_seed: u64,
    pub item_index: u64,
}

impl Triplet {
    /// The target in forward orientation (`Y`, never `1 - Y`).
    pub fn forward_target(&self) -> DistortionMap {
        if self.swapped {
            self.target.complement()
        } else {
            self.target.clone()
        }
    }

    /// Weights from the forward map's support, shared by both loss terms.
    pub fn weight_map(&self, beta: f64, w_high: f64) -> Result<WeightMap> {
        make_weight_map(&self.forward_target(), beta, w_high)
    }
}

/// With probability `p_swap` exchanges the images and complements the target.
/// One Bernoulli draw is consumed either way.
pub fn swap_augment(triplet: Triplet, p_swap: f64, rng: &mut Rng) -> Result<Triplet> {
    if triplet.swapped {
        return Err(Error::DoubleSwap);
    }
    if !(0.0..=1.0).contains(&p_swap) {
        return Err(Error::InvalidArgument(format!("p_swap {p_swap} outside [0, 1]")));
    }
    if !rng.bernoulli(p_swap) {
        return Ok(triplet);
    }
    Ok(Triplet {
        reference: triplet.test,
        test: triplet.reference,
        target: triplet.target.complement(),
        swapped: true,
        ..triplet
    })
}

/// Distortion engine settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    pub bank: DistortionBank,
    pub law: IntensityLaw,
    /// Probability of the random mask branch.
    pub p_random: f64,
}

impl Default for Engine {
    fn default() -> Self {
        Self {
            bank: DistortionBank::default(),
            law: IntensityLaw::default(),
            p_random: DEFAULT_P_RANDOM,
        }
    }
}

impl Engine {
    /// Builds item `item_index` from the stream `rng_derive(master_seed, item_index)`:
    /// mask pool draw, then region assignments, then compositing.
    pub fn generate(
        &self,
        reference: &ImageBuffer,
        semantic: Option<&MaskSet>,
        master_seed: u64,
        item_index: u64,
    ) -> Result<Triplet> {
        let mut rng = rng_derive(master_seed, item_index);
        let (masks, branch) =
            sample_mask_pool(semantic, reference.height(), reference.width(), &mut rng, self.p_random)?;
        let assignments = sample_assignments(&masks, &self.law, &mut rng);
        let (test, target) = synthesize(&self.bank, reference, &masks, &assignments)?;
        Ok(Triplet {
            reference: reference.clone(),
            test,
            target,
            assignments,
            masks,
            branch,
            swapped: false,
            master_seed,
            item_index,
        })
    }
}

/// Procedural reference scene for item `item_index`, drawn from a stream that
/// is independent of the item's synthesis stream.
pub fn scene_for_item(master_seed: u64, item_index: u64, height: usize, width: usize) -> Scene {
    let mut rng = rng_derive(mix64(master_seed ^ 0x5CE4_E5EE_D000_0001), item_index);
    generate_scene(height, width, &mut rng)
}
