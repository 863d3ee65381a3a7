//! Triplet synthesis: per-region distortion compositing, dense targets,
//! focal weights, the role swap, ordinal tiers and dataset files.

mod dataset;
mod engine;
mod tiers;

pub use dataset::{
    load_tier_set, read_dataset, read_tier_dataset, regenerate, write_dataset, write_tier_dataset, Loaded, RecordError,
    TierRecord, TripletRecord, MANIFEST,
};
pub use engine::{
    make_weight_map, sample_assignments, scene_for_item, swap_augment, synthesize, Engine, IntensityLaw, IntensityShape,
    RegionAssignment, Triplet, WeightMap, DEFAULT_BETA, DEFAULT_P_SWAP, DEFAULT_P_ZERO, DEFAULT_W_HIGH,
};
pub use tiers::{build_tier_schedule, validate_schedule, TierDraw, TierScene, TierSet, DEFAULT_TIER_SCHEDULE};

use rayon::prelude::*;

use crate::error::Result;
use crate::imagecore::{mix64, rng_derive, ImageBuffer};
use crate::masks::MaskSet;

const SWAP_SALT: u64 = 0x5A5A_0F0F_C3C3_9696;

/// Where reference images come from.
#[derive(Debug, Clone)]
pub enum ReferenceSource {
    /// A fresh procedural scene per item. With `semantic` set its regions
    /// form the semantic mask pool; otherwise every item takes the random branch.
    Procedural { height: usize, width: usize, semantic: bool },
    /// Item `i` uses entry `i mod len`.
    Images(Vec<(ImageBuffer, Option<MaskSet>)>),
}

/// Generates items `0..count` in parallel. Each item depends only on
/// `(master_seed, item_index)`, so the output does not depend on thread count.
/// The optional swap draws from its own per-item stream.
pub fn generate_triplets(
    engine: &Engine,
    source: &ReferenceSource,
    master_seed: u64,
    count: u64,
    p_swap: f64,
) -> Result<Vec<Triplet>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let t = match source {
                ReferenceSource::Procedural { height, width, semantic } => {
                    let scene = scene_for_item(master_seed, i, *height, *width);
                    let masks = if *semantic { Some(scene.masks()?) } else { None };
                    engine.generate(&scene.image, masks.as_ref(), master_seed, i)?
                }
                ReferenceSource::Images(list) => {
                    let (img, sem) = &list[(i % list.len() as u64) as usize];
                    engine.generate(img, sem.as_ref(), master_seed, i)?
                }
            };
            swap_augment(t, p_swap, &mut rng_derive(mix64(master_seed ^ SWAP_SALT), i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_ignores_thread_count() {
        let src = ReferenceSource::Procedural { height: 24, width: 24, semantic: true };
        let e = Engine::default();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_triplets(&e, &src, 42, 12, 0.25).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| generate_triplets(&e, &src, 42, 12, 0.25).unwrap());
        assert_eq!(one, many);
        let solo = e.generate(&scene_for_item(42, 7, 24, 24).image, Some(&scene_for_item(42, 7, 24, 24).masks().unwrap()), 42, 7).unwrap();
        assert_eq!(one[7].forward_target(), solo.target);
    }
}
