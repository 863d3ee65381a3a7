//! The mask pool: semantic masks ingested from label maps plus random
//! Perlin-threshold and rectangle partitions.

mod perlin;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use perlin::{fade, noise_field, perlin2d};

use crate::error::{Error, Result};
use crate::imagecore::{load_label_png, Rng};

/// Probability of replacing the semantic pool with a random partition.
pub const DEFAULT_P_RANDOM: f64 = 0.3;

/// A binary `H x W` raster stored as 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height * width != data.len() || height == 0 || width == 0 {
            return Err(Error::DimMismatch(format!("mask {height}x{width} with {} samples", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask samples must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, on: bool) -> Self {
        Self {
            height,
            width,
            data: vec![on as u8; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }
}

/// Where a mask in a [`MaskSet`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MaskSource {
    Semantic { class_id: u16 },
    Perlin,
    Rect,
    Background,
}

/// `K >= 1` mutually exclusive masks that partition the frame.
///
/// Stored as a per-pixel region index, which makes the partition invariant
/// hold by construction; [`MaskSet::mask`] expands one region to a raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    sources: Vec<MaskSource>,
}

impl MaskSet {
    /// A single mask covering the whole frame.
    pub fn full(height: usize, width: usize, source: MaskSource) -> Self {
        Self {
            height,
            width,
            labels: vec![0; height * width],
            sources: vec![source],
        }
    }

    /// One semantic mask per distinct class id, ordered by ascending id.
    pub fn from_class_ids(height: usize, width: usize, ids: &[u16]) -> Result<Self> {
        if height == 0 || width == 0 || ids.is_empty() {
            return Err(Error::InvalidArgument("label map is empty".into()));
        }
        if ids.len() != height * width {
            return Err(Error::DimMismatch(format!("{height}x{width} label map with {} ids", ids.len())));
        }
        let mut index = BTreeMap::new();
        for &id in ids {
            index.entry(id).or_insert(0u32);
        }
        for (k, slot) in index.values_mut().enumerate() {
            *slot = k as u32;
        }
        let labels = ids.iter().map(|id| index[id]).collect();
        let sources = index.keys().map(|&class_id| MaskSource::Semantic { class_id }).collect();
        Ok(Self {
            height,
            width,
            labels,
            sources,
        })
    }

    /// Validates that `masks` partition the frame exactly.
    pub fn from_masks(masks: &[BinaryMask], sources: Vec<MaskSource>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::InvalidArgument("a mask set needs at least one mask".into()))?;
        if sources.len() != masks.len() {
            return Err(Error::InvalidArgument(format!(
                "{} masks but {} source tags",
                masks.len(),
                sources.len()
            )));
        }
        let (h, w) = (first.height, first.width);
        if let Some(m) = masks.iter().find(|m| (m.height, m.width) != (h, w)) {
            return Err(Error::DimMismatch(format!("mask {}x{} in a {h}x{w} set", m.height, m.width)));
        }
        let mut labels = vec![u32::MAX; h * w];
        for p in 0..h * w {
            let mut owners = masks.iter().enumerate().filter(|(_, m)| m.data[p] != 0);
            match (owners.next(), owners.next()) {
                (Some((k, _)), None) => labels[p] = k as u32,
                (None, _) => {
                    return Err(Error::NonPartition(format!("pixel ({}, {}) is uncovered", p / w, p % w)))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::NonPartition(format!("pixel ({}, {}) is covered twice", p / w, p % w)))
                }
            }
        }
        Ok(Self {
            height: h,
            width: w,
            labels,
            sources,
        })
    }

    /// Rebuilds a set from stored region indices; every index in `0..K`
    /// must occur.
    pub fn from_region_indices(height: usize, width: usize, labels: Vec<u32>, sources: Vec<MaskSource>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::DimMismatch(format!("{height}x{width} region raster with {} entries", labels.len())));
        }
        let k = sources.len();
        let mut seen = vec![false; k];
        for &l in &labels {
            let slot = seen
                .get_mut(l as usize)
                .ok_or_else(|| Error::NonPartition(format!("region index {l} with only {k} masks")))?;
            *slot = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::NonPartition(format!("mask {empty} is empty")));
        }
        Ok(Self {
            height,
            width,
            labels,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sources(&self) -> &[MaskSource] {
        &self.sources
    }

    /// Region index of every pixel, row-major.
    pub fn region_indices(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_of(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn mask(&self, k: usize) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|&l| (l as usize == k) as u8).collect(),
        }
    }

    pub fn masks(&self) -> Vec<BinaryMask> {
        (0..self.len()).map(|k| self.mask(k)).collect()
    }

    /// Pixel indices of region `k`.
    pub fn region_pixels(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l as usize == k)
            .map(|(p, _)| p)
    }

    /// Per-pixel sum over all masks equals one everywhere.
    pub fn is_partition(&self) -> bool {
        let masks = self.masks();
        (0..self.height * self.width).all(|p| masks.iter().map(|m| m.data[p] as u32).sum::<u32>() == 1)
    }
}

/// Ingests a Gray8/Gray16 label map (pixel value = class id).
pub fn load_label_map(path: impl AsRef<Path>) -> Result<MaskSet> {
    let (h, w, ids) = load_label_png(path)?;
    MaskSet::from_class_ids(h, w, &ids)
}

/// Pixel is set iff `perlin2d(x / cell, y / cell, seed) > threshold`.
pub fn perlin_mask(height: usize, width: usize, cell_size: f64, threshold: f64, seed: u64) -> Result<BinaryMask> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("degenerate mask size {height}x{width}")));
    }
    if !(cell_size >= 2.0) {
        return Err(Error::InvalidArgument(format!("perlin cell size {cell_size} < 2")));
    }
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("perlin threshold {threshold} outside [-1, 1]")));
    }
    let data = noise_field(height, width, cell_size, seed)
        .into_iter()
        .map(|v| (v > threshold) as u8)
        .collect();
    Ok(BinaryMask { height, width, data })
}

/// Axis-aligned rectangle of `rect_h x rect_w` pixels with top-left `(y0, x0)`.
pub fn rect_mask_at(height: usize, width: usize, y0: usize, x0: usize, rect_h: usize, rect_w: usize) -> Result<BinaryMask> {
    if y0 + rect_h > height || x0 + rect_w > width {
        return Err(Error::InvalidArgument(format!(
            "rect {rect_h}x{rect_w} at ({y0}, {x0}) exceeds {height}x{width}"
        )));
    }
    let mut mask = BinaryMask::filled(height, width, false);
    for y in y0..y0 + rect_h {
        mask.data[y * width + x0..y * width + x0 + rect_w].fill(1);
    }
    Ok(mask)
}

/// Random rectangle: sides uniform over the integers in
/// `[ceil(0.1 m), floor(0.6 m)]` with `m = min(H, W)`, position uniform.
pub fn rect_mask(height: usize, width: usize, rng: &mut Rng) -> BinaryMask {
    let m = height.min(width) as f64;
    let lo = ((0.1 * m).ceil() as usize).max(1);
    let hi = ((0.6 * m).floor() as usize).max(lo);
    let mut side = || lo + rng.index(hi - lo + 1);
    let (rh, rw) = (side(), side());
    let y0 = rng.index(height - rh + 1);
    let x0 = rng.index(width - rw + 1);
    rect_mask_at(height, width, y0, x0, rh, rw).expect("rectangle sampled inside the frame")
}

/// Resolves overlapping shapes by creation order (earlier shapes win) and
/// gives every uncovered pixel to a final background mask. Shapes left
/// empty after resolution are dropped.
pub fn partition_from_shapes(height: usize, width: usize, shapes: &[(BinaryMask, MaskSource)]) -> Result<MaskSet> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("degenerate frame {height}x{width}")));
    }
    let mut owner = vec![usize::MAX; height * width];
    for (s, (shape, _)) in shapes.iter().enumerate() {
        if (shape.height, shape.width) != (height, width) {
            return Err(Error::DimMismatch(format!(
                "shape {}x{} in a {height}x{width} frame",
                shape.height, shape.width
            )));
        }
        for (p, &on) in shape.data.iter().enumerate() {
            if on != 0 && owner[p] == usize::MAX {
                owner[p] = s;
            }
        }
    }
    let background = shapes.len();
    for o in &mut owner {
        if *o == usize::MAX {
            *o = background;
        }
    }
    let mut used = vec![false; shapes.len() + 1];
    for &o in &owner {
        used[o] = true;
    }
    let mut remap = vec![u32::MAX; shapes.len() + 1];
    let mut sources = Vec::new();
    for s in (0..=shapes.len()).filter(|&s| used[s]) {
        remap[s] = sources.len() as u32;
        sources.push(if s == background { MaskSource::Background } else { shapes[s].1 });
    }
    let labels = owner.iter().map(|&o| remap[o]).collect();
    MaskSet::from_region_indices(height, width, labels, sources)
}

/// Draws `shape_count` random shapes (Perlin or rectangle, equiprobable).
///
/// Perlin shapes use a cell size of `m / 8`, `m / 4` or `m / 2` (at least
/// 2 px, `m = min(H, W)`) and a threshold uniform in `[-0.2, 0.3]`.
pub fn random_shapes(height: usize, width: usize, shape_count: usize, rng: &mut Rng) -> Result<Vec<(BinaryMask, MaskSource)>> {
    let m = height.min(width) as f64;
    (0..shape_count)
        .map(|_| {
            if rng.bernoulli(0.5) {
                let cell = (m / [8.0, 4.0, 2.0][rng.index(3)]).max(2.0);
                let threshold = rng.uniform(-0.2, 0.3);
                let seed = rng.next_u64();
                Ok((perlin_mask(height, width, cell, threshold, seed)?, MaskSource::Perlin))
            } else {
                Ok((rect_mask(height, width, rng), MaskSource::Rect))
            }
        })
        .collect()
}

/// A random partition built from `1..=4` shapes plus background.
pub fn random_mask_set(height: usize, width: usize, rng: &mut Rng) -> Result<MaskSet> {
    let count = 1 + rng.index(4);
    let shapes = random_shapes(height, width, count, rng)?;
    partition_from_shapes(height, width, &shapes)
}

/// Which branch [`sample_mask_pool`] took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolBranch {
    Semantic,
    Random,
}

/// Returns the semantic set with probability `1 - p_random`, otherwise a
/// random partition. Always random when `semantic` is absent.
///
/// One Bernoulli draw is consumed in every case so that downstream draws
/// stay aligned whether or not a semantic set is supplied.
pub fn sample_mask_pool(
    semantic: Option<&MaskSet>,
    height: usize,
    width: usize,
    rng: &mut Rng,
    p_random: f64,
) -> Result<(MaskSet, PoolBranch)> {
    if !(0.0..=1.0).contains(&p_random) {
        return Err(Error::InvalidArgument(format!("p_random {p_random} outside [0, 1]")));
    }
    if let Some(s) = semantic {
        if (s.height, s.width) != (height, width) {
            return Err(Error::DimMismatch(format!(
                "semantic masks are {}x{}, frame is {height}x{width}",
                s.height, s.width
            )));
        }
    }
    let draw_random = rng.bernoulli(p_random);
    match semantic {
        Some(s) if !draw_random => Ok((s.clone(), PoolBranch::Semantic)),
        _ => Ok((random_mask_set(height, width, rng)?, PoolBranch::Random)),
    }
}
