//! On-disk triplet and tier datasets.
//!
//! Triplet layout: `images/{item}_{ref|test}.png`, `maps/{item}_Y.dqtf`,
//! `maps/{item}_masks.dqtf` and one JSON line per item in `manifest.jsonl`.
//! Tier layout: `tier_{s}/{scene}.png` for tier `-s`, `masks/{scene}_masks.dqtf`
//! and `manifest.jsonl`. Unknown manifest fields are ignored.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortions::DistortionBank;
use crate::error::{Error, Result};
use crate::imagecore::{load_png, read_map, read_tensor, save_png, write_map, write_tensor, GrayMode, ImageBuffer, RawTensor, TensorData};
use crate::masks::{MaskSet, MaskSource, PoolBranch};

use super::engine::{synthesize, RegionAssignment, Triplet};
use super::tiers::{TierDraw, TierScene, TierSet};

pub const MANIFEST: &str = "manifest.jsonl";

/// One manifest line of a triplet dataset. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub item_index: u64,
    pub master_seed: u64,
    #[serde(rename = "ref")]
    pub reference: String,
    pub test: String,
    #[serde(rename = "Y")]
    pub target: String,
    pub masks: String,
    pub assignments: Vec<RegionAssignment>,
    pub mask_sources: Vec<MaskSource>,
    pub branch: PoolBranch,
    pub swapped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<i32>,
}

/// One manifest line of a tier dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRecord {
    pub scene: usize,
    pub tier: i32,
    pub alpha: f32,
    pub image: String,
    pub masks: String,
    pub base_seed: u64,
    pub draws: Vec<TierDraw>,
    pub mask_sources: Vec<MaskSource>,
}

/// A manifest line that could not be loaded.
#[derive(Debug)]
pub struct RecordError {
    /// 1-based manifest line.
    pub line: usize,
    pub error: Error,
}

#[derive(Debug)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub errors: Vec<RecordError>,
}

fn item_stem(i: u64) -> String {
    format!("{i:06}")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_manifest<T: Serialize>(dir: &Path, records: &[T]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::json("manifest record", e))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&out).map_err(|e| Error::io(&path, e))
}

/// Parsed manifest lines: `(line number, record or error)`. Blank lines are skipped.
fn read_manifest<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<Vec<(usize, Result<T>)>> {
    let path = dir.join(MANIFEST);
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::json(format!("manifest line {}", i + 1), e));
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn mask_tensor(masks: &MaskSet) -> RawTensor {
    RawTensor {
        dims: vec![1, masks.height(), masks.width()],
        data: TensorData::F32(masks.region_indices().iter().map(|&k| k as f32).collect()),
    }
}

fn read_mask_tensor(path: &Path, sources: Vec<MaskSource>) -> Result<MaskSet> {
    let t = read_tensor(path)?;
    let [1, h, w] = t.dims[..] else {
        return Err(Error::DimMismatch(format!("{}: mask raster dims {:?}", path.display(), t.dims)));
    };
    let labels = t
        .to_f64()
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::InvalidArgument(format!("{}: bad region index {v}", path.display())))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    MaskSet::from_region_indices(h, w, labels, sources)
}

/// Writes images, maps, mask rasters and the manifest. Records are sorted by
/// item index.
pub fn write_dataset(triplets: &[Triplet], dir: impl AsRef<Path>) -> Result<Vec<TripletRecord>> {
    let dir = dir.as_ref();
    create_dir(&dir.join("images"))?;
    create_dir(&dir.join("maps"))?;
    let mut order: Vec<&Triplet> = triplets.iter().collect();
    order.sort_by_key(|t| t.item_index);
    let mut records = Vec::with_capacity(order.len());
    for t in order {
        let stem = item_stem(t.item_index);
        let rec = TripletRecord {
            item_index: t.item_index,
            master_seed: t.master_seed,
            reference: format!("images/{stem}_ref.png"),
            test: format!("images/{stem}_test.png"),
            target: format!("maps/{stem}_Y.dqtf"),
            masks: format!("maps/{stem}_masks.dqtf"),
            assignments: t.assignments.clone(),
            mask_sources: t.masks.sources().to_vec(),
            branch: t.branch,
            swapped: t.swapped,
            tier: None,
        };
        save_png(&t.reference, dir.join(&rec.reference))?;
        save_png(&t.test, dir.join(&rec.test))?;
        write_map(&t.target, dir.join(&rec.target))?;
        write_tensor(&mask_tensor(&t.masks), dir.join(&rec.masks))?;
        records.push(rec);
    }
    write_manifest(dir, &records)?;
    Ok(records)
}

fn load_record(dir: &Path, rec: &TripletRecord) -> Result<Triplet> {
    let reference = load_png(dir.join(&rec.reference), GrayMode::Native)?;
    let test = load_png(dir.join(&rec.test), GrayMode::Native)?;
    let target = read_map(dir.join(&rec.target))?;
    let masks = read_mask_tensor(&dir.join(&rec.masks), rec.mask_sources.clone())?;
    let (c, h, w) = reference.dims();
    if test.dims() != (c, h, w) {
        return Err(Error::DimMismatch(format!("item {}: test image {:?} vs reference {:?}", rec.item_index, test.dims(), (c, h, w))));
    }
    if (target.height(), target.width()) != (h, w) || (masks.height(), masks.width()) != (h, w) {
        return Err(Error::DimMismatch(format!("item {}: map or mask size differs from the images", rec.item_index)));
    }
    if rec.assignments.len() != masks.len() {
        return Err(Error::DimMismatch(format!(
            "item {}: {} assignments for {} masks",
            rec.item_index,
            rec.assignments.len(),
            masks.len()
        )));
    }
    Ok(Triplet {
        reference,
        test,
        target,
        assignments: rec.assignments.clone(),
        masks,
        branch: rec.branch,
        swapped: rec.swapped,
        master_seed: rec.master_seed,
        item_index: rec.item_index,
    })
}

/// Loads every record that is consistent with its files; the rest are
/// reported individually.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Loaded<(TripletRecord, Triplet)>> {
    let dir = dir.as_ref();
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (line, rec) in read_manifest::<TripletRecord>(dir)? {
        match rec.and_then(|r| load_record(dir, &r).map(|t| (r, t))) {
            Ok(x) => items.push(x),
            Err(error) => errors.push(RecordError { line, error }),
        }
    }
    Ok(Loaded { items, errors })
}

/// Recomputes the forward test image from a record and its pristine image.
pub fn regenerate(bank: &DistortionBank, pristine: &ImageBuffer, masks: &MaskSet, rec: &TripletRecord) -> Result<ImageBuffer> {
    Ok(synthesize(bank, pristine, masks, &rec.assignments)?.0)
}

impl Triplet {
    /// The undistorted image regardless of swap state.
    pub fn pristine(&self) -> &ImageBuffer {
        if self.swapped {
            &self.test
        } else {
            &self.reference
        }
    }
}

fn tier_path(s: usize, scene: usize) -> String {
    format!("tier_{s}/{}.png", item_stem(scene as u64))
}

pub fn write_tier_dataset(set: &TierSet, dir: impl AsRef<Path>) -> Result<Vec<TierRecord>> {
    let dir = dir.as_ref();
    create_dir(&dir.join("masks"))?;
    for s in 0..set.tier_count() {
        create_dir(&dir.join(format!("tier_{s}")))?;
    }
    let mut records = Vec::new();
    for (i, scene) in set.scenes.iter().enumerate() {
        let masks = format!("masks/{}_masks.dqtf", item_stem(i as u64));
        write_tensor(&mask_tensor(&scene.masks), dir.join(&masks))?;
        for (s, img) in scene.images.iter().enumerate() {
            let rec = TierRecord {
                scene: i,
                tier: -(s as i32),
                alpha: set.alphas[s],
                image: tier_path(s, i),
                masks: masks.clone(),
                base_seed: set.base_seed,
                draws: scene.draws.clone(),
                mask_sources: scene.masks.sources().to_vec(),
            };
            save_png(img, dir.join(&rec.image))?;
            records.push(rec);
        }
    }
    write_manifest(dir, &records)?;
    Ok(records)
}

/// Reassembles a tier set. A scene is kept only if every one of its tiers
/// loads; errors are reported per record.
pub fn read_tier_dataset(dir: impl AsRef<Path>) -> Result<Loaded<TierScene>> {
    let dir = dir.as_ref();
    let mut errors = Vec::new();
    let mut parsed: Vec<(usize, TierRecord)> = Vec::new();
    for (line, rec) in read_manifest::<TierRecord>(dir)? {
        match rec {
            Ok(r) => parsed.push((line, r)),
            Err(error) => errors.push(RecordError { line, error }),
        }
    }
    let tier_count = parsed.iter().map(|(_, r)| (-r.tier) as usize + 1).max().unwrap_or(0);
    let scene_count = parsed.iter().map(|(_, r)| r.scene + 1).max().unwrap_or(0);
    let mut slots: Vec<Vec<Option<ImageBuffer>>> = vec![vec![None; tier_count]; scene_count];
    let mut meta: Vec<Option<TierRecord>> = vec![None; scene_count];
    let mut broken = vec![false; scene_count];
    for (line, r) in parsed {
        if r.tier > 0 {
            errors.push(RecordError {
                line,
                error: Error::InvalidArgument(format!("tier id {} is positive", r.tier)),
            });
            broken[r.scene] = true;
            continue;
        }
        match load_png(dir.join(&r.image), GrayMode::Native) {
            Ok(img) => {
                slots[r.scene][(-r.tier) as usize] = Some(img);
                meta[r.scene].get_or_insert(r);
            }
            Err(error) => {
                errors.push(RecordError { line, error });
                broken[r.scene] = true;
            }
        }
    }
    let mut items = Vec::new();
    for (i, (imgs, m)) in slots.into_iter().zip(meta).enumerate() {
        let (Some(m), false) = (m, broken[i]) else { continue };
        let Some(images) = imgs.into_iter().collect::<Option<Vec<_>>>() else {
            continue;
        };
        let loaded = read_mask_tensor(&dir.join(&m.masks), m.mask_sources.clone()).and_then(|masks| {
            if images.iter().any(|im| (im.height(), im.width()) != (masks.height(), masks.width()) || !im.same_dims(&images[0])) {
                Err(Error::DimMismatch(format!("scene {i}: tier images and masks disagree in size")))
            } else {
                Ok(masks)
            }
        });
        match loaded {
            Ok(masks) => items.push(TierScene {
                masks,
                draws: m.draws,
                images,
            }),
            Err(error) => errors.push(RecordError { line: 0, error }),
        }
    }
    Ok(Loaded { items, errors })
}

/// Loads a complete tier set, failing if any scene is unusable.
pub fn load_tier_set(dir: impl AsRef<Path>) -> Result<TierSet> {
    let dir: PathBuf = dir.as_ref().into();
    let loaded = read_tier_dataset(&dir)?;
    if let Some(e) = loaded.errors.into_iter().next() {
        return Err(e.error);
    }
    let records = read_manifest::<TierRecord>(&dir)?;
    let mut alphas: Vec<(i32, f32)> = records.into_iter().filter_map(|(_, r)| r.ok()).map(|r| (r.tier, r.alpha)).collect();
    alphas.sort_by_key(|&(t, _)| -t);
    alphas.dedup_by_key(|&mut (t, _)| t);
    let base_seed = read_manifest::<TierRecord>(&dir)?
        .into_iter()
        .find_map(|(_, r)| r.ok())
        .map_or(0, |r| r.base_seed);
    Ok(TierSet {
        alphas: alphas.into_iter().map(|(_, a)| a).collect(),
        scenes: loaded.items,
        base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::Rng;
    use crate::synth::engine::{scene_for_item, swap_augment, Engine};
    use crate::synth::tiers::build_tier_schedule;

    fn triplets(n: u64) -> Vec<Triplet> {
        let engine = Engine::default();
        (0..n)
            .map(|i| {
                let s = scene_for_item(5, i, 24, 24);
                let t = engine.generate(&s.image, Some(&s.masks().unwrap()), 5, i).unwrap();
                swap_augment(t, 0.5, &mut Rng::new(i)).unwrap()
            })
            .collect()
    }

    #[test]
    fn triplet_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ts = triplets(6);
        write_dataset(&ts, dir.path()).unwrap();
        let loaded = read_dataset(dir.path()).unwrap();
        assert!(loaded.errors.is_empty());
        assert_eq!(loaded.items.len(), 6);
        for ((_, got), want) in loaded.items.iter().zip(&ts) {
            assert_eq!(got.target, want.target);
            assert_eq!(got.masks, want.masks);
            assert_eq!(got.assignments, want.assignments);
            assert_eq!(got.swapped, want.swapped);
            for (a, b) in got.test.data().iter().zip(want.test.data()) {
                assert!((a - b).abs() <= 1.0 / 510.0 + 1e-7);
            }
        }
    }

    #[test]
    fn regeneration_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ts = triplets(4);
        write_dataset(&ts, dir.path()).unwrap();
        let loaded = read_dataset(dir.path()).unwrap();
        for ((rec, got), want) in loaded.items.iter().zip(&ts) {
            let regen = regenerate(&DistortionBank::default(), got.pristine(), &got.masks, rec).unwrap();
            let forward = if want.swapped { &want.reference } else { &want.test };
            assert_eq!(&regen, forward);
        }
    }

    #[test]
    fn corrupt_record_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&triplets(3), dir.path()).unwrap();
        fs::remove_file(dir.path().join("images/000001_test.png")).unwrap();
        let loaded = read_dataset(dir.path()).unwrap();
        assert_eq!(loaded.items.len(), 2);
        assert_eq!(loaded.errors.len(), 1);
        assert_eq!(loaded.errors[0].line, 2);
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&triplets(1), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap();
        let patched = text.replacen('{', "{\"comment\":\"x\",", 1);
        fs::write(&path, patched).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap().items.len(), 1);
    }

    #[test]
    fn tier_round_trip() {
        let (imgs, masks): (Vec<_>, Vec<_>) = (0..3)
            .map(|i| {
                let s = scene_for_item(9, i, 24, 24);
                let m = s.masks().unwrap();
                (s.image, m)
            })
            .unzip();
        let set = build_tier_schedule(&DistortionBank::default(), &imgs, &[0.3, 0.7], &masks, &mut Rng::new(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tier_dataset(&set, dir.path()).unwrap();
        let back = load_tier_set(dir.path()).unwrap();
        assert_eq!(back.alphas, set.alphas);
        assert_eq!(back.scenes.len(), 3);
        // Scenes are quantized to 1/255 so tier 0 survives PNG exactly.
        for (a, b) in back.scenes.iter().zip(&set.scenes) {
            assert_eq!(a.images[0], b.images[0]);
            assert_eq!(a.masks, b.masks);
            assert_eq!(a.draws, b.draws);
        }
        fs::remove_file(dir.path().join("tier_2/000001.png")).unwrap();
        let partial = read_tier_dataset(dir.path()).unwrap();
        assert_eq!(partial.items.len(), 2);
        assert_eq!(partial.errors.len(), 1);
    }
}
