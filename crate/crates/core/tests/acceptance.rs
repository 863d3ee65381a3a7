//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use reliqa::distortions::gaussian_kernel;
use reliqa::objectives::{antisym_loss, hinge_rank, infonce, ScoringBatch};
use reliqa::predictor::{
    eval_antisymmetry, eval_disentanglement, eval_monotonicity, train_predictor, PredictorModel, TrainConfig,
    DEFAULT_ALPHA_GRID,
};
use reliqa::scorer::{embedding_separation, eval_ranking_items, fit_scorer, scoring_items, ScorerConfig, ScorerModel};
use reliqa::synth::{
    build_tier_schedule, generate_triplets, scene_for_item, write_dataset, Engine, ReferenceSource, TierSet, Triplet,
};
use reliqa::{distortion_magnitude, verify, DistortionBank, DistortionKind, ImageBuffer, Rng, N_KINDS};

type Outcome = Result<(bool, String), String>;

const ENGINE_SEED: u64 = 1001;
const TRAIN_SEED: u64 = 1001;
const HELD_SEED: u64 = 2002;
const MONO_SEED: u64 = 3003;
const TIER_SCENE_SEED: u64 = 4004;
const TIER_SEED: u64 = 5;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn bbox(masks: &reliqa::MaskSet, k: usize) -> (usize, usize, usize, usize) {
    let w = masks.width();
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for p in masks.region_pixels(k) {
        let (y, x) = (p / w, p % w);
        y0 = y0.min(y);
        y1 = y1.max(y);
        x0 = x0.min(x);
        x1 = x1.max(x);
    }
    (y0, y1, x0, x1)
}

/// Applies the region's operator to a crop of the reference and returns the
/// largest deviation from the synthesized test image over the region.
///
/// Blur sees a crop padded by its kernel radius, noise and checkerboard a crop
/// anchored at the origin (their patterns live in frame coordinates), and
/// pointwise operators the bare bounding box. Bad-pixel sites are drawn over
/// the whole frame, so that operator is compared with a full-frame application.
fn crop_oracle_error(bank: &DistortionBank, t: &Triplet, k: usize) -> reliqa::Result<f64> {
    let a = t.assignments.iter().find(|a| a.region == k).expect("every region is assigned");
    let alpha = a.alpha as f64;
    let img = &t.reference;
    let (h, w) = (img.height(), img.width());
    let (y0, y1, x0, x1) = bbox(&t.masks, k);
    let (cy, cx, ch, cw) = match a.kind {
        DistortionKind::GaussianBlur => {
            let r = gaussian_kernel(alpha * bank.constants.blur_sigma_max).len() / 2;
            let (ya, xa) = (y0.saturating_sub(r), x0.saturating_sub(r));
            (ya, xa, (y1 + r + 1).min(h) - ya, (x1 + r + 1).min(w) - xa)
        }
        DistortionKind::PerlinNoise | DistortionKind::Checkerboard => (0, 0, y1 + 1, x1 + 1),
        DistortionKind::BadPixels => (0, 0, h, w),
        DistortionKind::Haze | DistortionKind::OverSaturation => (y0, x0, y1 - y0 + 1, x1 - x0 + 1),
    };
    let crop = img.crop(cy, cx, ch, cw)?;
    let oracle = bank.apply(a.kind, &crop, alpha, &mut Rng::new(a.seed))?;
    let mut max = 0.0f64;
    for p in t.masks.region_pixels(k) {
        let (y, x) = (p / w, p % w);
        for c in 0..img.channels() {
            let d = (t.test.get(c, y, x) as f64 - oracle.get(c, y - cy, x - cx) as f64).abs();
            max = max.max(d);
        }
    }
    Ok(max)
}

fn criterion_1(triplets: &[Triplet]) -> Outcome {
    let bank = DistortionBank::default();
    let (mut partition, mut sparse, mut passthrough, mut labels) = (true, true, true, true);
    let mut max_err = 0.0f64;
    let mut regions = 0usize;
    for t in triplets {
        partition &= t.masks.is_partition();
        sparse &= t.target.is_sparse();
        let n = t.reference.pixel_count();
        for a in &t.assignments {
            regions += 1;
            for p in t.masks.region_pixels(a.region) {
                for j in 0..N_KINDS {
                    let want = if a.alpha > 0.0 && j == a.kind.id() { a.alpha } else { 0.0 };
                    labels &= t.target.data()[j * n + p] == want;
                }
                if a.alpha == 0.0 {
                    for c in 0..t.reference.channels() {
                        passthrough &= t.test.data()[c * n + p].to_bits() == t.reference.data()[c * n + p].to_bits();
                    }
                }
            }
            if a.alpha > 0.0 {
                max_err = max_err.max(crop_oracle_error(&bank, t, a.region).map_err(err)?);
            }
        }
    }
    let ok = partition && sparse && passthrough && labels && max_err < 1e-6;
    Ok((
        ok,
        format!(
            "{} triplets, {regions} regions; partition {partition}, sparse {sparse}, labels {labels}, \
             passthrough {passthrough}, crop oracle max diff {max_err:.2e}",
            triplets.len()
        ),
    ))
}

fn criterion_2() -> Outcome {
    let bank = DistortionBank::default();
    let img = scene_for_item(77, 0, 256, 256).image;
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in DistortionKind::ALL {
        let seed = 100 + kind.id() as u64;
        let identity = bank.apply(kind, &img, 0.0, &mut Rng::new(seed)).map_err(err)? == img;
        let mut rms = Vec::new();
        let mut in_range = true;
        for &a in &DEFAULT_ALPHA_GRID {
            let out = bank.apply(kind, &img, a, &mut Rng::new(seed)).map_err(err)?;
            in_range &= out.data().iter().all(|v| (0.0..=1.0).contains(v));
            rms.push(distortion_magnitude(&img, &out).map_err(err)?);
        }
        let monotone = rms.windows(2).all(|w| w[1] > w[0]);
        ok &= identity && monotone && in_range;
        parts.push(format!(
            "{} id={identity} mono={monotone} range={in_range} rms {:.4}..{:.4}",
            kind.name(),
            rms[0],
            rms[rms.len() - 1]
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_3() -> Outcome {
    let mut worst: Vec<(String, f64, f64)> = Vec::new();
    for seed in 0..20 {
        let mut checks = verify::objectives_suite(seed).map_err(err)?;
        checks.extend(verify::predictor_suite(seed).map_err(err)?);
        checks.extend(verify::scorer_suite(seed).map_err(err)?);
        for c in checks {
            match worst.iter_mut().find(|w| w.0 == c.kernel) {
                Some(w) => w.1 = w.1.max(c.max_rel_error),
                None => worst.push((c.kernel, c.max_rel_error, c.tolerance)),
            }
        }
    }
    let ok = worst.iter().all(|(_, e, tol)| e <= tol);
    let detail = worst
        .iter()
        .map(|(k, e, tol)| format!("{k} {e:.1e}/{tol:.0e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, format!("20 seeds; {detail}")))
}

fn criterion_4() -> Outcome {
    let batch = ScoringBatch {
        embeddings: vec![vec![0.3, -1.2, 0.5]; 4],
        tiers: vec![-1, -1, -2, -2],
    };
    let nce = infonce(&batch, 0.07).map_err(err)?.value;
    let nce_ok = (nce - 3f64.ln()).abs() <= 1e-9;

    let table = [(0.2, 1.5, 0.0, 0.0, 0.0), (0.5, 0.8, 0.7, 1.0, -1.0), (0.4, 0.4, 1.0, 1.0, -1.0)];
    let hinge_ok = table.iter().all(|&(lo, hi, v, gl, gh)| {
        let h = hinge_rank(lo, hi, 1.0);
        h.value == v && h.grad_low == gl && h.grad_high == gh
    });

    let y = [0.0, 0.3, 0.0, 0.8, 0.0, 0.0];
    let comp: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let w = [1.0, 10.0, 1.0, 10.0, 1.0, 1.0];
    let at_min = antisym_loss(&y, &comp, &y, &w, false).map_err(err)?;
    let half = [0.5; 6];
    let neutral = antisym_loss(&half, &half, &half, &w, false).map_err(err)?;
    let min_ok = at_min.value == 0.0 && neutral.value == 0.0;
    Ok((
        nce_ok && hinge_ok && min_ok,
        format!(
            "infonce {nce:.12} (ln3 {:.12}); hinge table {hinge_ok}; minimizer {} neutral {}",
            3f64.ln(),
            at_min.value,
            neutral.value
        ),
    ))
}

fn pairs(triplets: &[Triplet]) -> Vec<(ImageBuffer, ImageBuffer)> {
    triplets.iter().map(|t| (t.test.clone(), t.reference.clone())).collect()
}

fn criterion_5(model: &PredictorModel, untrained: &PredictorModel, held: &[Triplet]) -> Outcome {
    let p = pairs(held);
    let after = eval_antisymmetry(model, &p).map_err(err)?;
    let before = eval_antisymmetry(untrained, &p).map_err(err)?;
    Ok((
        after.mean <= 0.15 && after.mean < before.mean,
        format!(
            "held-out residual {:.4} (untrained {:.4}, max {:.4}) over {} pairs",
            after.mean,
            before.mean,
            after.max,
            held.len()
        ),
    ))
}

fn criterion_6(model: &PredictorModel, held: &[Triplet]) -> Outcome {
    let c = eval_disentanglement(model, held).map_err(err)?;
    Ok((
        c.accuracy >= 0.60,
        format!("region argmax accuracy {:.3} over {} regions", c.accuracy, c.regions),
    ))
}

fn criterion_7(model: &PredictorModel) -> Outcome {
    let bank = DistortionBank::default();
    let mut per_kind = Vec::new();
    let mut total = 0.0;
    for kind in DistortionKind::ALL {
        let mut s = 0.0;
        for i in 0..5u64 {
            let base = scene_for_item(MONO_SEED, i, 64, 64).image;
            s += eval_monotonicity(model, &bank, &base, kind, &DEFAULT_ALPHA_GRID, 7 + i).map_err(err)?.srcc;
        }
        per_kind.push(format!("{} {:.3}", kind.name(), s / 5.0));
        total += s;
    }
    let mean = total / (5 * N_KINDS) as f64;
    Ok((mean >= 0.8, format!("mean SRCC {mean:.3}; {}", per_kind.join(", "))))
}

#[derive(Clone)]
struct ScoringRun {
    model: ScorerModel,
    report_json: String,
    outcome: (bool, String),
    separation: (f64, f64),
}

fn tier_set() -> reliqa::Result<TierSet> {
    let (images, masks): (Vec<_>, Vec<_>) = (0..16)
        .map(|i| {
            let s = scene_for_item(TIER_SCENE_SEED, i, 64, 64);
            let m = s.masks().expect("scene labels form a partition");
            (s.image, m)
        })
        .unzip();
    build_tier_schedule(
        &DistortionBank::default(),
        &images,
        &[0.15, 0.35, 0.6, 0.9],
        &masks,
        &mut Rng::new(TIER_SEED),
    )
}

fn scoring_run(predictor: &PredictorModel) -> reliqa::Result<ScoringRun> {
    let set = tier_set()?;
    let train = set.subset(&(0..12).collect::<Vec<_>>());
    let held = set.subset(&(12..16).collect::<Vec<_>>());
    let config = ScorerConfig::default();
    let train_items = scoring_items(&train, predictor)?;
    let held_items = scoring_items(&held, predictor)?;
    let (model, _) = fit_scorer(&train_items, &config)?;
    let (initial, _) = fit_scorer(&train_items, &ScorerConfig { epochs: 0, ..config })?;
    let report = eval_ranking_items(&model, &held_items)?;
    let feats: Vec<Vec<f64>> = held_items.iter().map(|i| i.features.clone()).collect();
    let tiers: Vec<i32> = held_items.iter().map(|i| i.tier).collect();
    let before = embedding_separation(&initial.embed_batch(&feats)?, &tiers)?;
    let after = embedding_separation(&model.embed_batch(&feats)?, &tiers)?;
    let means = report
        .tier_means
        .iter()
        .map(|m| format!("{}:{:.2}", m.tier, m.mean_score))
        .collect::<Vec<_>>()
        .join(" ");
    let ok = report.pairwise_accuracy >= 0.9 && report.mean_srcc >= 0.9;
    let detail = format!(
        "held-out pairwise accuracy {:.3} over {} pairs, mean SRCC {:.3}; tier means {means}",
        report.pairwise_accuracy, report.pairs, report.mean_srcc
    );
    Ok(ScoringRun {
        model,
        report_json: serde_json::to_string(&report).expect("report serializes"),
        outcome: (ok, detail),
        separation: (before, after),
    })
}

fn dir_bytes(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir)? {
        let e = e?;
        let path = e.path();
        if path.is_dir() {
            for (name, bytes) in dir_bytes(&path)? {
                files.push((format!("{}/{name}", e.file_name().to_string_lossy()), bytes));
            }
        } else {
            files.push((e.file_name().to_string_lossy().into_owned(), fs::read(&path)?));
        }
    }
    files.sort();
    Ok(files)
}

fn saved_bytes(save: impl FnOnce(&Path) -> reliqa::Result<()>) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    save(dir.path()).map_err(err)?;
    dir_bytes(dir.path()).map_err(err)
}

fn engine_triplets() -> reliqa::Result<Vec<Triplet>> {
    generate_triplets(&Engine::default(), &ReferenceSource::Procedural { height: 128, width: 128, semantic: true }, ENGINE_SEED, 500, 0.0)
}

fn predictor_triplets(seed: u64, count: u64) -> reliqa::Result<Vec<Triplet>> {
    generate_triplets(&Engine::default(), &ReferenceSource::Procedural { height: 64, width: 64, semantic: true }, seed, count, 0.0)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: usize, name: &'static str, t: Instant, o: Outcome| {
        let secs = t.elapsed().as_secs_f64();
        let (flag, detail) = match &o {
            Ok((true, d)) => ("PASS", d.clone()),
            Ok((false, d)) => ("FAIL", d.clone()),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        println!("criterion {id:>2} {flag} {name} [{secs:.1}s] {detail}");
        results.push((id, name, o, secs));
    };

    let t = Instant::now();
    let engine_run = engine_triplets();
    let first_manifest = engine_run
        .as_ref()
        .map_err(err)
        .and_then(|ts| saved_bytes(|d| write_dataset(ts, d).map(|_| ())));
    record(1, "engine correctness", t, engine_run.as_deref().map_err(err).and_then(criterion_1));

    let t = Instant::now();
    record(2, "operator laws", t, criterion_2());
    let t = Instant::now();
    record(3, "gradient verification", t, criterion_3());
    let t = Instant::now();
    record(4, "closed-form loss values", t, criterion_4());

    let t = Instant::now();
    let config = TrainConfig::default();
    let trained = (|| -> reliqa::Result<_> {
        let train = predictor_triplets(TRAIN_SEED, 400)?;
        let held = predictor_triplets(HELD_SEED, 100)?;
        let (model, report) = train_predictor(&train, &config)?;
        let (untrained, _) = train_predictor(&train, &TrainConfig { epochs: 0, ..config.clone() })?;
        Ok((model, untrained, held, report))
    })();
    let trained = trained.map_err(err);
    if let Ok((_, _, _, report)) = &trained {
        println!(
            "predictor trained in {:.1}s: {} steps, epoch loss {:.4} -> {:.4}",
            t.elapsed().as_secs_f64(),
            report.steps,
            report.epoch_losses.first().copied().unwrap_or(f64::NAN),
            report.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    record(
        5,
        "anti-symmetry is learnable",
        t,
        trained.clone().and_then(|(m, u, h, _)| criterion_5(&m, &u, &h)),
    );
    let t = Instant::now();
    record(6, "disentanglement", t, trained.clone().and_then(|(m, _, h, _)| criterion_6(&m, &h)));
    let t = Instant::now();
    record(7, "intensity monotonicity", t, trained.clone().and_then(|(m, ..)| criterion_7(&m)));

    let t = Instant::now();
    let scoring = trained.clone().and_then(|(m, ..)| scoring_run(&m).map_err(err));
    record(8, "ordinal scoring", t, scoring.as_ref().map(|s| s.outcome.clone()).map_err(Clone::clone));
    let t = Instant::now();
    record(
        9,
        "embedding structure",
        t,
        scoring.as_ref().map_err(Clone::clone).map(|s| {
            let (before, after) = s.separation;
            (after > before, format!("held-out separation before {before:.4}, after {after:.4}"))
        }),
    );

    let t = Instant::now();
    let determinism = (|| -> Result<(bool, String), String> {
        let first_manifest = first_manifest.clone()?;
        let again = engine_triplets().map_err(err)?;
        let second_manifest = saved_bytes(|d| write_dataset(&again, d).map(|_| ()))?;
        let manifest_same = first_manifest == second_manifest;

        let (model, ..) = trained.clone()?;
        let train = predictor_triplets(TRAIN_SEED, 400).map_err(err)?;
        let (retrained, _) = train_predictor(&train, &config).map_err(err)?;
        let checkpoint_same = saved_bytes(|d| model.save(d))? == saved_bytes(|d| retrained.save(d))?;

        let first = scoring.clone()?;
        let second = scoring_run(&retrained).map_err(err)?;
        let report_same = first.report_json == second.report_json;
        let scorer_same = saved_bytes(|d| first.model.save(d))? == saved_bytes(|d| second.model.save(d))?;
        Ok((
            manifest_same && checkpoint_same && report_same && scorer_same,
            format!(
                "dataset files identical {manifest_same} ({} files), predictor checkpoint {checkpoint_same}, \
                 ranking report {report_same}, scorer checkpoint {scorer_same}",
                first_manifest.len()
            ),
        ))
    })();
    record(10, "determinism", t, determinism);

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, _, o, _)| !matches!(o, Ok((true, _))))
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
