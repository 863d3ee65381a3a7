use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use reliqa::imagecore::{load_png, GrayMode};
use reliqa::masks::random_mask_set;
use reliqa::scenes::generate_scene;
use reliqa::synth::{
    build_tier_schedule, generate_triplets, validate_schedule, write_dataset, write_tier_dataset, ReferenceSource,
    Triplet,
};
use reliqa::imagecore::rng_derive;
use reliqa::{distortion_magnitude, DistortionKind, Rng, N_KINDS};

use crate::config::Config;
use crate::fsutil::{load_references, prepare_out_dir, require_dir, Reference};
use crate::{ConfigArg, Invalid};

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of triplets (overrides `synth.count`).
    #[arg(long)]
    pub count: Option<u64>,
    /// Side of the procedural scenes (overrides `synth.size`).
    #[arg(long, conflicts_with = "images")]
    pub size: Option<usize>,
    /// Master seed (overrides `synth.master_seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reference PNGs to distort instead of procedural scenes.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Label PNGs named like the reference images; enables the semantic mask branch.
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Use procedural scene regions as semantic masks.
    #[arg(long, conflicts_with = "images")]
    pub scene_labels: bool,
    #[arg(long)]
    pub force: bool,
}

fn summarize(triplets: &[Triplet]) {
    let mut hist = [0usize; N_KINDS];
    let (mut distorted, mut pristine, mut alpha_sum) = (0usize, 0usize, 0.0f64);
    let (mut semantic, mut swapped) = (0usize, 0usize);
    for t in triplets {
        for a in &t.assignments {
            if a.alpha > 0.0 {
                hist[a.kind.id()] += 1;
                distorted += 1;
                alpha_sum += a.alpha as f64;
            } else {
                pristine += 1;
            }
        }
        semantic += usize::from(t.branch == reliqa::masks::PoolBranch::Semantic);
        swapped += usize::from(t.swapped);
    }
    println!("triplets: {}", triplets.len());
    println!(
        "regions: {} distorted, {pristine} pristine; mean alpha {:.4}",
        distorted,
        if distorted > 0 { alpha_sum / distorted as f64 } else { 0.0 }
    );
    println!("mask branch: {semantic} semantic, {} random; swapped: {swapped}", triplets.len() - semantic);
    println!("operator histogram:");
    for kind in DistortionKind::ALL {
        println!("  {:<16} {}", kind.name(), hist[kind.id()]);
    }
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = Config::load(args.config.config.as_deref())?;
    if let Some(c) = args.count {
        cfg.synth.count = c;
    }
    if let Some(s) = args.size {
        cfg.synth.size = s;
    }
    if let Some(s) = args.seed {
        cfg.synth.master_seed = s;
    }
    if args.images.is_some() {
        cfg.io.images = args.images.clone();
        cfg.io.labels = args.labels.clone();
    }
    cfg.synth.scene_labels |= args.scene_labels;
    cfg.validate()?;
    let engine = cfg.engine()?;
    let source = match &cfg.io.images {
        Some(dir) => {
            let refs = load_references(dir, cfg.io.labels.as_deref())?;
            ReferenceSource::Images(refs.into_iter().map(|r| (r.image, r.labels)).collect())
        }
        None => ReferenceSource::Procedural {
            height: cfg.synth.size,
            width: cfg.synth.size,
            semantic: cfg.synth.scene_labels,
        },
    };
    prepare_out_dir(&args.out, args.force)?;
    let triplets = generate_triplets(&engine, &source, cfg.synth.master_seed, cfg.synth.count, cfg.synth.p_swap)?;
    write_dataset(&triplets, &args.out)?;
    summarize(&triplets);
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TiersArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Directory of base PNGs.
    #[arg(long, required_unless_present = "procedural")]
    pub base: Option<PathBuf>,
    /// Generate this many procedural base scenes instead of reading `--base`.
    #[arg(long, conflicts_with = "base")]
    pub procedural: Option<usize>,
    /// Side of procedural base scenes.
    #[arg(long, default_value_t = 64, requires = "procedural")]
    pub size: usize,
    /// Label PNGs for the base images; random partitions are drawn otherwise.
    #[arg(long, requires = "base")]
    pub labels: Option<PathBuf>,
    /// Comma-separated, strictly increasing intensities (overrides `scorer.schedule`).
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `scorer.tier_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

const SCENE_SALT: u64 = 0x7153_CE4E_0000_0001;
const MASK_SALT: u64 = 0x7153_3A55_0000_0002;

pub fn run_tiers(args: &TiersArgs) -> Result<()> {
    let mut cfg = Config::load(args.config.config.as_deref())?;
    if let Some(s) = &args.schedule {
        validate_schedule(s).map_err(|e| Invalid(format!("--schedule: {e}")))?;
        cfg.scorer.schedule = s.clone();
    }
    if let Some(s) = args.seed {
        cfg.scorer.tier_seed = s;
    }
    cfg.validate()?;
    let seed = cfg.scorer.tier_seed;
    let refs: Vec<Reference> = match (&args.base, args.procedural) {
        (Some(dir), _) => {
            require_dir(dir, "base directory")?;
            load_references(dir, args.labels.as_deref())?
        }
        (None, Some(n)) => {
            if n == 0 || args.size < 4 {
                return Err(Invalid("--procedural needs a positive count and --size of at least 4".into()).into());
            }
            (0..n)
                .map(|i| {
                    let scene = generate_scene(args.size, args.size, &mut rng_derive(seed ^ SCENE_SALT, i as u64));
                    let labels = Some(scene.masks()?);
                    Ok(Reference {
                        path: PathBuf::new(),
                        image: scene.image,
                        labels,
                    })
                })
                .collect::<Result<_>>()?
        }
        (None, None) => unreachable!("clap requires one of --base and --procedural"),
    };
    let masks = refs
        .iter()
        .enumerate()
        .map(|(i, r)| match &r.labels {
            Some(m) => Ok(m.clone()),
            None => Ok(random_mask_set(
                r.image.height(),
                r.image.width(),
                &mut rng_derive(seed ^ MASK_SALT, i as u64),
            )?),
        })
        .collect::<Result<Vec<_>>>()?;
    let images: Vec<_> = refs.iter().map(|r| r.image.clone()).collect();
    let set = build_tier_schedule(&cfg.bank()?, &images, &cfg.scorer.schedule, &masks, &mut Rng::new(seed))?;
    prepare_out_dir(&args.out, args.force)?;
    let records = write_tier_dataset(&set, &args.out)?;

    // Keep tier 0 byte-identical to the input when the file decodes to the
    // very same raster as the written copy would.
    for rec in records.iter().filter(|r| r.tier == 0) {
        let src = &refs[rec.scene].path;
        if src.as_os_str().is_empty() {
            continue;
        }
        if load_png(src, GrayMode::Native).is_ok_and(|img| img == set.scenes[rec.scene].images[0]) {
            let dst = args.out.join(&rec.image);
            fs::copy(src, &dst).with_context(|| format!("copying {} to {}", src.display(), dst.display()))?;
        }
    }

    println!("scenes: {}, tiers: {}", set.scenes.len(), set.tier_count());
    println!("{:>5} {:>7} {:>12}", "tier", "alpha", "mean RMS");
    for s in 0..set.tier_count() {
        let rms = set
            .scenes
            .iter()
            .map(|sc| distortion_magnitude(&sc.images[0], &sc.images[s]))
            .collect::<reliqa::Result<Vec<_>>>()?;
        println!("{:>5} {:>7.3} {:>12.5}", -(s as i32), set.alphas[s], rms.iter().sum::<f64>() / rms.len() as f64);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
