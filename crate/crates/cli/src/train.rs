use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;

use reliqa::predictor::{train_predictor, PredictorModel};
use reliqa::synth::{load_tier_set, read_dataset, Triplet};

use crate::config::Config;
use crate::fsutil::{prepare_out_dir, require_dir};
use crate::{ConfigArg, Invalid};

/// Loads a triplet dataset, failing on the first unreadable record.
pub fn load_triplets(dir: &Path) -> Result<Vec<Triplet>> {
    require_dir(dir, "dataset directory")?;
    let loaded = read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    if let Some(bad) = loaded.errors.first() {
        return Err(Invalid(format!(
            "{}: manifest line {}: {} ({} bad records in total)",
            dir.display(),
            bad.line,
            bad.error,
            loaded.errors.len()
        ))
        .into());
    }
    if loaded.items.is_empty() {
        return Err(Invalid(format!("dataset {} has no records", dir.display())).into());
    }
    Ok(loaded.items.into_iter().map(|(_, t)| t).collect())
}

pub fn load_predictor(path: &Path) -> Result<PredictorModel> {
    require_dir(path, "predictor checkpoint")?;
    PredictorModel::load(path).with_context(|| format!("loading predictor {}", path.display()))
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        writeln!(text, "{r}").expect("writing to a string");
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Args)]
pub struct TrainPredictorArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Triplet dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint directory. The loss trace goes to `loss.csv` inside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn run_train_predictor(args: &TrainPredictorArgs) -> Result<()> {
    let cfg = Config::load(args.config.config.as_deref())?;
    let triplets = load_triplets(&args.data)?;
    prepare_out_dir(&args.out, args.force)?;
    println!("training on {} triplets for {} epochs", triplets.len(), cfg.predictor.epochs);
    let (model, report) = train_predictor(&triplets, &cfg.predictor)?;
    model.save(&args.out)?;
    write_csv(
        &args.out.join("loss.csv"),
        "epoch,loss",
        report.epoch_losses.iter().enumerate().map(|(i, l)| format!("{},{l:.9e}", i + 1)),
    )?;
    if let (Some(first), Some(last)) = (report.epoch_losses.first(), report.epoch_losses.last()) {
        println!("{} steps, epoch loss {first:.5} -> {last:.5}", report.steps);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainScorerArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Tier set directory.
    #[arg(long)]
    pub tiers: PathBuf,
    /// Frozen predictor checkpoint.
    #[arg(long)]
    pub predictor: PathBuf,
    /// Scorer checkpoint directory. The loss trace goes to `loss.csv` inside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

pub fn run_train_scorer(args: &TrainScorerArgs) -> Result<()> {
    let cfg = Config::load(args.config.config.as_deref())?;
    require_dir(&args.tiers, "tier directory")?;
    let tiers = load_tier_set(&args.tiers).with_context(|| format!("reading tiers {}", args.tiers.display()))?;
    let predictor = load_predictor(&args.predictor)?;
    prepare_out_dir(&args.out, args.force)?;
    println!(
        "training on {} scenes x {} tiers for {} epochs",
        tiers.scenes.len(),
        tiers.tier_count(),
        cfg.scorer.training.epochs
    );
    let (model, report) = reliqa::scorer::train_scorer(&tiers, &predictor, &cfg.scorer.training)?;
    model.save(&args.out)?;
    let rows = (0..report.epoch_losses.len()).map(|i| {
        format!(
            "{},{:.9e},{:.9e},{:.9e}",
            i + 1,
            report.epoch_losses[i],
            report.epoch_hinge[i],
            report.epoch_infonce[i]
        )
    });
    write_csv(&args.out.join("loss.csv"), "epoch,loss,hinge,infonce", rows)?;
    if let (Some(first), Some(last)) = (report.epoch_losses.first(), report.epoch_losses.last()) {
        println!("{} steps, epoch loss {first:.5} -> {last:.5}", report.steps);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
