use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use reliqa::imagecore::{quantize_u8, save_gray8};
use reliqa::predictor::{antisymmetry_stats, eval_disentanglement, Confusion, MapPredictor};
use reliqa::scorer::{embedding_separation, eval_ranking_items, scoring_items, RankingReport, ScorerModel};
use reliqa::synth::load_tier_set;
use reliqa::{DistortionKind, DistortionMap};

use crate::fsutil::{prepare_out_dir, prepare_out_file, require_dir, write_json};
use crate::train::{load_predictor, load_triplets};

pub const ANTISYM_SCHEMA: &str = "antisym-report/v1";
pub const RANK_SCHEMA: &str = "rank-report/v1";

#[derive(Args)]
pub struct EvalAntisymArgs {
    /// Predictor checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Triplet dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
    /// Write per-pair channel visualizations of both orientations here.
    #[arg(long)]
    pub dump_maps: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct ChannelResidual {
    kind: &'static str,
    mean: f64,
}

#[derive(Serialize)]
struct AntisymReport {
    schema: &'static str,
    model: String,
    data: String,
    pairs: usize,
    samples: usize,
    mean_residual: f64,
    max_residual: f64,
    per_channel: Vec<ChannelResidual>,
    disentanglement: Confusion,
}

fn dump_map(map: &DistortionMap, dir: &std::path::Path, stem: &str) -> Result<()> {
    for kind in DistortionKind::ALL {
        let bytes: Vec<u8> = map.plane(kind.id()).iter().map(|&v| quantize_u8(v)).collect();
        save_gray8(map.height(), map.width(), &bytes, dir.join(format!("{stem}_{}.png", kind.name())))?;
    }
    Ok(())
}

pub fn run_eval_antisym(args: &EvalAntisymArgs) -> Result<()> {
    let model = load_predictor(&args.model)?;
    let triplets = load_triplets(&args.data)?;
    prepare_out_file(&args.report, args.force)?;
    if let Some(d) = &args.dump_maps {
        prepare_out_dir(d, args.force)?;
    }
    let maps = triplets
        .par_iter()
        .map(|t| Ok((model.predict(&t.test, &t.reference)?, model.predict(&t.reference, &t.test)?)))
        .collect::<reliqa::Result<Vec<_>>>()?;
    let stats = antisymmetry_stats(&maps)?;
    let disentanglement = eval_disentanglement(&model, &triplets)?;
    if let Some(dir) = &args.dump_maps {
        for (t, (ab, ba)) in triplets.iter().zip(&maps) {
            dump_map(ab, dir, &format!("{:06}_ab", t.item_index))?;
            dump_map(ba, dir, &format!("{:06}_ba", t.item_index))?;
        }
    }
    let report = AntisymReport {
        schema: ANTISYM_SCHEMA,
        model: args.model.display().to_string(),
        data: args.data.display().to_string(),
        pairs: stats.pairs,
        samples: stats.samples,
        mean_residual: stats.mean,
        max_residual: stats.max,
        per_channel: DistortionKind::ALL
            .iter()
            .map(|k| ChannelResidual {
                kind: k.name(),
                mean: stats.per_channel[k.id()],
            })
            .collect(),
        disentanglement,
    };
    write_json(&args.report, &report)?;
    println!("pairs: {}, mean residual {:.5}, max {:.5}", report.pairs, report.mean_residual, report.max_residual);
    for c in &report.per_channel {
        println!("  {:<16} {:.5}", c.kind, c.mean);
    }
    println!("region argmax accuracy {:.4}", report.disentanglement.accuracy);
    Ok(())
}

#[derive(Args)]
pub struct EvalRankArgs {
    /// Scorer checkpoint.
    #[arg(long)]
    pub scorer: PathBuf,
    /// Predictor checkpoint used for the distortion maps.
    #[arg(long)]
    pub predictor: PathBuf,
    /// Tier set directory.
    #[arg(long)]
    pub tiers: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct RankReportFile {
    schema: &'static str,
    scorer: String,
    tiers: String,
    scenes: usize,
    #[serde(flatten)]
    ranking: RankingReport,
    /// Mean within-tier minus cross-tier cosine similarity of the embeddings.
    embedding_separation: Option<f64>,
}

pub fn run_eval_rank(args: &EvalRankArgs) -> Result<()> {
    require_dir(&args.scorer, "scorer checkpoint")?;
    let scorer = ScorerModel::load(&args.scorer).with_context(|| format!("loading scorer {}", args.scorer.display()))?;
    let predictor = load_predictor(&args.predictor)?;
    require_dir(&args.tiers, "tier directory")?;
    let tiers = load_tier_set(&args.tiers).with_context(|| format!("reading tiers {}", args.tiers.display()))?;
    prepare_out_file(&args.report, args.force)?;
    let items = scoring_items(&tiers, &predictor)?;
    let ranking = eval_ranking_items(&scorer, &items)?;
    let feats: Vec<Vec<f64>> = items.iter().map(|i| i.features.clone()).collect();
    let labels: Vec<i32> = items.iter().map(|i| i.tier).collect();
    // Undefined with a single image per tier; reported as null then.
    let separation = embedding_separation(&scorer.embed_batch(&feats)?, &labels).ok();
    let report = RankReportFile {
        schema: RANK_SCHEMA,
        scorer: args.scorer.display().to_string(),
        tiers: args.tiers.display().to_string(),
        scenes: tiers.scenes.len(),
        ranking,
        embedding_separation: separation,
    };
    write_json(&args.report, &report)?;
    println!("{:>5} {:>12}", "tier", "mean score");
    for m in &report.ranking.tier_means {
        println!("{:>5} {:>12.5}", m.tier, m.mean_score);
    }
    println!(
        "pairwise accuracy {:.4} over {} pairs, mean SRCC {:.4}",
        report.ranking.pairwise_accuracy, report.ranking.pairs, report.ranking.mean_srcc
    );
    Ok(())
}
