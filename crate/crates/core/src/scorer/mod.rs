//! Relational quality scorer trained from tier order alone.
//!
//! Each tier image is paired with its same-scene tier-0 reference, the
//! frozen predictor produces a distortion map, and a global feature vector
//! of (image, map) goes through an embedding network and a linear-output
//! head. Scores carry order only: there is no absolute scale.

mod features;
mod stats;

pub use features::{featurize_scoring_input, hist_bin, HIST_BINS, SCORE_FEATURES, SCORE_FEATURE_SCHEMA};
pub use stats::{average_ranks, srcc, Srcc};

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{rng_derive, Rng};
use crate::nn::{
    load_checkpoint, save_checkpoint, Activation, Checkpoint, CheckpointHeader, Gradients, Momentum, Mlp, NetworkHeader,
    Standardizer, SCHEMA_VERSION,
};
use crate::objectives::{cosine_sim, total_scoring_loss, ScoringBatch, ScoringLoss, ScoringWeights};
use crate::predictor::MapPredictor;
use crate::synth::TierSet;

pub const EMBED_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub embed: Mlp,
    pub head: Mlp,
    pub standardizer: Standardizer,
}

impl ScorerModel {
    /// `67 -> embed_hidden -> dim` embedding and `dim -> head_hidden -> 1` head.
    pub fn new(embed_hidden: &[usize], dim: usize, head_hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut es = vec![SCORE_FEATURES];
        es.extend(embed_hidden);
        es.push(dim);
        let mut hs = vec![dim];
        hs.extend(head_hidden);
        hs.push(1);
        Ok(Self {
            embed: Mlp::new(&es, Activation::LeakyRelu, Activation::Linear, rng)?,
            head: Mlp::new(&hs, Activation::LeakyRelu, Activation::Linear, rng)?,
            standardizer: Standardizer::identity(SCORE_FEATURES),
        })
    }

    pub fn default_sizes(rng: &mut Rng) -> Result<Self> {
        Self::new(&[32], EMBED_DIM, &[8], rng)
    }

    fn inputs(&self, feats: &[Vec<f64>]) -> Result<Array2<f64>> {
        if let Some(f) = feats.iter().find(|f| f.len() != SCORE_FEATURES) {
            return Err(Error::DimMismatch(format!("{} score features, expected {SCORE_FEATURES}", f.len())));
        }
        let mut x = Array2::from_shape_fn((feats.len(), SCORE_FEATURES), |(i, j)| feats[i][j]);
        self.standardizer.apply(&mut x);
        Ok(x)
    }

    pub fn embed_batch(&self, feats: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let e = self.embed.forward(self.inputs(feats)?.view())?;
        Ok(e.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    pub fn score_batch(&self, feats: &[Vec<f64>]) -> Result<Vec<f64>> {
        let e = self.embed.forward(self.inputs(feats)?.view())?;
        Ok(self.head.forward(e.view())?.column(0).to_vec())
    }

    pub fn embed(&self, feats: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_batch(&[feats.to_vec()])?.remove(0))
    }

    pub fn score(&self, feats: &[f64]) -> Result<f64> {
        Ok(self.score_batch(&[feats.to_vec()])?[0])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = |name: &str, net: &Mlp| NetworkHeader {
            name: name.into(),
            sizes: net.sizes(),
            hidden: net.hidden,
            output: net.output,
        };
        Checkpoint {
            header: CheckpointHeader {
                schema_version: SCHEMA_VERSION,
                model: "scorer".into(),
                feature_schema: SCORE_FEATURE_SCHEMA.into(),
                feature_dim: SCORE_FEATURES,
                networks: vec![header("embed", &self.embed), header("head", &self.head)],
            },
            networks: vec![self.embed.clone(), self.head.clone()],
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.header.model != "scorer" || c.header.feature_schema != SCORE_FEATURE_SCHEMA || c.networks.len() != 2 {
            return Err(Error::Checkpoint(format!(
                "not a scorer checkpoint (model {:?}, features {:?})",
                c.header.model, c.header.feature_schema
            )));
        }
        let mut nets = c.networks.into_iter();
        let (embed, head) = (nets.next().expect("two"), nets.next().expect("two"));
        if embed.input_dim() != SCORE_FEATURES || head.input_dim() != embed.output_dim() || head.output_dim() != 1 {
            return Err(Error::Checkpoint("scorer network sizes do not chain".into()));
        }
        Ok(Self {
            embed,
            head,
            standardizer: c.standardizer,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.to_checkpoint(), dir)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(load_checkpoint(dir)?)
    }
}

/// One scored tier image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreItem {
    pub scene: usize,
    pub tier: i32,
    pub features: Vec<f64>,
}

/// Features for every tier image below tier 0, with maps predicted against
/// the same scene's tier-0 image. Tier 0 is the reference and is not scored.
pub fn scoring_items(tiers: &TierSet, predictor: &(impl MapPredictor + Sync)) -> Result<Vec<ScoreItem>> {
    let per_scene = tiers
        .scenes
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            let reference = &sc.images[0];
            (1..sc.images.len())
                .map(|s| {
                    let img = &sc.images[s];
                    let map = predictor.predict(img, reference)?;
                    Ok(ScoreItem {
                        scene: i,
                        tier: -(s as i32),
                        features: featurize_scoring_input(img, &map)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lambda_rank: f64,
    pub lambda_con: f64,
    pub margin: f64,
    pub tau: f64,
    /// Scenes per step; `None` uses every scene in one batch.
    pub batch_scenes: Option<usize>,
    pub embed_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub head_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        let w = ScoringWeights::default();
        Self {
            epochs: 300,
            learning_rate: 0.01,
            momentum: 0.9,
            lambda_rank: w.lambda_rank,
            lambda_con: w.lambda_con,
            margin: w.margin,
            tau: w.tau,
            batch_scenes: None,
            embed_hidden: vec![32],
            embed_dim: EMBED_DIM,
            head_hidden: vec![8],
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn weights(&self) -> ScoringWeights {
        ScoringWeights {
            lambda_rank: self.lambda_rank,
            lambda_con: self.lambda_con,
            margin: self.margin,
            tau: self.tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.lambda_rank >= 0.0 && self.lambda_con >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.margin >= 0.0) || !(self.tau > 0.0) {
            return bad(format!("margin {} / tau {} out of range", self.margin, self.tau));
        }
        if self.batch_scenes == Some(0) || self.embed_dim == 0 {
            return bad("batch_scenes and embed_dim must be positive".into());
        }
        Ok(())
    }

    pub fn new_model(&self) -> Result<ScorerModel> {
        ScorerModel::new(&self.embed_hidden, self.embed_dim, &self.head_hidden, &mut rng_derive(self.seed, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerReport {
    /// Mean total loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_hinge: Vec<f64>,
    pub epoch_infonce: Vec<f64>,
    pub steps: usize,
}

/// Gradients of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerGradients {
    pub embed: Gradients,
    pub head: Gradients,
}

/// Hinge pairs between consecutive tiers of the same scene, as
/// `(lower quality, higher quality)` indices into `items`.
pub fn consecutive_pairs(items: &[&ScoreItem]) -> Vec<(usize, usize)> {
    let index: HashMap<(usize, i32), usize> = items.iter().enumerate().map(|(i, it)| ((it.scene, it.tier), i)).collect();
    let mut pairs = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if let Some(&j) = index.get(&(it.scene, it.tier + 1)) {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Combined loss on a batch and gradients for both networks.
pub fn scorer_loss_and_gradients(
    model: &ScorerModel,
    items: &[&ScoreItem],
    weights: &ScoringWeights,
) -> Result<(ScoringLoss, ScorerGradients)> {
    let feats: Vec<Vec<f64>> = items.iter().map(|it| it.features.clone()).collect();
    let x = model.inputs(&feats)?;
    let ec = model.embed.forward_cached(x.view())?;
    let hc = model.head.forward_cached(ec.output.view())?;
    let scores = hc.output.column(0).to_vec();
    let batch = ScoringBatch {
        embeddings: ec.output.rows().into_iter().map(|r| r.to_vec()).collect(),
        tiers: items.iter().map(|it| it.tier).collect(),
    };
    let loss = total_scoring_loss(&scores, &consecutive_pairs(items), &batch, weights)?;
    let g_scores = Array2::from_shape_vec((items.len(), 1), loss.grad_scores.clone()).expect("shape");
    let (head, mut g_embed) = model.head.backward(&hc, g_scores.view())?;
    for (mut row, g) in g_embed.rows_mut().into_iter().zip(&loss.grad_embeddings) {
        row.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let (embed, _) = model.embed.backward(&ec, g_embed.view())?;
    Ok((loss, ScorerGradients { embed, head }))
}

fn check_tiers(items: &[ScoreItem], contrastive: bool) -> Result<()> {
    let mut counts: HashMap<i32, usize> = HashMap::new();
    for it in items {
        if it.tier >= 0 {
            return Err(Error::InvalidArgument(format!("tier {} cannot be scored; tier 0 is the reference", it.tier)));
        }
        *counts.entry(it.tier).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} scoring tier(s); ranking needs at least 2 below tier 0",
            counts.len()
        )));
    }
    if contrastive {
        if let Some((&tier, _)) = counts.iter().filter(|(_, &c)| c < 2).min_by_key(|(&t, _)| -t) {
            return Err(Error::SingletonTier { tier });
        }
    }
    Ok(())
}

/// Trains on precomputed items. The input standardizer is fitted on the
/// training features; the predictor is not involved.
pub fn fit_scorer(items: &[ScoreItem], config: &ScorerConfig) -> Result<(ScorerModel, ScorerReport)> {
    config.validate()?;
    check_tiers(items, config.lambda_con > 0.0)?;
    let mut model = config.new_model()?;
    let x = Array2::from_shape_fn((items.len(), SCORE_FEATURES), |(i, j)| items[i].features[j]);
    model.standardizer = Standardizer::fit(x.view());
    let weights = config.weights();
    let mut rng = rng_derive(config.seed, 1);
    let mut opt_embed = Momentum::new(&model.embed, config.learning_rate, config.momentum);
    let mut opt_head = Momentum::new(&model.head, config.learning_rate, config.momentum);
    let mut scenes: Vec<usize> = items.iter().map(|it| it.scene).collect();
    scenes.sort_unstable();
    scenes.dedup();
    let per_step = config.batch_scenes.unwrap_or(scenes.len()).min(scenes.len());
    let mut report = ScorerReport {
        epoch_losses: Vec::new(),
        epoch_hinge: Vec::new(),
        epoch_infonce: Vec::new(),
        steps: 0,
    };
    for epoch in 0..config.epochs {
        if per_step < scenes.len() {
            for i in (1..scenes.len()).rev() {
                scenes.swap(i, rng.index(i + 1));
            }
        }
        let (mut tot, mut hin, mut nce, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for chunk in scenes.chunks(per_step) {
            let batch: Vec<&ScoreItem> = items.iter().filter(|it| chunk.contains(&it.scene)).collect();
            let (loss, grads) = scorer_loss_and_gradients(&model, &batch, &weights)?;
            if !loss.value.is_finite() || !grads.embed.is_finite() || !grads.head.is_finite() {
                return Err(Error::NonFinite(format!("scorer loss diverged at epoch {epoch}")));
            }
            opt_embed.step(&mut model.embed, &grads.embed);
            opt_head.step(&mut model.head, &grads.head);
            tot += loss.value;
            hin += loss.hinge_mean;
            nce += loss.infonce;
            steps += 1;
        }
        report.steps += steps;
        report.epoch_losses.push(tot / steps as f64);
        report.epoch_hinge.push(hin / steps as f64);
        report.epoch_infonce.push(nce / steps as f64);
    }
    Ok((model, report))
}

/// Trains a scorer on every tier below tier 0 using maps from the frozen predictor.
pub fn train_scorer(
    tiers: &TierSet,
    predictor: &(impl MapPredictor + Sync),
    config: &ScorerConfig,
) -> Result<(ScorerModel, ScorerReport)> {
    config.validate()?;
    if tiers.tier_count() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{} tiers; need tier 0 plus at least 2 scoring tiers",
            tiers.tier_count()
        )));
    }
    fit_scorer(&scoring_items(tiers, predictor)?, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMean {
    pub tier: i32,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    /// Fraction of same-scene cross-tier pairs whose scores are strictly in tier order.
    pub pairwise_accuracy: f64,
    pub pairs: usize,
    /// Per-scene Spearman correlation of score with tier id, averaged.
    pub mean_srcc: f64,
    pub per_scene_srcc: Vec<f64>,
    /// Scenes whose scores were all equal.
    pub degenerate_scenes: usize,
    /// In tier order, best first.
    pub tier_means: Vec<TierMean>,
}

/// Ranking statistics over `(scene, tier, score)` triples.
pub fn ranking_stats(scored: &[(usize, i32, f64)]) -> Result<RankingReport> {
    let mut by_scene: Vec<(usize, Vec<(i32, f64)>)> = Vec::new();
    for &(scene, tier, score) in scored {
        match by_scene.iter_mut().find(|(s, _)| *s == scene) {
            Some((_, v)) => v.push((tier, score)),
            None => by_scene.push((scene, vec![(tier, score)])),
        }
    }
    by_scene.sort_by_key(|(s, _)| *s);
    let (mut correct, mut pairs, mut degenerate) = (0usize, 0usize, 0usize);
    let mut per_scene = Vec::new();
    for (_, v) in &by_scene {
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let (ti, si) = v[i];
                let (tj, sj) = v[j];
                if ti == tj {
                    continue;
                }
                pairs += 1;
                if (ti > tj && si > sj) || (tj > ti && sj > si) {
                    correct += 1;
                }
            }
        }
        if v.len() >= 2 {
            let t: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let s: Vec<f64> = v.iter().map(|p| p.1).collect();
            let r = srcc(&t, &s)?;
            degenerate += r.degenerate as usize;
            per_scene.push(r.value);
        }
    }
    if pairs == 0 {
        return Err(Error::InvalidArgument("no same-scene cross-tier pairs to rank".into()));
    }
    let mut tiers: Vec<i32> = scored.iter().map(|p| p.1).collect();
    tiers.sort_unstable_by(|a, b| b.cmp(a));
    tiers.dedup();
    let tier_means = tiers
        .into_iter()
        .map(|t| {
            let s: Vec<f64> = scored.iter().filter(|p| p.1 == t).map(|p| p.2).collect();
            TierMean {
                tier: t,
                mean_score: s.iter().sum::<f64>() / s.len() as f64,
            }
        })
        .collect();
    Ok(RankingReport {
        pairwise_accuracy: correct as f64 / pairs as f64,
        pairs,
        mean_srcc: per_scene.iter().sum::<f64>() / per_scene.len().max(1) as f64,
        per_scene_srcc: per_scene,
        degenerate_scenes: degenerate,
        tier_means,
    })
}

pub fn eval_ranking_items(model: &ScorerModel, items: &[ScoreItem]) -> Result<RankingReport> {
    let feats: Vec<Vec<f64>> = items.iter().map(|it| it.features.clone()).collect();
    let scores = model.score_batch(&feats)?;
    let scored: Vec<(usize, i32, f64)> = items.iter().zip(scores).map(|(it, s)| (it.scene, it.tier, s)).collect();
    ranking_stats(&scored)
}

pub fn eval_ranking(model: &ScorerModel, predictor: &(impl MapPredictor + Sync), tiers: &TierSet) -> Result<RankingReport> {
    eval_ranking_items(model, &scoring_items(tiers, predictor)?)
}

/// Mean within-tier minus mean cross-tier cosine similarity over all pairs.
pub fn embedding_separation(embeddings: &[Vec<f64>], tiers: &[i32]) -> Result<f64> {
    if embeddings.len() != tiers.len() {
        return Err(Error::DimMismatch("embeddings and tiers differ in length".into()));
    }
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let c = cosine_sim(&embeddings[i], &embeddings[j])?;
            if tiers[i] == tiers[j] {
                within += c;
                nw += 1;
            } else {
                cross += c;
                nc += 1;
            }
        }
    }
    if nw == 0 || nc == 0 {
        return Err(Error::InvalidArgument("need both within-tier and cross-tier pairs".into()));
    }
    Ok(within / nw as f64 - cross / nc as f64)
}
