//! Finite-difference verification suites for every hand-written gradient.

use ndarray::Array2;
use serde::Serialize;

use crate::error::Result;
use crate::imagecore::Rng;
use crate::nn::Standardizer;
use crate::objectives::{antisym_loss, finite_diff_check, hinge_rank, infonce, weighted_mse, ScoringBatch, ScoringWeights};
use crate::predictor::{featurize_pair, train::loss_and_gradients, PredictorModel};
use crate::scorer::{scorer_loss_and_gradients, ScoreItem, ScorerModel, SCORE_FEATURES};
use crate::synth::{make_weight_map, scene_for_item, Engine};

pub const KERNEL_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub kernel: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn check(kernel: &str, tolerance: f64, err: f64) -> GradCheck {
    GradCheck {
        kernel: kernel.into(),
        max_rel_error: err,
        tolerance,
    }
}

fn vec_in(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

/// Embeddings with norms in [0.5, 2] so cosine similarity is well conditioned.
fn embeddings(rng: &mut Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v = vec_in(rng, d, -1.0, 1.0);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
            let s = rng.uniform(0.5, 2.0) / norm;
            v.iter().map(|x| x * s).collect()
        })
        .collect()
}

/// Loss kernels at a random point drawn from `seed`.
pub fn objectives_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = Rng::new(seed);
    let n = 6 * 4 * 4;
    let p = vec_in(&mut rng, n, 0.0, 1.0);
    let q = vec_in(&mut rng, n, 0.0, 1.0);
    let y = vec_in(&mut rng, n, 0.0, 1.0);
    let w: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.3) { 10.0 } else { 1.0 }).collect();

    let mse = weighted_mse(&p, &y, &w, false)?;
    let e_mse = finite_diff_check(|x| weighted_mse(x, &y, &w, false).map_or(f64::NAN, |o| o.value), &p, &mse.grad, EPS)?;

    let anti = antisym_loss(&p, &q, &y, &w, false)?;
    let e_ab = finite_diff_check(|x| antisym_loss(x, &q, &y, &w, false).map_or(f64::NAN, |o| o.value), &p, &anti.grad_ab, EPS)?;
    let e_ba = finite_diff_check(|x| antisym_loss(&p, x, &y, &w, false).map_or(f64::NAN, |o| o.value), &q, &anti.grad_ba, EPS)?;

    // A point whose margin term sits 0.5 away from the kink, on a random side.
    let s_low = rng.uniform(-2.0, 2.0);
    let gap = if rng.bernoulli(0.5) { 0.5 } else { 1.5 };
    let x = [s_low, s_low + gap];
    let h = hinge_rank(x[0], x[1], 1.0);
    let e_hinge = finite_diff_check(|v| hinge_rank(v[0], v[1], 1.0).value, &x, &[h.grad_low, h.grad_high], EPS)?;

    let d = 5;
    let tiers = vec![0, 0, 0, -1, -1, -1, -2, -2, -2];
    let emb = embeddings(&mut rng, tiers.len(), d);
    let tau = ScoringWeights::default().tau;
    let nce = infonce(&ScoringBatch { embeddings: emb.clone(), tiers: tiers.clone() }, tau)?;
    let f = |x: &[f64]| {
        let e = x.chunks(d).map(|c| c.to_vec()).collect();
        infonce(&ScoringBatch { embeddings: e, tiers: tiers.clone() }, tau).map_or(f64::NAN, |o| o.value)
    };
    let e_nce = finite_diff_check(f, &emb.concat(), &nce.grads.concat(), 1e-6)?;

    Ok(vec![
        check("weighted_mse", KERNEL_TOLERANCE, e_mse),
        check("antisym_loss", KERNEL_TOLERANCE, e_ab.max(e_ba)),
        check("hinge_rank", KERNEL_TOLERANCE, e_hinge),
        check("infonce", KERNEL_TOLERANCE, e_nce),
    ])
}

/// Predictor backpropagation through both orderings on a small 42-8-4-6 network.
pub fn predictor_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = Rng::new(seed);
    let t = Engine::default().generate(&scene_for_item(seed, 0, 16, 16).image, None, seed, 0)?;
    let mut model = PredictorModel::with_sizes(&[42, 8, 4, 6], &mut rng)?;
    let f = featurize_pair(&t.test, &t.reference)?;
    model.standardizer = Standardizer::fit(f.rows.view());
    let weights = make_weight_map(&t.target, 0.05, 10.0)?;
    let idx: Vec<usize> = (0..16).map(|_| rng.index(256)).collect();
    let (_, g) = loss_and_gradients(&model, &f, t.target.data(), &weights, &idx, false)?;
    let params = model.net.flatten();
    let loss = |q: &[f64]| {
        let mut m = model.clone();
        m.net.set_flat(q).expect("same length");
        loss_and_gradients(&m, &f, t.target.data(), &weights, &idx, false).map_or(f64::NAN, |o| o.0)
    };
    let err = finite_diff_check(loss, &params, &g.flatten(), 1e-6)?;
    Ok(vec![check("predictor_backprop", MODEL_TOLERANCE, err)])
}

/// Scorer backpropagation (hinge and contrastive paths, embedding and head)
/// on a 3-tier by 2-scene batch.
pub fn scorer_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = Rng::new(seed);
    let items: Vec<ScoreItem> = (0..2)
        .flat_map(|s| (1..=3).map(move |t| (s, t)))
        .map(|(s, t)| ScoreItem {
            scene: s,
            tier: -t,
            features: vec_in(&mut rng, SCORE_FEATURES, -1.0, 1.0),
        })
        .collect();
    let refs: Vec<&ScoreItem> = items.iter().collect();
    let mut model = ScorerModel::default_sizes(&mut rng)?;
    let x = Array2::from_shape_fn((items.len(), SCORE_FEATURES), |(i, j)| items[i].features[j]);
    model.standardizer = Standardizer::fit(x.view());
    let w = ScoringWeights::default();
    let (_, g) = scorer_loss_and_gradients(&model, &refs, &w)?;
    let pe = model.embed.flatten();
    let fe = |q: &[f64]| {
        let mut m = model.clone();
        m.embed.set_flat(q).expect("same length");
        scorer_loss_and_gradients(&m, &refs, &w).map_or(f64::NAN, |o| o.0.value)
    };
    let e_embed = finite_diff_check(fe, &pe, &g.embed.flatten(), 1e-6)?;
    // Scores enter the loss only through differences, so the head's output
    // bias has an exactly zero gradient; it is checked for that exactly.
    let ph = model.head.flatten();
    let gh = g.head.flatten();
    let last = ph.len() - 1;
    let fh = |q: &[f64]| {
        let mut m = model.clone();
        let mut full = q.to_vec();
        full.push(ph[last]);
        m.head.set_flat(&full).expect("same length");
        scorer_loss_and_gradients(&m, &refs, &w).map_or(f64::NAN, |o| o.0.value)
    };
    let mut e_head = finite_diff_check(fh, &ph[..last], &gh[..last], 1e-6)?;
    if gh[last] != 0.0 {
        e_head = f64::INFINITY;
    }
    Ok(vec![
        check("scorer_embed_backprop", MODEL_TOLERANCE, e_embed),
        check("scorer_head_backprop", MODEL_TOLERANCE, e_head),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_seeds() {
        for seed in 0..3 {
            for c in objectives_suite(seed).unwrap().into_iter().chain(predictor_suite(seed).unwrap()).chain(scorer_suite(seed).unwrap()) {
                assert!(c.passed(), "{c:?} at seed {seed}");
            }
        }
    }
}
