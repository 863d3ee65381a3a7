//! Training losses with analytic gradients, plus a central-difference checker.
//!
//! All kernels work on flat `f64` slices and reduce in a fixed sequential
//! order, so values are bit-reproducible.

use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 1.0;
pub const DEFAULT_TAU: f64 = 0.07;
pub const DEFAULT_LAMBDA_RANK: f64 = 1.0;
pub const DEFAULT_LAMBDA_CON: f64 = 0.5;
pub const COSINE_EPS: f64 = 1e-12;

/// A scalar loss and its gradient with respect to one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_lengths(what: &str, lens: &[usize]) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::DimMismatch(format!("{what}: argument lengths {lens:?}")));
    }
    Ok(())
}

/// `sum W (pred - target)^2`, gradient `2 W (pred - target)`.
/// With `mean` both are divided by the element count.
pub fn weighted_mse(pred: &[f64], target: &[f64], weights: &[f64], mean: bool) -> Result<LossOutput> {
    check_lengths("weighted_mse", &[pred.len(), target.len(), weights.len()])?;
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative or NaN weight {w}")));
    }
    let scale = if mean && !pred.is_empty() {
        1.0 / pred.len() as f64
    } else {
        1.0
    };
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for ((p, t), w) in pred.iter().zip(target).zip(weights) {
        let d = p - t;
        value += w * d * d;
        grad.push(2.0 * w * d * scale);
    }
    Ok(LossOutput {
        value: value * scale,
        grad,
    })
}

/// Loss over both argument orders with gradients for each prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymOutput {
    pub value: f64,
    pub grad_ab: Vec<f64>,
    pub grad_ba: Vec<f64>,
}

/// `||F_AB - Y||_W^2 + ||F_BA - (1 - Y)||_W^2`.
pub fn antisym_loss(f_ab: &[f64], f_ba: &[f64], y: &[f64], weights: &[f64], mean: bool) -> Result<AntisymOutput> {
    check_lengths("antisym_loss", &[f_ab.len(), f_ba.len(), y.len(), weights.len()])?;
    let fwd = weighted_mse(f_ab, y, weights, mean)?;
    let complement: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let rev = weighted_mse(f_ba, &complement, weights, mean)?;
    Ok(AntisymOutput {
        value: fwd.value + rev.value,
        grad_ab: fwd.grad,
        grad_ba: rev.grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeOutput {
    pub value: f64,
    pub grad_low: f64,
    pub grad_high: f64,
}

/// `max(0, delta - (s_high - s_low))`. The subgradient at the kink is 0.
pub fn hinge_rank(s_low: f64, s_high: f64, delta: f64) -> HingeOutput {
    let m = delta - (s_high - s_low);
    if m > 0.0 {
        HingeOutput {
            value: m,
            grad_low: 1.0,
            grad_high: -1.0,
        }
    } else {
        HingeOutput {
            value: 0.0,
            grad_low: 0.0,
            grad_high: 0.0,
        }
    }
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    check_lengths("cosine_sim", &[u.len(), v.len()])?;
    let (nu, nv) = (norm(u), norm(v));
    if !(nu > COSINE_EPS && nv > COSINE_EPS) {
        return Err(Error::DegenerateNorm(nu.min(nv)));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Embeddings with their tier labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringBatch {
    pub embeddings: Vec<Vec<f64>>,
    pub tiers: Vec<i32>,
}

impl ScoringBatch {
    pub fn validate(&self) -> Result<()> {
        if self.embeddings.len() != self.tiers.len() {
            return Err(Error::DimMismatch(format!(
                "{} embeddings, {} tier labels",
                self.embeddings.len(),
                self.tiers.len()
            )));
        }
        let mut counts: Vec<(i32, usize)> = Vec::new();
        for &t in &self.tiers {
            match counts.iter_mut().find(|(id, _)| *id == t) {
                Some((_, c)) => *c += 1,
                None => counts.push((t, 1)),
            }
        }
        if counts.len() < 2 {
            return Err(Error::InvalidArgument(format!("{} tier(s) in batch, need at least 2", counts.len())));
        }
        if let Some(&(tier, _)) = counts.iter().find(|(_, c)| *c < 2) {
            return Err(Error::SingletonTier { tier });
        }
        let d = self.embeddings[0].len();
        if self.embeddings.iter().any(|e| e.len() != d) {
            return Err(Error::DimMismatch("embeddings differ in length".into()));
        }
        Ok(())
    }
}

/// Value and per-embedding gradients of the contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceOutput {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mean over anchors of `-log(sum_pos exp(s/tau) / sum_{all others} exp(s/tau))`
/// with `s` the cosine similarity and positives the other members of the
/// anchor's tier.
pub fn infonce(batch: &ScoringBatch, tau: f64) -> Result<InfoNceOutput> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    batch.validate()?;
    let n = batch.embeddings.len();
    let d = batch.embeddings[0].len();
    let norms: Vec<f64> = batch.embeddings.iter().map(|e| norm(e)).collect();
    if let Some(&bad) = norms.iter().find(|&&v| !(v > COSINE_EPS)) {
        return Err(Error::DegenerateNorm(bad));
    }
    let unit: Vec<Vec<f64>> = batch
        .embeddings
        .iter()
        .zip(&norms)
        .map(|(e, nm)| e.iter().map(|x| x / nm).collect())
        .collect();
    let mut sim = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            sim[a * n + b] = dot(&unit[a], &unit[b]).clamp(-1.0, 1.0);
        }
    }
    // dL/dsim[a][b], accumulated over anchors, then pushed through cosine.
    let mut dsim = vec![0.0; n * n];
    let mut value = 0.0;
    let inv_n = 1.0 / n as f64;
    for a in 0..n {
        let logits = |pos_only: bool| {
            let sim = &sim;
            let tiers = &batch.tiers;
            (0..n)
                .filter(move |&b| b != a && (!pos_only || tiers[b] == tiers[a]))
                .map(move |b| sim[a * n + b] / tau)
        };
        let lse_pos = log_sum_exp(logits(true));
        let lse_all = log_sum_exp(logits(false));
        value += lse_all - lse_pos;
        for b in (0..n).filter(|&b| b != a) {
            let s = sim[a * n + b] / tau;
            let mut g = (s - lse_all).exp();
            if batch.tiers[b] == batch.tiers[a] {
                g -= (s - lse_pos).exp();
            }
            dsim[a * n + b] += g * inv_n / tau;
        }
    }
    let mut grads = vec![vec![0.0; d]; n];
    for a in 0..n {
        for b in 0..n {
            // sim[a][b] depends on both embeddings.
            let g = dsim[a * n + b];
            if g == 0.0 {
                continue;
            }
            let c = sim[a * n + b];
            for k in 0..d {
                grads[a][k] += g * (unit[b][k] - c * unit[a][k]) / norms[a];
                grads[b][k] += g * (unit[a][k] - c * unit[b][k]) / norms[b];
            }
        }
    }
    Ok(InfoNceOutput {
        value: value * inv_n,
        grads,
    })
}

/// Weights and constants of the scoring objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringWeights {
    pub lambda_rank: f64,
    pub lambda_con: f64,
    pub margin: f64,
    pub tau: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        Self {
            lambda_rank: DEFAULT_LAMBDA_RANK,
            lambda_con: DEFAULT_LAMBDA_CON,
            margin: DEFAULT_MARGIN,
            tau: DEFAULT_TAU,
        }
    }
}

/// `lambda_rank * hinge_mean + lambda_con * infonce`.
pub fn combine_scoring_terms(hinge_mean: f64, infonce_value: f64, w: &ScoringWeights) -> f64 {
    w.lambda_rank * hinge_mean + w.lambda_con * infonce_value
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringLoss {
    pub value: f64,
    pub hinge_mean: f64,
    pub infonce: f64,
    pub grad_scores: Vec<f64>,
    pub grad_embeddings: Vec<Vec<f64>>,
}

/// Hinge over `(low, high)` index pairs into `scores`, averaged over pairs,
/// plus the contrastive term over `batch`. Gradients are the weighted sums
/// of the component gradients.
pub fn total_scoring_loss(
    scores: &[f64],
    pairs: &[(usize, usize)],
    batch: &ScoringBatch,
    w: &ScoringWeights,
) -> Result<ScoringLoss> {
    if scores.len() != batch.embeddings.len() {
        return Err(Error::DimMismatch(format!(
            "{} scores for {} embeddings",
            scores.len(),
            batch.embeddings.len()
        )));
    }
    let mut grad_scores = vec![0.0; scores.len()];
    let mut hinge_sum = 0.0;
    for &(lo, hi) in pairs {
        if lo >= scores.len() || hi >= scores.len() {
            return Err(Error::OutOfRange(format!("pair ({lo}, {hi}) for {} scores", scores.len())));
        }
        let h = hinge_rank(scores[lo], scores[hi], w.margin);
        hinge_sum += h.value;
        let s = w.lambda_rank / pairs.len() as f64;
        grad_scores[lo] += s * h.grad_low;
        grad_scores[hi] += s * h.grad_high;
    }
    let hinge_mean = if pairs.is_empty() {
        0.0
    } else {
        hinge_sum / pairs.len() as f64
    };
    // A disabled contrastive term is skipped, so singleton tiers are allowed.
    let nce = if w.lambda_con == 0.0 {
        InfoNceOutput {
            value: 0.0,
            grads: batch.embeddings.iter().map(|e| vec![0.0; e.len()]).collect(),
        }
    } else {
        infonce(batch, w.tau)?
    };
    let grad_embeddings = nce
        .grads
        .into_iter()
        .map(|g| g.into_iter().map(|x| w.lambda_con * x).collect())
        .collect();
    Ok(ScoringLoss {
        value: combine_scoring_terms(hinge_mean, nce.value, w),
        hinge_mean,
        infonce: nce.value,
        grad_scores,
        grad_embeddings,
    })
}

/// Largest relative error between `analytic` and central differences of `f`
/// at `x`, with denominator `max(|a|, |n|, 1e-8)`.
///
/// The rounding resolution of the difference quotient (a few ulps of `f`
/// divided by the step) is discounted from each discrepancy before dividing.
/// A coordinate where both derivatives sit below it counts as agreeing: such
/// values cannot be told apart from zero at this step size.
pub fn finite_diff_check(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> Result<f64> {
    check_lengths("finite_diff_check", &[x.len(), analytic.len()])?;
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * eps);
        let resolution = 8.0 * f64::EPSILON * up.abs().max(down.abs()) / (2.0 * eps);
        if analytic[i].abs() <= resolution && numeric.abs() <= resolution {
            continue;
        }
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let err = ((analytic[i] - numeric).abs() - resolution).max(0.0) / denom;
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("gradient check at coordinate {i}")));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::Rng;
    use proptest::prelude::*;

    fn random_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(lo, hi)).collect()
    }

    #[test]
    fn mse_basics() {
        let p = [0.2, 0.4];
        let z = weighted_mse(&p, &p, &[1.0, 10.0], false).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.grad.iter().all(|&g| g == 0.0));
        let one = weighted_mse(&[0.5], &[0.0], &[1.0], false).unwrap();
        assert_eq!(one.value, 0.25);
        assert_eq!(one.grad, vec![1.0]);
        assert!(weighted_mse(&[0.5], &[0.0, 1.0], &[1.0], false).is_err());
        assert!(weighted_mse(&[0.5], &[0.0], &[-1.0], false).is_err());
    }

    #[test]
    fn mse_two_by_two_against_loop_and_differences() {
        let p = [0.1, 0.7, 0.4, 0.95];
        let t = [0.0, 0.5, 0.4, 0.2];
        let w = [1.0, 10.0, 1.0, 10.0];
        let out = weighted_mse(&p, &t, &w, false).unwrap();
        let mut reference = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let k = i * 2 + j;
                reference += w[k] * (p[k] - t[k]) * (p[k] - t[k]);
            }
        }
        assert!((out.value - reference).abs() < 1e-15);
        let err = finite_diff_check(|x| weighted_mse(x, &t, &w, false).unwrap().value, &p, &out.grad, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
        let mean = weighted_mse(&p, &t, &w, true).unwrap();
        assert!((mean.value - reference / 4.0).abs() < 1e-15);
    }

    #[test]
    fn antisym_minimizers() {
        let y = [0.3, 0.0, 0.9];
        let comp: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let w = [10.0, 1.0, 10.0];
        assert_eq!(antisym_loss(&y, &comp, &y, &w, false).unwrap().value, 0.0);
        let half = [0.5; 3];
        assert_eq!(antisym_loss(&half, &half, &half, &w, false).unwrap().value, 0.0);
    }

    #[test]
    fn antisym_gradients() {
        let mut rng = Rng::new(3);
        let n = 6 * 4 * 4;
        let ab = random_vec(&mut rng, n, 0.0, 1.0);
        let ba = random_vec(&mut rng, n, 0.0, 1.0);
        let y = random_vec(&mut rng, n, 0.0, 1.0);
        let w: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.3) { 10.0 } else { 1.0 }).collect();
        let out = antisym_loss(&ab, &ba, &y, &w, false).unwrap();
        let e1 = finite_diff_check(|x| antisym_loss(x, &ba, &y, &w, false).unwrap().value, &ab, &out.grad_ab, 1e-5).unwrap();
        let e2 = finite_diff_check(|x| antisym_loss(&ab, x, &y, &w, false).unwrap().value, &ba, &out.grad_ba, 1e-5).unwrap();
        assert!(e1 < 1e-6 && e2 < 1e-6, "{e1} {e2}");
    }

    #[test]
    fn hinge_cases() {
        assert_eq!(hinge_rank(0.2, 1.5, 1.0).value, 0.0);
        assert!((hinge_rank(0.5, 0.8, 1.0).value - 0.7).abs() < 1e-12);
        let h = hinge_rank(0.3, 0.3, 1.0);
        assert_eq!((h.value, h.grad_low, h.grad_high), (1.0, 1.0, -1.0));
        let kink = hinge_rank(0.0, 1.0, 1.0);
        assert_eq!((kink.grad_low, kink.grad_high), (0.0, 0.0));
    }

    #[test]
    fn hinge_gradient_away_from_kink() {
        // Margin term 0.5 from the kink.
        let x = [0.0, 0.5];
        let h = hinge_rank(x[0], x[1], 1.0);
        let err = finite_diff_check(|v| hinge_rank(v[0], v[1], 1.0).value, &x, &[h.grad_low, h.grad_high], 1e-5).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_sim(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.70711).abs() < 1e-5);
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateNorm(_))));
    }

    fn batch(emb: Vec<Vec<f64>>, tiers: Vec<i32>) -> ScoringBatch {
        ScoringBatch { embeddings: emb, tiers }
    }

    #[test]
    fn infonce_all_identical_is_ln3() {
        let b = batch(vec![vec![1.0, 2.0]; 4], vec![0, 0, -1, -1]);
        let out = infonce(&b, DEFAULT_TAU).unwrap();
        assert!((out.value - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infonce_separated_limit() {
        let b = batch(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![-1.0, 0.0], vec![-3.0, 0.0]], vec![0, 0, -1, -1]);
        let out = infonce(&b, 0.01).unwrap();
        assert!(out.value < 1e-60, "{}", out.value);
    }

    #[test]
    fn infonce_errors() {
        let single = batch(vec![vec![1.0], vec![1.0], vec![0.5]], vec![0, 0, -1]);
        assert!(matches!(infonce(&single, 0.07), Err(Error::SingletonTier { tier: -1 })));
        let one_tier = batch(vec![vec![1.0], vec![1.0]], vec![0, 0]);
        assert!(infonce(&one_tier, 0.07).is_err());
        let zero = batch(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0], vec![1.0, 1.0]], vec![0, 0, -1, -1]);
        assert!(matches!(infonce(&zero, 0.07), Err(Error::DegenerateNorm(_))));
    }

    /// Straight transcription of the per-anchor ratio without any stabilization.
    fn brute_infonce(b: &ScoringBatch, tau: f64) -> f64 {
        let n = b.embeddings.len();
        let mut total = 0.0;
        for i in 0..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let e = (cosine_sim(&b.embeddings[i], &b.embeddings[j]).unwrap() / tau).exp();
                den += e;
                if b.tiers[j] == b.tiers[i] {
                    num += e;
                }
            }
            total += -(num / den).ln();
        }
        total / n as f64
    }

    #[test]
    fn infonce_matches_brute_force_and_differences() {
        let mut rng = Rng::new(99);
        let d = 4;
        let emb: Vec<Vec<f64>> = (0..9).map(|_| random_vec(&mut rng, d, -1.0, 1.0)).collect();
        let tiers = vec![0, 0, 0, -1, -1, -1, -2, -2, -2];
        let b = batch(emb.clone(), tiers.clone());
        let out = infonce(&b, 0.5).unwrap();
        assert!((out.value - brute_infonce(&b, 0.5)).abs() < 1e-12);
        let flat: Vec<f64> = emb.concat();
        let analytic: Vec<f64> = out.grads.concat();
        let f = |x: &[f64]| {
            let e: Vec<Vec<f64>> = x.chunks(d).map(|c| c.to_vec()).collect();
            brute_infonce(&batch(e, tiers.clone()), 0.5)
        };
        let err = finite_diff_check(f, &flat, &analytic, 1e-5).unwrap();
        assert!(err < 1e-5, "{err}");
        // Default temperature as well.
        let out = infonce(&b, DEFAULT_TAU).unwrap();
        assert!((out.value - brute_infonce(&b, DEFAULT_TAU)).abs() < 1e-10);
        let f = |x: &[f64]| {
            let e: Vec<Vec<f64>> = x.chunks(d).map(|c| c.to_vec()).collect();
            infonce(&batch(e, tiers.clone()), DEFAULT_TAU).unwrap().value
        };
        let err = finite_diff_check(f, &flat, &out.grads.concat(), 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn infonce_drops_as_tiers_tighten() {
        // Tier 0 along angle +phi/-phi around the x-axis, tier -1 mirrored;
        // cross-tier angles stay fixed while within-tier spread shrinks.
        let family = |spread: f64| {
            let e = vec![
                vec![spread.cos(), spread.sin()],
                vec![spread.cos(), -spread.sin()],
                vec![-spread.cos(), spread.sin()],
                vec![-spread.cos(), -spread.sin()],
            ];
            infonce(&batch(e, vec![0, 0, -1, -1]), 0.5).unwrap().value
        };
        let values: Vec<f64> = [0.9, 0.6, 0.3, 0.1].iter().map(|&s| family(s)).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    }

    #[test]
    fn total_loss_combination() {
        assert_eq!(combine_scoring_terms(0.0, 0.0, &ScoringWeights::default()), 0.0);
        let v = combine_scoring_terms(0.7, 3f64.ln(), &ScoringWeights::default());
        assert!((v - 1.2493).abs() < 1e-4);
    }

    #[test]
    fn total_loss_gradient_is_linear() {
        let mut rng = Rng::new(5);
        let emb: Vec<Vec<f64>> = (0..6).map(|_| random_vec(&mut rng, 3, -1.0, 1.0)).collect();
        let tiers = vec![0, 0, -1, -1, -2, -2];
        let scores = [0.4, 0.1, 0.3, -0.2, 0.0, 0.5];
        let pairs = [(2, 0), (3, 1), (4, 2), (5, 3)];
        let b = batch(emb, tiers);
        let w = ScoringWeights {
            lambda_rank: 1.7,
            lambda_con: 0.3,
            ..Default::default()
        };
        let total = total_scoring_loss(&scores, &pairs, &b, &w).unwrap();
        let nce = infonce(&b, w.tau).unwrap();
        for (g, r) in total.grad_embeddings.concat().iter().zip(nce.grads.concat()) {
            assert!((g - 0.3 * r).abs() < 1e-15);
        }
        let mut expect = [0.0; 6];
        for &(lo, hi) in &pairs {
            let h = hinge_rank(scores[lo], scores[hi], 1.0);
            expect[lo] += 1.7 * h.grad_low / 4.0;
            expect[hi] += 1.7 * h.grad_high / 4.0;
        }
        assert_eq!(total.grad_scores, expect.to_vec());
        let hinge_mean = pairs.iter().map(|&(l, h)| hinge_rank(scores[l], scores[h], 1.0).value).sum::<f64>() / 4.0;
        assert!((total.value - (1.7 * hinge_mean + 0.3 * nce.value)).abs() < 1e-15);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = [0.3, -0.7];
        let err = finite_diff_check(|v| v[0] * v[0] + 3.0 * v[1], &x, &[0.6, 3.3], 1e-5).unwrap();
        assert!((err - 0.3 / 3.3).abs() < 1e-6);
        // A zero analytic gradient for a live coordinate is not excused.
        let err = finite_diff_check(|v| 1e-3 * v[0], &[1.0], &[0.0], 1e-5).unwrap();
        assert!((err - 1.0).abs() < 1e-9, "{err}");
    }

    #[test]
    fn quadratic_check_is_tight() {
        let mut rng = Rng::new(1);
        let x = random_vec(&mut rng, 20, -3.0, 3.0);
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let err = finite_diff_check(|v| v.iter().map(|a| a * a).sum(), &x, &g, 1e-5).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    proptest! {
        #[test]
        fn antisym_swap_symmetry(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let ab = random_vec(&mut rng, 24, 0.0, 1.0);
            let ba = random_vec(&mut rng, 24, 0.0, 1.0);
            let y = random_vec(&mut rng, 24, 0.0, 1.0);
            let w = random_vec(&mut rng, 24, 1.0, 10.0);
            let comp: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
            let a = antisym_loss(&ab, &ba, &y, &w, false).unwrap().value;
            let b = antisym_loss(&ba, &ab, &comp, &w, false).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn infonce_scale_invariant(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let emb: Vec<Vec<f64>> = (0..6).map(|_| random_vec(&mut rng, 5, -1.0, 1.0)).collect();
            let scaled: Vec<Vec<f64>> = emb.iter().map(|e| e.iter().map(|x| 7.3 * x).collect()).collect();
            let tiers = vec![0, 0, -1, -1, -2, -2];
            let a = infonce(&batch(emb, tiers.clone()), DEFAULT_TAU).unwrap().value;
            let b = infonce(&batch(scaled, tiers), DEFAULT_TAU).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn mse_nonnegative(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let p = random_vec(&mut rng, 16, 0.0, 1.0);
            let t = random_vec(&mut rng, 16, 0.0, 1.0);
            let w = random_vec(&mut rng, 16, 1.0, 10.0);
            prop_assert!(weighted_mse(&p, &t, &w, false).unwrap().value > 0.0);
            prop_assert_eq!(weighted_mse(&p, &p, &w, false).unwrap().value, 0.0);
        }

        #[test]
        fn random_gradients_match(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            // Norms kept away from zero, where cosine is sharply curved.
            let emb: Vec<Vec<f64>> = (0..6)
                .map(|_| {
                    let v = random_vec(&mut rng, 3, -1.0, 1.0);
                    let scale = rng.uniform(0.5, 2.0) / norm(&v).max(1e-3);
                    v.iter().map(|x| x * scale).collect()
                })
                .collect();
            let tiers = vec![0, 0, -1, -1, -2, -2];
            let out = infonce(&batch(emb.clone(), tiers.clone()), 0.3).unwrap();
            // Components near zero drown in rounding noise at a fixed step.
            prop_assume!(out.grads.concat().iter().all(|g| g.abs() > 1e-4));
            let f = |x: &[f64]| {
                let e: Vec<Vec<f64>> = x.chunks(3).map(|c| c.to_vec()).collect();
                infonce(&batch(e, tiers.clone()), 0.3).unwrap().value
            };
            let err = finite_diff_check(f, &emb.concat(), &out.grads.concat(), 1e-5).unwrap();
            prop_assert!(err < 1e-5, "{}", err);
        }
    }
}
