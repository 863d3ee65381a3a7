//! Momentum-SGD training of the map predictor.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::distortions::N_KINDS;
use crate::error::{Error, Result};
use crate::imagecore::{rng_derive, Rng};
use crate::nn::{Gradients, Momentum, Standardizer};
use crate::objectives::antisym_loss;
use crate::synth::{swap_augment, Triplet, WeightMap, DEFAULT_BETA, DEFAULT_P_SWAP, DEFAULT_W_HIGH};

use super::features::{featurize_pair, PairFeatures, PAIR_FEATURES};
use super::PredictorModel;

const STANDARDIZER_ITEMS: usize = 32;
const STANDARDIZER_PIXELS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Pixel positions sampled per triplet and step.
    pub pixels_per_step: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub p_swap: f64,
    pub beta: f64,
    pub w_high: f64,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Divide the loss by the number of sampled elements.
    pub mean_loss: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            pixels_per_step: 1024,
            learning_rate: 0.15,
            momentum: 0.9,
            p_swap: DEFAULT_P_SWAP,
            beta: DEFAULT_BETA,
            w_high: DEFAULT_W_HIGH,
            hidden: vec![64, 32],
            mean_loss: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.pixels_per_step == 0 {
            return bad("pixels_per_step must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.p_swap) {
            return bad(format!("p_swap {} outside [0, 1]", self.p_swap));
        }
        if !(0.0..1.0).contains(&self.beta) || !(self.w_high >= 1.0) {
            return bad(format!("beta {} / w_high {} out of range", self.beta, self.w_high));
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![PAIR_FEATURES];
        s.extend(&self.hidden);
        s.push(N_KINDS);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Rows of `features`, `target` and `weights` at the given pixels, with
/// per-pixel channel values laid out row-major (`n x 6`).
fn gather(f: &PairFeatures, map: &[f32], idx: &[usize]) -> (Array2<f64>, Vec<f64>) {
    let n = f.height * f.width;
    let rows = f.rows.select(Axis(0), idx);
    let mut t = Vec::with_capacity(idx.len() * N_KINDS);
    for &p in idx {
        for j in 0..N_KINDS {
            t.push(map[j * n + p] as f64);
        }
    }
    (rows, t)
}

fn gather_weights(w: &WeightMap, n: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * N_KINDS);
    for &p in idx {
        for j in 0..N_KINDS {
            out.push(w.data[j * n + p]);
        }
    }
    out
}

/// Anti-symmetric loss at the given pixels and its parameter gradient.
/// `forward` holds features of `(A, B)`; the reverse ordering is derived.
pub fn loss_and_gradients(
    model: &PredictorModel,
    forward: &PairFeatures,
    target: &[f32],
    weights: &WeightMap,
    idx: &[usize],
    mean: bool,
) -> Result<(f64, Gradients)> {
    let n = forward.height * forward.width;
    let reverse = forward.reversed();
    let (mut x_ab, y) = gather(forward, target, idx);
    let (mut x_ba, _) = gather(&reverse, target, idx);
    let w = gather_weights(weights, n, idx);
    model.standardizer.apply(&mut x_ab);
    model.standardizer.apply(&mut x_ba);
    let c_ab = model.net.forward_cached(x_ab.view())?;
    let c_ba = model.net.forward_cached(x_ba.view())?;
    let flat = |a: &Array2<f64>| a.iter().copied().collect::<Vec<f64>>();
    let loss = antisym_loss(&flat(&c_ab.output), &flat(&c_ba.output), &y, &w, mean)?;
    let shape = (idx.len(), N_KINDS);
    let g_ab = Array2::from_shape_vec(shape, loss.grad_ab).expect("shape");
    let g_ba = Array2::from_shape_vec(shape, loss.grad_ba).expect("shape");
    let (mut grads, _) = model.net.backward(&c_ab, g_ab.view())?;
    let (g2, _) = model.net.backward(&c_ba, g_ba.view())?;
    grads.add_assign(&g2);
    Ok((loss.value, grads))
}

fn fit_standardizer(triplets: &[Triplet], rng: &mut Rng) -> Result<Standardizer> {
    let mut rows = Vec::new();
    for t in triplets.iter().take(STANDARDIZER_ITEMS) {
        let f = featurize_pair(&t.test, &t.reference)?;
        let r = f.reversed();
        let n = f.height * f.width;
        for _ in 0..STANDARDIZER_PIXELS.min(n) {
            let p = rng.index(n);
            rows.push(f.rows.row(p).to_owned());
            rows.push(r.rows.row(p).to_owned());
        }
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let stacked = ndarray::stack(Axis(0), &views).map_err(|e| Error::DimMismatch(e.to_string()))?;
    Ok(Standardizer::fit(stacked.view()))
}

/// Trains a fresh predictor.
///
/// Each epoch visits the triplets in a shuffled order. A step applies the
/// random swap (items already swapped on disk are kept as they are), samples
/// pixel positions uniformly with replacement, evaluates both orderings and
/// takes one momentum step. Weights always come from the forward map's
/// support. The run is a pure function of `(triplets, config)`.
pub fn train_predictor(triplets: &[Triplet], config: &TrainConfig) -> Result<(PredictorModel, TrainReport)> {
    config.validate()?;
    if triplets.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut model = PredictorModel::with_sizes(&config.sizes(), &mut rng_derive(config.seed, 0))?;
    let mut rng = rng_derive(config.seed, 1);
    model.standardizer = fit_standardizer(triplets, &mut rng)?;
    let mut opt = Momentum::new(&model.net, config.learning_rate, config.momentum);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        steps: 0,
    };
    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.index(i + 1));
        }
        let mut total = 0.0;
        for &k in &order {
            let t = &triplets[k];
            let weights = t.weight_map(config.beta, config.w_high)?;
            let t = if t.swapped {
                t.clone()
            } else {
                swap_augment(t.clone(), config.p_swap, &mut rng)?
            };
            let f = featurize_pair(&t.test, &t.reference)?;
            let n = f.height * f.width;
            let idx: Vec<usize> = (0..config.pixels_per_step).map(|_| rng.index(n)).collect();
            let (loss, grads) = loss_and_gradients(&model, &f, t.target.data(), &weights, &idx, config.mean_loss)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!("predictor loss diverged at epoch {epoch}, item {}", t.item_index)));
            }
            opt.step(&mut model.net, &grads);
            total += loss;
            report.steps += 1;
        }
        report.epoch_losses.push(total / order.len() as f64);
    }
    if !model.net.is_finite() {
        return Err(Error::NonFinite("predictor parameters became non-finite".into()));
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::finite_diff_check;
    use crate::synth::{generate_triplets, Engine, ReferenceSource};

    fn toy(n: u64, size: usize) -> Vec<Triplet> {
        generate_triplets(&Engine::default(), &ReferenceSource::Procedural { height: size, width: size, semantic: true }, 17, n, 0.0).unwrap()
    }

    #[test]
    fn backprop_through_both_orderings() {
        let ts = toy(2, 16);
        let mut rng = Rng::new(4);
        for t in &ts {
            let mut m = PredictorModel::with_sizes(&[42, 8, 4, 6], &mut rng).unwrap();
            m.standardizer = fit_standardizer(&ts, &mut rng).unwrap();
            let f = featurize_pair(&t.test, &t.reference).unwrap();
            let w = t.weight_map(0.05, 10.0).unwrap();
            let idx: Vec<usize> = (0..20).map(|_| rng.index(256)).collect();
            let (_, g) = loss_and_gradients(&m, &f, t.target.data(), &w, &idx, false).unwrap();
            let p = m.net.flatten();
            let loss = |q: &[f64]| {
                let mut mm = m.clone();
                mm.net.set_flat(q).unwrap();
                loss_and_gradients(&mm, &f, t.target.data(), &w, &idx, false).unwrap().0
            };
            let err = finite_diff_check(loss, &p, &g.flatten(), 1e-6).unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn deterministic_and_lr_zero() {
        let ts = toy(6, 24);
        let cfg = TrainConfig {
            epochs: 2,
            pixels_per_step: 64,
            ..Default::default()
        };
        let (a, ra) = train_predictor(&ts, &cfg).unwrap();
        let (b, rb) = train_predictor(&ts, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let frozen = TrainConfig {
            learning_rate: 0.0,
            ..cfg.clone()
        };
        let (z, _) = train_predictor(&ts, &frozen).unwrap();
        let init = PredictorModel::with_sizes(&cfg.sizes(), &mut rng_derive(cfg.seed, 0)).unwrap();
        assert_eq!(z.net, init.net);
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        assert!(train_predictor(&[], &TrainConfig::default()).is_err());
        let ts = toy(1, 16);
        let bad = TrainConfig {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(train_predictor(&ts, &bad).is_err());
    }
}
