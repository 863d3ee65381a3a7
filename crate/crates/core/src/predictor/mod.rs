//! Pairwise distortion-map predictor `F(A, B)`.
//!
//! A per-pixel network over [`featurize_pair`] features, trained with the
//! two-ordering anti-symmetric objective. This is a small stand-in for a
//! segmentation transformer: it keeps directionality (through asymmetric
//! difference features) and one output channel per distortion kind.

mod eval;
mod features;
pub(crate) mod train;

pub use eval::{
    antisymmetry_stats, eval_antisymmetry, eval_disentanglement, eval_monotonicity, monotonicity_scene, AntisymStats,
    Confusion, MonotonicityResult, DEFAULT_ALPHA_GRID, DISENTANGLE_THRESHOLD,
};
pub use features::{
    chroma, gradient_magnitude,
    box_mean, featurize_pair, image_features, PairFeatures, FEATURE_SCHEMA, IMAGE_FEATURES, PAIR_FEATURES, WINDOWS,
};
pub use train::{loss_and_gradients, train_predictor, TrainConfig, TrainReport};

use std::path::Path;

use ndarray::Array2;

use crate::distortions::N_KINDS;
use crate::error::{Error, Result};
use crate::imagecore::{DistortionMap, ImageBuffer, Rng};
use crate::nn::{load_checkpoint, save_checkpoint, Activation, Checkpoint, CheckpointHeader, Mlp, NetworkHeader, Standardizer, SCHEMA_VERSION};

pub const PREDICTOR_SIZES: [usize; 4] = [PAIR_FEATURES, 64, 32, N_KINDS];

/// Anything that maps an ordered pair to a distortion map.
pub trait MapPredictor {
    fn predict(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<DistortionMap>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub net: Mlp,
    pub standardizer: Standardizer,
}

impl PredictorModel {
    /// Fresh 42-64-32-6 network with identity input scaling.
    pub fn new(rng: &mut Rng) -> Result<Self> {
        Self::with_sizes(&PREDICTOR_SIZES, rng)
    }

    pub fn with_sizes(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if sizes.first() != Some(&PAIR_FEATURES) || sizes.last() != Some(&N_KINDS) {
            return Err(Error::InvalidArgument(format!(
                "predictor sizes must run from {PAIR_FEATURES} to {N_KINDS}, got {sizes:?}"
            )));
        }
        Ok(Self {
            net: Mlp::new(sizes, Activation::LeakyRelu, Activation::Sigmoid, rng)?,
            standardizer: Standardizer::identity(PAIR_FEATURES),
        })
    }

    /// All parameters zero: every output is 0.5.
    pub fn zeros() -> Self {
        Self {
            net: Mlp::zeros(&PREDICTOR_SIZES, Activation::LeakyRelu, Activation::Sigmoid).expect("valid sizes"),
            standardizer: Standardizer::identity(PAIR_FEATURES),
        }
    }

    /// Network outputs for raw feature rows (`n x 42` in, `n x 6` out).
    pub fn forward_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let mut x = rows.clone();
        self.standardizer.apply(&mut x);
        self.net.forward(x.view())
    }

    pub fn predict_features(&self, f: &PairFeatures) -> Result<DistortionMap> {
        let out = self.forward_rows(&f.rows)?;
        let n = f.height * f.width;
        let mut data = vec![0.0f32; N_KINDS * n];
        for (p, row) in out.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * n + p] = v as f32;
            }
        }
        DistortionMap::new(N_KINDS, f.height, f.width, data)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                schema_version: SCHEMA_VERSION,
                model: "predictor".into(),
                feature_schema: FEATURE_SCHEMA.into(),
                feature_dim: PAIR_FEATURES,
                networks: vec![NetworkHeader {
                    name: "map".into(),
                    sizes: self.net.sizes(),
                    hidden: self.net.hidden,
                    output: self.net.output,
                }],
            },
            networks: vec![self.net.clone()],
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.header.model != "predictor" || c.header.feature_schema != FEATURE_SCHEMA || c.networks.len() != 1 {
            return Err(Error::Checkpoint(format!(
                "not a predictor checkpoint (model {:?}, features {:?})",
                c.header.model, c.header.feature_schema
            )));
        }
        let net = c.networks.into_iter().next().expect("one network");
        if net.input_dim() != PAIR_FEATURES || net.output_dim() != N_KINDS {
            return Err(Error::Checkpoint(format!("predictor network sizes {:?}", net.sizes())));
        }
        Ok(Self {
            net,
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

impl MapPredictor for PredictorModel {
    fn predict(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<DistortionMap> {
        predict_map(self, a, b)
    }
}

/// `F(a, b)`: per-pixel intensities of each distortion kind in `a` relative to `b`.
pub fn predict_map(model: &PredictorModel, a: &ImageBuffer, b: &ImageBuffer) -> Result<DistortionMap> {
    model.predict_features(&featurize_pair(a, b)?)
}

/// Outputs the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f32);

impl MapPredictor for ConstantPredictor {
    fn predict(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<DistortionMap> {
        if !a.same_dims(b) {
            return Err(Error::DimMismatch("pair dims differ".into()));
        }
        DistortionMap::new(N_KINDS, a.height(), a.width(), vec![self.0; N_KINDS * a.pixel_count()])
    }
}
