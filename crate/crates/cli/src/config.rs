//! JSON run configuration. Every field is optional; unknown keys are rejected
//! with their path.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use reliqa::distortions::OperatorConstants;
use reliqa::predictor::TrainConfig;
use reliqa::scorer::ScorerConfig;
use reliqa::synth::{validate_schedule, Engine, IntensityLaw, DEFAULT_TIER_SCHEDULE};
use reliqa::DistortionBank;

use crate::Invalid;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub engine: EngineSection,
    pub synth: SynthSection,
    pub predictor: TrainConfig,
    pub scorer: ScorerSection,
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub operators: OperatorConstants,
    /// Intensity law, including the pristine probability `p_zero`.
    pub intensity: IntensityLaw,
    /// Probability of the random mask branch when semantic masks exist.
    pub p_random: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = Engine::default();
        Self {
            operators: e.bank.constants,
            intensity: e.law,
            p_random: e.p_random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: u64,
    /// Side of the square procedural scenes.
    pub size: usize,
    pub master_seed: u64,
    /// Swap probability applied at synthesis time. Training applies its own.
    pub p_swap: f64,
    /// Use procedural scene regions as semantic masks.
    pub scene_labels: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            count: 100,
            size: 128,
            master_seed: 0,
            p_swap: 0.0,
            scene_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    /// Intensities of tiers -1, -2, ...
    pub schedule: Vec<f64>,
    /// Seed of the tier builder.
    pub tier_seed: u64,
    pub training: ScorerConfig,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            schedule: DEFAULT_TIER_SCHEDULE.to_vec(),
            tier_seed: 0,
            training: ScorerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    /// Directory of reference PNGs for `synth`.
    pub images: Option<PathBuf>,
    /// Directory of label PNGs named after the reference images.
    pub labels: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = Self::parse(&text).with_context(|| format!("config {}", path.display()))?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config = serde_path_to_error::deserialize(de)
            .map_err(|e| Invalid(format!("at `{}`: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |section: &str, e: reliqa::Error| Invalid(format!("{section}: {e}"));
        self.engine.operators.validate().map_err(|e| invalid("engine.operators", e))?;
        self.engine.intensity.validate().map_err(|e| invalid("engine.intensity", e))?;
        if !(0.0..=1.0).contains(&self.engine.p_random) {
            return Err(Invalid(format!("engine.p_random {} outside [0, 1]", self.engine.p_random)).into());
        }
        if self.synth.count == 0 || self.synth.size < 4 {
            return Err(Invalid("synth.count must be positive and synth.size at least 4".into()).into());
        }
        if !(0.0..=1.0).contains(&self.synth.p_swap) {
            return Err(Invalid(format!("synth.p_swap {} outside [0, 1]", self.synth.p_swap)).into());
        }
        self.predictor.validate().map_err(|e| invalid("predictor", e))?;
        validate_schedule(&self.scorer.schedule).map_err(|e| invalid("scorer.schedule", e))?;
        self.scorer.training.validate().map_err(|e| invalid("scorer.training", e))?;
        Ok(())
    }

    pub fn engine(&self) -> Result<Engine> {
        Ok(Engine {
            bank: self.bank()?,
            law: self.engine.intensity,
            p_random: self.engine.p_random,
        })
    }

    pub fn bank(&self) -> Result<DistortionBank> {
        DistortionBank::new(self.engine.operators.clone()).map_err(|e| Invalid(format!("engine.operators: {e}")).into())
    }
}
