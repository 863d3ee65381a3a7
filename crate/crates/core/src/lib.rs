//! Relational, directional image quality assessment at desk scale.
//!
//! The crate covers the whole pipeline:
//!
//! * [`imagecore`]: rasters, deterministic RNG streams, PNG and DQTF I/O;
//! * [`masks`]: semantic and random mask pools, Perlin noise;
//! * [`distortions`]: the six-operator distortion bank;
//! * [`synth`]: triplet synthesis, weight maps, swaps, quality tiers and
//!   dataset serialization;
//! * [`objectives`]: hand-differentiated losses and gradient checking;
//! * [`predictor`]: a pairwise per-pixel distortion-map regressor;
//! * [`scorer`]: a relational quality scorer trained from tier order alone;
//! * [`nn`]: the small MLP, optimizer and checkpoint format both models share;
//! * [`scenes`]: procedural reference scenes with region labels;
//! * [`verify`]: finite-difference suites for every loss and model.

pub mod distortions;
pub mod error;
pub mod imagecore;
pub mod masks;
pub mod nn;
pub mod objectives;
pub mod predictor;
pub mod scenes;
pub mod scorer;
pub mod synth;
pub mod verify;

pub use distortions::{apply_distortion, distortion_magnitude, DistortionBank, DistortionKind, N_KINDS};
pub use error::{Error, Result};
pub use imagecore::{DistortionMap, ImageBuffer, Rng};
pub use masks::{MaskSet, MaskSource};
