//! Raster types, deterministic random streams, and file I/O.

mod buffer;
mod png_io;
mod rng;
mod tensor_file;

pub use buffer::{DistortionMap, ImageBuffer};
pub use png_io::{load_label_png, load_png, quantize_u8, save_gray8, save_png, to_interleaved_u8, GrayMode};
pub use rng::{mix64, rng_derive, Rng, SplitMix64};
pub use tensor_file::{read_map, read_tensor, write_map, write_tensor, RawTensor, TensorData};
