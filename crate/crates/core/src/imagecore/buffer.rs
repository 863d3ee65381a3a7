use crate::error::{Error, Result};

/// Planar floating-point raster with samples in `[0, 1]`.
///
/// Layout is channel-major: sample `(c, y, x)` lives at `(c * H + y) * W + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// `N x H x W` map of per-type distortion intensities in `[0, 1]`.
///
/// Channel `j` corresponds to [`crate::DistortionKind`] id `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMap {
    n_types: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

fn check_layout(what: &str, c: usize, h: usize, w: usize, len: usize) -> Result<()> {
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::DimMismatch(format!("{what} has a zero dimension ({c}x{h}x{w})")));
    }
    if c * h * w != len {
        return Err(Error::DimMismatch(format!(
            "{what} {c}x{h}x{w} needs {} samples, got {len}",
            c * h * w
        )));
    }
    Ok(())
}

fn check_unit_range(what: &str, data: &[f32]) -> Result<()> {
    if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!("{what} sample {i} = {v}")));
    }
    Ok(())
}

macro_rules! planar_accessors {
    ($ty:ident, $count:ident) => {
        impl $ty {
            pub fn $count(&self) -> usize {
                self.$count
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn pixel_count(&self) -> usize {
                self.height * self.width
            }

            /// `(C or N, H, W)`.
            pub fn dims(&self) -> (usize, usize, usize) {
                (self.$count, self.height, self.width)
            }

            pub fn data(&self) -> &[f32] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f32> {
                self.data
            }

            pub fn plane(&self, c: usize) -> &[f32] {
                let n = self.pixel_count();
                &self.data[c * n..(c + 1) * n]
            }

            #[inline]
            pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
                self.data[(c * self.height + y) * self.width + x]
            }
        }
    };
}

planar_accessors!(ImageBuffer, channels);
planar_accessors!(DistortionMap, n_types);

impl ImageBuffer {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_layout("image", channels, height, width, data.len())?;
        check_unit_range("image", &data)?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds from samples that may leave `[0, 1]`; they are clamped.
    pub fn from_unclamped(channels: usize, height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        check_layout("image", channels, height, width, data.len())?;
        for v in &mut data {
            // NaN maps to 0 so the range invariant holds unconditionally.
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value), "fill value {value} outside [0, 1]");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Samples `f(c, y, x)`, clamped to `[0, 1]`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::from_unclamped(channels, height, width, data).expect("from_fn layout is consistent")
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> bool {
        self.dims() == other.dims()
    }

    /// Rows `y0..y0+h`, columns `x0..x0+w`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::DimMismatch(format!(
                "crop {h}x{w} at ({y0}, {x0}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Ok(Self {
            channels: self.channels,
            height: h,
            width: w,
            data,
        })
    }

    /// Rec. 601 luma plane. Requires three channels.
    pub fn luma(&self) -> Vec<f64> {
        assert_eq!(self.channels, 3, "luma needs an RGB image");
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
            .collect()
    }
}

impl DistortionMap {
    pub fn new(n_types: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_layout("distortion map", n_types, height, width, data.len())?;
        check_unit_range("distortion map", &data)?;
        Ok(Self {
            n_types,
            height,
            width,
            data,
        })
    }

    pub fn zeros(n_types: usize, height: usize, width: usize) -> Self {
        Self {
            n_types,
            height,
            width,
            data: vec![0.0; n_types * height * width],
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// `1 - Y`, the target for the reversed pair.
    pub fn complement(&self) -> Self {
        Self {
            n_types: self.n_types,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// At most one non-zero channel at every pixel.
    pub fn is_sparse(&self) -> bool {
        (0..self.pixel_count()).all(|p| {
            (0..self.n_types)
                .filter(|&j| self.data[j * self.pixel_count() + p] != 0.0)
                .count()
                <= 1
        })
    }

    /// Widened copy of the samples.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}
