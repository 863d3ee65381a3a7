//! The bank of six intensity-parameterized distortion operators.
//!
//! Every operator is the exact identity at `alpha = 0`, clamps its output to
//! `[0, 1]`, preserves dimensions, and acts on the full frame. Arithmetic is
//! carried out in f64 and rounded to f32 once per sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{ImageBuffer, Rng};
use crate::masks::perlin2d;

pub const N_KINDS: usize = 6;

/// Operator ids double as distortion-map channel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum DistortionKind {
    GaussianBlur = 0,
    PerlinNoise = 1,
    Checkerboard = 2,
    BadPixels = 3,
    Haze = 4,
    OverSaturation = 5,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; N_KINDS] = [
        DistortionKind::GaussianBlur,
        DistortionKind::PerlinNoise,
        DistortionKind::Checkerboard,
        DistortionKind::BadPixels,
        DistortionKind::Haze,
        DistortionKind::OverSaturation,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::PerlinNoise => "perlin_noise",
            DistortionKind::Checkerboard => "checkerboard",
            DistortionKind::BadPixels => "bad_pixels",
            DistortionKind::Haze => "haze",
            DistortionKind::OverSaturation => "over_saturation",
        }
    }
}

impl From<DistortionKind> for u8 {
    fn from(kind: DistortionKind) -> u8 {
        kind as u8
    }
}

impl TryFrom<u8> for DistortionKind {
    type Error = String;

    fn try_from(id: u8) -> std::result::Result<Self, String> {
        DistortionKind::from_id(id as usize).ok_or_else(|| format!("unknown operator id {id}"))
    }
}

/// Fixed parameterization of the bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConstants {
    /// Blur standard deviation at `alpha = 1`, in pixels.
    pub blur_sigma_max: f64,
    /// Additive noise amplitude at `alpha = 1`.
    pub noise_amplitude: f64,
    /// Perlin cell size of the noise field, in pixels.
    pub noise_cell: f64,
    pub checker_amplitude: f64,
    /// Candidate checker cell sizes, drawn uniformly.
    pub checker_cells: Vec<usize>,
    /// Defective-pixel fraction at `alpha = 1`.
    pub bad_pixel_density: f64,
    pub bad_pixel_cluster_prob: f64,
    /// Haze blend factor at `alpha = 1`.
    pub haze_max: f64,
    pub haze_veil: f64,
    /// Chroma gain is `1 + saturation_gain * alpha`.
    pub saturation_gain: f64,
}

impl Default for OperatorConstants {
    fn default() -> Self {
        Self {
            blur_sigma_max: 4.0,
            noise_amplitude: 0.25,
            noise_cell: 8.0,
            checker_amplitude: 0.15,
            checker_cells: vec![1, 2, 4],
            bad_pixel_density: 0.01,
            bad_pixel_cluster_prob: 0.3,
            haze_max: 0.8,
            haze_veil: 0.9,
            saturation_gain: 2.0,
        }
    }
}

impl OperatorConstants {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("blur_sigma_max", self.blur_sigma_max),
            ("noise_amplitude", self.noise_amplitude),
            ("checker_amplitude", self.checker_amplitude),
            ("saturation_gain", self.saturation_gain),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        let unit = [
            ("bad_pixel_density", self.bad_pixel_density),
            ("bad_pixel_cluster_prob", self.bad_pixel_cluster_prob),
            ("haze_max", self.haze_max),
            ("haze_veil", self.haze_veil),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.noise_cell > 0.0) {
            return Err(Error::InvalidArgument("noise_cell must be > 0".into()));
        }
        if self.checker_cells.is_empty() || self.checker_cells.contains(&0) {
            return Err(Error::InvalidArgument("checker_cells must be non-empty and positive".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    let mut i = i;
    while i < 0 || i > last {
        i = if i < 0 { -i } else { 2 * last - i };
    }
    i as usize
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

fn map_samples(img: &ImageBuffer, mut f: impl FnMut(usize, usize, f64) -> f64) -> ImageBuffer {
    let (c, h, w) = img.dims();
    let n = h * w;
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| f(i / n, i % n, v as f64) as f32)
        .collect();
    debug_assert_eq!(c * n, img.data().len());
    ImageBuffer::from_unclamped(c, h, w, data).expect("dimensions preserved")
}

/// The operator bank with its constants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistortionBank {
    pub constants: OperatorConstants,
}

impl DistortionBank {
    pub fn new(constants: OperatorConstants) -> Result<Self> {
        constants.validate()?;
        Ok(Self { constants })
    }

    /// Separable Gaussian blur with `sigma = alpha * sigma_max` and
    /// reflect-101 borders.
    pub fn gaussian_blur(&self, img: &ImageBuffer, alpha: f64) -> ImageBuffer {
        let sigma = alpha * self.constants.blur_sigma_max;
        if alpha == 0.0 || sigma == 0.0 {
            return img.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let r = (kernel.len() / 2) as isize;
        let (c, h, w) = img.dims();
        let mut out = Vec::with_capacity(img.data().len());
        let mut tmp = vec![0.0f64; h * w];
        for ch in 0..c {
            let plane = img.plane(ch);
            for y in 0..h {
                let row = &plane[y * w..(y + 1) * w];
                for x in 0..w {
                    let mut acc = 0.0;
                    for (t, k) in kernel.iter().enumerate() {
                        acc += k * row[reflect101(x as isize + t as isize - r, w)] as f64;
                    }
                    tmp[y * w + x] = acc;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (t, k) in kernel.iter().enumerate() {
                        acc += k * tmp[reflect101(y as isize + t as isize - r, h) * w + x];
                    }
                    out.push(acc as f32);
                }
            }
        }
        ImageBuffer::from_unclamped(c, h, w, out).expect("dimensions preserved")
    }

    /// Adds `noise_amplitude * alpha * perlin2d(x / cell, y / cell, seed)`
    /// to every channel.
    pub fn perlin_noise(&self, img: &ImageBuffer, alpha: f64, seed: u64) -> ImageBuffer {
        if alpha == 0.0 {
            return img.clone();
        }
        let amp = self.constants.noise_amplitude * alpha;
        let cell = self.constants.noise_cell;
        let w = img.width();
        let field: Vec<f64> = (0..img.pixel_count())
            .map(|p| perlin2d((p % w) as f64 / cell, (p / w) as f64 / cell, seed))
            .collect();
        map_samples(img, |_, p, v| v + amp * field[p])
    }

    /// Adds a `±checker_amplitude * alpha` checkerboard whose cell size is
    /// drawn from `checker_cells`.
    pub fn checkerboard(&self, img: &ImageBuffer, alpha: f64, rng: &mut Rng) -> ImageBuffer {
        if alpha == 0.0 {
            return img.clone();
        }
        let cells = &self.constants.checker_cells;
        let cell = cells[rng.index(cells.len())];
        self.checkerboard_with_cell(img, alpha, cell)
    }

    pub fn checkerboard_with_cell(&self, img: &ImageBuffer, alpha: f64, cell: usize) -> ImageBuffer {
        if alpha == 0.0 {
            return img.clone();
        }
        let amp = self.constants.checker_amplitude * alpha;
        let w = img.width();
        map_samples(img, |_, p, v| {
            let (y, x) = (p / w, p % w);
            let sign = if (y / cell + x / cell) % 2 == 0 { 1.0 } else { -1.0 };
            v + amp * sign
        })
    }

    /// Dead (0) or hot (1) pixels covering `round(alpha * density * H * W)`
    /// pixels.
    ///
    /// Sites are drawn without replacement by a partial Fisher-Yates
    /// shuffle; each grows into a 2-3 pixel line with probability
    /// `cluster_prob`. Already defective pixels are never rewritten, and the
    /// draw sequence does not depend on `alpha`, so the defect set at a lower
    /// intensity is a subset of the set at a higher one for the same stream.
    pub fn bad_pixels(&self, img: &ImageBuffer, alpha: f64, rng: &mut Rng) -> ImageBuffer {
        let (c, h, w) = img.dims();
        let n = h * w;
        let target = (alpha * self.constants.bad_pixel_density * n as f64).round() as usize;
        if alpha == 0.0 || target == 0 {
            return img.clone();
        }
        const DIRS: [(isize, isize); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut defect: Vec<Option<f32>> = vec![None; n];
        let mut count = 0usize;
        let mut i = 0usize;
        while count < target && i < n {
            let j = i + rng.index(n - i);
            order.swap(i, j);
            let site = order[i] as usize;
            i += 1;
            let value = if rng.bernoulli(0.5) { 0.0 } else { 1.0 };
            let extra = if rng.bernoulli(self.constants.bad_pixel_cluster_prob) {
                1 + rng.index(2)
            } else {
                0
            };
            let (dy, dx) = DIRS[rng.index(4)];
            let (y, x) = ((site / w) as isize, (site % w) as isize);
            for step in 0..=extra as isize {
                let (py, px) = (y + step * dy, x + step * dx);
                if py < 0 || px < 0 || py >= h as isize || px >= w as isize {
                    break;
                }
                let p = py as usize * w + px as usize;
                if defect[p].is_none() && count < target {
                    defect[p] = Some(value);
                    count += 1;
                }
            }
        }
        let mut data = img.data().to_vec();
        for ch in 0..c {
            for (p, d) in defect.iter().enumerate() {
                if let Some(v) = d {
                    data[ch * n + p] = *v;
                }
            }
        }
        ImageBuffer::new(c, h, w, data).expect("defect values are in range")
    }

    /// Blends toward a uniform veil: `(1 - h) * x + h * veil`, `h = alpha * haze_max`.
    pub fn haze(&self, img: &ImageBuffer, alpha: f64) -> ImageBuffer {
        if alpha == 0.0 {
            return img.clone();
        }
        let hz = alpha * self.constants.haze_max;
        let veil = self.constants.haze_veil;
        map_samples(img, |_, _, v| (1.0 - hz) * v + hz * veil)
    }

    /// Scales each pixel's deviation from its channel mean by
    /// `1 + saturation_gain * alpha`.
    pub fn oversaturate(&self, img: &ImageBuffer, alpha: f64) -> ImageBuffer {
        if alpha == 0.0 {
            return img.clone();
        }
        let gain = 1.0 + self.constants.saturation_gain * alpha;
        let (c, _, _) = img.dims();
        let n = img.pixel_count();
        let gray: Vec<f64> = (0..n)
            .map(|p| (0..c).map(|ch| img.data()[ch * n + p] as f64).sum::<f64>() / c as f64)
            .collect();
        map_samples(img, |_, p, v| gray[p] + gain * (v - gray[p]))
    }

    /// Dispatches to the operator for `kind`. Stochastic kinds consume `rng`.
    pub fn apply(&self, kind: DistortionKind, img: &ImageBuffer, alpha: f64, rng: &mut Rng) -> Result<ImageBuffer> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("intensity {alpha} outside [0, 1]")));
        }
        Ok(match kind {
            DistortionKind::GaussianBlur => self.gaussian_blur(img, alpha),
            DistortionKind::PerlinNoise => {
                let seed = rng.next_u64();
                self.perlin_noise(img, alpha, seed)
            }
            DistortionKind::Checkerboard => self.checkerboard(img, alpha, rng),
            DistortionKind::BadPixels => self.bad_pixels(img, alpha, rng),
            DistortionKind::Haze => self.haze(img, alpha),
            DistortionKind::OverSaturation => self.oversaturate(img, alpha),
        })
    }
}

/// [`DistortionBank::apply`] with default constants.
pub fn apply_distortion(kind: DistortionKind, img: &ImageBuffer, alpha: f64, rng: &mut Rng) -> Result<ImageBuffer> {
    DistortionBank::default().apply(kind, img, alpha, rng)
}

/// Root-mean-square difference over all samples.
pub fn distortion_magnitude(orig: &ImageBuffer, distorted: &ImageBuffer) -> Result<f64> {
    if !orig.same_dims(distorted) {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", orig.dims(), distorted.dims())));
    }
    let sq: f64 = orig
        .data()
        .iter()
        .zip(distorted.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok((sq / orig.data().len() as f64).sqrt())
}
