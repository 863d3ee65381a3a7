//! Procedural reference scenes.
//!
//! A scene is a warped Voronoi partition into a handful of regions, each
//! filled with its own texture family (smooth gradient, fractal foliage,
//! woven stripes, fine grain) under a low-frequency illumination field.
//! The region map doubles as a semantic label map. Samples are quantized to
//! multiples of 1/255 so a scene survives an 8-bit PNG round trip exactly.

use crate::error::Result;
use crate::imagecore::{ImageBuffer, Rng};
use crate::masks::{perlin2d, MaskSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: ImageBuffer,
    /// Per-pixel region id, row-major.
    pub labels: Vec<u16>,
}

impl Scene {
    pub fn masks(&self) -> Result<MaskSet> {
        MaskSet::from_class_ids(self.image.height(), self.image.width(), &self.labels)
    }
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Smooth,
    Foliage,
    Stripes,
    Grain,
}

struct Region {
    texture: Texture,
    color: [f64; 3],
    contrast: f64,
    scale: f64,
    angle: f64,
    seed: u64,
}

fn fbm(x: f64, y: f64, seed: u64, octaves: usize) -> f64 {
    let (mut amp, mut freq, mut sum, mut norm) = (1.0, 1.0, 0.0, 0.0);
    for o in 0..octaves {
        sum += amp * perlin2d(x * freq, y * freq, seed.wrapping_add(o as u64));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

impl Region {
    fn random(rng: &mut Rng) -> Self {
        let texture = [Texture::Smooth, Texture::Foliage, Texture::Stripes, Texture::Grain][rng.index(4)];
        Region {
            texture,
            color: [rng.uniform(0.12, 0.85), rng.uniform(0.12, 0.85), rng.uniform(0.12, 0.85)],
            contrast: rng.uniform(0.08, 0.28),
            scale: rng.uniform(2.5, 9.0),
            angle: rng.uniform(0.0, std::f64::consts::PI),
            seed: rng.next_u64(),
        }
    }

    fn value(&self, c: usize, y: f64, x: f64, h: f64) -> f64 {
        let base = self.color[c];
        let t = match self.texture {
            Texture::Smooth => 0.6 * (y / h - 0.5) + 0.4 * fbm(x / 48.0, y / 48.0, self.seed, 2),
            Texture::Foliage => {
                let v = fbm(x / self.scale, y / self.scale, self.seed, 4);
                v + 0.35 * perlin2d(x / (self.scale * 0.5), y / (self.scale * 0.5), self.seed ^ (c as u64 + 1))
            }
            Texture::Stripes => {
                let u = x * self.angle.cos() + y * self.angle.sin();
                0.7 * (u / self.scale * std::f64::consts::TAU / 2.0).sin() + 0.3 * fbm(x / 6.0, y / 6.0, self.seed, 2)
            }
            Texture::Grain => fbm(x / 1.7, y / 1.7, self.seed, 2) + 0.3 * fbm(x / 20.0, y / 20.0, self.seed ^ 7, 2),
        };
        base + self.contrast * t
    }
}

/// Generates an `height x width` RGB scene from `rng`.
pub fn generate_scene(height: usize, width: usize, rng: &mut Rng) -> Scene {
    let n_regions = 3 + rng.index(4);
    let sites: Vec<(f64, f64)> = (0..n_regions)
        .map(|_| (rng.uniform(0.0, height as f64), rng.uniform(0.0, width as f64)))
        .collect();
    let regions: Vec<Region> = (0..n_regions).map(|_| Region::random(rng)).collect();
    let warp_seed = rng.next_u64();
    let light_seed = rng.next_u64();
    let warp_scale = (height.min(width) as f64 / 3.0).max(4.0);
    let warp_amp = height.min(width) as f64 / 6.0;

    let mut labels = vec![0u16; height * width];
    for y in 0..height {
        for x in 0..width {
            let (fy, fx) = (y as f64, x as f64);
            let wy = fy + warp_amp * perlin2d(fx / warp_scale, fy / warp_scale, warp_seed);
            let wx = fx + warp_amp * perlin2d(fx / warp_scale, fy / warp_scale, warp_seed ^ 0x5555);
            let nearest = sites
                .iter()
                .enumerate()
                .map(|(k, &(sy, sx))| (k, (wy - sy).powi(2) + (wx - sx).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
                .unwrap_or(0);
            labels[y * width + x] = nearest as u16;
        }
    }

    let h = height as f64;
    let light_scale = (height.max(width) as f64 / 1.5).max(4.0);
    let image = ImageBuffer::from_fn(3, height, width, |c, y, x| {
        let (fy, fx) = (y as f64, x as f64);
        let region = &regions[labels[y * width + x] as usize];
        let light = 0.88 + 0.12 * perlin2d(fx / light_scale, fy / light_scale, light_seed);
        let v = (region.value(c, fy, fx, h) * light).clamp(0.0, 1.0);
        ((v * 255.0).round() / 255.0) as f32
    });
    Scene { image, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::quantize_u8;

    #[test]
    fn scenes_are_deterministic_and_quantized() {
        let a = generate_scene(48, 40, &mut Rng::new(3));
        let b = generate_scene(48, 40, &mut Rng::new(3));
        assert_eq!(a, b);
        for &v in a.image.data() {
            assert_eq!(quantize_u8(v) as f32 / 255.0, v);
        }
        let masks = a.masks().unwrap();
        assert!(masks.len() >= 1 && masks.is_partition());
    }

    #[test]
    fn scenes_have_texture() {
        let s = generate_scene(64, 64, &mut Rng::new(10));
        let l = s.image.luma();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        let var = l.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / l.len() as f64;
        assert!(var.sqrt() > 0.02);
    }
}
