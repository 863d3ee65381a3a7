//! Classic 2D gradient noise.
//!
//! Lattice corner `(i, j)` gets one of eight fixed unit gradients chosen by
//! `mix64(seed ^ mix64(i ^ mix64(j)))` (coordinates as two's-complement
//! u64), low three bits. Corner dot products are blended with the quintic
//! fade `6t^5 - 15t^4 + 10t^3`, so the noise is zero at every lattice point.

use crate::imagecore::mix64;

const DIAG: f64 = std::f64::consts::FRAC_1_SQRT_2;

const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (DIAG, DIAG),
    (-DIAG, DIAG),
    (DIAG, -DIAG),
    (-DIAG, -DIAG),
];

#[inline]
pub fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn gradient(seed: u64, i: i64, j: i64) -> (f64, f64) {
    let h = mix64(seed ^ mix64(i as u64 ^ mix64(j as u64)));
    GRADIENTS[(h & 7) as usize]
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Noise value in `[-1, 1]` (in fact within `±1/sqrt(2)`).
pub fn perlin2d(x: f64, y: f64, seed: u64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (i, j) = (x0 as i64, y0 as i64);
    let dot = |di: i64, dj: i64| {
        let (gx, gy) = gradient(seed, i + di, j + dj);
        gx * (fx - di as f64) + gy * (fy - dj as f64)
    };
    let (u, v) = (fade(fx), fade(fy));
    let bottom = lerp(dot(0, 0), dot(1, 0), u);
    let top = lerp(dot(0, 1), dot(1, 1), u);
    lerp(bottom, top, v)
}

/// Noise sampled at pixel centres `(x / cell, y / cell)`, row-major.
pub fn noise_field(height: usize, width: usize, cell_size: f64, seed: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            out.push(perlin2d(x as f64 / cell_size, y as f64 / cell_size, seed));
        }
    }
    out
}
