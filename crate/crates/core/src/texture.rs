//! Procedural aerial-like source images: multi-octave value noise for ground
//! texture, filled rectangles for buildings and straight bands for roads.

use rand::Rng;

use crate::error::Result;
use crate::imaging::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureConfig {
    pub size: usize,
    pub channels: usize,
    pub octaves: usize,
    pub buildings: usize,
    pub roads: usize,
}

impl TextureConfig {
    pub fn new(size: usize) -> Self {
        Self { size, channels: 1, octaves: 3, buildings: 6, roads: 2 }
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise in `[0, 1]` with lattice spacing `cell` pixels.
fn value_noise<R: Rng + ?Sized>(size: usize, cell: usize, rng: &mut R) -> Vec<f64> {
    let n = size / cell + 2;
    let lattice: Vec<f64> = (0..n * n).map(|_| rng.gen()).collect();
    let mut out = vec![0.0; size * size];
    for r in 0..size {
        let fy = r as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for c in 0..size {
            let fx = c as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let at = |y: usize, x: usize| lattice[y * n + x];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out[r * size + c] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

pub fn generate_texture<R: Rng + ?Sized>(cfg: &TextureConfig, rng: &mut R) -> Result<Image> {
    let size = cfg.size;
    let mut base = vec![0.0; size * size];
    let mut amp = 0.5;
    let mut norm = 0.0;
    let mut cell = (size / 4).max(2);
    for _ in 0..cfg.octaves {
        let layer = value_noise(size, cell, rng);
        for (b, v) in base.iter_mut().zip(layer) {
            *b += amp * v;
        }
        norm += amp;
        amp *= 0.5;
        cell = (cell / 2).max(1);
    }
    base.iter_mut().for_each(|v| *v = 0.15 + 0.5 * *v / norm);

    for _ in 0..cfg.roads {
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let (nx, ny) = (angle.cos(), angle.sin());
        let offset = rng.gen_range(-0.3..0.3) * size as f64;
        let half_width = rng.gen_range(0.6..1.8);
        let tone = rng.gen_range(0.05..0.2);
        let center = size as f64 / 2.0;
        for r in 0..size {
            for c in 0..size {
                let d = (c as f64 - center) * nx + (r as f64 - center) * ny - offset;
                if d.abs() <= half_width {
                    base[r * size + c] = tone;
                }
            }
        }
    }

    for _ in 0..cfg.buildings {
        let bh = rng.gen_range(size / 10..=size / 4).max(2);
        let bw = rng.gen_range(size / 10..=size / 4).max(2);
        let r0 = rng.gen_range(0..size - bh);
        let c0 = rng.gen_range(0..size - bw);
        let roof = rng.gen_range(0.55..0.95);
        for r in r0..r0 + bh {
            for c in c0..c0 + bw {
                let edge = r == r0 || c == c0 || r == r0 + bh - 1 || c == c0 + bw - 1;
                base[r * size + c] = if edge { roof * 0.6 } else { roof };
            }
        }
    }

    let tint: Vec<f64> = (0..cfg.channels).map(|_| rng.gen_range(0.85..1.0)).collect();
    Image::from_fn(size, size, cfg.channels, |r, c, k| base[r * size + c] * if cfg.channels == 1 { 1.0 } else { tint[k] })
}
