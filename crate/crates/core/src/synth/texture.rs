//! Procedural fills for synthetic primitives.
//!
//! Every fill is a pure function of the pixel coordinate plus a per-instance
//! offset, evaluated directly to 8-bit RGB so rendered pixels can be compared
//! with the fill bit for bit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    Cork,
    AluminumFoil,
    Cotton,
    OrangePeel,
    Sponge,
}

/// How a primitive is painted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    Texture(Texture),
    Solid([u8; 3]),
}

pub const GREEN: [u8; 3] = [40, 170, 60];
pub const BLUE: [u8; 3] = [40, 80, 210];
pub const GRAY: [u8; 3] = [128, 128, 128];
pub const RED: [u8; 3] = [210, 40, 40];
pub const YELLOW: [u8; 3] = [230, 210, 30];
pub const CYAN: [u8; 3] = [30, 200, 210];
pub const MAGENTA: [u8; 3] = [200, 50, 190];
pub const PURPLE: [u8; 3] = [110, 40, 160];

fn hash2(x: i64, y: i64, salt: u64) -> u64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^ (h >> 33)
}

/// Uniform value in `[0, 1)` attached to a lattice point.
fn lattice(x: i64, y: i64, salt: u64) -> f64 {
    (hash2(x, y, salt) >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise with feature size `cell` pixels.
fn value_noise(x: f64, y: f64, cell: f64, salt: u64) -> f64 {
    let (fx, fy) = (x / cell, y / cell);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - x0, fy - y0);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(tx), s(ty));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(ix, iy, salt);
    let b = lattice(ix + 1, iy, salt);
    let c = lattice(ix, iy + 1, salt);
    let d = lattice(ix + 1, iy + 1, salt);
    let top = a + (b - a) * sx;
    let bot = c + (d - c) * sx;
    top + (bot - top) * sy
}

/// Distance to the nearest jittered feature point on a grid of `cell` pixels.
fn cellular(x: f64, y: f64, cell: f64, salt: u64) -> f64 {
    let (gx, gy) = ((x / cell).floor() as i64, (y / cell).floor() as i64);
    let mut best = f64::MAX;
    for oy in -1..=1 {
        for ox in -1..=1 {
            let (cx, cy) = (gx + ox, gy + oy);
            let px = (cx as f64 + lattice(cx, cy, salt)) * cell;
            let py = (cy as f64 + lattice(cx, cy, salt ^ 0xABCD)) * cell;
            best = best.min(((px - x).powi(2) + (py - y).powi(2)).sqrt());
        }
    }
    best / cell
}

fn shade(base: [f64; 3], k: f64) -> [u8; 3] {
    base.map(|v| (v * k).round().clamp(0.0, 255.0) as u8)
}

impl Texture {
    pub fn color_at(&self, row: u32, col: u32, offset: (u32, u32)) -> [u8; 3] {
        let y = f64::from(row) + f64::from(offset.0);
        let x = f64::from(col) + f64::from(offset.1);
        match self {
            Texture::Cork => {
                let n = 0.6 * value_noise(x, y, 5.0, 11) + 0.4 * value_noise(x, y, 2.0, 12);
                let pore = if lattice(x as i64, y as i64, 13) > 0.93 {
                    0.55
                } else {
                    1.0
                };
                shade([120.0, 82.0, 50.0], (0.75 + 0.45 * n) * pore)
            }
            Texture::AluminumFoil => {
                let crinkle = value_noise(x, y, 3.0, 21);
                let speck = lattice(x as i64, y as i64, 22);
                shade([188.0, 190.0, 196.0], 0.6 + 0.35 * crinkle + 0.3 * speck)
            }
            Texture::Cotton => {
                let fiber = ((x + 0.6 * y) * 1.3 + 3.0 * value_noise(x, y, 6.0, 31)).sin();
                shade([232.0, 228.0, 218.0], 0.86 + 0.1 * fiber)
            }
            Texture::OrangePeel => {
                let bump = value_noise(x, y, 2.5, 41);
                let dimple = cellular(x, y, 4.0, 42);
                shade(
                    [250.0, 150.0, 40.0],
                    0.72 + 0.2 * bump + 0.18 * dimple.min(1.0),
                )
            }
            Texture::Sponge => {
                let d = cellular(x, y, 5.0, 51);
                let hole = if d < 0.28 { 0.55 } else { 1.0 };
                shade(
                    [222.0, 204.0, 96.0],
                    (0.82 + 0.18 * value_noise(x, y, 3.0, 52)) * hole,
                )
            }
        }
    }
}

impl Fill {
    pub fn color_at(&self, row: u32, col: u32, offset: (u32, u32)) -> [u8; 3] {
        match self {
            Fill::Texture(t) => t.color_at(row, col, offset),
            Fill::Solid(c) => *c,
        }
    }
}
