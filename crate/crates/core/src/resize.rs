//! Per-channel spatial upscaling with half-pixel-center sampling.
//!
//! Output pixel `dst` samples the source at
//! `src = (dst + 0.5) * (src_dim / dst_dim) - 0.5`, clamped to
//! `[0, src_dim - 1]`. Neighbour taps that fall outside the source are
//! clamped to the border.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Interpolation kernel used by [`upscale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpscaleMode {
    Nearest,
    #[default]
    Bilinear,
    Bicubic,
}

impl UpscaleMode {
    pub const ALL: [UpscaleMode; 3] = [Self::Nearest, Self::Bilinear, Self::Bicubic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Nearest => "nearest",
            Self::Bilinear => "bilinear",
            Self::Bicubic => "bicubic",
        }
    }
}

impl fmt::Display for UpscaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpscaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(Error::invalid(format!("unknown upscale mode '{other}'"))),
        }
    }
}

/// Keys cubic convolution parameter (Catmull-Rom).
const KEYS_A: f64 = -0.5;

fn keys_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        (KEYS_A + 2.0) * x * x * x - (KEYS_A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        KEYS_A * x * x * x - 5.0 * KEYS_A * x * x + 8.0 * KEYS_A * x - 4.0 * KEYS_A
    } else {
        0.0
    }
}

/// Source taps and weights for each output coordinate along one axis.
struct AxisTaps {
    width: usize,
    idx: Vec<usize>,
    weight: Vec<f64>,
}

impl AxisTaps {
    fn build(src: usize, dst: usize, mode: UpscaleMode) -> Self {
        let scale = src as f64 / dst as f64;
        let max = (src - 1) as f64;
        let width = match mode {
            UpscaleMode::Nearest => 1,
            UpscaleMode::Bilinear => 2,
            UpscaleMode::Bicubic => 4,
        };
        let mut idx = Vec::with_capacity(dst * width);
        let mut weight = Vec::with_capacity(dst * width);
        let clamp_idx = |i: i64| i.clamp(0, src as i64 - 1) as usize;
        for d in 0..dst {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            match mode {
                UpscaleMode::Nearest => {
                    idx.push(clamp_idx((s + 0.5).floor() as i64));
                    weight.push(1.0);
                }
                UpscaleMode::Bilinear => {
                    let i0 = s.floor();
                    let t = s - i0;
                    idx.push(clamp_idx(i0 as i64));
                    idx.push(clamp_idx(i0 as i64 + 1));
                    weight.push(1.0 - t);
                    weight.push(t);
                }
                UpscaleMode::Bicubic => {
                    let i0 = s.floor();
                    let t = s - i0;
                    for k in -1..=2i64 {
                        idx.push(clamp_idx(i0 as i64 + k));
                        weight.push(keys_kernel(t - k as f64));
                    }
                }
            }
        }
        Self { width, idx, weight }
    }

    #[inline]
    fn taps(&self, d: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = d * self.width..(d + 1) * self.width;
        self.idx[r.clone()]
            .iter()
            .copied()
            .zip(self.weight[r].iter().copied())
    }
}

/// Resamples `src` to `target_h × target_w`, channel by channel.
///
/// Target dims equal to the source dims return an exact copy for every mode.
pub fn upscale(
    src: &Tensor3,
    target_h: usize,
    target_w: usize,
    mode: UpscaleMode,
) -> Result<Tensor3> {
    let (h, w, c) = src.shape();
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::invalid(format!(
            "cannot upscale empty tensor {h}x{w}x{c}"
        )));
    }
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid(format!(
            "target dims must be positive, got {target_h}x{target_w}"
        )));
    }
    if (h, w) == (target_h, target_w) {
        return Ok(src.clone());
    }

    let rows = AxisTaps::build(h, target_h, mode);
    let cols = AxisTaps::build(w, target_w, mode);
    let data = src.data();
    let mut out = vec![0.0f32; target_h * target_w * c];
    let mut acc = vec![0.0f64; c];
    for r in 0..target_h {
        for col in 0..target_w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (sr, wr) in rows.taps(r) {
                for (sc, wc) in cols.taps(col) {
                    let wgt = wr * wc;
                    if wgt == 0.0 {
                        continue;
                    }
                    let base = (sr * w + sc) * c;
                    for (a, v) in acc.iter_mut().zip(&data[base..base + c]) {
                        *a += wgt * f64::from(*v);
                    }
                }
            }
            let base = (r * target_w + col) * c;
            for (o, a) in out[base..base + c].iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
    }
    Ok(Tensor3::from_raw(target_h, target_w, c, out))
}
