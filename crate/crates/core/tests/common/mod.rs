//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use eclad::eclad::{DescriptorField, FitConfig, GradientField, LayerInfo};
use eclad::net::{Architecture, NetworkParams};
use eclad::{Mask2, Result, Tensor3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Conv (same padding) + bias + ReLU + 2×2 max-pool, all in f64.
pub fn stage_f64(
    x: &[f64],
    size: usize,
    cin: usize,
    k: usize,
    cout: usize,
    kernel: &[f32],
    bias: &[f32],
) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let mut act = vec![0.0f64; size * size * cout];
    for r in 0..size {
        for c in 0..size {
            for co in 0..cout {
                let mut v = f64::from(bias[co]);
                for ky in 0..k {
                    for kx in 0..k {
                        let (ir, ic) = (
                            r as isize + ky as isize - pad,
                            c as isize + kx as isize - pad,
                        );
                        if ir < 0 || ic < 0 || ir >= size as isize || ic >= size as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let xv = x[(ir as usize * size + ic as usize) * cin + ci];
                            let w = kernel[((ky * k + kx) * cin + ci) * cout + co];
                            v += xv * f64::from(w);
                        }
                    }
                }
                act[(r * size + c) * cout + co] = v.max(0.0);
            }
        }
    }
    let half = size / 2;
    let mut out = vec![0.0; half * half * cout];
    for r in 0..half {
        for c in 0..half {
            for co in 0..cout {
                let mut m = f64::NEG_INFINITY;
                for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    m = m.max(act[((2 * r + dr) * size + 2 * c + dc) * cout + co]);
                }
                out[(r * half + c) * cout + co] = m;
            }
        }
    }
    out
}

fn run_stage(p: &NetworkParams, i: usize, x: &[f64]) -> Vec<f64> {
    let a = &p.arch;
    stage_f64(
        x,
        a.stage_size(i) * 2,
        a.stage_in_channels(i),
        a.stages[i].kernel,
        a.stages[i].out_channels,
        &p.stages[i].kernel,
        &p.stages[i].bias,
    )
}

/// Pooled output of every stage for `image`.
pub fn stage_outputs_f64(p: &NetworkParams, image: &Tensor3) -> Vec<Vec<f64>> {
    let mut x: Vec<f64> = image.data().iter().map(|v| f64::from(*v)).collect();
    let mut outs = Vec::new();
    for i in 0..p.arch.stages.len() {
        x = run_stage(p, i, &x);
        outs.push(x.clone());
    }
    outs
}

/// Logits computed from the pooled output `x` of stage `from` onward.
pub fn logits_from_f64(p: &NetworkParams, from: usize, x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    for i in from + 1..p.arch.stages.len() {
        x = run_stage(p, i, &x);
    }
    let nin = x.len();
    (0..p.arch.n_classes)
        .map(|k| {
            f64::from(p.head_bias[k])
                + x.iter()
                    .zip(&p.head_weight[k * nin..(k + 1) * nin])
                    .map(|(a, w)| a * f64::from(*w))
                    .sum::<f64>()
        })
        .collect()
}

/// Central difference of logit `k` with respect to element `e` of stage `from`'s output.
///
/// The network is piecewise linear downstream of a tap, so the difference is exact
/// unless the step crosses a ReLU or pool kink; steps shrink until two agree.
pub fn finite_difference(p: &NetworkParams, from: usize, x: &[f64], e: usize, k: usize) -> f64 {
    let fd = |h: f64| {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[e] += h;
        minus[e] -= h;
        (logits_from_f64(p, from, &plus)[k] - logits_from_f64(p, from, &minus)[k]) / (2.0 * h)
    };
    let mut h = 1e-3;
    let mut prev = fd(h);
    for _ in 0..6 {
        h /= 10.0;
        let next = fd(h);
        if (next - prev).abs() <= 1e-9 * next.abs().max(1.0) {
            return next;
        }
        prev = next;
    }
    prev
}

/// Gradient-check relative error; magnitudes below 1e-3 are compared on that scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// A small random network with non-zero biases.
pub fn random_net(size: usize, channels: &[usize], n_classes: usize, seed: u64) -> NetworkParams {
    let arch = Architecture::with_channels(size, channels, n_classes);
    let mut p = eclad::net::init(&arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for s in &mut p.stages {
        for b in &mut s.bias {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    for b in &mut p.head_bias {
        *b = rng.random_range(-0.2..0.2);
    }
    p
}

pub fn random_image(size: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..size * size * 3).map(|_| rng.random::<f32>()).collect();
    Tensor3::new(size, size, 3, data).unwrap()
}

/// Nearest-seed distance by exhaustive scan.
pub fn brute_edt(m: &Mask2) -> Vec<f64> {
    let (h, w) = m.dims();
    let seeds: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| m.get(r, c))
        .collect();
    let cap = ((h * h + w * w) as f64).sqrt();
    (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| {
            seeds
                .iter()
                .map(|&(sr, sc)| {
                    let (dr, dc) = (r as f64 - sr as f64, c as f64 - sc as f64);
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(cap, f64::min)
        })
        .collect()
}

pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize, density: f64) -> Mask2 {
    Mask2::from_fn(h, w, |_, _| rng.random_bool(density))
}

/// The hand-built scoring toy: two 4×4 images (one per class), c* = 3.
pub struct Toy {
    pub d: Vec<DescriptorField>,
    /// `g[i][k]`
    pub g: Vec<Vec<GradientField>>,
    /// `masks[i][j]`, three concepts per image.
    pub masks: Vec<Vec<Mask2>>,
    pub labels: Vec<usize>,
}

pub const TOY_SIZE: usize = 4;
pub const TOY_C: usize = 3;

fn toy_layers() -> Vec<LayerInfo> {
    vec![
        LayerInfo {
            name: "stage1".into(),
            channels: 2,
        },
        LayerInfo {
            name: "stage2".into(),
            channels: 1,
        },
    ]
}

/// Descriptor value of image `i` at pixel `px`, channel `c`: small integers.
pub fn toy_d(i: usize, px: usize, c: usize) -> f32 {
    ((px * 3 + c * 5 + i * 7) % 5) as f32 - 2.0
}

/// Gradient value toward class `k`: multiples of 0.5.
pub fn toy_g(i: usize, k: usize, px: usize, c: usize) -> f32 {
    ((px * 7 + c + k * 3 + i) % 4) as f32 * 0.5 - 0.75
}

impl Toy {
    pub fn new(grad_scale: f32) -> Self {
        let n = TOY_SIZE * TOY_SIZE;
        let field = |f: &dyn Fn(usize, usize) -> f32| {
            let data = (0..n)
                .flat_map(|px| (0..TOY_C).map(move |c| (px, c)))
                .map(|(px, c)| f(px, c))
                .collect();
            Tensor3::new(TOY_SIZE, TOY_SIZE, TOY_C, data).unwrap()
        };
        let d = (0..2)
            .map(|i| DescriptorField {
                field: field(&|px, c| toy_d(i, px, c)),
                layers: toy_layers(),
            })
            .collect();
        let g = (0..2)
            .map(|i| {
                (0..2)
                    .map(|k| GradientField {
                        field: field(&|px, c| toy_g(i, k, px, c) * grad_scale),
                        layers: toy_layers(),
                        class_k: k,
                    })
                    .collect()
            })
            .collect();
        // Image 0 splits by rows, image 1 by columns: 4, 4 and 8 pixels.
        let masks = vec![
            vec![
                Mask2::from_fn(4, 4, |r, _| r == 0),
                Mask2::from_fn(4, 4, |r, _| r == 1),
                Mask2::from_fn(4, 4, |r, _| r >= 2),
            ],
            vec![
                Mask2::from_fn(4, 4, |_, c| c == 0),
                Mask2::from_fn(4, 4, |_, c| c == 1),
                Mask2::from_fn(4, 4, |_, c| c >= 2),
            ],
        ];
        Self {
            d,
            g,
            masks,
            labels: vec![0, 1],
        }
    }

    /// CS by enumerating every pixel, straight from the definition.
    pub fn enumerate_cs(&self, grad_scale: f64) -> Vec<Vec<f64>> {
        let s = |i: usize, k: usize, px: usize| -> f64 {
            (0..TOY_C)
                .map(|c| f64::from(toy_d(i, px, c)) * f64::from(toy_g(i, k, px, c)) * grad_scale)
                .sum()
        };
        let mean_over = |j: usize, k: usize, in_class: bool| -> f64 {
            let vals: Vec<f64> = (0..2)
                .filter(|&i| (self.labels[i] == k) == in_class)
                .flat_map(|i| {
                    let m = &self.masks[i][j];
                    (0..TOY_SIZE * TOY_SIZE)
                        .filter(move |px| m.bits()[*px])
                        .map(move |px| s(i, k, px))
                })
                .collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        (0..3)
            .map(|j| {
                (0..2)
                    .map(|k| mean_over(j, k, true) - mean_over(j, k, false))
                    .collect()
            })
            .collect()
    }
}

/// RI and k_of straight from their definition.
pub fn enumerate_ri(cs: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let max = cs.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let k_of: Vec<usize> = cs
        .iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k].abs() > row[best].abs() {
                    best = k;
                }
            }
            best
        })
        .collect();
    let ri = cs
        .iter()
        .zip(&k_of)
        .map(|(row, &k)| if max == 0.0 { 0.0 } else { row[k] / max })
        .collect();
    (ri, k_of)
}

pub fn desc_field(h: usize, w: usize, c: usize, data: Vec<f32>) -> DescriptorField {
    DescriptorField {
        field: Tensor3::new(h, w, c, data).unwrap(),
        layers: vec![LayerInfo {
            name: "stage1".into(),
            channels: c,
        }],
    }
}

pub fn random_fields(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Vec<DescriptorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let data = (0..h * w * c)
                .map(|_| rng.random_range(-3.0f32..5.0))
                .collect();
            desc_field(h, w, c, data)
        })
        .collect()
}

pub fn stream(
    fields: &[DescriptorField],
) -> impl Fn() -> std::vec::IntoIter<Result<DescriptorField>> + '_ {
    move || {
        fields
            .iter()
            .cloned()
            .map(Ok)
            .collect::<Vec<_>>()
            .into_iter()
    }
}

pub fn fit_cfg(n_c: usize, n_i: usize, seed: u64) -> FitConfig {
    FitConfig {
        n_c,
        n_i,
        seed,
        ..FitConfig::default()
    }
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Three 10-D Gaussian blobs (σ = 0.05, centres at least 1 apart), shuffled over ten images.
pub fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<DescriptorField>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = loop {
        let c: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..10).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        if dist(&c[0], &c[1]) >= 1.0 && dist(&c[0], &c[2]) >= 1.0 && dist(&c[1], &c[2]) >= 1.0 {
            break c;
        }
    };
    let mut pts: Vec<Vec<f32>> = (0..900)
        .map(|i| {
            centers[i % 3]
                .iter()
                .map(|m| (m + 0.05 * gaussian(&mut rng)) as f32)
                .collect()
        })
        .collect();
    pts.shuffle(&mut rng);
    let fields: Vec<DescriptorField> = pts
        .chunks(90)
        .map(|chunk| desc_field(9, 10, 10, chunk.concat()))
        .collect();
    (centers, fields)
}

/// One classic Lloyd iteration from the given seeds.
pub fn lloyd_step(points: &[Vec<f32>], seeds: &[Vec<f64>]) -> Vec<Vec<f32>> {
    let mut sums = vec![vec![0.0f64; seeds[0].len()]; seeds.len()];
    let mut counts = vec![0usize; seeds.len()];
    for x in points {
        let d: Vec<f64> = seeds
            .iter()
            .map(|s| {
                x.iter()
                    .zip(s)
                    .map(|(a, b)| (f64::from(*a) - b).powi(2))
                    .sum()
            })
            .collect();
        let mut j = 0;
        for q in 1..d.len() {
            if d[q] < d[j] {
                j = q;
            }
        }
        counts[j] += 1;
        for (s, v) in sums[j].iter_mut().zip(x) {
            *s += f64::from(*v);
        }
    }
    sums.iter()
        .zip(&counts)
        .zip(seeds)
        .map(|((s, &n), seed)| {
            if n == 0 {
                seed.iter().map(|v| *v as f32).collect()
            } else {
                s.iter().map(|v| (v / n as f64) as f32).collect()
            }
        })
        .collect()
}
