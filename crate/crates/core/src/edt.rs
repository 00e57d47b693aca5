//! Exact Euclidean distance transform.
//!
//! Separable squared-distance transform (lower envelope of parabolas, one
//! pass over columns then one over rows) followed by a square root. All
//! intermediate values are integers held in `f64`, so the result is exact.

use crate::tensor::{Field2, Mask2};

/// Distance assigned to every pixel when the seed mask is empty.
pub fn empty_cap(height: usize, width: usize) -> f64 {
    ((height * height + width * width) as f64).sqrt()
}

/// Distance from every pixel to the nearest `true` pixel of `seeds`.
///
/// An empty seed set yields a constant field equal to [`empty_cap`].
pub fn edt(seeds: &Mask2) -> Field2 {
    let (h, w) = seeds.dims();
    if seeds.is_empty() {
        return Field2::from_raw(h, w, vec![empty_cap(h, w); h * w]);
    }
    let inf = f64::INFINITY;
    let mut grid: Vec<f64> = seeds
        .bits()
        .iter()
        .map(|b| if *b { 0.0 } else { inf })
        .collect();

    let n = h.max(w);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        envelope_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = d[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        envelope_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&d[..w]);
    }
    for g in &mut grid {
        *g = g.sqrt();
    }
    Field2::from_raw(h, w, grid)
}

/// One-dimensional squared distance transform of a sampled function `f`,
/// where `f[q] = inf` marks non-seed samples.
fn envelope_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // First finite sample anchors the envelope; a fully infinite line stays infinite.
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
            if s <= z[k] {
                if k == 0 {
                    // New parabola dominates everywhere.
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let dq = qf - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
}
