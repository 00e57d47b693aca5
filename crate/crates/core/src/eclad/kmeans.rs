//! Minibatch k-means with k-means++ seeding.
//!
//! Each minibatch is assigned against the centers as they stand at the start
//! of the batch. A center `c` with running count `v` that receives `m` points
//! with sum `Σx` moves to `(v·c + Σx) / (v + m)`, which is the per-sample
//! update with learning rate `1/count` applied to the whole batch at once.

use rand::Rng;

use crate::error::{Error, Result};

/// A row-major block of `n × dim` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::shape(format!(
                "{} values do not form rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn extend(&mut self, other: &Points) {
        self.data.extend_from_slice(&other.data);
    }
}

pub fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| {
            let d = f64::from(*a) - b;
            d * d
        })
        .sum()
}

/// Index of the nearest center; the lowest index wins ties.
pub fn nearest(x: &[f32], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// k-means++ seeding: first center uniform, the rest by squared-distance sampling.
///
/// Returns `None` when the points hold fewer than `k` distinct values.
pub fn kmeans_plus_plus(points: &Points, k: usize, rng: &mut impl Rng) -> Option<Vec<Vec<f64>>> {
    let n = points.len();
    if k == 0 || n < k {
        return None;
    }
    let to_f64 = |i: usize| {
        points
            .row(i)
            .iter()
            .map(|v| f64::from(*v))
            .collect::<Vec<f64>>()
    };
    let mut centers = vec![to_f64(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, w) in d2.iter().enumerate() {
            if *w > 0.0 {
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let c = to_f64(pick?);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centers.push(c);
    }
    Some(centers)
}

/// Streaming state: centers plus the number of points each has absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchKMeans {
    pub centers: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
}

impl MiniBatchKMeans {
    pub fn new(centers: Vec<Vec<f64>>) -> Self {
        let counts = vec![0; centers.len()];
        Self { centers, counts }
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Nearest center of every point.
    pub fn assign(&self, batch: &Points) -> Vec<usize> {
        use rayon::prelude::*;
        batch
            .data
            .par_chunks(batch.dim)
            .map(|x| nearest(x, &self.centers))
            .collect()
    }

    /// One minibatch step.
    pub fn step(&mut self, batch: &Points) -> Result<()> {
        if batch.dim != self.dim() {
            return Err(Error::shape(format!(
                "batch dim {} != center dim {}",
                batch.dim,
                self.dim()
            )));
        }
        let labels = self.assign(batch);
        let k = self.centers.len();
        let mut sums = vec![vec![0.0f64; batch.dim]; k];
        let mut m = vec![0u64; k];
        for (i, &j) in labels.iter().enumerate() {
            m[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(batch.row(i)) {
                *s += f64::from(*x);
            }
        }
        for j in 0..k {
            if m[j] == 0 {
                continue;
            }
            let v = self.counts[j] as f64;
            let total = (self.counts[j] + m[j]) as f64;
            for (c, s) in self.centers[j].iter_mut().zip(&sums[j]) {
                *c = (v * *c + s) / total;
            }
            self.counts[j] += m[j];
        }
        Ok(())
    }
}
