//! Concept mining over descriptor streams and concept localization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::descriptor::{DescriptorField, LayerInfo};
use super::kmeans::{kmeans_plus_plus, nearest, MiniBatchKMeans, Points};
use crate::ectf::TensorFile;
use crate::error::{Error, Result};
use crate::resize::UpscaleMode;
use crate::tensor::{Mask2, Tensor3};

/// Per-channel z-scoring applied to LADs before distances are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    fn apply(&self, x: &[f32], out: &mut [f32]) {
        for ((o, v), (m, s)) in out.iter_mut().zip(x).zip(self.mean.iter().zip(&self.std)) {
            *o = ((f64::from(*v) - m) / s) as f32;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_c: usize,
    pub n_i: usize,
    pub seed: u64,
    pub epochs: usize,
    pub standardize: bool,
    pub mode: UpscaleMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_c: 10,
            n_i: 2,
            seed: 0,
            epochs: 1,
            standardize: false,
            mode: UpscaleMode::Bilinear,
        }
    }
}

/// The mined concept centroids with everything needed to localize them again.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptModel {
    /// `n_c × c*`, in the (possibly standardized) clustering space.
    pub centroids: Vec<Vec<f32>>,
    pub layers: Vec<LayerInfo>,
    pub mode: UpscaleMode,
    pub standardization: Option<Standardization>,
    /// LADs absorbed by each centroid during fitting.
    pub counts: Vec<u64>,
}

impl ConceptModel {
    pub fn n_c(&self) -> usize {
        self.centroids.len()
    }

    pub fn c_star(&self) -> usize {
        self.layers.iter().map(|l| l.channels).sum()
    }

    fn check(&self, d: &DescriptorField) -> Result<()> {
        if d.layers != self.layers {
            return Err(Error::shape(
                "descriptor layers differ from the concept model",
            ));
        }
        Ok(())
    }

    /// Nearest-centroid label of every pixel (lowest index on ties).
    pub fn assign(&self, d: &DescriptorField) -> Result<Vec<usize>> {
        self.check(d)?;
        let centers: Vec<Vec<f64>> = self
            .centroids
            .iter()
            .map(|c| c.iter().map(|v| f64::from(*v)).collect())
            .collect();
        let c = d.c_star();
        Ok(d.field
            .data()
            .par_chunks(c)
            .map_init(
                || vec![0.0f32; c],
                |buf, x| match &self.standardization {
                    Some(s) => {
                        s.apply(x, buf);
                        nearest(buf, &centers)
                    }
                    None => nearest(x, &centers),
                },
            )
            .collect())
    }

    /// Mask of pixels whose nearest centroid is `j`.
    pub fn mask_concept(&self, d: &DescriptorField, j: usize) -> Result<Mask2> {
        if j >= self.n_c() {
            return Err(Error::OutOfRange {
                index: j,
                len: self.n_c(),
            });
        }
        let labels = self.assign(d)?;
        let (h, w) = d.dims();
        Mask2::new(h, w, labels.iter().map(|&l| l == j).collect())
    }

    /// One mask per concept; together they partition the frame.
    pub fn masks(&self, d: &DescriptorField) -> Result<Vec<Mask2>> {
        let labels = self.assign(d)?;
        let (h, w) = d.dims();
        (0..self.n_c())
            .map(|j| Mask2::new(h, w, labels.iter().map(|&l| l == j).collect()))
            .collect()
    }

    /// Centroids as a single `(n_c, 1, c*)` tensor named `centroids`.
    pub fn to_tensor_file(&self) -> Result<TensorFile> {
        let mut f = TensorFile::new();
        let data = self.centroids.iter().flatten().copied().collect();
        f.push(
            "centroids",
            Tensor3::new(self.n_c(), 1, self.c_star(), data)?,
        );
        Ok(f)
    }

    pub fn centroids_from_tensor_file(f: &TensorFile) -> Result<Vec<Vec<f32>>> {
        let t = f.get("centroids").ok_or_else(|| Error::Format {
            what: "concept model",
            detail: "missing centroids tensor".into(),
        })?;
        Ok(t.data().chunks(t.channels()).map(<[f32]>::to_vec).collect())
    }
}

fn to_points(batch: &[DescriptorField], stats: Option<&Standardization>) -> Result<Points> {
    let dim = batch[0].c_star();
    let mut data = Vec::with_capacity(batch.iter().map(|d| d.field.data().len()).sum());
    for d in batch {
        match stats {
            Some(s) => {
                let mut buf = vec![0.0f32; dim];
                for x in d.field.data().chunks(dim) {
                    s.apply(x, &mut buf);
                    data.extend_from_slice(&buf);
                }
            }
            None => data.extend_from_slice(d.field.data()),
        }
    }
    Points::new(dim, data)
}

fn channel_stats<I>(stream: I) -> Result<Standardization>
where
    I: Iterator<Item = Result<DescriptorField>>,
{
    let mut sum: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    let mut n = 0u64;
    for d in stream {
        let d = d?;
        let c = d.c_star();
        if sum.is_empty() {
            sum = vec![0.0; c];
            sq = vec![0.0; c];
        }
        for x in d.field.data().chunks(c) {
            for (k, v) in x.iter().enumerate() {
                let v = f64::from(*v);
                sum[k] += v;
                sq[k] += v * v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("descriptor stream is empty"));
    }
    let n = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let var = (q / n - m * m).max(0.0);
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Ok(Standardization { mean, std })
}

/// Groups a descriptor stream into minibatches of `n_i` images.
struct Batches<I> {
    inner: I,
    n_i: usize,
}

impl<I: Iterator<Item = Result<DescriptorField>>> Iterator for Batches<I> {
    type Item = Result<Vec<DescriptorField>>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut batch = Vec::with_capacity(self.n_i);
        for d in self.inner.by_ref() {
            match d {
                Ok(d) => batch.push(d),
                Err(e) => return Some(Err(e)),
            }
            if batch.len() == self.n_i {
                break;
            }
        }
        (!batch.is_empty()).then_some(Ok(batch))
    }
}

/// Minibatch k-means over every LAD of the stream.
///
/// `make_stream` must yield the same descriptors in the same order each time
/// it is called; it is called once per epoch, plus once more when
/// standardization statistics are needed. Seeding uses the first minibatch;
/// if that batch holds fewer than `n_c` distinct LADs, following minibatches
/// are pooled in until it does.
pub fn fit_concepts<F, I>(make_stream: F, cfg: &FitConfig) -> Result<ConceptModel>
where
    F: Fn() -> I,
    I: Iterator<Item = Result<DescriptorField>>,
{
    if cfg.n_c == 0 || cfg.n_i == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("n_c, n_i and epochs must be positive"));
    }
    let stats = if cfg.standardize {
        Some(channel_stats(make_stream())?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batches = Batches {
        inner: make_stream(),
        n_i: cfg.n_i,
    };

    let mut layers: Option<Vec<LayerInfo>> = None;
    let mut check_layers = |batch: &[DescriptorField]| -> Result<()> {
        for d in batch {
            match &layers {
                None => layers = Some(d.layers.clone()),
                Some(l) if *l != d.layers => {
                    return Err(Error::shape(
                        "descriptors in the stream have different layouts",
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    };

    // Seeding.
    let mut pending: Vec<Points> = Vec::new();
    let mut pool: Option<Points> = None;
    let centers = loop {
        let Some(batch) = batches.next() else {
            let total = pool.as_ref().map_or(0, Points::len);
            return Err(if total < cfg.n_c {
                Error::invalid(format!(
                    "n_c = {} exceeds the {total} available LADs",
                    cfg.n_c
                ))
            } else {
                Error::invalid(format!(
                    "fewer than n_c = {} distinct LADs in the stream",
                    cfg.n_c
                ))
            });
        };
        let batch = batch?;
        check_layers(&batch)?;
        let pts = to_points(&batch, stats.as_ref())?;
        match pool.as_mut() {
            Some(p) => p.extend(&pts),
            None => pool = Some(pts.clone()),
        }
        pending.push(pts);
        if let Some(c) = kmeans_plus_plus(pool.as_ref().expect("pool filled"), cfg.n_c, &mut rng) {
            break c;
        }
    };
    drop(pool);

    let mut km = MiniBatchKMeans::new(centers);
    for pts in &pending {
        km.step(pts)?;
    }
    drop(pending);
    for batch in batches {
        let batch = batch?;
        check_layers(&batch)?;
        km.step(&to_points(&batch, stats.as_ref())?)?;
    }
    for _ in 1..cfg.epochs {
        for batch in (Batches {
            inner: make_stream(),
            n_i: cfg.n_i,
        }) {
            let batch = batch?;
            check_layers(&batch)?;
            km.step(&to_points(&batch, stats.as_ref())?)?;
        }
    }

    Ok(ConceptModel {
        centroids: km
            .centers
            .iter()
            .map(|c| c.iter().map(|v| *v as f32).collect())
            .collect(),
        layers: layers.expect("at least one batch"),
        mode: cfg.mode,
        standardization: stats,
        counts: km.counts,
    })
}

/// Keeps masked pixels and attenuates the rest by `lambda`.
pub fn render_examples(image: &Tensor3, mask: &Mask2, lambda: f32) -> Result<Tensor3> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(format!(
            "attenuation {lambda} outside (0, 1]"
        )));
    }
    let (h, w, c) = image.shape();
    if mask.dims() != (h, w) {
        return Err(Error::shape("mask and image dims differ"));
    }
    let data = image
        .pixels()
        .zip(mask.bits())
        .flat_map(|(px, &keep)| px.iter().map(move |v| if keep { *v } else { v * lambda }))
        .collect();
    Tensor3::new(h, w, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(h: usize, w: usize, c: usize, data: Vec<f32>) -> DescriptorField {
        DescriptorField {
            field: Tensor3::new(h, w, c, data).unwrap(),
            layers: vec![LayerInfo {
                name: "l".into(),
                channels: c,
            }],
        }
    }

    #[test]
    fn single_concept_owns_everything() {
        let ds = vec![
            field(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]),
            field(2, 2, 1, vec![5.0, 6.0, 7.0, 8.0]),
        ];
        let cfg = FitConfig {
            n_c: 1,
            ..FitConfig::default()
        };
        let m = fit_concepts(|| ds.clone().into_iter().map(Ok), &cfg).unwrap();
        assert_eq!(m.centroids, vec![vec![4.5]]);
        assert!(m.mask_concept(&ds[0], 0).unwrap().bits().iter().all(|b| *b));
        assert!(m.mask_concept(&ds[0], 1).is_err());
    }

    #[test]
    fn too_many_concepts_rejected() {
        let ds = vec![field(1, 2, 1, vec![1.0, 2.0])];
        let cfg = FitConfig {
            n_c: 3,
            ..FitConfig::default()
        };
        assert!(fit_concepts(|| ds.clone().into_iter().map(Ok), &cfg).is_err());
    }

    #[test]
    fn seeding_pools_batches_until_enough_distinct_points() {
        let ds = vec![
            field(1, 2, 1, vec![1.0, 1.0]),
            field(1, 2, 1, vec![1.0, 9.0]),
        ];
        let cfg = FitConfig {
            n_c: 2,
            n_i: 1,
            ..FitConfig::default()
        };
        let m = fit_concepts(|| ds.clone().into_iter().map(Ok), &cfg).unwrap();
        let mut c: Vec<f32> = m.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f32::total_cmp);
        assert_eq!(c, vec![1.0, 9.0]);
    }

    #[test]
    fn standardization_is_recorded_and_used() {
        let ds = vec![field(
            1,
            4,
            2,
            vec![0.0, 0.0, 0.0, 100.0, 1.0, 0.0, 1.0, 100.0],
        )];
        let cfg = FitConfig {
            n_c: 2,
            n_i: 1,
            standardize: true,
            ..FitConfig::default()
        };
        let m = fit_concepts(|| ds.clone().into_iter().map(Ok), &cfg).unwrap();
        let s = m.standardization.as_ref().unwrap();
        assert_eq!(s.mean, vec![0.5, 50.0]);
        assert_eq!(s.std, vec![0.5, 50.0]);
        let masks = m.masks(&ds[0]).unwrap();
        let total: usize = masks.iter().map(Mask2::count).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn examples_attenuate_outside() {
        let img = Tensor3::new(1, 2, 1, vec![0.8, 0.8]).unwrap();
        let mask = Mask2::new(1, 2, vec![true, false]).unwrap();
        let out = render_examples(&img, &mask, 0.5).unwrap();
        assert_eq!(out.data(), &[0.8, 0.4]);
        assert_eq!(render_examples(&img, &mask, 1.0).unwrap(), img);
        assert_eq!(render_examples(&img, &Mask2::full(1, 2), 0.3).unwrap(), img);
        assert!(render_examples(&img, &mask, 0.0).is_err());
        assert!(render_examples(&img, &mask, 1.5).is_err());
    }

    #[test]
    fn centroid_tensor_roundtrip() {
        let m = ConceptModel {
            centroids: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            layers: vec![LayerInfo {
                name: "a".into(),
                channels: 2,
            }],
            mode: UpscaleMode::Bilinear,
            standardization: None,
            counts: vec![1, 1],
        };
        let f = m.to_tensor_file().unwrap();
        assert_eq!(
            ConceptModel::centroids_from_tensor_file(&f).unwrap(),
            m.centroids
        );
    }
}
