//! SGD with momentum on softmax cross-entropy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{init, softmax, Architecture, NetworkParams};
use crate::error::{Error, Result};
use crate::synth::{derive_seed, Dataset};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            epochs: 30,
            batch: 24,
            seed: 0,
            val_fraction: 0.15,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Loss and accuracy of the initial parameters on the training split.
    pub initial_loss: f64,
    pub history: Vec<EpochMetrics>,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

impl TrainOutcome {
    pub fn final_val_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|m| m.val_accuracy)
    }
}

/// Stratified split: within each class, a seeded shuffle puts the first
/// `round(n_class * val_fraction)` images in validation.
pub fn split_indices(
    labels: &[usize],
    n_classes: usize,
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for k in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            seed, k as u64, 0x5917,
        ])));
        let n_val = (idx.len() as f64 * val_fraction).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Loss and accuracy of `params` on `(image, label)` pairs.
pub fn evaluate(params: &NetworkParams, data: &[(Tensor3, usize)]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let per: Vec<(f64, bool)> = data
        .par_iter()
        .map(|(img, y)| -> Result<(f64, bool)> {
            let logits = params.logits(img)?;
            let p = softmax(&logits);
            let py = f64::from(p[*y]);
            let loss = if py.is_nan() {
                f64::NAN
            } else {
                -py.max(1e-30).ln()
            };
            Ok((loss, argmax(&logits) == *y))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok((
        per.iter().map(|p| p.0).sum::<f64>() / n,
        per.iter().filter(|p| p.1).count() as f64 / n,
    ))
}

/// Fraction of dataset images whose highest logit is their label.
pub fn accuracy(params: &NetworkParams, dataset_dir: impl AsRef<Path>) -> Result<f64> {
    let ds = Dataset::open(dataset_dir)?;
    if ds.is_empty() {
        return Err(Error::invalid("dataset has no images"));
    }
    let data = load_all(&ds, &(0..ds.len()).collect::<Vec<_>>())?;
    Ok(evaluate(params, &data)?.1)
}

pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn load_all(ds: &Dataset, idx: &[usize]) -> Result<Vec<(Tensor3, usize)>> {
    idx.par_iter()
        .map(|&i| Ok((ds.load_image(i)?, ds.label(i))))
        .collect()
}

/// Trains a freshly initialized network on the dataset at `dataset_dir`.
pub fn train(
    arch: &Architecture,
    dataset_dir: impl AsRef<Path>,
    hyper: &Hyper,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let ds = Dataset::open(dataset_dir)?;
    if ds.is_empty() {
        return Err(Error::invalid("dataset has no images"));
    }
    if ds.n_classes() != arch.n_classes {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the architecture {}",
            ds.n_classes(),
            arch.n_classes
        )));
    }
    if ds.manifest.image_size != arch.input_size {
        return Err(Error::shape(format!(
            "dataset images are {}px but the network expects {}px",
            ds.manifest.image_size, arch.input_size
        )));
    }
    let mut params = init(arch, hyper.seed)?;
    let (train_idx, val_idx) =
        split_indices(&ds.labels(), ds.n_classes(), hyper.val_fraction, hyper.seed);
    if train_idx.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let train_set = load_all(&ds, &train_idx)?;
    let val_set = load_all(&ds, &val_idx)?;
    let initial_loss = evaluate(&params, &train_set)?.0;

    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[hyper.seed, 0x0D7E]));
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(hyper.batch) {
            // Per-sample gradients in parallel, reduced in sample order.
            let per: Vec<(NetworkParams, f32, bool)> = chunk
                .par_iter()
                .map(|&i| -> Result<_> {
                    let (img, y) = &train_set[i];
                    let mut g = params.zeros_like();
                    let (loss, logits) = params.loss_and_grad(img, *y, &mut g)?;
                    Ok((g, loss, argmax(&logits) == *y))
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / chunk.len() as f32;
            let mut grad = params.zeros_like();
            for (g, loss, ok) in &per {
                loss_sum += f64::from(*loss);
                correct += usize::from(*ok);
                for (dst, src) in grad.slices_mut().into_iter().zip(g.slices()) {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged in epoch {}",
                    epoch + 1
                )));
            }
            let (lr, mu) = (hyper.lr as f32, hyper.momentum as f32);
            for ((w, v), g) in params
                .slices_mut()
                .into_iter()
                .zip(velocity.slices_mut())
                .zip(grad.slices())
            {
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = mu * *vi + gi * scale;
                    *wi -= lr * *vi;
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::Training(format!(
                "parameters became non-finite in epoch {}",
                epoch + 1
            )));
        }
        let n = train_set.len() as f64;
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&params, &val_set)?;
            (Some(l), Some(a))
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "epoch {:>3}  loss {:.4}  acc {:.3}  val_acc {}",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.val_accuracy.map_or("-".into(), |a| format!("{a:.3}"))
        );
        history.push(m);
    }

    Ok(TrainOutcome {
        params,
        initial_loss,
        history,
        train_ids: train_idx
            .iter()
            .map(|&i| ds.image_id(i).to_string())
            .collect(),
        val_ids: val_idx
            .iter()
            .map(|&i| ds.image_id(i).to_string())
            .collect(),
    })
}
