//! Contrastive sensitivity and relative importance of concepts.

use serde::{Deserialize, Serialize};

use super::descriptor::{pixel_sensitivity, DescriptorField, GradientField};
use crate::error::{Error, Result};
use crate::tensor::Mask2;

/// Per-image sums of pixel sensitivity, per concept and class.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSensitivity {
    pub label: usize,
    /// `sums[j][k]`: Σ of s^k over the pixels of concept j.
    pub sums: Vec<Vec<f64>>,
    /// Pixels of concept j in this image.
    pub counts: Vec<u64>,
}

/// Reduces one image to per-concept sensitivity sums.
///
/// `grads[k]` must be the gradient field for class `k`.
pub fn image_sensitivity(
    d: &DescriptorField,
    masks: &[Mask2],
    grads: &[GradientField],
    label: usize,
) -> Result<ImageSensitivity> {
    if label >= grads.len() {
        return Err(Error::OutOfRange {
            index: label,
            len: grads.len(),
        });
    }
    if let Some((k, _)) = grads.iter().enumerate().find(|(k, g)| g.class_k != *k) {
        return Err(Error::invalid(format!(
            "gradient field {k} is not for class {k}"
        )));
    }
    if masks.iter().any(|m| m.dims() != d.dims()) {
        return Err(Error::shape("concept mask dims differ from the descriptor"));
    }
    let sens: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| pixel_sensitivity(d, g).map(|s| s.values))
        .collect::<Result<_>>()?;
    let mut sums = vec![vec![0.0; grads.len()]; masks.len()];
    let mut counts = vec![0u64; masks.len()];
    for (j, m) in masks.iter().enumerate() {
        for (px, _) in m.bits().iter().enumerate().filter(|(_, b)| **b) {
            counts[j] += 1;
            for (k, s) in sens.iter().enumerate() {
                sums[j][k] += s[px];
            }
        }
    }
    Ok(ImageSensitivity {
        label,
        sums,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// `cs[j][k]`, contrastive sensitivity of concept j toward class k.
    pub cs: Vec<Vec<f64>>,
    pub ri: Vec<f64>,
    pub k_of: Vec<usize>,
    /// `pixel_counts[j][k]`: concept-j pixels over images of class k.
    pub pixel_counts: Vec<Vec<u64>>,
    /// Every CS entry vanished, so RI is all zero.
    pub degenerate: bool,
}

/// Aggregates per-image sums in the given order into CS and RI.
///
/// A mean over an empty pixel set contributes 0.
pub fn score_concepts(images: &[ImageSensitivity], n_classes: usize) -> Result<ImportanceReport> {
    let n_c = images.first().map_or(0, |i| i.sums.len());
    if images.is_empty() || n_c == 0 {
        return Err(Error::invalid("nothing to score"));
    }
    if images
        .iter()
        .any(|i| i.sums.len() != n_c || i.sums.iter().any(|r| r.len() != n_classes))
    {
        return Err(Error::shape(
            "inconsistent concept or class counts across images",
        ));
    }
    if let Some(i) = images.iter().find(|i| i.label >= n_classes) {
        return Err(Error::OutOfRange {
            index: i.label,
            len: n_classes,
        });
    }
    let mut cs = vec![vec![0.0; n_classes]; n_c];
    let mut pixel_counts = vec![vec![0u64; n_classes]; n_c];
    for j in 0..n_c {
        for k in 0..n_classes {
            let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0u64, 0.0, 0u64);
            for img in images {
                if img.label == k {
                    s_in += img.sums[j][k];
                    n_in += img.counts[j];
                } else {
                    s_out += img.sums[j][k];
                    n_out += img.counts[j];
                }
            }
            let mean = |s: f64, n: u64| if n == 0 { 0.0 } else { s / n as f64 };
            cs[j][k] = mean(s_in, n_in) - mean(s_out, n_out);
            pixel_counts[j][k] = n_in;
        }
    }
    let (ri, k_of, degenerate) = relative_importance(&cs);
    Ok(ImportanceReport {
        cs,
        ri,
        k_of,
        pixel_counts,
        degenerate,
    })
}

/// RI_j = CS[j][k_j] / max |CS| with k_j = argmax_k |CS[j][k]| (lowest k on ties).
pub fn relative_importance(cs: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>, bool) {
    let k_of: Vec<usize> = cs
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if v.abs() > row[best].abs() {
                    best = k;
                }
            }
            best
        })
        .collect();
    let max_abs = cs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return (vec![0.0; cs.len()], k_of, true);
    }
    let ri = cs
        .iter()
        .zip(&k_of)
        .map(|(row, &k)| row[k] / max_abs)
        .collect();
    (ri, k_of, false)
}
