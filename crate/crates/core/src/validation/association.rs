//! Concept–primitive association and the correctness scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::one_way_dst_with;
use crate::edt::edt;
use crate::error::{Error, Result};
use crate::tensor::{Field2, Mask2};

/// Per-image contribution to the association matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePairs {
    /// `two_way[p][c]`: `dst(p, c) + dst(c, p)` in this image.
    pub two_way: Vec<Vec<f64>>,
    /// `mass[p][c]`: `|m_p| + |m_c|`.
    pub mass: Vec<Vec<u64>>,
    pub primitive_present: Vec<bool>,
    pub concept_present: Vec<bool>,
}

/// Two-way distances between every primitive and concept mask of one image.
pub fn image_pairs(primitives: &[Mask2], concepts: &[Mask2]) -> Result<ImagePairs> {
    let dims = primitives
        .first()
        .or(concepts.first())
        .map(Mask2::dims)
        .ok_or_else(|| Error::invalid("no masks"))?;
    if primitives.iter().chain(concepts).any(|m| m.dims() != dims) {
        return Err(Error::shape("masks of one image have different dims"));
    }
    let ep: Vec<Field2> = primitives.iter().map(edt).collect();
    let ec: Vec<Field2> = concepts.iter().map(edt).collect();
    let mut two_way = vec![vec![0.0; concepts.len()]; primitives.len()];
    let mut mass = vec![vec![0u64; concepts.len()]; primitives.len()];
    for (p, mp) in primitives.iter().enumerate() {
        for (c, mc) in concepts.iter().enumerate() {
            two_way[p][c] = one_way_dst_with(mp, &ec[c])? + one_way_dst_with(mc, &ep[p])?;
            mass[p][c] = (mp.count() + mc.count()) as u64;
        }
    }
    Ok(ImagePairs {
        two_way,
        mass,
        primitive_present: primitives.iter().map(|m| !m.is_empty()).collect(),
        concept_present: concepts.iter().map(|m| !m.is_empty()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub primitive_ids: Vec<String>,
    pub concept_ids: Vec<String>,
    /// Mean over images of the two-way distance, `[p][c]`.
    pub dst: Vec<Vec<f64>>,
    /// Summed two-way distance over summed mask area: mean pixel-to-nearest distance in px.
    pub dst_norm: Vec<Vec<f64>>,
    /// Fraction of the images containing primitive p in which concept c is non-empty.
    pub coverage: Vec<Vec<f64>>,
    pub n_images: usize,
}

/// Accumulates per-image contributions in the order they are added.
#[derive(Debug, Clone)]
pub struct AssociationAccumulator {
    sum: Vec<Vec<f64>>,
    mass: Vec<Vec<u64>>,
    both: Vec<Vec<u64>>,
    prim_images: Vec<u64>,
    n_images: usize,
}

impl AssociationAccumulator {
    pub fn new(n_primitives: usize, n_concepts: usize) -> Self {
        Self {
            sum: vec![vec![0.0; n_concepts]; n_primitives],
            mass: vec![vec![0; n_concepts]; n_primitives],
            both: vec![vec![0; n_concepts]; n_primitives],
            prim_images: vec![0; n_primitives],
            n_images: 0,
        }
    }

    pub fn add(&mut self, img: &ImagePairs) -> Result<()> {
        if img.two_way.len() != self.sum.len()
            || img.two_way.iter().any(|r| r.len() != self.sum[0].len())
        {
            return Err(Error::shape(
                "image contribution has the wrong primitive or concept count",
            ));
        }
        for p in 0..self.sum.len() {
            if img.primitive_present[p] {
                self.prim_images[p] += 1;
            }
            for c in 0..self.sum[p].len() {
                self.sum[p][c] += img.two_way[p][c];
                self.mass[p][c] += img.mass[p][c];
                if img.primitive_present[p] && img.concept_present[c] {
                    self.both[p][c] += 1;
                }
            }
        }
        self.n_images += 1;
        Ok(())
    }

    pub fn finish(
        self,
        primitive_ids: Vec<String>,
        concept_ids: Vec<String>,
    ) -> Result<AssociationMatrix> {
        if self.n_images == 0 {
            return Err(Error::invalid("association needs at least one image"));
        }
        if primitive_ids.len() != self.sum.len()
            || concept_ids.len() != self.sum.first().map_or(0, Vec::len)
        {
            return Err(Error::shape("id lists do not match the matrix"));
        }
        let n = self.n_images as f64;
        let dst = self
            .sum
            .iter()
            .map(|r| r.iter().map(|s| s / n).collect())
            .collect();
        let dst_norm = self
            .sum
            .iter()
            .zip(&self.mass)
            .map(|(r, m)| {
                r.iter()
                    .zip(m)
                    .map(|(s, &m)| if m == 0 { 0.0 } else { s / m as f64 })
                    .collect()
            })
            .collect();
        let coverage = self
            .both
            .iter()
            .zip(&self.prim_images)
            .map(|(r, &np)| {
                r.iter()
                    .map(|&b| if np == 0 { 0.0 } else { b as f64 / np as f64 })
                    .collect()
            })
            .collect();
        Ok(AssociationMatrix {
            primitive_ids,
            concept_ids,
            dst,
            dst_norm,
            coverage,
            n_images: self.n_images,
        })
    }
}

/// DST over a dataset given per-image `(primitive masks, concept masks)`.
pub fn association_distance(
    images: &[(Vec<Mask2>, Vec<Mask2>)],
    primitive_ids: Vec<String>,
    concept_ids: Vec<String>,
) -> Result<AssociationMatrix> {
    let per: Vec<ImagePairs> = images
        .par_iter()
        .map(|(p, c)| image_pairs(p, c))
        .collect::<Result<_>>()?;
    let mut acc = AssociationAccumulator::new(primitive_ids.len(), concept_ids.len());
    for img in &per {
        acc.add(img)?;
    }
    acc.finish(primitive_ids, concept_ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptAlignment {
    pub concept_id: String,
    pub nearest: usize,
    pub nearest_id: String,
    pub dst: f64,
    pub dst_norm: f64,
    pub aligned: bool,
}

/// Nearest primitive per concept by raw DST (lowest index on ties); aligned when
/// that primitive is important and the normalized distance is within `t_dst`.
pub fn associate(
    m: &AssociationMatrix,
    important: &[bool],
    t_dst: f64,
) -> Result<Vec<ConceptAlignment>> {
    if m.primitive_ids.is_empty() {
        return Err(Error::invalid("association matrix has no primitives"));
    }
    if important.len() != m.primitive_ids.len() {
        return Err(Error::shape(
            "importance flags do not match the primitive list",
        ));
    }
    Ok((0..m.concept_ids.len())
        .map(|c| {
            let mut p = 0;
            for q in 1..m.primitive_ids.len() {
                if m.dst[q][c] < m.dst[p][c] {
                    p = q;
                }
            }
            ConceptAlignment {
                concept_id: m.concept_ids[c].clone(),
                nearest: p,
                nearest_id: m.primitive_ids[p].clone(),
                dst: m.dst[p][c],
                dst_norm: m.dst_norm[p][c],
                aligned: important[p] && m.dst_norm[p][c] <= t_dst,
            }
        })
        .collect())
}

/// Negative mean DST of aligned concepts; `None` when no concept is aligned.
pub fn representation_correctness(alignment: &[ConceptAlignment]) -> Option<f64> {
    let d: Vec<f64> = alignment
        .iter()
        .filter(|a| a.aligned)
        .map(|a| a.dst)
        .collect();
    if d.is_empty() {
        None
    } else {
        Some(0.0 - d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// Gap between mean |I| of aligned and unaligned concepts over max |I|.
///
/// `None` when either group is empty or every importance is zero.
pub fn importance_correctness(
    alignment: &[ConceptAlignment],
    importances: &[f64],
) -> Result<Option<f64>> {
    if alignment.len() != importances.len() {
        return Err(Error::shape("one importance per concept is required"));
    }
    let max = importances.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean_abs = |aligned: bool| -> Option<f64> {
        let v: Vec<f64> = alignment
            .iter()
            .zip(importances)
            .filter(|(a, _)| a.aligned == aligned)
            .map(|(_, i)| i.abs())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(match (mean_abs(true), mean_abs(false)) {
        (Some(a), Some(u)) if max > 0.0 => Some((a - u) / max),
        _ => None,
    })
}
