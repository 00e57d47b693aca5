//! Behaviour of DST against overlap metrics on controlled mask pairs.

use serde::{Deserialize, Serialize};

use super::metrics::{baseline_metrics, one_way_dst_with, BaselineMetrics};
use crate::edt::edt;
use crate::error::{Error, Result};
use crate::synth::glyph::centered_glyph;
use crate::synth::Glyph;
use crate::tensor::Mask2;

pub const STUDY_FRAME: usize = 128;
pub const STUDY_GLYPH_HEIGHT: f64 = 48.0;
pub const RING_WIDTH: usize = 4;
/// Horizontal glyph centre as a fraction of the frame: left of centre for
/// shifts, centred for rings.
pub const OFFSET_CENTER: f64 = 0.22;
pub const SURROUND_CENTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    /// Shift (offset study) or gap (surround study), px.
    pub distance: usize,
    pub dst: f64,
    pub dst_norm: f64,
    #[serde(flatten)]
    pub baselines: BaselineMetrics,
}

/// Glyph A on a square frame, centred vertically and placed left of centre so
/// that horizontal shifts of up to half the frame stay inside.
pub fn study_glyph(frame: usize) -> Mask2 {
    study_mask(Glyph::A, frame, OFFSET_CENTER)
}

/// A glyph of the study height with its centre at `center * frame` horizontally.
pub fn study_mask(glyph: Glyph, frame: usize, center: f64) -> Mask2 {
    let scale = frame as f64 / STUDY_FRAME as f64;
    centered_glyph(
        glyph,
        STUDY_GLYPH_HEIGHT * scale,
        frame,
        center * frame as f64,
    )
}

fn row(a: &Mask2, b: &Mask2, distance: usize) -> Result<StudyRow> {
    let dst = one_way_dst_with(a, &edt(b))? + one_way_dst_with(b, &edt(a))?;
    let mass = (a.count() + b.count()) as f64;
    Ok(StudyRow {
        distance,
        dst,
        dst_norm: if mass == 0.0 { 0.0 } else { dst / mass },
        baselines: baseline_metrics(a, b)?,
    })
}

/// Compares `mask` with copies of itself shifted right by each offset.
pub fn offset_study(mask: &Mask2, offsets: &[usize]) -> Result<Vec<StudyRow>> {
    if mask.is_empty() {
        return Err(Error::invalid("study mask is empty"));
    }
    offsets
        .iter()
        .map(|&o| {
            let moved = mask.shifted(0, o as isize);
            if moved.count() != mask.count() {
                return Err(Error::invalid(format!(
                    "offset {o} moves the mask out of the frame"
                )));
            }
            row(mask, &moved, o)
        })
        .collect()
}

/// The ring `{gap < EDT(mask) ≤ gap + width}` around a mask.
pub fn ring_mask(mask: &Mask2, gap: usize, width: usize) -> Result<Mask2> {
    let (h, w) = mask.dims();
    let (r0, r1, c0, c1) = mask
        .bounding_box()
        .ok_or_else(|| Error::invalid("study mask is empty"))?;
    let reach = gap + width;
    if r0 < reach || c0 < reach || r1 + reach >= h || c1 + reach >= w {
        return Err(Error::invalid(format!(
            "ring at gap {gap} does not fit in the frame"
        )));
    }
    let d = edt(mask);
    Ok(Mask2::from_fn(h, w, |r, c| {
        let v = d.get(r, c);
        v > gap as f64 && v <= reach as f64
    }))
}

/// Compares `mask` with surrounding rings at growing gaps.
pub fn surround_study(mask: &Mask2, gaps: &[usize], width: usize) -> Result<Vec<StudyRow>> {
    if width == 0 {
        return Err(Error::invalid("ring width must be positive"));
    }
    gaps.iter()
        .map(|&g| row(mask, &ring_mask(mask, g, width)?, g))
        .collect()
}
