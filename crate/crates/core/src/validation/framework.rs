//! Localization → association → correctness over a dataset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::association::{
    associate, image_pairs, importance_correctness, representation_correctness,
    AssociationAccumulator, AssociationMatrix, ConceptAlignment, ImagePairs,
};
use crate::eclad::{ConceptModel, EcladReport, FieldBuilder, TapSource, IMPORTANCES_FILE};
use crate::error::{Error, IoContext, Result};
use crate::imageio;
use crate::synth::spec::REFERENCE_SIZE;
use crate::synth::Dataset;
use crate::tensor::{Mask2, Tensor3};

pub const REPORT_FILE: &str = "validation_report.json";
pub const CSV_FILE: &str = "concepts.csv";
/// Alignment threshold at the reference resolution, px.
pub const T_DST_REFERENCE: f64 = 10.0;

/// Default threshold scaled to the dataset resolution.
pub fn default_t_dst(image_size: usize) -> f64 {
    T_DST_REFERENCE * image_size as f64 / REFERENCE_SIZE as f64
}

/// Concept masks and importances from some extraction method.
pub trait ConceptSource: Sync {
    fn concept_ids(&self) -> Vec<String>;
    fn importances(&self) -> Vec<f64>;
    /// One mask per concept for image `i`, at image resolution.
    fn masks(&self, ds: &Dataset, i: usize) -> Result<Vec<Mask2>>;
    fn check(&self, _ds: &Dataset) -> Result<()> {
        Ok(())
    }
}

/// `concepts/<concept_id>/<image_id>.png` masks plus `importances.json`.
#[derive(Debug, Clone)]
pub struct MaskDirConcepts {
    pub dir: PathBuf,
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
}

/// Orders ids like `c2` before `c10`.
fn natural_key(s: &str) -> (String, u64, String) {
    let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
    let (head, rest) = s.split_at(split);
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    let tail = rest[digits.len()..].to_string();
    (head.to_string(), digits.parse().unwrap_or(0), tail)
}

impl MaskDirConcepts {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let p = dir.join(IMPORTANCES_FILE);
        let map: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(&p).at(&p)?)?;
        let mut ids: Vec<String> = map.keys().cloned().collect();
        ids.sort_by_key(|s| natural_key(s));
        if ids.is_empty() {
            return Err(Error::Format {
                what: "importances",
                detail: "no concepts listed".into(),
            });
        }
        let scores = ids.iter().map(|id| map[id]).collect();
        Ok(Self { dir, ids, scores })
    }

    fn path(&self, concept: &str, image_id: &str) -> PathBuf {
        self.dir
            .join("concepts")
            .join(concept)
            .join(format!("{image_id}.png"))
    }
}

impl ConceptSource for MaskDirConcepts {
    fn concept_ids(&self) -> Vec<String> {
        self.ids.clone()
    }

    fn importances(&self) -> Vec<f64> {
        self.scores.clone()
    }

    fn masks(&self, ds: &Dataset, i: usize) -> Result<Vec<Mask2>> {
        self.ids
            .iter()
            .map(|c| imageio::load_mask(self.path(c, ds.image_id(i))))
            .collect()
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        let missing: Vec<PathBuf> = (0..ds.len())
            .flat_map(|i| self.ids.iter().map(move |c| self.path(c, ds.image_id(i))))
            .filter(|p| !p.is_file())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingFiles(missing))
        }
    }
}

/// Masks computed on demand from a concept model; importance = RI.
pub struct EcladConcepts<'a> {
    pub builder: FieldBuilder<'a>,
    pub model: ConceptModel,
    pub ri: Vec<f64>,
}

impl<'a> EcladConcepts<'a> {
    /// Rebuilds the concept model stored in `report` over taps from `source`.
    pub fn from_report(
        source: &'a dyn TapSource,
        ds: &'a Dataset,
        report: &EcladReport,
    ) -> Result<Self> {
        let model = report.model()?;
        Ok(Self {
            builder: FieldBuilder {
                source,
                ds,
                layers: model.layers.iter().map(|l| l.name.clone()).collect(),
                target: (report.descriptor_size, report.descriptor_size),
                mode: model.mode,
            },
            model,
            ri: report.ri.clone(),
        })
    }
}

impl ConceptSource for EcladConcepts<'_> {
    fn concept_ids(&self) -> Vec<String> {
        (0..self.model.n_c())
            .map(crate::eclad::concept_id)
            .collect()
    }

    fn importances(&self) -> Vec<f64> {
        self.ri.clone()
    }

    fn masks(&self, _ds: &Dataset, i: usize) -> Result<Vec<Mask2>> {
        self.builder.masks(&self.model, i)
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        self.builder.source.check(ds)
    }
}

/// Precomputed masks, `masks[i][c]` for dataset image `i`.
#[derive(Debug, Clone)]
pub struct InMemoryConcepts {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub masks: Vec<Vec<Mask2>>,
}

impl ConceptSource for InMemoryConcepts {
    fn concept_ids(&self) -> Vec<String> {
        self.ids.clone()
    }

    fn importances(&self) -> Vec<f64> {
        self.scores.clone()
    }

    fn masks(&self, _ds: &Dataset, i: usize) -> Result<Vec<Mask2>> {
        self.masks.get(i).cloned().ok_or(Error::OutOfRange {
            index: i,
            len: self.masks.len(),
        })
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if self.masks.len() != ds.len() {
            return Err(Error::shape(format!(
                "{} mask sets for {} images",
                self.masks.len(),
                ds.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Alignment threshold on the normalized distance, px. Scaled default when absent.
    pub t_dst: Option<f64>,
    /// Important primitive ids. The manifest flags are used when absent.
    pub important: Option<Vec<String>>,
    /// Overlay images written per concept.
    pub max_overlays: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            t_dst: None,
            important: None,
            max_overlays: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRow {
    pub concept_id: String,
    pub importance: f64,
    pub nearest_primitive: String,
    pub dst: f64,
    pub dst_norm: f64,
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessReport {
    pub dataset: String,
    pub n_images: usize,
    pub t_dst: f64,
    pub important: Vec<String>,
    pub association: AssociationMatrix,
    pub concepts: Vec<ConceptRow>,
    /// `null` when no concept is aligned.
    pub rc: Option<f64>,
    /// `null` when the aligned or unaligned group is empty, or all importances are zero.
    pub ic: Option<f64>,
    pub config: ValidationConfig,
}

impl CorrectnessReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&fs::read_to_string(path).at(path)?)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("concept_id,importance,nearest_primitive,dst,dst_norm,aligned\n");
        for r in &self.concepts {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.concept_id, r.importance, r.nearest_primitive, r.dst, r.dst_norm, r.aligned
            ));
        }
        s
    }
}

/// RC and IC over the union of concepts from several runs.
pub fn pooled_correctness(reports: &[CorrectnessReport]) -> Result<(Option<f64>, Option<f64>)> {
    let rows: Vec<&ConceptRow> = reports.iter().flat_map(|r| &r.concepts).collect();
    let alignment: Vec<ConceptAlignment> = rows
        .iter()
        .map(|r| ConceptAlignment {
            concept_id: r.concept_id.clone(),
            nearest: 0,
            nearest_id: r.nearest_primitive.clone(),
            dst: r.dst,
            dst_norm: r.dst_norm,
            aligned: r.aligned,
        })
        .collect();
    let imp: Vec<f64> = rows.iter().map(|r| r.importance).collect();
    Ok((
        representation_correctness(&alignment),
        importance_correctness(&alignment, &imp)?,
    ))
}

/// Overlay images: the first images of each class in turn.
fn overlay_images(ds: &Dataset, n: usize) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for i in 0..ds.len() {
        per_class[ds.label(i)].push(i);
    }
    let longest = per_class.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .flat_map(|r| per_class.iter().filter_map(move |v| v.get(r).copied()))
        .take(n)
        .collect()
}

/// Concept pixels keep their colour, the rest is dimmed; the primitive outline is drawn in red.
pub fn overlay(image: &Tensor3, concept: &Mask2, primitive: &Mask2) -> Result<Tensor3> {
    let (h, w, c) = image.shape();
    if concept.dims() != (h, w) || primitive.dims() != (h, w) || c != 3 {
        return Err(Error::shape("overlay inputs disagree in shape"));
    }
    let edge = |r: usize, col: usize| {
        primitive.get(r, col)
            && [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|(dr, dc)| {
                    let (nr, nc) = (r as isize + dr, col as isize + dc);
                    nr < 0
                        || nc < 0
                        || nr >= h as isize
                        || nc >= w as isize
                        || !primitive.get(nr as usize, nc as usize)
                })
    };
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for col in 0..w {
            if edge(r, col) {
                data.extend_from_slice(&[1.0, 0.0, 0.0]);
            } else {
                let k = if concept.get(r, col) { 1.0 } else { 0.3 };
                data.extend(image.pixel(r, col).iter().map(|v| v * k));
            }
        }
    }
    Tensor3::new(h, w, 3, data)
}

/// Runs the full validation procedure; with `out`, writes report, CSV and overlays.
pub fn validate_ce(
    ds: &Dataset,
    source: &dyn ConceptSource,
    cfg: &ValidationConfig,
    out: Option<&Path>,
) -> Result<CorrectnessReport> {
    if ds.is_empty() {
        return Err(Error::invalid("dataset has no images"));
    }
    source.check(ds)?;
    let concept_ids = source.concept_ids();
    let importances = source.importances();
    if importances.len() != concept_ids.len() {
        return Err(Error::shape("one importance per concept is required"));
    }
    let primitive_ids = ds.primitive_ids();
    let important_ids = cfg
        .important
        .clone()
        .unwrap_or_else(|| ds.manifest.important_ids());
    if let Some(bad) = important_ids.iter().find(|id| !primitive_ids.contains(id)) {
        return Err(Error::invalid(format!("unknown primitive '{bad}'")));
    }
    let important: Vec<bool> = primitive_ids
        .iter()
        .map(|p| important_ids.contains(p))
        .collect();
    let t_dst = cfg
        .t_dst
        .unwrap_or_else(|| default_t_dst(ds.manifest.image_size));

    let per: Vec<ImagePairs> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let concepts = source.masks(ds, i)?;
            if concepts.len() != concept_ids.len() {
                return Err(Error::shape(format!(
                    "image {} has {} concept masks",
                    ds.image_id(i),
                    concepts.len()
                )));
            }
            image_pairs(&ds.load_masks(i)?, &concepts)
        })
        .collect::<Result<_>>()?;
    let mut acc = AssociationAccumulator::new(primitive_ids.len(), concept_ids.len());
    for p in &per {
        acc.add(p)?;
    }
    let association = acc.finish(primitive_ids, concept_ids)?;
    let alignment = associate(&association, &important, t_dst)?;
    let rc = representation_correctness(&alignment);
    let ic = importance_correctness(&alignment, &importances)?;
    let concepts = alignment
        .iter()
        .zip(&importances)
        .map(|(a, &imp)| ConceptRow {
            concept_id: a.concept_id.clone(),
            importance: imp,
            nearest_primitive: a.nearest_id.clone(),
            dst: a.dst,
            dst_norm: a.dst_norm,
            aligned: a.aligned,
        })
        .collect();
    let report = CorrectnessReport {
        dataset: ds.manifest.name.clone(),
        n_images: ds.len(),
        t_dst,
        important: important_ids,
        association,
        concepts,
        rc,
        ic,
        config: cfg.clone(),
    };

    if let Some(out) = out {
        fs::create_dir_all(out).at(out)?;
        let p = out.join(REPORT_FILE);
        fs::write(&p, serde_json::to_string_pretty(&report)? + "\n").at(&p)?;
        let p = out.join(CSV_FILE);
        fs::write(&p, report.to_csv()).at(&p)?;
        overlay_images(ds, cfg.max_overlays)
            .par_iter()
            .try_for_each(|&i| -> Result<()> {
                let image = ds.load_image(i)?;
                let prims = ds.load_masks(i)?;
                for (m, a) in source.masks(ds, i)?.iter().zip(&alignment) {
                    let o = overlay(&image, m, &prims[a.nearest])?;
                    imageio::save_image(
                        out.join("overlays")
                            .join(&a.concept_id)
                            .join(format!("{}.png", ds.image_id(i))),
                        &o,
                    )?;
                }
                Ok(())
            })?;
    }
    Ok(report)
}
