//! The end-to-end global extraction run and its on-disk outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::concepts::{fit_concepts, render_examples, ConceptModel, FitConfig, Standardization};
use super::descriptor::{
    compute_descriptor, compute_gradient_field, select_layers, DescriptorField, LayerInfo,
};
use super::scoring::{image_sensitivity, score_concepts, ImageSensitivity, ImportanceReport};
use super::source::TapSource;
use crate::ectf::TensorFile;
use crate::error::{Error, IoContext, Result};
use crate::imageio;
use crate::net::TapSet;
use crate::resize::UpscaleMode;
use crate::synth::{derive_seed, Dataset};
use crate::tensor::Mask2;

pub const REPORT_FILE: &str = "eclad_report.json";
pub const IMPORTANCES_FILE: &str = "importances.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcladConfig {
    /// Tap names to aggregate; all taps of the source when absent.
    pub layers: Option<Vec<String>>,
    pub n_c: usize,
    pub n_i: usize,
    pub lambda: f32,
    pub mode: UpscaleMode,
    pub seed: u64,
    pub epochs: usize,
    pub standardize: bool,
    /// Images used per class, taken in manifest order.
    pub max_per_class: Option<usize>,
    /// Descriptors are built at `image_size / downscale`.
    pub downscale: usize,
    /// Example images written per concept.
    pub max_examples: usize,
}

impl Default for EcladConfig {
    fn default() -> Self {
        Self {
            layers: None,
            n_c: 10,
            n_i: 2,
            lambda: 0.3,
            mode: UpscaleMode::Bilinear,
            seed: 0,
            epochs: 1,
            standardize: false,
            max_per_class: Some(200),
            downscale: 1,
            max_examples: 20,
        }
    }
}

impl EcladConfig {
    fn validate(&self, image_size: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid(format!(
                "lambda {} outside (0, 1]",
                self.lambda
            )));
        }
        if self.downscale == 0 || !image_size.is_multiple_of(self.downscale) {
            return Err(Error::invalid(format!(
                "downscale {} does not divide the image size {image_size}",
                self.downscale
            )));
        }
        if self.n_c == 0 || self.n_i == 0 || self.epochs == 0 {
            return Err(Error::invalid("n_c, n_i and epochs must be positive"));
        }
        Ok(())
    }
}

pub fn concept_id(j: usize) -> String {
    format!("c{j}")
}

/// Everything needed to rebuild the concept model, plus its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcladReport {
    pub dataset: String,
    pub classes: Vec<String>,
    pub n_concepts: usize,
    pub concept_ids: Vec<String>,
    pub layers: Vec<LayerInfo>,
    pub c_star: usize,
    pub descriptor_size: usize,
    pub mode: UpscaleMode,
    pub standardization: Option<Standardization>,
    /// Base64 of an ECTF file holding a `(n_c, 1, c*)` tensor named `centroids`.
    pub centroids: String,
    pub cluster_counts: Vec<u64>,
    pub cs: Vec<Vec<f64>>,
    pub ri: Vec<f64>,
    pub k_of: Vec<usize>,
    pub pixel_counts: Vec<Vec<u64>>,
    pub degenerate: bool,
    /// Image ids in clustering stream order.
    pub images: Vec<String>,
    pub examples: BTreeMap<String, Vec<String>>,
    pub config: EcladConfig,
}

impl EcladReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&fs::read_to_string(path).at(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").at(path)
    }

    pub fn model(&self) -> Result<ConceptModel> {
        let bytes = B64.decode(&self.centroids).map_err(|e| Error::Format {
            what: "report",
            detail: format!("centroids are not valid base64: {e}"),
        })?;
        let centroids = ConceptModel::centroids_from_tensor_file(&TensorFile::from_bytes(&bytes)?)?;
        let model = ConceptModel {
            centroids,
            layers: self.layers.clone(),
            mode: self.mode,
            standardization: self.standardization.clone(),
            counts: self.cluster_counts.clone(),
        };
        if model.n_c() != self.n_concepts
            || model.centroids.iter().any(|c| c.len() != model.c_star())
        {
            return Err(Error::Format {
                what: "report",
                detail: "centroid tensor does not match the layer list".into(),
            });
        }
        Ok(model)
    }

    pub fn importance(&self) -> ImportanceReport {
        ImportanceReport {
            cs: self.cs.clone(),
            ri: self.ri.clone(),
            k_of: self.k_of.clone(),
            pixel_counts: self.pixel_counts.clone(),
            degenerate: self.degenerate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EcladOutput {
    pub model: ConceptModel,
    pub importance: ImportanceReport,
    pub report: EcladReport,
}

/// Images used for extraction: at most `max_per_class` per class, in manifest order.
pub fn select_images(ds: &Dataset, max_per_class: Option<usize>) -> Vec<usize> {
    let mut seen = vec![0usize; ds.n_classes()];
    (0..ds.len())
        .filter(|&i| {
            let k = ds.label(i);
            seen[k] += 1;
            max_per_class.is_none_or(|m| seen[k] <= m)
        })
        .collect()
}

/// Seeded per-class shuffles, interleaved class by class so every minibatch mixes classes.
pub fn stream_order(ds: &Dataset, selected: &[usize], seed: u64) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for &i in selected {
        per_class[ds.label(i)].push(i);
    }
    for (k, v) in per_class.iter_mut().enumerate() {
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            seed, k as u64, 0x57E4,
        ])));
    }
    let longest = per_class.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .flat_map(|r| per_class.iter().filter_map(move |v| v.get(r).copied()))
        .collect()
}

/// Builds descriptors and gradient fields for one image with a fixed layer list and size.
pub struct FieldBuilder<'a> {
    pub source: &'a dyn TapSource,
    pub ds: &'a Dataset,
    pub layers: Vec<String>,
    pub target: (usize, usize),
    pub mode: UpscaleMode,
}

impl FieldBuilder<'_> {
    pub fn descriptor(&self, i: usize) -> Result<DescriptorField> {
        let taps = select_layers(&self.source.activations(self.ds, i)?, &self.layers)?;
        compute_descriptor(&taps, self.target, self.mode)
    }

    pub fn gradient(&self, i: usize, k: usize) -> Result<super::descriptor::GradientField> {
        let mut g = self.source.gradients(self.ds, i, k)?;
        g.grads = select_layers(&g.grads, &self.layers)?;
        compute_gradient_field(&g, self.target, self.mode)
    }

    /// Concept masks at full image resolution.
    pub fn masks(&self, model: &ConceptModel, i: usize) -> Result<Vec<Mask2>> {
        let size = self.ds.manifest.image_size;
        model
            .masks(&self.descriptor(i)?)?
            .iter()
            .map(|m| upsample_mask(m, size, size))
            .collect()
    }
}

/// Nearest-neighbour resize of a mask to `h × w` (half-pixel mapping).
pub fn upsample_mask(m: &Mask2, h: usize, w: usize) -> Result<Mask2> {
    let (mh, mw) = m.dims();
    if (mh, mw) == (h, w) {
        return Ok(m.clone());
    }
    let map = |dst: usize, src: usize, n: usize| {
        (((dst as f64 + 0.5) * src as f64 / n as f64).floor() as usize).min(src - 1)
    };
    Ok(Mask2::from_fn(h, w, |r, c| {
        m.get(map(r, mh, h), map(c, mw, w))
    }))
}

/// Concept masks of one image from its activation taps, at `image_size` resolution.
pub fn localize_taps(
    model: &ConceptModel,
    taps: &TapSet,
    descriptor_size: usize,
    image_size: (usize, usize),
) -> Result<Vec<Mask2>> {
    let names: Vec<String> = model.layers.iter().map(|l| l.name.clone()).collect();
    let d = compute_descriptor(
        &select_layers(taps, &names)?,
        (descriptor_size, descriptor_size),
        model.mode,
    )?;
    model
        .masks(&d)?
        .iter()
        .map(|m| upsample_mask(m, image_size.0, image_size.1))
        .collect()
}

fn layer_names(
    source: &dyn TapSource,
    ds: &Dataset,
    first: usize,
    cfg: &EcladConfig,
) -> Result<Vec<String>> {
    match &cfg.layers {
        Some(l) if l.is_empty() => Err(Error::invalid("layer list is empty")),
        Some(l) => Ok(l.clone()),
        None => Ok(source
            .activations(ds, first)?
            .into_iter()
            .map(|(n, _)| n)
            .collect()),
    }
}

/// Runs global extraction. With `out`, writes the report and example images there.
pub fn run_eclad(
    source: &dyn TapSource,
    ds: &Dataset,
    cfg: &EcladConfig,
    out: Option<&Path>,
) -> Result<EcladOutput> {
    let size = ds.manifest.image_size;
    cfg.validate(size)?;
    if ds.is_empty() {
        return Err(Error::invalid("dataset has no images"));
    }
    source.check(ds)?;
    let selected = select_images(ds, cfg.max_per_class);
    let order = stream_order(ds, &selected, cfg.seed);
    let builder = FieldBuilder {
        source,
        ds,
        layers: layer_names(source, ds, order[0], cfg)?,
        target: (size / cfg.downscale, size / cfg.downscale),
        mode: cfg.mode,
    };
    log::info!(
        "clustering {} images, layers {:?}",
        order.len(),
        builder.layers
    );

    let fit = FitConfig {
        n_c: cfg.n_c,
        n_i: cfg.n_i,
        seed: cfg.seed,
        epochs: cfg.epochs,
        standardize: cfg.standardize,
        mode: cfg.mode,
    };
    let model = fit_concepts(|| order.iter().map(|&i| builder.descriptor(i)), &fit)?;

    log::info!("scoring {} concepts", model.n_c());
    let n_classes = ds.n_classes();
    let per_image: Vec<ImageSensitivity> = selected
        .par_iter()
        .map(|&i| {
            let d = builder.descriptor(i)?;
            let masks = model.masks(&d)?;
            let grads = (0..n_classes)
                .map(|k| builder.gradient(i, k))
                .collect::<Result<Vec<_>>>()?;
            image_sensitivity(&d, &masks, &grads, ds.label(i))
        })
        .collect::<Result<_>>()?;
    let importance = score_concepts(&per_image, n_classes)?;

    // Examples: the first images (manifest order) in which each concept appears.
    let mut examples: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let wanted: Vec<Vec<usize>> = (0..model.n_c())
        .map(|j| {
            selected
                .iter()
                .zip(&per_image)
                .filter(|(_, s)| s.counts[j] > 0)
                .take(cfg.max_examples)
                .map(|(&i, _)| i)
                .collect()
        })
        .collect();
    for (j, w) in wanted.iter().enumerate() {
        examples.insert(
            concept_id(j),
            w.iter().map(|&i| ds.image_id(i).to_string()).collect(),
        );
    }

    let report = EcladReport {
        dataset: ds.manifest.name.clone(),
        classes: ds.manifest.classes.clone(),
        n_concepts: model.n_c(),
        concept_ids: (0..model.n_c()).map(concept_id).collect(),
        layers: model.layers.clone(),
        c_star: model.c_star(),
        descriptor_size: builder.target.0,
        mode: model.mode,
        standardization: model.standardization.clone(),
        centroids: B64.encode(model.to_tensor_file()?.to_bytes()),
        cluster_counts: model.counts.clone(),
        cs: importance.cs.clone(),
        ri: importance.ri.clone(),
        k_of: importance.k_of.clone(),
        pixel_counts: importance.pixel_counts.clone(),
        degenerate: importance.degenerate,
        images: order.iter().map(|&i| ds.image_id(i).to_string()).collect(),
        examples,
        config: cfg.clone(),
    };

    if let Some(out) = out {
        fs::create_dir_all(out).at(out)?;
        report.save(out.join(REPORT_FILE))?;
        let mut needed: Vec<usize> = wanted.iter().flatten().copied().collect();
        needed.sort_unstable();
        needed.dedup();
        needed.par_iter().try_for_each(|&i| -> Result<()> {
            let masks = builder.masks(&model, i)?;
            let image = ds.load_image(i)?;
            for (j, w) in wanted.iter().enumerate() {
                if w.contains(&i) {
                    let ex = render_examples(&image, &masks[j], cfg.lambda)?;
                    let p = out
                        .join("concepts")
                        .join(concept_id(j))
                        .join(format!("{}.png", ds.image_id(i)));
                    imageio::save_image(p, &ex)?;
                }
            }
            Ok(())
        })?;
    }

    Ok(EcladOutput {
        model,
        importance,
        report,
    })
}

/// Writes `concepts/<concept>/<image_id>.png` masks for every image plus `importances.json`.
pub fn write_localization(
    source: &dyn TapSource,
    ds: &Dataset,
    report: &EcladReport,
    dir: impl AsRef<Path>,
) -> Result<usize> {
    let dir = dir.as_ref();
    let model = report.model()?;
    let size = ds.manifest.image_size;
    source.check(ds)?;
    let builder = FieldBuilder {
        source,
        ds,
        layers: model.layers.iter().map(|l| l.name.clone()).collect(),
        target: (report.descriptor_size, report.descriptor_size),
        mode: model.mode,
    };
    if report.descriptor_size == 0 || !size.is_multiple_of(report.descriptor_size) {
        return Err(Error::invalid(
            "report descriptor size does not divide the image size",
        ));
    }
    (0..ds.len())
        .into_par_iter()
        .try_for_each(|i| -> Result<()> {
            for (j, m) in builder.masks(&model, i)?.iter().enumerate() {
                imageio::save_mask(
                    dir.join("concepts")
                        .join(concept_id(j))
                        .join(format!("{}.png", ds.image_id(i))),
                    m,
                )?;
            }
            Ok(())
        })?;
    let imp: BTreeMap<String, f64> = report
        .concept_ids
        .iter()
        .cloned()
        .zip(report.ri.iter().copied())
        .collect();
    let p = dir.join(IMPORTANCES_FILE);
    fs::write(&p, serde_json::to_string_pretty(&imp)? + "\n").at(&p)?;
    Ok(ds.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_nearest() {
        let m = Mask2::new(2, 2, vec![true, false, false, true]).unwrap();
        let u = upsample_mask(&m, 4, 4).unwrap();
        assert_eq!(u.count(), 8);
        assert!(u.get(0, 1) && !u.get(0, 2) && u.get(3, 3));
    }

    #[test]
    fn default_config_mirrors_reference_settings() {
        let c = EcladConfig::default();
        assert_eq!((c.n_c, c.n_i, c.max_per_class), (10, 2, Some(200)));
        assert_eq!(c.lambda, 0.3);
        assert!(c.validate(64).is_ok());
        assert!(EcladConfig {
            downscale: 3,
            ..c.clone()
        }
        .validate(64)
        .is_err());
        assert!(EcladConfig { lambda: 0.0, ..c }.validate(64).is_err());
    }
}
