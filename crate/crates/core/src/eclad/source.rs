//! Where activation and gradient taps come from.

use std::path::{Path, PathBuf};

use crate::ectf::TensorFile;
use crate::error::{Error, Result};
use crate::net::{GradTapSet, NetworkParams, TapSet};
use crate::synth::Dataset;

/// Supplies taps for images of a dataset.
pub trait TapSource: Sync {
    fn activations(&self, ds: &Dataset, i: usize) -> Result<TapSet>;

    /// Gradient of the class-`class_k` logit with respect to each tap.
    fn gradients(&self, ds: &Dataset, i: usize, class_k: usize) -> Result<GradTapSet>;

    /// Checks that taps exist for every image before a long run starts.
    fn check(&self, _ds: &Dataset) -> Result<()> {
        Ok(())
    }
}

/// Taps computed on the fly by a micronet.
#[derive(Debug, Clone)]
pub struct NetTapSource {
    pub params: NetworkParams,
}

impl TapSource for NetTapSource {
    fn activations(&self, ds: &Dataset, i: usize) -> Result<TapSet> {
        Ok(self.params.forward(&ds.load_image(i)?)?.1)
    }

    fn gradients(&self, ds: &Dataset, i: usize, class_k: usize) -> Result<GradTapSet> {
        self.params.backward_to_taps(&ds.load_image(i)?, class_k)
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if ds.n_classes() != self.params.n_classes() {
            return Err(Error::invalid(format!(
                "dataset has {} classes, network {}",
                ds.n_classes(),
                self.params.n_classes()
            )));
        }
        Ok(())
    }
}

/// A directory of `<image_id>.acts.ectf` and `<image_id>.class<k>.grads.ectf` files.
#[derive(Debug, Clone)]
pub struct TapDirSource {
    pub dir: PathBuf,
}

pub fn acts_file_name(image_id: &str) -> String {
    format!("{image_id}.acts.ectf")
}

pub fn grads_file_name(image_id: &str, class_k: usize) -> String {
    format!("{image_id}.class{class_k}.grads.ectf")
}

impl TapDirSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl TapSource for TapDirSource {
    fn activations(&self, ds: &Dataset, i: usize) -> Result<TapSet> {
        Ok(TensorFile::load(self.dir.join(acts_file_name(ds.image_id(i))))?.entries)
    }

    fn gradients(&self, ds: &Dataset, i: usize, class_k: usize) -> Result<GradTapSet> {
        let f = TensorFile::load(self.dir.join(grads_file_name(ds.image_id(i), class_k)))?;
        Ok(GradTapSet {
            class_k,
            grads: f.entries,
        })
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        let mut missing = Vec::new();
        for i in 0..ds.len() {
            let id = ds.image_id(i);
            let mut names = vec![acts_file_name(id)];
            names.extend((0..ds.n_classes()).map(|k| grads_file_name(id, k)));
            missing.extend(
                names
                    .into_iter()
                    .map(|n| self.dir.join(n))
                    .filter(|p| !p.is_file()),
            );
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingFiles(missing))
        }
    }
}

/// Dumps every tap of `source` into `dir` in the tap-directory layout.
pub fn write_tap_dir(source: &dyn TapSource, ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    use rayon::prelude::*;
    let dir = dir.as_ref();
    (0..ds.len())
        .into_par_iter()
        .try_for_each(|i| -> Result<()> {
            let id = ds.image_id(i);
            TensorFile {
                entries: source.activations(ds, i)?,
            }
            .save(dir.join(acts_file_name(id)))?;
            for k in 0..ds.n_classes() {
                TensorFile {
                    entries: source.gradients(ds, i, k)?.grads,
                }
                .save(dir.join(grads_file_name(id, k)))?;
            }
            Ok(())
        })
}
