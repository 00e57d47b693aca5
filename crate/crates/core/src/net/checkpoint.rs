//! Parameter checkpoints: an ECTF file of parameter tensors plus a JSON sidecar.
//!
//! Tensor shapes inside the container:
//! - `stage<i>.kernel`: `(k*k, c_in, c_out)`
//! - `stage<i>.bias`: `(1, 1, c_out)`
//! - `head.weight`: `(n_classes, inputs, 1)`
//! - `head.bias`: `(1, 1, n_classes)`

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ConvParams, NetworkParams};
use crate::ectf::TensorFile;
use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor3;

pub const CHECKPOINT_TENSORS: &str = "params.ectf";
pub const CHECKPOINT_JSON: &str = "architecture.json";

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    architecture: Architecture,
    tensors: String,
}

fn take(file: &TensorFile, name: &str, shape: (usize, usize, usize)) -> Result<Vec<f32>> {
    let t = file.get(name).ok_or_else(|| Error::Format {
        what: "checkpoint",
        detail: format!("missing tensor {name}"),
    })?;
    if t.shape() != shape {
        return Err(Error::Format {
            what: "checkpoint",
            detail: format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
        });
    }
    Ok(t.data().to_vec())
}

impl NetworkParams {
    pub fn to_tensor_file(&self) -> Result<TensorFile> {
        let a = &self.arch;
        let mut f = TensorFile::new();
        for (i, (s, p)) in a.stages.iter().zip(&self.stages).enumerate() {
            let cin = a.stage_in_channels(i);
            f.push(
                format!("stage{}.kernel", i + 1),
                Tensor3::new(s.kernel * s.kernel, cin, s.out_channels, p.kernel.clone())?,
            );
            f.push(
                format!("stage{}.bias", i + 1),
                Tensor3::new(1, 1, s.out_channels, p.bias.clone())?,
            );
        }
        f.push(
            "head.weight",
            Tensor3::new(a.n_classes, a.head_inputs(), 1, self.head_weight.clone())?,
        );
        f.push(
            "head.bias",
            Tensor3::new(1, 1, a.n_classes, self.head_bias.clone())?,
        );
        Ok(f)
    }

    pub fn from_tensor_file(arch: &Architecture, file: &TensorFile) -> Result<Self> {
        arch.validate()?;
        let stages = arch
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let cin = arch.stage_in_channels(i);
                Ok(ConvParams {
                    kernel: take(
                        file,
                        &format!("stage{}.kernel", i + 1),
                        (s.kernel * s.kernel, cin, s.out_channels),
                    )?,
                    bias: take(
                        file,
                        &format!("stage{}.bias", i + 1),
                        (1, 1, s.out_channels),
                    )?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            arch: arch.clone(),
            stages,
            head_weight: take(file, "head.weight", (arch.n_classes, arch.head_inputs(), 1))?,
            head_bias: take(file, "head.bias", (1, 1, arch.n_classes))?,
        })
    }
}

/// Writes `params.ectf` and `architecture.json` into `dir`.
pub fn save_checkpoint(params: &NetworkParams, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).at(dir)?;
    params
        .to_tensor_file()?
        .save(dir.join(CHECKPOINT_TENSORS))?;
    let side = Sidecar {
        architecture: params.arch.clone(),
        tensors: CHECKPOINT_TENSORS.into(),
    };
    let p = dir.join(CHECKPOINT_JSON);
    fs::write(&p, serde_json::to_string_pretty(&side)?).at(&p)?;
    Ok(())
}

/// Loads a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<NetworkParams> {
    let dir = dir.as_ref();
    let p = dir.join(CHECKPOINT_JSON);
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(&p).at(&p)?)?;
    let file = TensorFile::load(dir.join(&side.tensors))?;
    NetworkParams::from_tensor_file(&side.architecture, &file)
}
