//! Config file sections. Command-line flags override file values, which override defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use eclad::eclad::EcladConfig;
use eclad::net::Hyper;
use eclad::validation::{ValidationConfig, RING_WIDTH, STUDY_FRAME};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub gen_data: GenDataConfig,
    pub train: TrainConfig,
    pub extract: EcladConfig,
    pub validate: ValidationConfig,
    pub ablate: AblateConfig,
    pub metric_study: MetricStudyConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub name: Option<String>,
    pub size: Option<usize>,
    pub per_class: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub hyper: Hyper,
    /// Output channels per stage.
    pub channels: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper: Hyper::default(),
            channels: vec![16, 32, 64, 64],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AblationAxis {
    Layers,
    #[value(name = "n-c", alias = "n_c")]
    #[serde(rename = "n-c", alias = "n_c")]
    NC,
    Interp,
}

impl AblationAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Layers => "layers",
            Self::NC => "n-c",
            Self::Interp => "interp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub axis: Option<AblationAxis>,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Offset,
    Surround,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricStudyConfig {
    pub kind: StudyKind,
    pub glyph: String,
    pub frame: usize,
    pub offsets: Vec<usize>,
    pub gaps: Vec<usize>,
    pub ring_width: usize,
}

impl Default for MetricStudyConfig {
    fn default() -> Self {
        Self {
            kind: StudyKind::Offset,
            glyph: "A".into(),
            frame: STUDY_FRAME,
            offsets: (0..=64).step_by(8).collect(),
            gaps: vec![0, 4, 8, 16],
            ring_width: RING_WIDTH,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_fill_defaults() {
        let c: FileConfig = toml::from_str(
            "seed = 3\n[train]\nlr = 0.05\n[extract]\nn_c = 8\nmode = \"bicubic\"\n[metric_study]\nkind = \"surround\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.train.hyper.lr, 0.05);
        assert_eq!(c.train.hyper.epochs, Hyper::default().epochs);
        assert_eq!(c.train.channels, vec![16, 32, 64, 64]);
        assert_eq!(c.extract.n_c, 8);
        assert_eq!(c.extract.n_i, 2);
        assert_eq!(c.metric_study.kind, StudyKind::Surround);
        assert_eq!(c.metric_study.offsets.len(), 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("bogus = 1\n").is_err());
        assert!(toml::from_str::<FileConfig>("[ablate]\naxes = \"n-c\"\n").is_err());
    }
}
