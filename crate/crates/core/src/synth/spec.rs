//! Dataset recipes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::glyph::Glyph;
use super::texture::{Fill, Texture, BLUE, CYAN, GRAY, GREEN, MAGENTA, PURPLE, RED, YELLOW};
use crate::error::{Error, Result};

/// Image size the built-in recipes are expressed at.
pub const REFERENCE_SIZE: usize = 224;
pub const DEFAULT_PER_CLASS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementRule {
    RandomNonOverlapping,
    FullFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub id: String,
    /// Candidate glyphs; one is drawn uniformly per image.
    pub glyphs: Vec<Glyph>,
    pub fill: Fill,
    /// Per-class fill override (indexed by class), used when a class is defined by color.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_fills: Option<Vec<Fill>>,
    /// Glyph height range in pixels at the spec's image size.
    pub size_px: (f64, f64),
    pub placement: PlacementRule,
    pub important: bool,
    /// Appearance probability per class.
    pub appearance: Vec<f64>,
}

impl PrimitiveSpec {
    pub fn is_background(&self) -> bool {
        self.placement == PlacementRule::FullFrame
    }

    pub fn fill_for(&self, class_idx: usize) -> Fill {
        self.class_fills
            .as_ref()
            .and_then(|f| f.get(class_idx).copied())
            .unwrap_or(self.fill)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    AB,
    ABplus,
    BigSmall,
    CO,
    #[serde(rename = "colorGB")]
    ColorGB,
    #[serde(rename = "isA")]
    IsA,
}

impl DatasetName {
    pub const ALL: [DatasetName; 6] = [
        Self::AB,
        Self::ABplus,
        Self::BigSmall,
        Self::CO,
        Self::ColorGB,
        Self::IsA,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AB => "AB",
            Self::ABplus => "ABplus",
            Self::BigSmall => "BigSmall",
            Self::CO => "CO",
            Self::ColorGB => "colorGB",
            Self::IsA => "isA",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| {
                n.as_str().eq_ignore_ascii_case(s)
                    || (s.eq_ignore_ascii_case("big-small") && *n == Self::BigSmall)
            })
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown dataset '{s}' (expected one of {})",
                    Self::ALL.map(|n| n.as_str()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub classes: Vec<String>,
    pub primitives: Vec<PrimitiveSpec>,
    pub image_size: usize,
    pub per_class_count: usize,
}

impl DatasetSpec {
    pub fn builtin(name: DatasetName) -> Self {
        builtin_specs()
            .into_iter()
            .find(|s| s.name == name)
            .expect("every name has a builtin spec")
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn primitive_index(&self, id: &str) -> Option<usize> {
        self.primitives.iter().position(|p| p.id == id)
    }

    pub fn important_ids(&self) -> Vec<String> {
        self.primitives
            .iter()
            .filter(|p| p.important)
            .map(|p| p.id.clone())
            .collect()
    }

    /// Rescales glyph sizes for a different square image size.
    pub fn with_image_size(mut self, size: usize) -> Self {
        let k = size as f64 / self.image_size as f64;
        for p in &mut self.primitives {
            p.size_px = (p.size_px.0 * k, p.size_px.1 * k);
        }
        self.image_size = size;
        self
    }

    pub fn with_per_class(mut self, n: usize) -> Self {
        self.per_class_count = n;
        self
    }

    /// Checks the structural rules every recipe must satisfy.
    pub fn validate(&self) -> Result<()> {
        let nk = self.classes.len();
        if nk < 2 {
            return Err(Error::invalid("a dataset needs at least two classes"));
        }
        if self.primitives.is_empty() {
            return Err(Error::invalid("a dataset needs at least one primitive"));
        }
        if self.image_size == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        let n_bg = self.primitives.iter().filter(|p| p.is_background()).count();
        if n_bg != 1 {
            return Err(Error::invalid(format!(
                "expected exactly one background primitive, found {n_bg}"
            )));
        }
        for p in &self.primitives {
            if p.appearance.len() != nk {
                return Err(Error::invalid(format!(
                    "primitive {} appearance has wrong length",
                    p.id
                )));
            }
            if p.appearance.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::invalid(format!(
                    "primitive {} has probability outside [0,1]",
                    p.id
                )));
            }
            if !p.is_background() && p.glyphs.is_empty() {
                return Err(Error::invalid(format!("primitive {} has no glyphs", p.id)));
            }
            if !p.important && p.appearance.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::invalid(format!(
                    "unimportant primitive {} must appear equally in every class",
                    p.id
                )));
            }
            if let Some(f) = &p.class_fills {
                if f.len() != nk {
                    return Err(Error::invalid(format!(
                        "primitive {} class fills have wrong length",
                        p.id
                    )));
                }
            }
        }
        for k in 0..nk {
            if !self
                .primitives
                .iter()
                .any(|p| p.important && p.appearance[k] == 1.0)
            {
                return Err(Error::invalid(format!(
                    "class {} has no important primitive that always appears",
                    self.classes[k]
                )));
            }
        }
        Ok(())
    }
}

fn glyph_prim(
    id: &str,
    glyphs: &[Glyph],
    fill: Fill,
    size: (f64, f64),
    important: bool,
    appearance: &[f64],
) -> PrimitiveSpec {
    PrimitiveSpec {
        id: id.into(),
        glyphs: glyphs.to_vec(),
        fill,
        class_fills: None,
        size_px: size,
        placement: PlacementRule::RandomNonOverlapping,
        important,
        appearance: appearance.to_vec(),
    }
}

fn background(id: &str, fill: Fill) -> PrimitiveSpec {
    PrimitiveSpec {
        id: id.into(),
        glyphs: vec![Glyph::Background],
        fill,
        class_fills: None,
        size_px: (REFERENCE_SIZE as f64, REFERENCE_SIZE as f64),
        placement: PlacementRule::FullFrame,
        important: false,
        appearance: vec![1.0, 1.0],
    }
}

fn spec(name: DatasetName, classes: [&str; 2], primitives: Vec<PrimitiveSpec>) -> DatasetSpec {
    DatasetSpec {
        name,
        classes: classes.map(String::from).to_vec(),
        primitives,
        image_size: REFERENCE_SIZE,
        per_class_count: DEFAULT_PER_CLASS,
    }
}

/// The six built-in recipes, at 224×224 with 200 images per class.
pub fn builtin_specs() -> Vec<DatasetSpec> {
    use Glyph::*;
    let tex = Fill::Texture;
    const MAIN: (f64, f64) = (80.0, 100.0);
    const PLUS: (f64, f64) = (48.0, 64.0);
    const SMALL: (f64, f64) = (40.0, 56.0);
    let only0 = [1.0, 0.0];
    let only1 = [0.0, 1.0];
    let always = [1.0, 1.0];
    let half = [0.5, 0.5];

    let mut color_gb_p1 = glyph_prim("p1", &[A, B], Fill::Solid(BLUE), MAIN, true, &always);
    color_gb_p1.class_fills = Some(vec![Fill::Solid(BLUE), Fill::Solid(GREEN)]);

    vec![
        spec(
            DatasetName::AB,
            ["A", "B"],
            vec![
                glyph_prim("p1", &[A], tex(Texture::Cork), MAIN, true, &only0),
                glyph_prim("p2", &[B], Fill::Solid(GREEN), MAIN, true, &only1),
                glyph_prim("p3", &[Plus], tex(Texture::Cotton), PLUS, false, &always),
                background("p4", tex(Texture::OrangePeel)),
            ],
        ),
        spec(
            DatasetName::ABplus,
            ["A", "B"],
            vec![
                glyph_prim("p1", &[A], tex(Texture::AluminumFoil), MAIN, true, &only0),
                glyph_prim("p2", &[B], Fill::Solid(GREEN), MAIN, true, &only1),
                glyph_prim("p3", &[Plus], Fill::Solid(RED), SMALL, false, &half),
                glyph_prim("p4", &[Star], Fill::Solid(YELLOW), SMALL, false, &half),
                glyph_prim("p5", &[Slash], Fill::Solid(CYAN), SMALL, false, &half),
                glyph_prim("p6", &[Hash], Fill::Solid(MAGENTA), SMALL, false, &half),
                glyph_prim("p7", &[X], Fill::Solid(PURPLE), SMALL, false, &half),
                background("p8", tex(Texture::Sponge)),
            ],
        ),
        spec(
            DatasetName::BigSmall,
            ["big", "small"],
            vec![
                glyph_prim("p1", &[B], Fill::Solid(BLUE), (100.0, 100.0), true, &only0),
                glyph_prim("p2", &[B], Fill::Solid(BLUE), (40.0, 40.0), true, &only1),
                glyph_prim("p3", &[Plus], tex(Texture::Cotton), PLUS, false, &always),
                background("p4", tex(Texture::Cork)),
            ],
        ),
        spec(
            DatasetName::CO,
            ["C", "O"],
            vec![
                glyph_prim("p1", &[C], tex(Texture::AluminumFoil), MAIN, true, &only0),
                glyph_prim("p2", &[O], tex(Texture::AluminumFoil), MAIN, true, &only1),
                glyph_prim("p3", &[Plus], tex(Texture::Cotton), PLUS, false, &always),
                background("p4", tex(Texture::Cork)),
            ],
        ),
        spec(
            DatasetName::ColorGB,
            ["B", "G"],
            vec![
                color_gb_p1,
                glyph_prim(
                    "p2",
                    &[C, D],
                    Fill::Solid(GREEN),
                    (64.0, 80.0),
                    false,
                    &[2.0 / 3.0, 2.0 / 3.0],
                ),
                glyph_prim("p3", &[Plus], tex(Texture::Cotton), PLUS, false, &always),
                background("p4", tex(Texture::OrangePeel)),
            ],
        ),
        spec(
            DatasetName::IsA,
            ["isA", "notA"],
            vec![
                glyph_prim("p1", &[A], Fill::Solid(BLUE), MAIN, true, &only0),
                glyph_prim(
                    "p2",
                    &[B, C, D, E, F, G, H],
                    Fill::Solid(BLUE),
                    MAIN,
                    true,
                    &only1,
                ),
                background("p3", Fill::Solid(GRAY)),
            ],
        ),
    ]
}
