//! Rendering of single synthetic images with ground-truth primitive masks.

use rand::Rng;

use super::glyph::{Glyph, Placement};
use super::spec::DatasetSpec;
use super::texture::Fill;
use crate::error::{Error, Result};
use crate::tensor::{Mask2, Tensor3};

/// Placement attempts per glyph before the spec is declared overcrowded.
pub const MAX_PLACEMENT_RETRIES: usize = 100;
pub const MAX_ROTATION_DEG: f64 = 15.0;
/// Texture offsets are drawn from `[0, TEXTURE_OFFSET_RANGE)` per axis.
const TEXTURE_OFFSET_RANGE: u32 = 4096;

/// How one primitive was drawn in a particular image.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveInstance {
    pub present: bool,
    pub placement: Option<Placement>,
    pub fill: Fill,
    pub texture_offset: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    /// `h × w × 3`, values in `[0, 1]` on the 8-bit grid.
    pub image: Tensor3,
    pub label: usize,
    /// One mask per primitive, in spec order.
    pub masks: Vec<(String, Mask2)>,
    pub instances: Vec<PrimitiveInstance>,
}

impl ImageRecord {
    pub fn mask(&self, id: &str) -> Option<&Mask2> {
        self.masks.iter().find(|(n, _)| n == id).map(|(_, m)| m)
    }
}

/// Renders one image of class `class_idx`, sampling primitive appearance from `rng`.
pub fn render_image(
    spec: &DatasetSpec,
    class_idx: usize,
    rng: &mut impl Rng,
) -> Result<ImageRecord> {
    check_class(spec, class_idx)?;
    let presence: Vec<bool> = spec
        .primitives
        .iter()
        .map(|p| {
            let prob = p.appearance[class_idx];
            prob >= 1.0 || (prob > 0.0 && rng.random::<f64>() < prob)
        })
        .collect();
    render_with_presence(spec, class_idx, &presence, rng)
}

fn check_class(spec: &DatasetSpec, class_idx: usize) -> Result<()> {
    if class_idx >= spec.n_classes() {
        return Err(Error::OutOfRange {
            index: class_idx,
            len: spec.n_classes(),
        });
    }
    Ok(())
}

/// 8-neighbourhood dilation by one pixel.
fn dilate(m: &Mask2) -> Mask2 {
    let (h, w) = m.dims();
    Mask2::from_fn(h, w, |r, c| {
        let (r0, r1) = (r.saturating_sub(1), (r + 1).min(h - 1));
        let (c0, c1) = (c.saturating_sub(1), (c + 1).min(w - 1));
        (r0..=r1).any(|rr| (c0..=c1).any(|cc| m.get(rr, cc)))
    })
}

/// Renders one image with an explicit per-primitive presence vector.
///
/// The background is painted first; glyphs follow in spec order, each at a
/// uniformly random position that does not touch previously placed glyphs.
pub fn render_with_presence(
    spec: &DatasetSpec,
    class_idx: usize,
    presence: &[bool],
    rng: &mut impl Rng,
) -> Result<ImageRecord> {
    check_class(spec, class_idx)?;
    if presence.len() != spec.primitives.len() {
        return Err(Error::shape(
            "presence vector length differs from primitive count",
        ));
    }
    let size = spec.image_size;
    let mut masks: Vec<Mask2> = Vec::with_capacity(spec.primitives.len());
    let mut instances = Vec::with_capacity(spec.primitives.len());
    let mut occupied = Mask2::empty(size, size);
    // Paint order: background first, then glyphs in spec order.
    let mut order: Vec<usize> = (0..spec.primitives.len()).collect();
    order.sort_by_key(|&i| !spec.primitives[i].is_background());
    let mut slots: Vec<Option<(Mask2, PrimitiveInstance)>> = vec![None; spec.primitives.len()];
    let mut painted: Vec<usize> = Vec::new();

    for &pi in &order {
        let prim = &spec.primitives[pi];
        let fill = prim.fill_for(class_idx);
        let texture_offset = (
            rng.random_range(0..TEXTURE_OFFSET_RANGE),
            rng.random_range(0..TEXTURE_OFFSET_RANGE),
        );
        if !presence[pi] {
            slots[pi] = Some((
                Mask2::empty(size, size),
                PrimitiveInstance {
                    present: false,
                    placement: None,
                    fill,
                    texture_offset,
                },
            ));
            continue;
        }
        let (mask, placement) = if prim.is_background() {
            (Mask2::full(size, size), None)
        } else {
            let glyph = prim.glyphs[rng.random_range(0..prim.glyphs.len())];
            let (m, p) = place_glyph(glyph, prim.size_px, size, &occupied, rng).map_err(|attempts| {
                Error::Generation(format!(
                    "could not place {} ({glyph:?}) in {} after {attempts} attempts; spec is overcrowded",
                    prim.id, spec.name
                ))
            })?;
            occupied.union_with(&dilate(&m));
            (m, Some(p))
        };
        // Later primitives occlude earlier ones.
        for &earlier in &painted {
            if let Some((m, _)) = slots[earlier].as_mut() {
                m.subtract(&mask);
            }
        }
        painted.push(pi);
        slots[pi] = Some((
            mask,
            PrimitiveInstance {
                present: true,
                placement,
                fill,
                texture_offset,
            },
        ));
    }
    for slot in slots {
        let (m, inst) = slot.expect("every primitive visited");
        masks.push(m);
        instances.push(inst);
    }

    let mut pixels = vec![0.0f32; size * size * 3];
    for (m, inst) in masks.iter().zip(&instances) {
        for r in 0..size {
            for c in 0..size {
                if m.get(r, c) {
                    let rgb = inst.fill.color_at(r as u32, c as u32, inst.texture_offset);
                    let base = (r * size + c) * 3;
                    for k in 0..3 {
                        pixels[base + k] = f32::from(rgb[k]) / 255.0;
                    }
                }
            }
        }
    }
    Ok(ImageRecord {
        image: Tensor3::from_raw(size, size, 3, pixels),
        label: class_idx,
        masks: spec
            .primitives
            .iter()
            .map(|p| p.id.clone())
            .zip(masks)
            .collect(),
        instances,
    })
}

fn place_glyph(
    glyph: Glyph,
    size_px: (f64, f64),
    frame: usize,
    occupied: &Mask2,
    rng: &mut impl Rng,
) -> std::result::Result<(Mask2, Placement), usize> {
    let f = frame as f64;
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let height_px = if size_px.1 > size_px.0 {
            rng.random_range(size_px.0..=size_px.1)
        } else {
            size_px.0
        };
        let rotation_deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        let mut p = Placement {
            glyph,
            height_px,
            center: (0.0, 0.0),
            rotation_deg,
        };
        let (er, ec) = p.half_extent();
        if 2.0 * er >= f || 2.0 * ec >= f {
            continue;
        }
        p.center = (rng.random_range(er..=f - er), rng.random_range(ec..=f - ec));
        let m = p.rasterize(frame, frame);
        if m.is_empty() || m.intersects(occupied) {
            continue;
        }
        return Ok((m, p));
    }
    Err(MAX_PLACEMENT_RETRIES)
}
