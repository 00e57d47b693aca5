//! Embedded stroke-outline glyphs and their exact rasterization.
//!
//! Each glyph is a set of line segments in a box of height 1 and width
//! [`Glyph::aspect`]. A pixel belongs to the glyph when its center lies within
//! half a stroke width of any segment, so rasterization has no anti-aliasing
//! and masks are exact.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::tensor::Mask2;

/// Stroke width as a fraction of glyph height.
const STROKE: f64 = 0.17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Glyph {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    O,
    X,
    Plus,
    Star,
    Slash,
    Hash,
    Background,
}

type Seg = ((f64, f64), (f64, f64));

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64, out: &mut Vec<Seg>) {
    let steps = 24;
    let pt = |t: f64| {
        let a = (from_deg + (to_deg - from_deg) * t) * PI / 180.0;
        (cx + rx * a.cos(), cy + ry * a.sin())
    };
    for i in 0..steps {
        out.push((
            pt(i as f64 / steps as f64),
            pt((i + 1) as f64 / steps as f64),
        ));
    }
}

impl Glyph {
    /// Box width relative to a height of 1.
    pub fn aspect(&self) -> f64 {
        match self {
            Glyph::A => 0.82,
            Glyph::B | Glyph::D | Glyph::E | Glyph::F => 0.68,
            Glyph::C | Glyph::G | Glyph::O => 0.85,
            Glyph::H => 0.72,
            Glyph::X => 0.8,
            Glyph::Slash => 0.55,
            Glyph::Plus | Glyph::Star | Glyph::Hash | Glyph::Background => 1.0,
        }
    }

    fn segments(&self) -> Vec<Seg> {
        // Stroke centerlines are inset by half a stroke so the painted glyph
        // stays inside its box.
        let i = STROKE / 2.0;
        let w = self.aspect();
        let mut s: Vec<Seg> = Vec::new();
        match self {
            Glyph::A => {
                let apex = (w / 2.0, i);
                s.push(((i, 1.0 - i), apex));
                s.push((apex, (w - i, 1.0 - i)));
                let y = 0.64;
                let t = (y - i) / (1.0 - 2.0 * i);
                let lx = apex.0 + (i - apex.0) * t;
                s.push(((lx, y), (w - lx, y)));
            }
            Glyph::B => {
                let r_top = (0.5 - i) / 2.0;
                let r_bot = (0.5 - i) / 2.0 + 0.0;
                s.push(((i, i), (i, 1.0 - i)));
                let xt = w - i - r_top * 1.1;
                s.push(((i, i), (xt, i)));
                arc(xt, i + r_top, r_top * 1.1, r_top, -90.0, 90.0, &mut s);
                s.push(((i, 0.5), (xt, 0.5)));
                let xb = w - i - r_bot * 1.25;
                s.push(((i, 0.5), (xb, 0.5)));
                arc(xb, 0.5 + r_bot, r_bot * 1.25, r_bot, -90.0, 90.0, &mut s);
                s.push(((i, 1.0 - i), (xb, 1.0 - i)));
            }
            Glyph::C => arc(w / 2.0, 0.5, w / 2.0 - i, 0.5 - i, 45.0, 315.0, &mut s),
            Glyph::G => {
                arc(w / 2.0, 0.5, w / 2.0 - i, 0.5 - i, 45.0, 340.0, &mut s);
                let ex = w / 2.0 + (w / 2.0 - i) * (20f64.to_radians()).cos();
                s.push(((w / 2.0, 0.58), (ex, 0.58)));
                s.push((
                    (ex, 0.58),
                    (ex, 0.5 + (0.5 - i) * (45f64.to_radians()).sin()),
                ));
            }
            Glyph::O => arc(w / 2.0, 0.5, w / 2.0 - i, 0.5 - i, 0.0, 360.0, &mut s),
            Glyph::D => {
                let rx = w - 2.0 * i - 0.25;
                s.push(((i, i), (i, 1.0 - i)));
                s.push(((i, i), (0.25, i)));
                s.push(((i, 1.0 - i), (0.25, 1.0 - i)));
                arc(0.25, 0.5, rx, 0.5 - i, -90.0, 90.0, &mut s);
            }
            Glyph::E | Glyph::F => {
                s.push(((i, i), (i, 1.0 - i)));
                s.push(((i, i), (w - i, i)));
                s.push(((i, 0.5), (w - i - 0.1, 0.5)));
                if *self == Glyph::E {
                    s.push(((i, 1.0 - i), (w - i, 1.0 - i)));
                }
            }
            Glyph::H => {
                s.push(((i, i), (i, 1.0 - i)));
                s.push(((w - i, i), (w - i, 1.0 - i)));
                s.push(((i, 0.5), (w - i, 0.5)));
            }
            Glyph::X => {
                s.push(((i, i), (w - i, 1.0 - i)));
                s.push(((w - i, i), (i, 1.0 - i)));
            }
            Glyph::Plus => {
                s.push(((0.5, i), (0.5, 1.0 - i)));
                s.push(((i, 0.5), (1.0 - i, 0.5)));
            }
            Glyph::Star => {
                let r = 0.5 - i;
                for k in 0..3 {
                    let a = (90.0 + 60.0 * k as f64) * PI / 180.0;
                    s.push((
                        (0.5 + r * a.cos(), 0.5 + r * a.sin()),
                        (0.5 - r * a.cos(), 0.5 - r * a.sin()),
                    ));
                }
            }
            Glyph::Slash => s.push(((w - i, i), (i, 1.0 - i))),
            Glyph::Hash => {
                for p in [0.33, 0.67] {
                    s.push(((p, i), (p, 1.0 - i)));
                    s.push(((i, p), (1.0 - i, p)));
                }
            }
            Glyph::Background => {}
        }
        s
    }
}

fn seg_dist2(p: (f64, f64), seg: &Seg) -> f64 {
    let ((ax, ay), (bx, by)) = *seg;
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (ax + t * dx - p.0, ay + t * dy - p.1);
    qx * qx + qy * qy
}

/// A glyph instance in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub glyph: Glyph,
    pub height_px: f64,
    /// Center `(row, col)` in pixels, continuous coordinates.
    pub center: (f64, f64),
    pub rotation_deg: f64,
}

impl Placement {
    /// Half extents `(rows, cols)` of the rotated glyph box, including the stroke.
    pub fn half_extent(&self) -> (f64, f64) {
        let (hh, hw) = (
            self.height_px / 2.0,
            self.height_px * self.glyph.aspect() / 2.0,
        );
        let a = self.rotation_deg.to_radians();
        let (c, s) = (a.cos().abs(), a.sin().abs());
        (hh * c + hw * s, hw * c + hh * s)
    }

    /// Rasterizes the placed glyph into a `height × width` mask.
    pub fn rasterize(&self, height: usize, width: usize) -> Mask2 {
        let mut mask = Mask2::empty(height, width);
        let segs = self.glyph.segments();
        if segs.is_empty() {
            return mask;
        }
        let (er, ec) = self.half_extent();
        let r0 = (self.center.0 - er - 1.0).floor().max(0.0) as usize;
        let r1 = ((self.center.0 + er + 1.0).ceil().max(0.0) as usize).min(height);
        let c0 = (self.center.1 - ec - 1.0).floor().max(0.0) as usize;
        let c1 = ((self.center.1 + ec + 1.0).ceil().max(0.0) as usize).min(width);
        let a = self.rotation_deg.to_radians();
        let (cos, sin) = (a.cos(), a.sin());
        let half_w = self.glyph.aspect() / 2.0;
        let r2 = (STROKE / 2.0) * (STROKE / 2.0);
        for r in r0..r1 {
            for c in c0..c1 {
                // Pixel center relative to glyph center, rotated into glyph frame.
                let dy = r as f64 + 0.5 - self.center.0;
                let dx = c as f64 + 0.5 - self.center.1;
                let lx = cos * dx + sin * dy;
                let ly = -sin * dx + cos * dy;
                let p = (lx / self.height_px + half_w, ly / self.height_px + 0.5);
                if segs.iter().any(|sg| seg_dist2(p, sg) <= r2) {
                    mask.set(r, c, true);
                }
            }
        }
        mask
    }
}

/// Mask of `glyph` centered in the frame, unrotated.
pub fn centered_glyph(glyph: Glyph, height_px: f64, frame: usize, center_col: f64) -> Mask2 {
    Placement {
        glyph,
        height_px,
        center: (frame as f64 / 2.0, center_col),
        rotation_deg: 0.0,
    }
    .rasterize(frame, frame)
}
