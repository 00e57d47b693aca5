//! Local aggregated descriptors and gradient fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{GradTapSet, TapSet};
use crate::resize::{upscale, UpscaleMode};
use crate::tensor::{concat_channels, Tensor3};

/// Name and channel count of one aggregated layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub channels: usize,
}

/// Per-pixel concatenation of upscaled activation maps, `(h, w, c*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub field: Tensor3,
    pub layers: Vec<LayerInfo>,
}

/// Gradients of one class logit, laid out exactly like a [`DescriptorField`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub field: Tensor3,
    pub layers: Vec<LayerInfo>,
    pub class_k: usize,
}

impl DescriptorField {
    pub fn c_star(&self) -> usize {
        self.field.channels()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.field.height(), self.field.width())
    }
}

/// Signed per-pixel sensitivity toward one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

fn aggregate(
    maps: &[(String, Tensor3)],
    target: (usize, usize),
    mode: UpscaleMode,
) -> Result<(Tensor3, Vec<LayerInfo>)> {
    if maps.is_empty() {
        return Err(Error::invalid("tap set is empty"));
    }
    let up: Vec<Tensor3> = maps
        .iter()
        .map(|(_, t)| upscale(t, target.0, target.1, mode))
        .collect::<Result<_>>()?;
    let refs: Vec<&Tensor3> = up.iter().collect();
    let layers = maps
        .iter()
        .map(|(n, t)| LayerInfo {
            name: n.clone(),
            channels: t.channels(),
        })
        .collect();
    Ok((concat_channels(&refs)?, layers))
}

/// Upscales every tap to `target` and concatenates them in tap order.
pub fn compute_descriptor(
    taps: &TapSet,
    target: (usize, usize),
    mode: UpscaleMode,
) -> Result<DescriptorField> {
    let (field, layers) = aggregate(taps, target, mode)?;
    Ok(DescriptorField { field, layers })
}

/// Same mechanics as [`compute_descriptor`], applied to gradient taps.
pub fn compute_gradient_field(
    grads: &GradTapSet,
    target: (usize, usize),
    mode: UpscaleMode,
) -> Result<GradientField> {
    let (field, layers) = aggregate(&grads.grads, target, mode)?;
    Ok(GradientField {
        field,
        layers,
        class_k: grads.class_k,
    })
}

/// Keeps the named maps, in the order given.
pub fn select_layers(
    maps: &[(String, Tensor3)],
    names: &[String],
) -> Result<Vec<(String, Tensor3)>> {
    names
        .iter()
        .map(|n| {
            maps.iter()
                .find(|(m, _)| m == n)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("tap '{n}' not available")))
        })
        .collect()
}

/// Per-pixel dot product of gradient and descriptor.
pub fn pixel_sensitivity(d: &DescriptorField, g: &GradientField) -> Result<Sensitivity> {
    if d.layers != g.layers || d.field.shape() != g.field.shape() {
        return Err(Error::shape(
            "gradient field layout differs from the descriptor",
        ));
    }
    let values = d
        .field
        .pixels()
        .zip(g.field.pixels())
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| f64::from(*x) * f64::from(*y))
                .sum()
        })
        .collect();
    Ok(Sensitivity {
        height: d.field.height(),
        width: d.field.width(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f32) -> Tensor3 {
        Tensor3::new(h, w, c, (0..h * w * c).map(f).collect()).unwrap()
    }

    #[test]
    fn single_tap_at_target_is_identity() {
        let a = t(4, 4, 3, |i| i as f32);
        let d = compute_descriptor(
            &vec![("x".into(), a.clone())],
            (4, 4),
            UpscaleMode::Bilinear,
        )
        .unwrap();
        assert_eq!(d.field, a);
        assert_eq!(
            d.layers,
            vec![LayerInfo {
                name: "x".into(),
                channels: 3
            }]
        );
    }

    #[test]
    fn c_star_is_channel_sum() {
        let taps: TapSet = [16, 32, 64, 64]
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("stage{}", i + 1), t(32 >> i, 32 >> i, c, |_| 0.5)))
            .collect();
        let d = compute_descriptor(&taps, (64, 64), UpscaleMode::Bilinear).unwrap();
        assert_eq!(d.c_star(), 176);
        assert_eq!(d.dims(), (64, 64));
    }

    #[test]
    fn gradient_field_mechanics() {
        let zero = GradTapSet {
            class_k: 1,
            grads: vec![("a".into(), Tensor3::zeros(2, 2, 2))],
        };
        let g = compute_gradient_field(&zero, (8, 8), UpscaleMode::Bicubic).unwrap();
        assert!(g.field.data().iter().all(|v| *v == 0.0));
        let one = GradTapSet {
            class_k: 0,
            grads: vec![("a".into(), t(1, 1, 2, |i| [3.0, -1.0][i]))],
        };
        let g = compute_gradient_field(&one, (5, 5), UpscaleMode::Bilinear).unwrap();
        assert!(g.field.pixels().all(|p| p == [3.0, -1.0]));
        assert!(compute_descriptor(&Vec::new(), (4, 4), UpscaleMode::Bilinear).is_err());
    }

    #[test]
    fn sensitivity_is_dot_product() {
        let layers = vec![LayerInfo {
            name: "a".into(),
            channels: 2,
        }];
        let d = DescriptorField {
            field: t(1, 1, 2, |i| [1.0, 2.0][i]),
            layers: layers.clone(),
        };
        let g = GradientField {
            field: t(1, 1, 2, |i| [3.0, -1.0][i]),
            layers,
            class_k: 0,
        };
        assert_eq!(pixel_sensitivity(&d, &g).unwrap().values, vec![1.0]);
        let d2 = DescriptorField {
            field: d.field.scaled(2.0).unwrap(),
            layers: d.layers.clone(),
        };
        assert_eq!(pixel_sensitivity(&d2, &g).unwrap().values, vec![2.0]);
        let mut bad = g.clone();
        bad.layers[0].name = "b".into();
        assert!(pixel_sensitivity(&d, &bad).is_err());
    }

    #[test]
    fn select_layers_keeps_requested_order() {
        let maps = vec![
            ("a".to_string(), Tensor3::zeros(1, 1, 1)),
            ("b".to_string(), Tensor3::zeros(1, 1, 2)),
        ];
        let s = select_layers(&maps, &["b".into(), "a".into()]).unwrap();
        assert_eq!(s[0].0, "b");
        assert!(select_layers(&maps, &["c".into()]).is_err());
    }
}
