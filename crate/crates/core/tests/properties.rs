mod common;

use eclad::eclad::{relative_importance, ConceptModel, DescriptorField, LayerInfo};
use eclad::ectf::TensorFile;
use eclad::edt::edt;
use eclad::validation::{
    associate, association_distance, importance_correctness, normalize_tcav, one_way_dst,
    representation_correctness, two_way_dst,
};
use eclad::{concat_channels, upscale, Mask2, Tensor3, UpscaleMode};
use proptest::prelude::*;

fn tensor(h: usize, w: usize, c: usize) -> impl Strategy<Value = Tensor3> {
    prop::collection::vec(-10.0f32..10.0, h * w * c)
        .prop_map(move |d| Tensor3::new(h, w, c, d).unwrap())
}

fn sized_tensor() -> impl Strategy<Value = Tensor3> {
    (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(h, w, c)| tensor(h, w, c))
}

fn mask(max: usize) -> impl Strategy<Value = Mask2> {
    (1usize..max, 1usize..max).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop::bool::weighted(0.3), h * w)
            .prop_map(move |b| Mask2::new(h, w, b).unwrap())
    })
}

fn mask_pair(max: usize) -> impl Strategy<Value = (Mask2, Mask2)> {
    (1usize..max, 1usize..max).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(any::<bool>(), h * w),
            prop::collection::vec(any::<bool>(), h * w),
        )
            .prop_map(move |(a, b)| (Mask2::new(h, w, a).unwrap(), Mask2::new(h, w, b).unwrap()))
    })
}

fn modes() -> impl Strategy<Value = UpscaleMode> {
    prop::sample::select(UpscaleMode::ALL.to_vec())
}

proptest! {
    #[test]
    fn concat_reads_back_every_part(
        (a, b) in (1usize..5, 1usize..5).prop_flat_map(|(h, w)| (tensor(h, w, 2), tensor(h, w, 3)))
    ) {
        let cat = concat_channels(&[&a, &b]).unwrap();
        prop_assert_eq!(cat.shape(), (a.height(), a.width(), 5));
        for r in 0..a.height() {
            for c in 0..a.width() {
                prop_assert_eq!(&cat.pixel(r, c)[..2], a.pixel(r, c));
                prop_assert_eq!(&cat.pixel(r, c)[2..], b.pixel(r, c));
            }
        }
    }

    #[test]
    fn edt_equals_brute_force(m in mask(14)) {
        let f = edt(&m);
        for (a, b) in f.values().iter().zip(common::brute_edt(&m)) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn bilinear_stays_within_input_range(t in sized_tensor(), th in 1usize..12, tw in 1usize..12) {
        for mode in [UpscaleMode::Bilinear, UpscaleMode::Nearest] {
            let up = upscale(&t, th, tw, mode).unwrap();
            for ch in 0..t.channels() {
                let vals: Vec<f32> = t.pixels().map(|p| p[ch]).collect();
                let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
                let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                for p in up.pixels() {
                    prop_assert!(p[ch] >= lo - 1e-4 && p[ch] <= hi + 1e-4);
                }
            }
        }
    }

    #[test]
    fn constant_maps_stay_constant(
        v in -5.0f32..5.0, h in 1usize..6, w in 1usize..6, th in 1usize..16, tw in 1usize..16, mode in modes()
    ) {
        let t = Tensor3::new(h, w, 2, vec![v; h * w * 2]).unwrap();
        let up = upscale(&t, th, tw, mode).unwrap();
        prop_assert_eq!(up.shape(), (th, tw, 2));
        for x in up.data() {
            prop_assert!((x - v).abs() < 1e-5);
        }
    }

    #[test]
    fn ri_is_bounded_and_attains_one(cs in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 1..6)) {
        let (ri, k_of, degenerate) = relative_importance(&cs);
        let max = cs.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert_eq!(degenerate, max == 0.0);
        for ((r, &k), row) in ri.iter().zip(&k_of).zip(&cs) {
            prop_assert!(r.abs() <= 1.0);
            prop_assert!(row.iter().all(|v| v.abs() <= row[k].abs()));
            if !degenerate {
                prop_assert_eq!(*r, row[k] / max);
            }
        }
        if !degenerate {
            prop_assert_eq!(ri.iter().map(|r| r.abs()).fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn ri_ignores_positive_scaling(
        cs in prop::collection::vec(prop::collection::vec(-64i32..64, 2), 1..5), shift in 0i32..5
    ) {
        let a: Vec<Vec<f64>> = cs.iter().map(|r| r.iter().map(|v| f64::from(*v)).collect()).collect();
        let s = 2f64.powi(shift);
        let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect();
        prop_assert_eq!(relative_importance(&a), relative_importance(&b));
    }

    #[test]
    fn tcav_normalization_is_affine_and_monotone(q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
        let (a, b) = (normalize_tcav(q1).unwrap(), normalize_tcav(q2).unwrap());
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert_eq!(a, 2.0 * q1 - 1.0);
        if q1 < q2 {
            prop_assert!(a < b);
        }
    }

    #[test]
    fn dst_of_a_mask_with_itself_is_zero(m in mask(16)) {
        prop_assert_eq!(one_way_dst(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn two_way_dst_is_symmetric_and_nonnegative((a, b) in mask_pair(12)) {
        let ab = two_way_dst(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, two_way_dst(&b, &a).unwrap());
        let subset = one_way_dst(&a, &b).unwrap() == 0.0;
        let contained = a.bits().iter().zip(b.bits()).all(|(x, y)| !x || *y);
        prop_assert_eq!(subset, contained || a.is_empty());
    }

    #[test]
    fn correctness_scores_are_bounded(
        sets in prop::collection::vec((mask_pair(8), mask_pair(8)), 1..3),
        imps in prop::collection::vec(-1.0f64..1.0, 2),
        t_dst in 0.0f64..10.0,
    ) {
        // Every image shares the dims of the first pair.
        let (h, w) = sets[0].0 .0.dims();
        let images: Vec<(Vec<Mask2>, Vec<Mask2>)> = sets
            .iter()
            .map(|((p0, p1), (c0, c1))| {
                let fit = |m: &Mask2| Mask2::from_fn(h, w, |r, c| r < m.height() && c < m.width() && m.get(r, c));
                (vec![fit(p0), fit(p1)], vec![fit(c0), fit(c1)])
            })
            .collect();
        let m = association_distance(&images, vec!["p1".into(), "p2".into()], vec!["c0".into(), "c1".into()]).unwrap();
        let al = associate(&m, &[true, false], t_dst).unwrap();
        if let Some(rc) = representation_correctness(&al) {
            prop_assert!(rc <= 0.0);
        }
        if let Some(ic) = importance_correctness(&al, &imps).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&ic));
        }
    }

    #[test]
    fn concept_masks_partition_the_frame(
        t in (2usize..6, 2usize..6).prop_flat_map(|(h, w)| tensor(h, w, 3)),
        cents in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 3), 1..5),
    ) {
        let layers = vec![LayerInfo { name: "stage1".into(), channels: 3 }];
        let n = cents.len();
        let model = ConceptModel {
            centroids: cents,
            layers: layers.clone(),
            mode: UpscaleMode::Bilinear,
            standardization: None,
            counts: vec![0; n],
        };
        let d = DescriptorField { field: t, layers };
        let masks = model.masks(&d).unwrap();
        prop_assert_eq!(masks.len(), n);
        let (h, w) = d.dims();
        for px in 0..h * w {
            prop_assert_eq!(masks.iter().filter(|m| m.bits()[px]).count(), 1);
        }
    }

    #[test]
    fn ectf_round_trip_is_bit_identical(ts in prop::collection::vec(sized_tensor(), 0..4)) {
        let mut f = TensorFile::new();
        for (i, t) in ts.into_iter().enumerate() {
            f.push(format!("t{i}"), t);
        }
        let back = TensorFile::from_bytes(&f.to_bytes()).unwrap();
        prop_assert_eq!(back, f);
    }
}

#[test]
fn translation_increases_dst() {
    let base = Mask2::from_fn(128, 128, |r, c| {
        (40..70).contains(&r) && (20..45).contains(&c)
    });
    let d: Vec<f64> = (0..=60)
        .step_by(4)
        .map(|o| two_way_dst(&base, &base.shifted(0, o)).unwrap())
        .collect();
    assert_eq!(d[0], 0.0);
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
}
