use eclad::synth::{generate_dataset, Dataset, DatasetName, DatasetSpec};
use eclad::validation::{
    pooled_correctness, two_way_dst, validate_ce, InMemoryConcepts, ValidationConfig,
};
use tempfile::TempDir;

fn dataset(tmp: &TempDir, name: DatasetName) -> Dataset {
    let dir = tmp.path().join(name.as_str());
    let spec = DatasetSpec::builtin(name)
        .with_image_size(64)
        .with_per_class(3);
    generate_dataset(&spec, 2, &dir).unwrap();
    Dataset::open(&dir).unwrap()
}

/// One concept per listed primitive, copied from the ground truth and shifted right by `dx`.
fn copied(ds: &Dataset, prims: &[usize], dx: isize, scores: Vec<f64>) -> InMemoryConcepts {
    InMemoryConcepts {
        ids: prims.iter().map(|p| format!("copy{p}")).collect(),
        scores,
        masks: (0..ds.len())
            .map(|i| {
                let m = ds.load_masks(i).unwrap();
                prims.iter().map(|&p| m[p].shifted(0, dx)).collect()
            })
            .collect(),
    }
}

#[test]
fn ideal_concepts_on_every_primitive_layout() {
    let tmp = TempDir::new().unwrap();
    for name in [DatasetName::ABplus, DatasetName::CO, DatasetName::IsA] {
        let ds = dataset(&tmp, name);
        let prims = &ds.manifest.primitives;
        let all: Vec<usize> = (0..prims.len()).collect();
        let scores = prims
            .iter()
            .map(|p| if p.important { 1.0 } else { 0.0 })
            .collect();
        let r = validate_ce(
            &ds,
            &copied(&ds, &all, 0, scores),
            &ValidationConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.rc, Some(0.0), "{name}");
        assert_eq!(r.ic, Some(1.0), "{name}");
        for (row, p) in r.concepts.iter().zip(prims) {
            assert_eq!(row.nearest_primitive, p.id);
            assert_eq!(row.aligned, p.important);
        }
    }
}

#[test]
fn shifted_concepts_report_their_mean_distance() {
    let tmp = TempDir::new().unwrap();
    let ds = dataset(&tmp, DatasetName::AB);
    let c = copied(&ds, &[0], 2, vec![1.0]);
    let cfg = ValidationConfig {
        t_dst: Some(100.0),
        ..ValidationConfig::default()
    };
    let r = validate_ce(&ds, &c, &cfg, None).unwrap();
    let expected: f64 = (0..ds.len())
        .map(|i| {
            let m = &ds.load_masks(i).unwrap()[0];
            two_way_dst(m, &m.shifted(0, 2)).unwrap()
        })
        .sum::<f64>()
        / ds.len() as f64;
    assert!(r.concepts[0].aligned);
    assert!((r.rc.unwrap() + expected).abs() < 1e-9 * expected);
    assert!(r.rc.unwrap() < 0.0);
    // With a single aligned concept there is no unaligned group.
    assert_eq!(r.ic, None);

    let strict = validate_ce(
        &ds,
        &c,
        &ValidationConfig {
            t_dst: Some(0.1),
            ..cfg
        },
        None,
    )
    .unwrap();
    assert!(!strict.concepts[0].aligned);
    assert_eq!(strict.rc, None);

    let (rc, _) = pooled_correctness(&[r.clone(), r.clone()]).unwrap();
    assert_eq!(rc, r.rc);
}

#[test]
fn mismatched_concept_inputs_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let ds = dataset(&tmp, DatasetName::AB);
    let mut c = copied(&ds, &[0, 1], 0, vec![1.0]);
    assert!(validate_ce(&ds, &c, &ValidationConfig::default(), None).is_err());
    c.scores.push(0.5);
    c.masks.pop();
    assert!(validate_ce(&ds, &c, &ValidationConfig::default(), None).is_err());
    let unknown = ValidationConfig {
        important: Some(vec!["p99".into()]),
        ..ValidationConfig::default()
    };
    let c = copied(&ds, &[0], 0, vec![1.0]);
    assert!(validate_ce(&ds, &c, &unknown, None).is_err());
}
