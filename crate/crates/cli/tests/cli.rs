use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eclad::eclad::EcladReport;
use eclad::imageio;
use eclad::synth::Dataset;
use eclad::validation::CorrectnessReport;
use tempfile::TempDir;

fn eclad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eclad"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = eclad(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A tiny AB dataset and a briefly trained checkpoint.
struct Fixture {
    _tmp: TempDir,
    root: PathBuf,
    ds: PathBuf,
    ck: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().to_path_buf();
    let ds = root.join("ds");
    let ck = root.join("ck");
    ok(&[
        "gen-data",
        "AB",
        "--size",
        "32",
        "--per-class",
        "6",
        "--seed",
        "3",
        "--out",
        s(&ds),
    ]);
    ok(&[
        "train",
        "--dataset",
        s(&ds),
        "--epochs",
        "2",
        "--out",
        s(&ck),
    ]);
    Fixture {
        _tmp: tmp,
        root,
        ds,
        ck,
    }
}

fn count_pngs(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png")
        })
        .count()
}

#[test]
fn gen_data_writes_requested_images() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ab");
    ok(&[
        "gen-data",
        "AB",
        "--per-class",
        "1",
        "--size",
        "32",
        "--out",
        s(&out),
    ]);
    let ds = Dataset::open(&out).unwrap();
    assert_eq!(ds.n_classes(), 2);
    assert_eq!(ds.len(), 2);
    assert_eq!(
        count_pngs(&out.join("images/A")) + count_pngs(&out.join("images/B")),
        2
    );
    assert!(out.join("effective_config.json").is_file());
}

#[test]
fn unknown_dataset_fails_with_marker() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bad");
    let r = eclad(&["gen-data", "Nope", "--out", s(&out)]);
    assert!(!r.status.success());
    let marker = fs::read_to_string(out.join(".failed")).unwrap();
    assert!(marker.contains("unknown dataset"));
}

#[test]
fn marker_is_cleared_by_a_later_success() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ms");
    assert!(
        !eclad(&["metric-study", "--offsets", "0,500", "--out", s(&out)])
            .status
            .success()
    );
    assert!(out.join(".failed").is_file());
    ok(&["metric-study", "--offsets", "0,8", "--out", s(&out)]);
    assert!(!out.join(".failed").exists());
}

#[test]
fn train_zero_epochs_and_missing_dataset() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    ok(&[
        "gen-data",
        "AB",
        "--per-class",
        "2",
        "--size",
        "32",
        "--out",
        s(&ds),
    ]);
    let ck = tmp.path().join("ck");
    ok(&[
        "train",
        "--dataset",
        s(&ds),
        "--epochs",
        "0",
        "--out",
        s(&ck),
    ]);
    let params = eclad::net::load_checkpoint(&ck).unwrap();
    let fresh = eclad::net::init(&params.arch, 0).unwrap();
    assert_eq!(params, fresh);
    let r = eclad(&[
        "train",
        "--dataset",
        s(&tmp.path().join("nowhere")),
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert!(!r.status.success());
}

#[test]
fn extract_localize_validate_ablate() {
    let f = fixture();
    let ex = f.root.join("ex");
    ok(&[
        "extract",
        "--dataset",
        s(&f.ds),
        "--checkpoint",
        s(&f.ck),
        "--seed",
        "5",
        "--out",
        s(&ex),
    ]);
    let report = EcladReport::load(ex.join("eclad_report.json")).unwrap();
    assert_eq!(report.n_concepts, 10);
    assert_eq!(report.config.seed, 5);

    // Same seed, same bytes.
    let ex2 = f.root.join("ex2");
    ok(&[
        "extract",
        "--dataset",
        s(&f.ds),
        "--checkpoint",
        s(&f.ck),
        "--seed",
        "5",
        "--out",
        s(&ex2),
    ]);
    assert_eq!(
        fs::read(ex.join("eclad_report.json")).unwrap(),
        fs::read(ex2.join("eclad_report.json")).unwrap()
    );

    // Dataset localization: n_c masks per image that partition it.
    let loc = f.root.join("loc");
    let rp = ex.join("eclad_report.json");
    ok(&[
        "localize",
        "--report",
        s(&rp),
        "--checkpoint",
        s(&f.ck),
        "--dataset",
        s(&f.ds),
        "--out",
        s(&loc),
    ]);
    let ds = Dataset::open(&f.ds).unwrap();
    for i in 0..ds.len() {
        let masks: Vec<_> = (0..10)
            .map(|j| {
                imageio::load_mask(loc.join(format!("concepts/c{j}/{}.png", ds.image_id(i))))
                    .unwrap()
            })
            .collect();
        let (h, w) = masks[0].dims();
        for r in 0..h {
            for c in 0..w {
                assert_eq!(masks.iter().filter(|m| m.get(r, c)).count(), 1);
            }
        }
    }

    // Single image localization.
    let one = f.root.join("one");
    let img = f.ds.join("images/A/0000.png");
    ok(&[
        "localize",
        "--report",
        s(&rp),
        "--checkpoint",
        s(&f.ck),
        s(&img),
        "--out",
        s(&one),
    ]);
    assert_eq!(count_pngs(&one.join("0000")), 20);

    // Mask directory and recomputed masks give the same validation.
    let va = f.root.join("va");
    let vb = f.root.join("vb");
    ok(&[
        "validate",
        "--dataset",
        s(&f.ds),
        "--masks",
        s(&loc),
        "--out",
        s(&va),
    ]);
    ok(&[
        "validate",
        "--dataset",
        s(&f.ds),
        "--eclad",
        s(&rp),
        "--checkpoint",
        s(&f.ck),
        "--out",
        s(&vb),
    ]);
    let a = CorrectnessReport::load(va.join("validation_report.json")).unwrap();
    let b = CorrectnessReport::load(vb.join("validation_report.json")).unwrap();
    assert_eq!(a.association, b.association);
    assert_eq!(a.concepts.len(), 10);
    let csv = fs::read_to_string(va.join("concepts.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);

    let pooled = f.root.join("pooled");
    ok(&[
        "validate",
        "--pool",
        s(&va.join("validation_report.json")),
        s(&vb.join("validation_report.json")),
        "--out",
        s(&pooled),
    ]);
    let p: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(pooled.join("pooled.json")).unwrap()).unwrap();
    assert_eq!(p["n_concepts"], 20);

    // Ablation rows.
    let ab = f.root.join("ab");
    ok(&[
        "ablate",
        "--dataset",
        s(&f.ds),
        "--checkpoint",
        s(&f.ck),
        "--axis",
        "n-c",
        "--values",
        "2,3",
        "--out",
        s(&ab),
    ]);
    let rows = fs::read_to_string(ab.join("ablation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().nth(1).unwrap().starts_with("2,"));
    let per = fs::read_to_string(ab.join("ablation_concepts.csv")).unwrap();
    assert_eq!(per.lines().count(), 1 + 2 + 3);
    let ab1 = f.root.join("ab1");
    ok(&[
        "ablate",
        "--dataset",
        s(&f.ds),
        "--checkpoint",
        s(&f.ck),
        "--axis",
        "interp",
        "--values",
        "nearest",
        "--n-c",
        "3",
        "--out",
        s(&ab1),
    ]);
    assert_eq!(
        fs::read_to_string(ab1.join("ablation.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn corrupt_report_and_missing_masks_fail() {
    let f = fixture();
    let bad = f.root.join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let r = eclad(&[
        "localize",
        "--report",
        s(&bad),
        "--checkpoint",
        s(&f.ck),
        "--dataset",
        s(&f.ds),
        "--out",
        s(&f.root.join("l")),
    ]);
    assert!(!r.status.success());

    let masks = f.root.join("masks");
    fs::create_dir_all(masks.join("concepts/c0")).unwrap();
    fs::write(masks.join("importances.json"), "{\"c0\": 1.0}").unwrap();
    let out = f.root.join("v");
    let r = eclad(&[
        "validate",
        "--dataset",
        s(&f.ds),
        "--masks",
        s(&masks),
        "--out",
        s(&out),
    ]);
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(
        err.contains("missing inputs") && err.contains("A_0000.png"),
        "{err}"
    );
}

#[test]
fn ideal_masks_validate_perfectly() {
    let tmp = TempDir::new().unwrap();
    let ds_dir = tmp.path().join("ds");
    ok(&[
        "gen-data",
        "AB",
        "--per-class",
        "3",
        "--size",
        "32",
        "--out",
        s(&ds_dir),
    ]);
    let ds = Dataset::open(&ds_dir).unwrap();
    // Concepts copied from the important primitives, plus a background concept with zero importance.
    let masks = tmp.path().join("masks");
    for i in 0..ds.len() {
        let prims = ds.load_masks(i).unwrap();
        for (cid, p) in [("good1", 0), ("good2", 1), ("junk", 3)] {
            imageio::save_mask(
                masks.join(format!("concepts/{cid}/{}.png", ds.image_id(i))),
                &prims[p],
            )
            .unwrap();
        }
    }
    fs::write(
        masks.join("importances.json"),
        "{\"good1\": 1.0, \"good2\": -1.0, \"junk\": 0.0}",
    )
    .unwrap();
    let out = tmp.path().join("v");
    ok(&[
        "validate",
        "--dataset",
        s(&ds_dir),
        "--masks",
        s(&masks),
        "--out",
        s(&out),
    ]);
    let r = CorrectnessReport::load(out.join("validation_report.json")).unwrap();
    assert_eq!(r.rc, Some(0.0));
    assert_eq!(r.ic, Some(1.0));
    assert!(out.join("overlays").is_dir());
}

#[test]
fn metric_study_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ms");
    ok(&["metric-study", "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("offset_study.csv")).unwrap();
    let dst: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(dst.len(), 9);
    assert!(dst.windows(2).all(|w| w[1] > w[0]));
    assert!(out.join("offset_study.png").is_file());

    ok(&["metric-study", "--kind", "surround", "--out", s(&out)]);
    assert_eq!(
        fs::read_to_string(out.join("surround_study.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[metric_study]\noffsets = []\n").unwrap();
    let bad = tmp.path().join("bad");
    assert!(
        !eclad(&["--config", s(&cfg), "metric-study", "--out", s(&bad)])
            .status
            .success()
    );
    assert!(bad.join(".failed").is_file());
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 11\n[metric_study]\nframe = 64\noffsets = [0, 4]\n",
    )
    .unwrap();
    let out = tmp.path().join("a");
    let r = ok(&["--config", s(&cfg), "metric-study", "--out", s(&out)]);
    let echoed: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(echoed["config"]["frame"], 64);
    assert_eq!(echoed["config"]["offsets"], serde_json::json!([0, 4]));
    let out = tmp.path().join("b");
    let r = ok(&[
        "--config",
        s(&cfg),
        "metric-study",
        "--offsets",
        "0,2,6",
        "--out",
        s(&out),
    ]);
    let echoed: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(echoed["config"]["offsets"], serde_json::json!([0, 2, 6]));
    assert_eq!(echoed["config"]["frame"], 64);

    fs::write(
        &cfg,
        "seed = 11\n[gen_data]\nname = \"CO\"\nper_class = 1\nsize = 32\n",
    )
    .unwrap();
    let out = tmp.path().join("g");
    ok(&["--config", s(&cfg), "gen-data", "--out", s(&out)]);
    let ds = Dataset::open(&out).unwrap();
    assert_eq!(
        (ds.manifest.name.as_str(), ds.manifest.seed, ds.len()),
        ("CO", 11, 2)
    );
    let out = tmp.path().join("g2");
    ok(&[
        "--config",
        s(&cfg),
        "--seed",
        "4",
        "gen-data",
        "--out",
        s(&out),
    ]);
    assert_eq!(Dataset::open(&out).unwrap().manifest.seed, 4);
}
