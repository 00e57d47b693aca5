mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand};
use eclad::eclad::{
    localize_taps, render_examples, run_eclad, write_localization, EcladConfig, EcladReport,
    NetTapSource, TapDirSource, TapSource,
};
use eclad::imageio;
use eclad::net::{load_checkpoint, save_checkpoint, train, Architecture, Hyper};
use eclad::synth::{generate_dataset, Dataset, DatasetName, DatasetSpec, Glyph};
use eclad::validation::{
    offset_study, pooled_correctness, study_mask, surround_study, validate_ce, CorrectnessReport,
    EcladConcepts, MaskDirConcepts, StudyRow, ValidationConfig, OFFSET_CENTER, SURROUND_CENTER,
};
use eclad::UpscaleMode;
use serde::Serialize;

use config::{AblationAxis, FileConfig, MetricStudyConfig, StudyKind};

pub const FAILED_MARKER: &str = ".failed";
pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Parser, Debug)]
#[command(
    name = "eclad",
    version,
    about = "Concept extraction and validation of concept extraction methods"
)]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with per-command sections; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with primitive masks.
    GenData(GenDataArgs),
    /// Train the built-in network on a dataset.
    Train(TrainArgs),
    /// Extract concepts and score their importance.
    Extract(ExtractArgs),
    /// Write concept masks for a dataset or for individual images.
    Localize(LocalizeArgs),
    /// Score concepts against ground-truth primitives.
    Validate(ValidateArgs),
    /// Repeat extraction and validation over one varied setting.
    Ablate(AblateArgs),
    /// Compare the distance metric with overlap metrics on controlled masks.
    MetricStudy(MetricStudyArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// One of AB, ABplus, BigSmall, CO, colorGB, isA.
    name: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Output channels per stage, comma separated.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
#[group(id = "tap_source", required = true, multiple = false)]
struct TapArgs {
    /// Checkpoint directory of the built-in network.
    #[arg(long, group = "tap_source")]
    checkpoint: Option<PathBuf>,
    /// Directory of precomputed activation and gradient tap files.
    #[arg(long, group = "tap_source")]
    taps: Option<PathBuf>,
}

impl TapArgs {
    fn source(&self) -> anyhow::Result<Box<dyn TapSource>> {
        Ok(match (&self.checkpoint, &self.taps) {
            (Some(c), _) => Box::new(NetTapSource {
                params: load_checkpoint(c)
                    .with_context(|| format!("loading checkpoint {}", c.display()))?,
            }),
            (None, Some(t)) => Box::new(TapDirSource::new(t)),
            (None, None) => bail!("one of --checkpoint or --taps is required"),
        })
    }
}

#[derive(Args, Debug, Default)]
struct EcladFlags {
    /// Tap names, comma separated.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<String>>,
    #[arg(long)]
    n_c: Option<usize>,
    #[arg(long)]
    n_i: Option<usize>,
    #[arg(long)]
    lambda: Option<f32>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<UpscaleMode>,
    /// Passes over the descriptor stream.
    #[arg(long)]
    epochs: Option<usize>,
    /// Standardize descriptor channels before clustering.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    max_per_class: Option<usize>,
    #[arg(long)]
    downscale: Option<usize>,
    #[arg(long)]
    max_examples: Option<usize>,
}

impl EcladFlags {
    fn apply(&self, mut c: EcladConfig) -> EcladConfig {
        if let Some(v) = &self.layers {
            c.layers = Some(v.clone());
        }
        if let Some(v) = self.n_c {
            c.n_c = v;
        }
        if let Some(v) = self.n_i {
            c.n_i = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if self.standardize {
            c.standardize = true;
        }
        if let Some(v) = self.max_per_class {
            c.max_per_class = Some(v);
        }
        if let Some(v) = self.downscale {
            c.downscale = v;
        }
        if let Some(v) = self.max_examples {
            c.max_examples = v;
        }
        c
    }
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    taps: TapArgs,
    #[command(flatten)]
    eclad: EcladFlags,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    /// Extraction report holding the concept model.
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    taps: TapArgs,
    /// Write masks for every image of this dataset, in the layout `validate --masks` reads.
    #[arg(long, conflicts_with = "images")]
    dataset: Option<PathBuf>,
    /// Attenuation of pixels outside the concept in overlays; the report's value by default.
    #[arg(long)]
    lambda: Option<f32>,
    /// Image files to localize (needs --checkpoint).
    images: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, required_unless_present = "pool")]
    dataset: Option<PathBuf>,
    /// Directory with concepts/<concept>/<image>.png and importances.json.
    #[arg(long, conflicts_with_all = ["eclad", "pool"])]
    masks: Option<PathBuf>,
    /// Extraction report; masks are recomputed from the checkpoint or tap files.
    #[arg(long, requires = "tap_source", conflicts_with = "pool")]
    eclad: Option<PathBuf>,
    #[arg(long, group = "tap_source")]
    checkpoint: Option<PathBuf>,
    #[arg(long, group = "tap_source")]
    taps: Option<PathBuf>,
    /// Alignment threshold on the normalized distance, px.
    #[arg(long)]
    t_dst: Option<f64>,
    /// Important primitive ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    important: Option<Vec<String>>,
    #[arg(long)]
    max_overlays: Option<usize>,
    /// Pool the concepts of several validation reports into one RC and IC.
    #[arg(long, num_args = 1..)]
    pool: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    taps: TapArgs,
    #[arg(long, value_enum)]
    axis: Option<AblationAxis>,
    /// Values of the axis. Layer subsets join tap names with '+'.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    values: Option<Vec<String>>,
    #[arg(long)]
    t_dst: Option<f64>,
    #[command(flatten)]
    eclad: EcladFlags,
}

#[derive(Args, Debug)]
struct MetricStudyArgs {
    #[arg(long, value_enum)]
    kind: Option<StudyKind>,
    #[arg(long)]
    glyph: Option<String>,
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    offsets: Option<Vec<usize>>,
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    gaps: Option<Vec<usize>>,
    #[arg(long)]
    ring_width: Option<usize>,
}

fn parse_mode(s: &str) -> Result<UpscaleMode, String> {
    UpscaleMode::ALL
        .into_iter()
        .find(|m| m.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| format!("unknown interpolation '{s}' (nearest, bilinear, bicubic)"))
}

fn parse_glyph(s: &str) -> anyhow::Result<Glyph> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .with_context(|| format!("unknown glyph '{s}'"))
}

/// Prints the effective config and stores it next to the outputs.
fn echo<T: Serialize>(out: &Path, command: &str, cfg: &T) -> anyhow::Result<()> {
    let v = serde_json::json!({ "command": command, "config": cfg });
    let text = serde_json::to_string_pretty(&v)? + "\n";
    print!("{text}");
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(EFFECTIVE_CONFIG), text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

struct Ctx {
    seed: Option<u64>,
    file: FileConfig,
    out: PathBuf,
}

fn cmd_gen_data(ctx: &Ctx, a: &GenDataArgs) -> anyhow::Result<()> {
    let mut c = ctx.file.gen_data.clone();
    if let Some(n) = &a.name {
        c.name = Some(n.clone());
    }
    c.size = a.size.or(c.size);
    c.per_class = a.per_class.or(c.per_class);
    if let Some(s) = ctx.seed {
        c.seed = s;
    }
    let name: DatasetName = c
        .name
        .as_deref()
        .context("a dataset name is required")?
        .parse()?;
    let mut spec = DatasetSpec::builtin(name);
    if let Some(s) = c.size {
        spec = spec.with_image_size(s);
    }
    if let Some(n) = c.per_class {
        spec = spec.with_per_class(n);
    }
    echo(&ctx.out, "gen-data", &c)?;
    let summary = generate_dataset(&spec, c.seed, &ctx.out)?;
    log::info!("wrote {} images to {}", summary.n_images, ctx.out.display());
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    let mut c = ctx.file.train.clone();
    let h: &mut Hyper = &mut c.hyper;
    h.epochs = a.epochs.unwrap_or(h.epochs);
    h.lr = a.lr.unwrap_or(h.lr);
    h.momentum = a.momentum.unwrap_or(h.momentum);
    h.batch = a.batch.unwrap_or(h.batch);
    h.val_fraction = a.val_fraction.unwrap_or(h.val_fraction);
    if let Some(s) = ctx.seed {
        h.seed = s;
    }
    if let Some(ch) = &a.channels {
        c.channels = ch.clone();
    }
    let ds = Dataset::open(&a.dataset)
        .with_context(|| format!("opening dataset {}", a.dataset.display()))?;
    let arch = Architecture::with_channels(ds.manifest.image_size, &c.channels, ds.n_classes());
    arch.validate()?;
    echo(&ctx.out, "train", &c)?;
    let outcome = train(&arch, &a.dataset, &c.hyper)?;
    save_checkpoint(&outcome.params, &ctx.out)?;
    write_json(
        &ctx.out.join("training.json"),
        &serde_json::json!({
            "hyper": c.hyper,
            "initial_loss": outcome.initial_loss,
            "final_val_accuracy": outcome.final_val_accuracy(),
            "history": outcome.history,
            "train_ids": outcome.train_ids,
            "val_ids": outcome.val_ids,
        }),
    )?;
    if let Some(acc) = outcome.final_val_accuracy() {
        log::info!("validation accuracy {acc:.3}");
    }
    Ok(())
}

fn eclad_config(ctx: &Ctx, flags: &EcladFlags) -> EcladConfig {
    let mut c = flags.apply(ctx.file.extract.clone());
    if let Some(s) = ctx.seed {
        c.seed = s;
    }
    c
}

fn cmd_extract(ctx: &Ctx, a: &ExtractArgs) -> anyhow::Result<()> {
    let cfg = eclad_config(ctx, &a.eclad);
    let ds = Dataset::open(&a.dataset)
        .with_context(|| format!("opening dataset {}", a.dataset.display()))?;
    let source = a.taps.source()?;
    echo(&ctx.out, "extract", &cfg)?;
    let out = run_eclad(source.as_ref(), &ds, &cfg, Some(&ctx.out))?;
    for (id, ri) in out.report.concept_ids.iter().zip(&out.report.ri) {
        log::info!("{id}: relative importance {ri:+.3}");
    }
    if out.report.degenerate {
        log::warn!("all contrastive sensitivities are zero");
    }
    Ok(())
}

fn cmd_localize(ctx: &Ctx, a: &LocalizeArgs) -> anyhow::Result<()> {
    let report = EcladReport::load(&a.report)?;
    let model = report.model()?;
    let lambda = a.lambda.unwrap_or(report.config.lambda);
    echo(
        &ctx.out,
        "localize",
        &serde_json::json!({ "report": a.report, "dataset": a.dataset, "images": a.images, "lambda": lambda }),
    )?;
    if let Some(dir) = &a.dataset {
        let ds =
            Dataset::open(dir).with_context(|| format!("opening dataset {}", dir.display()))?;
        let source = a.taps.source()?;
        let n = write_localization(source.as_ref(), &ds, &report, &ctx.out)?;
        log::info!("wrote masks for {n} images");
        return Ok(());
    }
    ensure!(!a.images.is_empty(), "give --dataset or at least one image");
    let ck = a
        .taps
        .checkpoint
        .as_ref()
        .context("localizing image files needs --checkpoint")?;
    let params = load_checkpoint(ck)?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        bail!("lambda {lambda} outside (0, 1]");
    }
    for path in &a.images {
        let image = imageio::load_image(path)?;
        let (h, w, _) = image.shape();
        let taps = params
            .forward(&image)
            .with_context(|| format!("running the network on {}", path.display()))?
            .1;
        let masks = localize_taps(&model, &taps, report.descriptor_size, (h, w))?;
        let stem = path
            .file_stem()
            .context("image path has no file name")?
            .to_string_lossy();
        let dir = ctx.out.join(stem.as_ref());
        for (id, m) in report.concept_ids.iter().zip(&masks) {
            imageio::save_mask(dir.join(format!("{id}.png")), m)?;
            imageio::save_image(
                dir.join(format!("{id}.overlay.png")),
                &render_examples(&image, m, lambda)?,
            )?;
        }
    }
    Ok(())
}

fn validation_config(
    ctx: &Ctx,
    t_dst: Option<f64>,
    important: Option<Vec<String>>,
    overlays: Option<usize>,
) -> ValidationConfig {
    let mut c = ctx.file.validate.clone();
    c.t_dst = t_dst.or(c.t_dst);
    c.important = important.or(c.important);
    c.max_overlays = overlays.unwrap_or(c.max_overlays);
    c
}

fn log_correctness(r: &CorrectnessReport) {
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    let aligned = r.concepts.iter().filter(|c| c.aligned).count();
    log::info!(
        "{aligned}/{} concepts aligned, RC {}, IC {}",
        r.concepts.len(),
        fmt(r.rc),
        fmt(r.ic)
    );
}

fn cmd_validate(ctx: &Ctx, a: &ValidateArgs) -> anyhow::Result<()> {
    if !a.pool.is_empty() {
        let reports = a
            .pool
            .iter()
            .map(CorrectnessReport::load)
            .collect::<eclad::Result<Vec<_>>>()?;
        echo(&ctx.out, "validate", &serde_json::json!({ "pool": a.pool }))?;
        let (rc, ic) = pooled_correctness(&reports)?;
        let n: usize = reports.iter().map(|r| r.concepts.len()).sum();
        write_json(
            &ctx.out.join("pooled.json"),
            &serde_json::json!({ "reports": a.pool, "n_concepts": n, "rc": rc, "ic": ic }),
        )?;
        return Ok(());
    }
    let dir = a.dataset.as_ref().context("--dataset is required")?;
    let ds = Dataset::open(dir).with_context(|| format!("opening dataset {}", dir.display()))?;
    let cfg = validation_config(ctx, a.t_dst, a.important.clone(), a.max_overlays);
    echo(&ctx.out, "validate", &cfg)?;
    let report = if let Some(m) = &a.masks {
        let concepts =
            MaskDirConcepts::open(m).with_context(|| format!("opening masks {}", m.display()))?;
        validate_ce(&ds, &concepts, &cfg, Some(&ctx.out))?
    } else if let Some(r) = &a.eclad {
        let taps = TapArgs {
            checkpoint: a.checkpoint.clone(),
            taps: a.taps.clone(),
        };
        let source = taps.source()?;
        let concepts = EcladConcepts::from_report(source.as_ref(), &ds, &EcladReport::load(r)?)?;
        validate_ce(&ds, &concepts, &cfg, Some(&ctx.out))?
    } else {
        bail!("give --masks or --eclad");
    };
    log_correctness(&report);
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    value: String,
    rc: Option<f64>,
    ic: Option<f64>,
    n_concepts: usize,
    n_aligned: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn cmd_ablate(ctx: &Ctx, a: &AblateArgs) -> anyhow::Result<()> {
    let axis = a
        .axis
        .or(ctx.file.ablate.axis)
        .context("--axis is required")?;
    let values = a
        .values
        .clone()
        .unwrap_or_else(|| ctx.file.ablate.values.clone());
    ensure!(!values.is_empty(), "no values for axis {}", axis.as_str());
    let base = eclad_config(ctx, &a.eclad);
    let configs: Vec<EcladConfig> = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            match axis {
                AblationAxis::NC => c.n_c = v.parse().with_context(|| format!("bad n_c '{v}'"))?,
                AblationAxis::Interp => c.mode = parse_mode(v).map_err(anyhow::Error::msg)?,
                AblationAxis::Layers => c.layers = Some(v.split('+').map(String::from).collect()),
            }
            Ok(c)
        })
        .collect::<anyhow::Result<_>>()?;
    let vcfg = validation_config(ctx, a.t_dst, None, None);
    echo(
        &ctx.out,
        "ablate",
        &serde_json::json!({ "axis": axis, "values": values, "extract": base, "validate": vcfg }),
    )?;
    let ds = Dataset::open(&a.dataset)
        .with_context(|| format!("opening dataset {}", a.dataset.display()))?;
    let source = a.taps.source()?;

    let mut rows = Vec::new();
    let mut concept_csv =
        String::from("value,concept_id,importance,nearest_primitive,dst,dst_norm,aligned\n");
    for (v, cfg) in values.iter().zip(&configs) {
        log::info!("{} = {v}", axis.as_str());
        let dir = ctx.out.join(format!("{}={v}", axis.as_str()));
        let ex = run_eclad(source.as_ref(), &ds, cfg, Some(&dir))?;
        let concepts = EcladConcepts::from_report(source.as_ref(), &ds, &ex.report)?;
        let r = validate_ce(&ds, &concepts, &vcfg, Some(&dir))?;
        log_correctness(&r);
        for c in &r.concepts {
            concept_csv.push_str(&format!(
                "{v},{},{},{},{},{},{}\n",
                c.concept_id, c.importance, c.nearest_primitive, c.dst, c.dst_norm, c.aligned
            ));
        }
        rows.push(AblationRow {
            value: v.clone(),
            rc: r.rc,
            ic: r.ic,
            n_concepts: r.concepts.len(),
            n_aligned: r.concepts.iter().filter(|c| c.aligned).count(),
        });
    }
    let mut csv = String::from("value,rc,ic,n_concepts,n_aligned\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.value,
            opt(r.rc),
            opt(r.ic),
            r.n_concepts,
            r.n_aligned
        ));
    }
    fs::write(ctx.out.join("ablation.csv"), csv)?;
    fs::write(ctx.out.join("ablation_concepts.csv"), concept_csv)?;
    write_json(&ctx.out.join("ablation.json"), &rows)?;
    Ok(())
}

fn study_plot(kind: StudyKind, rows: &[StudyRow]) -> anyhow::Result<eclad::imageio::Raster> {
    let max_dst = rows.iter().fold(0.0f64, |m, r| m.max(r.dst));
    let scale = if max_dst > 0.0 { 1.0 / max_dst } else { 1.0 };
    let x = |r: &StudyRow| r.distance as f64;
    let series = vec![
        plot::Series {
            name: "dst / max".into(),
            points: rows.iter().map(|r| (x(r), r.dst * scale)).collect(),
        },
        plot::Series {
            name: "jaccard".into(),
            points: rows.iter().map(|r| (x(r), r.baselines.jaccard)).collect(),
        },
        plot::Series {
            name: "nmi".into(),
            points: rows.iter().map(|r| (x(r), r.baselines.nmi)).collect(),
        },
        plot::Series {
            name: "ari".into(),
            points: rows.iter().map(|r| (x(r), r.baselines.ari)).collect(),
        },
    ];
    match kind {
        StudyKind::Offset => plot::line_plot("offset study", "offset (px)", &series),
        StudyKind::Surround => plot::line_plot("surround study", "gap (px)", &series),
    }
}

fn cmd_metric_study(ctx: &Ctx, a: &MetricStudyArgs) -> anyhow::Result<()> {
    let mut c: MetricStudyConfig = ctx.file.metric_study.clone();
    c.kind = a.kind.unwrap_or(c.kind);
    if let Some(g) = &a.glyph {
        c.glyph = g.clone();
    }
    c.frame = a.frame.unwrap_or(c.frame);
    if let Some(o) = &a.offsets {
        c.offsets = o.clone();
    }
    if let Some(g) = &a.gaps {
        c.gaps = g.clone();
    }
    c.ring_width = a.ring_width.unwrap_or(c.ring_width);
    let glyph = parse_glyph(&c.glyph)?;
    ensure!(c.frame > 0, "frame must be positive");
    echo(&ctx.out, "metric-study", &c)?;

    let center = match c.kind {
        StudyKind::Offset => OFFSET_CENTER,
        StudyKind::Surround => SURROUND_CENTER,
    };
    let mask = study_mask(glyph, c.frame, center);
    let (rows, name) = match c.kind {
        StudyKind::Offset => {
            ensure!(!c.offsets.is_empty(), "offset list is empty");
            (offset_study(&mask, &c.offsets)?, "offset")
        }
        StudyKind::Surround => {
            ensure!(!c.gaps.is_empty(), "gap list is empty");
            (surround_study(&mask, &c.gaps, c.ring_width)?, "surround")
        }
    };
    let mut csv = String::from("distance,dst,dst_norm,jaccard,nmi,ari\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.distance, r.dst, r.dst_norm, r.baselines.jaccard, r.baselines.nmi, r.baselines.ari
        ));
    }
    fs::write(ctx.out.join(format!("{name}_study.csv")), csv)?;
    write_json(&ctx.out.join(format!("{name}_study.json")), &rows)?;
    imageio::save_raster(
        ctx.out.join(format!("{name}_study.png")),
        &study_plot(c.kind, &rows)?,
    )?;
    Ok(())
}

fn default_out(cmd: &Command, file: &FileConfig) -> PathBuf {
    let root = PathBuf::from("runs");
    match cmd {
        Command::GenData(a) => {
            let name = a
                .name
                .clone()
                .or(file.gen_data.name.clone())
                .unwrap_or_else(|| "dataset".into());
            PathBuf::from("data").join(name)
        }
        Command::Train(_) => root.join("checkpoint"),
        Command::Extract(_) => root.join("extract"),
        Command::Localize(_) => root.join("localize"),
        Command::Validate(_) => root.join("validate"),
        Command::Ablate(_) => root.join("ablate"),
        Command::MetricStudy(_) => root.join("metric-study"),
    }
}

fn run(cli: &Cli, ctx: &Ctx) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(ctx, a),
        Command::Train(a) => cmd_train(ctx, a),
        Command::Extract(a) => cmd_extract(ctx, a),
        Command::Localize(a) => cmd_localize(ctx, a),
        Command::Validate(a) => cmd_validate(ctx, a),
        Command::Ablate(a) => cmd_ablate(ctx, a),
        Command::MetricStudy(a) => cmd_metric_study(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let file = match &cli.config {
        Some(p) => match FileConfig::load(p) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
        },
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let out = cli
        .out
        .clone()
        .or(file.out.clone())
        .unwrap_or_else(|| default_out(&cli.command, &file));
    let ctx = Ctx {
        seed: cli.seed.or(file.seed),
        file,
        out,
    };
    let marker = ctx.out.join(FAILED_MARKER);
    let _ = fs::remove_file(&marker);
    match run(&cli, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if fs::create_dir_all(&ctx.out).is_ok() {
                let _ = fs::write(&marker, format!("{e:#}\n"));
            }
            ExitCode::FAILURE
        }
    }
}
