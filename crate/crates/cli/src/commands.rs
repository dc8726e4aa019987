//! The six subcommands and the artifacts each one writes.
//!
//! Every command resolves its configuration first (flags over file keys
//! over defaults), validates all of it, does its work, and finishes by
//! writing `run_manifest.json` into the output directory: the command
//! name, seed, fully resolved config, and checkpoint digests. Re-running
//! with the manifest's config map reproduces every artifact byte for byte.
//! All artifact writes go through temp-then-rename, and no command writes
//! into its input dataset directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;

use skinet_core::classifier::{
    build_classifier, clf_forward, load_clf_checkpoint, save_clf_checkpoint, train_classifier,
};
use skinet_core::data::{load_dataset, save_image_png, split, DatasetKind};
use skinet_core::pipeline::{evaluate_pipeline, skinet_infer, DiagnosisReport, Segmenter};
use skinet_core::saliency::{attribute, xrai, SaliencyMethod};
use skinet_core::segnet::{build_segnet, load_seg_checkpoint, save_seg_checkpoint, train_segnet};
use skinet_core::uncertainty::diagnostic_accuracy;
use skinet_core::util::{atomic_write, derive_seed, sha256_file, sha256_hex};
use skinet_core::viz::{save_report_bundle, saliency_overlay};
use skinet_core::xai_eval::{baseline_accuracy, evaluate_explainer, records_to_csv};
use skinet_core::{Error, Result, TriageCounts};

use crate::cache::load_preprocessed;
use crate::config::RunConfig;

const EXPLAINERS: [&str; 4] = ["gb", "gradcam", "ggc", "xrai"];

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file of key=value lines; flags take precedence over its keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root random seed (config key `seed`).
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    /// Directory artifacts are written into.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        match self.seed {
            Some(s) => vec![("seed", s.to_string())],
            None => Vec::new(),
        }
    }
}

/// Pipeline knobs exposed as flags on infer and evaluate.
#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Segmentation gate (config key `pipeline.seg_threshold`).
    #[arg(long, value_name = "F")]
    pub threshold_seg: Option<f64>,
    /// Certainty gate (config key `pipeline.clf_threshold`).
    #[arg(long, value_name = "F")]
    pub threshold_clf: Option<f64>,
    /// Monte Carlo samples per stage (config key `pipeline.samples`).
    #[arg(long, value_name = "M")]
    pub samples: Option<usize>,
    /// Explainer attached to certain verdicts (config key `pipeline.explainer`).
    #[arg(long, value_name = "NAME", value_parser = EXPLAINERS)]
    pub explainer: Option<String>,
}

impl PipelineFlags {
    fn push_overrides(&self, overrides: &mut Vec<(&'static str, String)>) {
        if let Some(t) = self.threshold_seg {
            overrides.push(("pipeline.seg_threshold", t.to_string()));
        }
        if let Some(t) = self.threshold_clf {
            overrides.push(("pipeline.clf_threshold", t.to_string()));
        }
        if let Some(m) = self.samples {
            overrides.push(("pipeline.samples", m.to_string()));
        }
        if let Some(e) = &self.explainer {
            overrides.push(("pipeline.explainer", e.clone()));
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainSegArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Segmentation dataset root (images/ and masks/).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainClfArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Classification dataset root (images/ and labels.csv).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trained segmentation checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub seg_checkpoint: PathBuf,
    /// Trained classifier checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub clf_checkpoint: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Input images.
    #[arg(value_name = "IMAGE", required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Labeled classification dataset root.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub seg_checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub clf_checkpoint: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_name = "DIR")]
    pub clf_checkpoint: PathBuf,
    /// Attribution method to render (config key `pipeline.explainer`).
    #[arg(long, value_name = "NAME", value_parser = EXPLAINERS)]
    pub explainer: Option<String>,
    /// Input images.
    #[arg(value_name = "IMAGE", required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct XaiBenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Labeled classification dataset root.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub clf_checkpoint: PathBuf,
    /// Kept-pixel budget (config key `bokeh.keep_fraction`).
    #[arg(long, value_name = "F")]
    pub fraction: Option<f64>,
    /// Benchmark a single explainer; the random floor always runs too.
    #[arg(long, value_name = "NAME", value_parser = EXPLAINERS)]
    pub explainer: Option<String>,
}

/// Digest of a checkpoint directory: the SHA-256 of its sorted
/// `name:filehash` lines.
fn checkpoint_digest(dir: &Path) -> Result<String> {
    let mut lines: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            let name = path.file_name().expect("dir entries have names").to_string_lossy();
            lines.push(format!("{name}:{}", sha256_file(&path)?));
        }
    }
    lines.sort();
    Ok(sha256_hex(lines.join("\n").as_bytes()))
}

fn write_run_manifest(
    out_dir: &Path,
    command: &str,
    resolved: &BTreeMap<String, String>,
    checkpoints: &BTreeMap<&str, String>,
    inputs: &[String],
    outputs: &[String],
) -> Result<()> {
    let seed: u64 = resolved.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    let manifest = serde_json::json!({
        "command": command,
        "seed": seed,
        "config": resolved,
        "checkpoints": checkpoints,
        "inputs": inputs,
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    atomic_write(&out_dir.join("run_manifest.json"), format!("{text}\n").as_bytes())
}

/// Truncated two-decimal percentage. Reported accuracies truncate rather
/// than round, so 0.73656 prints as 73.65.
fn pct_floor(x: f64) -> String {
    format!("{:.2}", (x * 10000.0).floor() / 100.0)
}

/// The evaluate command's human-readable triage table.
pub fn format_summary(counts: &TriageCounts) -> Result<String> {
    let da = diagnostic_accuracy(counts)?;
    let plain = (counts.cc + counts.cu) as f64 / counts.total() as f64;
    Ok(format!(
        "images              {}\n\
         correct certain     {}\n\
         correct uncertain   {}\n\
         incorrect certain   {}\n\
         incorrect uncertain {}\n\
         diagnostic accuracy {}%\n\
         plain accuracy      {}%\n",
        counts.total(),
        counts.cc,
        counts.cu,
        counts.ic,
        counts.iu,
        pct_floor(da),
        pct_floor(plain),
    ))
}

/// File stems for the inputs, disambiguated when two inputs share one.
fn unique_stems(paths: &[PathBuf]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        let n = seen.entry(stem.clone()).or_insert(0usize);
        out.push(if *n == 0 { stem.clone() } else { format!("{stem}_{n}") });
        *n += 1;
    }
    out
}

/// The report JSON artifact: pretty-printed, wall-clock timings stripped
/// so a re-run reproduces the file byte for byte.
fn report_json(report: &DiagnosisReport) -> Result<String> {
    let mut v = serde_json::to_value(report)
        .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
    v.as_object_mut().expect("report is a JSON object").remove("timings");
    let text = serde_json::to_string_pretty(&v)
        .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
    Ok(format!("{text}\n"))
}

fn values_csv(values: &ndarray::Array2<f64>) -> String {
    let mut out = String::new();
    for row in values.rows() {
        let line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn rel_names(out_dir: &Path, paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .map(|p| {
            p.strip_prefix(out_dir)
                .unwrap_or(p.as_path())
                .to_string_lossy()
                .into_owned()
        })
        .collect()
}

pub fn train_seg(args: &TrainSegArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref(), &args.common.overrides())?;
    cfg.validate_all(skinet_core::CLASS_LABELS.len())?;
    let seed = cfg.seed()?;

    let manifest = load_dataset(&args.data, DatasetKind::Segmentation)?;
    let (train_m, val_m, _) = split(&manifest, cfg.split_fractions()?, seed)?;
    let model = build_segnet(&cfg.seg_config()?, derive_seed(seed, "init_seg", 0))?;
    let (model, history) =
        train_segnet(model, &train_m, &val_m, &cfg.train_config()?, derive_seed(seed, "train_seg", 0))?;

    let ckpt_dir = args.common.out.join("checkpoint");
    save_seg_checkpoint(&ckpt_dir, &model)?;
    let mut csv = String::from("epoch,train_loss,val_dice,val_jaccard\n");
    for e in &history {
        csv.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_dice, e.val_jaccard));
    }
    atomic_write(&args.common.out.join("history.csv"), csv.as_bytes())?;

    let checkpoints = BTreeMap::from([("checkpoint", checkpoint_digest(&ckpt_dir)?)]);
    write_run_manifest(
        &args.common.out,
        "train-seg",
        &cfg.resolved(skinet_core::CLASS_LABELS.len())?,
        &checkpoints,
        &[args.data.display().to_string()],
        &["checkpoint".into(), "history.csv".into()],
    )?;
    let best = history.iter().map(|e| e.val_dice).fold(f64::NEG_INFINITY, f64::max);
    println!("trained {} epochs; best val dice {best:.4}", history.len());
    Ok(())
}

pub fn train_clf(args: &TrainClfArgs) -> Result<()> {
    let cfg = RunConfig::load(args.common.config.as_deref(), &args.common.overrides())?;
    cfg.validate_all(skinet_core::CLASS_LABELS.len())?;
    let seed = cfg.seed()?;

    let manifest = load_dataset(&args.data, DatasetKind::Classification)?;
    let classes = manifest.class_counts.len();
    let (train_m, val_m, _) = split(&manifest, cfg.split_fractions()?, seed)?;
    let model = build_classifier(&cfg.clf_config(classes)?, derive_seed(seed, "init_clf", 0))?;
    let (model, history) = train_classifier(
        model,
        &train_m,
        &val_m,
        &cfg.train_config()?,
        &cfg.augment_spec()?,
        derive_seed(seed, "train_clf", 0),
    )?;

    let ckpt_dir = args.common.out.join("checkpoint");
    save_clf_checkpoint(&ckpt_dir, &model)?;
    let mut csv = String::from("epoch,train_loss,val_accuracy\n");
    for e in &history {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_accuracy));
    }
    atomic_write(&args.common.out.join("history.csv"), csv.as_bytes())?;

    let checkpoints = BTreeMap::from([("checkpoint", checkpoint_digest(&ckpt_dir)?)]);
    write_run_manifest(
        &args.common.out,
        "train-clf",
        &cfg.resolved(classes)?,
        &checkpoints,
        &[args.data.display().to_string()],
        &["checkpoint".into(), "history.csv".into()],
    )?;
    let best = history.iter().map(|e| e.val_accuracy).fold(f64::NEG_INFINITY, f64::max);
    println!("trained {} epochs; best val accuracy {best:.4}", history.len());
    Ok(())
}

pub fn infer(args: &InferArgs) -> Result<()> {
    let mut overrides = args.common.overrides();
    args.pipeline.push_overrides(&mut overrides);
    let cfg = RunConfig::load(args.common.config.as_deref(), &overrides)?;
    cfg.validate_all(skinet_core::CLASS_LABELS.len())?;
    let seed = cfg.seed()?;
    let pipe = cfg.pipeline_config()?;

    let seg = load_seg_checkpoint(&args.seg_checkpoint)?;
    let clf = load_clf_checkpoint(&args.clf_checkpoint)?;
    let checkpoints = BTreeMap::from([
        ("seg_checkpoint", checkpoint_digest(&args.seg_checkpoint)?),
        ("clf_checkpoint", checkpoint_digest(&args.clf_checkpoint)?),
    ]);

    let stems = unique_stems(&args.images);
    let mut outputs = Vec::new();
    for (idx, (path, stem)) in args.images.iter().zip(&stems).enumerate() {
        let img = match seg.input_size() {
            Some(s) => load_preprocessed(path, s)?,
            None => skinet_core::data::load_image(path)?,
        };
        let report =
            skinet_infer(&seg, &clf, stem, &img, &pipe, derive_seed(seed, "image", idx as u64))?;

        let report_path = args.common.out.join(format!("{stem}_report.json"));
        atomic_write(&report_path, report_json(&report)?.as_bytes())?;
        outputs.push(format!("{stem}_report.json"));
        let bundle = save_report_bundle(&args.common.out, &report)?;
        outputs.extend(rel_names(&args.common.out, &bundle));

        println!(
            "{stem}: {} {} (phi_norm {:.4})",
            report.verdict, report.clf.predicted_class, report.clf.uncertainty.phi_norm
        );
    }

    write_run_manifest(
        &args.common.out,
        "infer",
        &cfg.resolved(skinet_core::CLASS_LABELS.len())?,
        &checkpoints,
        &args.images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        &outputs,
    )
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut overrides = args.common.overrides();
    args.pipeline.push_overrides(&mut overrides);
    let cfg = RunConfig::load(args.common.config.as_deref(), &overrides)?;
    cfg.validate_all(skinet_core::CLASS_LABELS.len())?;
    let seed = cfg.seed()?;
    let pipe = cfg.pipeline_config()?;

    let seg = load_seg_checkpoint(&args.seg_checkpoint)?;
    let clf = load_clf_checkpoint(&args.clf_checkpoint)?;
    let checkpoints = BTreeMap::from([
        ("seg_checkpoint", checkpoint_digest(&args.seg_checkpoint)?),
        ("clf_checkpoint", checkpoint_digest(&args.clf_checkpoint)?),
    ]);
    let manifest = load_dataset(&args.data, DatasetKind::Classification)?;
    let eval = evaluate_pipeline(&seg, &clf, &manifest, &pipe, seed)?;

    let counts_json = serde_json::json!({
        "counts": eval.counts,
        "diagnostic_accuracy": eval.diagnostic_accuracy,
        "plain_accuracy": eval.plain_accuracy,
    });
    let counts_text = serde_json::to_string_pretty(&counts_json)
        .map_err(|e| Error::Config(format!("summary serialization failed: {e}")))?;
    atomic_write(
        &args.common.out.join("triage_counts.json"),
        format!("{counts_text}\n").as_bytes(),
    )?;

    let mut csv = String::from("image,label,predicted,phi_norm,certain,correct,seg_used,category\n");
    for r in &eval.records {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.image, r.label, r.predicted, r.phi_norm, r.certain, r.correct, r.seg_used, r.category
        ));
    }
    atomic_write(&args.common.out.join("records.csv"), csv.as_bytes())?;

    let summary = format_summary(&eval.counts)?;
    atomic_write(&args.common.out.join("summary.txt"), summary.as_bytes())?;

    write_run_manifest(
        &args.common.out,
        "evaluate",
        &cfg.resolved(skinet_core::CLASS_LABELS.len())?,
        &checkpoints,
        &[args.data.display().to_string()],
        &["triage_counts.json".into(), "records.csv".into(), "summary.txt".into()],
    )?;
    print!("{summary}");
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let mut overrides = args.common.overrides();
    if let Some(e) = &args.explainer {
        overrides.push(("pipeline.explainer", e.clone()));
    }
    let cfg = RunConfig::load(args.common.config.as_deref(), &overrides)?;
    cfg.validate_all(skinet_core::CLASS_LABELS.len())?;
    let seed = cfg.seed()?;
    let method = cfg.pipeline_config()?.explainer;
    let xrai_params = cfg.xrai_params()?;

    let clf = load_clf_checkpoint(&args.clf_checkpoint)?;
    let checkpoints =
        BTreeMap::from([("clf_checkpoint", checkpoint_digest(&args.clf_checkpoint)?)]);

    let stems = unique_stems(&args.images);
    let mut outputs = Vec::new();
    for (idx, (path, stem)) in args.images.iter().zip(&stems).enumerate() {
        let img = load_preprocessed(path, clf.cfg.input_shape.0)?;
        let probs = clf_forward(&clf, &img, false, 0)?;
        let class = probs.argmax();
        let attr = match method {
            SaliencyMethod::Xrai => xrai(&clf, &img, class, &xrai_params)?,
            m => attribute(&clf, &img, class, m, derive_seed(seed, "saliency", idx as u64))?,
        };

        let png_name = format!("{stem}_{}.png", method.as_str());
        save_image_png(&args.common.out.join(&png_name), &saliency_overlay(&img, &attr.values)?)?;
        let csv_name = format!("{stem}_{}.csv", method.as_str());
        atomic_write(&args.common.out.join(&csv_name), values_csv(&attr.values).as_bytes())?;
        outputs.push(png_name);
        outputs.push(csv_name);

        println!("{stem}: {} map for predicted class {}", method.as_str(), attr.target_class);
    }

    write_run_manifest(
        &args.common.out,
        "explain",
        &cfg.resolved(skinet_core::CLASS_LABELS.len())?,
        &checkpoints,
        &args.images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        &outputs,
    )
}

pub fn xai_bench(args: &XaiBenchArgs) -> Result<()> {
    let mut overrides = args.common.overrides();
    if let Some(f) = args.fraction {
        overrides.push(("bokeh.keep_fraction", f.to_string()));
    }
    let cfg = RunConfig::load(args.common.config.as_deref(), &overrides)?;
    cfg.validate_all(skinet_core::CLASS_LABELS.len())?;
    let seed = cfg.seed()?;
    let params = cfg.bokeh_params()?;

    let clf = load_clf_checkpoint(&args.clf_checkpoint)?;
    let checkpoints =
        BTreeMap::from([("clf_checkpoint", checkpoint_digest(&args.clf_checkpoint)?)]);
    let manifest = load_dataset(&args.data, DatasetKind::Classification)?;

    let mut methods: Vec<SaliencyMethod> = match &args.explainer {
        Some(s) => vec![SaliencyMethod::parse(s)?],
        None => vec![
            SaliencyMethod::GuidedBackprop,
            SaliencyMethod::GradCam,
            SaliencyMethod::GuidedGradCam,
            SaliencyMethod::Xrai,
        ],
    };
    methods.push(SaliencyMethod::Random);

    let baseline = baseline_accuracy(&clf, &manifest)?;
    let mut all_records = Vec::new();
    let mut retained = BTreeMap::new();
    println!("baseline accuracy {baseline:.4} (fraction 1)");
    for m in methods {
        let eval = evaluate_explainer(&clf, &manifest, m, params.keep_fraction, &params, seed)?;
        println!(
            "{:<8} retained accuracy {:.4} (fraction {})",
            m.as_str(),
            eval.retained_accuracy,
            params.keep_fraction
        );
        retained.insert(m.as_str().to_string(), eval.retained_accuracy);
        all_records.extend(eval.records);
    }

    atomic_write(
        &args.common.out.join("bokeh_records.csv"),
        records_to_csv(&all_records).as_bytes(),
    )?;
    let summary = serde_json::json!({
        "baseline_accuracy": baseline,
        "fraction": params.keep_fraction,
        "retained": retained,
    });
    let summary_text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("summary serialization failed: {e}")))?;
    atomic_write(
        &args.common.out.join("bokeh_summary.json"),
        format!("{summary_text}\n").as_bytes(),
    )?;

    write_run_manifest(
        &args.common.out,
        "xai-bench",
        &cfg.resolved(skinet_core::CLASS_LABELS.len())?,
        &checkpoints,
        &[args.data.display().to_string()],
        &["bokeh_records.csv".into(), "bokeh_summary.json".into()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_prints_truncated_percentages() {
        let a = TriageCounts { cc: 1727, cu: 627, ic: 74, iu: 233 };
        let text = format_summary(&a).unwrap();
        assert!(text.contains("diagnostic accuracy 73.65%"), "{text}");
        assert!(text.contains("images              2661"), "{text}");

        let b = TriageCounts { cc: 1602, cu: 722, ic: 76, iu: 261 };
        let text = format_summary(&b).unwrap();
        assert!(text.contains("diagnostic accuracy 70.01%"), "{text}");
    }

    #[test]
    fn percentages_truncate_rather_than_round() {
        assert_eq!(pct_floor(0.7365652), "73.65");
        assert_eq!(pct_floor(0.70012), "70.01");
        assert_eq!(pct_floor(1.0), "100.00");
        assert_eq!(pct_floor(0.0), "0.00");
    }

    #[test]
    fn stems_disambiguate_collisions() {
        let paths = vec![
            PathBuf::from("a/x.png"),
            PathBuf::from("b/x.png"),
            PathBuf::from("c/y.png"),
        ];
        assert_eq!(unique_stems(&paths), vec!["x", "x_1", "y"]);
    }

    #[test]
    fn checkpoint_digest_tracks_content_not_creation_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("one");
        let b = dir.path().join("two");
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        std::fs::write(a.join("config.txt"), "k=v\n").unwrap();
        std::fs::write(a.join("weights.bin"), [1u8, 2, 3]).unwrap();
        std::fs::write(b.join("weights.bin"), [1u8, 2, 3]).unwrap();
        std::fs::write(b.join("config.txt"), "k=v\n").unwrap();
        assert_eq!(checkpoint_digest(&a).unwrap(), checkpoint_digest(&b).unwrap());

        std::fs::write(b.join("weights.bin"), [9u8]).unwrap();
        assert_ne!(checkpoint_digest(&a).unwrap(), checkpoint_digest(&b).unwrap());
    }

    #[test]
    fn values_csv_is_row_major() {
        let m = ndarray::arr2(&[[1.0, 2.5], [0.125, 4.0]]);
        assert_eq!(values_csv(&m), "1,2.5\n0.125,4\n");
    }
}
