//! SkiNet orchestration: segment, gate the mask on segmentation
//! uncertainty, classify the routed image, gate the diagnosis on
//! classification uncertainty, and attach an explanation when the verdict
//! is certain. Also the end-to-end evaluator that produces triage counts.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::classifier::ClfModel;
use crate::data::{load_image, preprocess, resize_bicubic, AugmentationSpec, DatasetManifest};
use crate::error::{Error, Result};
use crate::metrics::binarize;
use crate::saliency::{attribute, AttributionMap, SaliencyMethod};
use crate::segnet::SegModel;
use crate::types::{BinaryMask, Image, TriageCounts};
use crate::uncertainty::{
    combined_predict, diagnostic_accuracy, record_triage, seg_uncertainty, triage, Prediction,
    SegUncertainty, TriageOutcome, DEFAULT_SAMPLE_COUNT,
};
use crate::util::{derive_seed, sha256_hex};

/// How a certain mask is applied to the image before classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum MaskApplyMode {
    /// Crop to the mask bounding box plus margin, resize back.
    #[serde(rename = "crop_bbox_margin")]
    CropBboxMargin,
    /// Zero out the background.
    #[serde(rename = "multiply")]
    Multiply,
    /// Zero the background, then crop and resize.
    #[serde(rename = "multiply_then_crop")]
    MultiplyThenCrop,
}

impl MaskApplyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskApplyMode::CropBboxMargin => "crop_bbox_margin",
            MaskApplyMode::Multiply => "multiply",
            MaskApplyMode::MultiplyThenCrop => "multiply_then_crop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "crop_bbox_margin" => Ok(MaskApplyMode::CropBboxMargin),
            "multiply" => Ok(MaskApplyMode::Multiply),
            "multiply_then_crop" => Ok(MaskApplyMode::MultiplyThenCrop),
            other => Err(Error::Config(format!("unknown mask apply mode {other}"))),
        }
    }
}

/// Pipeline thresholds and routing knobs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Segmentation gate: the mask is used iff seg phi_norm < this.
    pub seg_threshold: f64,
    /// Diagnosis gate: the verdict is certain iff clf phi_norm < this.
    pub clf_threshold: f64,
    pub mask_apply_mode: MaskApplyMode,
    /// Bounding-box expansion per side, as a fraction of box size.
    pub margin: f64,
    /// Monte Carlo sample count for both stages.
    pub samples: usize,
    pub explainer: SaliencyMethod,
    /// Test-time augmentation family for the combined sampler.
    pub augment: AugmentationSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seg_threshold: 0.25,
            clf_threshold: 0.35,
            mask_apply_mode: MaskApplyMode::MultiplyThenCrop,
            margin: 0.10,
            samples: DEFAULT_SAMPLE_COUNT,
            explainer: SaliencyMethod::Xrai,
            augment: AugmentationSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("seg", self.seg_threshold), ("clf", self.clf_threshold)] {
            if !(0.0..=1.0).contains(&t) || !t.is_finite() {
                return Err(Error::Config(format!("{name} threshold {t} outside [0, 1]")));
            }
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin {} is not valid", self.margin)));
        }
        if self.samples < 2 {
            return Err(Error::Config(format!(
                "pipeline needs at least 2 samples, got {}",
                self.samples
            )));
        }
        Ok(())
    }
}

/// Half-open crop window `(row0, row1, col0, col1)` covering the mask's
/// bounding box expanded by `margin` of the box size per side, clamped to
/// the frame. `None` for an empty mask.
pub fn crop_window(
    mask: &BinaryMask,
    margin: f64,
) -> Result<Option<(usize, usize, usize, usize)>> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Config(format!("margin {margin} is not valid")));
    }
    let (h, w) = mask.data().dim();
    let (mut r0, mut r1, mut c0, mut c1) = (h, 0usize, w, 0usize);
    for ((i, j), &on) in mask.data().indexed_iter() {
        if on {
            r0 = r0.min(i);
            r1 = r1.max(i + 1);
            c0 = c0.min(j);
            c1 = c1.max(j + 1);
        }
    }
    if r1 == 0 {
        return Ok(None);
    }
    let pad_r = (margin * (r1 - r0) as f64).round() as usize;
    let pad_c = (margin * (c1 - c0) as f64).round() as usize;
    Ok(Some((r0.saturating_sub(pad_r), (r1 + pad_r).min(h), c0.saturating_sub(pad_c), (c1 + pad_c).min(w))))
}

fn multiply_mask(img: &Image, mask: &BinaryMask) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let out = Array3::from_shape_fn((h, w, c), |(i, j, ch)| {
        if mask.data()[[i, j]] {
            img.data()[[i, j, ch]]
        } else {
            0.0
        }
    });
    Image::new(out).expect("masking keeps values in range")
}

fn crop_resize(img: &Image, window: (usize, usize, usize, usize)) -> Result<Image> {
    let (r0, r1, c0, c1) = window;
    let cropped = img.data().slice(ndarray::s![r0..r1, c0..c1, ..]).to_owned();
    resize_bicubic(&Image::new(cropped)?, img.height(), img.width())
}

/// Applies a segmentation mask to the image. Returns the routed image and
/// an optional warning; an empty mask warns in every mode, and crop modes
/// fall back to the original image rather than produce a blank crop.
pub fn apply_mask(
    img: &Image,
    mask: &BinaryMask,
    mode: MaskApplyMode,
    margin: f64,
) -> Result<(Image, Option<String>)> {
    if mask.data().dim() != (img.height(), img.width()) {
        return Err(Error::Shape(format!(
            "mask {:?} does not match image {}x{}",
            mask.data().dim(),
            img.height(),
            img.width()
        )));
    }
    let window = crop_window(mask, margin)?;
    match (mode, window) {
        (MaskApplyMode::Multiply, Some(_)) => Ok((multiply_mask(img, mask), None)),
        (MaskApplyMode::Multiply, None) => Ok((
            multiply_mask(img, mask),
            Some("mask is empty; multiplied image is all background".into()),
        )),
        (MaskApplyMode::CropBboxMargin, Some(win)) => Ok((crop_resize(img, win)?, None)),
        (MaskApplyMode::MultiplyThenCrop, Some(win)) => {
            Ok((crop_resize(&multiply_mask(img, mask), win)?, None))
        }
        (_, None) => Ok((
            img.clone(),
            Some("mask is empty; crop fell back to the original image".into()),
        )),
    }
}

/// Anything that can produce a segmentation with uncertainty; lets tests
/// force the gate without training a model.
pub trait Segmenter {
    /// Square input size the segmenter expects, if fixed.
    fn input_size(&self) -> Option<usize> {
        None
    }

    fn segment(
        &self,
        img: &Image,
        aug: &AugmentationSpec,
        samples: usize,
        seed: u64,
    ) -> Result<SegUncertainty>;
}

impl Segmenter for SegModel {
    fn input_size(&self) -> Option<usize> {
        Some(self.cfg.input_shape.0)
    }

    fn segment(
        &self,
        img: &Image,
        aug: &AugmentationSpec,
        samples: usize,
        seed: u64,
    ) -> Result<SegUncertainty> {
        seg_uncertainty(self, img, aug, samples, seed)
    }
}

/// The segmentation stage of a report.
#[derive(Debug, Clone, Serialize)]
pub struct SegStage {
    pub mean_map: Array2<f64>,
    pub mask: BinaryMask,
    pub uncertainty: SegUncertainty,
    /// Whether the mask gated through to the classifier.
    pub used: bool,
}

/// One image's full trip through the pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosisReport {
    pub schema_version: u32,
    pub input: String,
    pub seg: SegStage,
    pub clf: Prediction,
    /// "certain" or "refer_to_expert".
    pub verdict: String,
    /// Present iff the verdict is certain.
    pub saliency: Option<AttributionMap>,
    /// Digest of the exact image the classifier consumed.
    pub routed_input_sha256: String,
    pub warnings: Vec<String>,
    /// Wall-clock milliseconds per stage. Excluded from the canonical form.
    pub timings: BTreeMap<String, f64>,
    /// The segmentation-resolution input, kept for overlay rendering.
    #[serde(skip_serializing)]
    pub base_image: Image,
    /// The image the classifier consumed, kept for overlay rendering.
    #[serde(skip_serializing)]
    pub routed_image: Image,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const VERDICT_CERTAIN: &str = "certain";
pub const VERDICT_REFER: &str = "refer_to_expert";

impl DiagnosisReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("report serialization failed: {e}")))
    }

    /// The reproducible form: the full JSON minus wall-clock timings.
    /// Identical runs produce byte-identical canonical reports.
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)
            .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
        v.as_object_mut().expect("report is a JSON object").remove("timings");
        Ok(v.to_string())
    }
}

/// Digest of an image's dimensions and raw samples.
pub fn image_sha256(img: &Image) -> String {
    let mut bytes =
        Vec::with_capacity(24 + img.data().len() * std::mem::size_of::<f64>());
    for d in [img.height(), img.width(), img.channels()] {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in img.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn stage_err(e: Error, stage: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{stage}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{stage}: {m}")),
        Error::Unsupported(m) => Error::Unsupported(format!("{stage}: {m}")),
        other => other,
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs one image through the full pipeline.
///
/// Stages: (1) Bayesian segmentation with `cfg.samples` draws; (2) if the
/// segmentation scalar phi_norm clears the gate, mask the image, else pass
/// the original; (3) combined MC dropout + TTA classification of the
/// routed image; (4) triage against `cfg.clf_threshold`; (5) attach the
/// configured explainer's map when certain, or flag expert referral.
pub fn skinet_infer(
    seg: &dyn Segmenter,
    clf: &ClfModel,
    input_id: &str,
    img: &Image,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<DiagnosisReport> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let base = match seg.input_size() {
        Some(s) if (img.height(), img.width()) != (s, s) => {
            preprocess(img, s).map_err(|e| stage_err(e, "segmentation preprocessing"))?
        }
        _ => img.clone(),
    };
    let su = seg
        .segment(&base, &cfg.augment, cfg.samples, derive_seed(seed, "seg", 0))
        .map_err(|e| stage_err(e, "segmentation stage"))?;
    let mask = binarize(&su.mean_map, 0.5).map_err(|e| stage_err(e, "segmentation stage"))?;
    let used = su.scalar_phi_norm < cfg.seg_threshold;
    timings.insert("segmentation".into(), ms(t));

    let t = Instant::now();
    let routed_base = if used {
        let (masked, warning) = apply_mask(&base, &mask, cfg.mask_apply_mode, cfg.margin)
            .map_err(|e| stage_err(e, "mask application"))?;
        match warning {
            // Fail open: a degenerate empty mask routes the original.
            Some(w) => {
                warnings.push(w);
                base.clone()
            }
            None => masked,
        }
    } else {
        base.clone()
    };
    let (clf_h, clf_w, _) = clf.cfg.input_shape;
    let routed = if (routed_base.height(), routed_base.width()) != (clf_h, clf_w) {
        preprocess(&routed_base, clf_h)
            .map_err(|e| stage_err(e, "classification preprocessing"))?
    } else {
        routed_base
    };
    let routed_input_sha256 = image_sha256(&routed);
    timings.insert("routing".into(), ms(t));

    let t = Instant::now();
    let (pred, _) = combined_predict(
        clf,
        &routed,
        &cfg.augment,
        cfg.samples,
        derive_seed(seed, "clf", 0),
    )
    .map_err(|e| stage_err(e, "classification stage"))?;
    let uncertainty = pred.uncertainty.with_threshold(cfg.clf_threshold)?;
    let clf_pred = Prediction { uncertainty, ..pred };
    let certain = triage(&clf_pred, None, cfg.clf_threshold).is_certain();
    timings.insert("classification".into(), ms(t));

    let t = Instant::now();
    let saliency = if certain {
        Some(
            attribute(
                clf,
                &routed,
                clf_pred.class_index,
                cfg.explainer,
                derive_seed(seed, "saliency", 0),
            )
            .map_err(|e| stage_err(e, "saliency stage"))?,
        )
    } else {
        None
    };
    timings.insert("saliency".into(), ms(t));

    Ok(DiagnosisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        input: input_id.to_string(),
        seg: SegStage { mean_map: su.mean_map.clone(), mask, uncertainty: su, used },
        clf: clf_pred,
        verdict: if certain { VERDICT_CERTAIN.into() } else { VERDICT_REFER.into() },
        saliency,
        routed_input_sha256,
        warnings,
        timings,
        base_image: base,
        routed_image: routed,
    })
}

/// One manifest entry's outcome in an end-to-end evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRecord {
    pub image: String,
    pub label: String,
    pub predicted: String,
    pub phi_norm: f64,
    pub certain: bool,
    pub correct: bool,
    pub seg_used: bool,
    /// Eq. 8 cell: cc, cu, ic, or iu.
    pub category: String,
}

/// Aggregate of an end-to-end run over a labeled manifest.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineEvaluation {
    pub counts: TriageCounts,
    /// Eq. 8: (cc + iu) / total.
    pub diagnostic_accuracy: f64,
    /// Plain prediction accuracy, (cc + cu) / total.
    pub plain_accuracy: f64,
    pub records: Vec<PipelineRecord>,
}

/// Runs [`skinet_infer`] over every manifest entry and accumulates the
/// four Eq. 8 cells plus both accuracy summaries.
pub fn evaluate_pipeline(
    seg: &dyn Segmenter,
    clf: &ClfModel,
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineEvaluation> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(Error::Config("cannot evaluate the pipeline on an empty manifest".into()));
    }
    let mut counts = TriageCounts::default();
    let mut records = Vec::with_capacity(manifest.len());
    for (idx, entry) in manifest.entries.iter().enumerate() {
        let label = entry
            .label
            .as_deref()
            .ok_or_else(|| Error::Config(format!("entry {} has no class label", entry.name)))?;
        let img = load_image(&entry.image)?;
        let report = skinet_infer(
            seg,
            clf,
            &entry.name,
            &img,
            cfg,
            derive_seed(seed, "image", idx as u64),
        )?;
        let category = match triage(&report.clf, Some(label), cfg.clf_threshold) {
            TriageOutcome::Category(c) => c,
            _ => unreachable!("labeled triage always grades"),
        };
        record_triage(&mut counts, category);
        records.push(PipelineRecord {
            image: entry.name.clone(),
            label: label.to_string(),
            predicted: report.clf.predicted_class.clone(),
            phi_norm: report.clf.uncertainty.phi_norm,
            certain: report.verdict == VERDICT_CERTAIN,
            correct: report.clf.predicted_class == label,
            seg_used: report.seg.used,
            category: category.as_code().to_string(),
        });
    }
    let total = counts.total() as f64;
    Ok(PipelineEvaluation {
        diagnostic_accuracy: diagnostic_accuracy(&counts)?,
        plain_accuracy: (counts.cc + counts.cu) as f64 / total,
        counts,
        records,
    })
}
