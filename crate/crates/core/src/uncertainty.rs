//! The sampling engine behind every "Bayesian" claim in the pipeline:
//! epistemic uncertainty from MC dropout, aleatoric from test-time
//! augmentation, and the combined estimator that draws both at once. Also
//! owns triage into the four certainty/correctness cells and the diagnostic
//! accuracy they induce.
//!
//! Sampling is reproducible sample-by-sample: iteration `m` gets dropout
//! seed `derive_seed(seed, "dropout", m)` and augmentation draw `m` of the
//! TTA family rooted at the same seed, so an audit log of per-sample seeds
//! regenerates any single forward. It also makes the degeneracies exact:
//! with no dropout layers, combined sampling IS the TTA estimator; with
//! augmentation disabled, it IS the MC-dropout estimator.

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{probability_from_output, ClfModel};
use crate::data::{apply_draw, image_to_net_input, invert_draw_map, tta_draws, AugmentationSpec};
use crate::error::{Error, Result};
use crate::metrics::{entropy, entropy_bounds};
use crate::nn::Phase;
use crate::segnet::SegModel;
use crate::types::{BinaryMask, Image, ProbabilityVector, TriageCounts, UncertaintyRecord};
use crate::util::derive_seed;

/// Default number of stochastic forwards per estimate (O, V, and M alike).
pub const DEFAULT_SAMPLE_COUNT: usize = 30;

/// Default certainty threshold stamped on classification records; the
/// pipeline overrides it with its configured value.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

/// Which randomness source produced a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    /// MC dropout only (Eq. 1).
    Epistemic,
    /// Test-time augmentation only (Eq. 2).
    Aleatoric,
    /// Fresh augmentation and fresh dropout each iteration (Eq. 3).
    Combined,
}

impl SampleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleMode::Epistemic => "epistemic",
            SampleMode::Aleatoric => "aleatoric",
            SampleMode::Combined => "combined",
        }
    }
}

/// The raw samples behind one uncertainty estimate.
#[derive(Debug, Clone)]
pub struct SampleSet<T> {
    pub samples: Vec<T>,
    pub mode: SampleMode,
    /// Per-sample seeds: dropout seeds for epistemic/combined sampling,
    /// augmentation-stream seeds for aleatoric.
    pub seeds: Vec<u64>,
}

impl<T> SampleSet<T> {
    pub fn count(&self) -> usize {
        self.samples.len()
    }
}

/// A summarized prediction: the sample mean, its argmax, and its entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Mean probability vector over samples.
    pub mean: ProbabilityVector,
    /// Label at the argmax of the mean (smallest index on ties).
    pub predicted_class: String,
    /// Index of that label in the model's label order.
    pub class_index: usize,
    pub uncertainty: UncertaintyRecord,
}

/// Per-pixel and scalar uncertainty of a segmentation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegUncertainty {
    /// Pixelwise mean of the sampled probability maps, in `[0, 1]`.
    pub mean_map: Array2<f64>,
    /// Binary entropy of the mean at each pixel, in nats (`[0, ln 2]`).
    pub pixel_entropy_map: Array2<f64>,
    /// Mean pixel entropy over the whole frame, divided by ln 2.
    pub scalar_phi_norm: f64,
}

impl SegUncertainty {
    /// The scalar recomputed over a region of interest only, for callers
    /// that prefer lesion-local uncertainty to the whole-frame default.
    pub fn scalar_over_region(&self, region: &BinaryMask) -> Result<f64> {
        if region.data().dim() != self.pixel_entropy_map.dim() {
            return Err(Error::Shape(format!(
                "region {:?} does not match map {:?}",
                region.data().dim(),
                self.pixel_entropy_map.dim()
            )));
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for (e, &m) in self.pixel_entropy_map.iter().zip(region.data().iter()) {
            if m {
                sum += e;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Config("region mask is empty".into()));
        }
        Ok(sum / n as f64 / 2f64.ln())
    }
}

/// Binary entropy `-p ln p - (1-p) ln(1-p)` in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let mut acc = 0.0;
    if p > 0.0 {
        acc -= p * p.ln();
    }
    if p < 1.0 {
        acc -= (1.0 - p) * (1.0 - p).ln();
    }
    acc
}

fn check_count(count: usize, what: &str) -> Result<()> {
    if count < 2 {
        return Err(Error::Config(format!(
            "{what} needs at least 2 samples for an uncertainty estimate, got {count}"
        )));
    }
    Ok(())
}

/// Reduces raw probability samples to a [`Prediction`] plus its
/// [`SampleSet`]. Aggregation is ordered by sample index, so the result is
/// independent of how the samples were produced.
pub fn summarize_samples(
    samples: Vec<ProbabilityVector>,
    labels: &[String],
    mode: SampleMode,
    seeds: Vec<u64>,
) -> Result<(Prediction, SampleSet<ProbabilityVector>)> {
    check_count(samples.len(), mode.as_str())?;
    let n = samples[0].len();
    if labels.len() != n {
        return Err(Error::Config(format!(
            "{} labels for {n}-class samples",
            labels.len()
        )));
    }
    for s in &samples {
        if s.len() != n {
            return Err(Error::Shape(format!(
                "sample length {} differs from first sample {n}",
                s.len()
            )));
        }
    }
    let mut mean = vec![0.0; n];
    for s in &samples {
        for (acc, &p) in mean.iter_mut().zip(s.values()) {
            *acc += p;
        }
    }
    for acc in &mut mean {
        *acc /= samples.len() as f64;
    }
    let mean = ProbabilityVector::new(mean)?;
    let phi = entropy(&mean);
    let (lo, hi) = entropy_bounds(n);
    let uncertainty = UncertaintyRecord::new(phi, lo, hi, DEFAULT_THRESHOLD)?;
    let class_index = mean.argmax();
    let prediction = Prediction {
        mean: mean.clone(),
        predicted_class: labels[class_index].clone(),
        class_index,
        uncertainty,
    };
    Ok((prediction, SampleSet { samples, mode, seeds }))
}

fn clf_sample(model: &ClfModel, img: &Image, rng: Option<&mut ChaCha8Rng>) -> Result<ProbabilityVector> {
    let x = image_to_net_input(img, model.cfg.input_shape)?;
    let acts = match rng {
        Some(rng) => model.graph.forward(&x, &mut Phase::McDropout { rng })?,
        None => model.graph.forward(&x, &mut Phase::Inference)?,
    };
    probability_from_output(acts.output(model.graph.output_id()))
}

/// Epistemic estimate (Eq. 1): `o` stochastic forwards on the unaugmented
/// input, each with its own dropout seed.
pub fn mc_dropout_predict(
    model: &ClfModel,
    img: &Image,
    o: usize,
    seed: u64,
) -> Result<(Prediction, SampleSet<ProbabilityVector>)> {
    check_count(o, "mc_dropout_predict")?;
    let mut samples = Vec::with_capacity(o);
    let mut seeds = Vec::with_capacity(o);
    for i in 0..o {
        let s = derive_seed(seed, "dropout", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        samples.push(clf_sample(model, img, Some(&mut rng))?);
        seeds.push(s);
    }
    summarize_samples(samples, &model.labels, SampleMode::Epistemic, seeds)
}

/// Aleatoric estimate (Eq. 2): deterministic forwards over the TTA family
/// (identity first), dropout inactive.
pub fn tta_predict(
    model: &ClfModel,
    img: &Image,
    aug: &AugmentationSpec,
    v: usize,
    seed: u64,
) -> Result<(Prediction, SampleSet<ProbabilityVector>)> {
    check_count(v, "tta_predict")?;
    let draws = tta_draws(aug, v, seed)?;
    let mut samples = Vec::with_capacity(v);
    let mut seeds = Vec::with_capacity(v);
    for (i, d) in draws.iter().enumerate() {
        let augmented = apply_draw(img, d)?;
        samples.push(clf_sample(model, &augmented, None)?);
        seeds.push(derive_seed(seed, "tta", i as u64));
    }
    summarize_samples(samples, &model.labels, SampleMode::Aleatoric, seeds)
}

/// Combined estimate (Eq. 3): iteration `m` pairs augmentation draw `m`
/// with dropout seed `m`: a single sum over M, not a V x O grid.
pub fn combined_predict(
    model: &ClfModel,
    img: &Image,
    aug: &AugmentationSpec,
    m: usize,
    seed: u64,
) -> Result<(Prediction, SampleSet<ProbabilityVector>)> {
    check_count(m, "combined_predict")?;
    let draws = tta_draws(aug, m, seed)?;
    let mut samples = Vec::with_capacity(m);
    let mut seeds = Vec::with_capacity(m);
    for (i, d) in draws.iter().enumerate() {
        let augmented = apply_draw(img, d)?;
        let s = derive_seed(seed, "dropout", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        samples.push(clf_sample(model, &augmented, Some(&mut rng))?);
        seeds.push(s);
    }
    summarize_samples(samples, &model.labels, SampleMode::Combined, seeds)
}

/// Aggregates already-aligned segmentation probability maps into a
/// [`SegUncertainty`]. `coverages` weights each sample per pixel (0 where an
/// augmented view never observed the pixel); pass `None` for full coverage.
pub fn seg_uncertainty_from_samples(
    samples: &[Array2<f64>],
    coverages: Option<&[Array2<f64>]>,
) -> Result<SegUncertainty> {
    check_count(samples.len(), "seg_uncertainty")?;
    let dim = samples[0].dim();
    if let Some(covs) = coverages {
        if covs.len() != samples.len() {
            return Err(Error::Shape(format!(
                "{} coverage maps for {} samples",
                covs.len(),
                samples.len()
            )));
        }
    }
    let mut acc = Array2::<f64>::zeros(dim);
    let mut weight = Array2::<f64>::zeros(dim);
    for (i, map) in samples.iter().enumerate() {
        if map.dim() != dim {
            return Err(Error::Shape(format!(
                "sample {i} has shape {:?}, expected {dim:?}",
                map.dim()
            )));
        }
        for (j, &p) in map.iter().enumerate() {
            if !(-1e-9..=1.0 + 1e-9).contains(&p) {
                return Err(Error::Shape(format!(
                    "sample {i} holds probability {p} outside [0, 1]"
                )));
            }
            let cov = coverages.map_or(1.0, |c| c[i].as_slice().unwrap()[j]);
            let slot = acc.as_slice_mut().unwrap();
            slot[j] += cov * p.clamp(0.0, 1.0);
            weight.as_slice_mut().unwrap()[j] += cov;
        }
    }
    let (h, w) = dim;
    let mut mean_map = Array2::zeros(dim);
    let mut pixel_entropy_map = Array2::zeros(dim);
    let mut entropy_sum = 0.0;
    for i in 0..h {
        for j in 0..w {
            if weight[[i, j]] <= 0.0 {
                return Err(Error::Config(format!(
                    "pixel ({i}, {j}) observed by no sample"
                )));
            }
            let p = acc[[i, j]] / weight[[i, j]];
            let e = binary_entropy(p);
            mean_map[[i, j]] = p;
            pixel_entropy_map[[i, j]] = e;
            entropy_sum += e;
        }
    }
    Ok(SegUncertainty {
        mean_map,
        pixel_entropy_map,
        scalar_phi_norm: entropy_sum / (h * w) as f64 / 2f64.ln(),
    })
}

/// Combined-mode uncertainty for a segmentation model: M stochastic
/// forwards on augmented views, each pulled back to the original frame with
/// coverage weights before pixelwise aggregation.
pub fn seg_uncertainty(
    model: &SegModel,
    img: &Image,
    aug: &AugmentationSpec,
    m: usize,
    seed: u64,
) -> Result<SegUncertainty> {
    check_count(m, "seg_uncertainty")?;
    let draws = tta_draws(aug, m, seed)?;
    let (h, w, _) = model.cfg.input_shape;
    let mut samples = Vec::with_capacity(m);
    let mut coverages = Vec::with_capacity(m);
    for (i, d) in draws.iter().enumerate() {
        let augmented = apply_draw(img, d)?;
        let x = image_to_net_input(&augmented, model.cfg.input_shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "dropout", i as u64));
        let acts = model.graph.forward(&x, &mut Phase::McDropout { rng: &mut rng })?;
        let out = acts.output(model.graph.output_id());
        let map = Array2::from_shape_fn((h, w), |(r, c)| out[[0, 0, r, c]]);
        let (aligned, cov) = invert_draw_map(&map, d);
        samples.push(aligned);
        coverages.push(cov);
    }
    seg_uncertainty_from_samples(&samples, Some(&coverages))
}

/// The four cells of Eq. 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriageCategory {
    CorrectCertain,
    CorrectUncertain,
    IncorrectCertain,
    IncorrectUncertain,
}

impl TriageCategory {
    pub fn as_code(&self) -> &'static str {
        match self {
            TriageCategory::CorrectCertain => "cc",
            TriageCategory::CorrectUncertain => "cu",
            TriageCategory::IncorrectCertain => "ic",
            TriageCategory::IncorrectUncertain => "iu",
        }
    }
}

/// Triage of one prediction; graded when ground truth is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriageOutcome {
    Category(TriageCategory),
    Certain,
    ReferToExpert,
}

impl TriageOutcome {
    pub fn is_certain(&self) -> bool {
        match self {
            TriageOutcome::Category(c) => matches!(
                c,
                TriageCategory::CorrectCertain | TriageCategory::IncorrectCertain
            ),
            TriageOutcome::Certain => true,
            TriageOutcome::ReferToExpert => false,
        }
    }
}

/// Categorizes a prediction against a threshold: certain iff
/// `phi_norm < phi_t` (strict). With ground truth the result is one of the
/// four Eq. 8 cells; without it, certain or refer-to-expert.
pub fn triage(pred: &Prediction, truth: Option<&str>, phi_t: f64) -> TriageOutcome {
    let certain = pred.uncertainty.phi_norm < phi_t;
    match truth {
        None if certain => TriageOutcome::Certain,
        None => TriageOutcome::ReferToExpert,
        Some(t) => {
            let correct = pred.predicted_class == t;
            TriageOutcome::Category(match (correct, certain) {
                (true, true) => TriageCategory::CorrectCertain,
                (true, false) => TriageCategory::CorrectUncertain,
                (false, true) => TriageCategory::IncorrectCertain,
                (false, false) => TriageCategory::IncorrectUncertain,
            })
        }
    }
}

/// Adds one graded outcome to the running counts.
pub fn record_triage(counts: &mut TriageCounts, category: TriageCategory) {
    match category {
        TriageCategory::CorrectCertain => counts.cc += 1,
        TriageCategory::CorrectUncertain => counts.cu += 1,
        TriageCategory::IncorrectCertain => counts.ic += 1,
        TriageCategory::IncorrectUncertain => counts.iu += 1,
    }
}

/// Diagnostic accuracy A(phi_T) = (cc + iu) / total (Eq. 8): the fraction of
/// cases where certainty and correctness agree.
pub fn diagnostic_accuracy(counts: &TriageCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::Config("diagnostic accuracy of zero cases".into()));
    }
    Ok((counts.cc + counts.iu) as f64 / total as f64)
}
