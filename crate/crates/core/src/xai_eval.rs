//! Bokeh-effect benchmark for explainers: blur everything except the
//! pixels an explainer marked important, then measure how much of the
//! classifier's accuracy the reconstruction retains. A faithful explainer
//! keeps the evidence sharp, so the prediction survives.

use serde::Serialize;

use crate::classifier::{clf_forward, ClfModel};
use crate::data::{gaussian_blur, load_image, DatasetManifest};
use crate::error::{Error, Result};
use crate::saliency::{attribute, top_fraction_mask, SaliencyMethod};
use crate::types::{BinaryMask, Image};
use crate::util::derive_seed;

/// Reconstruction knobs. `keep_fraction` is the benchmark's default pixel
/// budget; individual runs may override it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BokehParams {
    pub blur_kernel_sigma: f64,
    pub keep_fraction: f64,
}

impl Default for BokehParams {
    fn default() -> Self {
        BokehParams { blur_kernel_sigma: 8.0, keep_fraction: 0.10 }
    }
}

impl BokehParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_kernel_sigma > 0.0 && self.blur_kernel_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "bokeh sigma {} is not positive",
                self.blur_kernel_sigma
            )));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep fraction {} outside (0, 1]",
                self.keep_fraction
            )));
        }
        Ok(())
    }
}

/// Blurs the image, then restores the kept pixels verbatim.
pub fn bokeh_reconstruct(img: &Image, keep: &BinaryMask, params: &BokehParams) -> Result<Image> {
    params.validate()?;
    let (h, w) = keep.data().dim();
    if (h, w) != (img.height(), img.width()) {
        return Err(Error::Shape(format!(
            "mask {h}x{w} does not match image {}x{}",
            img.height(),
            img.width()
        )));
    }
    let mut out = gaussian_blur(img, params.blur_kernel_sigma)?.data().clone();
    for i in 0..h {
        for j in 0..w {
            if keep.data()[[i, j]] {
                for c in 0..img.channels() {
                    out[[i, j, c]] = img.data()[[i, j, c]];
                }
            }
        }
    }
    Image::new(out)
}

/// One image's trip through the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BokehRecord {
    pub image: String,
    pub explainer: String,
    pub fraction: f64,
    pub predicted_before: String,
    pub predicted_after: String,
    pub correct_after: bool,
}

/// A full benchmark run for one explainer at one pixel budget.
#[derive(Debug, Clone, Serialize)]
pub struct ExplainerEvaluation {
    pub explainer: SaliencyMethod,
    pub fraction: f64,
    pub retained_accuracy: f64,
    pub records: Vec<BokehRecord>,
}

/// Runs the Table-5 protocol: per image, attribute the model's own
/// predicted class, keep the top `fraction` of pixels, reconstruct, and
/// re-classify deterministically. Accuracy is scored against ground truth.
pub fn evaluate_explainer(
    model: &ClfModel,
    manifest: &DatasetManifest,
    explainer: SaliencyMethod,
    fraction: f64,
    params: &BokehParams,
    seed: u64,
) -> Result<ExplainerEvaluation> {
    params.validate()?;
    if manifest.is_empty() {
        return Err(Error::Config("cannot benchmark explainers on an empty manifest".into()));
    }
    let mut records = Vec::with_capacity(manifest.len());
    let mut correct = 0usize;
    for (idx, entry) in manifest.entries.iter().enumerate() {
        let label = entry
            .label
            .as_deref()
            .ok_or_else(|| Error::Config(format!("entry {} has no class label", entry.name)))?;
        let img = load_image(&entry.image)?;
        let before = clf_forward(model, &img, false, 0)?;
        let class = before.argmax();
        let attr =
            attribute(model, &img, class, explainer, derive_seed(seed, "random", idx as u64))?;
        let keep = top_fraction_mask(&attr, fraction)?;
        let recon = bokeh_reconstruct(&img, &keep, params)?;
        let after = clf_forward(model, &recon, false, 0)?;
        let predicted_after = model.labels[after.argmax()].clone();
        let correct_after = predicted_after == label;
        if correct_after {
            correct += 1;
        }
        records.push(BokehRecord {
            image: entry.name.clone(),
            explainer: explainer.as_str().to_string(),
            fraction,
            predicted_before: model.labels[class].clone(),
            predicted_after,
            correct_after,
        });
    }
    Ok(ExplainerEvaluation {
        explainer,
        fraction,
        retained_accuracy: correct as f64 / manifest.len() as f64,
        records,
    })
}

/// The model's plain deterministic accuracy on a labeled manifest; the
/// fraction-1.0 reference line in benchmark reports.
pub fn baseline_accuracy(model: &ClfModel, manifest: &DatasetManifest) -> Result<f64> {
    if manifest.is_empty() {
        return Err(Error::Config("cannot score an empty manifest".into()));
    }
    let mut correct = 0usize;
    for entry in &manifest.entries {
        let label = entry
            .label
            .as_deref()
            .ok_or_else(|| Error::Config(format!("entry {} has no class label", entry.name)))?;
        let img = load_image(&entry.image)?;
        let probs = clf_forward(model, &img, false, 0)?;
        if model.labels[probs.argmax()] == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / manifest.len() as f64)
}

pub const BOKEH_CSV_HEADER: &str =
    "image,explainer,fraction,predicted_before,predicted_after,correct_after";

/// Flattens records into the benchmark's CSV layout.
pub fn records_to_csv(records: &[BokehRecord]) -> String {
    let mut out = String::from(BOKEH_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.image, r.explainer, r.fraction, r.predicted_before, r.predicted_after, r.correct_after
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build_classifier, ClassifierConfig};
    use crate::data::{load_dataset, DatasetKind};
    use ndarray::{Array2, Array3};

    fn speckle_image(h: usize, w: usize) -> Image {
        Image::new(Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
            ((i * 31 + j * 7 + c * 13) % 23) as f64 / 22.0
        }))
        .unwrap()
    }

    fn mask_where(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> BinaryMask {
        BinaryMask::new(Array2::from_shape_fn((h, w), |(i, j)| f(i, j)))
    }

    #[test]
    fn all_true_mask_reproduces_the_input_bitwise() {
        let img = speckle_image(12, 10);
        let keep = mask_where(12, 10, |_, _| true);
        let out = bokeh_reconstruct(&img, &keep, &BokehParams::default()).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn all_false_mask_is_a_pure_blur() {
        let img = speckle_image(12, 10);
        let keep = mask_where(12, 10, |_, _| false);
        let params = BokehParams { blur_kernel_sigma: 2.5, ..BokehParams::default() };
        let out = bokeh_reconstruct(&img, &keep, &params).unwrap();
        let blur = gaussian_blur(&img, 2.5).unwrap();
        assert_eq!(out.data(), blur.data());
    }

    #[test]
    fn checkerboard_mask_composites_pixelwise() {
        let img = speckle_image(9, 9);
        let keep = mask_where(9, 9, |i, j| (i + j) % 2 == 0);
        let params = BokehParams { blur_kernel_sigma: 1.5, ..BokehParams::default() };
        let out = bokeh_reconstruct(&img, &keep, &params).unwrap();
        let blur = gaussian_blur(&img, 1.5).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                for c in 0..3 {
                    if (i + j) % 2 == 0 {
                        assert_eq!(out.data()[[i, j, c]], img.data()[[i, j, c]]);
                    } else {
                        let d = (out.data()[[i, j, c]] - blur.data()[[i, j, c]]).abs();
                        assert!(d < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn vanishing_sigma_recovers_the_original_under_any_mask() {
        let img = speckle_image(8, 8);
        let keep = mask_where(8, 8, |i, j| i * 8 + j % 3 == 0);
        let params = BokehParams { blur_kernel_sigma: 1e-3, ..BokehParams::default() };
        let out = bokeh_reconstruct(&img, &keep, &params).unwrap();
        for (a, b) in out.data().iter().zip(img.data().iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn shapes_and_params_are_validated() {
        let img = speckle_image(8, 8);
        let small = mask_where(4, 4, |_, _| true);
        assert!(bokeh_reconstruct(&img, &small, &BokehParams::default()).is_err());
        let keep = mask_where(8, 8, |_, _| true);
        let zero_sigma = BokehParams { blur_kernel_sigma: 0.0, ..BokehParams::default() };
        assert!(bokeh_reconstruct(&img, &keep, &zero_sigma).is_err());
        assert!(BokehParams { keep_fraction: 0.0, ..BokehParams::default() }.validate().is_err());
        assert!(BokehParams { keep_fraction: 1.2, ..BokehParams::default() }.validate().is_err());
        assert!(BokehParams::default().validate().is_ok());
    }

    fn bench_fixture() -> (tempfile::TempDir, DatasetManifest, ClfModel) {
        let dir = tempfile::tempdir().unwrap();
        crate::synth::write_clf_dataset(dir.path(), 2, 5, 32, 55).unwrap();
        let manifest = load_dataset(dir.path(), DatasetKind::Classification).unwrap();
        let model = build_classifier(&ClassifierConfig::desk(5), 11).unwrap();
        (dir, manifest, model)
    }

    #[test]
    fn full_fraction_retains_baseline_accuracy_exactly() {
        let (_dir, manifest, model) = bench_fixture();
        let eval = evaluate_explainer(
            &model,
            &manifest,
            SaliencyMethod::Random,
            1.0,
            &BokehParams::default(),
            3,
        )
        .unwrap();
        let baseline = baseline_accuracy(&model, &manifest).unwrap();
        assert_eq!(eval.retained_accuracy, baseline);
        for r in &eval.records {
            assert_eq!(r.predicted_before, r.predicted_after);
        }
    }

    #[test]
    fn evaluation_is_deterministic_for_a_fixed_seed() {
        let (_dir, manifest, model) = bench_fixture();
        let params = BokehParams::default();
        let run = |seed| {
            evaluate_explainer(&model, &manifest, SaliencyMethod::Random, 0.1, &params, seed)
                .unwrap()
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a.records, b.records);
        assert_eq!(a.retained_accuracy, b.retained_accuracy);
    }

    #[test]
    fn gradient_explainers_run_end_to_end_on_the_desk_model() {
        let (_dir, manifest, model) = bench_fixture();
        let small = manifest.with_entries(&[0, 5]);
        for method in [SaliencyMethod::GradCam, SaliencyMethod::GuidedGradCam] {
            let eval = evaluate_explainer(&model, &small, method, 0.1, &BokehParams::default(), 1)
                .unwrap();
            assert_eq!(eval.records.len(), 2);
            assert!((0.0..=1.0).contains(&eval.retained_accuracy));
        }
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let (_dir, manifest, model) = bench_fixture();
        let empty = manifest.with_entries(&[]);
        let err = evaluate_explainer(
            &model,
            &empty,
            SaliencyMethod::Random,
            0.1,
            &BokehParams::default(),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(baseline_accuracy(&model, &empty).is_err());
    }

    #[test]
    fn csv_layout_matches_the_published_header() {
        let rec = BokehRecord {
            image: "c0_000".into(),
            explainer: "xrai".into(),
            fraction: 0.1,
            predicted_before: "MEL".into(),
            predicted_after: "NV".into(),
            correct_after: false,
        };
        let csv = records_to_csv(&[rec]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), BOKEH_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "c0_000,xrai,0.1,MEL,NV,false");
        assert!(lines.next().is_none());
    }
}
