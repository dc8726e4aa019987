//! Report imagery: mask overlays, uncertainty heatmaps in a light-blue
//! colormap, saliency overlays, and the posterior bar chart. Everything
//! renders to an [`Image`] so the PNG writer in `data` does the encoding.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::data::save_image_png;
use crate::error::{Error, Result};
use crate::pipeline::DiagnosisReport;
use crate::types::{BinaryMask, Image, ProbabilityVector};

/// Blend weight for saliency overlays.
pub const SALIENCY_ALPHA: f64 = 0.45;

/// Light-blue colormap: white at 0 ramping to a saturated blue at 1.
pub fn blues(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    [1.0 - 0.85 * t, 1.0 - 0.55 * t, 1.0 - 0.10 * t]
}

/// Hot colormap for saliency: black through red and orange to white.
pub fn hot(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    [(3.0 * t).min(1.0), (3.0 * t - 1.0).clamp(0.0, 1.0), (3.0 * t - 2.0).clamp(0.0, 1.0)]
}

/// Min-max normalization to `[0, 1]`; a flat map normalizes to zeros.
pub fn minmax_normalize(map: &Array2<f64>) -> Array2<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in map {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi - lo).is_finite() || hi - lo < 1e-300 {
        return Array2::zeros(map.raw_dim());
    }
    map.mapv(|v| (v - lo) / (hi - lo))
}

/// Renders a scalar map through the light-blue colormap.
pub fn heatmap_image(map: &Array2<f64>) -> Image {
    let norm = minmax_normalize(map);
    let (h, w) = norm.dim();
    let mut data = Array3::zeros((h, w, 3));
    for ((i, j), &t) in norm.indexed_iter() {
        let px = blues(t);
        for c in 0..3 {
            data[[i, j, c]] = px[c];
        }
    }
    Image::new(data).expect("colormap output is in range")
}

/// Min-max normalized light-blue heatmap, written as a PNG.
pub fn save_heatmap_png(path: &Path, map: &Array2<f64>) -> Result<()> {
    save_image_png(path, &heatmap_image(map))
}

/// Tints the lesion region red and draws its boundary at full strength.
pub fn mask_overlay(img: &Image, mask: &BinaryMask) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if mask.data().dim() != (h, w) {
        return Err(Error::Shape(format!(
            "mask {:?} does not match image {h}x{w}",
            mask.data().dim()
        )));
    }
    let tint = [0.95, 0.20, 0.20];
    let rgb = img.to_rgb();
    let mut data = rgb.data().clone();
    for i in 0..h {
        for j in 0..w {
            if !mask.data()[[i, j]] {
                continue;
            }
            let boundary = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)]
                .into_iter()
                .any(|(ni, nj)| ni >= h || nj >= w || !mask.data()[[ni, nj]]);
            let alpha = if boundary { 1.0 } else { 0.35 };
            for c in 0..3 {
                data[[i, j, c]] = (1.0 - alpha) * data[[i, j, c]] + alpha * tint[c];
            }
        }
    }
    Image::new(data)
}

/// Alpha-blends a hot-colormapped attribution over the image.
pub fn saliency_overlay(img: &Image, values: &Array2<f64>) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if values.dim() != (h, w) {
        return Err(Error::Shape(format!(
            "attribution {:?} does not match image {h}x{w}",
            values.dim()
        )));
    }
    let norm = minmax_normalize(values);
    let rgb = img.to_rgb();
    let mut data = rgb.data().clone();
    for ((i, j), &t) in norm.indexed_iter() {
        let heat = hot(t);
        for c in 0..3 {
            data[[i, j, c]] =
                (1.0 - SALIENCY_ALPHA) * data[[i, j, c]] + SALIENCY_ALPHA * heat[c];
        }
    }
    Image::new(data)
}

const BAR_W: usize = 24;
const BAR_GAP: usize = 8;
const BAR_H: usize = 120;
const BAR_PAD: usize = 10;

/// A minimal posterior bar chart: one blue bar per class on white, heights
/// proportional to probability, with a baseline rule at the bottom.
pub fn posterior_bar_chart(probs: &ProbabilityVector) -> Image {
    let n = probs.len();
    let w = n * BAR_W + (n + 1) * BAR_GAP;
    let h = BAR_H + 2 * BAR_PAD;
    let mut data = Array3::from_elem((h, w, 3), 1.0);
    let bar_rgb = [0.25, 0.50, 0.85];
    for (k, &p) in probs.values().iter().enumerate() {
        let bar_h = (p * BAR_H as f64).round() as usize;
        let x0 = BAR_GAP + k * (BAR_W + BAR_GAP);
        for i in (h - BAR_PAD - bar_h)..(h - BAR_PAD) {
            for j in x0..x0 + BAR_W {
                for c in 0..3 {
                    data[[i, j, c]] = bar_rgb[c];
                }
            }
        }
    }
    for j in 0..w {
        for c in 0..3 {
            data[[h - BAR_PAD, j, c]] = 0.25;
        }
    }
    Image::new(data).expect("chart values are in range")
}

/// Writes the report's PNG bundle next to its JSON: mask overlay,
/// uncertainty heatmap, posterior chart, and (when certain) the saliency
/// overlay. Returns the written paths.
pub fn save_report_bundle(dir: &Path, report: &DiagnosisReport) -> Result<Vec<PathBuf>> {
    let stem = &report.input;
    let mut written = Vec::new();

    let mask_path = dir.join(format!("{stem}_mask_overlay.png"));
    save_image_png(&mask_path, &mask_overlay(&report.base_image, &report.seg.mask)?)?;
    written.push(mask_path);

    let heat_path = dir.join(format!("{stem}_uncertainty.png"));
    save_heatmap_png(&heat_path, &report.seg.uncertainty.pixel_entropy_map)?;
    written.push(heat_path);

    let chart_path = dir.join(format!("{stem}_posterior.png"));
    save_image_png(&chart_path, &posterior_bar_chart(&report.clf.mean))?;
    written.push(chart_path);

    if let Some(attr) = &report.saliency {
        let sal_path = dir.join(format!("{stem}_saliency.png"));
        save_image_png(&sal_path, &saliency_overlay(&report.routed_image, &attr.values)?)?;
        written.push(sal_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_image(h: usize, w: usize, v: f64) -> Image {
        Image::new(Array3::from_elem((h, w, 3), v)).unwrap()
    }

    #[test]
    fn colormaps_hit_their_endpoints() {
        assert_eq!(blues(0.0), [1.0, 1.0, 1.0]);
        let deep = blues(1.0);
        assert!(deep[2] > deep[1] && deep[1] > deep[0]);
        assert_eq!(hot(0.0), [0.0, 0.0, 0.0]);
        assert_eq!(hot(1.0), [1.0, 1.0, 1.0]);
        assert_eq!(blues(-2.0), blues(0.0));
        assert_eq!(hot(5.0), hot(1.0));
    }

    #[test]
    fn minmax_maps_extremes_to_the_unit_interval() {
        let map = ndarray::arr2(&[[2.0, 4.0], [6.0, 2.0]]);
        let n = minmax_normalize(&map);
        assert_eq!(n[[0, 0]], 0.0);
        assert_eq!(n[[1, 0]], 1.0);
        assert!((n[[0, 1]] - 0.5).abs() < 1e-12);
        let flat = minmax_normalize(&Array2::from_elem((3, 3), 7.0));
        assert!(flat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_turns_a_flat_map_white_and_the_peak_blue() {
        let mut map = Array2::zeros((4, 4));
        map[[2, 3]] = 9.0;
        let img = heatmap_image(&map);
        assert_eq!(img.data()[[0, 0, 0]], 1.0);
        assert_eq!(img.data()[[0, 0, 2]], 1.0);
        let peak = [img.data()[[2, 3, 0]], img.data()[[2, 3, 1]], img.data()[[2, 3, 2]]];
        assert_eq!(peak, blues(1.0));
    }

    #[test]
    fn mask_overlay_tints_only_the_lesion() {
        let img = flat_image(8, 8, 0.5);
        let mask = BinaryMask::new(Array2::from_shape_fn((8, 8), |(i, j)| {
            (2..6).contains(&i) && (2..6).contains(&j)
        }));
        let out = mask_overlay(&img, &mask).unwrap();
        assert_eq!(out.data()[[0, 0, 0]], 0.5);
        // Interior pixel: 35% tint toward red.
        let interior = out.data()[[3, 3, 0]];
        assert!((interior - (0.65 * 0.5 + 0.35 * 0.95)).abs() < 1e-12);
        // Boundary pixel: full tint.
        assert!((out.data()[[2, 3, 0]] - 0.95).abs() < 1e-12);
        let wrong = BinaryMask::new(Array2::from_elem((4, 4), true));
        assert!(mask_overlay(&img, &wrong).is_err());
    }

    #[test]
    fn saliency_overlay_blends_with_the_published_alpha() {
        let img = flat_image(4, 4, 0.2);
        let mut values = Array2::zeros((4, 4));
        values[[1, 1]] = 3.0;
        let out = saliency_overlay(&img, &values).unwrap();
        let expect_peak = 0.55 * 0.2 + 0.45 * 1.0;
        for c in 0..3 {
            assert!((out.data()[[1, 1, c]] - expect_peak).abs() < 1e-12);
        }
        let expect_cold = 0.55 * 0.2;
        assert!((out.data()[[0, 0, 0]] - expect_cold).abs() < 1e-12);
        assert!(saliency_overlay(&img, &Array2::zeros((2, 2))).is_err());
    }

    #[test]
    fn bar_chart_heights_track_probabilities() {
        let probs = ProbabilityVector::new(vec![0.75, 0.25]).unwrap();
        let img = posterior_bar_chart(&probs);
        let h = BAR_H + 2 * BAR_PAD;
        assert_eq!(img.height(), h);
        assert_eq!(img.width(), 2 * BAR_W + 3 * BAR_GAP);
        let mid0 = BAR_GAP + BAR_W / 2;
        let mid1 = 2 * BAR_GAP + BAR_W + BAR_W / 2;
        // 5 px above the baseline both bars are filled.
        let row_low = h - BAR_PAD - 5;
        assert!(img.data()[[row_low, mid0, 2]] > 0.8);
        assert!(img.data()[[row_low, mid1, 2]] > 0.8);
        // At 50% height only the 0.75 bar is filled.
        let row_mid = h - BAR_PAD - BAR_H / 2;
        assert!(img.data()[[row_mid, mid0, 0]] < 0.5);
        assert_eq!(img.data()[[row_mid, mid1, 0]], 1.0);
        // Above 75% both columns are background.
        let row_high = h - BAR_PAD - (0.8 * BAR_H as f64) as usize;
        assert_eq!(img.data()[[row_high, mid0, 0]], 1.0);
        assert_eq!(img.data()[[row_high, mid1, 0]], 1.0);
    }

    #[test]
    fn bundle_writes_expected_files() {
        use crate::classifier::{build_classifier, ClassifierConfig};
        use crate::data::AugmentationSpec;
        use crate::pipeline::{skinet_infer, PipelineConfig, Segmenter};
        use crate::saliency::SaliencyMethod;
        use crate::uncertainty::SegUncertainty;

        struct Stub(f64);
        impl Segmenter for Stub {
            fn segment(
                &self,
                img: &Image,
                _aug: &AugmentationSpec,
                _samples: usize,
                _seed: u64,
            ) -> crate::error::Result<SegUncertainty> {
                let dims = (img.height(), img.width());
                Ok(SegUncertainty {
                    mean_map: Array2::from_elem(dims, 1.0),
                    pixel_entropy_map: Array2::zeros(dims),
                    scalar_phi_norm: self.0,
                })
            }
        }

        let clf = build_classifier(&ClassifierConfig::desk(5), 3).unwrap();
        let img = Image::new(Array3::from_shape_fn((32, 32, 3), |(i, j, _)| {
            ((i + j) % 9) as f64 / 8.0
        }))
        .unwrap();
        let cfg = PipelineConfig {
            samples: 3,
            clf_threshold: 1.0,
            explainer: SaliencyMethod::GradCam,
            augment: AugmentationSpec::disabled(),
            ..PipelineConfig::default()
        };
        let report = skinet_infer(&Stub(0.1), &clf, "case7", &img, &cfg, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = save_report_bundle(dir.path(), &report).unwrap();
        assert_eq!(written.len(), 4, "certain verdict writes the saliency overlay");
        for p in &written {
            assert!(p.exists(), "{p:?}");
        }
        let refer_cfg = PipelineConfig { clf_threshold: 0.0001, ..cfg };
        let report = skinet_infer(&Stub(0.9), &clf, "case8", &img, &refer_cfg, 2).unwrap();
        let written = save_report_bundle(dir.path(), &report).unwrap();
        assert_eq!(written.len(), 3, "refer verdict omits the saliency overlay");
    }
}
