//! XRAI: region-based attribution. Integrated gradients are averaged over
//! black and white baselines, the image is oversegmented at several scales,
//! and regions are admitted greedily by attribution density. Every pixel in
//! a region admitted earlier outranks every pixel admitted later.

use ndarray::Array2;

use crate::classifier::ClfModel;
use crate::error::{Error, Result};
use crate::types::Image;

use super::felzenszwalb::felzenszwalb_segments;
use super::{integrated_gradients, AttributionMap, SaliencyMethod};

/// Knobs for [`xrai`]. Defaults follow the reference setup: 50-step
/// integrated gradients and six Felzenszwalb scales.
#[derive(Debug, Clone, PartialEq)]
pub struct XraiParams {
    pub ig_steps: usize,
    pub scales: Vec<f64>,
    pub sigma: f64,
    pub min_size: usize,
}

impl Default for XraiParams {
    fn default() -> Self {
        XraiParams {
            ig_steps: 50,
            scales: vec![50.0, 100.0, 150.0, 250.0, 500.0, 1200.0],
            sigma: 0.8,
            min_size: 20,
        }
    }
}

impl XraiParams {
    pub fn validate(&self) -> Result<()> {
        if self.ig_steps < 8 {
            return Err(Error::Config(format!(
                "xrai needs >= 8 integration steps, got {}",
                self.ig_steps
            )));
        }
        if self.scales.is_empty() {
            return Err(Error::Config("xrai needs at least one segmentation scale".into()));
        }
        if let Some(bad) = self.scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("xrai scale {bad} is not positive")));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("xrai sigma {} is not valid", self.sigma)));
        }
        if self.min_size < 1 {
            return Err(Error::Config("xrai min_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Greedy density ranking over the multi-scale oversegmentation. Returns
/// `total_steps - admission_step` per pixel, so earlier regions score
/// strictly higher and the map feeds [`super::top_fraction_mask`] directly.
fn rank_regions(attr: &Array2<f64>, regions: &[Vec<usize>]) -> Array2<f64> {
    let (h, w) = attr.dim();
    let n = h * w;
    let flat = attr.as_slice().expect("attribution maps are standard layout");

    let mut pixel_regions: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut live_sum = vec![0.0f64; regions.len()];
    let mut live_count = vec![0usize; regions.len()];
    for (r, pixels) in regions.iter().enumerate() {
        for &p in pixels {
            pixel_regions[p].push(r as u32);
            live_sum[r] += flat[p];
            live_count[r] += 1;
        }
    }

    let mut alive: Vec<bool> = regions.iter().map(|pixels| !pixels.is_empty()).collect();
    let mut step_of = vec![usize::MAX; n];
    let mut assigned = 0usize;
    let mut step = 0usize;
    while assigned < n {
        let mut best: Option<(f64, usize)> = None;
        for r in 0..regions.len() {
            if !alive[r] {
                continue;
            }
            if live_count[r] == 0 {
                alive[r] = false;
                continue;
            }
            let density = live_sum[r] / live_count[r] as f64;
            let better = match best {
                None => true,
                Some((d, _)) => density > d,
            };
            if better {
                best = Some((density, r));
            }
        }
        let (_, r) = best.expect("multi-scale segmentation covers every pixel");
        for &p in &regions[r] {
            if step_of[p] != usize::MAX {
                continue;
            }
            step_of[p] = step;
            assigned += 1;
            for &q in &pixel_regions[p] {
                live_sum[q as usize] -= flat[p];
                live_count[q as usize] -= 1;
            }
        }
        alive[r] = false;
        step += 1;
    }

    Array2::from_shape_fn((h, w), |(i, j)| (step - step_of[i * w + j]) as f64)
}

/// XRAI attribution for one class.
pub fn xrai(model: &ClfModel, img: &Image, class: usize, params: &XraiParams) -> Result<AttributionMap> {
    params.validate()?;
    let dims = img.data().raw_dim();
    let black = Image::new(ndarray::Array3::zeros(dims.clone()))?;
    let white = Image::new(ndarray::Array3::from_elem(dims, 1.0))?;
    let ig_black = integrated_gradients(model, img, class, &black, params.ig_steps)?;
    let ig_white = integrated_gradients(model, img, class, &white, params.ig_steps)?;
    let attr = (&ig_black.values + &ig_white.values) / 2.0;

    let mut regions: Vec<Vec<usize>> = Vec::new();
    for &scale in &params.scales {
        let seg = felzenszwalb_segments(img, scale, params.sigma, params.min_size)?;
        regions.extend(seg.region_pixels());
    }

    Ok(AttributionMap {
        values: rank_regions(&attr, &regions),
        method: SaliencyMethod::Xrai,
        target_class: ig_black.target_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build_classifier, Backbone, ClassifierConfig, DropoutPlacement};
    use crate::saliency::top_fraction_mask;
    use ndarray::{Array2 as A2, Array3};

    fn linear_probe(weights: &A2<f64>) -> ClfModel {
        let (h, w) = weights.dim();
        let mut dense = A2::zeros((2, h * w));
        for (i, &v) in weights.iter().enumerate() {
            dense[[0, i]] = v;
        }
        let mut gb = crate::nn::GraphBuilder::new((1, h, w));
        let x = gb.input();
        let d = gb
            .dense("fc", x, crate::nn::Dense { w: dense, b: ndarray::Array1::zeros(2) })
            .unwrap();
        let out = gb.softmax("softmax", d).unwrap();
        ClfModel {
            graph: gb.finish(out),
            cfg: ClassifierConfig {
                backbone: Backbone::DeskCnn,
                dropout_rate: 0.5,
                dropout_positions: DropoutPlacement::BeforeHead,
                num_classes: 2,
                input_shape: (h, w, 1),
            },
            labels: vec!["class0".into(), "class1".into()],
        }
    }

    fn halves_image() -> Image {
        Image::new(Array3::from_shape_fn((8, 8, 1), |(_, j, _)| {
            if j < 4 {
                0.9
            } else {
                0.1
            }
        }))
        .unwrap()
    }

    fn small_params() -> XraiParams {
        XraiParams { ig_steps: 8, scales: vec![1.0], sigma: 0.0, min_size: 1 }
    }

    #[test]
    fn dense_region_outranks_the_rest_of_the_frame() {
        // Weight sits on the bright left half; dual-baseline attribution
        // there is w * (x - 1/2) = 0.4 per pixel versus 0 on the right.
        let weights = A2::from_shape_fn((8, 8), |(_, j)| if j < 4 { 1.0 } else { 0.0 });
        let model = linear_probe(&weights);
        let map = xrai(&model, &halves_image(), 0, &small_params()).unwrap();
        let left_min = (0..8).flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| map.values[[i, j]])
            .fold(f64::INFINITY, f64::min);
        let right_max = (0..8).flat_map(|i| (4..8).map(move |j| (i, j)))
            .map(|(i, j)| map.values[[i, j]])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(left_min > right_max);
        let mask = top_fraction_mask(&map, 0.5).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(mask.data()[[i, j]], j < 4, "pixel ({i}, {j})");
            }
        }
    }

    #[test]
    fn every_pixel_is_ranked() {
        let weights = A2::from_shape_fn((8, 8), |(i, j)| ((i + 2 * j) % 5) as f64 - 2.0);
        let model = linear_probe(&weights);
        let map = xrai(&model, &halves_image(), 1, &small_params()).unwrap();
        assert!(map.values.iter().all(|&v| v >= 1.0 && v.is_finite()));
        assert_eq!(map.method, SaliencyMethod::Xrai);
        assert_eq!(map.target_class, "class1");
    }

    #[test]
    fn ranking_is_deterministic() {
        let cfg = ClassifierConfig {
            backbone: Backbone::DeskCnn,
            dropout_rate: 0.3,
            dropout_positions: DropoutPlacement::BeforeHead,
            num_classes: 5,
            input_shape: (16, 16, 3),
        };
        let model = build_classifier(&cfg, 23).unwrap();
        let img = Image::new(Array3::from_shape_fn((16, 16, 3), |(i, j, c)| {
            ((i * 16 + j + 7 * c) % 29) as f64 / 28.0
        }))
        .unwrap();
        let params = XraiParams {
            ig_steps: 8,
            scales: vec![5.0, 40.0],
            sigma: 0.5,
            min_size: 4,
        };
        let a = xrai(&model, &img, 2, &params).unwrap();
        let b = xrai(&model, &img, 2, &params).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn params_are_validated() {
        assert!(XraiParams { ig_steps: 7, ..XraiParams::default() }.validate().is_err());
        assert!(XraiParams { scales: vec![], ..XraiParams::default() }.validate().is_err());
        assert!(XraiParams { scales: vec![-1.0], ..XraiParams::default() }.validate().is_err());
        assert!(XraiParams { sigma: f64::NAN, ..XraiParams::default() }.validate().is_err());
        assert!(XraiParams { min_size: 0, ..XraiParams::default() }.validate().is_err());
        assert!(XraiParams::default().validate().is_ok());
    }
}
