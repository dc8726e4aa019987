//! Post-hoc attribution engines: Guided Backpropagation, Grad-CAM, Guided
//! Grad-CAM, integrated gradients, and XRAI region ranking.
//!
//! All explainers differentiate the pre-softmax class score (the logit),
//! run deterministically (dropout off, running batch-norm statistics), and
//! reduce to one score per pixel by summing channel attributions.

mod felzenszwalb;
mod xrai;

pub use felzenszwalb::{felzenszwalb_segments, SegmentMap};
pub use xrai::{xrai, XraiParams};

use ndarray::Array2;

use crate::classifier::ClfModel;
use crate::data::{image_to_net_input, resize_bilinear_map};
use crate::error::{Error, Result};
use crate::nn::{Activations, BackpropMode, Gradients, Op, Phase, Tensor};
use crate::types::{BinaryMask, Image};

/// Which explainer produced a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SaliencyMethod {
    #[serde(rename = "gb")]
    GuidedBackprop,
    #[serde(rename = "gradcam")]
    GradCam,
    #[serde(rename = "ggc")]
    GuidedGradCam,
    #[serde(rename = "ig")]
    IntegratedGradients,
    #[serde(rename = "xrai")]
    Xrai,
    /// Uniform-random scores; the evaluation floor, never a real explainer.
    #[serde(rename = "random")]
    Random,
}

impl SaliencyMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SaliencyMethod::GuidedBackprop => "gb",
            SaliencyMethod::GradCam => "gradcam",
            SaliencyMethod::GuidedGradCam => "ggc",
            SaliencyMethod::IntegratedGradients => "ig",
            SaliencyMethod::Xrai => "xrai",
            SaliencyMethod::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gb" => Ok(SaliencyMethod::GuidedBackprop),
            "gradcam" => Ok(SaliencyMethod::GradCam),
            "ggc" => Ok(SaliencyMethod::GuidedGradCam),
            "ig" => Ok(SaliencyMethod::IntegratedGradients),
            "xrai" => Ok(SaliencyMethod::Xrai),
            "random" => Ok(SaliencyMethod::Random),
            other => Err(Error::Config(format!("unknown explainer {other}"))),
        }
    }
}

/// Per-pixel attribution scores for one class.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AttributionMap {
    /// One score per input pixel (channel attributions summed).
    pub values: Array2<f64>,
    pub method: SaliencyMethod,
    pub target_class: String,
}

fn class_label(model: &ClfModel, class: usize) -> Result<String> {
    model.labels.get(class).cloned().ok_or_else(|| {
        Error::Config(format!(
            "class index {class} out of range for a {}-class model",
            model.cfg.num_classes
        ))
    })
}

/// Forward plus a backward pass seeded with 1 at the class logit.
fn class_gradients(
    model: &ClfModel,
    x: &Tensor,
    class: usize,
    mode: BackpropMode,
) -> Result<(Activations, Gradients)> {
    let acts = model.graph.forward(x, &mut Phase::Inference)?;
    let logits = model.graph.logits_id();
    let mut seed = Tensor::zeros(acts.output(logits).raw_dim());
    seed[[0, class, 0, 0]] = 1.0;
    let grads = model.graph.backward(&acts, &[(logits, seed)], mode)?;
    Ok((acts, grads))
}

fn input_gradient_map(model: &ClfModel, grads: &Gradients) -> Array2<f64> {
    let gx = grads
        .wrt_node(model.graph.input_id())
        .expect("backward reaches the input node");
    let (_, c, h, w) = gx.dim();
    Array2::from_shape_fn((h, w), |(i, j)| (0..c).map(|ch| gx[[0, ch, i, j]]).sum())
}

/// The deterministic pre-softmax score of one class.
pub fn class_logit(model: &ClfModel, img: &Image, class: usize) -> Result<f64> {
    class_label(model, class)?;
    let x = image_to_net_input(img, model.cfg.input_shape)?;
    let acts = model.graph.forward(&x, &mut Phase::Inference)?;
    Ok(acts.output(model.graph.logits_id())[[0, class, 0, 0]])
}

/// Guided Backpropagation: the input-space class gradient under the
/// modified ReLU rule (gradients vanish where the forward input was
/// negative or the incoming gradient is negative).
pub fn guided_backprop(model: &ClfModel, img: &Image, class: usize) -> Result<AttributionMap> {
    let target_class = class_label(model, class)?;
    if !model.graph.has_relu() {
        return Err(Error::Unsupported(
            "guided backpropagation needs ReLU nonlinearities to gate".into(),
        ));
    }
    let x = image_to_net_input(img, model.cfg.input_shape)?;
    let (_, grads) = class_gradients(model, &x, class, BackpropMode::Guided)?;
    Ok(AttributionMap {
        values: input_gradient_map(model, &grads),
        method: SaliencyMethod::GuidedBackprop,
        target_class,
    })
}

/// Grad-CAM (Eqs. 5-6): ReLU of the beta-weighted sum of a convolutional
/// layer's activation maps, upsampled bilinearly to input resolution. The
/// betas are global-average-pooled gradients of the class logit.
///
/// `layer` defaults to the last convolution.
pub fn grad_cam(
    model: &ClfModel,
    img: &Image,
    class: usize,
    layer: Option<&str>,
) -> Result<AttributionMap> {
    let target_class = class_label(model, class)?;
    let layer_id = match layer {
        Some(name) => model
            .graph
            .node_id(name)
            .ok_or_else(|| Error::Config(format!("unknown layer {name}")))?,
        None => model
            .graph
            .last_conv()
            .ok_or_else(|| Error::Unsupported("model has no convolutional layer".into()))?,
    };
    if !matches!(model.graph.node(layer_id).op, Op::Conv(_) | Op::ConvT(_)) {
        return Err(Error::Config(format!(
            "layer {} is not convolutional",
            model.graph.node(layer_id).name
        )));
    }
    let x = image_to_net_input(img, model.cfg.input_shape)?;
    let (acts, grads) = class_gradients(model, &x, class, BackpropMode::Standard)?;
    let f = acts.output(layer_id);
    let g = grads
        .wrt_node(layer_id)
        .ok_or_else(|| Error::Unsupported("layer does not feed the class logit".into()))?;
    let (_, a, fh, fw) = f.dim();
    let cells = (fh * fw) as f64;
    let mut cam: Array2<f64> = Array2::zeros((fh, fw));
    for map in 0..a {
        let mut beta = 0.0;
        for k in 0..fh {
            for l in 0..fw {
                beta += g[[0, map, k, l]];
            }
        }
        beta /= cells;
        for k in 0..fh {
            for l in 0..fw {
                cam[[k, l]] += beta * f[[0, map, k, l]];
            }
        }
    }
    cam.mapv_inplace(|v| v.max(0.0));
    let (h, w, _) = model.cfg.input_shape;
    Ok(AttributionMap {
        values: resize_bilinear_map(&cam, h, w),
        method: SaliencyMethod::GradCam,
        target_class,
    })
}

/// Guided Grad-CAM: the pointwise product of the two parent maps.
pub fn guided_grad_cam(model: &ClfModel, img: &Image, class: usize) -> Result<AttributionMap> {
    let gb = guided_backprop(model, img, class)?;
    let cam = grad_cam(model, img, class, None)?;
    Ok(AttributionMap {
        values: &gb.values * &cam.values,
        method: SaliencyMethod::GuidedGradCam,
        target_class: gb.target_class,
    })
}

/// Integrated gradients along the straight path from `baseline` to `img`,
/// midpoint Riemann rule: attribution = (img - baseline) times the path-
/// averaged gradient. Completeness: the attributions sum to the logit gap
/// between image and baseline (up to quadrature error).
pub fn integrated_gradients(
    model: &ClfModel,
    img: &Image,
    class: usize,
    baseline: &Image,
    steps: usize,
) -> Result<AttributionMap> {
    let target_class = class_label(model, class)?;
    if steps < 8 {
        return Err(Error::Config(format!("integrated gradients needs >= 8 steps, got {steps}")));
    }
    if baseline.data().dim() != img.data().dim() {
        return Err(Error::Shape(format!(
            "baseline {:?} does not match image {:?}",
            baseline.data().dim(),
            img.data().dim()
        )));
    }
    let x = image_to_net_input(img, model.cfg.input_shape)?;
    let b = image_to_net_input(baseline, model.cfg.input_shape)?;
    let diff = &x - &b;
    let mut avg = Tensor::zeros(x.raw_dim());
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        let xs = &b + &(&diff * alpha);
        let (_, grads) = class_gradients(model, &xs, class, BackpropMode::Standard)?;
        avg += grads.wrt_node(model.graph.input_id()).expect("input gradient");
    }
    avg /= steps as f64;
    let attr = &diff * &avg;
    let (_, c, h, w) = attr.dim();
    let values =
        Array2::from_shape_fn((h, w), |(i, j)| (0..c).map(|ch| attr[[0, ch, i, j]]).sum());
    Ok(AttributionMap { values, method: SaliencyMethod::IntegratedGradients, target_class })
}

/// Runs `method` with its default knobs: Grad-CAM targets the last
/// convolution, integrated gradients use a black baseline with 50 steps,
/// and XRAI uses [`XraiParams::default`]. `seed` matters only to the
/// random baseline; the real explainers are deterministic and ignore it.
pub fn attribute(
    model: &ClfModel,
    img: &Image,
    class: usize,
    method: SaliencyMethod,
    seed: u64,
) -> Result<AttributionMap> {
    match method {
        SaliencyMethod::GuidedBackprop => guided_backprop(model, img, class),
        SaliencyMethod::GradCam => grad_cam(model, img, class, None),
        SaliencyMethod::GuidedGradCam => guided_grad_cam(model, img, class),
        SaliencyMethod::IntegratedGradients => {
            let black = Image::new(ndarray::Array3::zeros(img.data().raw_dim()))?;
            integrated_gradients(model, img, class, &black, 50)
        }
        SaliencyMethod::Xrai => xrai(model, img, class, &XraiParams::default()),
        SaliencyMethod::Random => {
            use rand::Rng;
            let target_class = class_label(model, class)?;
            let (h, w, _) = model.cfg.input_shape;
            let mut rng = crate::util::substream(seed, "saliency_random", 0);
            let values = Array2::from_shape_fn((h, w), |_| rng.gen_range(0.0..1.0f64));
            Ok(AttributionMap { values, method, target_class })
        }
    }
}

/// The `ceil(fraction * H * W)` highest-scored pixels. Ties break toward
/// the earlier raster position, so masks nest across fractions.
pub fn top_fraction_mask(attr: &AttributionMap, fraction: f64) -> Result<BinaryMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    let (h, w) = attr.values.dim();
    let n = h * w;
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    let scores = attr.values.as_slice().expect("attribution maps are standard layout");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut mask = Array2::from_elem((h, w), false);
    for &p in &order[..keep] {
        mask[[p / w, p % w]] = true;
    }
    Ok(BinaryMask::new(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build_classifier, Backbone, ClassifierConfig, DropoutPlacement};
    use crate::nn::{init, GraphBuilder};
    use crate::util::substream;
    use ndarray::{arr1, arr2, Array3};

    fn image_from(values: Array3<f64>) -> Image {
        Image::new(values).unwrap()
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("class{i}")).collect()
    }

    fn clf_config(h: usize, w: usize, c: usize, n: usize) -> ClassifierConfig {
        ClassifierConfig {
            backbone: Backbone::DeskCnn,
            dropout_rate: 0.5,
            dropout_positions: DropoutPlacement::BeforeHead,
            num_classes: n,
            input_shape: (h, w, c),
        }
    }

    /// input -> dense(W1) -> relu -> dense(W2) -> softmax, hand weights.
    fn two_layer_net(w1: Array2<f64>, w2: Array2<f64>) -> ClfModel {
        let n = w2.dim().0;
        let (hidden, inputs) = w1.dim();
        let mut gb = GraphBuilder::new((1, 1, inputs));
        let x = gb.input();
        let d1 = gb
            .dense("fc1", x, crate::nn::Dense { w: w1, b: ndarray::Array1::zeros(hidden) })
            .unwrap();
        let r = gb.relu("relu", d1).unwrap();
        let d2 = gb
            .dense("fc2", r, crate::nn::Dense { w: w2, b: ndarray::Array1::zeros(n) })
            .unwrap();
        let out = gb.softmax("softmax", d2).unwrap();
        ClfModel { graph: gb.finish(out), cfg: clf_config(1, inputs, 1, n), labels: labels(n) }
    }

    fn desk_model() -> ClfModel {
        build_classifier(&clf_config(16, 16, 3, 5), 23).unwrap()
    }

    fn ramp_image(h: usize, w: usize, c: usize) -> Image {
        image_from(Array3::from_shape_fn((h, w, c), |(i, j, ch)| {
            ((i * w + j + 5 * ch) % 41) as f64 / 40.0
        }))
    }

    #[test]
    fn guided_equals_plain_gradient_when_nothing_is_suppressed() {
        // Positive weights everywhere: forward inputs and incoming
        // gradients at the ReLU stay positive for class 0.
        let w1 = arr2(&[[0.5, 0.25], [0.3, 0.7]]);
        let w2 = arr2(&[[1.0, 2.0], [0.0, 0.0]]);
        let model = two_layer_net(w1.clone(), w2.clone());
        let img = image_from(Array3::from_shape_fn((1, 2, 1), |(_, j, _)| [0.6, 0.2][j]));
        let gb = guided_backprop(&model, &img, 0).unwrap();
        // Plain gradient: w2[0] W1 = [1, 2] [[.5,.25],[.3,.7]] = [1.1, 1.65].
        assert!((gb.values[[0, 0]] - 1.1).abs() < 1e-12);
        assert!((gb.values[[0, 1]] - 1.65).abs() < 1e-12);
    }

    #[test]
    fn negative_forward_input_suppresses_the_unit() {
        // Unit 0 sees 0.6 - 0.2 > 0; unit 1 sees 0.2 - 0.6 < 0 and is cut.
        let w1 = arr2(&[[1.0, -1.0], [-1.0, 1.0]]);
        let w2 = arr2(&[[1.0, 1.0], [0.0, 0.0]]);
        let model = two_layer_net(w1, w2);
        let img = image_from(Array3::from_shape_fn((1, 2, 1), |(_, j, _)| [0.6, 0.2][j]));
        let gb = guided_backprop(&model, &img, 0).unwrap();
        // Only unit 0 contributes its row [1, -1].
        assert!((gb.values[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((gb.values[[0, 1]] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_layer_hand_oracle_suppresses_negative_incoming_gradient() {
        let w1 = arr2(&[[1.0, -1.0], [1.0, 1.0]]);
        let w2 = arr2(&[[1.0, -2.0], [0.0, 1.0]]);
        let model = two_layer_net(w1, w2);
        let img = image_from(Array3::from_shape_fn((1, 2, 1), |(_, j, _)| [0.6, 0.2][j]));
        // Forward ReLU inputs: [0.4, 0.8], both pass. Incoming gradients
        // for class 0: [1, -2] -> guided keeps [1, 0] -> input map [1, -1].
        let gb = guided_backprop(&model, &img, 0).unwrap();
        assert!((gb.values[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((gb.values[[0, 1]] + 1.0).abs() < 1e-12);
        assert_eq!(gb.method, SaliencyMethod::GuidedBackprop);
        assert_eq!(gb.target_class, "class0");
    }

    #[test]
    fn model_without_relu_is_unsupported() {
        let mut gb = GraphBuilder::new((1, 1, 2));
        let x = gb.input();
        let mut rng = substream(0, "init", 0);
        let d = gb.dense("fc", x, init::dense(&mut rng, 2, 2)).unwrap();
        let out = gb.softmax("softmax", d).unwrap();
        let model =
            ClfModel { graph: gb.finish(out), cfg: clf_config(1, 2, 1, 2), labels: labels(2) };
        let err = guided_backprop(&model, &ramp_image(1, 2, 1), 0).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    /// input -> 1x1 conv (hand weights) -> GAP -> dense -> softmax.
    fn conv_probe(conv_w: Vec<f64>, dense_w: Array2<f64>, h: usize, w: usize) -> ClfModel {
        let a = conv_w.len();
        let n = dense_w.dim().0;
        let mut gb = GraphBuilder::new((1, h, w));
        let x = gb.input();
        let mut conv = init::conv2d(&mut substream(0, "init", 0), a, 1, 1, 1, 0);
        for (k, &v) in conv_w.iter().enumerate() {
            conv.w[[k, 0, 0, 0]] = v;
            conv.b[k] = 0.0;
        }
        let c = gb.conv("feat", x, conv).unwrap();
        let g = gb.global_avg_pool("gap", c).unwrap();
        let d = gb
            .dense("fc", g, crate::nn::Dense { w: dense_w, b: ndarray::Array1::zeros(n) })
            .unwrap();
        let out = gb.softmax("softmax", d).unwrap();
        ClfModel { graph: gb.finish(out), cfg: clf_config(h, w, 1, n), labels: labels(n) }
    }

    #[test]
    fn single_map_grad_cam_is_the_scaled_feature_map() {
        let model = conv_probe(vec![1.0], arr2(&[[2.0], [0.0]]), 4, 4);
        let img = ramp_image(4, 4, 1);
        let cam = grad_cam(&model, &img, 0, None).unwrap();
        // beta = mean gradient = 2/16; heatmap = beta * F = x / 8.
        for i in 0..4 {
            for j in 0..4 {
                let expect = img.data()[[i, j, 0]] * 2.0 / 16.0;
                assert!((cam.values[[i, j]] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn negative_weighted_sum_clamps_to_zero() {
        let model = conv_probe(vec![1.0], arr2(&[[-3.0], [0.0]]), 4, 4);
        let cam = grad_cam(&model, &ramp_image(4, 4, 1), 0, None).unwrap();
        assert!(cam.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_map_grad_cam_matches_hand_betas() {
        let model = conv_probe(vec![2.0, -1.0], arr2(&[[3.0, 1.0], [0.0, 0.0]]), 4, 4);
        let img = ramp_image(4, 4, 1);
        let cam = grad_cam(&model, &img, 0, Some("feat")).unwrap();
        // F1 = 2x, F2 = -x; betas = [3, 1]/16; sum = (6x - x)/16 = 5x/16.
        for i in 0..4 {
            for j in 0..4 {
                let expect = 5.0 * img.data()[[i, j, 0]] / 16.0;
                assert!((cam.values[[i, j]] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn grad_cam_upsamples_to_input_resolution_and_stays_nonnegative() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let cam = grad_cam(&model, &img, 2, None).unwrap();
        assert_eq!(cam.values.dim(), (16, 16));
        assert!(cam.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn grad_cam_rejects_unknown_and_non_convolutional_layers() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        assert!(grad_cam(&model, &img, 0, Some("nope/conv")).is_err());
        assert!(grad_cam(&model, &img, 0, Some("block0/relu")).is_err());
    }

    #[test]
    fn guided_grad_cam_is_the_product_of_its_parents() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let gb = guided_backprop(&model, &img, 1).unwrap();
        let cam = grad_cam(&model, &img, 1, None).unwrap();
        let ggc = guided_grad_cam(&model, &img, 1).unwrap();
        for ((a, b), c) in gb.values.iter().zip(cam.values.iter()).zip(ggc.values.iter()) {
            assert_eq!(a * b, *c);
        }
        assert!(ggc.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_heatmap_annihilates_guided_grad_cam() {
        let model = conv_probe(vec![1.0], arr2(&[[-3.0], [0.0]]), 4, 4);
        // No ReLU in the conv probe, so splice one in for GB support.
        let mut gb2 = GraphBuilder::new((1, 4, 4));
        let x = gb2.input();
        let r = gb2.relu("in_relu", x).unwrap();
        let mut conv = init::conv2d(&mut substream(0, "init", 0), 1, 1, 1, 1, 0);
        conv.w[[0, 0, 0, 0]] = 1.0;
        conv.b[0] = 0.0;
        let c = gb2.conv("feat", r, conv).unwrap();
        let g = gb2.global_avg_pool("gap", c).unwrap();
        let d = gb2
            .dense(
                "fc",
                g,
                crate::nn::Dense { w: arr2(&[[-3.0], [0.0]]), b: arr1(&[0.0, 0.0]) },
            )
            .unwrap();
        let out = gb2.softmax("softmax", d).unwrap();
        let model2 =
            ClfModel { graph: gb2.finish(out), cfg: model.cfg.clone(), labels: labels(2) };
        let ggc = guided_grad_cam(&model2, &ramp_image(4, 4, 1), 0).unwrap();
        assert!(ggc.values.iter().all(|&v| v == 0.0));
    }

    fn linear_probe(weights: &Array2<f64>) -> ClfModel {
        let (h, w) = weights.dim();
        let mut dense = Array2::zeros((2, h * w));
        for (i, &v) in weights.iter().enumerate() {
            dense[[0, i]] = v;
        }
        let mut gb = GraphBuilder::new((1, h, w));
        let x = gb.input();
        let d = gb
            .dense("fc", x, crate::nn::Dense { w: dense, b: ndarray::Array1::zeros(2) })
            .unwrap();
        let out = gb.softmax("softmax", d).unwrap();
        ClfModel { graph: gb.finish(out), cfg: clf_config(h, w, 1, 2), labels: labels(2) }
    }

    #[test]
    fn integrated_gradients_is_exact_for_a_linear_score() {
        let weights = arr2(&[[0.5, -1.0, 2.0], [0.0, 3.0, -0.5]]);
        let model = linear_probe(&weights);
        let img = image_from(Array3::from_shape_fn((2, 3, 1), |(i, j, _)| {
            [[0.9, 0.1, 0.4], [0.0, 1.0, 0.6]][i][j]
        }));
        let baseline = image_from(Array3::from_elem((2, 3, 1), 0.25));
        for steps in [8, 50] {
            let ig = integrated_gradients(&model, &img, 0, &baseline, steps).unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    let expect = weights[[i, j]] * (img.data()[[i, j, 0]] - 0.25);
                    assert!((ig.values[[i, j]] - expect).abs() < 1e-9, "steps {steps}");
                }
            }
        }
    }

    #[test]
    fn baseline_equal_to_image_gives_zero_attribution() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let ig = integrated_gradients(&model, &img, 0, &img, 16).unwrap();
        assert!(ig.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pixel_at_the_baseline_value_contributes_zero() {
        let weights = arr2(&[[1.5, 2.5], [0.5, 1.0]]);
        let model = linear_probe(&weights);
        // Pixel (0, 1) equals the black baseline exactly.
        let img = image_from(Array3::from_shape_fn((2, 2, 1), |(i, j, _)| {
            [[0.8, 0.0], [0.3, 0.9]][i][j]
        }));
        let black = image_from(Array3::zeros((2, 2, 1)));
        let ig = integrated_gradients(&model, &img, 0, &black, 32).unwrap();
        assert_eq!(ig.values[[0, 1]], 0.0);
        assert!(ig.values[[0, 0]] != 0.0);
    }

    #[test]
    fn completeness_holds_within_five_percent_on_the_desk_backbone() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let black = image_from(Array3::zeros((16, 16, 3)));
        let class = 3;
        let ig = integrated_gradients(&model, &img, class, &black, 128).unwrap();
        let total: f64 = ig.values.iter().sum();
        let gap = class_logit(&model, &img, class).unwrap()
            - class_logit(&model, &black, class).unwrap();
        assert!(gap.abs() > 1e-6, "degenerate fixture: logit gap {gap}");
        let rel = (total - gap).abs() / gap.abs();
        assert!(rel < 0.05, "completeness gap {rel}");
    }

    #[test]
    fn integrated_gradients_validates_steps_and_baseline_shape() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let black = image_from(Array3::zeros((16, 16, 3)));
        assert!(integrated_gradients(&model, &img, 0, &black, 7).is_err());
        let small = image_from(Array3::zeros((8, 8, 3)));
        assert!(integrated_gradients(&model, &img, 0, &small, 16).is_err());
        assert!(integrated_gradients(&model, &img, 9, &black, 16).is_err());
    }

    fn map_of(values: Array2<f64>) -> AttributionMap {
        AttributionMap {
            values,
            method: SaliencyMethod::IntegratedGradients,
            target_class: "MEL".into(),
        }
    }

    #[test]
    fn top_fraction_keeps_the_ceiling_count() {
        let n = 224 * 224;
        let values = Array2::from_shape_fn((224, 224), |(i, j)| (n - (i * 224 + j)) as f64);
        let mask = top_fraction_mask(&map_of(values), 0.05).unwrap();
        let kept = mask.data().iter().filter(|&&b| b).count();
        assert_eq!(kept, 2509);
        // Strictly decreasing raster scores select a raster prefix.
        assert!(mask.data().as_slice().unwrap()[..2509].iter().all(|&b| b));
    }

    #[test]
    fn full_fraction_keeps_every_pixel() {
        let values = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) % 4) as f64);
        let mask = top_fraction_mask(&map_of(values), 1.0).unwrap();
        assert!(mask.data().iter().all(|&b| b));
    }

    #[test]
    fn masks_nest_across_fractions() {
        let mut rng = substream(9, "mask", 0);
        let values = Array2::from_shape_fn((20, 20), |_| {
            use rand::Rng;
            rng.gen_range(-1.0..1.0f64)
        });
        let attr = map_of(values);
        let m05 = top_fraction_mask(&attr, 0.05).unwrap();
        let m10 = top_fraction_mask(&attr, 0.10).unwrap();
        let m20 = top_fraction_mask(&attr, 0.20).unwrap();
        for ((a, b), c) in m05.data().iter().zip(m10.data().iter()).zip(m20.data().iter()) {
            assert!(!a || *b, "0.05 not inside 0.10");
            assert!(!b || *c, "0.10 not inside 0.20");
        }
    }

    #[test]
    fn dispatcher_matches_direct_calls_and_tags_methods() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let via = attribute(&model, &img, 1, SaliencyMethod::GradCam, 0).unwrap();
        let direct = grad_cam(&model, &img, 1, None).unwrap();
        assert_eq!(via.values, direct.values);
        let gb = attribute(&model, &img, 1, SaliencyMethod::GuidedBackprop, 0).unwrap();
        assert_eq!(gb.method, SaliencyMethod::GuidedBackprop);
    }

    #[test]
    fn random_baseline_is_seeded() {
        let model = desk_model();
        let img = ramp_image(16, 16, 3);
        let a = attribute(&model, &img, 0, SaliencyMethod::Random, 7).unwrap();
        let b = attribute(&model, &img, 0, SaliencyMethod::Random, 7).unwrap();
        let c = attribute(&model, &img, 0, SaliencyMethod::Random, 8).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.values != c.values);
        assert_eq!(a.values.dim(), (16, 16));
    }

    #[test]
    fn out_of_range_fractions_are_rejected() {
        let attr = map_of(Array2::zeros((4, 4)));
        assert!(top_fraction_mask(&attr, 0.0).is_err());
        assert!(top_fraction_mask(&attr, 1.01).is_err());
    }
}
