//! Bayesian classification stage: configurable deep backbones with dropout
//! inserted at chosen positions, plus the training loop with oversampling.
//!
//! Three backbones share one harness. `densenet169_style` and
//! `resnet50_style` follow their published layer recipes; `desk_cnn` is a
//! four-block net that trains in minutes and anchors the fast oracles.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::data::{
    augment, image_to_net_input, load_image, one_hot, resize_bicubic, AugmentationSpec,
    DatasetManifest,
};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_config, load_weights, require, require_parsed, save_checkpoint};
use crate::nn::loss::{bce, categorical_cross_entropy};
use crate::nn::{init, Adam, BackpropMode, Graph, GraphBuilder, NodeId, Phase, Tensor};
use crate::segnet::{LossKind, TrainConfig};
use crate::types::{class_index, Image, ProbabilityVector, CLASS_LABELS};
use crate::util::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backbone {
    Densenet169Style,
    Resnet50Style,
    DeskCnn,
}

impl Backbone {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backbone::Densenet169Style => "densenet169_style",
            Backbone::Resnet50Style => "resnet50_style",
            Backbone::DeskCnn => "desk_cnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "densenet169_style" => Ok(Backbone::Densenet169Style),
            "resnet50_style" => Ok(Backbone::Resnet50Style),
            "desk_cnn" => Ok(Backbone::DeskCnn),
            other => Err(Error::Config(format!("unknown backbone {other}"))),
        }
    }

    /// Dropout sites this backbone offers, in network order.
    pub fn sites(&self) -> Vec<String> {
        let mut s: Vec<String> = match self {
            Backbone::DeskCnn => (0..4).map(|k| format!("block{k}")).collect(),
            Backbone::Resnet50Style => (0..4).map(|k| format!("stage{k}")).collect(),
            Backbone::Densenet169Style => {
                let mut v: Vec<String> = (0..4).map(|k| format!("block{k}")).collect();
                v.extend((0..3).map(|k| format!("trans{k}")));
                v
            }
        };
        s.push("head".into());
        s
    }
}

/// Where dropout layers go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropoutPlacement {
    /// After every dense block (DenseNet backbones only).
    AfterDenseBlocks,
    /// After every downsampling stage.
    AfterStages,
    /// Single dropout before the classification head.
    BeforeHead,
    /// Explicit site names from [`Backbone::sites`].
    Custom(Vec<String>),
}

impl DropoutPlacement {
    /// Resolves the placement to concrete site names for a backbone.
    pub fn resolve(&self, backbone: Backbone) -> Result<Vec<String>> {
        let available = backbone.sites();
        let chosen: Vec<String> = match self {
            DropoutPlacement::AfterDenseBlocks => match backbone {
                Backbone::Densenet169Style => (0..4).map(|k| format!("block{k}")).collect(),
                other => {
                    return Err(Error::Config(format!(
                        "after_dense_blocks placement needs a DenseNet backbone, got {}",
                        other.as_str()
                    )))
                }
            },
            DropoutPlacement::AfterStages => match backbone {
                Backbone::Resnet50Style => (0..4).map(|k| format!("stage{k}")).collect(),
                Backbone::DeskCnn => (0..4).map(|k| format!("block{k}")).collect(),
                // Stage boundaries of a DenseNet are its transitions plus the
                // final block.
                Backbone::Densenet169Style => {
                    let mut v: Vec<String> = (0..3).map(|k| format!("trans{k}")).collect();
                    v.push("block3".into());
                    v
                }
            },
            DropoutPlacement::BeforeHead => vec!["head".into()],
            DropoutPlacement::Custom(names) => names.clone(),
        };
        for name in &chosen {
            if !available.contains(name) {
                return Err(Error::Config(format!(
                    "dropout site {name} not offered by backbone {} (available: {})",
                    backbone.as_str(),
                    available.join(", ")
                )));
            }
        }
        Ok(chosen)
    }

    pub fn as_config_string(&self) -> String {
        match self {
            DropoutPlacement::AfterDenseBlocks => "after_dense_blocks".into(),
            DropoutPlacement::AfterStages => "after_stages".into(),
            DropoutPlacement::BeforeHead => "before_head".into(),
            DropoutPlacement::Custom(names) => format!("custom:{}", names.join(",")),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "after_dense_blocks" => Ok(DropoutPlacement::AfterDenseBlocks),
            "after_stages" => Ok(DropoutPlacement::AfterStages),
            "before_head" => Ok(DropoutPlacement::BeforeHead),
            other => match other.strip_prefix("custom:") {
                Some(rest) => Ok(DropoutPlacement::Custom(
                    rest.split(',').filter(|p| !p.is_empty()).map(str::to_string).collect(),
                )),
                None => Err(Error::Config(format!("unknown dropout placement {other}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub backbone: Backbone,
    pub dropout_rate: f64,
    pub dropout_positions: DropoutPlacement,
    pub num_classes: usize,
    pub input_shape: (usize, usize, usize),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            backbone: Backbone::Densenet169Style,
            dropout_rate: 0.5,
            dropout_positions: DropoutPlacement::AfterDenseBlocks,
            num_classes: 7,
            input_shape: (224, 224, 3),
        }
    }
}

impl ClassifierConfig {
    /// Desk-scale config used by the fast oracles.
    pub fn desk(num_classes: usize) -> Self {
        ClassifierConfig {
            backbone: Backbone::DeskCnn,
            dropout_rate: 0.3,
            dropout_positions: DropoutPlacement::BeforeHead,
            num_classes,
            input_shape: (32, 32, 3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::Config(format!(
                "classifier dropout rate {} outside (0, 1)",
                self.dropout_rate
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "classifier needs >= 2 classes, got {}",
                self.num_classes
            )));
        }
        let (h, w, c) = self.input_shape;
        let div = match self.backbone {
            Backbone::DeskCnn => 16,
            _ => 32,
        };
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} not divisible by {div} for backbone {}",
                self.backbone.as_str()
            )));
        }
        if c != 1 && c != 3 {
            return Err(Error::Config(format!("classifier expects 1 or 3 channels, got {c}")));
        }
        self.dropout_positions.resolve(self.backbone)?;
        Ok(())
    }
}

/// A classifier network plus its config and the label order its output
/// indices refer to.
#[derive(Debug, Clone)]
pub struct ClfModel {
    pub graph: Graph,
    pub cfg: ClassifierConfig,
    pub labels: Vec<String>,
}

fn default_labels(n: usize) -> Vec<String> {
    if n <= CLASS_LABELS.len() {
        CLASS_LABELS[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("class{i}")).collect()
    }
}

/// Builds the configured backbone with dropout at the resolved sites.
pub fn build_classifier(cfg: &ClassifierConfig, seed: u64) -> Result<ClfModel> {
    cfg.validate()?;
    let sites = cfg.dropout_positions.resolve(cfg.backbone)?;
    let selected = |name: &str| sites.iter().any(|s| s == name);
    let mut rng = substream(seed, "init", 0);
    let (h, w, c) = cfg.input_shape;
    let mut gb = GraphBuilder::new((c, h, w));
    let body = match cfg.backbone {
        Backbone::DeskCnn => build_desk_cnn(&mut gb, cfg, &selected, &mut rng)?,
        Backbone::Resnet50Style => build_resnet50(&mut gb, cfg, &selected, &mut rng)?,
        Backbone::Densenet169Style => build_densenet169(&mut gb, cfg, &selected, &mut rng)?,
    };
    // `body` is the post-GAP feature vector; finish with the shared head.
    let mut cur = body.0;
    if selected("head") {
        cur = gb.dropout("drop/head", cur, cfg.dropout_rate)?;
    }
    let dense = gb.dense("head/fc", cur, init::dense(&mut rng, cfg.num_classes, body.1))?;
    let out = gb.softmax("head/softmax", dense)?;
    Ok(ClfModel {
        graph: gb.finish(out),
        cfg: cfg.clone(),
        labels: default_labels(cfg.num_classes),
    })
}

type BodyOut = (NodeId, usize);

fn build_desk_cnn(
    gb: &mut GraphBuilder,
    cfg: &ClassifierConfig,
    selected: &dyn Fn(&str) -> bool,
    rng: &mut ChaCha8Rng,
) -> Result<BodyOut> {
    let mut cur = gb.input();
    let mut cin = cfg.input_shape.2;
    let filters = [8, 16, 32, 64];
    for (k, &f) in filters.iter().enumerate() {
        let conv = gb.conv(&format!("block{k}/conv"), cur, init::conv2d(rng, f, cin, 3, 1, 1))?;
        let bn = gb.batch_norm(&format!("block{k}/bn"), conv)?;
        let act = gb.relu(&format!("block{k}/relu"), bn)?;
        cur = gb.max_pool(&format!("block{k}/pool"), act, 2, 2)?;
        if selected(&format!("block{k}")) {
            cur = gb.dropout(&format!("drop/block{k}"), cur, cfg.dropout_rate)?;
        }
        cin = f;
    }
    let gap = gb.global_avg_pool("gap", cur)?;
    Ok((gap, cin))
}

fn build_resnet50(
    gb: &mut GraphBuilder,
    cfg: &ClassifierConfig,
    selected: &dyn Fn(&str) -> bool,
    rng: &mut ChaCha8Rng,
) -> Result<BodyOut> {
    let mut cur = gb.input();
    let conv = gb.conv("stem/conv", cur, init::conv2d(rng, 64, cfg.input_shape.2, 7, 2, 3))?;
    let bn = gb.batch_norm("stem/bn", conv)?;
    let act = gb.relu("stem/relu", bn)?;
    cur = gb.max_pool_padded("stem/pool", act, 3, 2, 1)?;
    let mut cin = 64;
    let stages: [(usize, usize); 4] = [(64, 3), (128, 4), (256, 6), (512, 3)];
    for (k, &(base, blocks)) in stages.iter().enumerate() {
        for b in 0..blocks {
            let stride = if k > 0 && b == 0 { 2 } else { 1 };
            let p = format!("stage{k}/b{b}");
            let out_c = base * 4;
            let c1 = gb.conv(&format!("{p}/c1"), cur, init::conv2d(rng, base, cin, 1, 1, 0))?;
            let n1 = gb.batch_norm(&format!("{p}/c1_bn"), c1)?;
            let r1 = gb.relu(&format!("{p}/c1_relu"), n1)?;
            let c2 = gb.conv(&format!("{p}/c2"), r1, init::conv2d(rng, base, base, 3, stride, 1))?;
            let n2 = gb.batch_norm(&format!("{p}/c2_bn"), c2)?;
            let r2 = gb.relu(&format!("{p}/c2_relu"), n2)?;
            let c3 = gb.conv(&format!("{p}/c3"), r2, init::conv2d(rng, out_c, base, 1, 1, 0))?;
            let n3 = gb.batch_norm(&format!("{p}/c3_bn"), c3)?;
            let shortcut = if b == 0 {
                let sc = gb.conv(
                    &format!("{p}/sc"),
                    cur,
                    init::conv2d(rng, out_c, cin, 1, stride, 0),
                )?;
                gb.batch_norm(&format!("{p}/sc_bn"), sc)?
            } else {
                cur
            };
            let sum = gb.add(&format!("{p}/add"), &[n3, shortcut])?;
            cur = gb.relu(&format!("{p}/relu"), sum)?;
            cin = out_c;
        }
        if selected(&format!("stage{k}")) {
            cur = gb.dropout(&format!("drop/stage{k}"), cur, cfg.dropout_rate)?;
        }
    }
    let gap = gb.global_avg_pool("gap", cur)?;
    Ok((gap, cin))
}

fn build_densenet169(
    gb: &mut GraphBuilder,
    cfg: &ClassifierConfig,
    selected: &dyn Fn(&str) -> bool,
    rng: &mut ChaCha8Rng,
) -> Result<BodyOut> {
    const GROWTH: usize = 32;
    const BN_SIZE: usize = 4;
    let block_layers = [6, 12, 32, 32];
    let mut cur = gb.input();
    let conv = gb.conv("stem/conv", cur, init::conv2d(rng, 64, cfg.input_shape.2, 7, 2, 3))?;
    let bn = gb.batch_norm("stem/bn", conv)?;
    let act = gb.relu("stem/relu", bn)?;
    cur = gb.max_pool_padded("stem/pool", act, 3, 2, 1)?;
    let mut cin = 64;
    for (k, &layers) in block_layers.iter().enumerate() {
        for l in 0..layers {
            let p = format!("block{k}/l{l}");
            let n1 = gb.batch_norm(&format!("{p}/bn1"), cur)?;
            let r1 = gb.relu(&format!("{p}/relu1"), n1)?;
            let c1 = gb.conv(
                &format!("{p}/c1"),
                r1,
                init::conv2d(rng, BN_SIZE * GROWTH, cin, 1, 1, 0),
            )?;
            let n2 = gb.batch_norm(&format!("{p}/bn2"), c1)?;
            let r2 = gb.relu(&format!("{p}/relu2"), n2)?;
            let c2 = gb.conv(
                &format!("{p}/c2"),
                r2,
                init::conv2d(rng, GROWTH, BN_SIZE * GROWTH, 3, 1, 1),
            )?;
            cur = gb.concat(&format!("{p}/cat"), &[cur, c2])?;
            cin += GROWTH;
        }
        if selected(&format!("block{k}")) {
            cur = gb.dropout(&format!("drop/block{k}"), cur, cfg.dropout_rate)?;
        }
        if k + 1 < block_layers.len() {
            let p = format!("trans{k}");
            let n = gb.batch_norm(&format!("{p}/bn"), cur)?;
            let r = gb.relu(&format!("{p}/relu"), n)?;
            let half = cin / 2;
            let c = gb.conv(&format!("{p}/conv"), r, init::conv2d(rng, half, cin, 1, 1, 0))?;
            cur = gb.avg_pool(&format!("{p}/pool"), c, 2, 2)?;
            cin = half;
            if selected(&format!("trans{k}")) {
                cur = gb.dropout(&format!("drop/trans{k}"), cur, cfg.dropout_rate)?;
            }
        }
    }
    let n = gb.batch_norm("final/bn", cur)?;
    let r = gb.relu("final/relu", n)?;
    let gap = gb.global_avg_pool("gap", r)?;
    Ok((gap, cin))
}

/// One forward pass returning class probabilities.
pub fn clf_forward(
    model: &ClfModel,
    img: &Image,
    stochastic: bool,
    seed: u64,
) -> Result<ProbabilityVector> {
    let x = image_to_net_input(img, model.cfg.input_shape)?;
    let acts = if stochastic {
        let mut rng = substream(seed, "dropout", 0);
        model.graph.forward(&x, &mut Phase::McDropout { rng: &mut rng })?
    } else {
        model.graph.forward(&x, &mut Phase::Inference)?
    };
    probability_from_output(acts.output(model.graph.output_id()))
}

pub(crate) fn probability_from_output(out: &Tensor) -> Result<ProbabilityVector> {
    let (_, c, _, _) = out.dim();
    let probs: Vec<f64> = (0..c).map(|k| out[[0, k, 0, 0]]).collect();
    ProbabilityVector::new(probs)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

struct ClfItem {
    x: Tensor,
    class: usize,
}

/// Labels present in a manifest, in canonical order.
fn manifest_labels(manifest: &DatasetManifest) -> Result<Vec<String>> {
    let mut labels: Vec<String> = manifest.class_counts.keys().cloned().collect();
    labels.sort_by_key(|l| class_index(l).unwrap_or(usize::MAX));
    if labels.is_empty() {
        return Err(Error::Dataset("manifest has no labeled entries".into()));
    }
    Ok(labels)
}

fn load_clf_items(
    manifest: &DatasetManifest,
    model: &ClfModel,
    labels: &[String],
) -> Result<Vec<(ClfItem, Image)>> {
    if manifest.len() == 0 {
        return Err(Error::Dataset("classification manifest is empty".into()));
    }
    let (h, w, _) = model.cfg.input_shape;
    let mut items = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let label = entry.label.as_ref().ok_or_else(|| {
            Error::Dataset(format!("entry {} has no label for classification", entry.name))
        })?;
        let class = labels.iter().position(|l| l == label).ok_or_else(|| {
            Error::Dataset(format!("label {label} absent from the training label set"))
        })?;
        let img = resize_bicubic(&load_image(&entry.image)?, h, w)?;
        items.push((ClfItem { x: image_to_net_input(&img, model.cfg.input_shape)?, class }, img));
    }
    Ok(items)
}

/// Expands a training set so every class matches the majority count, filling
/// the gap with augmented copies (the offline oversampling remedy).
fn oversample(
    items: &[(ClfItem, Image)],
    model: &ClfModel,
    aug: &AugmentationSpec,
    seed: u64,
) -> Result<Vec<ClfItem>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (item, _)) in items.iter().enumerate() {
        by_class.entry(item.class).or_default().push(i);
    }
    let majority = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<ClfItem> = items
        .iter()
        .map(|(item, _)| ClfItem { x: item.x.clone(), class: item.class })
        .collect();
    let mut draw_idx = 0u64;
    for (&class, members) in &by_class {
        for t in 0..majority - members.len() {
            let src = members[t % members.len()];
            let mut rng = substream(seed, "oversample", draw_idx);
            draw_idx += 1;
            let augmented = augment(&items[src].1, aug, &mut rng)?;
            out.push(ClfItem {
                x: image_to_net_input(&augmented, model.cfg.input_shape)?,
                class,
            });
        }
    }
    Ok(out)
}

/// Per-class counts after oversampling: every class equals the majority.
pub fn oversampled_counts(manifest: &DatasetManifest) -> BTreeMap<String, usize> {
    let majority = manifest.class_counts.values().copied().max().unwrap_or(0);
    manifest.class_counts.keys().map(|k| (k.clone(), majority)).collect()
}

fn eval_clf(model: &ClfModel, items: &[(ClfItem, Image)]) -> Result<f64> {
    let mut correct = 0usize;
    for (item, _) in items {
        let acts = model.graph.forward(&item.x, &mut Phase::Inference)?;
        let probs = probability_from_output(acts.output(model.graph.output_id()))?;
        if probs.argmax() == item.class {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

/// Trains with Adam; loss per `cfg.loss` (per-class BCE against one-hot by
/// default, categorical cross-entropy by flag).
///
/// Class imbalance is remedied up front by augmentation-based oversampling.
/// Returns the model restored to its best-validation-accuracy weights.
pub fn train_classifier(
    mut model: ClfModel,
    train: &DatasetManifest,
    val: &DatasetManifest,
    cfg: &TrainConfig,
    aug: &AugmentationSpec,
    seed: u64,
) -> Result<(ClfModel, Vec<ClfEpoch>)> {
    cfg.validate()?;
    aug.validate()?;
    let labels = manifest_labels(train)?;
    if labels.len() != model.cfg.num_classes {
        return Err(Error::Config(format!(
            "model has {} classes but training data has {}",
            model.cfg.num_classes,
            labels.len()
        )));
    }
    model.labels = labels.clone();
    let train_raw = load_clf_items(train, &model, &labels)?;
    let val_items = load_clf_items(val, &model, &labels)?;
    let train_items = oversample(&train_raw, &model, aug, seed)?;
    let n = train_items.len();
    let n_batches = n.div_ceil(cfg.batch_size);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<crate::util::TensorBlob>)> = None;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        {
            use rand::Rng;
            let mut rng = substream(seed, "shuffle", epoch as u64);
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = stack_clf_batch(&train_items, chunk, model.cfg.num_classes);
            let mut rng = substream(seed, "train", (epoch * n_batches + bi) as u64);
            let acts = model.graph.forward(&x, &mut Phase::Train { rng: &mut rng })?;
            let out = acts.output(model.graph.output_id());
            let (loss, grad) = match cfg.loss {
                LossKind::Bce => bce(out, &y),
                LossKind::Categorical => categorical_cross_entropy(out, &y),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let grads = model.graph.backward(
                &acts,
                &[(model.graph.output_id(), grad)],
                BackpropMode::Standard,
            )?;
            adam.step(&mut model.graph, &grads.wrt_params);
            model.graph.apply_bn_updates(&acts);
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / n as f64;
        let val_accuracy = eval_clf(&model, &val_items)?;
        history.push(ClfEpoch { epoch, train_loss, val_accuracy });
        if best.as_ref().map_or(true, |(a, _)| val_accuracy > *a) {
            best = Some((val_accuracy, model.graph.export_tensors()));
        }
    }
    if let Some((_, blobs)) = best {
        model.graph.import_tensors(&blobs)?;
    }
    Ok((model, history))
}

fn stack_clf_batch(items: &[ClfItem], idx: &[usize], n_classes: usize) -> (Tensor, Tensor) {
    let (_, c, h, w) = items[idx[0]].x.dim();
    let mut x = Tensor::zeros((idx.len(), c, h, w));
    let classes: Vec<usize> = idx.iter().map(|&i| items[i].class).collect();
    for (n, &i) in idx.iter().enumerate() {
        x.slice_mut(ndarray::s![n..n + 1, .., .., ..]).assign(&items[i].x);
    }
    (x, one_hot(&classes, n_classes))
}

/// Writes `config.txt` (including the label order) plus `weights.bin`.
pub fn save_clf_checkpoint(dir: &Path, model: &ClfModel) -> Result<()> {
    let (h, w, c) = model.cfg.input_shape;
    let mut cfg = BTreeMap::new();
    cfg.insert("kind".into(), "classifier".into());
    cfg.insert("backbone".into(), model.cfg.backbone.as_str().into());
    cfg.insert("dropout_rate".into(), model.cfg.dropout_rate.to_string());
    cfg.insert("dropout_positions".into(), model.cfg.dropout_positions.as_config_string());
    cfg.insert("num_classes".into(), model.cfg.num_classes.to_string());
    cfg.insert("input_h".into(), h.to_string());
    cfg.insert("input_w".into(), w.to_string());
    cfg.insert("input_c".into(), c.to_string());
    cfg.insert("labels".into(), model.labels.join(","));
    save_checkpoint(dir, &cfg, &model.graph)
}

/// Rebuilds the checkpointed architecture and loads weights and labels.
pub fn load_clf_checkpoint(dir: &Path) -> Result<ClfModel> {
    let cfg = load_config(dir)?;
    if require(&cfg, "kind")? != "classifier" {
        return Err(Error::Checkpoint(format!(
            "checkpoint at {} is not a classifier",
            dir.display()
        )));
    }
    let net = ClassifierConfig {
        backbone: Backbone::parse(require(&cfg, "backbone")?)?,
        dropout_rate: require_parsed(&cfg, "dropout_rate")?,
        dropout_positions: DropoutPlacement::parse(require(&cfg, "dropout_positions")?)?,
        num_classes: require_parsed(&cfg, "num_classes")?,
        input_shape: (
            require_parsed(&cfg, "input_h")?,
            require_parsed(&cfg, "input_w")?,
            require_parsed(&cfg, "input_c")?,
        ),
    };
    let labels: Vec<String> =
        require(&cfg, "labels")?.split(',').map(str::to_string).collect();
    if labels.len() != net.num_classes {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {} labels for {} classes",
            labels.len(),
            net.num_classes
        )));
    }
    let mut model = build_classifier(&net, 0)?;
    load_weights(dir, &mut model.graph)?;
    model.labels = labels;
    Ok(model)
}
