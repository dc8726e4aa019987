//! Bayesian MultiResUNet segmentation: architecture builders, stochastic
//! forward passes, and a training loop tracking Dice/Jaccard per epoch.
//!
//! The encoder stacks MultiRes blocks with filter budgets doubling per stage;
//! skips travel through Res paths; dropout after every pooling and upsampling
//! step makes the net Bayesian under MC sampling. A plain U-Net built on the
//! same harness serves as the comparison baseline.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::data::{resize_bicubic, resize_mask_nearest, DatasetManifest};
use crate::error::{Error, Result};
use crate::metrics::{binarize, dice, jaccard};
use crate::nn::checkpoint::{load_config, load_weights, require, require_parsed, save_checkpoint};
use crate::nn::loss::bce;
use crate::nn::{init, Adam, BackpropMode, Graph, GraphBuilder, NodeId, Phase};
use crate::types::{BinaryMask, Image};
use crate::util::substream;

/// Filter allocation for one MultiRes block.
///
/// The three chained 3x3 branches emulate 3x3/5x5/7x7 receptive fields; their
/// filter counts must sum to the 1x1 shortcut's count so the residual add is
/// well-formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiResBlockSpec {
    pub in_channels: usize,
    pub branch_filters: (usize, usize, usize),
    pub shortcut_filters: usize,
}

impl MultiResBlockSpec {
    /// Splits a filter budget W as floor(W/6), floor(W/3), remainder.
    pub fn from_budget(in_channels: usize, w: usize) -> Result<Self> {
        let b1 = w / 6;
        let b2 = w / 3;
        if b1 == 0 {
            return Err(Error::Config(format!(
                "multires budget {w} too small: smallest branch would get 0 filters"
            )));
        }
        let spec = MultiResBlockSpec {
            in_channels,
            branch_filters: (b1, b2, w - b1 - b2),
            shortcut_filters: w,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (b1, b2, b3) = self.branch_filters;
        if self.in_channels == 0 || b1 == 0 || b2 == 0 || b3 == 0 {
            return Err(Error::Config(format!("multires block has an empty branch: {self:?}")));
        }
        if b1 + b2 + b3 != self.shortcut_filters {
            return Err(Error::Config(format!(
                "multires branches {b1}+{b2}+{b3} do not sum to shortcut {}",
                self.shortcut_filters
            )));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.shortcut_filters
    }
}

/// One Res path: `length` repetitions of conv3x3 + conv1x1 residual units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResPathSpec {
    pub filters: usize,
    pub length: usize,
}

impl ResPathSpec {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.length == 0 {
            return Err(Error::Config(format!("res path needs filters and length >= 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegArch {
    MultiResUnet,
    Unet,
}

impl SegArch {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegArch::MultiResUnet => "multires_unet",
            SegArch::Unet => "unet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "multires_unet" => Ok(SegArch::MultiResUnet),
            "unet" => Ok(SegArch::Unet),
            other => Err(Error::Config(format!("unknown segmentation arch {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegNetConfig {
    /// (height, width, channels); spatial dims must divide by 2^depth.
    pub input_shape: (usize, usize, usize),
    /// Filter budget of the first MultiRes block; doubles per stage.
    pub base_w: usize,
    /// Filters of the first Res path; doubles per stage.
    pub respath_base: usize,
    /// Encoder stages before the bridge.
    pub depth: usize,
    pub dropout_rate: f64,
    pub arch: SegArch,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            input_shape: (224, 224, 3),
            base_w: 51,
            respath_base: 32,
            depth: 4,
            dropout_rate: 0.5,
            arch: SegArch::MultiResUnet,
        }
    }
}

impl SegNetConfig {
    /// Desk-scale variant that trains in seconds on one core.
    pub fn desk() -> Self {
        SegNetConfig {
            input_shape: (32, 32, 3),
            base_w: 12,
            respath_base: 8,
            depth: 3,
            dropout_rate: 0.1,
            arch: SegArch::MultiResUnet,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_shape;
        if !(1..=6).contains(&self.depth) {
            return Err(Error::Config(format!("segnet depth {} outside 1..=6", self.depth)));
        }
        let div = 1usize << self.depth;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} not divisible by 2^{} = {div}",
                self.depth
            )));
        }
        if c != 1 && c != 3 {
            return Err(Error::Config(format!("segnet expects 1 or 3 input channels, got {c}")));
        }
        if self.base_w < 6 {
            return Err(Error::Config(format!(
                "base filter budget {} too small to split across branches",
                self.base_w
            )));
        }
        if self.respath_base == 0 {
            return Err(Error::Config("res path base filters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Shared optimizer settings for both networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Binary cross-entropy, averaged per element.
    Bce,
    /// Categorical cross-entropy over softmax outputs.
    Categorical,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, batch_size: 16, epochs: 10, loss: LossKind::Bce }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Appends one MultiRes block to the graph; returns its output node.
pub fn build_multires_block(
    gb: &mut GraphBuilder,
    prefix: &str,
    x: NodeId,
    spec: &MultiResBlockSpec,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    spec.validate()?;
    let (b1, b2, b3) = spec.branch_filters;
    let branch = |gb: &mut GraphBuilder, tag: &str, from: NodeId, cin: usize, cout: usize, rng: &mut ChaCha8Rng| -> Result<NodeId> {
        let c = gb.conv(&format!("{prefix}/{tag}"), from, init::conv2d(rng, cout, cin, 3, 1, 1))?;
        let n = gb.batch_norm(&format!("{prefix}/{tag}_bn"), c)?;
        gb.relu(&format!("{prefix}/{tag}_relu"), n)
    };
    let o1 = branch(gb, "c1", x, spec.in_channels, b1, rng)?;
    let o2 = branch(gb, "c2", o1, b1, b2, rng)?;
    let o3 = branch(gb, "c3", o2, b2, b3, rng)?;
    let cat = gb.concat(&format!("{prefix}/cat"), &[o1, o2, o3])?;
    let sc = gb.conv(
        &format!("{prefix}/sc"),
        x,
        init::conv2d(rng, spec.shortcut_filters, spec.in_channels, 1, 1, 0),
    )?;
    let sc_bn = gb.batch_norm(&format!("{prefix}/sc_bn"), sc)?;
    let sum = gb.add(&format!("{prefix}/add"), &[cat, sc_bn])?;
    let act = gb.relu(&format!("{prefix}/out_relu"), sum)?;
    gb.batch_norm(&format!("{prefix}/out_bn"), act)
}

/// Appends a Res path (chain of conv3x3 + conv1x1 residual units).
pub fn build_res_path(
    gb: &mut GraphBuilder,
    prefix: &str,
    x: NodeId,
    spec: &ResPathSpec,
    in_channels: usize,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    spec.validate()?;
    let mut cur = x;
    let mut cin = in_channels;
    for i in 0..spec.length {
        let f = spec.filters;
        let c3 = gb.conv(&format!("{prefix}/b{i}/c3"), cur, init::conv2d(rng, f, cin, 3, 1, 1))?;
        let c1 = gb.conv(&format!("{prefix}/b{i}/c1"), cur, init::conv2d(rng, f, cin, 1, 1, 0))?;
        let sum = gb.add(&format!("{prefix}/b{i}/add"), &[c3, c1])?;
        let act = gb.relu(&format!("{prefix}/b{i}/relu"), sum)?;
        cur = gb.batch_norm(&format!("{prefix}/b{i}/bn"), act)?;
        cin = f;
    }
    Ok(cur)
}

/// A segmentation network plus the config that shaped it.
#[derive(Debug, Clone)]
pub struct SegModel {
    pub graph: Graph,
    pub cfg: SegNetConfig,
}

/// Builds the network described by `cfg`, weights drawn from `seed`.
pub fn build_segnet(cfg: &SegNetConfig, seed: u64) -> Result<SegModel> {
    cfg.validate()?;
    let graph = match cfg.arch {
        SegArch::MultiResUnet => build_multires_unet_graph(cfg, seed)?,
        SegArch::Unet => build_unet_graph(cfg, seed)?,
    };
    Ok(SegModel { graph, cfg: *cfg })
}

fn build_multires_unet_graph(cfg: &SegNetConfig, seed: u64) -> Result<Graph> {
    let (h, w, c) = cfg.input_shape;
    let mut rng = substream(seed, "init", 0);
    let mut gb = GraphBuilder::new((c, h, w));
    let mut cur = gb.input();
    let mut cur_c = c;
    let mut skips = Vec::new();
    for k in 0..cfg.depth {
        let spec = MultiResBlockSpec::from_budget(cur_c, cfg.base_w << k)?;
        let block = build_multires_block(&mut gb, &format!("enc{k}"), cur, &spec, &mut rng)?;
        let path = ResPathSpec { filters: cfg.respath_base << k, length: cfg.depth - k };
        let skip = build_res_path(&mut gb, &format!("skip{k}"), block, &path, spec.out_channels(), &mut rng)?;
        skips.push((skip, path.filters));
        let pool = gb.max_pool(&format!("enc{k}/pool"), block, 2, 2)?;
        cur = gb.dropout(&format!("enc{k}/drop"), pool, cfg.dropout_rate)?;
        cur_c = spec.out_channels();
    }
    let bridge_spec = MultiResBlockSpec::from_budget(cur_c, cfg.base_w << cfg.depth)?;
    cur = build_multires_block(&mut gb, "bridge", cur, &bridge_spec, &mut rng)?;
    cur_c = bridge_spec.out_channels();
    for k in (0..cfg.depth).rev() {
        let up_c = cur_c / 2;
        let up = gb.conv_t(
            &format!("dec{k}/up"),
            cur,
            init::conv_transpose2d(&mut rng, cur_c, up_c, 2, 2),
        )?;
        let dropped = gb.dropout(&format!("dec{k}/drop"), up, cfg.dropout_rate)?;
        let (skip, skip_c) = skips[k];
        let cat = gb.concat(&format!("dec{k}/skip_cat"), &[dropped, skip])?;
        let spec = MultiResBlockSpec::from_budget(up_c + skip_c, cfg.base_w << k)?;
        cur = build_multires_block(&mut gb, &format!("dec{k}"), cat, &spec, &mut rng)?;
        cur_c = spec.out_channels();
    }
    let head = gb.conv("head/conv", cur, init::conv2d(&mut rng, 1, cur_c, 1, 1, 0))?;
    let out = gb.sigmoid("head/sigmoid", head)?;
    Ok(gb.finish(out))
}

/// Plain U-Net on the same harness: two-conv stages, raw skips, no res paths.
fn build_unet_graph(cfg: &SegNetConfig, seed: u64) -> Result<Graph> {
    let (h, w, c) = cfg.input_shape;
    let mut rng = substream(seed, "init", 0);
    let mut gb = GraphBuilder::new((c, h, w));
    let double_conv = |gb: &mut GraphBuilder, prefix: &str, x: NodeId, cin: usize, cout: usize, rng: &mut ChaCha8Rng| -> Result<NodeId> {
        let c1 = gb.conv(&format!("{prefix}/c1"), x, init::conv2d(rng, cout, cin, 3, 1, 1))?;
        let b1 = gb.batch_norm(&format!("{prefix}/c1_bn"), c1)?;
        let r1 = gb.relu(&format!("{prefix}/c1_relu"), b1)?;
        let c2 = gb.conv(&format!("{prefix}/c2"), r1, init::conv2d(rng, cout, cout, 3, 1, 1))?;
        let b2 = gb.batch_norm(&format!("{prefix}/c2_bn"), c2)?;
        gb.relu(&format!("{prefix}/c2_relu"), b2)
    };
    let mut cur = gb.input();
    let mut cur_c = c;
    let mut skips = Vec::new();
    for k in 0..cfg.depth {
        let f = cfg.base_w << k;
        let block = double_conv(&mut gb, &format!("enc{k}"), cur, cur_c, f, &mut rng)?;
        skips.push((block, f));
        let pool = gb.max_pool(&format!("enc{k}/pool"), block, 2, 2)?;
        cur = gb.dropout(&format!("enc{k}/drop"), pool, cfg.dropout_rate)?;
        cur_c = f;
    }
    let bridge_f = cfg.base_w << cfg.depth;
    cur = double_conv(&mut gb, "bridge", cur, cur_c, bridge_f, &mut rng)?;
    cur_c = bridge_f;
    for k in (0..cfg.depth).rev() {
        let up_c = cur_c / 2;
        let up = gb.conv_t(
            &format!("dec{k}/up"),
            cur,
            init::conv_transpose2d(&mut rng, cur_c, up_c, 2, 2),
        )?;
        let dropped = gb.dropout(&format!("dec{k}/drop"), up, cfg.dropout_rate)?;
        let (skip, skip_c) = skips[k];
        let cat = gb.concat(&format!("dec{k}/skip_cat"), &[dropped, skip])?;
        cur = double_conv(&mut gb, &format!("dec{k}"), cat, up_c + skip_c, cfg.base_w << k, &mut rng)?;
        cur_c = cfg.base_w << k;
    }
    let head = gb.conv("head/conv", cur, init::conv2d(&mut rng, 1, cur_c, 1, 1, 0))?;
    let out = gb.sigmoid("head/sigmoid", head)?;
    Ok(gb.finish(out))
}

fn image_to_input(model: &SegModel, img: &Image) -> Result<Array4<f64>> {
    crate::data::image_to_net_input(img, model.cfg.input_shape)
}

/// One forward pass returning the HxW foreground probability map.
///
/// `stochastic` keeps dropout live (MC sample); batch norm always uses its
/// running statistics at inference.
pub fn seg_forward(model: &SegModel, img: &Image, stochastic: bool, seed: u64) -> Result<Array2<f64>> {
    let x = image_to_input(model, img)?;
    let acts = if stochastic {
        let mut rng = substream(seed, "dropout", 0);
        model.graph.forward(&x, &mut Phase::McDropout { rng: &mut rng })?
    } else {
        model.graph.forward(&x, &mut Phase::Inference)?
    };
    let out = acts.output(model.graph.output_id());
    let (h, w, _) = model.cfg.input_shape;
    let mut map = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            map[[i, j]] = out[[0, 0, i, j]];
        }
    }
    Ok(map)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_dice: f64,
    pub val_jaccard: f64,
}

struct SegItem {
    x: Array4<f64>,
    y: Array4<f64>,
    truth: BinaryMask,
}

fn load_seg_items(manifest: &DatasetManifest, model: &SegModel) -> Result<Vec<SegItem>> {
    if manifest.len() == 0 {
        return Err(Error::Dataset("segmentation manifest is empty".into()));
    }
    let (h, w, _) = model.cfg.input_shape;
    let mut items = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let raw = crate::data::load_image(&entry.image)?;
        let img = resize_bicubic(&raw, h, w)?;
        let mask_path = entry.mask.as_ref().ok_or_else(|| {
            Error::Dataset(format!("entry {} has no mask for segmentation training", entry.name))
        })?;
        let mask = resize_mask_nearest(&crate::data::load_mask(mask_path)?, h, w);
        let mut y = Array4::zeros((1, 1, h, w));
        for i in 0..h {
            for j in 0..w {
                y[[0, 0, i, j]] = if mask.data()[[i, j]] { 1.0 } else { 0.0 };
            }
        }
        items.push(SegItem { x: image_to_input(model, &img)?, y, truth: mask });
    }
    Ok(items)
}

fn stack_batch(items: &[&SegItem]) -> (Array4<f64>, Array4<f64>) {
    let (_, c, h, w) = items[0].x.dim();
    let b = items.len();
    let mut x = Array4::zeros((b, c, h, w));
    let mut y = Array4::zeros((b, 1, h, w));
    for (n, it) in items.iter().enumerate() {
        x.slice_mut(ndarray::s![n..n + 1, .., .., ..]).assign(&it.x);
        y.slice_mut(ndarray::s![n..n + 1, .., .., ..]).assign(&it.y);
    }
    (x, y)
}

fn eval_seg(model: &SegModel, items: &[SegItem]) -> Result<(f64, f64)> {
    let mut di_sum = 0.0;
    let mut ji_sum = 0.0;
    for it in items {
        let acts = model.graph.forward(&it.x, &mut Phase::Inference)?;
        let out = acts.output(model.graph.output_id());
        let (_, _, h, w) = out.dim();
        let mut map = Array2::zeros((h, w));
        for i in 0..h {
            for j in 0..w {
                map[[i, j]] = out[[0, 0, i, j]];
            }
        }
        let pred = binarize(&map, 0.5)?;
        di_sum += dice(&pred, &it.truth)?;
        ji_sum += jaccard(&pred, &it.truth)?;
    }
    let n = items.len() as f64;
    Ok((di_sum / n, ji_sum / n))
}

/// Trains with Adam on per-pixel binary cross-entropy.
///
/// Returns the model restored to its best-validation-Dice weights plus the
/// full per-epoch history. A non-finite loss aborts with the failing epoch.
pub fn train_segnet(
    mut model: SegModel,
    train: &DatasetManifest,
    val: &DatasetManifest,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(SegModel, Vec<SegEpoch>)> {
    cfg.validate()?;
    if cfg.loss != LossKind::Bce {
        return Err(Error::Unsupported("segmentation training uses BCE loss".into()));
    }
    let train_items = load_seg_items(train, &model)?;
    let val_items = load_seg_items(val, &model)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<crate::util::TensorBlob>)> = None;
    let n_batches = train_items.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        shuffle(&mut order, &mut substream(seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&SegItem> = chunk.iter().map(|&i| &train_items[i]).collect();
            let (x, y) = stack_batch(&batch);
            let mut rng = substream(seed, "train", (epoch * n_batches + bi) as u64);
            let acts = model.graph.forward(&x, &mut Phase::Train { rng: &mut rng })?;
            let out = acts.output(model.graph.output_id());
            let (loss, grad) = bce(out, &y);
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
        let train_loss = loss_sum / train_items.len() as f64;
        let (val_dice, val_jaccard) = eval_seg(&model, &val_items)?;
        history.push(SegEpoch { epoch, train_loss, val_dice, val_jaccard });
        if best.as_ref().map_or(true, |(d, _)| val_dice > *d) {
            best = Some((val_dice, model.graph.export_tensors()));
        }
    }
    if let Some((_, blobs)) = best {
        model.graph.import_tensors(&blobs)?;
    }
    Ok((model, history))
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Writes `config.txt` + `weights.bin` describing this model.
pub fn save_seg_checkpoint(dir: &Path, model: &SegModel) -> Result<()> {
    let (h, w, c) = model.cfg.input_shape;
    let mut cfg = BTreeMap::new();
    cfg.insert("kind".into(), "segnet".into());
    cfg.insert("arch".into(), model.cfg.arch.as_str().into());
    cfg.insert("input_h".into(), h.to_string());
    cfg.insert("input_w".into(), w.to_string());
    cfg.insert("input_c".into(), c.to_string());
    cfg.insert("base_w".into(), model.cfg.base_w.to_string());
    cfg.insert("respath_base".into(), model.cfg.respath_base.to_string());
    cfg.insert("depth".into(), model.cfg.depth.to_string());
    cfg.insert("dropout_rate".into(), model.cfg.dropout_rate.to_string());
    save_checkpoint(dir, &cfg, &model.graph)
}

/// Rebuilds the architecture named in `config.txt` and loads its weights.
pub fn load_seg_checkpoint(dir: &Path) -> Result<SegModel> {
    let cfg = load_config(dir)?;
    if require(&cfg, "kind")? != "segnet" {
        return Err(Error::Checkpoint(format!(
            "checkpoint at {} is not a segmentation model",
            dir.display()
        )));
    }
    let net = SegNetConfig {
        input_shape: (
            require_parsed(&cfg, "input_h")?,
            require_parsed(&cfg, "input_w")?,
            require_parsed(&cfg, "input_c")?,
        ),
        base_w: require_parsed(&cfg, "base_w")?,
        respath_base: require_parsed(&cfg, "respath_base")?,
        depth: require_parsed(&cfg, "depth")?,
        dropout_rate: require_parsed(&cfg, "dropout_rate")?,
        arch: SegArch::parse(require(&cfg, "arch")?)?,
    };
    let mut model = build_segnet(&net, 0)?;
    load_weights(dir, &mut model.graph)?;
    Ok(model)
}
