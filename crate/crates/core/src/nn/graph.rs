//! Static computation graph with named nodes.
//!
//! Construction order is topological by design: an op can only consume node
//! ids that already exist. Forward passes are pure; batch norm statistics
//! and dropout draws are surfaced through [`Activations`] and the caller's
//! RNG respectively.

use std::collections::BTreeMap;

use ndarray::{Array1, Array4, ArrayD, Axis};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    avgpool_backward, avgpool_forward, dropout_mask, global_avg_pool_backward,
    global_avg_pool_forward, maxpool_backward, maxpool_forward, relu_forward, sigmoid_forward,
    softmax_forward, BatchNorm2d, BnCache, Conv2d, ConvTranspose2d, Dense, Tensor,
};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Execution mode of a forward pass.
pub enum Phase<'a> {
    /// Batch-statistic norm, active dropout. Used by training steps.
    Train { rng: &'a mut ChaCha8Rng },
    /// Running-statistic norm, dropout disabled.
    Inference,
    /// Running-statistic norm, dropout active: a Monte Carlo sample.
    McDropout { rng: &'a mut ChaCha8Rng },
}

impl Phase<'_> {
    fn dropout_rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match self {
            Phase::Train { rng } => Some(rng),
            Phase::McDropout { rng } => Some(rng),
            Phase::Inference => None,
        }
    }

    fn batch_norm_stats(&self) -> bool {
        matches!(self, Phase::Train { .. })
    }
}

/// Gradient propagation rule for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackpropMode {
    Standard,
    /// Guided backpropagation: ReLU passes only positive gradients at
    /// positions where its input was positive.
    Guided,
}

/// Square pooling window. `pad` applies to max pooling only.
#[derive(Debug, Clone, Copy)]
pub struct PoolSpec {
    pub k: usize,
    pub s: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub enum Op {
    Input,
    Conv(Conv2d),
    ConvT(ConvTranspose2d),
    BatchNorm(BatchNorm2d),
    Relu,
    Sigmoid,
    Softmax,
    MaxPool(PoolSpec),
    AvgPool(PoolSpec),
    GlobalAvgPool,
    Dropout(f64),
    Concat,
    Add,
    Dense(Dense),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv(_) => "conv",
            Op::ConvT(_) => "conv_transpose",
            Op::BatchNorm(_) => "batch_norm",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Softmax => "softmax",
            Op::MaxPool(_) => "max_pool",
            Op::AvgPool(_) => "avg_pool",
            Op::GlobalAvgPool => "global_avg_pool",
            Op::Dropout(_) => "dropout",
            Op::Concat => "concat",
            Op::Add => "add",
            Op::Dense(_) => "dense",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    /// Static activation shape `(c, h, w)` for batch size 1.
    pub shape: (usize, usize, usize),
}

/// Per-node state captured by a forward pass.
enum Cache {
    None,
    MaxPool(ndarray::Array4<usize>),
    Dropout(Tensor),
    BatchNorm(BnCache),
}

/// Outputs and caches of one forward pass.
pub struct Activations {
    outs: Vec<Tensor>,
    caches: Vec<Cache>,
    bn_stats: Vec<Option<(Array1<f64>, Array1<f64>)>>,
}

impl Activations {
    pub fn output(&self, id: NodeId) -> &Tensor {
        &self.outs[id.0]
    }
}

/// Gradients produced by a backward pass.
pub struct Gradients {
    wrt_nodes: Vec<Option<Tensor>>,
    /// Keyed by `"node_name/param_name"`.
    pub wrt_params: BTreeMap<String, ArrayD<f64>>,
}

impl Gradients {
    pub fn wrt_node(&self, id: NodeId) -> Option<&Tensor> {
        self.wrt_nodes[id.0].as_ref()
    }
}

/// Incrementally builds a validated [`Graph`].
pub struct GraphBuilder {
    nodes: Vec<Node>,
    input: NodeId,
}

impl GraphBuilder {
    /// Starts a graph taking `(c, h, w)` input images.
    pub fn new(input_shape: (usize, usize, usize)) -> Self {
        let node = Node {
            name: "input".into(),
            op: Op::Input,
            inputs: vec![],
            shape: input_shape,
        };
        GraphBuilder { nodes: vec![node], input: NodeId(0) }
    }

    pub fn input(&self) -> NodeId {
        self.input
    }

    pub fn shape_of(&self, id: NodeId) -> (usize, usize, usize) {
        self.nodes[id.0].shape
    }

    fn push(&mut self, name: &str, op: Op, inputs: Vec<NodeId>) -> Result<NodeId> {
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(Error::Config(format!("duplicate node name {name}")));
        }
        for id in &inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::Config(format!("node {name} references unknown input")));
            }
        }
        let shape = self.infer_shape(name, &op, &inputs)?;
        self.nodes.push(Node { name: name.to_string(), op, inputs, shape });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn infer_shape(&self, name: &str, op: &Op, inputs: &[NodeId]) -> Result<(usize, usize, usize)> {
        let arity = match op {
            Op::Concat | Op::Add => inputs.len().max(2),
            Op::Input => 0,
            _ => 1,
        };
        if matches!(op, Op::Concat | Op::Add) {
            if inputs.len() < 2 {
                return Err(Error::Config(format!("{name}: {} needs 2+ inputs", op.kind())));
            }
        } else if inputs.len() != arity {
            return Err(Error::Config(format!(
                "{name}: {} takes {arity} input(s), got {}",
                op.kind(),
                inputs.len()
            )));
        }
        let shp = |i: usize| self.nodes[inputs[i].0].shape;
        match op {
            Op::Input => unreachable!("input node is created by the builder"),
            Op::Conv(c) => {
                let (ci, h, w) = shp(0);
                if ci != c.in_channels() {
                    return Err(Error::Shape(format!(
                        "{name}: conv expects {} input channels, got {ci}",
                        c.in_channels()
                    )));
                }
                let (oh, ow) = c.out_hw(h, w).map_err(|e| Error::Shape(format!("{name}: {e}")))?;
                Ok((c.out_channels(), oh, ow))
            }
            Op::ConvT(c) => {
                let (ci, h, w) = shp(0);
                if ci != c.in_channels() {
                    return Err(Error::Shape(format!(
                        "{name}: conv transpose expects {} input channels, got {ci}",
                        c.in_channels()
                    )));
                }
                let (oh, ow) = c.out_hw(h, w);
                Ok((c.out_channels(), oh, ow))
            }
            Op::BatchNorm(bn) => {
                let (ci, h, w) = shp(0);
                if ci != bn.gamma.len() {
                    return Err(Error::Shape(format!(
                        "{name}: batch norm sized for {} channels, got {ci}",
                        bn.gamma.len()
                    )));
                }
                Ok((ci, h, w))
            }
            Op::Relu | Op::Sigmoid | Op::Dropout(_) => Ok(shp(0)),
            Op::Softmax => {
                let (ci, h, w) = shp(0);
                if (h, w) != (1, 1) || ci < 2 {
                    return Err(Error::Shape(format!(
                        "{name}: softmax needs (c>=2, 1, 1) activations, got ({ci}, {h}, {w})"
                    )));
                }
                Ok((ci, h, w))
            }
            Op::MaxPool(p) => {
                let (ci, h, w) = shp(0);
                if h + 2 * p.pad < p.k || w + 2 * p.pad < p.k || p.pad >= p.k {
                    return Err(Error::Shape(format!(
                        "{name}: pool window {} incompatible with input {h}x{w} (pad {})",
                        p.k, p.pad
                    )));
                }
                Ok((
                    ci,
                    (h + 2 * p.pad - p.k) / p.s + 1,
                    (w + 2 * p.pad - p.k) / p.s + 1,
                ))
            }
            Op::AvgPool(p) => {
                let (ci, h, w) = shp(0);
                if h < p.k || w < p.k || p.pad != 0 {
                    return Err(Error::Shape(format!(
                        "{name}: avg pool window {} incompatible with input {h}x{w}",
                        p.k
                    )));
                }
                Ok((ci, (h - p.k) / p.s + 1, (w - p.k) / p.s + 1))
            }
            Op::GlobalAvgPool => {
                let (ci, _, _) = shp(0);
                Ok((ci, 1, 1))
            }
            Op::Concat => {
                let (_, h0, w0) = shp(0);
                let mut c_total = 0;
                for i in 0..inputs.len() {
                    let (ci, h, w) = shp(i);
                    if (h, w) != (h0, w0) {
                        return Err(Error::Shape(format!(
                            "{name}: concat inputs disagree spatially ({h}x{w} vs {h0}x{w0})"
                        )));
                    }
                    c_total += ci;
                }
                Ok((c_total, h0, w0))
            }
            Op::Add => {
                let s0 = shp(0);
                for i in 1..inputs.len() {
                    if shp(i) != s0 {
                        return Err(Error::Shape(format!(
                            "{name}: add inputs disagree ({:?} vs {:?})",
                            shp(i),
                            s0
                        )));
                    }
                }
                Ok(s0)
            }
            Op::Dense(d) => {
                let (ci, h, w) = shp(0);
                let inf = d.w.dim().1;
                if ci * h * w != inf {
                    return Err(Error::Shape(format!(
                        "{name}: dense sized for {inf} features, input has {}",
                        ci * h * w
                    )));
                }
                Ok((d.w.dim().0, 1, 1))
            }
        }
    }

    pub fn conv(&mut self, name: &str, x: NodeId, conv: Conv2d) -> Result<NodeId> {
        self.push(name, Op::Conv(conv), vec![x])
    }

    pub fn conv_t(&mut self, name: &str, x: NodeId, ct: ConvTranspose2d) -> Result<NodeId> {
        self.push(name, Op::ConvT(ct), vec![x])
    }

    pub fn batch_norm(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        let (c, _, _) = self.shape_of(x);
        self.push(name, Op::BatchNorm(BatchNorm2d::new(c)), vec![x])
    }

    pub fn relu(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.push(name, Op::Relu, vec![x])
    }

    pub fn sigmoid(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.push(name, Op::Sigmoid, vec![x])
    }

    pub fn softmax(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.push(name, Op::Softmax, vec![x])
    }

    pub fn max_pool(&mut self, name: &str, x: NodeId, k: usize, s: usize) -> Result<NodeId> {
        self.push(name, Op::MaxPool(PoolSpec { k, s, pad: 0 }), vec![x])
    }

    pub fn max_pool_padded(
        &mut self,
        name: &str,
        x: NodeId,
        k: usize,
        s: usize,
        pad: usize,
    ) -> Result<NodeId> {
        self.push(name, Op::MaxPool(PoolSpec { k, s, pad }), vec![x])
    }

    pub fn avg_pool(&mut self, name: &str, x: NodeId, k: usize, s: usize) -> Result<NodeId> {
        self.push(name, Op::AvgPool(PoolSpec { k, s, pad: 0 }), vec![x])
    }

    pub fn global_avg_pool(&mut self, name: &str, x: NodeId) -> Result<NodeId> {
        self.push(name, Op::GlobalAvgPool, vec![x])
    }

    pub fn dropout(&mut self, name: &str, x: NodeId, p: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("{name}: dropout rate {p} outside [0, 1)")));
        }
        self.push(name, Op::Dropout(p), vec![x])
    }

    pub fn concat(&mut self, name: &str, xs: &[NodeId]) -> Result<NodeId> {
        self.push(name, Op::Concat, xs.to_vec())
    }

    pub fn add(&mut self, name: &str, xs: &[NodeId]) -> Result<NodeId> {
        self.push(name, Op::Add, xs.to_vec())
    }

    pub fn dense(&mut self, name: &str, x: NodeId, dense: Dense) -> Result<NodeId> {
        self.push(name, Op::Dense(dense), vec![x])
    }

    /// Finalizes the graph with `output` as the designated output node.
    pub fn finish(self, output: NodeId) -> Graph {
        let input_shape = self.nodes[self.input.0].shape;
        Graph { nodes: self.nodes, input: self.input, output, input_shape }
    }
}

/// A finalized network.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    input: NodeId,
    output: NodeId,
    input_shape: (usize, usize, usize),
}

impl Graph {
    pub fn input_id(&self) -> NodeId {
        self.input
    }

    pub fn output_id(&self) -> NodeId {
        self.output
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        self.nodes[self.output.0].shape
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    /// The last convolution node in construction order, if any.
    pub fn last_conv(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .rposition(|n| matches!(n.op, Op::Conv(_) | Op::ConvT(_)))
            .map(NodeId)
    }

    /// The pre-activation node feeding a terminal sigmoid/softmax, or the
    /// output itself when the head is linear.
    pub fn logits_id(&self) -> NodeId {
        let out = &self.nodes[self.output.0];
        match out.op {
            Op::Sigmoid | Op::Softmax => out.inputs[0],
            _ => self.output,
        }
    }

    pub fn has_relu(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.op, Op::Relu))
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        for n in &self.nodes {
            match &n.op {
                Op::Conv(c) => count += c.w.len() + c.b.len(),
                Op::ConvT(c) => count += c.w.len() + c.b.len(),
                Op::BatchNorm(bn) => count += bn.gamma.len() + bn.beta.len(),
                Op::Dense(d) => count += d.w.len() + d.b.len(),
                _ => {}
            }
        }
        count
    }

    /// Runs the network on a batch, recording every node's activations.
    pub fn forward(&self, x: &Tensor, phase: &mut Phase) -> Result<Activations> {
        let (_, c, h, w) = x.dim();
        if (c, h, w) != self.input_shape {
            return Err(Error::Shape(format!(
                "graph expects input ({:?}), got ({c}, {h}, {w})",
                self.input_shape
            )));
        }
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut caches: Vec<Cache> = Vec::with_capacity(self.nodes.len());
        let mut bn_stats = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let mut stat = None;
            let (out, cache) = match &node.op {
                Op::Input => (x.clone(), Cache::None),
                Op::Conv(c) => (c.forward(&outs[node.inputs[0].0]), Cache::None),
                Op::ConvT(c) => (c.forward(&outs[node.inputs[0].0]), Cache::None),
                Op::BatchNorm(bn) => {
                    let xin = &outs[node.inputs[0].0];
                    if phase.batch_norm_stats() {
                        let (y, cache, stats) = bn.forward_train(xin);
                        stat = Some(stats);
                        (y, Cache::BatchNorm(cache))
                    } else {
                        let (y, cache) = bn.forward_infer(xin);
                        (y, Cache::BatchNorm(cache))
                    }
                }
                Op::Relu => (relu_forward(&outs[node.inputs[0].0]), Cache::None),
                Op::Sigmoid => (sigmoid_forward(&outs[node.inputs[0].0]), Cache::None),
                Op::Softmax => (softmax_forward(&outs[node.inputs[0].0]), Cache::None),
                Op::MaxPool(p) => {
                    let (y, arg) = maxpool_forward(&outs[node.inputs[0].0], p.k, p.s, p.pad);
                    (y, Cache::MaxPool(arg))
                }
                Op::AvgPool(p) => (avgpool_forward(&outs[node.inputs[0].0], p.k, p.s), Cache::None),
                Op::GlobalAvgPool => {
                    (global_avg_pool_forward(&outs[node.inputs[0].0]), Cache::None)
                }
                Op::Dropout(p) => {
                    let xin = &outs[node.inputs[0].0];
                    match phase.dropout_rng() {
                        Some(rng) if *p > 0.0 => {
                            let mask = dropout_mask(xin.dim(), *p, rng);
                            (xin * &mask, Cache::Dropout(mask))
                        }
                        _ => (xin.clone(), Cache::None),
                    }
                }
                Op::Concat => {
                    let views: Vec<_> =
                        node.inputs.iter().map(|id| outs[id.0].view()).collect();
                    (ndarray::concatenate(Axis(1), &views).expect("validated at build"), Cache::None)
                }
                Op::Add => {
                    let mut acc = outs[node.inputs[0].0].clone();
                    for id in &node.inputs[1..] {
                        acc = acc + &outs[id.0];
                    }
                    (acc, Cache::None)
                }
                Op::Dense(d) => (d.forward(&outs[node.inputs[0].0]), Cache::None),
            };
            outs.push(out);
            caches.push(cache);
            bn_stats.push(stat);
        }
        Ok(Activations { outs, caches, bn_stats })
    }

    /// Backpropagates from seed gradients planted at arbitrary nodes.
    ///
    /// Returns gradients with respect to every reached node and parameter.
    pub fn backward(
        &self,
        acts: &Activations,
        seeds: &[(NodeId, Tensor)],
        mode: BackpropMode,
    ) -> Result<Gradients> {
        let mut wrt_nodes: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            if g.dim() != acts.outs[id.0].dim() {
                return Err(Error::Shape(format!(
                    "seed gradient for {} has shape {:?}, node has {:?}",
                    self.nodes[id.0].name,
                    g.dim(),
                    acts.outs[id.0].dim()
                )));
            }
            match &mut wrt_nodes[id.0] {
                Some(acc) => *acc = acc.clone() + g,
                slot => *slot = Some(g.clone()),
            }
        }
        let mut wrt_params = BTreeMap::new();
        for idx in (0..self.nodes.len()).rev() {
            let gy = match wrt_nodes[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            let add_to = |id: NodeId, g: Tensor, slots: &mut Vec<Option<Tensor>>| {
                match &mut slots[id.0] {
                    Some(acc) => *acc = acc.clone() + &g,
                    slot => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Conv(c) => {
                    let xin = &acts.outs[node.inputs[0].0];
                    let (dx, dw, db) = c.backward(xin, &gy);
                    wrt_params.insert(format!("{}/w", node.name), dw.into_dyn());
                    wrt_params.insert(format!("{}/b", node.name), db.into_dyn());
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::ConvT(c) => {
                    let xin = &acts.outs[node.inputs[0].0];
                    let (dx, dw, db) = c.backward(xin, &gy);
                    wrt_params.insert(format!("{}/w", node.name), dw.into_dyn());
                    wrt_params.insert(format!("{}/b", node.name), db.into_dyn());
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::BatchNorm(bn) => {
                    let cache = match &acts.caches[idx] {
                        Cache::BatchNorm(c) => c,
                        _ => unreachable!("batch norm caches its forward"),
                    };
                    let (dx, dgamma, dbeta) = bn.backward(cache, &gy);
                    wrt_params.insert(format!("{}/gamma", node.name), dgamma.into_dyn());
                    wrt_params.insert(format!("{}/beta", node.name), dbeta.into_dyn());
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::Relu => {
                    let xin = &acts.outs[node.inputs[0].0];
                    let dx = match mode {
                        BackpropMode::Standard => ndarray::Zip::from(&gy)
                            .and(xin)
                            .map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 }),
                        BackpropMode::Guided => ndarray::Zip::from(&gy)
                            .and(xin)
                            .map_collect(|&g, &x| if x > 0.0 && g > 0.0 { g } else { 0.0 }),
                    };
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::Sigmoid => {
                    let y = &acts.outs[idx];
                    let dx = ndarray::Zip::from(&gy)
                        .and(y)
                        .map_collect(|&g, &yv| g * yv * (1.0 - yv));
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::Softmax => {
                    let y = &acts.outs[idx];
                    let (n, c, _, _) = y.dim();
                    let mut dx = Array4::zeros(y.dim());
                    for s in 0..n {
                        let mut dot = 0.0;
                        for ch in 0..c {
                            dot += gy[[s, ch, 0, 0]] * y[[s, ch, 0, 0]];
                        }
                        for ch in 0..c {
                            dx[[s, ch, 0, 0]] = y[[s, ch, 0, 0]] * (gy[[s, ch, 0, 0]] - dot);
                        }
                    }
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::MaxPool(_) => {
                    let arg = match &acts.caches[idx] {
                        Cache::MaxPool(a) => a,
                        _ => unreachable!("max pool caches its argmax"),
                    };
                    let (_, _, h, w) = acts.outs[node.inputs[0].0].dim();
                    add_to(node.inputs[0], maxpool_backward(&gy, arg, h, w), &mut wrt_nodes);
                }
                Op::AvgPool(p) => {
                    let (_, _, h, w) = acts.outs[node.inputs[0].0].dim();
                    add_to(node.inputs[0], avgpool_backward(&gy, p.k, p.s, h, w), &mut wrt_nodes);
                }
                Op::GlobalAvgPool => {
                    let (_, _, h, w) = acts.outs[node.inputs[0].0].dim();
                    add_to(node.inputs[0], global_avg_pool_backward(&gy, h, w), &mut wrt_nodes);
                }
                Op::Dropout(_) => {
                    let dx = match &acts.caches[idx] {
                        Cache::Dropout(mask) => &gy * mask,
                        _ => gy.clone(),
                    };
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
                Op::Concat => {
                    let mut offset = 0;
                    for id in &node.inputs {
                        let ci = self.nodes[id.0].shape.0;
                        let part = gy.slice(ndarray::s![.., offset..offset + ci, .., ..]);
                        add_to(*id, part.to_owned(), &mut wrt_nodes);
                        offset += ci;
                    }
                }
                Op::Add => {
                    for id in &node.inputs {
                        add_to(*id, gy.clone(), &mut wrt_nodes);
                    }
                }
                Op::Dense(d) => {
                    let xin = &acts.outs[node.inputs[0].0];
                    let (dx, dw, db) = d.backward(xin, &gy);
                    wrt_params.insert(format!("{}/w", node.name), dw.into_dyn());
                    wrt_params.insert(format!("{}/b", node.name), db.into_dyn());
                    add_to(node.inputs[0], dx, &mut wrt_nodes);
                }
            }
            wrt_nodes[idx] = Some(gy);
        }
        Ok(Gradients { wrt_nodes, wrt_params })
    }

    /// Folds the batch statistics recorded by a training forward pass into
    /// each batch norm layer's running estimates.
    pub fn apply_bn_updates(&mut self, acts: &Activations) {
        for (idx, stat) in acts.bn_stats.iter().enumerate() {
            if let (Op::BatchNorm(bn), Some((mean, var))) =
                (&mut self.nodes[idx].op, stat.as_ref())
            {
                bn.update_running(mean, var);
            }
        }
    }

    /// Trainable parameters plus batch norm running statistics, keyed by
    /// `"node_name/param_name"`, in construction order.
    pub fn export_tensors(&self) -> Vec<crate::util::TensorBlob> {
        let mut blobs = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, data: Vec<f64>| {
            blobs.push(crate::util::TensorBlob { name, shape, data });
        };
        for n in &self.nodes {
            match &n.op {
                Op::Conv(c) => {
                    push(format!("{}/w", n.name), c.w.shape().to_vec(), c.w.iter().copied().collect());
                    push(format!("{}/b", n.name), vec![c.b.len()], c.b.to_vec());
                }
                Op::ConvT(c) => {
                    push(format!("{}/w", n.name), c.w.shape().to_vec(), c.w.iter().copied().collect());
                    push(format!("{}/b", n.name), vec![c.b.len()], c.b.to_vec());
                }
                Op::BatchNorm(bn) => {
                    push(format!("{}/gamma", n.name), vec![bn.gamma.len()], bn.gamma.to_vec());
                    push(format!("{}/beta", n.name), vec![bn.beta.len()], bn.beta.to_vec());
                    push(
                        format!("{}/running_mean", n.name),
                        vec![bn.running_mean.len()],
                        bn.running_mean.to_vec(),
                    );
                    push(
                        format!("{}/running_var", n.name),
                        vec![bn.running_var.len()],
                        bn.running_var.to_vec(),
                    );
                }
                Op::Dense(d) => {
                    push(format!("{}/w", n.name), d.w.shape().to_vec(), d.w.iter().copied().collect());
                    push(format!("{}/b", n.name), vec![d.b.len()], d.b.to_vec());
                }
                _ => {}
            }
        }
        blobs
    }

    /// Restores tensors exported by [`Graph::export_tensors`].
    ///
    /// The blob set must match the graph's tensors exactly, by name and shape.
    pub fn import_tensors(&mut self, blobs: &[crate::util::TensorBlob]) -> Result<()> {
        let expected = self.export_tensors();
        if expected.len() != blobs.len() {
            return Err(Error::Checkpoint(format!(
                "weight count mismatch: graph has {} tensors, file has {}",
                expected.len(),
                blobs.len()
            )));
        }
        let by_name: BTreeMap<&str, &crate::util::TensorBlob> =
            blobs.iter().map(|b| (b.name.as_str(), b)).collect();
        for exp in &expected {
            let got = by_name.get(exp.name.as_str()).ok_or_else(|| {
                Error::Checkpoint(format!("missing tensor {} in weights file", exp.name))
            })?;
            if got.shape != exp.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, graph expects {:?}",
                    exp.name, got.shape, exp.shape
                )));
            }
        }
        for n in &mut self.nodes {
            let name = n.name.clone();
            match &mut n.op {
                Op::Conv(c) => {
                    fill4(&mut c.w, by_name[format!("{name}/w").as_str()]);
                    fill1(&mut c.b, by_name[format!("{name}/b").as_str()]);
                }
                Op::ConvT(c) => {
                    fill4(&mut c.w, by_name[format!("{name}/w").as_str()]);
                    fill1(&mut c.b, by_name[format!("{name}/b").as_str()]);
                }
                Op::BatchNorm(bn) => {
                    fill1(&mut bn.gamma, by_name[format!("{name}/gamma").as_str()]);
                    fill1(&mut bn.beta, by_name[format!("{name}/beta").as_str()]);
                    fill1(&mut bn.running_mean, by_name[format!("{name}/running_mean").as_str()]);
                    fill1(&mut bn.running_var, by_name[format!("{name}/running_var").as_str()]);
                }
                Op::Dense(d) => {
                    fill2(&mut d.w, by_name[format!("{name}/w").as_str()]);
                    fill1(&mut d.b, by_name[format!("{name}/b").as_str()]);
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Mutable views of all trainable parameters, keyed like gradients.
    pub fn trainable_params_mut(&mut self) -> Vec<(String, ndarray::ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        for n in &mut self.nodes {
            let name = n.name.clone();
            match &mut n.op {
                Op::Conv(c) => {
                    out.push((format!("{name}/w"), c.w.view_mut().into_dyn()));
                    out.push((format!("{name}/b"), c.b.view_mut().into_dyn()));
                }
                Op::ConvT(c) => {
                    out.push((format!("{name}/w"), c.w.view_mut().into_dyn()));
                    out.push((format!("{name}/b"), c.b.view_mut().into_dyn()));
                }
                Op::BatchNorm(bn) => {
                    out.push((format!("{name}/gamma"), bn.gamma.view_mut().into_dyn()));
                    out.push((format!("{name}/beta"), bn.beta.view_mut().into_dyn()));
                }
                Op::Dense(d) => {
                    out.push((format!("{name}/w"), d.w.view_mut().into_dyn()));
                    out.push((format!("{name}/b"), d.b.view_mut().into_dyn()));
                }
                _ => {}
            }
        }
        out
    }
}

fn fill4(dst: &mut Array4<f64>, blob: &crate::util::TensorBlob) {
    for (d, s) in dst.iter_mut().zip(blob.data.iter()) {
        *d = *s;
    }
}

fn fill2(dst: &mut ndarray::Array2<f64>, blob: &crate::util::TensorBlob) {
    for (d, s) in dst.iter_mut().zip(blob.data.iter()) {
        *d = *s;
    }
}

fn fill1(dst: &mut Array1<f64>, blob: &crate::util::TensorBlob) {
    for (d, s) in dst.iter_mut().zip(blob.data.iter()) {
        *d = *s;
    }
}
