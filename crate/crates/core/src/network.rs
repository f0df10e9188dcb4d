//! Sequential layer graph with residual markers.
//!
//! A residual block is written inline as `ResidualBegin, <branch layers>,
//! ResidualAdd`: the add layer sums the branch output with the activation
//! that entered the matching begin marker. Blocks may nest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, BatchNorm2d, BatchNormCache, Conv2d, Dense, MaxPool2d};
use crate::tensor::{Shape, Tensor4};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Relu,
    BatchNorm(BatchNorm2d),
    Flatten,
    Dense(Dense),
    Softmax,
    ResidualBegin,
    ResidualAdd,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Relu => "relu",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
            Layer::ResidualBegin => "residual-begin",
            Layer::ResidualAdd => "residual-add",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.param_count(),
            Layer::BatchNorm(b) => b.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-item input dimensions (channels, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputDims {
    pub fn shape(&self, n: usize) -> Shape {
        Shape::new(n, self.channels, self.height, self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input: InputDims,
    /// Subtracted from every input value before the first layer.
    #[serde(default)]
    input_center: f64,
    layers: Vec<Layer>,
    #[serde(skip)]
    residual_source: Vec<Option<usize>>,
}

/// Everything a forward pass produced. `activations[0]` is the centered input and
/// `activations[i + 1]` the output of layer `i`; a trailing softmax layer
/// is not materialized there (see `probabilities`).
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub mode: Mode,
    pub activations: Vec<Tensor4>,
    pub logits: Tensor4,
    pub probabilities: Vec<Vec<f64>>,
    pool_argmax: Vec<Option<Vec<usize>>>,
    batchnorm: Vec<Option<BatchNormCache>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.logits.shape().n
    }

    /// Output of layer `layer`.
    pub fn output(&self, layer: usize) -> Option<&Tensor4> {
        self.activations.get(layer + 1)
    }
}

/// Gradients of one parameterized layer, in the same order as
/// [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub tensors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct BackwardOptions {
    pub param_grads: bool,
    pub input_grad: bool,
    /// Stop once the gradient w.r.t. this layer's output is known and
    /// return it in [`Backward::at_layer`].
    pub stop_at: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Backward {
    pub layers: Vec<Option<LayerGrads>>,
    pub input: Option<Tensor4>,
    pub at_layer: Option<Tensor4>,
}

impl Backward {
    /// Flattened gradient slices in parameter order.
    pub fn flat(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| g.tensors.iter().map(Vec::as_slice))
            .collect()
    }
}

impl Network {
    pub fn new(input: InputDims, layers: Vec<Layer>) -> Result<Self> {
        let mut net = Network {
            input,
            input_center: 0.0,
            layers,
            residual_source: Vec::new(),
        };
        net.link()?;
        Ok(net)
    }

    /// Pairs residual markers and checks that shapes flow end to end.
    fn link(&mut self) -> Result<()> {
        let mut stack = Vec::new();
        let mut source = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::ResidualBegin => stack.push(i),
                Layer::ResidualAdd => {
                    source[i] = Some(stack.pop().ok_or_else(|| {
                        Error::InvalidArgument(format!("residual-add at layer {i} has no matching begin"))
                    })?);
                }
                Layer::Softmax if i + 1 != self.layers.len() => {
                    return Err(Error::InvalidArgument("softmax may only be the final layer".into()));
                }
                _ => {}
            }
        }
        if let Some(open) = stack.pop() {
            return Err(Error::InvalidArgument(format!("residual-begin at layer {open} is never closed")));
        }
        self.residual_source = source;
        self.layer_shapes(1)?;
        Ok(())
    }

    pub fn input_dims(&self) -> InputDims {
        self.input
    }

    pub fn input_center(&self) -> f64 {
        self.input_center
    }

    pub fn with_input_center(mut self, center: f64) -> Self {
        self.input_center = center;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Output shape of every layer for a batch of `n`.
    pub fn layer_shapes(&self, n: usize) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input.shape(n);
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Conv2d(c) => c.output_shape(cur)?,
                Layer::MaxPool2d(p) => p.output_shape(cur)?,
                Layer::BatchNorm(b) => b.output_shape(cur)?,
                Layer::Dense(d) => d.output_shape(cur)?,
                Layer::Flatten => Shape::new(n, cur.item_len(), 1, 1),
                Layer::Relu | Layer::Softmax | Layer::ResidualBegin => cur,
                Layer::ResidualAdd => {
                    let src = self.residual_source[i].expect("linked");
                    let skip = shapes[src];
                    if skip != cur {
                        return Err(Error::shape(
                            "residual-add",
                            format!("layer {i}: branch {cur} vs skip {skip}"),
                        ));
                    }
                    cur
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    /// Number of output classes (width of the logits).
    pub fn classes(&self) -> usize {
        self.layer_shapes(1)
            .ok()
            .and_then(|s| s.last().map(|s| s.item_len()))
            .unwrap_or(0)
    }

    /// Indices of convolution layers, in order.
    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Conv2d(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// The layer whose output is taken as the feature map of conv layer
    /// `conv`: the conv itself followed by any directly attached batchnorm
    /// and ReLU layers.
    pub fn feature_tap(&self, conv: usize) -> Result<usize> {
        if !matches!(self.layers.get(conv), Some(Layer::Conv2d(_))) {
            return Err(Error::NotConvolutional(conv));
        }
        let mut tap = conv;
        while matches!(self.layers.get(tap + 1), Some(Layer::BatchNorm(_) | Layer::Relu)) {
            tap += 1;
        }
        Ok(tap)
    }

    fn logit_layers(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Softmax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    pub fn forward(&self, input: &Tensor4, mode: Mode) -> Result<ForwardCache> {
        let want = self.input.shape(input.shape().n);
        if input.shape() != want {
            return Err(Error::shape("network", format!("input {} but network expects {want}", input.shape())));
        }
        let count = self.logit_layers();
        let mut activations = Vec::with_capacity(count + 1);
        let mut pool_argmax = vec![None; count];
        let mut batchnorm = vec![None; count];
        activations.push(if self.input_center == 0.0 {
            input.clone()
        } else {
            let c = self.input_center;
            input.map(|v| v - c)
        });
        for i in 0..count {
            let x = &activations[i];
            let y = match &self.layers[i] {
                Layer::Conv2d(c) => c.forward(x)?,
                Layer::MaxPool2d(p) => {
                    let out = p.forward(x)?;
                    pool_argmax[i] = Some(out.argmax);
                    out.output
                }
                Layer::Relu => nn::relu(x),
                Layer::BatchNorm(b) => {
                    let (y, cache) = match mode {
                        Mode::Train => b.forward_train(x)?,
                        Mode::Eval => b.forward_eval(x, i)?,
                    };
                    batchnorm[i] = Some(cache);
                    y
                }
                Layer::Flatten => {
                    let s = x.shape();
                    x.clone().reshape(Shape::new(s.n, s.item_len(), 1, 1))?
                }
                Layer::Dense(d) => d.forward(x)?,
                Layer::ResidualBegin => x.clone(),
                Layer::ResidualAdd => {
                    let src = self.residual_source[i].expect("linked");
                    let mut y = x.clone();
                    y.add_assign(&activations[src + 1])?;
                    y
                }
                Layer::Softmax => unreachable!("softmax is excluded from logit layers"),
            };
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("output of layer {i} ({})", self.layers[i].name())));
            }
            activations.push(y);
        }
        let logits = activations.last().expect("input present").clone();
        let s = logits.shape();
        let logits = logits.reshape(Shape::new(s.n, s.item_len(), 1, 1))?;
        let probabilities = (0..s.n)
            .map(|n| nn::softmax(logits.item(n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardCache {
            mode,
            activations,
            logits,
            probabilities,
            pool_argmax,
            batchnorm,
        })
    }

    /// Backpropagates `grad_logits` (gradient of some scalar w.r.t. the
    /// logits) through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor4, opts: &BackwardOptions) -> Result<Backward> {
        let count = self.logit_layers();
        if grad_logits.shape() != cache.logits.shape() {
            return Err(Error::shape(
                "network_backward",
                format!("grad {} vs logits {}", grad_logits.shape(), cache.logits.shape()),
            ));
        }
        if let Some(stop) = opts.stop_at {
            if stop >= count {
                return Err(Error::InvalidArgument(format!("stop layer {stop} is past the logits")));
            }
        }
        let mut grads: Vec<Option<LayerGrads>> = vec![None; self.layers.len()];
        let mut pending_skip: BTreeMap<usize, Tensor4> = BTreeMap::new();
        let out_shape = cache.activations[count].shape();
        let mut g = grad_logits.clone().reshape(out_shape)?;

        for i in (0..count).rev() {
            if let Some(skip) = pending_skip.remove(&i) {
                g.add_assign(&skip)?;
            }
            if opts.stop_at == Some(i) {
                return Ok(Backward {
                    layers: grads,
                    input: None,
                    at_layer: Some(g),
                });
            }
            let x = &cache.activations[i];
            let need_input = i > 0 || opts.input_grad;
            let next = match &self.layers[i] {
                Layer::Conv2d(c) => {
                    let cg = c.backward(x, &g, need_input)?;
                    if opts.param_grads {
                        grads[i] = Some(LayerGrads {
                            tensors: vec![cg.weight, cg.bias],
                        });
                    }
                    cg.input
                }
                Layer::Dense(d) => {
                    let dg = d.backward(x, &g, need_input)?;
                    if opts.param_grads {
                        grads[i] = Some(LayerGrads {
                            tensors: vec![dg.weight, dg.bias],
                        });
                    }
                    dg.input
                }
                Layer::BatchNorm(b) => {
                    let bc = cache.batchnorm[i].as_ref().ok_or(Error::MissingCache(i))?;
                    let bg = b.backward(bc, &g, need_input)?;
                    if opts.param_grads {
                        grads[i] = Some(LayerGrads {
                            tensors: vec![bg.gamma, bg.beta],
                        });
                    }
                    bg.input
                }
                Layer::MaxPool2d(p) => {
                    let argmax = cache.pool_argmax[i].as_ref().ok_or(Error::MissingCache(i))?;
                    Some(p.backward(x.shape(), argmax, &g)?)
                }
                Layer::Relu => Some(nn::relu_backward(x, &g)?),
                Layer::Flatten => Some(g.reshape(x.shape())?),
                Layer::ResidualBegin => Some(g),
                Layer::ResidualAdd => {
                    // The skip tensor is the output of the begin marker; its
                    // gradient joins the branch gradient when the reverse
                    // sweep reaches that marker.
                    let src = self.residual_source[i].expect("linked");
                    let slot = pending_skip.entry(src).or_insert_with(|| Tensor4::zeros(g.shape()));
                    slot.add_assign(&g)?;
                    Some(g)
                }
                Layer::Softmax => unreachable!(),
            };
            match next {
                Some(n) => g = n,
                None => {
                    return Ok(Backward {
                        layers: grads,
                        input: None,
                        at_layer: None,
                    })
                }
            }
        }
        Ok(Backward {
            layers: grads,
            input: opts.input_grad.then_some(g),
            at_layer: None,
        })
    }

    /// Mean cross-entropy over the batch, plus gradients of that mean.
    pub fn loss_and_grads(&self, input: &Tensor4, labels: &[usize], mode: Mode) -> Result<(f64, Backward, ForwardCache)> {
        let cache = self.forward(input, mode)?;
        let n = cache.batch_size();
        if labels.len() != n {
            return Err(Error::shape("loss", format!("{} labels for batch of {n}", labels.len())));
        }
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(cache.logits.len());
        for (i, &label) in labels.iter().enumerate() {
            loss += nn::cross_entropy_from_logits(cache.logits.item(i), label)?;
            let g = nn::softmax_cross_entropy_grad(&cache.probabilities[i], label)?;
            grad.extend(g.into_iter().map(|v| v / n as f64));
        }
        let grad = Tensor4::from_vec(cache.logits.shape(), grad)?;
        let back = self.backward(
            &cache,
            &grad,
            &BackwardOptions {
                param_grads: true,
                ..Default::default()
            },
        )?;
        Ok((loss / n as f64, back, cache))
    }

    /// Parameter tensors in deterministic layer order (weights before biases,
    /// gamma before beta).
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// One SGD update over every parameter tensor.
    pub fn apply_sgd(&mut self, grads: &Backward, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("sgd", "gradient set does not match network"));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            let params = layer.params_mut();
            match g {
                Some(g) if g.tensors.len() == params.len() => {
                    for (p, t) in params.into_iter().zip(&g.tensors) {
                        nn::sgd_step(p, t, learning_rate)?;
                    }
                }
                None if params.is_empty() => {}
                _ => return Err(Error::shape("sgd", format!("missing gradients for {}", layer.name()))),
            }
        }
        Ok(())
    }

    /// Folds training-batch statistics into every batchnorm layer.
    pub fn commit_batch_stats(&mut self, cache: &ForwardCache) {
        for (layer, bc) in self.layers.iter_mut().zip(&cache.batchnorm) {
            if let (Layer::BatchNorm(b), Some(bc)) = (layer, bc) {
                b.commit(bc);
            }
        }
    }

    /// True when no batchnorm layer still lacks running statistics.
    pub fn ready_for_eval(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::BatchNorm(b) => b.is_initialized(),
            _ => true,
        })
    }
}

pub const CHECKPOINT_FORMAT: &str = "histoxai-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container for a network plus free-form metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub metadata: BTreeMap<String, String>,
    pub network: Network,
}

impl Checkpoint {
    pub fn new(network: Network, metadata: BTreeMap<String, String>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            metadata,
            network,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        ckpt.network.link()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(c: usize, h: usize, w: usize) -> InputDims {
        InputDims {
            channels: c,
            height: h,
            width: w,
        }
    }

    fn tiny() -> Network {
        let mut conv = Conv2d::new(1, 2, 3, 1, 1);
        for (i, w) in conv.weight.iter_mut().enumerate() {
            *w = (i as f64 - 8.0) / 9.0;
        }
        let mut dense = Dense::new(8, 2);
        for (i, w) in dense.weight.iter_mut().enumerate() {
            *w = ((i * 5 % 7) as f64 - 3.0) / 4.0;
        }
        Network::new(
            dims(1, 4, 4),
            vec![
                Layer::Conv2d(conv),
                Layer::Relu,
                Layer::MaxPool2d(MaxPool2d::default()),
                Layer::Flatten,
                Layer::Dense(dense),
                Layer::Softmax,
            ],
        )
        .unwrap()
    }

    #[test]
    fn unbalanced_residual_rejected() {
        let r = Network::new(dims(1, 2, 2), vec![Layer::Relu, Layer::ResidualAdd]);
        assert!(r.is_err());
        let r = Network::new(dims(1, 2, 2), vec![Layer::ResidualBegin, Layer::Relu]);
        assert!(r.is_err());
        let r = Network::new(dims(1, 2, 2), vec![Layer::Softmax, Layer::Relu]);
        assert!(r.is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = tiny();
        let x = Tensor4::from_vec(Shape::new(2, 1, 4, 4), (0..32).map(|i| (i as f64).sin()).collect()).unwrap();
        let cache = net.forward(&x, Mode::Eval).unwrap();
        for p in &cache.probabilities {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(net.classes(), 2);
    }

    #[test]
    fn residual_skip_gradient_is_added() {
        // y = relu(x) + relu(x) through a begin/add pair with an identity
        // branch of one relu: d(sum y)/dx = 2 where x > 0.
        let net = Network::new(
            dims(1, 1, 2),
            vec![Layer::Relu, Layer::ResidualBegin, Layer::Relu, Layer::ResidualAdd, Layer::Flatten],
        )
        .unwrap();
        let x = Tensor4::from_vec(Shape::new(1, 1, 1, 2), vec![1.5, -0.5]).unwrap();
        let cache = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(cache.logits.data(), &[3.0, 0.0]);
        let g = Tensor4::filled(cache.logits.shape(), 1.0);
        let back = net
            .backward(
                &cache,
                &g,
                &BackwardOptions {
                    input_grad: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(back.input.unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut net = tiny();
        if let Layer::Conv2d(c) = &mut net.layers_mut()[0] {
            c.weight[0] = 0.1 + 0.2;
            c.bias[1] = std::f64::consts::PI / 7.0;
        }
        let ckpt = Checkpoint::new(net.clone(), BTreeMap::from([("family".into(), "test".into())]));
        let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        let bits = |n: &Network| n.params().concat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.network), bits(&net));
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        let ckpt = Checkpoint::new(tiny(), BTreeMap::new());
        let text = ckpt.to_json().unwrap().replace(CHECKPOINT_FORMAT, "other");
        assert!(Checkpoint::from_json(&text).is_err());
    }
}
