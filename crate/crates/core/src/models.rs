//! Desk-scale classifier families and their training loop.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::network::{ForwardCache, InputDims, Layer, Mode, Network};
use crate::nn::{init, BatchNorm2d, Conv2d, Dense, MaxPool2d};
use crate::rng;
use crate::tensor::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    PlainCnn,
    MiniResnet,
    MiniVgg,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::PlainCnn, Family::MiniResnet, Family::MiniVgg];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::PlainCnn => "plain-cnn",
            Family::MiniResnet => "mini-resnet",
            Family::MiniVgg => "mini-vgg",
        }
    }

    pub fn default_widths(self) -> Vec<usize> {
        match self {
            Family::PlainCnn => vec![8, 16],
            Family::MiniResnet => vec![8, 16],
            Family::MiniVgg => vec![8, 16, 32, 32],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model family {s:?} (plain-cnn | mini-resnet | mini-vgg)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub family: Family,
    pub input: InputDims,
    pub classes: usize,
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl ArchitectureSpec {
    /// 3x64x64 input, two classes, family-default widths.
    pub fn new(family: Family, seed: u64) -> Self {
        ArchitectureSpec {
            family,
            input: InputDims {
                channels: 3,
                height: 64,
                width: 64,
            },
            classes: 2,
            widths: family.default_widths(),
            seed,
        }
    }

    pub fn with_input(mut self, channels: usize, height: usize, width: usize) -> Self {
        self.input = InputDims { channels, height, width };
        self
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = widths;
        self
    }
}

fn conv(in_c: usize, out_c: usize, k: usize) -> Layer {
    Layer::Conv2d(Conv2d::new(in_c, out_c, k, 1, k / 2))
}

fn pool() -> Layer {
    Layer::MaxPool2d(MaxPool2d::default())
}

fn residual_block(c: usize) -> Vec<Layer> {
    vec![
        Layer::ResidualBegin,
        conv(c, c, 3),
        Layer::BatchNorm(BatchNorm2d::new(c)),
        Layer::Relu,
        conv(c, c, 3),
        Layer::BatchNorm(BatchNorm2d::new(c)),
        Layer::ResidualAdd,
        Layer::Relu,
    ]
}

/// Layer list for a family, before initialization.
fn layout(spec: &ArchitectureSpec) -> Result<(Vec<Layer>, usize, usize)> {
    let w = &spec.widths;
    if w.is_empty() || w.contains(&0) {
        return Err(Error::InvalidArgument("stage widths must be non-empty and positive".into()));
    }
    let mut layers = Vec::new();
    let mut ch = spec.input.channels;
    let pools;
    match spec.family {
        // conv5x5 -> relu -> pool per stage.
        Family::PlainCnn => {
            for &width in w {
                layers.extend([conv(ch, width, 5), Layer::Relu, pool()]);
                ch = width;
            }
            pools = w.len();
        }
        // Stem conv, then per stage: optional width change, one identity
        // residual block, pool.
        Family::MiniResnet => {
            if w.len() < 2 {
                return Err(Error::InvalidArgument("mini-resnet needs at least two stages".into()));
            }
            layers.extend([conv(ch, w[0], 3), Layer::BatchNorm(BatchNorm2d::new(w[0])), Layer::Relu, pool()]);
            ch = w[0];
            for &width in w {
                if width != ch {
                    layers.extend([conv(ch, width, 3), Layer::BatchNorm(BatchNorm2d::new(width)), Layer::Relu]);
                    ch = width;
                }
                layers.extend(residual_block(ch));
                layers.push(pool());
            }
            pools = w.len() + 1;
        }
        // 3x3 conv -> relu per stage, 2x2 pool between stages.
        Family::MiniVgg => {
            for (i, &width) in w.iter().enumerate() {
                layers.extend([conv(ch, width, 3), Layer::Relu]);
                if i + 1 < w.len() {
                    layers.push(pool());
                }
                ch = width;
            }
            pools = w.len() - 1;
        }
    }
    let div = 1usize << pools;
    if spec.input.height % div != 0 || spec.input.width % div != 0 {
        return Err(Error::shape(
            "build",
            format!(
                "input {}x{} not divisible through {pools} pooling stages",
                spec.input.height, spec.input.width
            ),
        ));
    }
    let feat = ch * (spec.input.height / div) * (spec.input.width / div);
    layers.extend([Layer::Flatten, Layer::Dense(Dense::new(feat, spec.classes)), Layer::Softmax]);
    Ok((layers, feat, pools))
}

/// Pixel values live in [0, 1]; networks see them shifted to [-0.5, 0.5].
pub const PIXEL_CENTER: f64 = 0.5;

/// Builds and He-initializes a network from the seed in `ArchitectureSpec`.
pub fn build(spec: &ArchitectureSpec) -> Result<Network> {
    if spec.classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    let (mut layers, _, _) = layout(spec)?;
    let mut rng = rng::substream(spec.seed, rng::stream::INIT);
    for layer in &mut layers {
        match layer {
            Layer::Conv2d(c) => {
                let fan_in = c.fan_in();
                init::he_uniform(&mut c.weight, fan_in, &mut rng);
            }
            Layer::Dense(d) => {
                let fan_in = d.in_features;
                init::he_uniform(&mut d.weight, fan_in, &mut rng);
            }
            _ => {}
        }
    }
    let net = Network::new(spec.input, layers)?.with_input_center(PIXEL_CENTER);
    log::debug!("built {} with {} parameters", spec.family, net.param_count());
    Ok(net)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub total_seconds: f64,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::from("epoch  train_loss      train_acc  val_acc  seconds\n");
        for e in &self.epochs {
            let val = e.validation_accuracy.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "{:>5}  {:<14.10}  {:>9.4}  {:>7}  {:>7.2}\n",
                e.epoch, e.train_loss, e.train_accuracy, val, e.seconds
            ));
        }
        out.push_str(&format!("total_seconds {:.2}\n", self.total_seconds));
        out
    }
}

fn argmax(p: &[f64]) -> usize {
    // Strict comparison keeps the lowest index on ties.
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Minibatch SGD over `data`, mean cross-entropy loss, seeded shuffling.
pub fn train(
    mut net: Network,
    data: &LabeledSet,
    validation: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    if data.is_empty() || !data.has_both_classes() {
        return Err(Error::Data("training data must be non-empty and contain both classes".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument("batch size and epochs must be positive".into()));
    }
    let labels = data.labels();
    let mut rng = rng::substream(cfg.seed, rng::stream::SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let start = Instant::now();

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.batch(chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads, cache) = net.loss_and_grads(&x, &y, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += cache
                .probabilities
                .iter()
                .zip(&y)
                .filter(|(p, &t)| argmax(p) == t)
                .count();
            net.apply_sgd(&grads, cfg.learning_rate)?;
            net.commit_batch_stats(&cache);
        }
        let validation_accuracy = match validation {
            Some(v) if !v.is_empty() => Some(accuracy(&net, v)?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            validation_accuracy,
            seconds: t0.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.5} train acc {:.4} val acc {}",
            cfg.epochs,
            record.train_loss,
            record.train_accuracy,
            validation_accuracy.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        history.epochs.push(record);
    }
    history.total_seconds = start.elapsed().as_secs_f64();
    Ok((net, history))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// Eval-mode inference over a batch; the returned cache holds every layer
/// output, including each convolution's feature maps.
pub fn classify_batch(net: &Network, images: &Tensor4) -> Result<(Vec<Classification>, ForwardCache)> {
    let cache = net.forward(images, Mode::Eval)?;
    let out = cache
        .probabilities
        .iter()
        .map(|p| Classification {
            class: argmax(p),
            probabilities: p.clone(),
        })
        .collect();
    Ok((out, cache))
}

pub fn classify(net: &Network, image: &Tensor4) -> Result<(Classification, ForwardCache)> {
    if image.shape().n != 1 {
        return Err(Error::shape("classify", format!("expected a single image, got {}", image.shape())));
    }
    let (mut out, cache) = classify_batch(net, image)?;
    Ok((out.remove(0), cache))
}

/// Conv feature maps from a forward cache: (conv layer index, tapped output).
pub fn conv_feature_maps<'a>(net: &Network, cache: &'a ForwardCache) -> Result<Vec<(usize, &'a Tensor4)>> {
    net.conv_layers()
        .into_iter()
        .map(|i| {
            let tap = net.feature_tap(i)?;
            cache.output(tap).map(|t| (i, t)).ok_or(Error::MissingCache(tap))
        })
        .collect()
}

/// Predicted class for every item, in item order.
pub fn predict(net: &Network, set: &LabeledSet) -> Result<Vec<usize>> {
    const CHUNK: usize = 32;
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut preds = Vec::with_capacity(set.len());
    for chunk in idx.chunks(CHUNK) {
        let (out, _) = classify_batch(net, &set.batch(chunk)?)?;
        preds.extend(out.into_iter().map(|c| c.class));
    }
    Ok(preds)
}

pub fn accuracy(net: &Network, set: &LabeledSet) -> Result<f64> {
    let preds = predict(net, set)?;
    let ok = preds.iter().zip(set.labels()).filter(|(p, l)| **p == *l).count();
    Ok(ok as f64 / set.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn vgg_pyramid_ends_at_eight() {
        let net = build(&ArchitectureSpec::new(Family::MiniVgg, 1)).unwrap();
        let shapes = net.layer_shapes(1).unwrap();
        let last_conv = *net.conv_layers().last().unwrap();
        let s = shapes[last_conv];
        assert_eq!((s.h, s.w), (8, 8));
        let flat = shapes.iter().zip(net.layers()).find(|(_, l)| matches!(l, Layer::Flatten)).unwrap().0;
        assert_eq!(flat.item_len(), 32 * 8 * 8);
    }

    #[test]
    fn vgg_uses_only_3x3_convs_and_2x2_pools() {
        let net = build(&ArchitectureSpec::new(Family::MiniVgg, 1)).unwrap();
        for l in net.layers() {
            match l {
                Layer::Conv2d(c) => assert_eq!((c.kernel_h, c.kernel_w), (3, 3)),
                Layer::MaxPool2d(p) => assert_eq!((p.size, p.stride), (2, 2)),
                _ => {}
            }
        }
        assert!(matches!(net.layers().last(), Some(Layer::Softmax)));
    }

    #[test]
    fn resnet_has_two_identity_blocks_with_batchnorm() {
        let net = build(&ArchitectureSpec::new(Family::MiniResnet, 1)).unwrap();
        let begins = net.layers().iter().filter(|l| matches!(l, Layer::ResidualBegin)).count();
        let bns = net.layers().iter().filter(|l| matches!(l, Layer::BatchNorm(_))).count();
        assert!(begins >= 2);
        assert!(bns >= 2 * begins);
    }

    #[test]
    fn indivisible_input_rejected() {
        let spec = ArchitectureSpec::new(Family::MiniVgg, 1).with_input(3, 60, 60);
        assert!(build(&spec).is_err());
    }

    #[test]
    fn tie_goes_to_lower_class() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("vgg16".parse::<Family>().is_err());
    }

    #[test]
    fn random_input_probabilities_sum_to_one() {
        for family in Family::ALL {
            let net = build(&ArchitectureSpec::new(family, 5).with_input(3, 16, 16)).unwrap();
            let x = Tensor4::from_vec(
                Shape::new(2, 3, 16, 16),
                (0..2 * 3 * 256).map(|i| ((i * 31 % 97) as f64) / 97.0).collect(),
            )
            .unwrap();
            let cache = net.forward(&x, Mode::Train).unwrap();
            for p in &cache.probabilities {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{family}");
            }
        }
    }
}
