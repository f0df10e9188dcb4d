//! Gradient-weighted class activation maps.

mod colormap;

use std::fmt::Write as _;

use image::{Rgb, RgbImage};

pub use colormap::{jet, JET};

use crate::dataset::Mask;
use crate::error::{Error, Result};
use crate::network::{BackwardOptions, ForwardCache, Mode, Network};
use crate::tensor::{Shape, Tensor4};

pub const DEFAULT_ALPHA: f64 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// Coarse map at feature resolution, row-major, in [0, 1].
    pub values: Vec<f64>,
    pub height: usize,
    pub width: usize,
    /// Conv layer the feature maps were taken from.
    pub source_layer: usize,
    pub target_class: usize,
    /// Bilinear resize of `values` to the input resolution.
    pub upsampled: Vec<f64>,
    pub up_height: usize,
    pub up_width: usize,
    /// The rectified map was constant, so every value is zero.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCam {
    pub heatmap: Heatmap,
    /// Channel weights: spatial means of the target-score gradient.
    pub alphas: Vec<f64>,
}

/// Channel weights and the rectified weighted sum for one item.
/// `features` and `grads` are both 1xKxHxW.
pub fn weighted_map(features: &Tensor4, grads: &Tensor4) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = features.shape();
    if s.n != 1 || grads.shape() != s {
        return Err(Error::shape(
            "gradcam",
            format!("features {s} and gradients {} must match with batch 1", grads.shape()),
        ));
    }
    let plane = s.plane();
    let alphas: Vec<f64> = (0..s.c)
        .map(|k| grads.plane(0, k).iter().sum::<f64>() / plane as f64)
        .collect();
    let mut raw = vec![0.0; plane];
    for (k, &a) in alphas.iter().enumerate() {
        for (r, &v) in raw.iter_mut().zip(features.plane(0, k)) {
            *r += a * v;
        }
    }
    for r in &mut raw {
        *r = r.max(0.0);
    }
    Ok((alphas, raw))
}

/// Min-max scaling to [0, 1]. A constant map becomes all zeros; the flag
/// reports that case.
pub fn normalize(raw: &[f64]) -> (Vec<f64>, bool) {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if raw.is_empty() || !(span > 0.0) {
        return (vec![0.0; raw.len()], true);
    }
    (raw.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect(), false)
}

/// Corner-aligned bilinear resize of an h x w map to out_h x out_w.
pub fn bilinear(values: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Result<Vec<f64>> {
    if h == 0 || w == 0 || values.len() != h * w || out_h == 0 || out_w == 0 {
        return Err(Error::shape("bilinear", format!("{} values for {h}x{w} -> {out_h}x{out_w}", values.len())));
    }
    // Source coordinate and interpolation weight along one axis.
    let axis = |o: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        if src == 1 || dst == 1 {
            return (0, 0, 0.0);
        }
        let num = o * (src - 1);
        let den = dst - 1;
        let i0 = num / den;
        let frac = (num % den) as f64 / den as f64;
        (i0, (i0 + 1).min(src - 1), frac)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let (y0, y1, fy) = axis(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = axis(ox, w, out_w);
            let top = values[y0 * w + x0] * (1.0 - fx) + values[y0 * w + x1] * fx;
            let bottom = values[y1 * w + x0] * (1.0 - fx) + values[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

/// Heatmap from feature maps and the target-score gradient at those maps.
pub fn gradcam_from_maps(
    features: &Tensor4,
    grads: &Tensor4,
    source_layer: usize,
    target_class: usize,
    out_size: (usize, usize),
) -> Result<GradCam> {
    let (alphas, raw) = weighted_map(features, grads)?;
    let s = features.shape();
    let (values, degenerate) = normalize(&raw);
    let upsampled = bilinear(&values, s.h, s.w, out_size.0, out_size.1)?;
    Ok(GradCam {
        heatmap: Heatmap {
            values,
            height: s.h,
            width: s.w,
            source_layer,
            target_class,
            upsampled,
            up_height: out_size.0,
            up_width: out_size.1,
            degenerate,
        },
        alphas,
    })
}

/// Grad-CAM for every item of an eval-mode forward cache, each for its own
/// target class. `layer` must be a conv layer; `None` picks the last one.
pub fn gradcam_batch(
    net: &Network,
    cache: &ForwardCache,
    targets: &[usize],
    layer: Option<usize>,
) -> Result<Vec<GradCam>> {
    if cache.mode != Mode::Eval {
        return Err(Error::InvalidArgument("grad-cam needs an eval-mode forward pass".into()));
    }
    let n = cache.batch_size();
    let classes = net.classes();
    if targets.len() != n {
        return Err(Error::shape("gradcam", format!("{} targets for batch of {n}", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::InvalidArgument(format!("target class {t} out of range for {classes} classes")));
    }
    let conv = match layer {
        Some(l) => l,
        None => *net
            .conv_layers()
            .last()
            .ok_or_else(|| Error::InvalidArgument("network has no convolution layer".into()))?,
    };
    let tap = net.feature_tap(conv)?;
    let features = cache.output(tap).ok_or(Error::MissingCache(tap))?;

    // d y_c / d logits is one-hot per item.
    let mut onehot = Tensor4::zeros(Shape::new(n, classes, 1, 1));
    for (i, &t) in targets.iter().enumerate() {
        onehot.item_mut(i)[t] = 1.0;
    }
    let back = net.backward(
        cache,
        &onehot,
        &BackwardOptions {
            stop_at: Some(tap),
            ..Default::default()
        },
    )?;
    let grads = back.at_layer.ok_or(Error::MissingCache(tap))?;
    let dims = net.input_dims();
    (0..n)
        .map(|i| gradcam_from_maps(&features.select(i), &grads.select(i), conv, targets[i], (dims.height, dims.width)))
        .collect()
}

/// Runs an eval forward pass on a single 1xCxHxW image and explains
/// `target_class`.
pub fn gradcam_compute(net: &Network, image: &Tensor4, target_class: usize, layer: Option<usize>) -> Result<GradCam> {
    if image.shape().n != 1 {
        return Err(Error::shape("gradcam", format!("expected a single image, got {}", image.shape())));
    }
    let cache = net.forward(image, Mode::Eval)?;
    Ok(gradcam_batch(net, &cache, &[target_class], layer)?.remove(0))
}

fn to_u8(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Blends the colormapped heatmap over a 1x3xHxW image in [0, 1]:
/// `(1 - alpha) * image + alpha * colormap(h)` per channel.
pub fn overlay(heatmap: &Heatmap, image: &Tensor4, alpha: f64, colormap: fn(f64) -> [u8; 3]) -> Result<RgbImage> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::shape("overlay", format!("expected 1x3xHxW image, got {s}")));
    }
    if (s.h, s.w) != (heatmap.up_height, heatmap.up_width) {
        return Err(Error::shape(
            "overlay",
            format!("heatmap {}x{} vs image {}x{}", heatmap.up_height, heatmap.up_width, s.h, s.w),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("overlay alpha {alpha} outside [0, 1]")));
    }
    let planes = [image.plane(0, 0), image.plane(0, 1), image.plane(0, 2)];
    Ok(RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| {
        let i = y as usize * s.w + x as usize;
        let c = colormap(heatmap.upsampled[i]);
        let mut px = [0u8; 3];
        for ch in 0..3 {
            let base = planes[ch][i].clamp(0.0, 1.0) * 255.0;
            px[ch] = to_u8((1.0 - alpha) * base + alpha * f64::from(c[ch]));
        }
        Rgb(px)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Localization {
    pub score: f64,
    /// The heatmap had no mass at all; `score` is 0.
    pub degenerate: bool,
}

/// Share of upsampled heatmap mass that falls inside `mask`.
pub fn localization_score(heatmap: &Heatmap, mask: &Mask) -> Result<Localization> {
    if (mask.height, mask.width) != (heatmap.up_height, heatmap.up_width) {
        return Err(Error::shape(
            "localization",
            format!(
                "mask {}x{} vs heatmap {}x{}",
                mask.height, mask.width, heatmap.up_height, heatmap.up_width
            ),
        ));
    }
    let total: f64 = heatmap.upsampled.iter().sum();
    if !(total > 0.0) {
        return Ok(Localization {
            score: 0.0,
            degenerate: true,
        });
    }
    let inside: f64 = heatmap
        .upsampled
        .iter()
        .zip(&mask.cells)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum();
    Ok(Localization {
        score: (inside / total).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Audit text written next to an overlay.
pub fn sidecar(cam: &GradCam, predicted: Option<(usize, &[f64])>, localization: Option<Localization>) -> String {
    let h = &cam.heatmap;
    let mut s = String::new();
    let _ = writeln!(s, "target_class {}", h.target_class);
    let _ = writeln!(s, "source_layer {}", h.source_layer);
    let _ = writeln!(s, "feature_size {}x{}", h.height, h.width);
    if let Some((class, probs)) = predicted {
        let p: Vec<String> = probs.iter().map(|p| format!("{p:.17e}")).collect();
        let _ = writeln!(s, "predicted_class {class}");
        let _ = writeln!(s, "probabilities {}", p.join(" "));
    }
    let _ = writeln!(s, "degenerate {}", h.degenerate);
    for (k, a) in cam.alphas.iter().enumerate() {
        let _ = writeln!(s, "alpha {k} {a:.17e}");
    }
    if let Some(l) = localization {
        let _ = writeln!(s, "localization_score {:.17e}", l.score);
    }
    s
}
