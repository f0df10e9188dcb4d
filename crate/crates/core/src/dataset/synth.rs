//! Procedural two-class tissue-like textures.
//!
//! Healthy images are pink correlated noise sprinkled with small nuclei.
//! Diseased images use the same recipe plus several darker elliptical
//! clusters whose union is recorded as the ground-truth mask. A random
//! global brightness factor per image keeps mean intensity from giving the
//! class away.

use rand::Rng as _;

use super::{Item, Label, LabeledSet, Mask};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::{Shape, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub size: usize,
    pub blobs_min: usize,
    pub blobs_max: usize,
    /// Semi-axis range of each elliptical cluster, in pixels.
    pub blob_radius: (f64, f64),
    /// Accepted range of the union mask area as a fraction of the image.
    pub mask_area: (f64, f64),
    pub nuclei: (usize, usize),
    /// Images are scaled by a factor drawn from [1 - j, 1 + j].
    pub brightness_jitter: f64,
    pub pixel_noise: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            size: 64,
            blobs_min: 3,
            blobs_max: 8,
            blob_radius: (2.5, 6.0),
            mask_area: (0.01, 0.20),
            nuclei: (15, 45),
            brightness_jitter: 0.15,
            pixel_noise: 0.02,
        }
    }
}

const EOSIN_LIGHT: [f64; 3] = [0.96, 0.80, 0.88];
const EOSIN_DEEP: [f64; 3] = [0.85, 0.52, 0.68];
const NUCLEUS: [f64; 3] = [0.42, 0.30, 0.62];
const CLUSTER: [f64; 3] = [0.40, 0.24, 0.55];
const MAX_MASK_ATTEMPTS: usize = 1000;

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise in [0, 1].
fn value_noise(size: usize, rng: &mut Rng) -> Vec<f64> {
    let octaves = [(16usize, 0.5), (8, 0.3), (4, 0.2)];
    let mut field = vec![0.0; size * size];
    for (cell, weight) in octaves {
        let g = size / cell + 2;
        let lattice: Vec<f64> = (0..g * g).map(|_| rng.random::<f64>()).collect();
        for y in 0..size {
            let fy = y as f64 / cell as f64;
            let (y0, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
            for x in 0..size {
                let fx = x as f64 / cell as f64;
                let (x0, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
                let at = |yy: usize, xx: usize| lattice[yy * g + xx];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                field[y * size + x] += weight * (top * (1.0 - ty) + bot * ty);
            }
        }
    }
    field
}

struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Normalized radius: < 1 inside.
    fn radius(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        (u * u + v * v).sqrt()
    }
}

fn draw_clusters(p: &GeneratorParams, rng: &mut Rng) -> Result<(Vec<Ellipse>, Mask)> {
    let size = p.size;
    for _ in 0..MAX_MASK_ATTEMPTS {
        let count = rng.random_range(p.blobs_min..=p.blobs_max);
        let ellipses: Vec<Ellipse> = (0..count)
            .map(|_| {
                let a = rng.random_range(p.blob_radius.0..=p.blob_radius.1);
                let b = rng.random_range(p.blob_radius.0..=p.blob_radius.1);
                let margin = a.max(b) + 1.0;
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                Ellipse {
                    cy: rng.random_range(margin..size as f64 - margin),
                    cx: rng.random_range(margin..size as f64 - margin),
                    a,
                    b,
                    cos: theta.cos(),
                    sin: theta.sin(),
                }
            })
            .collect();
        let cells: Vec<bool> = (0..size * size)
            .map(|i| {
                let (y, x) = ((i / size) as f64, (i % size) as f64);
                ellipses.iter().any(|e| e.radius(y, x) <= 1.0)
            })
            .collect();
        let mask = Mask {
            height: size,
            width: size,
            cells,
        };
        let frac = mask.area_fraction();
        if frac >= p.mask_area.0 && frac <= p.mask_area.1 {
            return Ok((ellipses, mask));
        }
    }
    Err(Error::InvalidArgument(
        "generator parameters cannot produce a cluster mask inside the declared area range".into(),
    ))
}

fn render(p: &GeneratorParams, diseased: bool, rng: &mut Rng) -> Result<(Tensor4, Option<Mask>)> {
    let size = p.size;
    let tissue = value_noise(size, rng);
    let grain = value_noise(size, rng);
    let mut rgb = vec![[0.0f64; 3]; size * size];
    for (px, &t) in rgb.iter_mut().zip(&tissue) {
        let t = (1.6 * (t - 0.5) + 0.5).clamp(0.0, 1.0);
        for ch in 0..3 {
            px[ch] = EOSIN_LIGHT[ch] * (1.0 - t) + EOSIN_DEEP[ch] * t;
        }
    }

    let nuclei = rng.random_range(p.nuclei.0..=p.nuclei.1);
    for _ in 0..nuclei {
        let cy = rng.random_range(0.0..size as f64);
        let cx = rng.random_range(0.0..size as f64);
        let r = rng.random_range(0.8..1.6);
        let strength = rng.random_range(0.5..0.8);
        let (y0, y1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil() as usize).min(size - 1));
        let (x0, x1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil() as usize).min(size - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                if d <= r {
                    let px = &mut rgb[y * size + x];
                    for ch in 0..3 {
                        px[ch] = px[ch] * (1.0 - strength) + NUCLEUS[ch] * strength;
                    }
                }
            }
        }
    }

    let mask = if diseased {
        let (ellipses, mask) = draw_clusters(p, rng)?;
        for (i, px) in rgb.iter_mut().enumerate() {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            let d = ellipses.iter().map(|e| e.radius(y, x)).fold(f64::INFINITY, f64::min);
            let alpha = 0.85 * ((1.15 - d) / 0.3).clamp(0.0, 1.0);
            if alpha > 0.0 {
                let shade = 0.8 + 0.4 * grain[i];
                for ch in 0..3 {
                    px[ch] = px[ch] * (1.0 - alpha) + (CLUSTER[ch] * shade).min(1.0) * alpha;
                }
            }
        }
        Some(mask)
    } else {
        None
    };

    let brightness = rng.random_range(1.0 - p.brightness_jitter..=1.0 + p.brightness_jitter);
    let plane = size * size;
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in rgb.iter().enumerate() {
        for ch in 0..3 {
            let noise = rng.random_range(-p.pixel_noise..=p.pixel_noise);
            data[ch * plane + i] = (px[ch] * brightness + noise).clamp(0.0, 1.0);
        }
    }
    Ok((Tensor4::from_vec(Shape::new(1, 3, size, size), data)?, mask))
}

/// Generates `n` images, half per class, deterministically from `seed`.
pub fn generate(n: usize, seed: u64, params: &GeneratorParams) -> Result<LabeledSet> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("image count must be even and at least 2, got {n}")));
    }
    if params.size < 8 || params.blobs_min == 0 || params.blobs_min > params.blobs_max {
        return Err(Error::InvalidArgument("malformed generator parameters".into()));
    }
    let mut rng = rng::substream(seed, rng::stream::DATA);
    let per_class = n / 2;
    let mut items = Vec::with_capacity(n);
    for label in [Label::Healthy, Label::Diseased] {
        for k in 0..per_class {
            let (image, mask) = render(params, label == Label::Diseased, &mut rng)?;
            items.push(Item {
                name: format!("{}_{k:04}", label.as_str()),
                image,
                label,
                mask,
            });
        }
    }
    Ok(LabeledSet {
        items,
        seed: Some(seed),
        provenance: format!("synthetic textures: n={n}, seed={seed}, size={}", params.size),
    })
}
