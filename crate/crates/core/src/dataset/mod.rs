//! Labeled image sets: synthetic generation, splitting and PNG directories.

mod io;
mod synth;

pub use io::{list_pngs, load_dir, read_png, rgb_to_tensor, save_dir, tensor_to_rgb, write_rgb_png, DIR_DISEASED, DIR_HEALTHY, DIR_MASKS};
pub use synth::{generate, GeneratorParams};

use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Shape, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Healthy = 0,
    Diseased = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Healthy),
            1 => Some(Label::Diseased),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Diseased => "diseased",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary region mask, row-major `height x width`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn area(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.area() as f64 / self.cells.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct Item {
    pub name: String,
    /// 1 x 3 x h x w, values in [0, 1].
    pub image: Tensor4,
    pub label: Label,
    pub mask: Option<Mask>,
}

#[derive(Clone, Debug, Default)]
pub struct LabeledSet {
    pub items: Vec<Item>,
    pub seed: Option<u64>,
    pub provenance: String,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label.index()).collect()
    }

    pub fn item_shape(&self) -> Option<Shape> {
        self.items.first().map(|i| i.image.shape())
    }

    /// Stacks the images at `indices` into one batch tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor4> {
        let refs: Vec<&Tensor4> = indices.iter().map(|&i| &self.items[i].image).collect();
        Tensor4::stack(&refs)
    }

    pub fn has_both_classes(&self) -> bool {
        self.count(Label::Healthy) > 0 && self.count(Label::Diseased) > 0
    }
}

/// Stratified, seeded split into (train, test). Each class contributes
/// `round(train_fraction * class_count)` items to train; both halves keep
/// the original item order.
pub fn split(set: &LabeledSet, train_fraction: f64, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = rng::substream(seed, rng::stream::SPLIT);
    let mut in_train = vec![false; set.len()];
    for label in [Label::Healthy, Label::Diseased] {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.items[i].label == label).collect();
        idx.shuffle(&mut rng);
        let take = (train_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..take] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool, tag: &str| LabeledSet {
        items: set
            .items
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(it, _)| it.clone())
            .collect(),
        seed: set.seed,
        provenance: format!("{} [{tag} split, fraction {train_fraction}, seed {seed}]", set.provenance),
    };
    Ok((pick(true, "train"), pick(false, "test")))
}

/// Same pixels (RGB triples) in a seeded random arrangement. Used as a
/// control image that keeps colour statistics but destroys structure.
pub fn shuffle_pixels(image: &Tensor4, seed: u64) -> Result<Tensor4> {
    let s = image.shape();
    if s.n != 1 {
        return Err(Error::shape("shuffle_pixels", format!("expected a single image, got {s}")));
    }
    let plane = s.plane();
    let mut order: Vec<usize> = (0..plane).collect();
    order.shuffle(&mut rng::substream(seed, rng::stream::SHUFFLE));
    let mut data = Vec::with_capacity(image.len());
    for c in 0..s.c {
        let src = image.plane(0, c);
        data.extend(order.iter().map(|&i| src[i]));
    }
    Tensor4::from_vec(s, data)
}

/// Mean pixel intensity over all channels.
pub fn mean_intensity(image: &Tensor4) -> f64 {
    image.sum() / image.len() as f64
}

/// Single-threshold classifier on mean intensity, fitted on a training set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityBaseline {
    pub threshold: f64,
    /// Predict diseased when intensity is below the threshold (else above).
    pub darker_is_diseased: bool,
}

impl IntensityBaseline {
    /// Picks the threshold and direction maximizing training accuracy.
    pub fn fit(train: &LabeledSet) -> Result<Self> {
        if !train.has_both_classes() {
            return Err(Error::Data("baseline needs both classes".into()));
        }
        let mut scored: Vec<(f64, Label)> = train.items.iter().map(|i| (mean_intensity(&i.image), i.label)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = (0usize, IntensityBaseline {
            threshold: f64::NEG_INFINITY,
            darker_is_diseased: true,
        });
        let candidates = std::iter::once(scored[0].0 - 1.0)
            .chain(scored.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)))
            .chain(std::iter::once(scored[scored.len() - 1].0 + 1.0));
        for threshold in candidates {
            for darker_is_diseased in [true, false] {
                let b = IntensityBaseline {
                    threshold,
                    darker_is_diseased,
                };
                let correct = scored.iter().filter(|(v, l)| b.classify_value(*v) == *l).count();
                if correct > best.0 {
                    best = (correct, b);
                }
            }
        }
        Ok(best.1)
    }

    fn classify_value(&self, v: f64) -> Label {
        if (v < self.threshold) == self.darker_is_diseased {
            Label::Diseased
        } else {
            Label::Healthy
        }
    }

    pub fn classify(&self, image: &Tensor4) -> Label {
        self.classify_value(mean_intensity(image))
    }

    pub fn accuracy(&self, set: &LabeledSet) -> f64 {
        let ok = set.items.iter().filter(|i| self.classify(&i.image) == i.label).count();
        ok as f64 / set.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize) -> LabeledSet {
        let mut items = Vec::new();
        for k in 0..2 * n_per_class {
            let label = if k < n_per_class { Label::Healthy } else { Label::Diseased };
            items.push(Item {
                name: format!("item_{k}"),
                image: Tensor4::filled(Shape::new(1, 1, 2, 2), k as f64 / 100.0),
                label,
                mask: None,
            });
        }
        LabeledSet {
            items,
            seed: None,
            provenance: "toy".into(),
        }
    }

    #[test]
    fn split_is_stratified_disjoint_and_exhaustive() {
        let set = toy(260);
        let (train, test) = split(&set, 0.8, 11).unwrap();
        assert_eq!((train.len(), test.len()), (416, 104));
        assert_eq!((train.count(Label::Healthy), train.count(Label::Diseased)), (208, 208));
        assert_eq!((test.count(Label::Healthy), test.count(Label::Diseased)), (52, 52));
        let mut names: Vec<&str> = train.items.iter().chain(&test.items).map(|i| i.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 520);
    }

    #[test]
    fn split_is_seeded() {
        let set = toy(30);
        let names = |s: &LabeledSet| s.items.iter().map(|i| i.name.clone()).collect::<Vec<_>>();
        let (a, _) = split(&set, 0.5, 3).unwrap();
        let (b, _) = split(&set, 0.5, 3).unwrap();
        let (c, _) = split(&set, 0.5, 4).unwrap();
        assert_eq!(names(&a), names(&b));
        assert_ne!(names(&a), names(&c));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(split(&toy(2), 1.0, 0).is_err());
        assert!(split(&toy(2), 0.0, 0).is_err());
    }

    #[test]
    fn baseline_separates_toy_intensities() {
        let set = toy(10);
        let b = IntensityBaseline::fit(&set).unwrap();
        assert_eq!(b.accuracy(&set), 1.0);
        assert!(!b.darker_is_diseased);
    }
}
