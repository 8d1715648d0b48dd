//! In-memory datasets, synthetic generators and batching.

pub mod idx;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Regression targets or class indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Real(Vec<f64>),
    Class { labels: Vec<usize>, classes: usize },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Real(v) => v.len(),
            Labels::Class { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Real(v) => Labels::Real(idx.iter().map(|&i| v[i]).collect()),
            Labels::Class { labels, classes } => Labels::Class {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        }
    }
}

/// `M` samples of `d` features each, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<f64>,
    d: usize,
    /// Per-sample shape, e.g. `[C, H, W]`; product equals `d`.
    sample_shape: Vec<usize>,
    labels: Labels,
    normalized: bool,
}

/// One slice of a dataset.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Labels,
    pub index: usize,
}

impl Batch {
    pub fn class_labels(&self) -> Result<&[usize]> {
        match &self.labels {
            Labels::Class { labels, .. } => Ok(labels),
            Labels::Real(_) => Err(Error::validation("batch carries regression targets")),
        }
    }
}

impl Dataset {
    pub fn new(samples: Vec<f64>, sample_shape: Vec<usize>, labels: Labels) -> Result<Self> {
        let d: usize = sample_shape.iter().product();
        if d == 0 {
            return Err(Error::validation("samples must have at least one feature"));
        }
        if !samples.len().is_multiple_of(d) || samples.len() / d != labels.len() {
            return Err(Error::validation(format!(
                "{} values do not form {} samples of {d} features",
                samples.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::validation("dataset is empty"));
        }
        if let Labels::Class { labels, classes } = &labels {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::validation(format!(
                    "class label {bad} out of range for {classes} classes"
                )));
            }
        }
        Ok(Dataset {
            samples,
            d,
            sample_shape,
            labels,
            normalized: false,
        })
    }

    /// Sample count `M`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature count `d`.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn classes(&self) -> Option<usize> {
        match self.labels {
            Labels::Class { classes, .. } => Some(classes),
            Labels::Real(_) => None,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Label-magnitude bound `R = max |y_i|` (class datasets report `None`).
    pub fn label_bound(&self) -> Option<f64> {
        match &self.labels {
            Labels::Real(v) => Some(v.iter().fold(0.0, |m, y| m.max(y.abs()))),
            Labels::Class { .. } => None,
        }
    }

    pub fn real_labels(&self) -> Result<&[f64]> {
        match &self.labels {
            Labels::Real(v) => Ok(v),
            Labels::Class { .. } => Err(Error::validation("dataset has class labels")),
        }
    }

    /// Divides every row by its L2 norm.
    pub fn l2_normalize(&self) -> Result<Dataset> {
        let mut out = self.clone();
        for (i, row) in out.samples.chunks_mut(self.d).enumerate() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::validation(format!("row {i} is all zeros")));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        out.normalized = true;
        Ok(out)
    }

    /// Replaces class indices `k` by `k / (K − 1)` so that `R = 1`.
    pub fn to_regression(&self) -> Result<Dataset> {
        let Labels::Class { labels, classes } = &self.labels else {
            return Ok(self.clone());
        };
        let denom = (*classes as f64 - 1.0).max(1.0);
        let mut out = self.clone();
        out.labels = Labels::Real(labels.iter().map(|&l| l as f64 / denom).collect());
        Ok(out)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut samples = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            samples.extend_from_slice(self.row(i));
        }
        Dataset {
            samples,
            d: self.d,
            sample_shape: self.sample_shape.clone(),
            labels: self.labels.select(idx),
            normalized: self.normalized,
        }
    }

    /// Seeded permutation followed by a split into `(first n, rest)`.
    pub fn shuffle_split(&self, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::validation(format!(
                "split point {n} must lie in 1..{}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::rng_from_seed(seed));
        Ok((self.subset(&idx[..n]), self.subset(&idx[n..])))
    }

    /// Per-feature standardization with statistics from `self`, applied to
    /// `self` and every dataset in `others`.
    pub fn standardize(&self, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
        let m = self.len() as f64;
        let mut mean = vec![0.0; self.d];
        for r in self.samples.chunks(self.d) {
            mean.iter_mut().zip(r).for_each(|(a, v)| *a += v / m);
        }
        let mut var = vec![0.0; self.d];
        for r in self.samples.chunks(self.d) {
            var.iter_mut()
                .zip(r)
                .zip(&mean)
                .for_each(|((a, v), mu)| *a += (v - mu) * (v - mu) / m);
        }
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt().max(1e-12)).collect();
        let apply = |ds: &Dataset| -> Result<Dataset> {
            if ds.d != self.d {
                return Err(Error::Dimension {
                    op: "standardize",
                    lhs: self.sample_shape.clone(),
                    rhs: ds.sample_shape.clone(),
                });
            }
            let mut out = ds.clone();
            for r in out.samples.chunks_mut(self.d) {
                for ((v, mu), s) in r.iter_mut().zip(&mean).zip(&sd) {
                    *v = (*v - mu) / s;
                }
            }
            out.normalized = false;
            Ok(out)
        };
        let first = apply(self)?;
        let rest = others.iter().map(|d| apply(d)).collect::<Result<_>>()?;
        Ok((first, rest))
    }

    /// Rows `idx` as a batch tensor of shape `[len, sample_shape...]`.
    pub fn gather(&self, idx: &[usize], index: usize) -> Batch {
        let sub = self.subset(idx);
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(&self.sample_shape);
        Batch {
            inputs: Tensor::new(shape, sub.samples).expect("consistent shape"),
            labels: sub.labels,
            index,
        }
    }

    /// Seeded shuffle, then contiguous slices of `batch_size`; the final
    /// batch may be short.
    pub fn batch_iter(&self, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::rng_from_seed(seed));
        Ok(idx
            .chunks(batch_size)
            .enumerate()
            .map(|(i, c)| self.gather(c, i))
            .collect())
    }

    /// Reads an image/label pair of IDX files; pixels are scaled to `[0,1]`.
    pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
        let img = idx::parse_images(&idx::read_file(images)?)?;
        let lab = idx::parse_labels(&idx::read_file(labels)?)?;
        Self::from_idx(&img, &lab)
    }

    pub fn from_idx(img: &idx::IdxImages, lab: &idx::IdxLabels) -> Result<Dataset> {
        if img.count != lab.labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                img.count,
                lab.labels.len()
            )));
        }
        let classes = lab
            .labels
            .iter()
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(1);
        Dataset::new(
            img.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
            vec![1, img.rows, img.cols],
            Labels::Class {
                labels: lab.labels.iter().map(|&l| l as usize).collect(),
                classes,
            },
        )
    }
}

fn random_unit(d: usize, r: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Gaussian blobs: `n` samples per class around `K` random unit-vector
/// centres, noise std `spread / sqrt(d)` per feature. Samples are ordered
/// class by class.
pub fn synth_clusters(
    classes: usize,
    per_class: usize,
    d: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || per_class < 1 || d < 1 {
        return Err(Error::validation(
            "need at least 2 classes, 1 sample per class and 1 feature",
        ));
    }
    let mut r = rng::rng_from_seed(seed);
    let centres: Vec<Vec<f64>> = (0..classes).map(|_| random_unit(d, &mut r)).collect();
    let scale = spread / (d as f64).sqrt();
    let mut samples = Vec::with_capacity(classes * per_class * d);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in centre {
                let z: f64 = StandardNormal.sample(&mut r);
                samples.push(mu + scale * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(samples, vec![d], Labels::Class { labels, classes })
}

/// Parameters of the translated-motif image generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotifConfig {
    pub classes: usize,
    pub per_class: usize,
    /// Image side length.
    pub side: usize,
    /// Motif side length.
    pub motif: usize,
    /// Copies of the class motif stamped into each image.
    pub stamps: usize,
    pub noise: f64,
}

impl Default for MotifConfig {
    fn default() -> Self {
        MotifConfig {
            classes: 10,
            per_class: 300,
            side: 8,
            motif: 3,
            stamps: 2,
            noise: 0.5,
        }
    }
}

/// Single-channel images in which each class is a random `motif×motif`
/// pattern stamped at uniformly random positions over Gaussian noise.
/// Recognising the class needs translation-invariant local features.
pub fn synth_motifs(cfg: &MotifConfig, seed: u64) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.per_class < 1 || cfg.motif == 0 || cfg.motif > cfg.side {
        return Err(Error::validation(format!(
            "invalid motif configuration {cfg:?}"
        )));
    }
    let mut r = rng::rng_from_seed(seed);
    let area = cfg.motif * cfg.motif;
    let motifs: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..area).map(|_| StandardNormal.sample(&mut r)).collect())
        .collect();
    let d = cfg.side * cfg.side;
    let n = cfg.classes * cfg.per_class;
    let mut samples = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for (c, motif) in motifs.iter().enumerate() {
        for _ in 0..cfg.per_class {
            let img = &mut samples[labels.len() * d..(labels.len() + 1) * d];
            for _ in 0..cfg.stamps {
                let y0 = r.random_range(0..=cfg.side - cfg.motif);
                let x0 = r.random_range(0..=cfg.side - cfg.motif);
                for dy in 0..cfg.motif {
                    for dx in 0..cfg.motif {
                        img[(y0 + dy) * cfg.side + x0 + dx] += motif[dy * cfg.motif + dx];
                    }
                }
            }
            for v in img.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v += cfg.noise * z;
            }
            labels.push(c);
        }
    }
    Dataset::new(
        samples,
        vec![1, cfg.side, cfg.side],
        Labels::Class {
            labels,
            classes: cfg.classes,
        },
    )
}
