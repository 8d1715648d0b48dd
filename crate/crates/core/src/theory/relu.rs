//! Two-layer ReLU network `h(x) = (1/√m) Σ_r s_r ReLU(w_rᵀx)` with a frozen
//! output layer, trained by gradient descent on the first layer.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{synth_clusters, Dataset};
use crate::error::{Error, Result};
use crate::rng;

/// First-layer weights `W` (m×d, row `r` is `w_r`) and output signs `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLayer {
    pub m: usize,
    pub d: usize,
    pub w: Vec<f64>,
    pub s: Vec<f64>,
}

impl TwoLayer {
    /// `w_r ~ N(0, I)`, `s_r ~ uniform{−1, +1}`.
    pub fn init(m: usize, d: usize, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::validation(
                "hidden width and input dimension must be positive",
            ));
        }
        let mut r = rng::rng_from_seed(seed);
        let w = (0..m * d).map(|_| StandardNormal.sample(&mut r)).collect();
        let s = (0..m)
            .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        Ok(TwoLayer { m, d, w, s })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.w[r * self.d..(r + 1) * self.d]
    }

    fn pre(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        let z: f64 = (0..self.m)
            .map(|r| self.s[r] * self.pre(r, x).max(0.0))
            .sum();
        z / (self.m as f64).sqrt()
    }

    /// `Σ_i ½(h(x_i) − y_i)²` over the whole dataset.
    pub fn loss(&self, ds: &Dataset) -> Result<f64> {
        let y = ds.real_labels()?;
        Ok((0..ds.len())
            .map(|i| {
                let e = self.output(ds.row(i)) - y[i];
                0.5 * e * e
            })
            .sum())
    }

    /// Mean per-sample loss.
    pub fn mean_loss(&self, ds: &Dataset) -> Result<f64> {
        Ok(self.loss(ds)? / ds.len() as f64)
    }

    /// Gradient of `Σ_{i∈idx} ½(h(x_i) − y_i)²` with respect to `W`, using
    /// the indicator `w_rᵀx ≥ 0`.
    pub fn batch_grad(&self, ds: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
        let y = ds.real_labels()?;
        let scale = 1.0 / (self.m as f64).sqrt();
        let mut g = vec![0.0; self.m * self.d];
        for &i in idx {
            let x = ds.row(i);
            let res = self.output(x) - y[i];
            for r in 0..self.m {
                if self.pre(r, x) >= 0.0 {
                    let c = res * self.s[r] * scale;
                    g[r * self.d..(r + 1) * self.d]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(gv, xv)| *gv += c * xv);
                }
            }
        }
        Ok(g)
    }

    pub fn step(&mut self, grad: &[f64], eta: f64) {
        self.w.iter_mut().zip(grad).for_each(|(w, g)| *w -= eta * g);
    }

    /// `max_r ‖w_r − other_r‖`.
    pub fn max_row_distance(&self, other: &TwoLayer) -> f64 {
        (0..self.m)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(other.row(r))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Per-weight running mean and variance of gradients across steps.
#[derive(Debug, Clone)]
pub struct GradSpread {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl GradSpread {
    pub fn new(len: usize) -> Self {
        GradSpread {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, g: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(g) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Root mean square over weights of each weight's population standard
    /// deviation; 0 with fewer than two observations.
    pub fn pooled_std(&self) -> f64 {
        if self.count < 2 || self.m2.is_empty() {
            return 0.0;
        }
        let n = self.count as f64;
        (self.m2.iter().map(|s| s / n).sum::<f64>() / self.m2.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReluTrial {
    pub seed: u64,
    pub m: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub w0: TwoLayer,
    pub w: TwoLayer,
    /// Pooled per-weight gradient standard deviation across full batches.
    pub sigma_grad: f64,
    pub initial_train_loss: f64,
    pub initial_test_loss: f64,
    /// Mean per-sample losses after the epoch.
    pub train_loss: f64,
    pub test_loss: f64,
}

/// One epoch of mini-batch gradient descent on `W` over a seeded permutation
/// of `train`. The trailing partial batch still updates `W` but is left out
/// of the gradient spread.
pub fn run_relu_epoch(
    train: &Dataset,
    test: &Dataset,
    m: usize,
    eta: f64,
    batch_size: usize,
    seed: u64,
) -> Result<ReluTrial> {
    if eta.is_nan() || eta < 0.0 || !eta.is_finite() {
        return Err(Error::validation(format!(
            "learning rate {eta} must be finite and nonnegative"
        )));
    }
    if batch_size == 0 || train.is_empty() {
        return Err(Error::validation(
            "batch size and training set must be non-empty",
        ));
    }
    if train.dim() != test.dim() {
        return Err(Error::Dimension {
            op: "relu_epoch",
            lhs: vec![train.dim()],
            rhs: vec![test.dim()],
        });
    }
    let w0 = TwoLayer::init(m, train.dim(), rng::child_seed(seed, "init"))?;
    let mut net = w0.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng::rng_from_seed(rng::child_seed(seed, "order")));
    let mut spread = GradSpread::new(net.w.len());
    let mut steps = 0;
    for chunk in order.chunks(batch_size) {
        let g = net.batch_grad(train, chunk)?;
        if chunk.len() == batch_size {
            spread.push(&g);
        }
        net.step(&g, eta);
        steps += 1;
    }
    let trial = ReluTrial {
        seed,
        m,
        eta,
        batch_size,
        steps,
        initial_train_loss: w0.mean_loss(train)?,
        initial_test_loss: w0.mean_loss(test)?,
        train_loss: net.mean_loss(train)?,
        test_loss: net.mean_loss(test)?,
        sigma_grad: spread.pooled_std(),
        w0,
        w: net,
    };
    if !(trial.train_loss.is_finite() && trial.test_loss.is_finite()) {
        return Err(Error::Numeric(format!("ReLU trial {seed} diverged")));
    }
    Ok(trial)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluPopulation {
    pub trials: usize,
    pub classes: usize,
    pub per_class: usize,
    pub d: usize,
    pub spread: f64,
    pub train_size: usize,
    /// Inclusive range of hidden widths.
    pub widths: (usize, usize),
    /// Learning rates are drawn log-uniformly from this range.
    pub eta_range: (f64, f64),
    pub batch_size: usize,
}

impl Default for ReluPopulation {
    fn default() -> Self {
        ReluPopulation {
            trials: 200,
            classes: 10,
            per_class: 80,
            d: 64,
            spread: 1.0,
            train_size: 640,
            widths: (16, 128),
            eta_range: (1e-8, 1e-2),
            batch_size: 64,
        }
    }
}

/// Unit-norm clustered data with labels `k/(K−1)`, split into train and
/// held-out test sets.
pub fn relu_data(cfg: &ReluPopulation, seed: u64) -> Result<(Dataset, Dataset)> {
    let ds = synth_clusters(
        cfg.classes,
        cfg.per_class,
        cfg.d,
        cfg.spread,
        rng::child_seed(seed, "data"),
    )?
    .l2_normalize()?
    .to_regression()?;
    ds.shuffle_split(cfg.train_size, rng::child_seed(seed, "split"))
}

/// Independent trials on one shared dataset; each trial draws its width and
/// learning rate from its own seed. Runs in parallel, results in trial order.
pub fn run_relu_population(cfg: &ReluPopulation, seed: u64) -> Result<Vec<ReluTrial>> {
    let (lo, hi) = cfg.widths;
    let (elo, ehi) = cfg.eta_range;
    if cfg.trials == 0 || lo == 0 || hi < lo || !(elo > 0.0 && ehi >= elo) {
        return Err(Error::validation("invalid ReLU population config"));
    }
    let (train, test) = relu_data(cfg, seed)?;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let ts = rng::indexed_seed(seed, "relu-trial", t);
            let mut r = rng::rng_from_seed(rng::child_seed(ts, "hyper"));
            let m = r.random_range(lo..=hi);
            let eta = (elo.ln() + (ehi.ln() - elo.ln()) * r.random_range(0.0..1.0)).exp();
            run_relu_epoch(&train, &test, m, eta, cfg.batch_size, ts)
        })
        .collect()
}
