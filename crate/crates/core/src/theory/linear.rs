//! One accumulated gradient step of a linear model under the summed MSE loss,
//! and the loss bounds expressed through gradient mean and variance.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::data::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::rng;

/// Relative slack allowed when checking a bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct LinearTrial {
    pub seed: u64,
    pub m: usize,
    pub d: usize,
    pub eta: f64,
    pub a: Vec<f64>,
    pub a_hat: Vec<f64>,
    pub loss_before: f64,
    pub loss_after: f64,
    /// `Σ_i Σ_j g_j(x_i)²`.
    pub g_total: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sum_mu_sq: f64,
    pub sum_sigma_sq: f64,
    /// `G/2 − (η/2)M²(2 − ηM)Σμ_j²`.
    pub bound_mean: f64,
    /// `G/2 − (η/2)M²(2 − η)Σμ_j²`, informative only.
    pub bound_mean_alt: f64,
    /// `(M/2)Σσ_j²`, present when `η = 1/M`.
    pub bound_spread: Option<f64>,
}

pub fn within(value: f64, bound: f64) -> bool {
    value <= bound + BOUND_SLACK * bound.abs()
}

impl LinearTrial {
    pub fn holds_mean(&self) -> bool {
        within(self.loss_after, self.bound_mean)
    }

    pub fn holds_spread(&self) -> Option<bool> {
        self.bound_spread.map(|b| within(self.loss_after, b))
    }
}

fn loss(ds: &Dataset, y: &[f64], a: &[f64]) -> f64 {
    (0..ds.len())
        .map(|i| {
            let r: f64 = ds.row(i).iter().zip(a).map(|(x, w)| x * w).sum::<f64>() - y[i];
            0.5 * r * r
        })
        .sum()
}

/// Gradients `g(x_i) = (aᵀx_i − y_i) x_i` at `a`, update
/// `â = a − η Σ_i g(x_i)`, and the resulting bounds.
pub fn run_linear_trial(ds: &Dataset, a: &[f64], eta: f64, seed: u64) -> Result<LinearTrial> {
    if !(eta > 0.0 && eta < 2.0) {
        return Err(Error::validation(format!(
            "learning rate {eta} outside (0, 2)"
        )));
    }
    if !ds.is_normalized() {
        return Err(Error::validation(
            "linear trials need an L2-normalized dataset",
        ));
    }
    let y = ds.real_labels()?;
    let (m, d) = (ds.len(), ds.dim());
    if a.len() != d {
        return Err(Error::Dimension {
            op: "linear_trial",
            lhs: vec![d],
            rhs: vec![a.len()],
        });
    }
    let mut grads = vec![0.0; m * d];
    for i in 0..m {
        let x = ds.row(i);
        let r: f64 = x.iter().zip(a).map(|(x, w)| x * w).sum::<f64>() - y[i];
        for j in 0..d {
            grads[i * d + j] = r * x[j];
        }
    }
    let mf = m as f64;
    let mut sum_g = vec![0.0; d];
    for row in grads.chunks(d) {
        sum_g.iter_mut().zip(row).for_each(|(s, g)| *s += g);
    }
    let mu: Vec<f64> = sum_g.iter().map(|s| s / mf).collect();
    let mut var = vec![0.0; d];
    for row in grads.chunks(d) {
        var.iter_mut()
            .zip(row)
            .zip(&mu)
            .for_each(|((v, g), u)| *v += (g - u) * (g - u) / mf);
    }
    let sigma: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let a_hat: Vec<f64> = a.iter().zip(&sum_g).map(|(w, s)| w - eta * s).collect();
    let g_total: f64 = grads.iter().map(|g| g * g).sum();
    let sum_mu_sq: f64 = mu.iter().map(|u| u * u).sum();
    let sum_sigma_sq: f64 = var.iter().sum();
    let bound_mean = g_total / 2.0 - eta / 2.0 * mf * mf * (2.0 - eta * mf) * sum_mu_sq;
    let bound_mean_alt = g_total / 2.0 - eta / 2.0 * mf * mf * (2.0 - eta) * sum_mu_sq;
    let bound_spread = ((eta * mf - 1.0).abs() < 1e-12).then(|| mf / 2.0 * sum_sigma_sq);
    Ok(LinearTrial {
        seed,
        m,
        d,
        eta,
        loss_before: loss(ds, y, a),
        loss_after: loss(ds, y, &a_hat),
        a: a.to_vec(),
        a_hat,
        g_total,
        mu,
        sigma,
        sum_mu_sq,
        sum_sigma_sq,
        bound_mean,
        bound_mean_alt,
        bound_spread,
    })
}

/// How each trial of a population picks its learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    Fixed(f64),
    /// `η = 1/M`.
    InverseM,
    /// `η ~ U(lo, hi)`.
    Uniform(f64, f64),
    /// `η ~ U(0, scale/M)`.
    UniformOverM(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPopulation {
    pub trials: usize,
    pub m: usize,
    pub d: usize,
    pub classes: usize,
    /// Std of the initial weights.
    pub a_scale: f64,
    pub eta: EtaRule,
}

impl LinearPopulation {
    pub fn new(trials: usize, eta: EtaRule) -> Self {
        LinearPopulation {
            trials,
            m: 32,
            d: 64,
            classes: 10,
            a_scale: 0.1,
            eta,
        }
    }
}

/// Unit-norm samples `normalize(c·u + (1−c)·z/√d)` around a random
/// nonnegative direction `u` with coherence `c ~ U(0,1)`, and labels
/// `k/(K−1)` for uniformly drawn classes `k`.
pub fn coherent_dataset(m: usize, d: usize, classes: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::rng_from_seed(seed);
    let c: f64 = r.random_range(0.0..1.0);
    let u: Vec<f64> = (0..d)
        .map(|_| StandardNormal.sample(&mut r))
        .map(|v: f64| v.abs())
        .collect();
    let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sd = (d as f64).sqrt();
    let mut samples = Vec::with_capacity(m * d);
    for _ in 0..m {
        for &uj in &u {
            let z: f64 = StandardNormal.sample(&mut r);
            samples.push(c * uj / un + (1.0 - c) * z / sd);
        }
    }
    let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..classes)).collect();
    Dataset::new(samples, vec![d], Labels::Class { labels, classes })?
        .l2_normalize()?
        .to_regression()
}

/// Runs independent trials, each with its own dataset, initial weights and
/// learning rate derived from `seed` and the trial index.
pub fn run_linear_population(cfg: &LinearPopulation, seed: u64) -> Result<Vec<LinearTrial>> {
    if cfg.trials == 0 {
        return Err(Error::validation("trial count must be positive"));
    }
    (0..cfg.trials as u64)
        .map(|t| {
            let ts = rng::indexed_seed(seed, "linear-trial", t);
            let ds = coherent_dataset(cfg.m, cfg.d, cfg.classes, rng::child_seed(ts, "data"))?;
            let mut r = rng::rng_from_seed(rng::child_seed(ts, "init"));
            let normal =
                Normal::new(0.0, cfg.a_scale).map_err(|e| Error::validation(e.to_string()))?;
            let a: Vec<f64> = (0..cfg.d).map(|_| normal.sample(&mut r)).collect();
            let mf = cfg.m as f64;
            let eta = match cfg.eta {
                EtaRule::Fixed(e) => e,
                EtaRule::InverseM => 1.0 / mf,
                EtaRule::Uniform(lo, hi) => lo + (hi - lo) * r.random_range(f64::EPSILON..1.0),
                EtaRule::UniformOverM(s) => s / mf * r.random_range(f64::EPSILON..1.0),
            };
            run_linear_trial(&ds, &a, eta, ts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_hand_case() {
        let ds = Dataset::new(vec![1.0], vec![1], Labels::Real(vec![0.5]))
            .unwrap()
            .l2_normalize()
            .unwrap();
        let t = run_linear_trial(&ds, &[1.0], 1.0, 0).unwrap();
        assert_eq!(t.a_hat, vec![0.5]);
        assert_eq!(t.loss_after, 0.0);
        assert_eq!(t.g_total, 0.25);
        assert_eq!(t.bound_mean, 0.0);
        assert!(t.holds_mean());
        assert_eq!(t.bound_spread, Some(0.0));
    }

    #[test]
    fn perfect_fit_has_zero_bound() {
        let ds = Dataset::new(
            vec![0.6, 0.8, 1.0, 0.0],
            vec![2],
            Labels::Real(vec![0.6, 1.0]),
        )
        .unwrap()
        .l2_normalize()
        .unwrap();
        let t = run_linear_trial(&ds, &[1.0, 0.0], 0.3, 0).unwrap();
        assert_eq!(t.loss_after, 0.0);
        assert_eq!(t.bound_mean, 0.0);
    }

    #[test]
    fn preconditions() {
        let ds = Dataset::new(vec![1.0, 2.0], vec![1], Labels::Real(vec![0.0, 0.0])).unwrap();
        assert!(run_linear_trial(&ds, &[1.0], 0.5, 0).is_err());
        let ds = ds.l2_normalize().unwrap();
        assert!(run_linear_trial(&ds, &[1.0], 2.0, 0).is_err());
        assert!(run_linear_trial(&ds, &[1.0], 0.0, 0).is_err());
    }
}
