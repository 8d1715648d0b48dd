//! Activation-gated Gram matrix of the two-layer ReLU network and the
//! eigenvalue perturbation bounds it obeys under small learning rates.

use std::f64::consts::PI;

use serde::Serialize;

use super::chi2::chi2_inv_cdf;
use super::eigen::{sym_eigen, Eigen};
use super::relu::{GradSpread, TwoLayer};
use crate::data::{synth_clusters, Dataset};
use crate::error::{Error, Result};
use crate::rng;

/// Slack allowed on unit-norm rows.
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct GramMatrix {
    pub n: usize,
    /// Row-major `n × n`.
    pub h: Vec<f64>,
    #[serde(skip)]
    pub eigen: Eigen,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.n + j]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigen.min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigen.max()
    }
}

/// `H_ij = (1/m) x_iᵀx_j Σ_r I{x_iᵀw_r ≥ 0 ∧ x_jᵀw_r ≥ 0}` for unit-norm rows
/// `x` (n×d) and weight rows `w` (m×d).
pub fn gram_matrix(x: &[f64], n: usize, w: &[f64], m: usize, d: usize) -> Result<GramMatrix> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::validation(
            "Gram matrix needs positive sample count, width and dimension",
        ));
    }
    if x.len() != n * d || w.len() != m * d {
        return Err(Error::Dimension {
            op: "gram_matrix",
            lhs: vec![n, d],
            rhs: vec![m, d],
        });
    }
    for i in 0..n {
        let norm = x[i * d..(i + 1) * d]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(format!(
                "row {i} has norm {norm}, expected 1"
            )));
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let active: Vec<bool> = (0..n)
        .flat_map(|i| (0..m).map(move |r| (i, r)))
        .map(|(i, r)| dot(&x[i * d..(i + 1) * d], &w[r * d..(r + 1) * d]) >= 0.0)
        .collect();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let shared = (0..m)
                .filter(|&r| active[i * m + r] && active[j * m + r])
                .count();
            let v = dot(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]) * shared as f64 / m as f64;
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
    let eigen = sym_eigen(&h, n)?;
    Ok(GramMatrix { n, h, eigen })
}

/// Gram matrix of a dataset's inputs under a network's first layer.
pub fn gram_of(ds: &Dataset, net: &TwoLayer) -> Result<GramMatrix> {
    gram_matrix(ds.samples(), ds.len(), &net.w, net.m, net.d)
}

/// Confidence parameters and the chi-squared quantile `Φ(1−ε)` for `d`
/// degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub delta: f64,
    pub epsilon: f64,
    pub d: u32,
    pub phi_value: f64,
}

impl BoundParams {
    pub fn new(delta: f64, epsilon: f64, d: u32) -> Result<Self> {
        for (name, v) in [("delta", delta), ("epsilon", epsilon)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        Ok(BoundParams {
            delta,
            epsilon,
            d,
            phi_value: chi2_inv_cdf(1.0 - epsilon, d)?,
        })
    }

    /// `(1−δ)(1−ε)`.
    pub fn probability_floor(&self) -> f64 {
        (1.0 - self.delta) * (1.0 - self.epsilon)
    }

    /// Displacement radius `C = η t σ √Φ`.
    pub fn c(&self, eta: f64, t: usize, sigma: f64) -> f64 {
        eta * t as f64 * sigma * self.phi_value.sqrt()
    }

    /// Eigenvalue perturbation `2√2 M² η t σ √Φ / (√π δ)`.
    pub fn perturbation(&self, samples: usize, eta: f64, t: usize, sigma: f64) -> f64 {
        let m2 = (samples * samples) as f64;
        2.0 * 2f64.sqrt() * m2 * eta * t as f64 * sigma * self.phi_value.sqrt()
            / (PI.sqrt() * self.delta)
    }

    /// Largest admissible learning rate `λ₀√π δ / (2M²√2 Φ t σ)`; infinite
    /// when `t σ = 0`.
    pub fn eta_threshold(&self, lambda0: f64, samples: usize, t: usize, sigma: f64) -> f64 {
        let denom =
            2.0 * (samples * samples) as f64 * 2f64.sqrt() * self.phi_value * t as f64 * sigma;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            lambda0 * PI.sqrt() * self.delta / denom
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EtaChoice {
    Fixed(f64),
    /// This fraction of the threshold evaluated with the pilot σ.
    FractionOfThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramConfig {
    /// Training-set size M.
    pub samples: usize,
    /// Hidden width m.
    pub width: usize,
    pub d: usize,
    pub classes: usize,
    pub spread: f64,
    pub batch_size: usize,
    /// Gradient steps t; batches cycle through the samples in order.
    pub steps: usize,
    pub eta: EtaChoice,
    pub delta: f64,
    pub epsilon: f64,
    /// Record the loss and Gram spectrum after every step.
    pub track_steps: bool,
}

impl Default for GramConfig {
    fn default() -> Self {
        GramConfig {
            samples: 16,
            width: 64,
            d: 32,
            classes: 4,
            spread: 2.0,
            batch_size: 1,
            steps: 16,
            eta: EtaChoice::FractionOfThreshold(0.5),
            delta: 0.1,
            epsilon: 0.1,
            track_steps: false,
        }
    }
}

impl GramConfig {
    pub fn params(&self) -> Result<BoundParams> {
        BoundParams::new(self.delta, self.epsilon, self.d as u32)
    }
}

/// A gradient-descent run of the two-layer network together with the Gram
/// matrices at its start and end.
#[derive(Debug, Clone, Serialize)]
pub struct GramTrial {
    pub seed: u64,
    pub samples: usize,
    pub eta: f64,
    pub t: usize,
    pub w0: TwoLayer,
    pub wt: TwoLayer,
    /// Pooled per-weight std of single-batch gradients at initialization.
    pub sigma_pilot: f64,
    /// Pooled per-weight std of the gradients taken during the run.
    pub sigma_run: f64,
    pub h0: GramMatrix,
    pub ht: GramMatrix,
    /// Total loss `L(W(k))` for `k = 0..=t` when tracked.
    pub losses: Vec<f64>,
    /// `λ_min(H(k))` for `k = 0..=t` when tracked.
    pub lambda_min_steps: Vec<f64>,
}

impl GramTrial {
    /// σ used by the bounds: the run estimate, or the pilot estimate when the
    /// run has fewer than two steps.
    pub fn sigma(&self) -> f64 {
        if self.t >= 2 {
            self.sigma_run
        } else {
            self.sigma_pilot
        }
    }
}

fn gram_data(cfg: &GramConfig, seed: u64) -> Result<Dataset> {
    if cfg.classes < 2 || !cfg.samples.is_multiple_of(cfg.classes) {
        return Err(Error::validation(format!(
            "sample count {} must be a multiple of the class count {}",
            cfg.samples, cfg.classes
        )));
    }
    synth_clusters(
        cfg.classes,
        cfg.samples / cfg.classes,
        cfg.d,
        cfg.spread,
        seed,
    )?
    .l2_normalize()?
    .to_regression()
}

pub fn run_gram_trial(cfg: &GramConfig, seed: u64) -> Result<GramTrial> {
    let params = cfg.params()?;
    if cfg.batch_size == 0 || cfg.batch_size > cfg.samples {
        return Err(Error::validation("batch size must lie in 1..=samples"));
    }
    let ds = gram_data(cfg, rng::child_seed(seed, "data"))?;
    let w0 = TwoLayer::init(cfg.width, cfg.d, rng::child_seed(seed, "init"))?;
    let batches: Vec<Vec<usize>> = (0..cfg.samples)
        .collect::<Vec<_>>()
        .chunks(cfg.batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    let mut pilot = GradSpread::new(w0.w.len());
    for b in &batches {
        pilot.push(&w0.batch_grad(&ds, b)?);
    }
    let sigma_pilot = pilot.pooled_std();
    let h0 = gram_of(&ds, &w0)?;
    let eta = match cfg.eta {
        EtaChoice::Fixed(e) => e,
        EtaChoice::FractionOfThreshold(f) => {
            f * params.eta_threshold(h0.lambda_min(), cfg.samples, cfg.steps, sigma_pilot)
        }
    };
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::validation(format!(
            "learning rate {eta} must be finite and nonnegative"
        )));
    }
    let mut net = w0.clone();
    let mut spread = GradSpread::new(net.w.len());
    let (mut losses, mut lambda_min_steps) = (Vec::new(), Vec::new());
    if cfg.track_steps {
        losses.push(net.loss(&ds)?);
        lambda_min_steps.push(h0.lambda_min());
    }
    for k in 0..cfg.steps {
        let g = net.batch_grad(&ds, &batches[k % batches.len()])?;
        spread.push(&g);
        net.step(&g, eta);
        if cfg.track_steps {
            losses.push(net.loss(&ds)?);
            lambda_min_steps.push(gram_of(&ds, &net)?.lambda_min());
        }
    }
    if !net.w.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(format!("Gram trial {seed} diverged")));
    }
    Ok(GramTrial {
        seed,
        samples: cfg.samples,
        eta,
        t: cfg.steps,
        ht: gram_of(&ds, &net)?,
        h0,
        w0,
        wt: net,
        sigma_pilot,
        sigma_run: spread.pooled_std(),
        losses,
        lambda_min_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramCheck {
    pub eta: f64,
    pub eta_threshold: f64,
    pub sigma: f64,
    pub displacement: f64,
    pub c: f64,
    pub perturbation: f64,
    pub lambda_min_0: f64,
    pub lambda_min_t: f64,
    pub lambda_max_0: f64,
    pub lambda_max_t: f64,
    pub displacement_ok: bool,
    pub lambda_min_ok: bool,
    pub lambda_max_ok: bool,
}

impl GramCheck {
    pub fn all_ok(&self) -> bool {
        self.displacement_ok && self.lambda_min_ok && self.lambda_max_ok
    }
}

/// Checks `max_r ‖w_r(0) − w_r(t)‖ ≤ C` and the two eigenvalue bounds. The
/// learning-rate precondition uses `λ₀ = λ_min(H(0))` and the pilot σ that
/// chose η.
pub fn check_gram_bounds(trial: &GramTrial, params: &BoundParams) -> Result<GramCheck> {
    let lambda0 = trial.h0.lambda_min();
    let eta_threshold = params.eta_threshold(lambda0, trial.samples, trial.t, trial.sigma_pilot);
    if trial.t > 0 && trial.eta > 0.0 && trial.eta >= eta_threshold {
        return Err(Error::Precondition(format!(
            "learning rate {} is not below the threshold {eta_threshold}",
            trial.eta
        )));
    }
    let sigma = trial.sigma();
    let c = params.c(trial.eta, trial.t, sigma);
    let perturbation = params.perturbation(trial.samples, trial.eta, trial.t, sigma);
    let displacement = trial.w0.max_row_distance(&trial.wt);
    Ok(GramCheck {
        eta: trial.eta,
        eta_threshold,
        sigma,
        displacement,
        c,
        perturbation,
        lambda_min_0: lambda0,
        lambda_min_t: trial.ht.lambda_min(),
        lambda_max_0: trial.h0.lambda_max(),
        lambda_max_t: trial.ht.lambda_max(),
        displacement_ok: displacement <= c,
        lambda_min_ok: trial.ht.lambda_min() >= lambda0 - perturbation,
        lambda_max_ok: trial.ht.lambda_max() <= trial.h0.lambda_max() + perturbation,
    })
}

/// Fractions of trials satisfying each Gram check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramSummary {
    pub trials: usize,
    pub displacement: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub probability_floor: f64,
}

pub fn summarize_gram(checks: &[GramCheck], params: &BoundParams) -> GramSummary {
    let n = checks.len().max(1) as f64;
    let frac = |f: fn(&GramCheck) -> bool| checks.iter().filter(|c| f(c)).count() as f64 / n;
    GramSummary {
        trials: checks.len(),
        displacement: frac(|c| c.displacement_ok),
        lambda_min: frac(|c| c.lambda_min_ok),
        lambda_max: frac(|c| c.lambda_max_ok),
        probability_floor: params.probability_floor(),
    }
}

/// Per-step loss-decay checks `L(k) ≤ e^{−λ_min(H(k))} L(k−1)` and the
/// composed form with `λ_min(H(0))` minus the perturbation term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub steps: usize,
    pub current_rate: Vec<bool>,
    pub initial_rate: Vec<bool>,
}

impl DecayReport {
    pub fn fraction_current(&self) -> f64 {
        fraction(&self.current_rate)
    }

    pub fn fraction_initial(&self) -> f64 {
        fraction(&self.initial_rate)
    }
}

fn fraction(v: &[bool]) -> f64 {
    if v.is_empty() {
        1.0
    } else {
        v.iter().filter(|&&b| b).count() as f64 / v.len() as f64
    }
}

pub fn check_loss_decay(trial: &GramTrial, params: &BoundParams) -> Result<DecayReport> {
    if trial.losses.len() != trial.t + 1 || trial.lambda_min_steps.len() != trial.t + 1 {
        return Err(Error::validation("trial was run without per-step tracking"));
    }
    let sigma = trial.sigma();
    let lambda0 = trial.lambda_min_steps[0];
    let mut current_rate = Vec::with_capacity(trial.t);
    let mut initial_rate = Vec::with_capacity(trial.t);
    for k in 1..=trial.t {
        let (prev, cur) = (trial.losses[k - 1], trial.losses[k]);
        current_rate.push(cur <= (-trial.lambda_min_steps[k]).exp() * prev);
        let pert = params.perturbation(trial.samples, trial.eta, k, sigma);
        initial_rate.push(cur <= (-lambda0).exp() * pert.exp() * prev);
    }
    Ok(DecayReport {
        steps: trial.t,
        current_rate,
        initial_rate,
    })
}

/// Loss-decay regime at desk scale: M = 8 samples, width 256, full-batch steps.
pub fn decay_config() -> GramConfig {
    GramConfig {
        samples: 8,
        width: 256,
        batch_size: 8,
        steps: 20,
        eta: EtaChoice::Fixed(0.1),
        track_steps: true,
        ..GramConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_indicator_trace() {
        let r = 2f64.sqrt() / 2.0;
        let x = [1.0, 0.0, r, r];
        let w = [1.0, 1.0, -1.0, 1.0];
        let h = gram_matrix(&x, 2, &w, 2, 2).unwrap();
        assert!((h.get(0, 1) - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert_eq!(h.get(0, 0), 0.5);
        assert_eq!(h.get(0, 1), h.get(1, 0));
    }

    #[test]
    fn all_active_gives_inner_products() {
        let x = [1.0, 0.0, 0.6, 0.8];
        let w = [1.0, 1.0, 2.0, 3.0, 0.5, 0.1];
        let h = gram_matrix(&x, 2, &w, 3, 2).unwrap();
        assert!((h.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((h.get(1, 1) - 1.0).abs() < 1e-15);
        assert!((h.get(0, 1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(gram_matrix(&[], 0, &[1.0], 1, 1).is_err());
        assert!(gram_matrix(&[2.0], 1, &[1.0], 1, 1).is_err());
        assert!(BoundParams::new(0.0, 0.1, 3).is_err());
    }

    #[test]
    fn zero_steps_hold_with_equality() {
        let cfg = GramConfig {
            steps: 0,
            eta: EtaChoice::Fixed(0.3),
            ..GramConfig::default()
        };
        let t = run_gram_trial(&cfg, 4).unwrap();
        let c = check_gram_bounds(&t, &cfg.params().unwrap()).unwrap();
        assert_eq!(c.perturbation, 0.0);
        assert_eq!(c.displacement, 0.0);
        assert_eq!(c.lambda_min_t, c.lambda_min_0);
        assert!(c.all_ok());
    }

    #[test]
    fn vanishing_step_holds() {
        let cfg = GramConfig {
            steps: 1,
            eta: EtaChoice::Fixed(1e-12),
            ..GramConfig::default()
        };
        let t = run_gram_trial(&cfg, 4).unwrap();
        let c = check_gram_bounds(&t, &cfg.params().unwrap()).unwrap();
        assert!(c.displacement < 1e-10);
        assert!(c.all_ok(), "{c:?}");
    }

    #[test]
    fn threshold_violation_is_precondition_error() {
        let cfg = GramConfig {
            eta: EtaChoice::FractionOfThreshold(2.0),
            ..GramConfig::default()
        };
        let t = run_gram_trial(&cfg, 1).unwrap();
        let e = check_gram_bounds(&t, &cfg.params().unwrap()).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
        assert!(e.to_string().contains("threshold"));
    }

    #[test]
    fn decay_zero_loss_and_zero_eigenvalue_cases() {
        let cfg = GramConfig {
            steps: 2,
            track_steps: true,
            eta: EtaChoice::Fixed(0.0),
            ..GramConfig::default()
        };
        let mut t = run_gram_trial(&cfg, 2).unwrap();
        t.losses = vec![0.0; 3];
        let p = cfg.params().unwrap();
        assert_eq!(check_loss_decay(&t, &p).unwrap().fraction_current(), 1.0);
        t.losses = vec![1.0; 3];
        t.lambda_min_steps = vec![0.0; 3];
        assert_eq!(check_loss_decay(&t, &p).unwrap().fraction_current(), 1.0);
    }
}
