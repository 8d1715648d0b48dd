//! Trial populations behind each bound check, with CSV exports.

use rayon::prelude::*;

use super::gram::{
    check_gram_bounds, check_loss_decay, decay_config, run_gram_trial, summarize_gram, DecayReport,
    GramCheck, GramConfig, GramSummary,
};
use super::linear::{run_linear_population, EtaRule, LinearPopulation, LinearTrial};
use super::relu::{run_relu_population, ReluPopulation, ReluTrial};
use crate::error::{Error, Result};
use crate::eval::corr::spearman_rho;
use crate::eval::report::{csv_string, opt_real, real};
use crate::rng;

/// Three linear-model populations: the trend population (`η ~ U(0, 2/M)`),
/// a wide one (`η ~ U(0, 2)`) and one at `η = 1/M`.
#[derive(Debug, Clone)]
pub struct LinearResult {
    pub trend: Vec<LinearTrial>,
    pub wide: Vec<LinearTrial>,
    pub inverse_m: Vec<LinearTrial>,
    /// Spearman ρ(Σμ², loss_after) over the trend population.
    pub rho_mu: Option<f64>,
    /// Spearman ρ(Σσ², loss_after) over the `η = 1/M` population.
    pub rho_sigma: Option<f64>,
}

impl LinearResult {
    pub fn mean_bound_holds(&self) -> usize {
        self.trend
            .iter()
            .chain(&self.wide)
            .filter(|t| t.holds_mean())
            .count()
    }

    pub fn mean_bound_total(&self) -> usize {
        self.trend.len() + self.wide.len()
    }

    pub fn spread_bound_holds(&self) -> usize {
        self.inverse_m
            .iter()
            .filter(|t| t.holds_spread() == Some(true))
            .count()
    }

    /// Trials satisfying the bound with `(2 − η)` in place of `(2 − ηM)`.
    pub fn printed_form_holds(&self) -> usize {
        self.trend
            .iter()
            .chain(&self.wide)
            .filter(|t| super::linear::within(t.loss_after, t.bound_mean_alt))
            .count()
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::validation("trial count must be positive"));
    }
    Ok(())
}

pub fn linear_suite(trials: usize, seed: u64) -> Result<LinearResult> {
    check_trials(trials)?;
    let run = |rule, label| {
        run_linear_population(
            &LinearPopulation::new(trials, rule),
            rng::child_seed(seed, label),
        )
    };
    let trend = run(EtaRule::UniformOverM(2.0), "mean-trend")?;
    let wide = run(EtaRule::Uniform(0.0, 2.0), "mean-wide")?;
    let inverse_m = run(EtaRule::InverseM, "spread")?;
    let col = |v: &[LinearTrial], f: fn(&LinearTrial) -> f64| v.iter().map(f).collect::<Vec<f64>>();
    let rho_mu = spearman_rho(
        &col(&trend, |t| t.sum_mu_sq),
        &col(&trend, |t| t.loss_after),
    )?;
    let rho_sigma = spearman_rho(
        &col(&inverse_m, |t| t.sum_sigma_sq),
        &col(&inverse_m, |t| t.loss_after),
    )?;
    Ok(LinearResult {
        trend,
        wide,
        inverse_m,
        rho_mu,
        rho_sigma,
    })
}

pub fn linear_csv(r: &LinearResult) -> String {
    let mut rows = Vec::new();
    for (name, pop) in [
        ("mean_trend", &r.trend),
        ("mean_wide", &r.wide),
        ("spread", &r.inverse_m),
    ] {
        for t in pop {
            rows.push(vec![
                name.to_string(),
                t.seed.to_string(),
                t.m.to_string(),
                t.d.to_string(),
                real(t.eta),
                real(t.loss_before),
                real(t.loss_after),
                real(t.g_total),
                real(t.sum_mu_sq),
                real(t.sum_sigma_sq),
                real(t.bound_mean),
                real(t.bound_mean_alt),
                opt_real(t.bound_spread),
                t.holds_mean().to_string(),
                t.holds_spread()
                    .map_or_else(|| "NA".to_string(), |b| b.to_string()),
            ]);
        }
    }
    csv_string(
        &[
            "population",
            "seed",
            "m",
            "d",
            "eta",
            "loss_before",
            "loss_after",
            "g_total",
            "sum_mu_sq",
            "sum_sigma_sq",
            "bound_mean",
            "bound_mean_alt",
            "bound_spread",
            "holds_mean",
            "holds_spread",
        ],
        &rows,
    )
}

#[derive(Debug, Clone)]
pub struct ReluResult {
    pub trials: Vec<ReluTrial>,
    pub rho_train: Option<f64>,
    pub rho_test: Option<f64>,
}

pub fn relu_suite(trials: usize, seed: u64) -> Result<ReluResult> {
    check_trials(trials)?;
    let cfg = ReluPopulation {
        trials,
        ..ReluPopulation::default()
    };
    let trials = run_relu_population(&cfg, rng::child_seed(seed, "relu"))?;
    let sigma: Vec<f64> = trials.iter().map(|t| t.sigma_grad).collect();
    let train: Vec<f64> = trials.iter().map(|t| t.train_loss).collect();
    let test: Vec<f64> = trials.iter().map(|t| t.test_loss).collect();
    Ok(ReluResult {
        rho_train: spearman_rho(&sigma, &train)?,
        rho_test: spearman_rho(&sigma, &test)?,
        trials,
    })
}

pub fn relu_csv(r: &ReluResult) -> String {
    let rows: Vec<Vec<String>> = r
        .trials
        .iter()
        .map(|t| {
            vec![
                t.seed.to_string(),
                t.m.to_string(),
                real(t.eta),
                t.batch_size.to_string(),
                t.steps.to_string(),
                real(t.sigma_grad),
                real(t.initial_train_loss),
                real(t.initial_test_loss),
                real(t.train_loss),
                real(t.test_loss),
            ]
        })
        .collect();
    csv_string(
        &[
            "seed",
            "m",
            "eta",
            "batch_size",
            "steps",
            "sigma_grad",
            "initial_train_loss",
            "initial_test_loss",
            "train_loss",
            "test_loss",
        ],
        &rows,
    )
}

#[derive(Debug, Clone)]
pub struct GramResult {
    pub seeds: Vec<u64>,
    pub checks: Vec<GramCheck>,
    pub summary: GramSummary,
}

impl GramResult {
    /// Every satisfied fraction reaches `(1−δ)(1−ε)`.
    pub fn passed(&self) -> bool {
        let s = &self.summary;
        s.displacement >= s.probability_floor
            && s.lambda_min >= s.probability_floor
            && s.lambda_max >= s.probability_floor
    }
}

pub fn gram_suite(trials: usize, seed: u64) -> Result<GramResult> {
    check_trials(trials)?;
    let cfg = GramConfig::default();
    let params = cfg.params()?;
    let seeds: Vec<u64> = (0..trials as u64)
        .map(|i| rng::indexed_seed(seed, "gram-trial", i))
        .collect();
    let checks = seeds
        .par_iter()
        .map(|&s| check_gram_bounds(&run_gram_trial(&cfg, s)?, &params))
        .collect::<Result<Vec<_>>>()?;
    Ok(GramResult {
        summary: summarize_gram(&checks, &params),
        seeds,
        checks,
    })
}

pub fn gram_csv(r: &GramResult) -> String {
    let rows: Vec<Vec<String>> = r
        .seeds
        .iter()
        .zip(&r.checks)
        .map(|(s, c)| {
            vec![
                s.to_string(),
                real(c.eta),
                real(c.eta_threshold),
                real(c.sigma),
                real(c.displacement),
                real(c.c),
                real(c.perturbation),
                real(c.lambda_min_0),
                real(c.lambda_min_t),
                real(c.lambda_max_0),
                real(c.lambda_max_t),
                c.displacement_ok.to_string(),
                c.lambda_min_ok.to_string(),
                c.lambda_max_ok.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "seed",
            "eta",
            "eta_threshold",
            "sigma",
            "displacement",
            "c",
            "perturbation",
            "lambda_min_0",
            "lambda_min_t",
            "lambda_max_0",
            "lambda_max_t",
            "displacement_ok",
            "lambda_min_ok",
            "lambda_max_ok",
        ],
        &rows,
    )
}

#[derive(Debug, Clone)]
pub struct DecayResult {
    pub seeds: Vec<u64>,
    pub losses: Vec<Vec<f64>>,
    pub lambda_min: Vec<Vec<f64>>,
    pub reports: Vec<DecayReport>,
}

impl DecayResult {
    fn fraction(&self, f: impl Fn(&DecayReport) -> &Vec<bool>) -> f64 {
        let all: Vec<bool> = self
            .reports
            .iter()
            .flat_map(|r| f(r).iter().copied())
            .collect();
        if all.is_empty() {
            return 1.0;
        }
        all.iter().filter(|&&b| b).count() as f64 / all.len() as f64
    }

    pub fn fraction_current(&self) -> f64 {
        self.fraction(|r| &r.current_rate)
    }

    pub fn fraction_initial(&self) -> f64 {
        self.fraction(|r| &r.initial_rate)
    }
}

pub fn decay_suite(trials: usize, seed: u64) -> Result<DecayResult> {
    check_trials(trials)?;
    let cfg = decay_config();
    let params = cfg.params()?;
    let seeds: Vec<u64> = (0..trials as u64)
        .map(|i| rng::indexed_seed(seed, "decay-trial", i))
        .collect();
    let runs = seeds
        .par_iter()
        .map(|&s| {
            let t = run_gram_trial(&cfg, s)?;
            let r = check_loss_decay(&t, &params)?;
            Ok((t.losses, t.lambda_min_steps, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = DecayResult {
        seeds,
        losses: Vec::new(),
        lambda_min: Vec::new(),
        reports: Vec::new(),
    };
    for (l, e, r) in runs {
        out.losses.push(l);
        out.lambda_min.push(e);
        out.reports.push(r);
    }
    Ok(out)
}

pub fn decay_csv(r: &DecayResult) -> String {
    let mut rows = Vec::new();
    for (i, rep) in r.reports.iter().enumerate() {
        for k in 1..=rep.steps {
            rows.push(vec![
                r.seeds[i].to_string(),
                k.to_string(),
                real(r.losses[i][k - 1]),
                real(r.losses[i][k]),
                real(r.lambda_min[i][k]),
                rep.current_rate[k - 1].to_string(),
                rep.initial_rate[k - 1].to_string(),
            ]);
        }
    }
    csv_string(
        &[
            "seed",
            "step",
            "loss_prev",
            "loss",
            "lambda_min",
            "current_rate",
            "initial_rate",
        ],
        &rows,
    )
}
