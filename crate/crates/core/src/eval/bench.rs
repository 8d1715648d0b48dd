//! Benchmark sweeps: score every candidate with all proxies at
//! initialization, train it to a held-out accuracy, and rank-correlate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corr::{kendall_tau, spearman_rho};
use super::train::{train_network, TrainConfig};
use crate::data::{synth_motifs, Batch, Dataset, MotifConfig};
use crate::error::{Error, Result};
use crate::proxies::{evaluate_all, GradStats, ProxyKind, ProxyValues};
use crate::rng;
use crate::space::{Genome, Network, SpaceConfig, WidthSpace};

/// Synthetic data used by benchmark sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchData {
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,
    pub motif: usize,
    pub stamps: usize,
    pub noise: f64,
    pub train_size: usize,
}

impl Default for BenchData {
    fn default() -> Self {
        let m = MotifConfig::default();
        BenchData {
            classes: m.classes,
            per_class: m.per_class,
            side: m.side,
            motif: m.motif,
            stamps: m.stamps,
            noise: m.noise,
            train_size: 2000,
        }
    }
}

impl BenchData {
    pub fn tag(&self) -> String {
        format!(
            "motifs-{}x{}-k{}-n{}",
            self.side,
            self.side,
            self.classes,
            self.per_class * self.classes
        )
    }

    /// Generates, splits and standardizes with training statistics.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let cfg = MotifConfig {
            classes: self.classes,
            per_class: self.per_class,
            side: self.side,
            motif: self.motif,
            stamps: self.stamps,
            noise: self.noise,
        };
        let ds = synth_motifs(&cfg, rng::child_seed(seed, "data"))?;
        let (train, test) = ds.shuffle_split(self.train_size, rng::child_seed(seed, "split"))?;
        let (train, mut rest) = train.standardize(&[&test])?;
        Ok((train, rest.remove(0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub space: SpaceConfig,
    pub data: BenchData,
    pub train: TrainConfig,
    /// Batches N used by the gradient-statistics proxies.
    pub proxy_batches: usize,
    pub proxy_batch_size: usize,
    /// Uniform sample without replacement of this many genomes; the full
    /// space when absent.
    pub sample: Option<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            space: SpaceConfig::Width(WidthSpace::default()),
            data: BenchData::default(),
            train: TrainConfig::default(),
            proxy_batches: 2,
            proxy_batch_size: 64,
            sample: None,
            seed: 0,
        }
    }
}

/// One benchmark row: a genome, every proxy at initialization, and its
/// trained accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub genome: Genome,
    pub proxies: ProxyValues,
    pub accuracy: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub proxy: String,
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub dataset: String,
    pub config_digest: String,
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationReport {
    pub fn get(&self, proxy: ProxyKind) -> Option<&CorrelationRow> {
        self.rows.iter().find(|r| r.proxy == proxy.name())
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub records: Vec<BenchmarkRecord>,
    pub diverged: Vec<bool>,
    pub report: CorrelationReport,
}

/// Hex SHA-256 of a value's JSON form.
pub fn digest<T: Serialize>(v: &T) -> String {
    rng::hex_digest(&serde_json::to_vec(v).expect("config serializes"))
}

/// Kendall tau-b and Spearman rho of each proxy against accuracy.
pub fn correlate(
    records: &[BenchmarkRecord],
    dataset: &str,
    config_digest: &str,
) -> Result<CorrelationReport> {
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let rows = ProxyKind::ALL
        .iter()
        .map(|&p| {
            let x: Vec<f64> = records.iter().map(|r| r.proxies.get(p)).collect();
            Ok(CorrelationRow {
                proxy: p.name().to_string(),
                kendall_tau: kendall_tau(&x, &acc)?,
                spearman_rho: spearman_rho(&x, &acc)?,
                n: records.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationReport {
        dataset: dataset.to_string(),
        config_digest: config_digest.to_string(),
        rows,
    })
}

/// Shared inputs of a sweep: data splits, the fixed proxy batch pool and
/// the genome list.
pub struct BenchContext {
    pub config: BenchConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub genomes: Vec<Genome>,
}

impl BenchContext {
    pub fn new(config: BenchConfig) -> Result<Self> {
        config.space.validate()?;
        config.train.validate()?;
        if config.proxy_batches < 2 {
            return Err(Error::validation(
                "gradient-statistics proxies need at least 2 batches",
            ));
        }
        if config.proxy_batch_size == 0 {
            return Err(Error::validation("proxy batch size must be at least 1"));
        }
        let (train, test) = config.data.load(config.seed)?;
        let mut genomes = config.space.enumerate()?;
        if let Some(n) = config.sample {
            if n == 0 || n > genomes.len() {
                return Err(Error::validation(format!(
                    "sample size {n} must lie in 1..={}",
                    genomes.len()
                )));
            }
            use rand::seq::SliceRandom;
            genomes.shuffle(&mut rng::rng_from_seed(rng::child_seed(
                config.seed,
                "sample",
            )));
            genomes.truncate(n);
            genomes.sort();
        }
        Ok(BenchContext {
            config,
            train,
            test,
            genomes,
        })
    }

    pub fn classes(&self) -> usize {
        self.train.classes().expect("benchmark data has classes")
    }

    /// First `n` batches of `size` from a fixed shuffle of the training set.
    pub fn proxy_batches(&self, n: usize, size: usize) -> Result<Vec<Batch>> {
        if size == 0 {
            return Err(Error::validation("batch size must be at least 1"));
        }
        if n * size > self.train.len() {
            return Err(Error::validation(format!(
                "{n} batches of {size} exceed the {} training samples",
                self.train.len()
            )));
        }
        let mut b = self
            .train
            .batch_iter(size, rng::child_seed(self.config.seed, "proxy-batches"))?;
        b.truncate(n);
        Ok(b)
    }

    pub fn genome_seed(&self, g: &Genome) -> u64 {
        rng::child_seed(self.config.seed, &g.key())
    }

    /// The untrained network of a genome.
    pub fn network(&self, g: &Genome) -> Result<Network> {
        self.config.space.instantiate(
            g,
            self.train.sample_shape(),
            self.classes(),
            rng::child_seed(self.genome_seed(g), "init"),
        )
    }
}

pub fn run_benchmark(config: BenchConfig) -> Result<(BenchContext, BenchResult)> {
    let ctx = BenchContext::new(config)?;
    let batches = ctx.proxy_batches(ctx.config.proxy_batches, ctx.config.proxy_batch_size)?;
    let rows = ctx
        .genomes
        .par_iter()
        .map(|g| {
            let seed = ctx.genome_seed(g);
            let mut net = ctx.network(g)?;
            let proxies = evaluate_all(&net, &batches)?;
            let train_cfg = TrainConfig {
                seed: rng::child_seed(seed, "train"),
                ..ctx.config.train.clone()
            };
            let out = train_network(&mut net, &ctx.train, &ctx.test, &train_cfg)?;
            Ok((
                BenchmarkRecord {
                    genome: g.clone(),
                    proxies,
                    accuracy: out.accuracy,
                    seed,
                },
                out.diverged,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (records, diverged): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let report = correlate(&records, &ctx.config.data.tag(), &digest(&ctx.config))?;
    Ok((
        ctx,
        BenchResult {
            records,
            diverged,
            report,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Batch count N or batch size, depending on the axis.
    pub value: usize,
    pub kendall_tau: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub is_default: bool,
}

pub const DEFAULT_BATCHES: usize = 2;
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// ZiCo of each genome on the given batches.
pub fn zico_scores(ctx: &BenchContext, genomes: &[Genome], batches: &[Batch]) -> Result<Vec<f64>> {
    genomes
        .par_iter()
        .map(|g| Ok(GradStats::collect(&ctx.network(g)?, batches)?.zico()))
        .collect()
}

fn ablation_row(
    scores: &[f64],
    acc: &[f64],
    value: usize,
    is_default: bool,
) -> Result<AblationRow> {
    Ok(AblationRow {
        value,
        kendall_tau: kendall_tau(scores, acc)?,
        spearman_rho: spearman_rho(scores, acc)?,
        is_default,
    })
}

/// τ and ρ of ZiCo against accuracy for each batch count, batch size fixed
/// at the context's proxy batch size. Batch sets are nested prefixes of one
/// shuffle.
pub fn run_ablation_batches(
    ctx: &BenchContext,
    records: &[BenchmarkRecord],
    counts: &[usize],
) -> Result<Vec<AblationRow>> {
    if let Some(&n) = counts.iter().find(|&&n| n < 2) {
        return Err(Error::validation(format!("batch count {n} is below 2")));
    }
    let genomes: Vec<Genome> = records.iter().map(|r| r.genome.clone()).collect();
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    counts
        .iter()
        .map(|&n| {
            let b = ctx.proxy_batches(n, ctx.config.proxy_batch_size)?;
            ablation_row(
                &zico_scores(ctx, &genomes, &b)?,
                &acc,
                n,
                n == DEFAULT_BATCHES,
            )
        })
        .collect()
}

/// τ and ρ of ZiCo against accuracy for each batch size at N = 2.
pub fn run_ablation_batchsize(
    ctx: &BenchContext,
    records: &[BenchmarkRecord],
    sizes: &[usize],
) -> Result<Vec<AblationRow>> {
    if sizes.contains(&0) {
        return Err(Error::validation("batch size 0 is not allowed"));
    }
    let genomes: Vec<Genome> = records.iter().map(|r| r.genome.clone()).collect();
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    sizes
        .iter()
        .map(|&s| {
            let b = ctx.proxy_batches(DEFAULT_BATCHES, s)?;
            ablation_row(
                &zico_scores(ctx, &genomes, &b)?,
                &acc,
                s,
                s == DEFAULT_BATCH_SIZE,
            )
        })
        .collect()
}

pub fn ablation_counts() -> Vec<usize> {
    (2..=10).collect()
}

pub fn ablation_sizes() -> Vec<usize> {
    (0..8).map(|k| 1 << k).collect()
}
