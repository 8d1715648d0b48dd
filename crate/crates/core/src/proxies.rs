//! Training-free scores computed on networks at initialization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::space::{Network, NetworkSpec};
use crate::tensor::{Graph, NodeId, ParamSet, Tensor};

/// Denominator floor for the standard deviation.
pub const EPS_STD: f64 = 1e-8;
/// Floor applied to each layer sum before the logarithm.
pub const EPS_LOG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    Params,
    Flops,
    Zico,
    ZicoMeanOnly,
    ZicoStdOnly,
    GradNorm,
    Snip,
    Synflow,
}

impl ProxyKind {
    pub const ALL: [ProxyKind; 8] = [
        ProxyKind::Params,
        ProxyKind::Flops,
        ProxyKind::Zico,
        ProxyKind::ZicoMeanOnly,
        ProxyKind::ZicoStdOnly,
        ProxyKind::GradNorm,
        ProxyKind::Snip,
        ProxyKind::Synflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProxyKind::Params => "params",
            ProxyKind::Flops => "flops",
            ProxyKind::Zico => "zico",
            ProxyKind::ZicoMeanOnly => "zico_mean_only",
            ProxyKind::ZicoStdOnly => "zico_std_only",
            ProxyKind::GradNorm => "grad_norm",
            ProxyKind::Snip => "snip",
            ProxyKind::Synflow => "synflow",
        }
    }

    /// Whether the proxy needs data batches.
    pub fn needs_data(self) -> bool {
        !matches!(
            self,
            ProxyKind::Params | ProxyKind::Flops | ProxyKind::Synflow
        )
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProxyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::Usage(format!(
                    "unknown proxy {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// A network that proxies can differentiate.
pub trait Model {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Shape of one input sample (without the batch axis).
    fn sample_shape(&self) -> Vec<usize>;
    fn forward(&self, g: &mut Graph, ids: &[NodeId], x: NodeId) -> Result<NodeId>;
}

impl Model for Network {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.spec.input_shape.clone()
    }

    fn forward(&self, g: &mut Graph, ids: &[NodeId], x: NodeId) -> Result<NodeId> {
        Network::forward(self, g, ids, x)
    }
}

/// Per-layer gradients of the cross-entropy loss on one batch, parameters
/// unchanged. Layer `l` collects all its trainable tensors in order.
pub fn layer_grads<M: Model>(model: &M, batch: &Batch) -> Result<(f64, Vec<Vec<f64>>)> {
    let labels = batch.class_labels()?;
    let mut g = Graph::new();
    let ids = model.params().bind(&mut g);
    let x = g.input(batch.inputs.clone());
    let z = model.forward(&mut g, &ids, x)?;
    let loss = g.cross_entropy(z, labels)?;
    let lv = g.value(loss).data()[0];
    if !lv.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss {lv} on batch {}",
            batch.index
        )));
    }
    g.backward(loss)?;
    let ps = model.params();
    let mut out = vec![Vec::new(); ps.depth()];
    for (p, &id) in ps.iter().zip(&ids) {
        if !p.trainable {
            continue;
        }
        let dst = &mut out[p.layer - 1];
        match g.grad(id) {
            Some(gr) => dst.extend_from_slice(gr),
            None => dst.extend(std::iter::repeat_n(0.0, p.value.len())),
        }
    }
    Ok((lv, out))
}

/// Mean and population standard deviation of `|∇L|` across `N` batches.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStats {
    /// `mean_abs[l][ω]` for layer `l + 1`.
    pub mean_abs: Vec<Vec<f64>>,
    pub std_abs: Vec<Vec<f64>>,
    pub batches: usize,
}

impl GradStats {
    /// `records[i][l]` holds the raw gradients of layer `l + 1` on batch `i`.
    pub fn from_records(records: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = records.len();
        if n < 2 {
            return Err(Error::validation(format!(
                "gradient statistics need at least 2 batches, got {n}"
            )));
        }
        let shape: Vec<usize> = records[0].iter().map(Vec::len).collect();
        if records
            .iter()
            .any(|r| r.iter().map(Vec::len).ne(shape.iter().copied()))
        {
            return Err(Error::validation("gradient records differ in layout"));
        }
        // Welford updates keep the mean exact, and the spread exactly zero,
        // when every batch yields the same gradient.
        let mut mean_abs = Vec::with_capacity(shape.len());
        let mut std_abs = Vec::with_capacity(shape.len());
        for (l, &len) in shape.iter().enumerate() {
            let mut m = vec![0.0; len];
            let mut m2 = vec![0.0; len];
            for (k, r) in records.iter().enumerate() {
                let kf = (k + 1) as f64;
                for ((mu, s), g) in m.iter_mut().zip(m2.iter_mut()).zip(&r[l]) {
                    let a = g.abs();
                    let delta = a - *mu;
                    *mu += delta / kf;
                    *s += delta * (a - *mu);
                }
            }
            mean_abs.push(m);
            std_abs.push(
                m2.into_iter()
                    .map(|s| (s / n as f64).max(0.0).sqrt())
                    .collect(),
            );
        }
        Ok(GradStats {
            mean_abs,
            std_abs,
            batches: n,
        })
    }

    /// Fresh forward/backward per batch at fixed parameters.
    pub fn collect<M: Model>(model: &M, batches: &[Batch]) -> Result<Self> {
        if batches.len() < 2 {
            return Err(Error::validation(format!(
                "gradient statistics need at least 2 batches, got {}",
                batches.len()
            )));
        }
        let records = batches
            .iter()
            .map(|b| layer_grads(model, b).map(|(_, g)| g))
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(&records)
    }

    fn layer_log_sum(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.mean_abs
            .iter()
            .zip(&self.std_abs)
            .map(|(m, s)| {
                let inner: f64 = m.iter().zip(s).map(|(&a, &b)| f(a, b)).sum();
                inner.max(EPS_LOG).ln()
            })
            .sum()
    }

    /// `Σ_l log Σ_{ω∈θ_l} mean|∇L| / std|∇L|`.
    pub fn zico(&self) -> f64 {
        self.layer_log_sum(|m, s| m / s.max(EPS_STD))
    }

    pub fn zico_mean_only(&self) -> f64 {
        self.layer_log_sum(|m, _| m)
    }

    pub fn zico_std_only(&self) -> f64 {
        self.layer_log_sum(|_, s| 1.0 / s.max(EPS_STD))
    }
}

pub fn grad_norm_of(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

pub fn snip_of(params: &[f64], grads: &[f64]) -> f64 {
    params.iter().zip(grads).map(|(p, g)| (p * g).abs()).sum()
}

fn flat_values(ps: &ParamSet) -> Vec<f64> {
    ps.iter()
        .filter(|p| p.trainable)
        .flat_map(|p| p.value.data().iter().copied())
        .collect()
}

/// Euclidean norm of the full gradient on one batch.
pub fn grad_norm<M: Model>(model: &M, batch: &Batch) -> Result<f64> {
    let (_, g) = layer_grads(model, batch)?;
    Ok(grad_norm_of(&g.concat()))
}

/// `Σ |ω · ∂L/∂ω|` on one batch.
pub fn snip<M: Model>(model: &M, batch: &Batch) -> Result<f64> {
    let (_, g) = layer_grads(model, batch)?;
    Ok(snip_of(&flat_values(model.params()), &g.concat()))
}

/// Data-free saliency: with all parameters replaced by their magnitudes and
/// an all-ones input, `Σ_ω ∂R/∂ω · |ω|` where `R` is the summed output.
pub fn synflow<M: Model>(model: &M) -> Result<f64> {
    let mut ps = model.params().clone();
    for p in ps.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = v.abs());
    }
    let mut shape = vec![1];
    shape.extend(model.sample_shape());
    let mut g = Graph::new();
    let ids = ps.bind(&mut g);
    let x = g.input(Tensor::full(&shape, 1.0));
    let z = model.forward(&mut g, &ids, x)?;
    let r = g.sum(z);
    g.backward(r)?;
    let mut score = 0.0;
    for (p, &id) in ps.iter().zip(&ids) {
        if let (true, Some(gr)) = (p.trainable, g.grad(id)) {
            score += gr
                .iter()
                .zip(p.value.data())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }
    if !score.is_finite() {
        return Err(Error::Numeric(format!("synflow score is {score}")));
    }
    Ok(score)
}

/// All eight proxy values of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyValues {
    pub params: f64,
    pub flops: f64,
    pub zico: f64,
    pub zico_mean_only: f64,
    pub zico_std_only: f64,
    pub grad_norm: f64,
    pub snip: f64,
    pub synflow: f64,
}

impl ProxyValues {
    pub fn get(&self, p: ProxyKind) -> f64 {
        match p {
            ProxyKind::Params => self.params,
            ProxyKind::Flops => self.flops,
            ProxyKind::Zico => self.zico,
            ProxyKind::ZicoMeanOnly => self.zico_mean_only,
            ProxyKind::ZicoStdOnly => self.zico_std_only,
            ProxyKind::GradNorm => self.grad_norm,
            ProxyKind::Snip => self.snip,
            ProxyKind::Synflow => self.synflow,
        }
    }
}

/// Evaluates one proxy. `batches` may be empty for data-free proxies;
/// gradient-based single-batch proxies use the first batch.
pub fn evaluate(kind: ProxyKind, net: &Network, batches: &[Batch]) -> Result<f64> {
    let first = || {
        batches
            .first()
            .ok_or_else(|| Error::validation(format!("proxy {kind} needs a data batch")))
    };
    Ok(match kind {
        ProxyKind::Params => net.spec.count_params() as f64,
        ProxyKind::Flops => net.spec.count_flops() as f64,
        ProxyKind::Zico => GradStats::collect(net, batches)?.zico(),
        ProxyKind::ZicoMeanOnly => GradStats::collect(net, batches)?.zico_mean_only(),
        ProxyKind::ZicoStdOnly => GradStats::collect(net, batches)?.zico_std_only(),
        ProxyKind::GradNorm => grad_norm(net, first()?)?,
        ProxyKind::Snip => snip(net, first()?)?,
        ProxyKind::Synflow => synflow(net)?,
    })
}

/// All proxies, sharing one set of gradient records.
pub fn evaluate_all(net: &Network, batches: &[Batch]) -> Result<ProxyValues> {
    let records = batches
        .iter()
        .map(|b| layer_grads(net, b).map(|(_, g)| g))
        .collect::<Result<Vec<_>>>()?;
    let stats = GradStats::from_records(&records)?;
    let g0 = records[0].concat();
    Ok(ProxyValues {
        params: net.spec.count_params() as f64,
        flops: net.spec.count_flops() as f64,
        zico: stats.zico(),
        zico_mean_only: stats.zico_mean_only(),
        zico_std_only: stats.zico_std_only(),
        grad_norm: grad_norm_of(&g0),
        snip: snip_of(&flat_values(&net.params), &g0),
        synflow: synflow(net)?,
    })
}

/// Convenience accessor used by counters.
pub fn params_proxy(spec: &NetworkSpec) -> u64 {
    spec.count_params()
}

pub fn flops_proxy(spec: &NetworkSpec) -> u64 {
    spec.count_flops()
}
