use rand_distr::{Distribution, Normal};

use super::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// Shape family of a layer registered through [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_ch: usize,
        out_ch: usize,
        k: usize,
    },
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Raw,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    /// 1-based layer index.
    pub layer: usize,
    pub role: ParamRole,
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    pub trainable: bool,
    pub fan_in: usize,
}

/// Named parameters grouped into contiguous layers `1..=D`.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    kinds: Vec<LayerKind>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of layers `D`.
    pub fn depth(&self) -> usize {
        self.kinds.len()
    }

    pub fn layer_kind(&self, layer: usize) -> LayerKind {
        self.kinds[layer - 1]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    /// Trainable scalar count.
    pub fn num_scalars(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    fn open_layer(&mut self, kind: LayerKind) -> usize {
        self.kinds.push(kind);
        self.kinds.len()
    }

    fn push(
        &mut self,
        name: String,
        layer: usize,
        role: ParamRole,
        shape: &[usize],
        fan_in: usize,
    ) -> usize {
        self.params.push(Param {
            name,
            layer,
            role,
            value: Tensor::zeros(shape),
            grad: None,
            trainable: true,
            fan_in,
        });
        self.params.len() - 1
    }

    /// Registers a `k×k` convolution layer; returns (weight, bias) indices.
    pub fn add_conv(
        &mut self,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        k: usize,
    ) -> (usize, usize) {
        let layer = self.open_layer(LayerKind::Conv { in_ch, out_ch, k });
        let w = self.push(
            format!("{name}.weight"),
            layer,
            ParamRole::Weight,
            &[out_ch, in_ch, k, k],
            in_ch * k * k,
        );
        let b = self.push(
            format!("{name}.bias"),
            layer,
            ParamRole::Bias,
            &[out_ch],
            in_ch * k * k,
        );
        (w, b)
    }

    /// Registers a fully connected layer with weight `[inputs × outputs]`.
    pub fn add_linear(&mut self, name: &str, inputs: usize, outputs: usize) -> (usize, usize) {
        let layer = self.open_layer(LayerKind::Linear { inputs, outputs });
        let w = self.push(
            format!("{name}.weight"),
            layer,
            ParamRole::Weight,
            &[inputs, outputs],
            inputs,
        );
        let b = self.push(
            format!("{name}.bias"),
            layer,
            ParamRole::Bias,
            &[outputs],
            inputs,
        );
        (w, b)
    }

    /// Registers a single free-form tensor as its own layer.
    pub fn add_raw(&mut self, name: &str, value: Tensor, fan_in: usize) -> usize {
        let layer = self.open_layer(LayerKind::Raw);
        let i = self.push(
            name.to_string(),
            layer,
            ParamRole::Weight,
            value.shape(),
            fan_in,
        );
        self.params[i].value = value;
        i
    }

    /// Places every parameter in `g` as a leaf, differentiable iff trainable.
    pub fn bind(&self, g: &mut Graph) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| {
                if p.trainable {
                    g.param(p.value.clone())
                } else {
                    g.input(p.value.clone())
                }
            })
            .collect()
    }

    /// Adds leaf gradients from `g` into the parameter buffers. Every
    /// trainable parameter ends up with a buffer, zero if unreached.
    pub fn accumulate_grads(&mut self, g: &Graph, ids: &[NodeId]) {
        for (p, &id) in self.params.iter_mut().zip(ids) {
            if !p.trainable {
                continue;
            }
            let buf = p.grad.get_or_insert_with(|| vec![0.0; p.value.len()]);
            if let Some(src) = g.grad(id) {
                buf.iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Concatenated gradients of trainable parameters (zeros where missing).
    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for p in self.params.iter().filter(|p| p.trainable) {
            match &p.grad {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, p.value.len())),
            }
        }
        out
    }

    /// Checks that layer indices form `1..=D` with no gaps.
    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            if p.layer == 0 || p.layer > self.depth() {
                return Err(Error::validation(format!(
                    "parameter {} has layer {} outside 1..={}",
                    p.name,
                    p.layer,
                    self.depth()
                )));
            }
        }
        for l in 1..=self.depth() {
            if !self.params.iter().any(|p| p.layer == l) {
                return Err(Error::validation(format!("layer {l} has no parameters")));
            }
        }
        Ok(())
    }
}

/// Kaiming-normal weights (std `sqrt(2/fan_in)`) and zero biases. Each
/// parameter draws from its own stream keyed by name.
pub fn kaiming_init(params: &mut ParamSet, seed: u64) -> Result<()> {
    for p in params.iter_mut() {
        match p.role {
            ParamRole::Bias => p.value.data_mut().iter_mut().for_each(|v| *v = 0.0),
            ParamRole::Weight => {
                if p.fan_in == 0 {
                    return Err(Error::validation(format!(
                        "parameter {} has zero fan_in",
                        p.name
                    )));
                }
                let std = (2.0 / p.fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                let mut r = rng::rng_from_seed(rng::child_seed(seed, &p.name));
                for v in p.value.data_mut() {
                    *v = normal.sample(&mut r);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kaiming_variance_and_determinism() {
        let mut ps = ParamSet::new();
        ps.add_raw("w", Tensor::zeros(&[100_000]), 8);
        kaiming_init(&mut ps, 3).unwrap();
        let d = ps.get(0).value.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var - 0.25).abs() < 0.05 * 0.25, "{var}");

        let mut again = ParamSet::new();
        again.add_raw("w", Tensor::zeros(&[100_000]), 8);
        kaiming_init(&mut again, 3).unwrap();
        assert_eq!(again.get(0).value, ps.get(0).value);
    }

    #[test]
    fn biases_are_zero_and_fan_in_checked() {
        let mut ps = ParamSet::new();
        ps.add_conv("c", 3, 8, 3);
        ps.get_mut(1).value = Tensor::full(&[8], 5.0);
        kaiming_init(&mut ps, 0).unwrap();
        assert!(ps.get(1).value.data().iter().all(|&v| v == 0.0));
        assert_eq!(ps.num_scalars(), 224);

        let mut bad = ParamSet::new();
        bad.add_raw("w", Tensor::zeros(&[2]), 0);
        assert!(matches!(
            kaiming_init(&mut bad, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn layers_are_contiguous() {
        let mut ps = ParamSet::new();
        ps.add_conv("a", 1, 2, 3);
        ps.add_linear("b", 2, 3);
        assert_eq!(ps.depth(), 2);
        ps.validate().unwrap();
        assert_eq!(ps.num_scalars(), 20 + 9);
    }

    #[test]
    fn every_trainable_param_gets_a_buffer() {
        let mut ps = ParamSet::new();
        ps.add_linear("a", 2, 2);
        ps.add_linear("unused", 2, 2);
        let mut g = Graph::new();
        let ids = ps.bind(&mut g);
        let s = g.sum(ids[0]);
        g.backward(s).unwrap();
        ps.accumulate_grads(&g, &ids);
        assert!(ps.iter().all(|p| p.grad.is_some()));
        assert_eq!(ps.get(2).grad.as_deref().unwrap(), &[0.0; 4]);
        assert_eq!(ps.get(0).grad.as_deref().unwrap(), &[1.0; 4]);
    }
}
