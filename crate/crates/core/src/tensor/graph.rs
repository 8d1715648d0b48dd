use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Convolution implementation used by a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvAlgo {
    #[default]
    Im2col,
    Direct,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Conv2d {
        x: NodeId,
        k: NodeId,
        geom: ConvGeom,
    },
    AvgPool2d {
        x: NodeId,
        geom: ConvGeom,
    },
    GlobalAvgPool(NodeId),
    Flatten(NodeId),
    Sum(NodeId),
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Mse(NodeId, NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

/// Append-only computation graph. Inputs of a node always precede it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    algo: ConvAlgo,
    macs: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_conv_algo(algo: ConvAlgo) -> Self {
        Graph {
            nodes: Vec::new(),
            algo,
            macs: 0,
        }
    }

    /// Multiply-accumulates performed by forward matmul and conv ops so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant leaf: never receives a gradient.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        self.macs += (m * k * n) as u64;
        kernels::matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Add(a, b), t, rg))
    }

    /// Adds a per-channel bias `b[C]` along axis 1 of `x[N×C×...]`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() < 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let c = sx[1];
        let inner: usize = sx[2..].iter().product();
        let bias = self.value(b).data();
        let mut data = self.value(x).data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += bias[(i / inner) % c];
        }
        let t = Tensor::new(sx.to_vec(), data)?;
        let rg = self.rg(&[x, b]);
        Ok(self.push(Op::AddBias(x, b), t, rg))
    }

    pub fn scale(&mut self, x: NodeId, f: f64) -> NodeId {
        let v = self.value(x);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|a| a * f).collect(),
        };
        let rg = self.rg(&[x]);
        self.push(Op::Scale(x, f), t, rg)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let t = Tensor {
            shape: v.shape().to_vec(),
            data: v
                .data()
                .iter()
                .map(|&a| if a > 0.0 { a } else { 0.0 })
                .collect(),
        };
        let rg = self.rg(&[x]);
        self.push(Op::Relu(x), t, rg)
    }

    /// Cross-correlation of `x[N×Cin×H×W]` with `k[Cout×Cin×kh×kw]`.
    pub fn conv2d(&mut self, x: NodeId, k: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let geom = ConvGeom::new(self.shape(x), self.shape(k), stride, pad)?;
        let (xv, kv) = (self.value(x).data(), self.value(k).data());
        let out = match self.algo {
            ConvAlgo::Im2col => kernels::conv2d_im2col(&geom, xv, kv),
            ConvAlgo::Direct => kernels::conv2d_direct(&geom, xv, kv),
        };
        let t = Tensor::new(geom.out_shape(), out)?;
        self.macs += (t.len() * geom.in_ch * geom.kh * geom.kw) as u64;
        let rg = self.rg(&[x, k]);
        Ok(self.push(Op::Conv2d { x, k, geom }, t, rg))
    }

    /// Square average pooling that divides by `k²` including padded cells.
    pub fn avg_pool2d(&mut self, x: NodeId, k: usize, stride: usize, pad: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "avg_pool2d expects 4-d input, got {s:?}"
            )));
        }
        let mut geom = ConvGeom::new(s, &[s[1], s[1], k, k], stride, pad)?;
        geom.out_ch = s[1];
        let xv = self.value(x).data();
        let inv = 1.0 / (k * k) as f64;
        let mut out = vec![0.0; geom.out_shape().iter().product()];
        pool_walk(&geom, |xi, oi| out[oi] += xv[xi] * inv);
        let t = Tensor::new(geom.out_shape(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::AvgPool2d { x, geom }, t, rg))
    }

    /// Mean over the spatial axes: `N×C×H×W → N×C`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "global_avg_pool expects 4-d input, got {s:?}"
            )));
        }
        let hw = s[2] * s[3];
        let data = self
            .value(x)
            .data()
            .chunks(hw.max(1))
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        let t = Tensor::new(vec![s[0], s[1]], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::GlobalAvgPool(x), t, rg))
    }

    /// Collapses all axes after the first.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.is_empty() {
            return Err(Error::Shape("cannot flatten a scalar".into()));
        }
        let shape = vec![s[0], s[1..].iter().product()];
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Flatten(x), t, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let t = Tensor::scalar(self.value(x).data().iter().sum());
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), t, rg)
    }

    /// Mean over the batch of `−log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::Dimension {
                op: "cross_entropy",
                lhs: s.to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let se: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + se.ln();
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
            loss += lse - row[labels[i]];
        }
        let t = Tensor::scalar(loss / n as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            t,
            rg,
        ))
    }

    /// `Σ ½(pred − target)²`.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::Dimension {
                op: "mse_loss",
                lhs: self.shape(pred).to_vec(),
                rhs: self.shape(target).to_vec(),
            });
        }
        let v: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| 0.5 * (p - t) * (p - t))
            .sum();
        let rg = self.rg(&[pred, target]);
        Ok(self.push(Op::Mse(pred, target), Tensor::scalar(v), rg))
    }

    /// Sign pattern of every ReLU input, used to detect finite-difference
    /// steps that cross a kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                sig.extend(self.nodes[x.0].value.data().iter().map(|&v| v > 0.0));
            }
        }
        sig
    }

    /// Smallest `|x|` over all ReLU inputs.
    pub fn relu_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                for &v in self.nodes[x.0].value.data() {
                    m = m.min(v.abs());
                }
            }
        }
        m
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Graph::zero_grad`]. Returns the number of node visits.
    pub fn backward(&mut self, loss: NodeId) -> Result<usize> {
        if self.nodes[loss.0].value.len() != 1 || !self.nodes[loss.0].value.shape().is_empty() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let n = self.nodes.len();
        let mut g: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        g[loss.0] = Some(vec![1.0]);
        let mut visits = 0;
        for i in (0..n).rev() {
            visits += 1;
            let Some(dout) = g[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let slot = &mut self.nodes[i].grad;
                match slot {
                    Some(acc) => acc.iter_mut().zip(&dout).for_each(|(a, d)| *a += d),
                    None => *slot = Some(dout),
                }
                continue;
            }
            self.propagate(i, &dout, &mut g);
        }
        Ok(visits)
    }

    fn propagate(&self, i: usize, dout: &[f64], g: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let acc = |id: NodeId, g: &mut [Option<Vec<f64>>]| -> Option<usize> {
            if !wants(id) {
                return None;
            }
            let len = self.nodes[id.0].value.len();
            g[id.0].get_or_insert_with(|| vec![0.0; len]);
            Some(id.0)
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if let Some(ia) = acc(*a, g) {
                    let buf = g[ia].as_mut().unwrap();
                    kernels::matmul_nt_acc(dout, self.value(*b).data(), buf, m, n, k);
                }
                if let Some(ib) = acc(*b, g) {
                    let buf = g[ib].as_mut().unwrap();
                    kernels::matmul_tn_acc(self.value(*a).data(), dout, buf, k, m, n);
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if let Some(ix) = acc(id, g) {
                        add_into(g[ix].as_mut().unwrap(), dout);
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(ix) = acc(*x, g) {
                    add_into(g[ix].as_mut().unwrap(), dout);
                }
                if let Some(ib) = acc(*b, g) {
                    let s = self.shape(*x);
                    let c = s[1];
                    let inner: usize = s[2..].iter().product();
                    let buf = g[ib].as_mut().unwrap();
                    for (j, d) in dout.iter().enumerate() {
                        buf[(j / inner) % c] += d;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(ix) = acc(*x, g) {
                    let buf = g[ix].as_mut().unwrap();
                    buf.iter_mut().zip(dout).for_each(|(a, d)| *a += d * f);
                }
            }
            Op::Relu(x) => {
                if let Some(ix) = acc(*x, g) {
                    let xv = self.value(*x).data();
                    let buf = g[ix].as_mut().unwrap();
                    for ((a, d), v) in buf.iter_mut().zip(dout).zip(xv) {
                        if *v > 0.0 {
                            *a += d;
                        }
                    }
                }
            }
            Op::Conv2d { x, k, geom } => {
                let mut dx = acc(*x, g).map(|ix| g[ix].take().unwrap());
                let mut dk = acc(*k, g).map(|ik| g[ik].take().unwrap());
                let (xv, kv) = (self.value(*x).data(), self.value(*k).data());
                match self.algo {
                    ConvAlgo::Im2col => kernels::conv2d_im2col_backward(
                        geom,
                        xv,
                        kv,
                        dout,
                        dx.as_deref_mut(),
                        dk.as_deref_mut(),
                    ),
                    ConvAlgo::Direct => kernels::conv2d_direct_backward(
                        geom,
                        xv,
                        kv,
                        dout,
                        dx.as_deref_mut(),
                        dk.as_deref_mut(),
                    ),
                }
                if let Some(v) = dx {
                    g[x.0] = Some(v);
                }
                if let Some(v) = dk {
                    g[k.0] = Some(v);
                }
            }
            Op::AvgPool2d { x, geom } => {
                if let Some(ix) = acc(*x, g) {
                    let buf = g[ix].as_mut().unwrap();
                    let inv = 1.0 / (geom.kh * geom.kw) as f64;
                    pool_walk(geom, |xi, oi| buf[xi] += dout[oi] * inv);
                }
            }
            Op::GlobalAvgPool(x) => {
                if let Some(ix) = acc(*x, g) {
                    let s = self.shape(*x);
                    let hw = s[2] * s[3];
                    let buf = g[ix].as_mut().unwrap();
                    for (j, a) in buf.iter_mut().enumerate() {
                        *a += dout[j / hw] / hw as f64;
                    }
                }
            }
            Op::Flatten(x) => {
                if let Some(ix) = acc(*x, g) {
                    add_into(g[ix].as_mut().unwrap(), dout);
                }
            }
            Op::Sum(x) => {
                if let Some(ix) = acc(*x, g) {
                    g[ix]
                        .as_mut()
                        .unwrap()
                        .iter_mut()
                        .for_each(|a| *a += dout[0]);
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                if let Some(ix) = acc(*logits, g) {
                    let n = labels.len();
                    let k = probs.len() / n;
                    let scale = dout[0] / n as f64;
                    let buf = g[ix].as_mut().unwrap();
                    for i in 0..n {
                        for j in 0..k {
                            let y = if j == labels[i] { 1.0 } else { 0.0 };
                            buf[i * k + j] += scale * (probs[i * k + j] - y);
                        }
                    }
                }
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.value(*p).data(), self.value(*t).data());
                if let Some(ip) = acc(*p, g) {
                    let buf = g[ip].as_mut().unwrap();
                    for j in 0..buf.len() {
                        buf[j] += dout[0] * (pv[j] - tv[j]);
                    }
                }
                if let Some(it) = acc(*t, g) {
                    let buf = g[it].as_mut().unwrap();
                    for j in 0..buf.len() {
                        buf[j] -= dout[0] * (pv[j] - tv[j]);
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Calls `f(input_index, output_index)` for every in-bounds tap of a
/// depthwise pooling window.
fn pool_walk(g: &ConvGeom, mut f: impl FnMut(usize, usize)) {
    for n in 0..g.batch {
        for c in 0..g.in_ch {
            let plane = (n * g.in_ch + c) * g.in_h * g.in_w;
            let oplane = (n * g.in_ch + c) * g.out_h * g.out_w;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for ky in 0..g.kh {
                        let y = (oy * g.stride + ky) as isize - g.pad as isize;
                        if y < 0 || y as usize >= g.in_h {
                            continue;
                        }
                        for kx in 0..g.kw {
                            let x = (ox * g.stride + kx) as isize - g.pad as isize;
                            if x < 0 || x as usize >= g.in_w {
                                continue;
                            }
                            f(
                                plane + y as usize * g.in_w + x as usize,
                                oplane + oy * g.out_w + ox,
                            );
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_hand_case() {
        let mut g = Graph::new();
        let a = g.input(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = g.input(t(&[2, 1], &[1., 1.]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3., 7.]);
        assert_eq!(g.value(c).shape(), &[2, 1]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_sum_gradient_is_row_sums() {
        let mut g = Graph::new();
        let a = g.param(t(&[2, 3], &[1., -2., 3., 0.5, 0., 1.]));
        let b = g.input(Tensor::full(&[3, 4], 1.0));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[4.0; 6]);
    }

    #[test]
    fn conv_hand_case_and_identity_kernel() {
        let mut g = Graph::new();
        let x = g.input(t(&[1, 1, 2, 2], &[1., 2., 3., 4.]));
        let k = g.input(t(&[1, 1, 2, 2], &[1., 0., 0., 1.]));
        let y = g.conv2d(x, k, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[5.0]);
        let one = g.input(t(&[1, 1, 1, 1], &[1.0]));
        let y = g.conv2d(x, one, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv_shape_errors() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 1, 2, 2]));
        let k = g.input(Tensor::zeros(&[1, 1, 3, 3]));
        assert!(matches!(g.conv2d(x, k, 1, 0), Err(Error::Shape(_))));
        let x = g.input(Tensor::zeros(&[1, 1, 4, 4]));
        assert!(matches!(g.conv2d(x, k, 2, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn relu_cases() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[-1., 0., 2.]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0., 0., 2.]);
        let yy = g.relu(y);
        assert_eq!(g.value(yy).data(), g.value(y).data());
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0., 0., 1.]);
    }

    #[test]
    fn pooling_and_add() {
        let mut g = Graph::new();
        let a = g.input(t(&[2], &[1., 2.]));
        let b = g.input(t(&[2], &[3., 4.]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4., 6.]);
        let x = g.input(t(&[1, 1, 2, 2], &[1., 2., 3., 4.]));
        let p = g.avg_pool2d(x, 2, 2, 0).unwrap();
        assert_eq!(g.value(p).data(), &[2.5]);
        let c = g.input(Tensor::full(&[2, 3, 4, 4], 1.75));
        let p = g.global_avg_pool(c).unwrap();
        assert_eq!(g.value(p).data(), &[1.75; 6]);
        let bad = g.input(Tensor::zeros(&[3]));
        assert!(matches!(g.add(a, bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut g = Graph::new();
        let z = g.input(Tensor::full(&[2, 7], 0.3));
        let l = g.cross_entropy(z, &[0, 6]).unwrap();
        assert!((g.value(l).data()[0] - 7f64.ln()).abs() < 1e-15);
        let z = g.input(t(&[1, 3], &[0., 30., 0.]));
        let l = g.cross_entropy(z, &[1]).unwrap();
        assert!(g.value(l).data()[0] < 1e-9);
        assert!(matches!(
            g.cross_entropy(z, &[3]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn mse_cases() {
        let mut g = Graph::new();
        let p = g.input(t(&[1], &[1.]));
        let q = g.input(t(&[1], &[0.]));
        let l = g.mse_loss(p, q).unwrap();
        assert_eq!(g.value(l).data(), &[0.5]);
        let l = g.mse_loss(p, p).unwrap();
        assert_eq!(g.value(l).data(), &[0.0]);
        let r = g.input(t(&[2], &[0., 0.]));
        assert!(g.mse_loss(p, r).is_err());
    }

    #[test]
    fn backward_rules_and_accumulation() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1., -2., 0.5]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1., 1., 1.]);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2., 2., 2.]);
        g.zero_grad();
        let z = g.input(Tensor::zeros(&[3]));
        let l = g.mse_loss(x, z).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1., -2., 0.5]);
        assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_visits_every_node_once() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[2, 2], 0.5));
        let y = g.matmul(x, x).unwrap();
        let y = g.relu(y);
        let y = g.scale(y, 3.0);
        let s = g.sum(y);
        assert_eq!(g.backward(s).unwrap(), g.len());
    }
}
