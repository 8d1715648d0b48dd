use super::{CellOp, Genome, SpaceConfig, EDGES};
use crate::error::{Error, Result};
use crate::tensor::kernels::out_extent;
use crate::tensor::{kaiming_init, Graph, LayerKind, NodeId, ParamSet, Tensor};

/// Kernel, stride and padding of the stage-transition convolution.
const REDUCE: (usize, usize, usize) = (4, 2, 1);

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
    pub stride: usize,
    pub pad: usize,
    /// Spatial extent of the output map (1×1 for linear layers).
    pub out_hw: (usize, usize),
}

impl LayerDesc {
    pub fn params(&self) -> u64 {
        match self.kind {
            LayerKind::Conv { in_ch, out_ch, k } => (in_ch * out_ch * k * k + out_ch) as u64,
            LayerKind::Linear { inputs, outputs } => (inputs * outputs + outputs) as u64,
            LayerKind::Raw => 0,
        }
    }

    /// Multiply-accumulates for one input sample.
    pub fn macs(&self) -> u64 {
        match self.kind {
            LayerKind::Conv { in_ch, out_ch, k } => {
                (k * k * in_ch * out_ch * self.out_hw.0 * self.out_hw.1) as u64
            }
            LayerKind::Linear { inputs, outputs } => (inputs * outputs) as u64,
            LayerKind::Raw => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellEdge {
    None,
    Skip,
    Pool,
    /// Conv → ReLU using layer `layer` (1-based).
    Conv {
        layer: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// Conv → bias → ReLU.
    Conv { layer: usize },
    /// Four-node DAG; output is node 3 plus the cell input.
    Cell { edges: [CellEdge; 6] },
    /// Global average pool followed by the linear classifier.
    Head { layer: usize },
}

/// Layer list and block program of one candidate network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerDesc>,
    pub blocks: Vec<Block>,
}

impl NetworkSpec {
    /// Trainable scalar count.
    pub fn count_params(&self) -> u64 {
        self.layers.iter().map(LayerDesc::params).sum()
    }

    /// Multiply-accumulates per input over conv and linear layers.
    pub fn count_flops(&self) -> u64 {
        self.layers.iter().map(LayerDesc::macs).sum()
    }
}

struct Builder {
    layers: Vec<LayerDesc>,
    blocks: Vec<Block>,
    ch: usize,
    hw: (usize, usize),
}

impl Builder {
    fn conv(
        &mut self,
        name: String,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<usize> {
        let oh = out_extent(self.hw.0, k, stride, pad).map_err(shape_to_validation)?;
        let ow = out_extent(self.hw.1, k, stride, pad).map_err(shape_to_validation)?;
        self.layers.push(LayerDesc {
            name,
            kind: LayerKind::Conv {
                in_ch: self.ch,
                out_ch,
                k,
            },
            stride,
            pad,
            out_hw: (oh, ow),
        });
        self.ch = out_ch;
        self.hw = (oh, ow);
        Ok(self.layers.len())
    }

    fn conv_block(
        &mut self,
        name: String,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<()> {
        let layer = self.conv(name, out_ch, k, stride, pad)?;
        self.blocks.push(Block::Conv { layer });
        Ok(())
    }

    fn cell(&mut self, name: &str, ops: &[CellOp]) -> Result<()> {
        let mut edges = [CellEdge::None; 6];
        let (ch, hw) = (self.ch, self.hw);
        for (e, op) in ops.iter().enumerate() {
            let (i, j) = EDGES[e];
            edges[e] = match op {
                CellOp::None => CellEdge::None,
                CellOp::Skip => CellEdge::Skip,
                CellOp::AvgPool3x3 => CellEdge::Pool,
                CellOp::Conv1x1 | CellOp::Conv3x3 => {
                    let k = if *op == CellOp::Conv1x1 { 1 } else { 3 };
                    let layer = self.conv(format!("{name}.e{i}{j}"), ch, k, 1, k / 2)?;
                    self.ch = ch;
                    self.hw = hw;
                    CellEdge::Conv { layer }
                }
            };
        }
        self.blocks.push(Block::Cell { edges });
        Ok(())
    }

    fn head(&mut self, classes: usize) {
        self.layers.push(LayerDesc {
            name: "classifier".into(),
            kind: LayerKind::Linear {
                inputs: self.ch,
                outputs: classes,
            },
            stride: 1,
            pad: 0,
            out_hw: (1, 1),
        });
        self.blocks.push(Block::Head {
            layer: self.layers.len(),
        });
    }
}

fn shape_to_validation(e: Error) -> Error {
    Error::validation(format!("input shape incompatible with network: {e}"))
}

pub(super) fn build_spec(
    cfg: &SpaceConfig,
    g: &Genome,
    input_shape: &[usize],
    classes: usize,
) -> Result<NetworkSpec> {
    if input_shape.len() != 3 || input_shape.contains(&0) {
        return Err(Error::validation(format!(
            "input shape must be [C, H, W] with positive extents, got {input_shape:?}"
        )));
    }
    if classes < 2 {
        return Err(Error::validation("need at least two classes"));
    }
    let mut b = Builder {
        layers: Vec::new(),
        blocks: Vec::new(),
        ch: input_shape[0],
        hw: (input_shape[1], input_shape[2]),
    };
    let (rk, rs, rp) = REDUCE;
    match cfg {
        SpaceConfig::Cell(c) => {
            let ops: Vec<CellOp> = g
                .genes
                .iter()
                .map(|&v| CellOp::from_code(v).expect("checked genome"))
                .collect();
            b.conv_block("stem".into(), c.widths[0], 3, 1, 1)?;
            for (s, &w) in c.widths.iter().enumerate() {
                if s > 0 {
                    b.conv_block(format!("reduce{s}"), w, rk, rs, rp)?;
                }
                for k in 0..c.cells_per_stage {
                    b.cell(&format!("stage{s}.cell{k}"), &ops)?;
                }
            }
        }
        SpaceConfig::Width(w) => {
            b.conv_block("stem".into(), w.stem_width, 3, 1, 1)?;
            for (s, &width) in g.genes.iter().enumerate() {
                let width = width as usize;
                if s == 0 {
                    b.conv_block(format!("stage{s}.block0"), width, 3, 1, 1)?;
                } else {
                    b.conv_block(format!("stage{s}.block0"), width, rk, rs, rp)?;
                }
                for k in 1..w.blocks_per_stage {
                    b.conv_block(format!("stage{s}.block{k}"), width, 3, 1, 1)?;
                }
            }
        }
    }
    b.head(classes);
    Ok(NetworkSpec {
        input_shape: input_shape.to_vec(),
        classes,
        layers: b.layers,
        blocks: b.blocks,
    })
}

/// A spec together with its parameters. Parameter `2(l−1)` is the weight
/// and `2(l−1)+1` the bias of layer `l`.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParamSet,
}

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        for l in &spec.layers {
            match l.kind {
                LayerKind::Conv { in_ch, out_ch, k } => {
                    params.add_conv(&l.name, in_ch, out_ch, k);
                }
                LayerKind::Linear { inputs, outputs } => {
                    params.add_linear(&l.name, inputs, outputs);
                }
                LayerKind::Raw => unreachable!("specs hold conv and linear layers only"),
            }
        }
        kaiming_init(&mut params, seed)?;
        Ok(Network { spec, params })
    }

    /// Places the forward pass for input batch `x` on `g`; returns logits.
    pub fn forward(&self, g: &mut Graph, ids: &[NodeId], x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for block in &self.spec.blocks {
            h = match block {
                Block::Conv { layer } => self.conv_relu(g, ids, h, *layer)?,
                Block::Head { layer } => {
                    let p = g.global_avg_pool(h)?;
                    let (w, b) = (ids[2 * (layer - 1)], ids[2 * (layer - 1) + 1]);
                    let z = g.matmul(p, w)?;
                    g.add_bias(z, b)?
                }
                Block::Cell { edges } => self.cell(g, ids, h, edges)?,
            };
        }
        Ok(h)
    }

    fn conv_relu(&self, g: &mut Graph, ids: &[NodeId], x: NodeId, layer: usize) -> Result<NodeId> {
        let d = &self.spec.layers[layer - 1];
        let (w, b) = (ids[2 * (layer - 1)], ids[2 * (layer - 1) + 1]);
        let y = g.conv2d(x, w, d.stride, d.pad)?;
        let y = g.add_bias(y, b)?;
        Ok(g.relu(y))
    }

    fn cell(
        &self,
        g: &mut Graph,
        ids: &[NodeId],
        x: NodeId,
        edges: &[CellEdge; 6],
    ) -> Result<NodeId> {
        // `None` marks an identically zero node.
        let mut nodes: [Option<NodeId>; 4] = [Some(x), None, None, None];
        let zero_shape = g.value(x).shape().to_vec();
        for j in 1..4 {
            let mut acc: Option<NodeId> = None;
            for (e, &(i, to)) in EDGES.iter().enumerate() {
                if to != j {
                    continue;
                }
                let src = nodes[i];
                let out = match edges[e] {
                    CellEdge::None => None,
                    CellEdge::Skip => src,
                    CellEdge::Pool => match src {
                        Some(s) => Some(g.avg_pool2d(s, 3, 1, 1)?),
                        None => None,
                    },
                    CellEdge::Conv { layer } => {
                        let s = match src {
                            Some(s) => s,
                            None => g.input(Tensor::zeros(&zero_shape)),
                        };
                        Some(self.conv_relu(g, ids, s, layer)?)
                    }
                };
                acc = match (acc, out) {
                    (Some(a), Some(o)) => Some(g.add(a, o)?),
                    (a, o) => a.or(o),
                };
            }
            nodes[j] = acc;
        }
        match nodes[3] {
            Some(n3) => g.add(n3, x),
            None => Ok(x),
        }
    }

    /// Logits for a batch, without gradients.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let ids = self.params.bind(&mut g);
        let x = g.input(input.clone());
        let out = self.forward(&mut g, &ids, x)?;
        Ok(g.value(out).clone())
    }

    /// Mean cross-entropy on a batch; gradients are added to the parameter
    /// buffers.
    pub fn loss_backward(&mut self, input: &Tensor, labels: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let ids = self.params.bind(&mut g);
        let x = g.input(input.clone());
        let z = self.forward(&mut g, &ids, x)?;
        let loss = g.cross_entropy(z, labels)?;
        g.backward(loss)?;
        self.params.accumulate_grads(&g, &ids);
        Ok(g.value(loss).data()[0])
    }

    /// MACs measured by running one sample through a fresh graph.
    pub fn measured_macs(&self) -> Result<u64> {
        let mut shape = vec![1];
        shape.extend_from_slice(&self.spec.input_shape);
        let mut g = Graph::new();
        let ids = self.params.bind(&mut g);
        let x = g.input(Tensor::zeros(&shape));
        self.forward(&mut g, &ids, x)?;
        Ok(g.macs())
    }
}
