//! Candidate architectures: a cell space (op code per DAG edge) and a width
//! space (channel count per stage).

mod json;
mod network;

pub use network::{Block, CellEdge, LayerDesc, Network, NetworkSpec};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Operation on a cell edge. The discriminant is the gene value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellOp {
    None = 0,
    Skip = 1,
    Conv1x1 = 2,
    Conv3x3 = 3,
    AvgPool3x3 = 4,
}

impl CellOp {
    pub const ALL: [CellOp; 5] = [
        CellOp::None,
        CellOp::Skip,
        CellOp::Conv1x1,
        CellOp::Conv3x3,
        CellOp::AvgPool3x3,
    ];

    pub fn from_code(code: u32) -> Option<CellOp> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            CellOp::None => "none",
            CellOp::Skip => "skip",
            CellOp::Conv1x1 => "conv1x1",
            CellOp::Conv3x3 => "conv3x3",
            CellOp::AvgPool3x3 => "avgpool3x3",
        }
    }
}

/// Edges `(from, to)` of the 4-node cell, in gene order.
pub const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpaceKind {
    Cell,
    Width,
}

impl SpaceKind {
    pub fn tag(self) -> &'static str {
        match self {
            SpaceKind::Cell => "cell",
            SpaceKind::Width => "width",
        }
    }
}

/// Discrete architecture encoding. Cell genes are op codes; width genes are
/// channel counts. Serde uses the key form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Genome {
    pub space: SpaceKind,
    pub genes: Vec<u32>,
}

impl Genome {
    /// Stable textual key, e.g. `cell:0-3-3-0-1-3`.
    pub fn key(&self) -> String {
        let g: Vec<String> = self.genes.iter().map(u32::to_string).collect();
        format!("{}:{}", self.space.tag(), g.join("-"))
    }

    /// Inverse of [`Genome::key`].
    pub fn from_key(key: &str) -> Result<Genome> {
        let (tag, rest) = key
            .split_once(':')
            .ok_or_else(|| Error::parse(None, format!("genome key {key:?} lacks a space tag")))?;
        let space = match tag {
            "cell" => SpaceKind::Cell,
            "width" => SpaceKind::Width,
            other => return Err(Error::parse(None, format!("unknown space tag {other:?}"))),
        };
        let genes = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split('-')
                .enumerate()
                .map(|(p, v)| {
                    v.parse::<u32>()
                        .map_err(|_| Error::parse(Some(p), format!("{v:?} is not a gene value")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Genome { space, genes })
    }

    pub fn to_json(&self) -> String {
        json::serialize(self)
    }

    pub fn from_json(text: &str) -> Result<Genome> {
        json::parse(text)
    }
}

impl From<Genome> for String {
    fn from(g: Genome) -> String {
        g.key()
    }
}

impl TryFrom<String> for Genome {
    type Error = Error;

    fn try_from(s: String) -> Result<Genome> {
        Genome::from_key(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpace {
    /// Allowed ops, shared by all six edges.
    pub ops: Vec<CellOp>,
    /// Channel width of each stage.
    pub widths: Vec<usize>,
    pub cells_per_stage: usize,
}

impl Default for CellSpace {
    fn default() -> Self {
        CellSpace {
            ops: CellOp::ALL.to_vec(),
            widths: vec![8, 16],
            cells_per_stage: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthSpace {
    /// Admissible widths, shared by all stages.
    pub ladder: Vec<usize>,
    pub stages: usize,
    pub stem_width: usize,
    /// Conv blocks per stage (at least one).
    pub blocks_per_stage: usize,
}

impl Default for WidthSpace {
    fn default() -> Self {
        WidthSpace {
            ladder: vec![4, 8, 16, 32],
            stages: 3,
            stem_width: 8,
            blocks_per_stage: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum SpaceConfig {
    Cell(CellSpace),
    Width(WidthSpace),
}

/// Upper bound on the size of an enumerable space.
pub const MAX_ENUMERATION: u128 = 1_000_000;

impl SpaceConfig {
    /// The 64-genome cell space over `{none, conv3x3}`.
    pub fn cell_two_op() -> Self {
        SpaceConfig::Cell(CellSpace {
            ops: vec![CellOp::None, CellOp::Conv3x3],
            ..CellSpace::default()
        })
    }

    pub fn kind(&self) -> SpaceKind {
        match self {
            SpaceConfig::Cell(_) => SpaceKind::Cell,
            SpaceConfig::Width(_) => SpaceKind::Width,
        }
    }

    pub fn gene_count(&self) -> usize {
        match self {
            SpaceConfig::Cell(_) => EDGES.len(),
            SpaceConfig::Width(w) => w.stages,
        }
    }

    /// Sorted, deduplicated alphabet shared by every gene position.
    pub fn alphabet(&self) -> Vec<u32> {
        let mut a: Vec<u32> = match self {
            SpaceConfig::Cell(c) => c.ops.iter().map(|o| o.code()).collect(),
            SpaceConfig::Width(w) => w.ladder.iter().map(|&v| v as u32).collect(),
        };
        a.sort_unstable();
        a.dedup();
        a
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::validation(m));
        match self {
            SpaceConfig::Cell(c) => {
                if c.ops.is_empty() {
                    return fail("cell space needs at least one op");
                }
                if c.widths.is_empty() || c.widths.contains(&0) {
                    return fail("cell space needs positive stage widths");
                }
                if c.cells_per_stage == 0 {
                    return fail("cells_per_stage must be at least 1");
                }
            }
            SpaceConfig::Width(w) => {
                if w.ladder.is_empty() || w.ladder.contains(&0) {
                    return fail("width ladder must be non-empty and positive");
                }
                if w.stages == 0 || w.stem_width == 0 || w.blocks_per_stage == 0 {
                    return fail("width space needs positive stages, stem width and blocks");
                }
                if w.ladder.iter().any(|&v| v > u32::MAX as usize) {
                    return fail("width exceeds gene range");
                }
            }
        }
        Ok(())
    }

    /// Number of genomes.
    pub fn size(&self) -> u128 {
        (self.alphabet().len() as u128).saturating_pow(self.gene_count() as u32)
    }

    /// Checks membership, reporting the first offending gene position.
    pub fn check(&self, g: &Genome) -> Result<()> {
        if g.space != self.kind() {
            return Err(Error::parse(
                None,
                format!(
                    "genome is for the {} space, config is {}",
                    g.space.tag(),
                    self.kind().tag()
                ),
            ));
        }
        if g.genes.len() != self.gene_count() {
            return Err(Error::parse(
                None,
                format!(
                    "expected {} genes, found {}",
                    self.gene_count(),
                    g.genes.len()
                ),
            ));
        }
        let a = self.alphabet();
        if let Some(p) = g.genes.iter().position(|v| a.binary_search(v).is_err()) {
            return Err(Error::parse(
                Some(p),
                format!("value {} not in alphabet {a:?}", g.genes[p]),
            ));
        }
        Ok(())
    }

    /// The genome whose every gene is the smallest alphabet entry.
    pub fn minimal(&self) -> Genome {
        Genome {
            space: self.kind(),
            genes: vec![self.alphabet()[0]; self.gene_count()],
        }
    }

    /// Uniform draw over the space.
    pub fn random(&self, seed: u64) -> Genome {
        let a = self.alphabet();
        let mut r = rng::rng_from_seed(seed);
        Genome {
            space: self.kind(),
            genes: (0..self.gene_count())
                .map(|_| a[r.random_range(0..a.len())])
                .collect(),
        }
    }

    /// Resamples one uniformly chosen gene to a different alphabet value.
    /// A space whose alphabet has a single symbol returns the genome as is.
    pub fn mutate(&self, g: &Genome, seed: u64) -> Genome {
        let a = self.alphabet();
        let mut out = g.clone();
        if a.len() < 2 || g.genes.is_empty() {
            return out;
        }
        let mut r = rng::rng_from_seed(seed);
        let pos = r.random_range(0..g.genes.len());
        let others: Vec<u32> = a.iter().copied().filter(|&v| v != g.genes[pos]).collect();
        out.genes[pos] = others[r.random_range(0..others.len())];
        out
    }

    /// Every genome once, lexicographic in gene values (last gene fastest).
    pub fn enumerate(&self) -> Result<Vec<Genome>> {
        let size = self.size();
        if size > MAX_ENUMERATION {
            return Err(Error::Capacity(format!(
                "space holds {size} genomes, enumeration limit is {MAX_ENUMERATION}"
            )));
        }
        let a = self.alphabet();
        let n = self.gene_count();
        let mut out = Vec::with_capacity(size as usize);
        let mut idx = vec![0usize; n];
        loop {
            out.push(Genome {
                space: self.kind(),
                genes: idx.iter().map(|&i| a[i]).collect(),
            });
            let mut p = n;
            loop {
                if p == 0 {
                    return Ok(out);
                }
                p -= 1;
                idx[p] += 1;
                if idx[p] < a.len() {
                    break;
                }
                idx[p] = 0;
            }
        }
    }

    /// Layer-level description of the network a genome encodes.
    pub fn spec(&self, g: &Genome, input_shape: &[usize], classes: usize) -> Result<NetworkSpec> {
        self.validate()?;
        self.check(g)?;
        network::build_spec(self, g, input_shape, classes)
    }

    /// Kaiming-initialised network.
    pub fn instantiate(
        &self,
        g: &Genome,
        input_shape: &[usize],
        classes: usize,
        seed: u64,
    ) -> Result<Network> {
        Network::new(self.spec(g, input_shape, classes)?, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_round_trip() {
        for g in SpaceConfig::cell_two_op().enumerate().unwrap() {
            assert_eq!(Genome::from_key(&g.key()).unwrap(), g);
        }
        assert!(Genome::from_key("cell:0-x").is_err());
        assert!(Genome::from_key("0-1").is_err());
    }

    #[test]
    fn sizes() {
        assert_eq!(SpaceConfig::cell_two_op().enumerate().unwrap().len(), 64);
        let full = SpaceConfig::Cell(CellSpace::default());
        assert_eq!(full.enumerate().unwrap().len(), 15625);
        assert_eq!(SpaceConfig::Width(WidthSpace::default()).size(), 64);
        let huge = SpaceConfig::Width(WidthSpace {
            ladder: (1..=10).collect(),
            stages: 7,
            ..WidthSpace::default()
        });
        assert!(matches!(huge.enumerate(), Err(Error::Capacity(_))));
    }

    #[test]
    fn enumeration_is_lexicographic_and_unique() {
        let all = SpaceConfig::cell_two_op().enumerate().unwrap();
        assert!(all.windows(2).all(|w| w[0].genes < w[1].genes));
        assert_eq!(all[0].genes, vec![0; 6]);
        assert_eq!(all[1].genes, vec![0, 0, 0, 0, 0, 3]);
    }

    #[test]
    fn forced_flip_in_binary_single_gene_space() {
        let s = SpaceConfig::Width(WidthSpace {
            ladder: vec![4, 8],
            stages: 1,
            ..WidthSpace::default()
        });
        let g = s.minimal();
        for seed in 0..20 {
            assert_eq!(s.mutate(&g, seed).genes, vec![8]);
        }
    }

    #[test]
    fn membership_error_carries_position() {
        let s = SpaceConfig::cell_two_op();
        let g = Genome {
            space: SpaceKind::Cell,
            genes: vec![0, 3, 1, 0, 0, 0],
        };
        match s.check(&g) {
            Err(Error::Parse { position, .. }) => assert_eq!(position, Some(2)),
            other => panic!("{other:?}"),
        }
    }
}
