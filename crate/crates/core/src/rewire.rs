//! Augmenting an input graph with hyperedge nodes and a bipartite expander.
//!
//! An input graph on `n` nodes gains `n` hyperedge nodes with ids `n..2n`.
//! The expander joins original node `l` (left side) to hyperedge node `n + r`
//! (right side). Layers alternate between the original topology, in which the
//! hyperedge nodes are isolated, and the expander, starting with the original
//! graph.

use serde::{Deserialize, Serialize};

use crate::construct::{self, GeneratorConfig};
use crate::error::{Error, Result};
use crate::graph::{BipartiteExpander, BipartiteFile, Graph, GraphFile};

pub const REWIRED_FORMAT: &str = "hyperexpand-rewired-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Original,
    Expander,
}

/// `[Original, Expander, Original, …]` of length `num_layers` (1-indexed odd
/// layers run on the original graph, even layers on the expander).
pub fn layer_schedule(num_layers: usize) -> Vec<LayerKind> {
    (0..num_layers)
        .map(|i| if i % 2 == 0 { LayerKind::Original } else { LayerKind::Expander })
        .collect()
}

/// Input graph with its hyperedge nodes, expander and layer schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewiredInstance {
    original: Graph,
    expander: BipartiteExpander,
    schedule: Vec<LayerKind>,
}

impl RewiredInstance {
    pub fn new(original: Graph, expander: BipartiteExpander, schedule: Vec<LayerKind>) -> Result<Self> {
        if expander.n_left() != original.n() {
            return Err(Error::InvalidArgument(format!(
                "expander has {} left nodes but the graph has {} vertices",
                expander.n_left(),
                original.n()
            )));
        }
        Ok(RewiredInstance {
            original,
            expander,
            schedule,
        })
    }

    pub fn original(&self) -> &Graph {
        &self.original
    }

    pub fn expander(&self) -> &BipartiteExpander {
        &self.expander
    }

    pub fn schedule(&self) -> &[LayerKind] {
        &self.schedule
    }

    pub fn n(&self) -> usize {
        self.original.n()
    }

    pub fn total_nodes(&self) -> usize {
        2 * self.original.n()
    }

    /// `true` for hyperedge nodes (ids `n..2n`).
    pub fn hyperedge_mask(&self) -> Vec<bool> {
        (0..self.total_nodes()).map(|v| v >= self.n()).collect()
    }

    /// The original topology over all `2n` nodes; hyperedge nodes isolated.
    pub fn original_view(&self) -> Graph {
        let edges: Vec<_> = self.original.edges().collect();
        Graph::new(self.total_nodes(), &edges).expect("original edges stay valid")
    }

    pub fn to_json(&self) -> String {
        crate::json::to_compact(&self.file())
    }

    pub fn file(&self) -> RewiredFile {
        RewiredFile {
            format: REWIRED_FORMAT.to_string(),
            original: self.original.file(),
            expander: self.expander.file(),
            total_nodes: self.total_nodes(),
            hyperedge_mask: self.hyperedge_mask(),
            schedule: self.schedule.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RewiredFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: RewiredFile) -> Result<Self> {
        if file.format != REWIRED_FORMAT {
            return Err(Error::Parse(format!("unexpected format tag {:?}", file.format)));
        }
        let inst = RewiredInstance::new(
            Graph::from_file(file.original)?,
            BipartiteExpander::from_file(file.expander)?,
            file.schedule,
        )?;
        if file.total_nodes != inst.total_nodes() || file.hyperedge_mask != inst.hyperedge_mask() {
            return Err(Error::Parse("total_nodes / hyperedge_mask disagree with the graph".into()));
        }
        Ok(inst)
    }
}

/// On-disk form of a [`RewiredInstance`]. Unknown keys are ignored when
/// reading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewiredFile {
    pub format: String,
    pub original: GraphFile,
    pub expander: BipartiteFile,
    pub total_nodes: usize,
    pub hyperedge_mask: Vec<bool>,
    pub schedule: Vec<LayerKind>,
}

/// Builds the expander for `g` (side size forced to `g.n()`), using Ramanujan
/// rejection sampling when `cfg.ramanujan` is set.
pub fn augment(g: &Graph, cfg: &GeneratorConfig, num_layers: usize) -> Result<RewiredInstance> {
    if g.n() == 0 {
        return Err(Error::InvalidArgument("cannot augment an empty graph".into()));
    }
    let cfg = GeneratorConfig { n: g.n(), ..cfg.clone() };
    let expander = if cfg.ramanujan {
        construct::ramanujan_bipartite::<f64>(&cfg)?.expander
    } else {
        construct::k_regular_bipartite(&cfg)?
    };
    RewiredInstance::new(g.clone(), expander, layer_schedule(num_layers))
}

/// Augments each graph with its own expander, seeded by
/// `mix_seed(cfg.seed, index)`.
pub fn augment_all(graphs: &[Graph], cfg: &GeneratorConfig, num_layers: usize) -> Result<Vec<RewiredInstance>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let cfg = GeneratorConfig {
                seed: construct::mix_seed(cfg.seed, i as u64),
                ..cfg.clone()
            };
            augment(g, &cfg, num_layers)
        })
        .collect()
}
