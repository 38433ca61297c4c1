//! Radio graphs for one block at one frequency.
//!
//! Nodes are the non-building grids of the block; edges come from one of
//! four encoding strategies. Positions and depth values are always global
//! (area-wide), never relative to the block.

mod adjacency;
mod encode;
mod export;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::propagation::{DepthMap, RadiomapTensor};
use crate::scenario::{BlockIndex, GridIndex, UrbanScenario};

pub use adjacency::Adjacency;
pub use encode::{encode_edges, EncodingStrategy, Neighborhood};
pub use export::{write_edge_list, write_node_table};

#[derive(Debug, Clone, PartialEq)]
pub struct RadioNode {
    pub grid: GridIndex,
    /// Global position of the grid center in meters (x east, y south).
    pub position_m: (f64, f64),
    pub frequency_mhz: f64,
    pub observed_rss_dbm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RadioGraph {
    pub nodes: Vec<RadioNode>,
    pub adjacency: Adjacency,
    pub block: BlockIndex,
    pub frequency_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub isolated_count: usize,
    pub mean_degree: f64,
}

/// One node per non-building grid of block `b`, observed exactly where
/// `sample_mask` (indexed by linear grid) is set.
pub fn extract_nodes(
    scenario: &UrbanScenario,
    values: &RadiomapTensor,
    b: BlockIndex,
    f_mhz: f64,
    sample_mask: &[bool],
) -> Result<Vec<RadioNode>> {
    scenario.frequency_index(f_mhz)?;
    let k = values.frequency_index(f_mhz)?;
    if sample_mask.len() != scenario.grid_count() {
        return Err(crate::Error::Shape(format!(
            "sample mask has {} entries for {} grids",
            sample_mask.len(),
            scenario.grid_count()
        )));
    }
    Ok(scenario
        .block_free_grids(b)?
        .into_iter()
        .map(|g| {
            let lin = scenario.linear(g);
            RadioNode {
                grid: g,
                position_m: scenario.position_m(g),
                frequency_mhz: f_mhz,
                observed_rss_dbm: sample_mask[lin].then(|| values.get(lin, k)),
            }
        })
        .collect())
}

pub fn build_graph(
    scenario: &UrbanScenario,
    values: &RadiomapTensor,
    b: BlockIndex,
    f_mhz: f64,
    sample_mask: &[bool],
    strategy: &EncodingStrategy,
    depth_map: Option<&DepthMap>,
) -> Result<RadioGraph> {
    let nodes = extract_nodes(scenario, values, b, f_mhz, sample_mask)?;
    let adjacency = encode_edges(&nodes, scenario, strategy, depth_map)?;
    Ok(RadioGraph {
        nodes,
        adjacency,
        block: b,
        frequency_mhz: f_mhz,
    })
}

pub fn graph_stats(graph: &RadioGraph) -> GraphStats {
    adjacency_stats(&graph.adjacency)
}

pub fn adjacency_stats(adj: &Adjacency) -> GraphStats {
    let n = adj.node_count();
    let e = adj.edge_count();
    GraphStats {
        node_count: n,
        edge_count: e,
        isolated_count: (0..n).filter(|&i| adj.degree(i) == 0).count(),
        mean_degree: if n == 0 { 0.0 } else { 2.0 * e as f64 / n as f64 },
    }
}
