use crate::error::Result;
use crate::graph::{encode_edges, Adjacency, EncodingStrategy, RadioNode};
use crate::propagation::{radio_depth_map_with, DepthMap};
use crate::scenario::{BlockIndex, GridIndex, LosTable, UrbanScenario};

/// Everything needed to turn a block into graphs under one strategy.
/// Depth maps are computed once per scenario frequency.
#[derive(Debug, Clone)]
pub struct GraphContext<'a> {
    pub scenario: &'a UrbanScenario,
    pub strategy: EncodingStrategy,
    depth: Vec<DepthMap>,
}

impl<'a> GraphContext<'a> {
    pub fn new(scenario: &'a UrbanScenario, strategy: EncodingStrategy) -> Result<Self> {
        Self::with_los(scenario, None, strategy)
    }

    /// Reuses a precomputed line-of-sight table when given.
    pub fn with_los(scenario: &'a UrbanScenario, los: Option<&LosTable>, strategy: EncodingStrategy) -> Result<Self> {
        strategy.validate()?;
        let depth = match &strategy {
            EncodingStrategy::ModelBased(params) => {
                let owned;
                let los = match los {
                    Some(l) => l,
                    None => {
                        owned = LosTable::compute(scenario);
                        &owned
                    }
                };
                scenario
                    .frequencies_mhz
                    .iter()
                    .map(|&f| radio_depth_map_with(scenario, los, params, f))
                    .collect::<Result<_>>()?
            }
            _ => Vec::new(),
        };
        Ok(Self {
            scenario,
            strategy,
            depth,
        })
    }

    pub fn depth_map(&self, f_mhz: f64) -> Result<Option<&DepthMap>> {
        if self.depth.is_empty() {
            return Ok(None);
        }
        Ok(Some(&self.depth[self.scenario.frequency_index(f_mhz)?]))
    }

    pub fn block_grids(&self, b: BlockIndex) -> Result<Vec<GridIndex>> {
        self.scenario.block_free_grids(b)
    }

    /// Graph over the free grids of `b` (in row-major order) at `f_mhz`.
    pub fn adjacency(&self, b: BlockIndex, f_mhz: f64) -> Result<Adjacency> {
        let grids = self.block_grids(b)?;
        self.adjacency_for(&grids, f_mhz)
    }

    pub fn adjacency_for(&self, grids: &[GridIndex], f_mhz: f64) -> Result<Adjacency> {
        self.scenario.frequency_index(f_mhz)?;
        let nodes: Vec<RadioNode> = grids
            .iter()
            .map(|&g| RadioNode {
                grid: g,
                position_m: self.scenario.position_m(g),
                frequency_mhz: f_mhz,
                observed_rss_dbm: None,
            })
            .collect();
        encode_edges(&nodes, self.scenario, &self.strategy, self.depth_map(f_mhz)?)
    }

    /// True when the graph differs between frequencies.
    pub fn frequency_dependent(&self) -> bool {
        self.strategy.needs_depth()
    }
}
