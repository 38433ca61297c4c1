//! Edge-encoding strategies.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Adjacency, RadioNode};
use crate::error::{Error, Result};
use crate::propagation::{DepthMap, DepthParams};
use crate::scenario::los::segment_lengths;
use crate::scenario::los::collinear_raw;
use crate::scenario::{GridIndex, UrbanScenario, DEFAULT_COLLINEAR_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    #[default]
    Four,
    Eight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodingStrategy {
    /// Connect grid neighbors.
    Adjacency { neighborhood: Neighborhood },
    /// Connect nodes with a clear line of sight between them. `literal`
    /// inverts the test (connect only when a building lies between).
    Environment {
        range_limit_m: Option<f64>,
        literal: bool,
    },
    /// Connect nodes lying on a common ray out of some transmitter.
    Transmitter {
        tol: f64,
        range_limit_m: Option<f64>,
    },
    /// Connect nodes within `d_th` whose radio depths differ by at most `delta`.
    ModelBased(DepthParams),
}

impl EncodingStrategy {
    pub fn adjacency() -> Self {
        Self::Adjacency {
            neighborhood: Neighborhood::Four,
        }
    }

    pub fn environment(range_limit_m: Option<f64>) -> Self {
        Self::Environment {
            range_limit_m,
            literal: false,
        }
    }

    pub fn transmitter(range_limit_m: Option<f64>) -> Self {
        Self::Transmitter {
            tol: DEFAULT_COLLINEAR_TOL,
            range_limit_m,
        }
    }

    pub fn model_based(params: DepthParams) -> Self {
        Self::ModelBased(params)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Adjacency { .. } => "adjacency",
            Self::Environment { .. } => "environment",
            Self::Transmitter { .. } => "transmitter",
            Self::ModelBased(_) => "model_based",
        }
    }

    pub fn needs_depth(&self) -> bool {
        matches!(self, Self::ModelBased(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Adjacency { .. } => Ok(()),
            Self::Environment { range_limit_m, .. } => check_range(*range_limit_m),
            Self::Transmitter { tol, range_limit_m } => {
                if !(*tol >= 0.0) {
                    return Err(Error::invalid("tol", "must be non-negative"));
                }
                check_range(*range_limit_m)
            }
            Self::ModelBased(p) => p.validate(),
        }
    }
}

fn check_range(r: Option<f64>) -> Result<()> {
    match r {
        Some(v) if !(v > 0.0) => Err(Error::invalid("range_limit_m", "must be positive")),
        _ => Ok(()),
    }
}

/// Candidate pairs `(i, j)`, `i < j`, whose centers are at most `radius_m`
/// apart (all pairs when `radius_m` is `None`).
fn candidate_pairs(nodes: &[RadioNode], grid_size_m: f64, radius_m: Option<f64>) -> Vec<(usize, usize)> {
    let n = nodes.len();
    let Some(radius) = radius_m else {
        return (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    };
    let index: HashMap<GridIndex, usize> = nodes.iter().enumerate().map(|(i, nd)| (nd.grid, i)).collect();
    let reach = (radius / grid_size_m).floor() as isize;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for (i, nd) in nodes.iter().enumerate() {
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let d2 = (dr * dr + dc * dc) as f64 * grid_size_m * grid_size_m;
                if d2 > r2 * (1.0 + 1e-12) || (dr == 0 && dc == 0) {
                    continue;
                }
                let (r, c) = (nd.grid.row as isize + dr, nd.grid.col as isize + dc);
                if r < 0 || c < 0 {
                    continue;
                }
                if let Some(&j) = index.get(&GridIndex::new(r as usize, c as usize)) {
                    if j > i {
                        out.push((i, j));
                    }
                }
            }
        }
    }
    out
}

fn distance_m(a: &RadioNode, b: &RadioNode) -> f64 {
    (a.position_m.0 - b.position_m.0).hypot(a.position_m.1 - b.position_m.1)
}

/// Builds the adjacency of `nodes` under `strategy`. `depth_map` must be
/// given (at the nodes' frequency) exactly when the strategy is model-based.
pub fn encode_edges(
    nodes: &[RadioNode],
    scenario: &UrbanScenario,
    strategy: &EncodingStrategy,
    depth_map: Option<&DepthMap>,
) -> Result<Adjacency> {
    strategy.validate()?;
    let n = nodes.len();
    let a = scenario.grid_size_m;
    match strategy {
        EncodingStrategy::Adjacency { neighborhood } => {
            let pairs = candidate_pairs(nodes, a, Some(a * 2f64.sqrt()));
            let keep = pairs.into_iter().filter(|&(i, j)| {
                let (p, q) = (nodes[i].grid, nodes[j].grid);
                let dr = p.row.abs_diff(q.row);
                let dc = p.col.abs_diff(q.col);
                match neighborhood {
                    Neighborhood::Four => dr + dc == 1,
                    Neighborhood::Eight => dr.max(dc) == 1,
                }
            });
            Adjacency::from_edges(n, keep)
        }
        EncodingStrategy::Environment {
            range_limit_m,
            literal,
        } => {
            let pairs = candidate_pairs(nodes, a, *range_limit_m);
            let keep = pairs.into_iter().filter(|&(i, j)| {
                let (building, total) =
                    segment_lengths(&scenario.occupancy, nodes[i].grid, nodes[j].grid);
                let blocked = building / total > 1e-12;
                blocked == *literal
            });
            Adjacency::from_edges(n, keep)
        }
        EncodingStrategy::Transmitter { tol, range_limit_m } => {
            let pairs = candidate_pairs(nodes, a, *range_limit_m);
            let keep = pairs.into_iter().filter(|&(i, j)| {
                scenario
                    .transmitters
                    .iter()
                    .any(|tx| collinear_raw(tx.grid(), nodes[i].grid, nodes[j].grid, *tol))
            });
            Adjacency::from_edges(n, keep)
        }
        EncodingStrategy::ModelBased(params) => {
            let depth = depth_map.ok_or(Error::invalid(
                "depth_map",
                "model-based encoding requires a radio depth map",
            ))?;
            if depth.rows != scenario.rows() || depth.cols != scenario.cols() {
                return Err(Error::Shape("depth map does not match the scenario grid".into()));
            }
            if let Some(nd) = nodes.iter().find(|nd| (nd.frequency_mhz - depth.f_mhz).abs() > 1e-9) {
                return Err(Error::invalid(
                    "depth_map",
                    format!("depth map at {} MHz but nodes at {} MHz", depth.f_mhz, nd.frequency_mhz),
                ));
            }
            let depth_of = |nd: &RadioNode| depth.get(scenario.linear(nd.grid));
            let pairs = candidate_pairs(nodes, a, Some(params.d_th_m));
            let keep = pairs.into_iter().filter(|&(i, j)| {
                distance_m(&nodes[i], &nodes[j]) <= params.d_th_m
                    && (depth_of(&nodes[i]) - depth_of(&nodes[j])).abs() <= params.delta
            });
            Adjacency::from_edges(n, keep)
        }
    }
}
