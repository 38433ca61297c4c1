//! Radio depth maps: per-grid, frequency-scaled line-of-sight exposure to
//! the transmitters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{LosTable, UrbanScenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthParams {
    /// Frequency-decay weight applied to `T * log10 f`.
    pub beta: f64,
    /// Constant absorbed by the approximate depth; kept for diagnostics.
    pub c0: f64,
    /// Constant fading term of the exact depth.
    pub c: f64,
    /// Distance-decay weight of the exact depth.
    pub alpha: f64,
    /// Maximum node distance for a depth-based edge, in meters.
    pub d_th_m: f64,
    /// Maximum depth difference for a depth-based edge.
    pub delta: f64,
}

impl Default for DepthParams {
    fn default() -> Self {
        Self::for_transmitters(3)
    }
}

impl DepthParams {
    /// Defaults with `delta = 1 x M`.
    pub fn for_transmitters(m: usize) -> Self {
        Self {
            beta: 10.0,
            c0: 0.0,
            c: 57.55,
            alpha: 20.0,
            d_th_m: 15.0,
            delta: m as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid("beta", "must be positive"));
        }
        if !(self.d_th_m > 0.0) {
            return Err(Error::invalid("d_th_m", "must be positive"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::invalid("delta", "must be non-negative"));
        }
        Ok(())
    }
}

/// Per-grid depth at one frequency; NaN at building cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub rows: usize,
    pub cols: usize,
    pub f_mhz: f64,
    pub values: Vec<f64>,
}

impl DepthMap {
    #[inline]
    pub fn get(&self, linear: usize) -> f64 {
        self.values[linear]
    }

    pub fn is_valid(&self, linear: usize) -> bool {
        self.values[linear].is_finite()
    }

    pub fn max_valid(&self) -> Option<f64> {
        self.values.iter().copied().filter(|v| v.is_finite()).reduce(f64::max)
    }
}

/// `D(n) = sum_m beta * T(n, m) * log10 f` over all transmitters.
pub fn radio_depth_map(scenario: &UrbanScenario, depth: &DepthParams, f_mhz: f64) -> Result<DepthMap> {
    let los = LosTable::compute(scenario);
    radio_depth_map_with(scenario, &los, depth, f_mhz)
}

pub fn radio_depth_map_with(
    scenario: &UrbanScenario,
    los: &LosTable,
    depth: &DepthParams,
    f_mhz: f64,
) -> Result<DepthMap> {
    if !(f_mhz > 0.0) {
        return Err(Error::invalid("f_mhz", "frequency must be positive"));
    }
    let scale = depth.beta * f_mhz.log10();
    let values = (0..scenario.grid_count())
        .map(|lin| {
            if scenario.occupancy.cells()[lin] {
                return f64::NAN;
            }
            (0..los.transmitters()).map(|m| scale * los.fraction(lin, m)).sum()
        })
        .collect();
    Ok(DepthMap {
        rows: scenario.rows(),
        cols: scenario.cols(),
        f_mhz,
        values,
    })
}

/// Exact single-transmitter depth `T * (C - alpha log10 d - beta log10 f)`,
/// with `d` floored at half a grid.
pub fn radio_depth_exact(
    scenario: &UrbanScenario,
    depth: &DepthParams,
    f_mhz: f64,
    m: usize,
) -> Result<DepthMap> {
    if !(f_mhz > 0.0) {
        return Err(Error::invalid("f_mhz", "frequency must be positive"));
    }
    let tx = scenario
        .transmitters
        .get(m)
        .ok_or_else(|| Error::invalid("transmitter", format!("index {m} out of range")))?;
    let floor = 0.5 * scenario.grid_size_m;
    let values = (0..scenario.grid_count())
        .map(|lin| {
            let g = scenario.grid_of(lin);
            if scenario.is_building(g) {
                return f64::NAN;
            }
            let t = crate::scenario::los_fraction(scenario, g, tx.grid()).unwrap_or(0.0);
            let d = scenario.distance_m(g, tx.grid()).max(floor);
            t * (depth.c - depth.alpha * d.log10() - depth.beta * f_mhz.log10())
        })
        .collect();
    Ok(DepthMap {
        rows: scenario.rows(),
        cols: scenario.cols(),
        f_mhz,
        values,
    })
}
