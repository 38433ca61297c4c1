//! Procedural street-grid cities for synthetic scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridIndex, OccupancyGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityParams {
    pub seed: u64,
    pub street_width_m: f64,
    /// Range of city-block edge lengths between streets.
    pub min_block_m: f64,
    pub max_block_m: f64,
    /// Range of building lot lengths inside a city block.
    pub min_lot_m: f64,
    pub max_lot_m: f64,
    /// Probability that a lot carries a building.
    pub build_prob: f64,
    /// Maximum setback of a building from its lot edge.
    pub max_setback_m: f64,
    /// Radius of open space kept around each transmitter.
    pub clearance_m: f64,
}

impl Default for CityParams {
    fn default() -> Self {
        Self {
            seed: 0,
            street_width_m: 15.0,
            min_block_m: 50.0,
            max_block_m: 110.0,
            min_lot_m: 20.0,
            max_lot_m: 45.0,
            build_prob: 0.75,
            max_setback_m: 10.0,
            clearance_m: 10.0,
        }
    }
}

fn cells(meters: f64, grid_size_m: f64) -> usize {
    ((meters / grid_size_m).round() as usize).max(1)
}

/// Alternating street / block intervals `[start, end)` along one axis.
fn intervals(len: usize, street: usize, min: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = street / 2;
    while pos < len {
        let size = rng.random_range(min..=max.max(min));
        let end = (pos + size).min(len);
        out.push((pos, end));
        pos = end + street;
    }
    out
}

fn split(start: usize, end: usize, min: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = start;
    while pos < end {
        let remaining = end - pos;
        let size = if remaining <= max {
            remaining
        } else {
            rng.random_range(min..=max).min(remaining)
        };
        out.push((pos, pos + size));
        pos += size;
    }
    out
}

/// Street-grid city on a `rows x cols` lattice; cells around `keep_free`
/// (transmitter sites) are cleared.
pub fn generate_city(
    rows: usize,
    cols: usize,
    grid_size_m: f64,
    params: &CityParams,
    keep_free: &[GridIndex],
) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let street = cells(params.street_width_m, grid_size_m);
    let (bmin, bmax) = (cells(params.min_block_m, grid_size_m), cells(params.max_block_m, grid_size_m));
    let (lmin, lmax) = (cells(params.min_lot_m, grid_size_m), cells(params.max_lot_m, grid_size_m));
    let setback = (params.max_setback_m / grid_size_m).round() as usize;

    let mut occ = OccupancyGrid::free(rows, cols);
    let row_blocks = intervals(rows, street, bmin, bmax, &mut rng);
    let col_blocks = intervals(cols, street, bmin, bmax, &mut rng);
    for &(r0, r1) in &row_blocks {
        for &(c0, c1) in &col_blocks {
            for (lr0, lr1) in split(r0, r1, lmin, lmax, &mut rng) {
                for (lc0, lc1) in split(c0, c1, lmin, lmax, &mut rng) {
                    if !rng.random_bool(params.build_prob.clamp(0.0, 1.0)) {
                        continue;
                    }
                    let mut sb = || if setback == 0 { 0 } else { rng.random_range(0..=setback) };
                    let (t, b, l, r) = (sb(), sb(), sb(), sb());
                    let (br0, br1) = (lr0 + t, lr1.saturating_sub(b));
                    let (bc0, bc1) = (lc0 + l, lc1.saturating_sub(r));
                    for row in br0..br1 {
                        for col in bc0..bc1 {
                            occ.set(row, col, true);
                        }
                    }
                }
            }
        }
    }

    let clear = (params.clearance_m / grid_size_m).ceil() as isize;
    for g in keep_free {
        for dr in -clear..=clear {
            for dc in -clear..=clear {
                if dr * dr + dc * dc > clear * clear {
                    continue;
                }
                let (r, c) = (g.row as isize + dr, g.col as isize + dc);
                if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols {
                    occ.set(r as usize, c as usize, false);
                }
            }
        }
        if g.row < rows && g.col < cols {
            occ.set(g.row, g.col, false);
        }
    }
    occ
}
