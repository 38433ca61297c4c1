//! Seeded block splits, observation sampling and label selection.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose,
//! block)`, so changing one draw never shifts another.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{BlockIndex, GridIndex, UrbanScenario};

const STREAM_SPLIT: u64 = 1;
const STREAM_SAMPLES: u64 = 2;
const STREAM_LABELS: u64 = 3;
pub(crate) const STREAM_SHUFFLE: u64 = 4;

/// Independent generator for `(seed, purpose, index)`.
pub fn rng_for(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) ^ index);
    rng
}

fn block_key(b: BlockIndex) -> u64 {
    ((b.block_row as u64) << 24) | b.block_col as u64
}

/// `ceil(rate * n)` with a small guard against `0.05 * 1600 = 80.000000001`.
pub fn sample_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSplit {
    /// Training blocks with target-band labels.
    pub b1: Vec<BlockIndex>,
    /// Inference blocks.
    pub b2: Vec<BlockIndex>,
}

impl BlockSplit {
    /// Shuffles the blocks holding at least one free grid and puts
    /// `round(fraction * n)` of them in `b1`. Both lists come back sorted.
    pub fn random(scenario: &UrbanScenario, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid("split_fraction", "must lie in (0, 1)"));
        }
        let mut eligible = eligible_blocks(scenario);
        if eligible.len() < 2 {
            return Err(Error::Empty("a split needs at least two blocks with free grids"));
        }
        eligible.shuffle(&mut rng_for(seed, STREAM_SPLIT, 0));
        let n1 = ((fraction * eligible.len() as f64).round() as usize).clamp(1, eligible.len() - 1);
        let mut b1 = eligible[..n1].to_vec();
        let mut b2 = eligible[n1..].to_vec();
        b1.sort();
        b2.sort();
        Ok(Self { b1, b2 })
    }

    pub fn validate(&self, scenario: &UrbanScenario) -> Result<()> {
        for b in self.b1.iter().chain(&self.b2) {
            scenario.check_block(*b)?;
        }
        if self.b1.iter().any(|b| self.b2.contains(b)) {
            return Err(Error::invalid("split", "B1 and B2 overlap"));
        }
        let mut all: Vec<_> = self.b1.iter().chain(&self.b2).copied().collect();
        all.sort();
        all.dedup();
        if all != eligible_blocks(scenario) {
            return Err(Error::invalid("split", "B1 and B2 must cover every block with a free grid"));
        }
        Ok(())
    }
}

pub fn eligible_blocks(scenario: &UrbanScenario) -> Vec<BlockIndex> {
    scenario
        .blocks()
        .into_iter()
        .filter(|&b| scenario.block_free_grids(b).map(|g| !g.is_empty()).unwrap_or(false))
        .collect()
}

/// Seeded order of a block's free grids; sampling at rate `r` takes the
/// first `ceil(r n)`, so lower rates are subsets of higher ones.
fn sampling_order(scenario: &UrbanScenario, b: BlockIndex, seed: u64) -> Result<Vec<GridIndex>> {
    let mut grids = scenario.block_free_grids(b)?;
    grids.shuffle(&mut rng_for(seed, STREAM_SAMPLES, block_key(b)));
    Ok(grids)
}

/// Area-wide observation mask (indexed by linear grid) sampling `rate` of
/// the free grids of every listed block.
pub fn sample_mask(scenario: &UrbanScenario, blocks: &[BlockIndex], rate: f64, seed: u64) -> Result<Vec<bool>> {
    Ok(nested_sample_masks(scenario, blocks, &[rate], seed)?.remove(0))
}

/// One mask per rate, all drawn from the same per-block order.
pub fn nested_sample_masks(
    scenario: &UrbanScenario,
    blocks: &[BlockIndex],
    rates: &[f64],
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    for &r in rates {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::invalid("sampling_rate", format!("{r} is outside (0, 1]")));
        }
    }
    let mut masks = vec![vec![false; scenario.grid_count()]; rates.len()];
    for &b in blocks {
        let order = sampling_order(scenario, b, seed)?;
        for (mask, &r) in masks.iter_mut().zip(rates) {
            for g in &order[..sample_count(r, order.len())] {
                mask[scenario.linear(*g)] = true;
            }
        }
    }
    Ok(masks)
}

/// Label mask over the free grids of block `b` (node order): all nodes when
/// `fraction == 1`, otherwise `ceil(fraction n)` drawn uniformly.
pub fn label_mask(n: usize, b: BlockIndex, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("mask_fraction", "must lie in (0, 1]"));
    }
    if fraction >= 1.0 {
        return Ok(vec![true; n]);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, STREAM_LABELS, block_key(b)));
    let mut mask = vec![false; n];
    for &i in &idx[..sample_count(fraction, n)] {
        mask[i] = true;
    }
    Ok(mask)
}
