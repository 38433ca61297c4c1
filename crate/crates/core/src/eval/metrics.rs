use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::BlockIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRmse {
    pub block: BlockIndex,
    pub rmse_db: f64,
    pub node_count: usize,
}

/// Root mean squared error over the evaluated grids of one block.
pub fn rmse_block(block: BlockIndex, pred: &[f64], truth: &[f64]) -> Result<BlockRmse> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth values",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("block has no grids to evaluate"));
    }
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let rmse_db = (sq / pred.len() as f64).sqrt();
    if !rmse_db.is_finite() {
        return Err(Error::invalid("prediction", format!("non-finite error in block {block}")));
    }
    Ok(BlockRmse {
        block,
        rmse_db,
        node_count: pred.len(),
    })
}

/// Square root of the mean of squared block RMSEs.
pub fn rmse_area(blocks: &[BlockRmse]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::Empty("no inference blocks to aggregate"));
    }
    let ms: f64 = blocks.iter().map(|b| b.rmse_db * b.rmse_db).sum::<f64>() / blocks.len() as f64;
    Ok(ms.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower edge; the bin spans `[lo, lo + width)`.
    pub lo: f64,
    pub count: usize,
}

/// Fixed-width histogram anchored at a multiple of `bin_width_db`.
/// Bins run contiguously from the lowest to the highest occupied one;
/// non-finite values are skipped.
pub fn histogram(values: &[f64], bin_width_db: f64) -> Result<Vec<HistogramBin>> {
    if !(bin_width_db > 0.0 && bin_width_db.is_finite()) {
        return Err(Error::invalid("bin_width_db", "must be positive"));
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let Some(min) = finite.iter().copied().reduce(f64::min) else {
        return Ok(Vec::new());
    };
    let first = (min / bin_width_db).floor() as i64;
    let slot = |v: f64| ((v / bin_width_db).floor() as i64 - first) as usize;
    let n = finite.iter().map(|&v| slot(v)).max().unwrap_or(0) + 1;
    let mut bins: Vec<HistogramBin> = (0..n)
        .map(|i| HistogramBin {
            lo: (first + i as i64) as f64 * bin_width_db,
            count: 0,
        })
        .collect();
    for v in finite {
        bins[slot(v)].count += 1;
    }
    Ok(bins)
}
