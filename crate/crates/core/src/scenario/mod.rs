//! Urban grid geometry: occupancy map, transmitters, frequency set and the
//! block partition.
//!
//! Grid indices are zero-based `(row, col)` with the origin at the northwest
//! corner; rows grow southwards and columns eastwards. A grid cell `(r, c)`
//! covers `[c, c + 1) x [r, r + 1)` in grid units and is measured at its
//! center.

pub(crate) mod file;
pub(crate) mod los;
pub mod procgen;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{load_map, load_scenario, parse_map, save_scenario, write_map};
pub use los::{
    collinear_with_transmitter, los_fraction, obstruction_exists, LosTable,
    DEFAULT_COLLINEAR_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub row: usize,
    pub col: usize,
}

impl GridIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockIndex {
    pub block_row: usize,
    pub block_col: usize,
}

impl BlockIndex {
    pub const fn new(block_row: usize, block_col: usize) -> Self {
        Self {
            block_row,
            block_col,
        }
    }
}

impl std::fmt::Display for BlockIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}_{}", self.block_row, self.block_col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterSpec {
    pub row: usize,
    pub col: usize,
    /// Transmit power per scenario frequency, in dBm.
    pub tx_power_dbm: Vec<f64>,
}

impl TransmitterSpec {
    pub fn grid(&self) -> GridIndex {
        GridIndex::new(self.row, self.col)
    }
}

/// Row-major building occupancy, `true` = building.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(rows: usize, cols: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::Shape(format!(
                "occupancy has {} cells, expected {rows}x{cols}",
                cells.len()
            )));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn free(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn is_building(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, building: bool) {
        self.cells[row * self.cols + col] = building;
    }

    pub fn building_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|&&b| b).count() as f64 / self.cells.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct UrbanScenario {
    pub width_m: f64,
    pub height_m: f64,
    pub grid_size_m: f64,
    pub block_size_m: f64,
    pub occupancy: OccupancyGrid,
    pub transmitters: Vec<TransmitterSpec>,
    pub frequencies_mhz: Vec<f64>,
}

fn exact_multiple(value: f64, unit: f64) -> Option<usize> {
    let ratio = value / unit;
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() < 1e-9 {
        Some(rounded as usize)
    } else {
        None
    }
}

impl UrbanScenario {
    pub fn new(
        width_m: f64,
        height_m: f64,
        grid_size_m: f64,
        block_size_m: f64,
        occupancy: OccupancyGrid,
        transmitters: Vec<TransmitterSpec>,
        frequencies_mhz: Vec<f64>,
    ) -> Result<Self> {
        let scenario = Self {
            width_m,
            height_m,
            grid_size_m,
            block_size_m,
            occupancy,
            transmitters,
            frequencies_mhz,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_size_m > 0.0) {
            return Err(Error::invalid("grid_size_m", "must be positive"));
        }
        if !(self.block_size_m > 0.0) {
            return Err(Error::invalid("block_size_m", "must be positive"));
        }
        let cols = exact_multiple(self.width_m, self.grid_size_m).ok_or_else(|| {
            Error::invalid("width_m", "must be a positive multiple of grid_size_m")
        })?;
        let rows = exact_multiple(self.height_m, self.grid_size_m).ok_or_else(|| {
            Error::invalid("height_m", "must be a positive multiple of grid_size_m")
        })?;
        exact_multiple(self.block_size_m, self.grid_size_m).ok_or_else(|| {
            Error::invalid("block_size_m", "must be a positive multiple of grid_size_m")
        })?;
        exact_multiple(self.width_m, self.block_size_m).ok_or_else(|| {
            Error::invalid("width_m", "must be a positive multiple of block_size_m")
        })?;
        exact_multiple(self.height_m, self.block_size_m).ok_or_else(|| {
            Error::invalid("height_m", "must be a positive multiple of block_size_m")
        })?;
        if self.occupancy.rows() != rows || self.occupancy.cols() != cols {
            return Err(Error::invalid(
                "occupancy",
                format!(
                    "map is {}x{} but the area implies {rows}x{cols} grids",
                    self.occupancy.rows(),
                    self.occupancy.cols()
                ),
            ));
        }
        if self.frequencies_mhz.is_empty() {
            return Err(Error::invalid("frequencies_mhz", "at least one frequency required"));
        }
        for (i, f) in self.frequencies_mhz.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0) {
                return Err(Error::invalid(
                    format!("frequencies_mhz[{i}]"),
                    "frequencies must be positive",
                ));
            }
            if i > 0 && *f <= self.frequencies_mhz[i - 1] {
                return Err(Error::invalid(
                    format!("frequencies_mhz[{i}]"),
                    "frequencies must be strictly increasing",
                ));
            }
        }
        for (i, tx) in self.transmitters.iter().enumerate() {
            let field = format!("transmitters[{i}]");
            if tx.row >= rows || tx.col >= cols {
                return Err(Error::invalid(
                    field,
                    format!("position ({}, {}) outside {rows}x{cols} grid", tx.row, tx.col),
                ));
            }
            if self.occupancy.is_building(tx.row, tx.col) {
                return Err(Error::invalid(
                    field,
                    format!("position ({}, {}) lies on a building", tx.row, tx.col),
                ));
            }
            if tx.tx_power_dbm.len() != self.frequencies_mhz.len() {
                return Err(Error::invalid(
                    field,
                    format!(
                        "{} power entries for {} frequencies",
                        tx.tx_power_dbm.len(),
                        self.frequencies_mhz.len()
                    ),
                ));
            }
            if tx.tx_power_dbm.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid(field, "non-finite transmit power"));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.occupancy.rows()
    }

    pub fn cols(&self) -> usize {
        self.occupancy.cols()
    }

    pub fn grid_count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Grids along one block edge (`l = A / a`).
    pub fn grids_per_block_side(&self) -> usize {
        (self.block_size_m / self.grid_size_m).round() as usize
    }

    pub fn blocks_down(&self) -> usize {
        self.rows() / self.grids_per_block_side()
    }

    pub fn blocks_across(&self) -> usize {
        self.cols() / self.grids_per_block_side()
    }

    pub fn blocks(&self) -> Vec<BlockIndex> {
        let mut out = Vec::with_capacity(self.blocks_down() * self.blocks_across());
        for br in 0..self.blocks_down() {
            for bc in 0..self.blocks_across() {
                out.push(BlockIndex::new(br, bc));
            }
        }
        out
    }

    pub fn check_grid(&self, g: GridIndex) -> Result<()> {
        if g.row >= self.rows() || g.col >= self.cols() {
            return Err(Error::OutOfBounds {
                row: g.row,
                col: g.col,
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        Ok(())
    }

    pub fn check_block(&self, b: BlockIndex) -> Result<()> {
        if b.block_row >= self.blocks_down() || b.block_col >= self.blocks_across() {
            return Err(Error::BlockOutOfRange {
                block_row: b.block_row,
                block_col: b.block_col,
                blocks_down: self.blocks_down(),
                blocks_across: self.blocks_across(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn linear(&self, g: GridIndex) -> usize {
        g.row * self.cols() + g.col
    }

    #[inline]
    pub fn grid_of(&self, linear: usize) -> GridIndex {
        GridIndex::new(linear / self.cols(), linear % self.cols())
    }

    #[inline]
    pub fn is_building(&self, g: GridIndex) -> bool {
        self.occupancy.is_building(g.row, g.col)
    }

    /// Grid center in global meters `(x east, y south)` from the northwest corner.
    #[inline]
    pub fn position_m(&self, g: GridIndex) -> (f64, f64) {
        (
            (g.col as f64 + 0.5) * self.grid_size_m,
            (g.row as f64 + 0.5) * self.grid_size_m,
        )
    }

    pub fn distance_m(&self, p: GridIndex, q: GridIndex) -> f64 {
        let (x0, y0) = self.position_m(p);
        let (x1, y1) = self.position_m(q);
        (x1 - x0).hypot(y1 - y0)
    }

    pub fn frequency_index(&self, f_mhz: f64) -> Result<usize> {
        self.frequencies_mhz
            .iter()
            .position(|&f| (f - f_mhz).abs() <= 1e-9 * f.abs().max(1.0))
            .ok_or(Error::UnknownFrequency(f_mhz))
    }

    /// Which block a grid falls in.
    pub fn block_of(&self, g: GridIndex) -> BlockIndex {
        let l = self.grids_per_block_side();
        BlockIndex::new(g.row / l, g.col / l)
    }

    /// All grid indices of a block in row-major order.
    pub fn block_grids(&self, b: BlockIndex) -> Result<Vec<GridIndex>> {
        self.check_block(b)?;
        let l = self.grids_per_block_side();
        let (r0, c0) = (b.block_row * l, b.block_col * l);
        let mut out = Vec::with_capacity(l * l);
        for r in r0..r0 + l {
            for c in c0..c0 + l {
                out.push(GridIndex::new(r, c));
            }
        }
        Ok(out)
    }

    /// Non-building grids of a block in row-major order.
    pub fn block_free_grids(&self, b: BlockIndex) -> Result<Vec<GridIndex>> {
        Ok(self
            .block_grids(b)?
            .into_iter()
            .filter(|g| !self.is_building(*g))
            .collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn free_scenario(rows: usize, cols: usize, tx: &[(usize, usize)]) -> UrbanScenario {
        UrbanScenario::new(
            cols as f64 * 5.0,
            rows as f64 * 5.0,
            5.0,
            10.0,
            OccupancyGrid::free(rows, cols),
            tx.iter()
                .map(|&(row, col)| TransmitterSpec {
                    row,
                    col,
                    tx_power_dbm: vec![30.0],
                })
                .collect(),
            vec![1750.0],
        )
        .unwrap()
    }

    #[test]
    fn minimal_scenario_has_eight_by_eight_grids() {
        let s = free_scenario(8, 8, &[(3, 3)]);
        assert_eq!((s.rows(), s.cols()), (8, 8));
        assert_eq!(s.blocks().len(), 16);
    }

    #[test]
    fn large_area_dimensions() {
        let s = UrbanScenario::new(
            2400.0,
            2200.0,
            5.0,
            200.0,
            OccupancyGrid::free(440, 480),
            vec![],
            vec![1750.0, 2750.0, 3750.0, 4750.0, 5750.0],
        )
        .unwrap();
        assert_eq!(s.cols(), 480);
        assert_eq!(s.rows(), 440);
        assert_eq!(s.block_grids(BlockIndex::new(0, 0)).unwrap().len(), 1600);
        assert_eq!(s.blocks_across() * s.blocks_down(), 12 * 11);
    }

    #[test]
    fn transmitter_on_building_is_rejected() {
        let mut occ = OccupancyGrid::free(8, 8);
        occ.set(2, 2, true);
        let err = UrbanScenario::new(
            40.0,
            40.0,
            5.0,
            10.0,
            occ,
            vec![TransmitterSpec {
                row: 2,
                col: 2,
                tx_power_dbm: vec![30.0],
            }],
            vec![1750.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("transmitters[0]"), "{err}");
    }

    #[test]
    fn rejects_bad_frequencies_and_dims() {
        let occ = OccupancyGrid::free(8, 8);
        let e = UrbanScenario::new(40.0, 40.0, 5.0, 10.0, occ.clone(), vec![], vec![2.0, 1.0])
            .unwrap_err();
        assert!(e.to_string().contains("frequencies_mhz[1]"));
        let e = UrbanScenario::new(40.0, 40.0, 5.0, 15.0, occ, vec![], vec![1.0]).unwrap_err();
        assert!(e.to_string().contains("block_size_m") || e.to_string().contains("width_m"));
    }

    #[test]
    fn small_block_has_four_grids_starting_at_origin() {
        let s = free_scenario(8, 8, &[]);
        let g = s.block_grids(BlockIndex::new(0, 0)).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], GridIndex::new(0, 0));
        assert_eq!(g, vec![
            GridIndex::new(0, 0),
            GridIndex::new(0, 1),
            GridIndex::new(1, 0),
            GridIndex::new(1, 1)
        ]);
        assert!(s.block_grids(BlockIndex::new(4, 0)).is_err());
    }

    #[test]
    fn blocks_partition_the_grid() {
        let s = free_scenario(12, 8, &[]);
        let mut seen = vec![0u32; s.grid_count()];
        for b in s.blocks() {
            for g in s.block_grids(b).unwrap() {
                seen[s.linear(g)] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }
}
