//! Line-of-sight fractions through the building map.
//!
//! The segment between two grid centers is walked cell by cell (supercover
//! traversal): every cell the segment passes through contributes the exact
//! chord length it holds. Cells touched only at a corner hold zero length.

use rayon::prelude::*;

use super::{GridIndex, OccupancyGrid, UrbanScenario};
use crate::error::{Error, Result};

/// Default collinearity tolerance, in grid units.
pub const DEFAULT_COLLINEAR_TOL: f64 = 0.5;

/// Building length and total length (both in grid units) of the segment
/// between the centers of `p` and `q`.
///
/// Endpoints are put in a canonical order first so the result is bit-for-bit
/// symmetric in `(p, q)`.
pub(crate) fn segment_lengths(occ: &OccupancyGrid, p: GridIndex, q: GridIndex) -> (f64, f64) {
    let (a, b) = if p <= q { (p, q) } else { (q, p) };
    let (x0, y0) = (a.col as f64 + 0.5, a.row as f64 + 0.5);
    let (x1, y1) = (b.col as f64 + 0.5, b.row as f64 + 0.5);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let total = dx.hypot(dy);
    if a == b {
        return (0.0, 0.0);
    }

    // Crossings of vertical (x = k) and horizontal (y = k) cell boundaries,
    // each sequence already increasing in the segment parameter t.
    let x_cross = boundary_params(x0, dx, a.col, b.col);
    let y_cross = boundary_params(y0, dy, a.row, b.row);

    let mut building = 0.0;
    let mut t_prev = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let t_next = match (x_cross.get(i), y_cross.get(j)) {
            (Some(&tx), Some(&ty)) => {
                if tx <= ty {
                    i += 1;
                    tx
                } else {
                    j += 1;
                    ty
                }
            }
            (Some(&tx), None) => {
                i += 1;
                tx
            }
            (None, Some(&ty)) => {
                j += 1;
                ty
            }
            (None, None) => 1.0,
        };
        if t_next > t_prev {
            let mid = 0.5 * (t_prev + t_next);
            let col = (x0 + mid * dx).floor() as usize;
            let row = (y0 + mid * dy).floor() as usize;
            if occ.is_building(row, col) {
                building += (t_next - t_prev) * total;
            }
            t_prev = t_next;
        }
        if t_next >= 1.0 {
            break;
        }
    }
    (building, total)
}

fn boundary_params(origin: f64, delta: f64, from: usize, to: usize) -> Vec<f64> {
    if from == to {
        return Vec::new();
    }
    if to > from {
        (from + 1..=to).map(|k| (k as f64 - origin) / delta).collect()
    } else {
        (to + 1..=from).rev().map(|k| (k as f64 - origin) / delta).collect()
    }
}

fn fraction_from(occ: &OccupancyGrid, p: GridIndex, q: GridIndex) -> f64 {
    let (building, total) = segment_lengths(occ, p, q);
    if total == 0.0 {
        return if occ.is_building(p.row, p.col) { 0.0 } else { 1.0 };
    }
    (1.0 - building / total).clamp(0.0, 1.0)
}

/// Fraction of the straight segment between the centers of `p` and `q` that
/// lies outside building cells.
pub fn los_fraction(scenario: &UrbanScenario, p: GridIndex, q: GridIndex) -> Result<f64> {
    scenario.check_grid(p)?;
    scenario.check_grid(q)?;
    Ok(fraction_from(&scenario.occupancy, p, q))
}

/// Whether any building lies between `p` and `q`.
pub fn obstruction_exists(scenario: &UrbanScenario, p: GridIndex, q: GridIndex) -> Result<bool> {
    Ok(los_fraction(scenario, p, q)? < 1.0 - 1e-12)
}

/// Whether `p`, `q` and transmitter `m` lie on one straight line within `tol`
/// grid units, with `p` and `q` on the same ray out of the transmitter.
///
/// The line runs through the transmitter and whichever point is farther from
/// it; the nearer point's perpendicular distance to that line is compared to
/// `tol`. A point sitting on the transmitter cell is collinear with anything.
pub fn collinear_with_transmitter(
    scenario: &UrbanScenario,
    p: GridIndex,
    q: GridIndex,
    m: usize,
    tol: f64,
) -> Result<bool> {
    scenario.check_grid(p)?;
    scenario.check_grid(q)?;
    let tx = scenario
        .transmitters
        .get(m)
        .ok_or_else(|| Error::invalid("transmitter", format!("index {m} out of range")))?;
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol", "must be non-negative"));
    }
    Ok(collinear_raw(tx.grid(), p, q, tol))
}

pub(crate) fn collinear_raw(tx: GridIndex, p: GridIndex, q: GridIndex, tol: f64) -> bool {
    let rel = |g: GridIndex| (g.col as f64 - tx.col as f64, g.row as f64 - tx.row as f64);
    let (mut u, mut v) = (rel(p), rel(q));
    let (nu, nv) = (u.0.hypot(u.1), v.0.hypot(v.1));
    if nu == 0.0 || nv == 0.0 {
        return true;
    }
    // u is the nearer point, v spans the line.
    if nu > nv || (nu == nv && p > q) {
        std::mem::swap(&mut u, &mut v);
    }
    let norm_v = v.0.hypot(v.1);
    let dist = (u.0 * v.1 - u.1 * v.0).abs() / norm_v;
    let same_ray = u.0 * v.0 + u.1 * v.1 > 0.0;
    same_ray && dist <= tol
}

/// LOS fraction and segment length from every grid to every transmitter.
///
/// Computed once per scenario and shared by the ground-truth generator and
/// the radio depth maps.
#[derive(Debug, Clone)]
pub struct LosTable {
    transmitters: usize,
    /// `[grid * transmitters + m]`
    fraction: Vec<f64>,
    /// Segment length in meters, floored at half a grid.
    distance_m: Vec<f64>,
}

impl LosTable {
    pub fn compute(scenario: &UrbanScenario) -> Self {
        let m_count = scenario.transmitters.len();
        let cells = scenario.grid_count();
        let floor = 0.5 * scenario.grid_size_m;
        let per_cell: Vec<(Vec<f64>, Vec<f64>)> = (0..cells)
            .into_par_iter()
            .map(|lin| {
                let g = scenario.grid_of(lin);
                let mut frac = Vec::with_capacity(m_count);
                let mut dist = Vec::with_capacity(m_count);
                for tx in &scenario.transmitters {
                    frac.push(fraction_from(&scenario.occupancy, g, tx.grid()));
                    dist.push(scenario.distance_m(g, tx.grid()).max(floor));
                }
                (frac, dist)
            })
            .collect();
        let mut fraction = Vec::with_capacity(cells * m_count);
        let mut distance_m = Vec::with_capacity(cells * m_count);
        for (f, d) in per_cell {
            fraction.extend(f);
            distance_m.extend(d);
        }
        Self {
            transmitters: m_count,
            fraction,
            distance_m,
        }
    }

    pub fn transmitters(&self) -> usize {
        self.transmitters
    }

    #[inline]
    pub fn fraction(&self, linear: usize, m: usize) -> f64 {
        self.fraction[linear * self.transmitters + m]
    }

    #[inline]
    pub fn distance_m(&self, linear: usize, m: usize) -> f64 {
        self.distance_m[linear * self.transmitters + m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::free_scenario;
    use crate::scenario::TransmitterSpec;

    fn with_buildings(rows: usize, cols: usize, cells: &[(usize, usize)]) -> UrbanScenario {
        let mut s = free_scenario(rows, cols, &[]);
        for &(r, c) in cells {
            s.occupancy.set(r, c, true);
        }
        s
    }

    #[test]
    fn free_map_is_full_los() {
        let s = free_scenario(8, 8, &[]);
        let f = los_fraction(&s, GridIndex::new(0, 0), GridIndex::new(7, 5)).unwrap();
        assert_eq!(f, 1.0);
        assert!(!obstruction_exists(&s, GridIndex::new(0, 0), GridIndex::new(7, 5)).unwrap());
        assert!(!obstruction_exists(&s, GridIndex::new(3, 3), GridIndex::new(3, 4)).unwrap());
    }

    #[test]
    fn segment_inside_solid_building_is_zero() {
        let cells: Vec<_> = (0..8).flat_map(|r| (0..8).map(move |c| (r, c))).collect();
        let s = with_buildings(8, 8, &cells);
        assert_eq!(los_fraction(&s, GridIndex::new(2, 2), GridIndex::new(5, 6)).unwrap(), 0.0);
    }

    #[test]
    fn horizontal_segment_through_two_cell_wall() {
        // Centers of col 0 and col 10 are 10 cells apart; the wall occupies
        // cols 4 and 5 entirely, i.e. 2 of the 10 units.
        let s = with_buildings(2, 12, &[(0, 4), (0, 5), (1, 4), (1, 5)]);
        let f = los_fraction(&s, GridIndex::new(0, 0), GridIndex::new(0, 10)).unwrap();
        assert!((f - 0.8).abs() < 1e-12, "{f}");
        assert!(obstruction_exists(&s, GridIndex::new(0, 0), GridIndex::new(0, 10)).unwrap());
    }

    #[test]
    fn diagonal_corner_touch_contributes_nothing() {
        // The diagonal from (0,0) to (1,1) passes exactly through the shared
        // corner of (0,1) and (1,0).
        let s = with_buildings(2, 2, &[(0, 1), (1, 0)]);
        assert_eq!(los_fraction(&s, GridIndex::new(0, 0), GridIndex::new(1, 1)).unwrap(), 1.0);
    }

    #[test]
    fn out_of_bounds_errors() {
        let s = free_scenario(4, 4, &[]);
        assert!(los_fraction(&s, GridIndex::new(4, 0), GridIndex::new(0, 0)).is_err());
        assert!(obstruction_exists(&s, GridIndex::new(0, 0), GridIndex::new(0, 9)).is_err());
    }

    #[test]
    fn collinear_cases() {
        let mut s = free_scenario(12, 12, &[(5, 5)]);
        let tol = DEFAULT_COLLINEAR_TOL;
        let c = |s: &UrbanScenario, p: (usize, usize), q: (usize, usize)| {
            collinear_with_transmitter(s, GridIndex::new(p.0, p.1), GridIndex::new(q.0, q.1), 0, tol)
                .unwrap()
        };
        assert!(c(&s, (5, 7), (5, 10)));
        assert!(c(&s, (5, 10), (5, 7)));
        assert!(!c(&s, (5, 2), (5, 10)), "opposite sides of the transmitter");
        assert!(!c(&s, (5, 7), (8, 7)));

        // Transmitter at the origin, far point (1, 5), near point (0, 2):
        // distance = |2*1 - 0*5| / sqrt(26) = 0.3922 grids.
        s.transmitters = vec![TransmitterSpec {
            row: 0,
            col: 0,
            tx_power_dbm: vec![30.0],
        }];
        let d = 2.0 / 26f64.sqrt();
        assert!((d - 0.3922).abs() < 1e-4);
        assert!(c(&s, (0, 2), (1, 5)));
        assert!(c(&s, (1, 5), (0, 2)));
        assert!(!collinear_with_transmitter(&s, GridIndex::new(0, 2), GridIndex::new(1, 5), 0, 0.3)
            .unwrap());
    }

    #[test]
    fn los_table_matches_direct_calls() {
        let s = {
            let mut s = with_buildings(10, 10, &[(3, 3), (3, 4), (6, 2)]);
            s.transmitters = vec![TransmitterSpec {
                row: 0,
                col: 9,
                tx_power_dbm: vec![30.0],
            }];
            s
        };
        let t = LosTable::compute(&s);
        for lin in 0..s.grid_count() {
            let g = s.grid_of(lin);
            assert_eq!(t.fraction(lin, 0), los_fraction(&s, g, GridIndex::new(0, 9)).unwrap());
        }
        assert_eq!(t.distance_m(9, 0), 2.5);
    }
}
