//! Synthetic occlusion-aware ground truth.
//!
//! Per transmitter the log-distance model is reduced by a wall-penetration
//! loss proportional to the building length crossed on the direct path; a
//! spatially correlated Gaussian shadowing field is added to the combined
//! value. The generator never looks at radio depth maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{path_rss_unchecked, PropagationParams, RadiomapTensor};
use crate::error::{Error, Result};
use crate::scenario::{LosTable, UrbanScenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub wall_loss_db_per_m: f64,
    pub shadow_sigma_db: f64,
    /// Correlation distance of the exponential shadowing covariance.
    pub shadow_corr_m: f64,
    /// Correlation between the shadowing fields of any two frequencies.
    pub shadow_freq_corr: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            wall_loss_db_per_m: 0.3,
            shadow_sigma_db: 4.0,
            shadow_corr_m: 40.0,
            shadow_freq_corr: 0.8,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wall_loss_db_per_m", self.wall_loss_db_per_m),
            ("shadow_sigma_db", self.shadow_sigma_db),
            ("shadow_corr_m", self.shadow_corr_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.shadow_freq_corr) {
            return Err(Error::invalid("shadow_freq_corr", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Unit-variance Gaussian field with covariance
/// `exp(-|dx| / L) * exp(-|dy| / L)`, drawn as a separable AR(1) process
/// along columns and rows.
pub fn shadow_field(rows: usize, cols: usize, grid_size_m: f64, corr_m: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = if corr_m > 0.0 {
        (-grid_size_m / corr_m).exp()
    } else {
        0.0
    };
    let innov = (1.0 - rho * rho).sqrt();
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut row_process = |buf: &mut Vec<f64>| {
        buf.clear();
        let mut prev: f64 = normal();
        buf.push(prev);
        for _ in 1..cols {
            prev = rho * prev + innov * normal();
            buf.push(prev);
        }
    };

    let mut field = Vec::with_capacity(rows * cols);
    let mut fresh = Vec::with_capacity(cols);
    for r in 0..rows {
        row_process(&mut fresh);
        if r == 0 {
            field.extend_from_slice(&fresh);
        } else {
            let start = (r - 1) * cols;
            for c in 0..cols {
                let v = rho * field[start + c] + innov * fresh[c];
                field.push(v);
            }
        }
    }
    field
}

pub fn generate_ground_truth(
    scenario: &UrbanScenario,
    prop: &PropagationParams,
    gen: &GeneratorParams,
) -> Result<RadiomapTensor> {
    let los = LosTable::compute(scenario);
    generate_ground_truth_with(scenario, &los, prop, gen)
}

pub fn generate_ground_truth_with(
    scenario: &UrbanScenario,
    los: &LosTable,
    prop: &PropagationParams,
    gen: &GeneratorParams,
) -> Result<RadiomapTensor> {
    scenario.validate()?;
    prop.validate()?;
    gen.validate()?;
    if scenario.transmitters.is_empty() {
        return Err(Error::Empty("ground truth needs at least one transmitter"));
    }
    let (rows, cols) = (scenario.rows(), scenario.cols());
    let k_count = scenario.frequencies_mhz.len();

    let shadows: Vec<Vec<f64>> = if gen.shadow_sigma_db > 0.0 {
        let common = shadow_field(rows, cols, scenario.grid_size_m, gen.shadow_corr_m, gen.seed);
        let (wc, wo) = (gen.shadow_freq_corr.sqrt(), (1.0 - gen.shadow_freq_corr).sqrt());
        (0..k_count)
            .map(|k| {
                let own = shadow_field(
                    rows,
                    cols,
                    scenario.grid_size_m,
                    gen.shadow_corr_m,
                    gen.seed.wrapping_add(k as u64 + 1),
                );
                common
                    .iter()
                    .zip(&own)
                    .map(|(c, o)| gen.shadow_sigma_db * (wc * c + wo * o))
                    .collect()
            })
            .collect()
    } else {
        vec![vec![0.0; rows * cols]; k_count]
    };

    let mut out = RadiomapTensor::for_scenario(scenario);
    let cells: Vec<Option<Vec<f64>>> = (0..rows * cols)
        .into_par_iter()
        .map(|lin| {
            if !out.is_valid(lin) {
                return None;
            }
            let mut col = Vec::with_capacity(k_count);
            for (k, &f) in scenario.frequencies_mhz.iter().enumerate() {
                let mut sum = 0.0;
                for (m, tx) in scenario.transmitters.iter().enumerate() {
                    let d = los.distance_m(lin, m);
                    let blocked = (1.0 - los.fraction(lin, m)) * d;
                    sum += path_rss_unchecked(tx.tx_power_dbm[k], prop, f, d)
                        - gen.wall_loss_db_per_m * blocked;
                }
                col.push(sum + shadows[k][lin]);
            }
            Some(col)
        })
        .collect();
    for (lin, col) in cells.into_iter().enumerate() {
        if let Some(col) = col {
            for (k, v) in col.into_iter().enumerate() {
                out.set(lin, k, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{path_rss, total_rss};
    use crate::scenario::tests::free_scenario;
    use crate::scenario::GridIndex;

    fn quiet() -> GeneratorParams {
        GeneratorParams {
            wall_loss_db_per_m: 0.0,
            shadow_sigma_db: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn free_map_matches_closed_form() {
        let mut s = free_scenario(10, 10, &[(2, 3), (7, 8)]);
        s.frequencies_mhz = vec![1750.0, 2750.0];
        for tx in &mut s.transmitters {
            tx.tx_power_dbm = vec![30.0, 28.0];
        }
        let prop = PropagationParams::default();
        let t = generate_ground_truth(&s, &prop, &quiet()).unwrap();
        t.check_invariants().unwrap();
        for lin in 0..s.grid_count() {
            let g = s.grid_of(lin);
            for (k, &f) in s.frequencies_mhz.iter().enumerate() {
                let terms: Vec<f64> = s
                    .transmitters
                    .iter()
                    .map(|tx| {
                        let d = s.distance_m(g, tx.grid()).max(2.5);
                        path_rss(tx.tx_power_dbm[k], &prop, f, d).unwrap()
                    })
                    .collect();
                let expect = total_rss(&terms).unwrap();
                assert!((t.get(lin, k) - expect).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut s = free_scenario(12, 12, &[(1, 1)]);
        s.occupancy.set(5, 5, true);
        let prop = PropagationParams::default();
        let gen = GeneratorParams::default();
        let a = generate_ground_truth(&s, &prop, &gen).unwrap();
        let b = generate_ground_truth(&s, &prop, &gen).unwrap();
        let bits = |t: &RadiomapTensor| t.column(0).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = generate_ground_truth(&s, &prop, &GeneratorParams { seed: 9, ..gen }).unwrap();
        assert_ne!(a.get(0, 0), c.get(0, 0));
    }

    #[test]
    fn ten_meter_wall_costs_twenty_db() {
        // Transmitter at col 0, receiver at col 8, wall of two 5 m cells at
        // cols 3-4 in the transmitter's row.
        let mut s = free_scenario(2, 10, &[(0, 0)]);
        s.occupancy.set(0, 3, true);
        s.occupancy.set(0, 4, true);
        let prop = PropagationParams::default();
        let gen = GeneratorParams {
            wall_loss_db_per_m: 2.0,
            shadow_sigma_db: 0.0,
            ..Default::default()
        };
        let walled = generate_ground_truth(&s, &prop, &gen).unwrap();
        let open = generate_ground_truth(&s, &prop, &quiet()).unwrap();
        let lin = s.linear(GridIndex::new(0, 8));
        assert!((open.get(lin, 0) - walled.get(lin, 0) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shadow_field_statistics() {
        let f = shadow_field(200, 200, 5.0, 40.0, 3);
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n;
        let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.35, "var {var}");
        // Lag-1 correlation along rows should be near exp(-5/40).
        let mut acc = 0.0;
        let mut cnt = 0.0;
        for r in 0..200 {
            for c in 0..199 {
                acc += (f[r * 200 + c] - mean) * (f[r * 200 + c + 1] - mean);
                cnt += 1.0;
            }
        }
        let rho = acc / cnt / var;
        assert!((rho - (-0.125f64).exp()).abs() < 0.05, "rho {rho}");
    }
}
