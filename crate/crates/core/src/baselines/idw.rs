use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::UrbanScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample3D {
    pub x_m: f64,
    pub y_m: f64,
    pub f_mhz: f64,
    pub rss_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdwParams {
    pub power: f64,
    /// Meters per MHz when mixing frequency into the distance.
    pub freq_scale_m_per_mhz: f64,
}

impl Default for IdwParams {
    fn default() -> Self {
        Self {
            power: 2.0,
            freq_scale_m_per_mhz: 5.0 / 1000.0,
        }
    }
}

impl IdwParams {
    /// `lambda = grid_size / smallest frequency step` (0 with one band).
    pub fn for_scenario(scenario: &UrbanScenario) -> Self {
        let step = scenario
            .frequencies_mhz
            .windows(2)
            .map(|w| w[1] - w[0])
            .reduce(f64::min);
        Self {
            power: 2.0,
            freq_scale_m_per_mhz: step.map_or(0.0, |s| scenario.grid_size_m / s),
        }
    }
}

/// Inverse-distance weighted mean with `dist^2 = dx^2 + dy^2 + (lambda df)^2`.
/// A query that coincides with a sample returns that sample's value (the
/// first such sample when several coincide).
pub fn idw3d(samples: &[Sample3D], query: (f64, f64, f64), power: f64, freq_scale: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("inverse-distance weighting needs at least one sample"));
    }
    if !(power > 0.0) {
        return Err(Error::invalid("power", "must be positive"));
    }
    let (qx, qy, qf) = query;
    let half = power / 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        let df = freq_scale * (s.f_mhz - qf);
        let d2 = (s.x_m - qx).powi(2) + (s.y_m - qy).powi(2) + df * df;
        if d2 == 0.0 {
            return Ok(s.rss_dbm);
        }
        let w = d2.powf(-half);
        num += w * s.rss_dbm;
        den += w;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(x: f64, y: f64, f: f64, v: f64) -> Sample3D {
        Sample3D {
            x_m: x,
            y_m: y,
            f_mhz: f,
            rss_dbm: v,
        }
    }

    #[test]
    fn examples() {
        let samples = [s(0.0, 0.0, 1750.0, -60.0), s(10.0, 0.0, 1750.0, -80.0)];
        assert_eq!(idw3d(&samples, (0.0, 0.0, 1750.0), 2.0, 0.005).unwrap(), -60.0);
        assert_eq!(idw3d(&samples, (5.0, 0.0, 1750.0), 2.0, 0.005).unwrap(), -70.0);
        assert_eq!(idw3d(&samples[..1], (40.0, 3.0, 5750.0), 2.0, 0.005).unwrap(), -60.0);
        assert!(idw3d(&[], (0.0, 0.0, 0.0), 2.0, 1.0).is_err());
        assert!(idw3d(&samples, (0.0, 0.0, 0.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn frequency_counts_as_distance() {
        // 1000 MHz at 5 m per 1000 MHz equals 5 m in space.
        let samples = [s(0.0, 0.0, 1750.0, -60.0), s(0.0, 10.0, 2750.0, -80.0)];
        let v = idw3d(&samples, (0.0, 5.0, 1750.0), 2.0, 0.005).unwrap();
        // d1 = 5, d2 = sqrt(25 + 25): weights 1/25 and 1/50.
        assert!((v - (-60.0 * 2.0 - 80.0) / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_by_sample_range(
            pts in prop::collection::vec((0.0f64..200.0, 0.0f64..200.0, 1750.0f64..5750.0, -120.0f64..-20.0), 1..30),
            q in (0.0f64..200.0, 0.0f64..200.0, 1750.0f64..5750.0),
        ) {
            let samples: Vec<Sample3D> = pts.iter().map(|p| s(p.0, p.1, p.2, p.3)).collect();
            let v = idw3d(&samples, q, 2.0, 0.005).unwrap();
            let lo = samples.iter().map(|s| s.rss_dbm).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s.rss_dbm).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }
}
