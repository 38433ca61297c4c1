//! Path-loss model, synthetic ground truth and radio depth maps.

mod depth;
mod generator;
mod tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use depth::{radio_depth_exact, radio_depth_map, radio_depth_map_with, DepthMap, DepthParams};
pub use generator::{generate_ground_truth, generate_ground_truth_with, shadow_field, GeneratorParams};
pub use tensor::RadiomapTensor;

/// Log-distance / log-frequency path-loss coefficients.
///
/// The defaults reproduce free-space loss with distance in meters and
/// frequency in MHz: `20 log10 d + 20 log10 f - 27.55`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub const_loss_db: f64,
    pub freq_fading: f64,
    pub dist_fading: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            const_loss_db: -27.55,
            freq_fading: 20.0,
            dist_fading: 2.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.freq_fading >= 0.0) {
            return Err(Error::invalid("freq_fading", "must be non-negative"));
        }
        if !(self.dist_fading >= 0.0) {
            return Err(Error::invalid("dist_fading", "must be non-negative"));
        }
        if !self.const_loss_db.is_finite() {
            return Err(Error::invalid("const_loss_db", "must be finite"));
        }
        Ok(())
    }
}

/// Average received power from one transmitter:
/// `P - L_c - eta_f log10 f - 10 eta_d log10 d`.
pub fn path_rss(tx_power_dbm: f64, params: &PropagationParams, f_mhz: f64, d_m: f64) -> Result<f64> {
    if !(f_mhz > 0.0) {
        return Err(Error::invalid("f_mhz", "frequency must be positive"));
    }
    if !(d_m > 0.0) {
        return Err(Error::invalid("d_m", "distance must be positive"));
    }
    Ok(path_rss_unchecked(tx_power_dbm, params, f_mhz, d_m))
}

#[inline]
pub(crate) fn path_rss_unchecked(tx_power_dbm: f64, params: &PropagationParams, f_mhz: f64, d_m: f64) -> f64 {
    tx_power_dbm
        - params.const_loss_db
        - params.freq_fading * f_mhz.log10()
        - 10.0 * params.dist_fading * d_m.log10()
}

/// Combined grid RSS over transmitters.
///
/// This is the plain arithmetic sum of the per-transmitter dB values, not a
/// sum of linear powers.
pub fn total_rss(per_transmitter: &[f64]) -> Result<f64> {
    if per_transmitter.is_empty() {
        return Err(Error::Empty("total_rss needs at least one transmitter term"));
    }
    Ok(per_transmitter.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lc: f64, ef: f64, ed: f64) -> PropagationParams {
        PropagationParams {
            const_loss_db: lc,
            freq_fading: ef,
            dist_fading: ed,
        }
    }

    #[test]
    fn path_rss_examples() {
        assert_eq!(path_rss(30.0, &p(0.0, 20.0, 2.0), 1.0, 1.0).unwrap(), 30.0);
        let v = path_rss(30.0, &p(10.0, 20.0, 0.0), 100.0, 37.0).unwrap();
        assert!((v - -20.0).abs() < 1e-12);
        let params = p(3.0, 7.0, 2.0);
        let near = path_rss(30.0, &params, 900.0, 12.0).unwrap();
        let far = path_rss(30.0, &params, 900.0, 120.0).unwrap();
        assert!((near - far - 20.0).abs() < 1e-12);
    }

    #[test]
    fn path_rss_rejects_nonpositive_inputs() {
        let params = PropagationParams::default();
        assert!(path_rss(30.0, &params, 0.0, 1.0).is_err());
        assert!(path_rss(30.0, &params, 100.0, -1.0).is_err());
    }

    #[test]
    fn total_rss_is_literal_sum() {
        assert_eq!(total_rss(&[-50.0]).unwrap(), -50.0);
        assert_eq!(total_rss(&[-50.0, -50.0]).unwrap(), -100.0);
        assert_eq!(total_rss(&[-40.0, -50.0, -60.0]).unwrap(), -150.0);
        assert!(total_rss(&[]).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(p(0.0, -1.0, 2.0).validate().is_err());
        assert!(p(0.0, 1.0, -2.0).validate().is_err());
        assert!(PropagationParams::default().validate().is_ok());
    }

    proptest::proptest! {
        #[test]
        fn path_rss_strictly_decreasing(d in 1.0f64..1e4, f in 1.0f64..1e4, scale in 1.001f64..10.0) {
            let params = p(0.0, 20.0, 2.0);
            let base = path_rss(30.0, &params, f, d).unwrap();
            proptest::prop_assert!(path_rss(30.0, &params, f, d * scale).unwrap() < base);
            proptest::prop_assert!(path_rss(30.0, &params, f * scale, d).unwrap() < base);
        }
    }
}
