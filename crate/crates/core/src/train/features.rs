use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor};
use crate::scenario::{GridIndex, UrbanScenario};

/// Feature width: observed RSS, x, y, observed band, target band.
pub const FEATURE_DIM: usize = 5;

/// Closed interval used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate("bounds")?;
        Ok(b)
    }

    pub fn validate(&self, channel: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::invalid(
                channel,
                format!("degenerate bounds [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    /// Min/max of `values`, widened by `pad` times the range on each side.
    pub fn from_values(values: impl IntoIterator<Item = f64>, pad: f64, channel: &str) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Err(Error::invalid(channel, "no values to derive bounds from"));
        }
        let mut span = hi - lo;
        if span == 0.0 {
            // A single distinct value still needs a positive range.
            span = 1.0;
        }
        let b = Self {
            lo: lo - pad * span,
            hi: hi + pad * span,
        };
        b.validate(channel)?;
        Ok(b)
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        self.lo + v * (self.hi - self.lo)
    }
}

/// Scaling bounds for every feature channel and for the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    /// Observed RSS feature, from B1 observations.
    pub rss: Bounds,
    pub x: Bounds,
    pub y: Bounds,
    /// Frequency range shared by the observed and target band channels.
    pub freq: Bounds,
    /// Target-band RSS labels, from B1 ground truth.
    pub target: Bounds,
}

impl NormBounds {
    pub fn validate(&self) -> Result<()> {
        self.rss.validate("rss bounds")?;
        self.x.validate("x bounds")?;
        self.y.validate("y bounds")?;
        self.freq.validate("frequency bounds")?;
        self.target.validate("target bounds")
    }

    /// Position bounds spanning the grid centers of the whole area and
    /// frequency bounds spanning the scenario band set.
    pub fn geometry(scenario: &UrbanScenario) -> Result<(Bounds, Bounds, Bounds)> {
        let (x0, y0) = scenario.position_m(GridIndex::new(0, 0));
        let (x1, y1) = scenario.position_m(GridIndex::new(scenario.rows() - 1, scenario.cols() - 1));
        let f = &scenario.frequencies_mhz;
        let span = |lo: f64, hi: f64, name: &str| {
            // A one-grid-wide area has no extent; give it a unit range.
            if hi > lo {
                Bounds::new(lo, hi)
            } else {
                Bounds::new(lo, lo + 1.0).map_err(|_| Error::invalid(name, "degenerate"))
            }
        };
        Ok((span(x0, x1, "x")?, span(y0, y1, "y")?, span(f[0], f[f.len() - 1], "frequency")?))
    }
}

/// Per-node input of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureInput<'a> {
    pub position_m: &'a [(f64, f64)],
    /// Observed RSS in dBm at the observed band; `None` where unobserved.
    pub observed_dbm: &'a [Option<f64>],
    pub f_obv_mhz: f64,
    pub f_target_mhz: f64,
}

/// `[n x 5]` feature matrix. Every entry is clamped to `[0, 1]`; unobserved
/// nodes carry exactly 0 in the RSS channel.
pub fn assemble_features(input: &FeatureInput<'_>, bounds: &NormBounds) -> Result<Tensor> {
    bounds.validate()?;
    let n = input.position_m.len();
    if input.observed_dbm.len() != n {
        return Err(Error::Shape(format!(
            "{n} positions but {} observation slots",
            input.observed_dbm.len()
        )));
    }
    let unit = |v: f64| v.clamp(0.0, 1.0);
    let fo = unit(bounds.freq.normalize(input.f_obv_mhz));
    let ft = unit(bounds.freq.normalize(input.f_target_mhz));
    let mut data = Vec::with_capacity(n * FEATURE_DIM);
    for (&(x, y), obs) in input.position_m.iter().zip(input.observed_dbm) {
        let rss = match obs {
            Some(v) => unit(bounds.rss.normalize(*v)),
            None => 0.0,
        };
        data.extend_from_slice(&[rss, unit(bounds.x.normalize(x)), unit(bounds.y.normalize(y)), fo, ft]);
    }
    Tensor::matrix(n, FEATURE_DIM, data)
}

/// `(1/N) Σ z_n (y_n - ŷ_n)^2` over all `N` nodes.
pub fn masked_loss(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<f64> {
    let (loss, _) = masked_loss_with_grad(pred, truth, mask)?;
    Ok(loss)
}

/// Loss and its gradient with respect to `pred`.
pub fn masked_loss_with_grad(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::vector(pred.to_vec()));
    let l = tape.masked_mse(p, truth, mask)?;
    let g = tape.backward(l)?;
    let grad = g.get(p).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; pred.len()]);
    Ok((tape.value(l).data()[0], grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::free_scenario;
    use proptest::prelude::*;

    fn bounds() -> NormBounds {
        let mut s = free_scenario(40, 40, &[]);
        s.frequencies_mhz = vec![1750.0, 2750.0, 3750.0, 4750.0, 5750.0];
        let (x, y, freq) = NormBounds::geometry(&s).unwrap();
        NormBounds {
            rss: Bounds::new(-110.0, -30.0).unwrap(),
            x,
            y,
            freq,
            target: Bounds::new(-120.0, -40.0).unwrap(),
        }
    }

    #[test]
    fn channel_examples() {
        let b = bounds();
        let pos = [(2.5, 2.5), (197.5, 197.5)];
        let obs = [None, Some(-70.0)];
        let x = assemble_features(
            &FeatureInput {
                position_m: &pos,
                observed_dbm: &obs,
                f_obv_mhz: 1750.0,
                f_target_mhz: 5750.0,
            },
            &b,
        )
        .unwrap();
        assert_eq!(x.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(x.row(1), &[0.5, 1.0, 1.0, 0.0, 1.0]);
        assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn all_unobserved_block_has_zero_rss_channel() {
        let b = bounds();
        let pos = vec![(50.0, 50.0); 6];
        let obs = vec![None; 6];
        let x = assemble_features(
            &FeatureInput {
                position_m: &pos,
                observed_dbm: &obs,
                f_obv_mhz: 1750.0,
                f_target_mhz: 2750.0,
            },
            &b,
        )
        .unwrap();
        assert!((0..6).all(|i| x.at(i, 0) == 0.0));
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(Bounds::new(1.0, 1.0).is_err());
        let mut b = bounds();
        b.rss.hi = b.rss.lo;
        let x = assemble_features(
            &FeatureInput {
                position_m: &[],
                observed_dbm: &[],
                f_obv_mhz: 1750.0,
                f_target_mhz: 2750.0,
            },
            &b,
        );
        assert!(x.is_err());
    }

    #[test]
    fn padded_bounds_keep_observations_positive() {
        let b = Bounds::from_values([-90.0, -50.0, -70.0], 0.1, "rss").unwrap();
        assert_eq!((b.lo, b.hi), (-94.0, -46.0));
        assert!(b.normalize(-90.0) > 0.0);
    }

    #[test]
    fn masked_loss_examples() {
        let truth = [1.0, 2.0, 3.0];
        assert_eq!(masked_loss(&[0.0; 3], &truth, &[false; 3]).unwrap(), 0.0);
        assert_eq!(masked_loss(&truth, &truth, &[true; 3]).unwrap(), 0.0);
        let l = masked_loss(&[1.0, 2.0, 5.0], &truth, &[false, false, true]).unwrap();
        assert!((l - 4.0 / 3.0).abs() < 1e-15);
        assert!(masked_loss(&[0.0; 2], &truth, &[true; 3]).is_err());
    }

    proptest! {
        #[test]
        fn unmasked_gradients_are_exactly_zero(
            data in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, any::<bool>()), 1..40)
        ) {
            let pred: Vec<f64> = data.iter().map(|d| d.0).collect();
            let truth: Vec<f64> = data.iter().map(|d| d.1).collect();
            let mask: Vec<bool> = data.iter().map(|d| d.2).collect();
            let (_, g) = masked_loss_with_grad(&pred, &truth, &mask).unwrap();
            for (gi, m) in g.iter().zip(&mask) {
                if !m {
                    prop_assert_eq!(gi.to_bits(), 0.0f64.to_bits());
                }
            }
        }

        #[test]
        fn normalization_round_trips(lo in -200.0f64..0.0, span in 1e-3f64..200.0, t in 0.0f64..=1.0) {
            let b = Bounds::new(lo, lo + span).unwrap();
            let y = lo + t * span;
            prop_assert!((b.denormalize(b.normalize(y)) - y).abs() < 1e-9);
        }
    }
}
