//! Spatial-frequency kriging: a least-squares large-scale trend in
//! `log10 d` and `log10 f`, plus ordinary kriging of the shadow-fading
//! residuals with an exponential variogram.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::RadiomapTensor;
use crate::scenario::{BlockIndex, GridIndex, UrbanScenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingModel {
    pub c0: f64,
    pub c_d: f64,
    pub c_f: f64,
    pub nugget: f64,
    /// Total sill, nugget included.
    pub sill: f64,
    pub range_m: f64,
}

impl KrigingModel {
    /// `c0 - c_d 10 log10 d - c_f log10 f`
    pub fn trend(&self, d_m: f64, f_mhz: f64) -> f64 {
        self.c0 - self.c_d * 10.0 * d_m.log10() - self.c_f * f_mhz.log10()
    }

    /// Exponential semivariogram, 0 at lag 0.
    pub fn variogram(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + (self.sill - self.nugget) * (1.0 - (-h / self.range_m).exp())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.c0, self.c_d, self.c_f].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("kriging", "trend coefficients must be finite"));
        }
        if !(self.nugget >= 0.0 && self.sill >= self.nugget && self.sill.is_finite()) {
            return Err(Error::invalid("kriging", "need sill >= nugget >= 0"));
        }
        if !(self.range_m > 0.0 && self.range_m.is_finite()) {
            return Err(Error::invalid("kriging", "range must be positive"));
        }
        Ok(())
    }
}

/// One labelled grid for the trend fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendPoint {
    pub d_m: f64,
    pub f_mhz: f64,
    pub rss_dbm: f64,
}

/// A residual (or value) at a planar position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialSample {
    pub x_m: f64,
    pub y_m: f64,
    pub value: f64,
}

/// Distance to the nearest transmitter, floored at half a grid.
pub fn nearest_tx_distance_m(scenario: &UrbanScenario, g: GridIndex) -> f64 {
    scenario
        .transmitters
        .iter()
        .map(|tx| scenario.distance_m(g, tx.grid()))
        .fold(f64::INFINITY, f64::min)
        .max(scenario.grid_size_m / 2.0)
}

/// Least-squares `[c0, c_d, c_f]`.
pub fn fit_trend(points: &[TrendPoint]) -> Result<[f64; 3]> {
    if points.len() < 3 {
        return Err(Error::invalid("kriging", "trend fit needs at least 3 points"));
    }
    // Centered normal equations keep the intercept column from swamping
    // the conditioning check.
    let row = |p: &TrendPoint| [-10.0 * p.d_m.log10(), -p.f_mhz.log10()];
    let n = points.len() as f64;
    let mut mean = [0.0; 2];
    let mut ymean = 0.0;
    for p in points {
        let r = row(p);
        mean[0] += r[0] / n;
        mean[1] += r[1] / n;
        ymean += p.rss_dbm / n;
    }
    let mut ata = Matrix2::<f64>::zeros();
    let mut aty = Vector2::<f64>::zeros();
    for p in points {
        let r = row(p);
        let v = Vector2::new(r[0] - mean[0], r[1] - mean[1]);
        ata += v * v.transpose();
        aty += v * (p.rss_dbm - ymean);
    }
    let svd = ata.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smax > 0.0) || smin <= smax * 1e-12 {
        return Err(Error::RankDeficient(format!(
            "trend design singular values {smax:.3e} / {smin:.3e}; needs distinct distances and two bands"
        )));
    }
    let c = svd.solve(&aty, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let c0 = ymean - c[0] * mean[0] - c[1] * mean[1];
    Ok([c0, c[0], c[1]])
}

/// Most points per group used for the empirical variogram.
const VARIOGRAM_MAX_POINTS: usize = 400;
const VARIOGRAM_BINS: usize = 20;

/// Empirical semivariogram `(lag, gamma, pairs)` over pairs inside each
/// group, with lags binned up to `max_lag_m`.
pub fn empirical_variogram(groups: &[Vec<SpatialSample>], max_lag_m: f64) -> Vec<(f64, f64, usize)> {
    let width = max_lag_m / VARIOGRAM_BINS as f64;
    let mut sum_h = [0.0; VARIOGRAM_BINS];
    let mut sum_g = [0.0; VARIOGRAM_BINS];
    let mut count = [0usize; VARIOGRAM_BINS];
    for group in groups {
        let stride = group.len().div_ceil(VARIOGRAM_MAX_POINTS).max(1);
        let pts: Vec<&SpatialSample> = group.iter().step_by(stride).collect();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let h = (a.x_m - b.x_m).hypot(a.y_m - b.y_m);
                if h <= 0.0 || h >= max_lag_m {
                    continue;
                }
                let bin = ((h / width) as usize).min(VARIOGRAM_BINS - 1);
                sum_h[bin] += h;
                sum_g[bin] += 0.5 * (a.value - b.value).powi(2);
                count[bin] += 1;
            }
        }
    }
    (0..VARIOGRAM_BINS)
        .filter(|&b| count[b] > 0)
        .map(|b| (sum_h[b] / count[b] as f64, sum_g[b] / count[b] as f64, count[b]))
        .collect()
}

/// Pair-weighted least squares of `nugget + psill (1 - exp(-h / range))`
/// with both coefficients non-negative, over a log grid of ranges.
/// Returns `(nugget, sill, range_m)`.
pub fn fit_variogram(bins: &[(f64, f64, usize)], min_range_m: f64, max_range_m: f64) -> (f64, f64, f64) {
    if bins.is_empty() || bins.iter().all(|b| b.1 == 0.0) {
        return (0.0, 0.0, max_range_m.max(min_range_m));
    }
    let sse = |n: f64, p: f64, basis: &[f64]| -> f64 {
        bins.iter()
            .zip(basis)
            .map(|(&(_, g, c), &e)| c as f64 * (g - n - p * e).powi(2))
            .sum()
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, min_range_m);
    let steps = 60;
    for s in 0..=steps {
        let range = min_range_m * (max_range_m / min_range_m).powf(s as f64 / steps as f64);
        let basis: Vec<f64> = bins.iter().map(|b| 1.0 - (-b.0 / range).exp()).collect();
        // Weighted 2x2 normal equations, then the two boundary faces.
        let (mut sw, mut se, mut see, mut sg, mut seg) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&(_, g, c), &e) in bins.iter().zip(&basis) {
            let w = c as f64;
            sw += w;
            se += w * e;
            see += w * e * e;
            sg += w * g;
            seg += w * e * g;
        }
        let mut candidates = vec![(sg / sw, 0.0), (0.0, if see > 0.0 { seg / see } else { 0.0 })];
        let det = sw * see - se * se;
        if det.abs() > 1e-12 * sw * see {
            candidates.push(((sg * see - se * seg) / det, (sw * seg - se * sg) / det));
        }
        for (n, p) in candidates {
            if n < 0.0 || p < 0.0 {
                continue;
            }
            let e = sse(n, p, &basis);
            if e < best.0 {
                best = (e, n, p, range);
            }
        }
    }
    (best.1, best.1 + best.2, best.3)
}

/// Fits the trend on every free grid of `b1` at both bands, then the
/// variogram of the residuals (pairs within one block and band).
pub fn kriging_fit(
    scenario: &UrbanScenario,
    truth: &RadiomapTensor,
    b1: &[BlockIndex],
    f_obv_mhz: f64,
    f_target_mhz: f64,
) -> Result<KrigingModel> {
    let bands = [truth.frequency_index(f_obv_mhz)?, truth.frequency_index(f_target_mhz)?];
    if scenario.transmitters.is_empty() {
        return Err(Error::Empty("kriging needs at least one transmitter"));
    }
    let mut points = Vec::new();
    let mut groups_pos = Vec::new();
    for &b in b1 {
        let grids = scenario.block_free_grids(b)?;
        for (&k, &f) in bands.iter().zip(&[f_obv_mhz, f_target_mhz]) {
            let mut grp = Vec::with_capacity(grids.len());
            for &g in &grids {
                let d = nearest_tx_distance_m(scenario, g);
                points.push(TrendPoint {
                    d_m: d,
                    f_mhz: f,
                    rss_dbm: truth.at(g, k),
                });
                grp.push(g);
            }
            groups_pos.push((grp, f, k));
        }
    }
    let [c0, c_d, c_f] = fit_trend(&points)?;
    let mut model = KrigingModel {
        c0,
        c_d,
        c_f,
        nugget: 0.0,
        sill: 0.0,
        range_m: scenario.block_size_m,
    };
    let groups: Vec<Vec<SpatialSample>> = groups_pos
        .iter()
        .map(|(grids, f, k)| {
            grids
                .iter()
                .map(|&g| {
                    let (x, y) = scenario.position_m(g);
                    SpatialSample {
                        x_m: x,
                        y_m: y,
                        value: truth.at(g, *k) - model.trend(nearest_tx_distance_m(scenario, g), *f),
                    }
                })
                .collect()
        })
        .collect();
    let bins = empirical_variogram(&groups, scenario.block_size_m);
    let (nugget, sill, range) = fit_variogram(&bins, scenario.grid_size_m, 5.0 * scenario.block_size_m);
    // Residuals at round-off level are treated as exactly zero.
    let (nugget, sill) = if sill <= 1e-18 { (0.0, 0.0) } else { (nugget, sill) };
    model.nugget = nugget;
    model.sill = sill;
    model.range_m = range;
    model.validate()?;
    Ok(model)
}

/// Ordinary-kriging system over a fixed sample set, factorized once.
#[derive(Debug, Clone)]
pub struct KrigingSystem {
    model: KrigingModel,
    samples: Vec<SpatialSample>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl KrigingSystem {
    pub fn new(model: &KrigingModel, samples: &[SpatialSample]) -> Result<Self> {
        model.validate()?;
        let n = samples.len();
        let lu = if n == 0 || model.sill <= 0.0 {
            None
        } else {
            let mut a = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                for j in 0..n {
                    let h = (samples[i].x_m - samples[j].x_m).hypot(samples[i].y_m - samples[j].y_m);
                    a[(i, j)] = model.variogram(h);
                }
                a[(i, n)] = 1.0;
                a[(n, i)] = 1.0;
            }
            let lu = a.lu();
            let u = lu.u();
            let diag = u.diagonal();
            let scale = diag.amax();
            if diag.iter().any(|d| d.abs() <= scale * 1e-13) {
                log::warn!("kriging system over {n} samples is singular; using the trend alone");
                None
            } else {
                Some(lu)
            }
        };
        Ok(Self {
            model: *model,
            samples: samples.to_vec(),
            lu,
        })
    }

    /// False when predictions fall back to the trend alone.
    pub fn is_solvable(&self) -> bool {
        self.lu.is_some()
    }

    /// Weights over the samples; `None` on the trend-only fallback.
    pub fn weights(&self, x_m: f64, y_m: f64) -> Option<Vec<f64>> {
        let lu = self.lu.as_ref()?;
        let n = self.samples.len();
        let mut rhs = DVector::zeros(n + 1);
        for (i, s) in self.samples.iter().enumerate() {
            rhs[i] = self.model.variogram((s.x_m - x_m).hypot(s.y_m - y_m));
        }
        rhs[n] = 1.0;
        let w = lu.solve(&rhs)?;
        Some(w.as_slice()[..n].to_vec())
    }

    /// Interpolated residual; exact at a sample position.
    pub fn residual(&self, x_m: f64, y_m: f64) -> f64 {
        if let Some(s) = self.samples.iter().find(|s| s.x_m == x_m && s.y_m == y_m) {
            return s.value;
        }
        match self.weights(x_m, y_m) {
            Some(w) => w.iter().zip(&self.samples).map(|(w, s)| w * s.value).sum(),
            None => 0.0,
        }
    }
}

/// Kriging weights of one query over `samples`.
pub fn kriging_weights(model: &KrigingModel, samples: &[SpatialSample], query: (f64, f64)) -> Result<Vec<f64>> {
    KrigingSystem::new(model, samples)?
        .weights(query.0, query.1)
        .ok_or(Error::RankDeficient("singular kriging system".into()))
}

/// Trend at `f_target` plus kriged residuals of the `f_obv` observations.
/// `observed` pairs a grid with its measured RSS at `f_obv`.
pub fn kriging_predict(
    model: &KrigingModel,
    scenario: &UrbanScenario,
    observed: &[(GridIndex, f64)],
    f_obv_mhz: f64,
    queries: &[GridIndex],
    f_target_mhz: f64,
) -> Result<Vec<f64>> {
    if !(f_obv_mhz > 0.0 && f_target_mhz > 0.0) {
        return Err(Error::invalid("f_mhz", "frequency must be positive"));
    }
    let samples: Vec<SpatialSample> = observed
        .iter()
        .map(|&(g, v)| {
            let (x, y) = scenario.position_m(g);
            SpatialSample {
                x_m: x,
                y_m: y,
                value: v - model.trend(nearest_tx_distance_m(scenario, g), f_obv_mhz),
            }
        })
        .collect();
    let sys = KrigingSystem::new(model, &samples)?;
    Ok(queries
        .iter()
        .map(|&g| {
            let (x, y) = scenario.position_m(g);
            model.trend(nearest_tx_distance_m(scenario, g), f_target_mhz) + sys.residual(x, y)
        })
        .collect())
}
