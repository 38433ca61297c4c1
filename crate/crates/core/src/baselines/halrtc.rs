//! Low-rank tensor completion by ADMM over the three mode unfoldings.
//!
//! Minimizes `Σ_i α_i ||M_i||_*` subject to `M_i = X` for every mode and
//! `X = T` on the observed entries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `values[(i * n2 + j) * n3 + k]` with a matching observed mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTensor {
    dims: [usize; 3],
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl MaskedTensor {
    pub fn new(dims: [usize; 3], values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        if values.len() != n || observed.len() != n {
            return Err(Error::Shape(format!(
                "tensor {dims:?} needs {n} entries, got {} values and {} mask entries",
                values.len(),
                observed.len()
            )));
        }
        if values.iter().zip(&observed).any(|(v, &o)| o && !v.is_finite()) {
            return Err(Error::invalid("tensor", "observed entries must be finite"));
        }
        Ok(Self { dims, values, observed })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HalrtcParams {
    /// Initial penalty.
    pub rho: f64,
    pub iters: usize,
    /// Penalty growth per iteration.
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Mode weights `α_i`, normalized to sum to 1.
    pub alpha: [f64; 3],
    /// Record the objective after every iteration.
    pub track_objective: bool,
}

impl Default for HalrtcParams {
    fn default() -> Self {
        Self {
            rho: 1e-6,
            iters: 1500,
            rho_growth: 1.05,
            rho_max: 1e5,
            alpha: [1.0 / 3.0; 3],
            track_objective: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalrtcResult {
    pub values: Vec<f64>,
    /// `Σ α_i ||X_(i)||_*` after each iteration (empty unless tracked).
    pub objective: Vec<f64>,
}

fn unfold(x: &[f64], dims: [usize; 3], mode: usize) -> DMatrix<f64> {
    let [n1, n2, n3] = dims;
    match mode {
        0 => DMatrix::from_fn(n1, n2 * n3, |i, c| x[(i * n2 + c / n3) * n3 + c % n3]),
        1 => DMatrix::from_fn(n2, n1 * n3, |j, c| x[((c / n3) * n2 + j) * n3 + c % n3]),
        _ => DMatrix::from_fn(n3, n1 * n2, |k, c| x[c * n3 + k]),
    }
}

fn fold(m: &DMatrix<f64>, dims: [usize; 3], mode: usize) -> Vec<f64> {
    let [n1, n2, n3] = dims;
    let mut x = vec![0.0; n1 * n2 * n3];
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                x[(i * n2 + j) * n3 + k] = match mode {
                    0 => m[(i, j * n3 + k)],
                    1 => m[(j, i * n3 + k)],
                    _ => m[(k, i * n2 + j)],
                };
            }
        }
    }
    x
}

/// Singular value thresholding `U max(S - tau, 0) V^T`.
fn shrink(m: DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut out = DMatrix::zeros(r, c);
    for (p, &s) in svd.singular_values.iter().enumerate() {
        if s > tau {
            out += (s - tau) * u.column(p) * vt.row(p);
        }
    }
    out
}

fn nuclear_norm(x: &[f64], dims: [usize; 3], mode: usize) -> f64 {
    unfold(x, dims, mode).singular_values().sum()
}

pub fn objective(x: &[f64], dims: [usize; 3], alpha: [f64; 3]) -> f64 {
    (0..3).map(|m| alpha[m] * nuclear_norm(x, dims, m)).sum()
}

pub fn halrtc(t: &MaskedTensor, rho: f64, iters: usize) -> Result<HalrtcResult> {
    halrtc_with(
        t,
        &HalrtcParams {
            rho,
            iters,
            ..Default::default()
        },
    )
}

pub fn halrtc_with(t: &MaskedTensor, p: &HalrtcParams) -> Result<HalrtcResult> {
    if !(p.rho > 0.0 && p.rho.is_finite()) {
        return Err(Error::invalid("rho", "must be positive"));
    }
    if !(p.rho_growth >= 1.0 && p.rho_max >= p.rho) {
        return Err(Error::invalid("rho_growth", "penalty must not shrink"));
    }
    let asum: f64 = p.alpha.iter().sum();
    if p.alpha.iter().any(|a| !(*a >= 0.0)) || !(asum > 0.0) {
        return Err(Error::invalid("alpha", "mode weights must be non-negative and not all zero"));
    }
    let alpha = p.alpha.map(|a| a / asum);
    let obs_count = t.observed.iter().filter(|&&o| o).count();
    if obs_count == 0 {
        return Err(Error::Empty("tensor completion needs at least one observed entry"));
    }
    let dims = t.dims;
    let n = t.values.len();

    let mean = t.values.iter().zip(&t.observed).filter(|(_, &o)| o).map(|(v, _)| v).sum::<f64>()
        / obs_count as f64;
    let reset = |x: &mut [f64]| {
        for ((xv, tv), &o) in x.iter_mut().zip(&t.values).zip(&t.observed) {
            if o {
                *xv = *tv;
            }
        }
    };
    let mut x: Vec<f64> = t.values.iter().zip(&t.observed).map(|(&v, &o)| if o { v } else { mean }).collect();
    let mut y = vec![vec![0.0; n]; 3];
    let mut m = vec![vec![0.0; n]; 3];
    let mut rho = p.rho;
    let mut trace = Vec::new();
    if obs_count == n {
        return Ok(HalrtcResult {
            values: t.values.clone(),
            objective: if p.track_objective { vec![objective(&x, dims, alpha)] } else { vec![] },
        });
    }

    for _ in 0..p.iters {
        for mode in 0..3 {
            let shifted: Vec<f64> = x.iter().zip(&y[mode]).map(|(xv, yv)| xv + yv / rho).collect();
            let s = shrink(unfold(&shifted, dims, mode), alpha[mode] / rho);
            m[mode] = fold(&s, dims, mode);
        }
        for idx in 0..n {
            x[idx] = (0..3).map(|mode| m[mode][idx] - y[mode][idx] / rho).sum::<f64>() / 3.0;
        }
        reset(&mut x);
        for mode in 0..3 {
            for idx in 0..n {
                y[mode][idx] -= rho * (m[mode][idx] - x[idx]);
            }
        }
        rho = (rho * p.rho_growth).min(p.rho_max);
        if p.track_objective {
            trace.push(objective(&x, dims, alpha));
        }
    }
    Ok(HalrtcResult {
        values: x,
        objective: trace,
    })
}
