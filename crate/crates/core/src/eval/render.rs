use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::RadiomapTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub lo_dbm: f64,
    pub hi_dbm: f64,
    pub building_rgb: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            lo_dbm: -140.0,
            hi_dbm: -40.0,
            building_rgb: [255, 255, 255],
        }
    }
}

impl Palette {
    /// Bounds from the finite values of one band.
    pub fn fit(tensor: &RadiomapTensor, k: usize) -> Self {
        let vals = (0..tensor.grid_count()).filter(|&i| tensor.is_valid(i)).map(|i| tensor.get(i, k));
        let (lo, hi) = vals
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo.is_finite() && hi > lo {
            Self {
                lo_dbm: lo,
                hi_dbm: hi,
                ..Self::default()
            }
        } else {
            Self::default()
        }
    }

    /// Dark blue through teal and green to yellow, clamped at the bounds.
    pub fn color(&self, dbm: f64) -> [u8; 3] {
        const STOPS: [[f64; 3]; 5] = [
            [68.0, 1.0, 84.0],
            [59.0, 82.0, 139.0],
            [33.0, 145.0, 140.0],
            [94.0, 201.0, 98.0],
            [253.0, 231.0, 37.0],
        ];
        let t = if dbm.is_finite() {
            ((dbm - self.lo_dbm) / (self.hi_dbm - self.lo_dbm)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let pos = t * (STOPS.len() - 1) as f64;
        let i = (pos.floor() as usize).min(STOPS.len() - 2);
        let u = pos - i as f64;
        std::array::from_fn(|c| (STOPS[i][c] + u * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8)
    }
}

/// Binary PPM (P6) of one band: one pixel per grid, row 0 at the top.
pub fn radiomap_ppm(tensor: &RadiomapTensor, f_mhz: f64, palette: &Palette) -> Result<Vec<u8>> {
    let k = tensor.frequency_index(f_mhz)?;
    if !(palette.hi_dbm > palette.lo_dbm) {
        return Err(Error::invalid("palette", "hi_dbm must exceed lo_dbm"));
    }
    let mut out = format!("P6\n{} {}\n255\n", tensor.cols(), tensor.rows()).into_bytes();
    out.reserve(tensor.grid_count() * 3);
    for i in 0..tensor.grid_count() {
        let rgb = if tensor.is_valid(i) {
            palette.color(tensor.get(i, k))
        } else {
            palette.building_rgb
        };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

pub fn render_radiomap(tensor: &RadiomapTensor, f_mhz: f64, palette: &Palette, path: impl AsRef<Path>) -> Result<()> {
    let bytes = radiomap_ppm(tensor, f_mhz, palette)?;
    std::fs::write(path, bytes)?;
    Ok(())
}
