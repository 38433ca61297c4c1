use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::{GridIndex, UrbanScenario};

const MAGIC: &[u8; 8] = b"RMAPF64\x01";

/// RSS per grid per frequency, in dBm. Building cells are invalid and hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiomapTensor {
    rows: usize,
    cols: usize,
    frequencies_mhz: Vec<f64>,
    /// `[grid * K + k]`
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl RadiomapTensor {
    /// All-invalid tensor shaped for `scenario`; non-building cells start at 0.
    pub fn for_scenario(scenario: &UrbanScenario) -> Self {
        Self::for_scenario_with(scenario, scenario.frequencies_mhz.clone())
    }

    pub fn for_scenario_with(scenario: &UrbanScenario, frequencies_mhz: Vec<f64>) -> Self {
        let k = frequencies_mhz.len();
        let valid: Vec<bool> = scenario.occupancy.cells().iter().map(|b| !b).collect();
        let values = valid
            .iter()
            .flat_map(|&v| std::iter::repeat_n(if v { 0.0 } else { f64::NAN }, k))
            .collect();
        Self {
            rows: scenario.rows(),
            cols: scenario.cols(),
            frequencies_mhz,
            values,
            valid,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn grid_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn frequencies_mhz(&self) -> &[f64] {
        &self.frequencies_mhz
    }

    pub fn k(&self) -> usize {
        self.frequencies_mhz.len()
    }

    pub fn frequency_index(&self, f_mhz: f64) -> Result<usize> {
        self.frequencies_mhz
            .iter()
            .position(|&f| (f - f_mhz).abs() <= 1e-9 * f.abs().max(1.0))
            .ok_or(Error::UnknownFrequency(f_mhz))
    }

    #[inline]
    pub fn is_valid(&self, linear: usize) -> bool {
        self.valid[linear]
    }

    #[inline]
    pub fn get(&self, linear: usize, k: usize) -> f64 {
        self.values[linear * self.frequencies_mhz.len() + k]
    }

    pub fn at(&self, g: GridIndex, k: usize) -> f64 {
        self.get(g.row * self.cols + g.col, k)
    }

    /// Sets a value at a valid cell. Writes to invalid cells are ignored.
    #[inline]
    pub fn set(&mut self, linear: usize, k: usize, v: f64) {
        if self.valid[linear] {
            let kk = self.frequencies_mhz.len();
            self.values[linear * kk + k] = v;
        }
    }

    /// One frequency column over the whole grid (NaN at buildings).
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.grid_count()).map(|i| self.get(i, k)).collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.grid_count() {
            for k in 0..self.k() {
                let v = self.get(i, k);
                if self.valid[i] != v.is_finite() {
                    return Err(Error::invalid(
                        "radiomap",
                        format!("grid {i} frequency {k}: validity does not match value {v}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// CSV with header `row,col,f_mhz,rss_dbm`; building cells omitted.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "row,col,f_mhz,rss_dbm")?;
        for i in 0..self.grid_count() {
            if !self.valid[i] {
                continue;
            }
            let (r, c) = (i / self.cols, i % self.cols);
            for (k, f) in self.frequencies_mhz.iter().enumerate() {
                writeln!(w, "{r},{c},{f},{}", self.get(i, k))?;
            }
        }
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). Cells absent
    /// from the file are invalid; frequencies are taken from the file.
    pub fn read_csv(path: impl AsRef<Path>, rows: usize, cols: usize) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        let mut freqs: Vec<f64> = Vec::new();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "row,col,f_mhz,rss_dbm" {
                    return Err(parse_err(1, format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(i + 1, format!("expected 4 fields, got {}", fields.len())));
            }
            let r: usize = fields[0].parse().map_err(|e| parse_err(i + 1, format!("row: {e}")))?;
            let c: usize = fields[1].parse().map_err(|e| parse_err(i + 1, format!("col: {e}")))?;
            let f: f64 = fields[2].parse().map_err(|e| parse_err(i + 1, format!("f_mhz: {e}")))?;
            let v: f64 = fields[3].parse().map_err(|e| parse_err(i + 1, format!("rss_dbm: {e}")))?;
            if r >= rows || c >= cols {
                return Err(parse_err(i + 1, format!("cell ({r}, {c}) outside {rows}x{cols}")));
            }
            if !freqs.contains(&f) {
                freqs.push(f);
            }
            entries.push((r * cols + c, f, v));
        }
        freqs.sort_by(f64::total_cmp);
        let k = freqs.len();
        let mut t = Self {
            rows,
            cols,
            frequencies_mhz: freqs,
            values: vec![f64::NAN; rows * cols * k],
            valid: vec![false; rows * cols],
        };
        for (lin, f, v) in entries {
            let kk = t.frequency_index(f)?;
            t.valid[lin] = true;
            t.values[lin * k + kk] = v;
        }
        Ok(t)
    }

    /// Little-endian binary: magic, `rows`, `cols`, `K` as u64, the K
    /// frequencies, then `rows * cols * K` values grid-major (NaN = building).
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        for d in [self.rows, self.cols, self.k()] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for f in &self.frequencies_mhz {
            w.write_all(&f.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: "not a binary radiomap file".into(),
            });
        }
        let mut u = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut u)?;
            *d = u64::from_le_bytes(u) as usize;
        }
        let [rows, cols, k] = dims;
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut u)?;
                out.push(f64::from_le_bytes(u));
            }
            Ok(out)
        };
        let frequencies_mhz = read_f64s(k)?;
        let values = read_f64s(rows * cols * k)?;
        let valid = (0..rows * cols)
            .map(|i| k == 0 || values[i * k].is_finite())
            .collect();
        Ok(Self {
            rows,
            cols,
            frequencies_mhz,
            values,
            valid,
        })
    }
}
