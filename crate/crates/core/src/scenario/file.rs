//! Scenario files (TOML sections) and character map files.
//!
//! ```toml
//! [area]
//! width_m = 1000
//! height_m = 1000
//! grid_size_m = 5
//! block_size_m = 200
//!
//! [frequencies]
//! mhz = [1750, 2750, 3750, 4750, 5750]
//!
//! [[transmitters]]
//! row = 50
//! col = 50
//! tx_power_dbm = [30, 30, 30, 30, 30]
//!
//! [map]
//! path = "city.map"          # relative to this file
//! # or: procedural = { seed = 7 }
//! ```
//!
//! Map files hold one character per grid cell, `.` free and `#` building,
//! one row per line starting at the northwest corner.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::procgen::{generate_city, CityParams};
use super::{GridIndex, OccupancyGrid, TransmitterSpec, UrbanScenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct AreaSection {
    pub width_m: f64,
    pub height_m: f64,
    pub grid_size_m: f64,
    pub block_size_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct FrequencySection {
    pub mhz: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub(crate) struct MapSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub procedural: Option<CityParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ScenarioFile {
    pub area: AreaSection,
    pub frequencies: FrequencySection,
    #[serde(default)]
    pub transmitters: Vec<TransmitterSpec>,
    #[serde(default)]
    pub map: MapSection,
}

pub(crate) fn toml_error(path: &Path, text: &str, err: toml::de::Error) -> Error {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: err.message().to_string(),
    }
}

/// Read and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<UrbanScenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| toml_error(path, &text, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    scenario_from_file(file, &base)
}

pub(crate) fn scenario_from_file(file: ScenarioFile, base: &Path) -> Result<UrbanScenario> {
    let a = &file.area;
    if !(a.grid_size_m > 0.0) {
        return Err(Error::invalid("grid_size_m", "must be positive"));
    }
    let rows = (a.height_m / a.grid_size_m).round().max(0.0) as usize;
    let cols = (a.width_m / a.grid_size_m).round().max(0.0) as usize;
    let occupancy = match (&file.map.path, &file.map.procedural) {
        (Some(p), None) => {
            let map_path = resolve(base, p);
            load_map(&map_path)?
        }
        (None, Some(city)) => {
            let sites: Vec<GridIndex> = file.transmitters.iter().map(TransmitterSpec::grid).collect();
            generate_city(rows, cols, a.grid_size_m, city, &sites)
        }
        (None, None) => OccupancyGrid::free(rows, cols),
        (Some(_), Some(_)) => {
            return Err(Error::invalid("map", "give either `path` or `procedural`, not both"))
        }
    };
    UrbanScenario::new(
        a.width_m,
        a.height_m,
        a.grid_size_m,
        a.block_size_m,
        occupancy,
        file.transmitters,
        file.frequencies.mhz,
    )
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Write `<path>` plus a sibling `.map` file holding the occupancy.
pub fn save_scenario(scenario: &UrbanScenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let map_path = path.with_extension("map");
    let map_name = map_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario.map".into());
    let file = ScenarioFile {
        area: AreaSection {
            width_m: scenario.width_m,
            height_m: scenario.height_m,
            grid_size_m: scenario.grid_size_m,
            block_size_m: scenario.block_size_m,
        },
        frequencies: FrequencySection {
            mhz: scenario.frequencies_mhz.clone(),
        },
        transmitters: scenario.transmitters.clone(),
        map: MapSection {
            path: Some(map_name),
            procedural: None,
        },
    };
    let text = toml::to_string(&file).map_err(|e| Error::invalid("scenario", e.to_string()))?;
    fs::write(path, text)?;
    write_map(&scenario.occupancy, &map_path)
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OccupancyGrid> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_map(&text, path)
}

pub fn parse_map(text: &str, origin: &Path) -> Result<OccupancyGrid> {
    let mut cells = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let before = cells.len();
        for ch in line.chars() {
            match ch {
                '.' => cells.push(false),
                '#' => cells.push(true),
                other => {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: i + 1,
                        msg: format!("unexpected map character {other:?}"),
                    })
                }
            }
        }
        let width = cells.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("row has {width} cells, expected {c}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    OccupancyGrid::new(rows, cols.unwrap_or(0), cells)
}

pub fn write_map(occ: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::with_capacity(occ.rows() * (occ.cols() + 1));
    for r in 0..occ.rows() {
        for c in 0..occ.cols() {
            text.push(if occ.is_building(r, c) { '#' } else { '.' });
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    const MINIMAL: &str = r#"
[area]
width_m = 40
height_m = 40
grid_size_m = 5
block_size_m = 20

[frequencies]
mhz = [1750]

[[transmitters]]
row = 1
col = 1
tx_power_dbm = [30]

[map]
path = "m.map"
"#;

    #[test]
    fn loads_minimal_scenario() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.map", &"........\n".repeat(8));
        let p = write(dir.path(), "s.toml", MINIMAL);
        let s = load_scenario(&p).unwrap();
        assert_eq!((s.rows(), s.cols()), (8, 8));
        assert_eq!(s.transmitters.len(), 1);
    }

    #[test]
    fn transmitter_on_building_names_transmitter() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = "........\n".repeat(8);
        map.replace_range(10..11, "#"); // row 1, col 1
        write(dir.path(), "m.map", &map);
        let p = write(dir.path(), "s.toml", MINIMAL);
        let err = load_scenario(&p).unwrap_err();
        assert!(err.to_string().contains("transmitters[0]"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.toml", "[area]\nwidth_m = 40\nheight_m = \"x\"\n");
        match load_scenario(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        match parse_map("..\n.x\n", Path::new("m")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(parse_map("..\n...\n", Path::new("m")).is_err());
    }

    #[test]
    fn save_then_load_preserves_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let mut occ = OccupancyGrid::free(8, 8);
        occ.set(4, 5, true);
        let s = UrbanScenario::new(
            40.0,
            40.0,
            5.0,
            20.0,
            occ,
            vec![TransmitterSpec {
                row: 0,
                col: 7,
                tx_power_dbm: vec![30.0, 27.0],
            }],
            vec![1750.0, 2750.0],
        )
        .unwrap();
        let p = dir.path().join("out.toml");
        save_scenario(&s, &p).unwrap();
        let back = load_scenario(&p).unwrap();
        assert_eq!(back.occupancy, s.occupancy);
        assert_eq!(back.transmitters, s.transmitters);
        assert_eq!(back.frequencies_mhz, s.frequencies_mhz);
    }

    #[test]
    fn procedural_map_keeps_transmitters_free() {
        let text = MINIMAL.replace("path = \"m.map\"", "procedural = { seed = 3, min_block_m = 10, max_block_m = 20, min_lot_m = 5, max_lot_m = 10, build_prob = 1.0, max_setback_m = 0, clearance_m = 0 }");
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.toml", &text);
        let s = load_scenario(&p).unwrap();
        assert!(!s.is_building(GridIndex::new(1, 1)));
        assert!(s.occupancy.building_fraction() > 0.0);
    }
}
