//! Run configuration files: the scenario format plus optional sections.
//!
//! ```toml
//! [area]            # as in a scenario file
//! [frequencies]
//! [[transmitters]]
//! [map]
//!
//! [propagation]     # path-loss coefficients
//! [generator]       # wall loss and shadowing of the synthetic truth
//! [training]        # network and optimizer settings
//! [experiment]      # sweep axes and baseline settings
//!
//! [[areas]]         # extra areas for sweeps; none means this scenario only
//! name = "north"
//! scenario = "north.toml"   # optional, relative to this file
//! generator_seed = 3        # optional shadowing seed override
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Area, ExperimentPlan};
use crate::propagation::{generate_ground_truth, GeneratorParams, PropagationParams, RadiomapTensor};
use crate::scenario::file::{scenario_from_file, toml_error, ScenarioFile};
use crate::scenario::{load_scenario, UrbanScenario};
use crate::train::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ConfigFile {
    #[serde(flatten)]
    scenario: ScenarioFile,
    #[serde(default)]
    propagation: PropagationParams,
    #[serde(default)]
    generator: GeneratorParams,
    #[serde(default)]
    training: TrainingConfig,
    #[serde(default)]
    experiment: ExperimentPlan,
    #[serde(default)]
    areas: Vec<AreaEntry>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: UrbanScenario,
    pub propagation: PropagationParams,
    pub generator: GeneratorParams,
    pub training: TrainingConfig,
    pub experiment: ExperimentPlan,
    pub areas: Vec<AreaEntry>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, &base)
    }

    /// `origin` only labels parse errors.
    pub fn parse(text: &str, origin: &Path, base_dir: &Path) -> Result<Self> {
        // The flattened scenario sections lose their spans inside
        // `ConfigFile`, so they are checked on their own first.
        toml::from_str::<ScenarioFile>(text).map_err(|e| toml_error(origin, text, e))?;
        let file: ConfigFile = toml::from_str(text).map_err(|e| toml_error(origin, text, e))?;
        let scenario = scenario_from_file(file.scenario, base_dir)?;
        file.propagation.validate()?;
        file.generator.validate()?;
        file.experiment.validate()?;
        let mut names: Vec<&str> = file.areas.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("areas", "area names must be unique"));
        }
        Ok(Self {
            scenario,
            propagation: file.propagation,
            generator: file.generator,
            training: file.training,
            experiment: file.experiment,
            areas: file.areas,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Ground truth of the main scenario.
    pub fn ground_truth(&self) -> Result<RadiomapTensor> {
        generate_ground_truth(&self.scenario, &self.propagation, &self.generator)
    }

    /// Areas of a sweep, each with freshly generated ground truth.
    pub fn build_areas(&self) -> Result<Vec<Area>> {
        if self.areas.is_empty() {
            return Ok(vec![Area {
                name: "area".into(),
                scenario: self.scenario.clone(),
                truth: self.ground_truth()?,
            }]);
        }
        self.areas
            .iter()
            .map(|e| {
                let scenario = match &e.scenario {
                    Some(p) => load_scenario(self.base_dir.join(p))?,
                    None => self.scenario.clone(),
                };
                let gen = GeneratorParams {
                    seed: e.generator_seed.unwrap_or(self.generator.seed),
                    ..self.generator
                };
                let truth = generate_ground_truth(&scenario, &self.propagation, &gen)?;
                Ok(Area {
                    name: e.name.clone(),
                    scenario,
                    truth,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
[area]
width_m = 120
height_m = 120
grid_size_m = 5
block_size_m = 60

[frequencies]
mhz = [1750, 3750, 5750]

[[transmitters]]
row = 3
col = 4
tx_power_dbm = [30, 30, 30]

[generator]
seed = 5
shadow_sigma_db = 2.0

[training]
epochs = 7
lr = 0.005

[experiment]
methods = ["gat", "idw"]
seeds = [1, 2]

[[areas]]
name = "a"

[[areas]]
name = "b"
generator_seed = 9
"#;

    #[test]
    fn sections_parse_with_defaults() {
        let c = Config::parse(TEXT, Path::new("inline.toml"), Path::new(".")).unwrap();
        assert_eq!(c.scenario.rows(), 24);
        assert_eq!(c.generator.seed, 5);
        assert_eq!(c.generator.shadow_sigma_db, 2.0);
        assert_eq!(c.generator.wall_loss_db_per_m, GeneratorParams::default().wall_loss_db_per_m);
        assert_eq!(c.training.epochs, 7);
        assert_eq!(c.experiment.seeds, vec![1, 2]);
        assert_eq!(c.experiment.split_fraction, 0.5);
        let areas = c.build_areas().unwrap();
        assert_eq!(areas.len(), 2);
        assert_ne!(areas[0].truth, areas[1].truth);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = TEXT.replace("epochs = 7", "epochs = \"many\"");
        match Config::parse(&bad, Path::new("x.toml"), Path::new(".")) {
            Err(Error::Parse { line, .. }) => assert!(line > 20, "line {line}"),
            other => panic!("{other:?}"),
        }
        let dup = TEXT.replace("name = \"b\"", "name = \"a\"");
        assert!(Config::parse(&dup, Path::new("x.toml"), Path::new(".")).is_err());
        let bad_method = TEXT.replace("\"idw\"", "\"radio\"");
        assert!(Config::parse(&bad_method, Path::new("x.toml"), Path::new(".")).is_err());
    }
}
