//! Experiment sweeps: area x method x target band x sampling rate x seed.
//!
//! Every cell draws its block split, observation mask and model
//! initialization from its seed alone, so methods sharing a seed see the
//! same split and the same observations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{rmse_area, rmse_block, BlockRmse};
use crate::baselines::{halrtc_with, idw3d, kriging_fit, kriging_predict, HalrtcParams, IdwParams, MaskedTensor, Sample3D};
use crate::error::{Error, Result};
use crate::graph::EncodingStrategy;
use crate::propagation::{DepthParams, RadiomapTensor};
use crate::scenario::{BlockIndex, GridIndex, LosTable, UrbanScenario};
use crate::train::{predict_with, sample_mask, train_with, BlockSplit, GraphContext, Observations, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GatEncoding {
    ModelBased,
    Adjacency,
    Environment,
    Transmitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Gat(GatEncoding),
    Idw,
    Halrtc,
    Kriging,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gat(GatEncoding::ModelBased),
        Method::Gat(GatEncoding::Adjacency),
        Method::Gat(GatEncoding::Environment),
        Method::Gat(GatEncoding::Transmitter),
        Method::Kriging,
        Method::Idw,
        Method::Halrtc,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Gat(GatEncoding::ModelBased) => "gat",
            Method::Gat(GatEncoding::Adjacency) => "gat-adjacency",
            Method::Gat(GatEncoding::Environment) => "gat-environment",
            Method::Gat(GatEncoding::Transmitter) => "gat-transmitter",
            Method::Idw => "idw",
            Method::Halrtc => "halrtc",
            Method::Kriging => "kriging",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "gat-model" || s == "gat-model-based" {
            return Ok(Method::Gat(GatEncoding::ModelBased));
        }
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::invalid("method", format!("unknown method `{s}`")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub methods: Vec<Method>,
    pub f_obv_mhz: f64,
    pub f_targets_mhz: Vec<f64>,
    pub sampling_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Share of blocks put in the training set.
    pub split_fraction: f64,
    /// Share of target-band labels kept per training block.
    pub mask_fraction: f64,
    /// Train one network over every target band instead of one per band.
    pub multi_target: bool,
    /// Base network settings; band, rate, seed, mask and strategy are set
    /// per cell.
    pub training: TrainingConfig,
    /// Model-based encoding parameters; `delta` defaults to the number of
    /// transmitters when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthParams>,
    /// Radius of the environment- and transmitter-based encodings.
    pub encoding_range_m: f64,
    /// Bands observed by inverse-distance weighting.
    pub idw_bands_mhz: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idw: Option<IdwParams>,
    /// Bands stacked with the target band for tensor completion.
    pub halrtc_bands_mhz: Vec<f64>,
    pub halrtc: HalrtcParams,
    /// Run independent cells on the rayon pool.
    pub parallel: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            methods: vec![Method::Gat(GatEncoding::ModelBased), Method::Kriging, Method::Idw],
            f_obv_mhz: 1750.0,
            f_targets_mhz: vec![5750.0],
            sampling_rates: vec![0.05],
            seeds: vec![0],
            split_fraction: 0.5,
            mask_fraction: 1.0,
            multi_target: false,
            training: TrainingConfig::default(),
            depth: None,
            encoding_range_m: 15.0,
            idw_bands_mhz: vec![1750.0, 2750.0, 3750.0],
            idw: None,
            halrtc_bands_mhz: vec![1750.0, 2750.0, 3750.0],
            halrtc: HalrtcParams {
                track_objective: false,
                ..HalrtcParams::default()
            },
            parallel: false,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.f_targets_mhz.is_empty() || self.sampling_rates.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("experiment", "methods, targets, rates and seeds must be non-empty"));
        }
        if self.f_targets_mhz.contains(&self.f_obv_mhz) {
            return Err(Error::invalid("f_targets_mhz", "targets must differ from the observed band"));
        }
        for &r in &self.sampling_rates {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid("sampling_rates", format!("{r} is outside (0, 1]")));
            }
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid("split_fraction", "must lie in (0, 1)"));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::invalid("mask_fraction", "must lie in (0, 1]"));
        }
        if !(self.encoding_range_m > 0.0) {
            return Err(Error::invalid("encoding_range_m", "must be positive"));
        }
        if self.idw_bands_mhz.is_empty() || self.halrtc_bands_mhz.is_empty() {
            return Err(Error::invalid("experiment", "baseline band lists must be non-empty"));
        }
        Ok(())
    }

    /// Graph encoding for a network method on `scenario`.
    pub fn strategy(&self, encoding: GatEncoding, scenario: &UrbanScenario) -> EncodingStrategy {
        match encoding {
            GatEncoding::ModelBased => EncodingStrategy::model_based(
                self.depth
                    .unwrap_or_else(|| DepthParams::for_transmitters(scenario.transmitters.len())),
            ),
            GatEncoding::Adjacency => EncodingStrategy::adjacency(),
            GatEncoding::Environment => EncodingStrategy::environment(Some(self.encoding_range_m)),
            GatEncoding::Transmitter => EncodingStrategy::transmitter(Some(self.encoding_range_m)),
        }
    }
}

/// One evaluated area with its ground truth.
#[derive(Debug, Clone)]
pub struct Area {
    pub name: String,
    pub scenario: UrbanScenario,
    pub truth: RadiomapTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub area: String,
    pub method: Method,
    pub f_target_mhz: f64,
    pub sampling_rate: f64,
    pub seed: u64,
    pub blocks: Vec<BlockRmse>,
    pub area_rmse_db: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
}

/// Predicted fields (one per target band, indexed by linear grid; NaN
/// outside the inference blocks).
type Fields = Vec<Vec<f64>>;

struct Unit<'a> {
    area: &'a Area,
    los: Option<&'a LosTable>,
    method: Method,
    seed: u64,
    rate: f64,
}

fn b2_observations(area: &Area, split: &BlockSplit, f_mhz: f64, rate: f64, seed: u64) -> Result<Observations> {
    let mask = sample_mask(&area.scenario, &split.b2, rate, seed)?;
    Observations::sample(&area.truth, f_mhz, &mask)
}

fn gat_fields(plan: &ExperimentPlan, u: &Unit<'_>, enc: GatEncoding, split: &BlockSplit) -> Result<Fields> {
    let s = &u.area.scenario;
    let strategy = plan.strategy(enc, s);
    let ctx = GraphContext::with_los(s, u.los, strategy.clone())?;
    let obs = b2_observations(u.area, split, plan.f_obv_mhz, u.rate, u.seed)?;
    let mut cfg = plan.training.clone();
    cfg.f_obv_mhz = plan.f_obv_mhz;
    cfg.sampling_rate = u.rate;
    cfg.seed = u.seed;
    cfg.mask_fraction = plan.mask_fraction;
    cfg.strategy = strategy;
    let mut fields = vec![vec![f64::NAN; s.grid_count()]; plan.f_targets_mhz.len()];
    let shared = if plan.multi_target {
        cfg.multi_target = true;
        Some(train_with(&ctx, &u.area.truth, split, &cfg)?)
    } else {
        None
    };
    for (field, &f) in fields.iter_mut().zip(&plan.f_targets_mhz) {
        let owned;
        let trained = match &shared {
            Some(t) => t,
            None => {
                cfg.f_target_mhz = f;
                owned = train_with(&ctx, &u.area.truth, split, &cfg)?;
                &owned
            }
        };
        for &b in &split.b2 {
            let p = predict_with(trained, &ctx, &obs, b, f)?;
            for (g, v) in p.grids.iter().zip(&p.rss_dbm) {
                field[s.linear(*g)] = *v;
            }
        }
    }
    Ok(fields)
}

fn idw_fields(plan: &ExperimentPlan, u: &Unit<'_>, split: &BlockSplit) -> Result<Fields> {
    let s = &u.area.scenario;
    let params = plan.idw.unwrap_or_else(|| IdwParams::for_scenario(s));
    let mask = sample_mask(s, &split.b2, u.rate, u.seed)?;
    let bands: Vec<usize> = plan
        .idw_bands_mhz
        .iter()
        .map(|&f| u.area.truth.frequency_index(f))
        .collect::<Result<_>>()?;
    let mut fields = vec![vec![f64::NAN; s.grid_count()]; plan.f_targets_mhz.len()];
    for &b in &split.b2 {
        let grids = s.block_free_grids(b)?;
        let mut samples = Vec::new();
        for (&k, &f) in bands.iter().zip(&plan.idw_bands_mhz) {
            for &g in grids.iter().filter(|&&g| mask[s.linear(g)]) {
                let (x, y) = s.position_m(g);
                samples.push(Sample3D {
                    x_m: x,
                    y_m: y,
                    f_mhz: f,
                    rss_dbm: u.area.truth.at(g, k),
                });
            }
        }
        for (field, &f) in fields.iter_mut().zip(&plan.f_targets_mhz) {
            for &g in &grids {
                let (x, y) = s.position_m(g);
                field[s.linear(g)] = idw3d(&samples, (x, y, f), params.power, params.freq_scale_m_per_mhz)?;
            }
        }
    }
    Ok(fields)
}

fn halrtc_fields(plan: &ExperimentPlan, u: &Unit<'_>, split: &BlockSplit) -> Result<Fields> {
    let s = &u.area.scenario;
    let mask = sample_mask(s, &split.b2, u.rate, u.seed)?;
    let mut fields = vec![vec![f64::NAN; s.grid_count()]; plan.f_targets_mhz.len()];
    for (field, &f) in fields.iter_mut().zip(&plan.f_targets_mhz) {
        let mut bands = plan.halrtc_bands_mhz.clone();
        if !bands.contains(&f) {
            bands.push(f);
        }
        let ks: Vec<usize> = bands.iter().map(|&b| u.area.truth.frequency_index(b)).collect::<Result<_>>()?;
        let kt = bands.iter().position(|&b| b == f).expect("target band is in the stack");
        for &b in &split.b2 {
            let grids = s.block_grids(b)?;
            let (r0, c0) = (grids[0].row, grids[0].col);
            let rows = grids.iter().map(|g| g.row).max().expect("non-empty block") - r0 + 1;
            let cols = grids.iter().map(|g| g.col).max().expect("non-empty block") - c0 + 1;
            let dims = [rows, cols, ks.len()];
            let mut values = vec![0.0; rows * cols * ks.len()];
            let mut observed = vec![false; values.len()];
            for &g in &grids {
                let lin = s.linear(g);
                if !mask[lin] || s.is_building(g) {
                    continue;
                }
                for (slot, &k) in ks.iter().enumerate() {
                    let idx = ((g.row - r0) * cols + (g.col - c0)) * ks.len() + slot;
                    values[idx] = u.area.truth.get(lin, k);
                    observed[idx] = true;
                }
            }
            // Completion runs on per-band centered values: with few
            // samples the nuclear norm pulls unobserved entries to zero.
            let kn = ks.len();
            let mut means = vec![0.0; kn];
            let mut counts = vec![0usize; kn];
            for (i, (&v, &o)) in values.iter().zip(&observed).enumerate() {
                if o {
                    means[i % kn] += v;
                    counts[i % kn] += 1;
                }
            }
            for (m, &c) in means.iter_mut().zip(&counts) {
                *m /= c.max(1) as f64;
            }
            let centered = values.iter().enumerate().map(|(i, v)| v - means[i % kn]).collect();
            let t = MaskedTensor::new(dims, centered, observed)?;
            let done = halrtc_with(&t, &plan.halrtc)?;
            for &g in grids.iter().filter(|&&g| !s.is_building(g)) {
                let idx = t.index(g.row - r0, g.col - c0, kt);
                field[s.linear(g)] = if t.observed()[idx] {
                    values[idx]
                } else {
                    done.values[idx] + means[kt]
                };
            }
        }
    }
    Ok(fields)
}

fn kriging_fields(plan: &ExperimentPlan, u: &Unit<'_>, split: &BlockSplit) -> Result<Fields> {
    let s = &u.area.scenario;
    let obs = b2_observations(u.area, split, plan.f_obv_mhz, u.rate, u.seed)?;
    let mut fields = vec![vec![f64::NAN; s.grid_count()]; plan.f_targets_mhz.len()];
    for (field, &f) in fields.iter_mut().zip(&plan.f_targets_mhz) {
        let model = kriging_fit(s, &u.area.truth, &split.b1, plan.f_obv_mhz, f)?;
        for &b in &split.b2 {
            let grids = s.block_free_grids(b)?;
            let observed: Vec<(GridIndex, f64)> = grids
                .iter()
                .filter_map(|&g| obs.get(s.linear(g)).map(|v| (g, v)))
                .collect();
            let pred = kriging_predict(&model, s, &observed, plan.f_obv_mhz, &grids, f)?;
            for (g, v) in grids.iter().zip(pred) {
                field[s.linear(*g)] = v;
            }
        }
    }
    Ok(fields)
}

fn evaluate(area: &Area, split: &BlockSplit, field: &[f64], f_mhz: f64) -> Result<Vec<BlockRmse>> {
    let s = &area.scenario;
    let k = area.truth.frequency_index(f_mhz)?;
    split
        .b2
        .iter()
        .map(|&b| {
            let grids = s.block_free_grids(b)?;
            let pred: Vec<f64> = grids.iter().map(|&g| field[s.linear(g)]).collect();
            let truth: Vec<f64> = grids.iter().map(|&g| area.truth.at(g, k)).collect();
            rmse_block(b, &pred, &truth)
        })
        .collect()
}

fn run_unit(plan: &ExperimentPlan, u: &Unit<'_>) -> Vec<CellResult> {
    let outcome = (|| -> Result<Vec<Vec<BlockRmse>>> {
        let split = BlockSplit::random(&u.area.scenario, plan.split_fraction, u.seed)?;
        let fields = match u.method {
            Method::Gat(enc) => gat_fields(plan, u, enc, &split)?,
            Method::Idw => idw_fields(plan, u, &split)?,
            Method::Halrtc => halrtc_fields(plan, u, &split)?,
            Method::Kriging => kriging_fields(plan, u, &split)?,
        };
        fields
            .iter()
            .zip(&plan.f_targets_mhz)
            .map(|(field, &f)| evaluate(u.area, &split, field, f))
            .collect()
    })();
    plan.f_targets_mhz
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let (blocks, area_rmse_db, error) = match &outcome {
                Ok(all) => match rmse_area(&all[i]) {
                    Ok(v) => (all[i].clone(), Some(v), None),
                    Err(e) => (all[i].clone(), None, Some(e.to_string())),
                },
                Err(e) => (Vec::new(), None, Some(e.to_string())),
            };
            if let Some(e) = &error {
                log::warn!("{} / {} / {f} MHz / rate {} / seed {}: {e}", u.area.name, u.method, u.rate, u.seed);
            }
            CellResult {
                area: u.area.name.clone(),
                method: u.method,
                f_target_mhz: f,
                sampling_rate: u.rate,
                seed: u.seed,
                blocks,
                area_rmse_db,
                error,
            }
        })
        .collect()
}

/// Runs every cell of `plan` over `areas`. Invalid plans fail up front;
/// a failing cell is recorded in its row and the sweep carries on.
pub fn run_experiment(plan: &ExperimentPlan, areas: &[Area]) -> Result<ExperimentReport> {
    plan.validate()?;
    if areas.is_empty() {
        return Err(Error::Empty("experiment needs at least one area"));
    }
    let needs_los = plan.methods.iter().any(|m| matches!(m, Method::Gat(GatEncoding::ModelBased)));
    let tables: Vec<Option<LosTable>> = areas
        .iter()
        .map(|a| needs_los.then(|| LosTable::compute(&a.scenario)))
        .collect();
    let mut units = Vec::new();
    for (area, los) in areas.iter().zip(&tables) {
        for &seed in &plan.seeds {
            for &rate in &plan.sampling_rates {
                for &method in &plan.methods {
                    units.push(Unit {
                        area,
                        los: los.as_ref(),
                        method,
                        seed,
                        rate,
                    });
                }
            }
        }
    }
    let results: Vec<Vec<CellResult>> = if plan.parallel {
        units.par_iter().map(|u| run_unit(plan, u)).collect()
    } else {
        units.iter().map(|u| run_unit(plan, u)).collect()
    };
    Ok(ExperimentReport {
        cells: results.into_iter().flatten().collect(),
    })
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], " ")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

type Key = (String, Method, u64, u64);

fn key(area: &str, method: Method, f: f64, rate: f64) -> Key {
    (area.to_string(), method, f.to_bits(), rate.to_bits())
}

impl ExperimentReport {
    /// Mean area RMSE over successful seeds, per area/method/band/rate.
    fn per_area_means(&self) -> BTreeMap<Key, (usize, Option<f64>)> {
        let mut acc: BTreeMap<Key, (usize, f64, usize)> = BTreeMap::new();
        let mut order = Vec::new();
        for c in &self.cells {
            let k = key(&c.area, c.method, c.f_target_mhz, c.sampling_rate);
            let e = acc.entry(k.clone()).or_insert_with(|| {
                order.push(k);
                (0, 0.0, 0)
            });
            e.0 += 1;
            if let Some(v) = c.area_rmse_db {
                e.1 += v;
                e.2 += 1;
            }
        }
        acc.into_iter()
            .map(|(k, (n, sum, ok))| (k, (n, (ok > 0).then(|| sum / ok as f64))))
            .collect()
    }

    /// Mean area RMSE of `method` over all areas and seeds; `None` when
    /// any matching cell failed or none exists.
    pub fn mean_rmse(&self, method: Method, f_target_mhz: f64, sampling_rate: f64) -> Option<f64> {
        let vals: Vec<Option<f64>> = self
            .cells
            .iter()
            .filter(|c| c.method == method && c.f_target_mhz == f_target_mhz && c.sampling_rate == sampling_rate)
            .map(|c| c.area_rmse_db)
            .collect();
        if vals.is_empty() || vals.iter().any(Option::is_none) {
            return None;
        }
        Some(vals.iter().flatten().sum::<f64>() / vals.len() as f64)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from("area,method,f_target_mhz,sampling_rate,seed,area_rmse_db,error\n");
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&c.area),
                c.method,
                c.f_target_mhz,
                c.sampling_rate,
                c.seed,
                opt(c.area_rmse_db),
                csv_field(c.error.as_deref().unwrap_or(""))
            )
            .expect("write to string");
        }
        out
    }

    pub fn blocks_csv(&self) -> String {
        let mut out = String::from("area,method,f_target_mhz,sampling_rate,seed,block,rmse_db,node_count\n");
        for c in &self.cells {
            for b in &c.blocks {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    csv_field(&c.area),
                    c.method,
                    c.f_target_mhz,
                    c.sampling_rate,
                    c.seed,
                    b.block,
                    b.rmse_db,
                    b.node_count
                )
                .expect("write to string");
            }
        }
        out
    }

    /// Per area: mean over seeds.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("area,method,f_target_mhz,sampling_rate,seeds,mean_rmse_db\n");
        for ((area, m, f, r), (n, mean)) in self.per_area_means() {
            writeln!(
                out,
                "{},{m},{},{},{n},{}",
                csv_field(&area),
                f64::from_bits(f),
                f64::from_bits(r),
                opt(mean)
            )
            .expect("write to string");
        }
        out
    }

    /// Across areas: mean, min and max of the per-area means.
    pub fn range_csv(&self) -> String {
        let mut groups: BTreeMap<(Method, u64, u64), Vec<Option<f64>>> = BTreeMap::new();
        for ((_, m, f, r), (_, mean)) in self.per_area_means() {
            groups.entry((m, f, r)).or_default().push(mean);
        }
        let mut out = String::from("method,f_target_mhz,sampling_rate,areas,mean_rmse_db,min_rmse_db,max_rmse_db\n");
        for ((m, f, r), vals) in groups {
            let ok: Vec<f64> = vals.iter().flatten().copied().collect();
            let (mean, lo, hi) = if ok.is_empty() {
                (None, None, None)
            } else {
                (
                    Some(ok.iter().sum::<f64>() / ok.len() as f64),
                    ok.iter().copied().reduce(f64::min),
                    ok.iter().copied().reduce(f64::max),
                )
            };
            writeln!(
                out,
                "{m},{},{},{},{},{},{}",
                f64::from_bits(f),
                f64::from_bits(r),
                ok.len(),
                opt(mean),
                opt(lo),
                opt(hi)
            )
            .expect("write to string");
        }
        out
    }

    /// Writes `cells.csv`, `blocks.csv`, `summary.csv` and `range.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("cells.csv"), self.cells_csv())?;
        std::fs::write(dir.join("blocks.csv"), self.blocks_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("range.csv"), self.range_csv())?;
        Ok(())
    }
}

/// Block predictions of one method, for inspection and rendering: a
/// tensor over the target bands holding predictions inside `split.b2` and
/// NaN elsewhere on free grids.
pub fn predict_area(
    plan: &ExperimentPlan,
    area: &Area,
    method: Method,
    seed: u64,
    rate: f64,
) -> Result<(BlockSplit, RadiomapTensor)> {
    plan.validate()?;
    let los = matches!(method, Method::Gat(GatEncoding::ModelBased)).then(|| LosTable::compute(&area.scenario));
    let u = Unit {
        area,
        los: los.as_ref(),
        method,
        seed,
        rate,
    };
    let split = BlockSplit::random(&area.scenario, plan.split_fraction, seed)?;
    let fields = match method {
        Method::Gat(enc) => gat_fields(plan, &u, enc, &split)?,
        Method::Idw => idw_fields(plan, &u, &split)?,
        Method::Halrtc => halrtc_fields(plan, &u, &split)?,
        Method::Kriging => kriging_fields(plan, &u, &split)?,
    };
    let s = &area.scenario;
    let mut out = RadiomapTensor::for_scenario_with(s, plan.f_targets_mhz.clone());
    for (k, field) in fields.iter().enumerate() {
        for (lin, &v) in field.iter().enumerate() {
            if out.is_valid(lin) {
                out.set(lin, k, v);
            }
        }
    }
    Ok((split, out))
}

/// Blocks of `split.b2` in one prediction tensor, evaluated against truth.
pub fn evaluate_prediction(
    area: &Area,
    blocks: &[BlockIndex],
    prediction: &RadiomapTensor,
    f_mhz: f64,
) -> Result<Vec<BlockRmse>> {
    let k = prediction.frequency_index(f_mhz)?;
    let field: Vec<f64> = (0..prediction.grid_count()).map(|i| prediction.get(i, k)).collect();
    let split = BlockSplit {
        b1: Vec::new(),
        b2: blocks.to_vec(),
    };
    evaluate(area, &split, &field, f_mhz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::tests_support;

    fn area() -> Area {
        let (scenario, truth) = tests_support::small_world();
        Area {
            name: "tiny".into(),
            scenario,
            truth,
        }
    }

    fn plan(methods: Vec<Method>) -> ExperimentPlan {
        let mut p = ExperimentPlan {
            methods,
            sampling_rates: vec![0.2],
            halrtc: HalrtcParams {
                iters: 200,
                track_objective: false,
                ..HalrtcParams::default()
            },
            ..ExperimentPlan::default()
        };
        p.training = tests_support::quick_cfg(3);
        p.f_targets_mhz = vec![5750.0];
        p.idw_bands_mhz = vec![1750.0, 3750.0];
        p.halrtc_bands_mhz = vec![1750.0, 3750.0];
        p
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("radio".parse::<Method>().is_err());
        let p = ExperimentPlan::default();
        let text = toml::to_string(&p).unwrap();
        assert_eq!(toml::from_str::<ExperimentPlan>(&text).unwrap(), p);
    }

    #[test]
    fn one_cell_per_combination() {
        let a = area();
        let r = run_experiment(&plan(vec![Method::Idw]), std::slice::from_ref(&a)).unwrap();
        assert_eq!(r.cells.len(), 1);
        let c = &r.cells[0];
        assert!(c.error.is_none(), "{:?}", c.error);
        let v = c.area_rmse_db.unwrap();
        assert!(v > 0.0 && v.is_finite());
        assert_eq!(r.mean_rmse(Method::Idw, 5750.0, 0.2), Some(v));
        assert_eq!(r.cells_csv().lines().count(), 2);
    }

    #[test]
    fn every_method_runs_and_is_deterministic() {
        let a = area();
        let p = plan(Method::ALL.to_vec());
        let r1 = run_experiment(&p, std::slice::from_ref(&a)).unwrap();
        assert_eq!(r1.failures().count(), 0, "{:?}", r1.failures().collect::<Vec<_>>());
        let mut par = p.clone();
        par.parallel = true;
        let r2 = run_experiment(&par, std::slice::from_ref(&a)).unwrap();
        assert_eq!(r1.cells_csv(), r2.cells_csv());
        assert_eq!(r1.range_csv(), r2.range_csv());
    }

    #[test]
    fn failing_cells_are_recorded() {
        let a = area();
        let mut p = plan(vec![Method::Idw, Method::Kriging]);
        // 4750 MHz is not a scenario band: every cell fails, none aborts.
        p.f_targets_mhz = vec![4750.0];
        let r = run_experiment(&p, std::slice::from_ref(&a)).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.failures().count(), 2);
        assert!(r.cells_csv().lines().nth(1).unwrap().ends_with("not part of the scenario"));
        let mut bad = p.clone();
        bad.seeds.clear();
        assert!(run_experiment(&bad, std::slice::from_ref(&a)).is_err());
    }

    #[test]
    fn predict_area_matches_the_sweep() {
        let a = area();
        let p = plan(vec![Method::Kriging]);
        let r = run_experiment(&p, std::slice::from_ref(&a)).unwrap();
        let (split, t) = predict_area(&p, &a, Method::Kriging, 0, 0.2).unwrap();
        let blocks = evaluate_prediction(&a, &split.b2, &t, 5750.0).unwrap();
        assert_eq!(blocks, r.cells[0].blocks);
    }
}
