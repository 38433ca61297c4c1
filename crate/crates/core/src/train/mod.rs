//! Feature assembly, masked-loss training over the training blocks and
//! cross-band prediction over the inference blocks.
//!
//! The first attention layer runs on the observed-band graph, where the
//! observations live; the remaining two run on the target-band graph.

mod context;
mod features;
mod run_dir;
mod sampling;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, EncodingStrategy};
use crate::nn::{AdamConfig, AdamState, GatConfig, GatModel, Tensor};
use crate::propagation::{DepthParams, RadiomapTensor};
use crate::scenario::{BlockIndex, GridIndex, UrbanScenario};

pub use context::GraphContext;
pub use features::{
    assemble_features, masked_loss, masked_loss_with_grad, Bounds, FeatureInput, NormBounds, FEATURE_DIM,
};
pub use run_dir::{load_run, save_run};
pub use sampling::{
    eligible_blocks, label_mask, nested_sample_masks, rng_for, sample_count, sample_mask, BlockSplit,
};

/// Sparse observations at one band, indexed by linear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub f_mhz: f64,
    values: Vec<Option<f64>>,
}

impl Observations {
    /// Reads `truth` at `f_mhz` wherever `mask` is set and the grid is free.
    pub fn sample(truth: &RadiomapTensor, f_mhz: f64, mask: &[bool]) -> Result<Self> {
        let k = truth.frequency_index(f_mhz)?;
        if mask.len() != truth.grid_count() {
            return Err(Error::Shape(format!(
                "mask of {} entries for {} grids",
                mask.len(),
                truth.grid_count()
            )));
        }
        let values = (0..truth.grid_count())
            .map(|i| (mask[i] && truth.is_valid(i)).then(|| truth.get(i, k)))
            .collect();
        Ok(Self { f_mhz, values })
    }

    pub fn from_values(f_mhz: f64, values: Vec<Option<f64>>) -> Self {
        Self { f_mhz, values }
    }

    #[inline]
    pub fn get(&self, linear: usize) -> Option<f64> {
        self.values[linear]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_some()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormPolicy {
    /// Padding of the observed-RSS bounds, as a fraction of the observed
    /// range. Keeps every observation strictly above the unobserved 0.
    pub rss_pad: f64,
    /// Padding of the target bounds.
    pub target_pad: f64,
}

impl Default for NormPolicy {
    fn default() -> Self {
        Self {
            rss_pad: 0.1,
            target_pad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub epochs: usize,
    pub f_obv_mhz: f64,
    pub f_target_mhz: f64,
    /// Cycle the target over every band except the observed one, one band
    /// per optimizer step.
    pub multi_target: bool,
    /// Share of target-band labels kept per training block; 1 is supervised.
    pub mask_fraction: f64,
    /// Share of free grids observed at the observed band.
    pub sampling_rate: f64,
    pub seed: u64,
    pub strategy: EncodingStrategy,
    pub norm: NormPolicy,
    pub model: GatConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            f_obv_mhz: 1750.0,
            f_target_mhz: 5750.0,
            multi_target: false,
            mask_fraction: 1.0,
            sampling_rate: 0.05,
            seed: 0,
            strategy: EncodingStrategy::model_based(DepthParams::default()),
            norm: NormPolicy::default(),
            model: GatConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::invalid("mask_fraction", "must lie in (0, 1]"));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::invalid("sampling_rate", "must lie in (0, 1]"));
        }
        if self.f_obv_mhz == self.f_target_mhz && !self.multi_target {
            return Err(Error::invalid("f_target_mhz", "must differ from f_obv_mhz"));
        }
        if !(self.norm.rss_pad >= 0.0 && self.norm.target_pad >= 0.0) {
            return Err(Error::invalid("norm", "padding must be non-negative"));
        }
        if self.model.in_dim != FEATURE_DIM {
            return Err(Error::invalid("model.in_dim", format!("must be {FEATURE_DIM}")));
        }
        if self.model.hidden_dim == 0 {
            return Err(Error::invalid("model.hidden_dim", "must be positive"));
        }
        self.strategy.validate()
    }

    /// Target bands trained on.
    pub fn targets(&self, scenario: &UrbanScenario) -> Vec<f64> {
        if self.multi_target {
            scenario
                .frequencies_mhz
                .iter()
                .copied()
                .filter(|&f| f != self.f_obv_mhz)
                .collect()
        } else {
            vec![self.f_target_mhz]
        }
    }
}

/// Observation and label grids actually used in training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMasks {
    pub observed: Vec<(BlockIndex, Vec<GridIndex>)>,
    pub labels: Vec<(BlockIndex, Vec<GridIndex>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: GatModel,
    pub bounds: NormBounds,
    pub strategy: EncodingStrategy,
    pub f_obv_mhz: f64,
    /// Mean masked loss of each epoch, computed before each step.
    pub loss_trace: Vec<f64>,
    pub masks: TrainingMasks,
}

struct PreparedBlock {
    features: Vec<Tensor>,
    adj_obv: Adjacency,
    adj_target: Vec<Adjacency>,
    targets: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

fn positions(scenario: &UrbanScenario, grids: &[GridIndex]) -> Vec<(f64, f64)> {
    grids.iter().map(|&g| scenario.position_m(g)).collect()
}

fn observed_at(scenario: &UrbanScenario, grids: &[GridIndex], obs: &Observations) -> Vec<Option<f64>> {
    grids.iter().map(|&g| obs.get(scenario.linear(g))).collect()
}

pub fn train(
    scenario: &UrbanScenario,
    truth: &RadiomapTensor,
    split: &BlockSplit,
    cfg: &TrainingConfig,
) -> Result<TrainedModel> {
    let ctx = GraphContext::new(scenario, cfg.strategy.clone())?;
    train_with(&ctx, truth, split, cfg)
}

/// As [`train`], reusing a prepared graph context.
pub fn train_with(
    ctx: &GraphContext<'_>,
    truth: &RadiomapTensor,
    split: &BlockSplit,
    cfg: &TrainingConfig,
) -> Result<TrainedModel> {
    let scenario = ctx.scenario;
    cfg.validate()?;
    if ctx.strategy != cfg.strategy {
        return Err(Error::invalid("strategy", "graph context was built for another strategy"));
    }
    split.validate(scenario)?;
    if split.b1.is_empty() {
        return Err(Error::Empty("no training blocks"));
    }
    if truth.rows() != scenario.rows() || truth.cols() != scenario.cols() {
        return Err(Error::Shape("ground truth does not match the scenario grid".into()));
    }
    scenario.frequency_index(cfg.f_obv_mhz)?;
    let targets = cfg.targets(scenario);
    if targets.is_empty() {
        return Err(Error::invalid("frequencies_mhz", "no target band besides the observed one"));
    }
    let k_targets: Vec<usize> = targets
        .iter()
        .map(|&f| {
            scenario.frequency_index(f)?;
            truth.frequency_index(f)
        })
        .collect::<Result<_>>()?;

    let mask = sample_mask(scenario, &split.b1, cfg.sampling_rate, cfg.seed)?;
    let obs = Observations::sample(truth, cfg.f_obv_mhz, &mask)?;

    // Per-block grids and label masks first: bounds depend on them.
    let mut blocks = Vec::with_capacity(split.b1.len());
    let mut masks = TrainingMasks::default();
    for &b in &split.b1 {
        let grids = ctx.block_grids(b)?;
        let labels = label_mask(grids.len(), b, cfg.mask_fraction, cfg.seed)?;
        masks.observed.push((
            b,
            grids.iter().copied().filter(|&g| obs.get(scenario.linear(g)).is_some()).collect(),
        ));
        masks.labels.push((
            b,
            grids.iter().zip(&labels).filter(|(_, &l)| l).map(|(&g, _)| g).collect(),
        ));
        blocks.push((b, grids, labels));
    }
    if blocks.iter().all(|(_, _, l)| !l.iter().any(|&x| x)) {
        return Err(Error::Empty("no labelled nodes in the training blocks"));
    }

    let (x, y, freq) = NormBounds::geometry(scenario)?;
    let rss = Bounds::from_values(
        (0..obs.len()).filter_map(|i| obs.get(i)),
        cfg.norm.rss_pad,
        "rss bounds",
    )?;
    let target = Bounds::from_values(
        blocks.iter().flat_map(|(_, grids, labels)| {
            grids
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l)
                .flat_map(|(&g, _)| k_targets.iter().map(move |&k| truth.at(g, k)))
        }),
        cfg.norm.target_pad,
        "target bounds",
    )?;
    let bounds = NormBounds {
        rss,
        x,
        y,
        freq,
        target,
    };

    let mut prepared = Vec::with_capacity(blocks.len());
    for (_, grids, labels) in blocks {
        let pos = positions(scenario, &grids);
        let observed = observed_at(scenario, &grids, &obs);
        let adj_obv = ctx.adjacency_for(&grids, cfg.f_obv_mhz)?;
        let mut features = Vec::new();
        let mut adj_target = Vec::new();
        let mut tvals = Vec::new();
        for (&f, &k) in targets.iter().zip(&k_targets) {
            features.push(assemble_features(
                &FeatureInput {
                    position_m: &pos,
                    observed_dbm: &observed,
                    f_obv_mhz: cfg.f_obv_mhz,
                    f_target_mhz: f,
                },
                &bounds,
            )?);
            adj_target.push(if ctx.frequency_dependent() {
                ctx.adjacency_for(&grids, f)?
            } else {
                adj_obv.clone()
            });
            tvals.push(grids.iter().map(|&g| bounds.target.normalize(truth.at(g, k))).collect());
        }
        prepared.push(PreparedBlock {
            features,
            adj_obv,
            adj_target,
            targets: tvals,
            labels,
        });
    }

    let mut model = GatModel::init(cfg.model, cfg.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &model.params())?;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut shuffle_rng = rng_for(cfg.seed, sampling::STREAM_SHUFFLE, 0);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for &bi in &order {
            let pb = &prepared[bi];
            let t = step % targets.len();
            step += 1;
            let lg = model.loss_and_grads(
                &pb.features[t],
                &pb.adj_obv,
                &pb.adj_target[t],
                &pb.targets[t],
                &pb.labels,
            )?;
            total += lg.loss;
            adam.step(&mut model.params_mut(), &lg.grads)?;
        }
        loss_trace.push(total / order.len() as f64);
    }

    Ok(TrainedModel {
        model,
        bounds,
        strategy: cfg.strategy.clone(),
        f_obv_mhz: cfg.f_obv_mhz,
        loss_trace,
        masks,
    })
}

/// Predictions for the free grids of one block, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrediction {
    pub block: BlockIndex,
    pub f_target_mhz: f64,
    pub grids: Vec<GridIndex>,
    pub rss_dbm: Vec<f64>,
}

pub fn predict(
    trained: &TrainedModel,
    scenario: &UrbanScenario,
    observed: &Observations,
    b: BlockIndex,
    f_target_mhz: f64,
) -> Result<BlockPrediction> {
    let ctx = GraphContext::new(scenario, trained.strategy.clone())?;
    predict_with(trained, &ctx, observed, b, f_target_mhz)
}

pub fn predict_with(
    trained: &TrainedModel,
    ctx: &GraphContext<'_>,
    observed: &Observations,
    b: BlockIndex,
    f_target_mhz: f64,
) -> Result<BlockPrediction> {
    let scenario = ctx.scenario;
    if ctx.strategy != trained.strategy {
        return Err(Error::invalid("strategy", "graph context was built for another strategy"));
    }
    if trained.model.in_dim() != FEATURE_DIM {
        return Err(Error::Shape(format!(
            "model expects {} features, not {FEATURE_DIM}",
            trained.model.in_dim()
        )));
    }
    scenario.frequency_index(f_target_mhz)?;
    if (observed.f_mhz - trained.f_obv_mhz).abs() > 1e-9 {
        return Err(Error::invalid(
            "observations",
            format!("observed at {} MHz, model trained on {} MHz", observed.f_mhz, trained.f_obv_mhz),
        ));
    }
    if observed.len() != scenario.grid_count() {
        return Err(Error::Shape("observations do not match the scenario grid".into()));
    }
    let grids = ctx.block_grids(b)?;
    if grids.is_empty() {
        return Ok(BlockPrediction {
            block: b,
            f_target_mhz,
            grids,
            rss_dbm: Vec::new(),
        });
    }
    let pos = positions(scenario, &grids);
    let obs = observed_at(scenario, &grids, observed);
    let x = assemble_features(
        &FeatureInput {
            position_m: &pos,
            observed_dbm: &obs,
            f_obv_mhz: trained.f_obv_mhz,
            f_target_mhz,
        },
        &trained.bounds,
    )?;
    let adj_obv = ctx.adjacency_for(&grids, trained.f_obv_mhz)?;
    let adj_target = if ctx.frequency_dependent() {
        ctx.adjacency_for(&grids, f_target_mhz)?
    } else {
        adj_obv.clone()
    };
    let out = trained.model.forward(&x, &adj_obv, &adj_target)?;
    Ok(BlockPrediction {
        block: b,
        f_target_mhz,
        grids,
        rss_dbm: out.iter().map(|&v| trained.bounds.target.denormalize(v)).collect(),
    })
}

/// Predicts every band in `targets` over `blocks` and splices the results
/// into one tensor. Grids outside `blocks` stay at 0 (buildings at NaN).
/// With `keep_observed`, observed grids at the observed band keep their
/// measured value.
pub fn multiband_splice(
    trained: &TrainedModel,
    scenario: &UrbanScenario,
    observed: &Observations,
    blocks: &[BlockIndex],
    targets: &[f64],
    keep_observed: bool,
) -> Result<RadiomapTensor> {
    let ctx = GraphContext::new(scenario, trained.strategy.clone())?;
    let mut out = RadiomapTensor::for_scenario_with(scenario, targets.to_vec());
    for (k, &f) in targets.iter().enumerate() {
        for &b in blocks {
            let p = predict_with(trained, &ctx, observed, b, f)?;
            for (g, v) in p.grids.iter().zip(&p.rss_dbm) {
                let lin = scenario.linear(*g);
                let value = match observed.get(lin) {
                    Some(o) if keep_observed && (f - observed.f_mhz).abs() <= 1e-9 => o,
                    _ => *v,
                };
                out.set(lin, k, value);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::propagation::{generate_ground_truth, GeneratorParams, PropagationParams};
    use crate::scenario::{OccupancyGrid, TransmitterSpec};

    /// 120 x 120 m, four 60 m blocks of 12 x 12 grids, two transmitters.
    pub(crate) fn small_world() -> (UrbanScenario, RadiomapTensor) {
        let mut occ = OccupancyGrid::free(24, 24);
        for r in 8..11 {
            for c in 4..9 {
                occ.set(r, c, true);
            }
        }
        for r in 15..20 {
            occ.set(r, 16, true);
        }
        let freqs = vec![1750.0, 3750.0, 5750.0];
        let tx = vec![
            TransmitterSpec {
                row: 3,
                col: 3,
                tx_power_dbm: vec![30.0; 3],
            },
            TransmitterSpec {
                row: 20,
                col: 20,
                tx_power_dbm: vec![30.0; 3],
            },
        ];
        let s = UrbanScenario::new(120.0, 120.0, 5.0, 60.0, occ, tx, freqs).unwrap();
        let t = generate_ground_truth(&s, &PropagationParams::default(), &GeneratorParams::default()).unwrap();
        (s, t)
    }

    pub(crate) fn quick_cfg(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            lr: 5e-3,
            sampling_rate: 0.2,
            strategy: EncodingStrategy::model_based(DepthParams::for_transmitters(2)),
            model: GatConfig {
                in_dim: FEATURE_DIM,
                hidden_dim: 8,
            },
            ..Default::default()
        }
    }
}
