//! Training run directories.
//!
//! ```text
//! config.toml         training configuration snapshot
//! loss.csv            epoch,mean_loss
//! model.bin           checkpoint (+ model.bin.json metadata)
//! normalization.json  scaling bounds, strategy and observed band
//! masks.csv           block,kind,row,col for every observation and label
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NormBounds, TrainedModel, TrainingConfig, TrainingMasks};
use crate::error::{Error, Result};
use crate::graph::EncodingStrategy;
use crate::nn::{config_hash, load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::scenario::{BlockIndex, GridIndex};

#[derive(Debug, Serialize, Deserialize)]
struct NormFile {
    f_obv_mhz: f64,
    bounds: NormBounds,
    strategy: EncodingStrategy,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn save_run(dir: impl AsRef<Path>, cfg: &TrainingConfig, trained: &TrainedModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let config = toml::to_string(cfg).map_err(|e| Error::invalid("config", e.to_string()))?;
    std::fs::write(dir.join("config.toml"), &config)?;

    let mut loss = String::from("epoch,mean_loss\n");
    for (e, l) in trained.loss_trace.iter().enumerate() {
        writeln!(loss, "{},{l}", e + 1).expect("write to string");
    }
    std::fs::write(dir.join("loss.csv"), loss)?;

    let meta = CheckpointMeta {
        config_hash: config_hash(&config),
        seed: cfg.seed,
        epoch: trained.loss_trace.len(),
        layer_dims: trained.model.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect(),
    };
    save_checkpoint(&trained.model, &meta, dir.join("model.bin"))?;

    let norm = NormFile {
        f_obv_mhz: trained.f_obv_mhz,
        bounds: trained.bounds,
        strategy: trained.strategy.clone(),
    };
    let json = serde_json::to_string_pretty(&norm).map_err(|e| Error::invalid("normalization", e.to_string()))?;
    std::fs::write(dir.join("normalization.json"), json + "\n")?;

    let mut masks = String::from("block,kind,row,col\n");
    for (kind, list) in [("observed", &trained.masks.observed), ("label", &trained.masks.labels)] {
        for (b, grids) in list {
            for g in grids {
                writeln!(masks, "{b},{kind},{},{}", g.row, g.col).expect("write to string");
            }
        }
    }
    std::fs::write(dir.join("masks.csv"), masks)?;
    Ok(())
}

fn parse_block(s: &str) -> Option<BlockIndex> {
    let (r, c) = s.split_once('_')?;
    Some(BlockIndex::new(r.parse().ok()?, c.parse().ok()?))
}

fn read_masks(path: &Path) -> Result<TrainingMasks> {
    let text = std::fs::read_to_string(path)?;
    let mut masks = TrainingMasks::default();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || parse_err(path, i + 1, format!("malformed row `{line}`"));
        if f.len() != 4 {
            return Err(bad());
        }
        let b = parse_block(f[0]).ok_or_else(bad)?;
        let g = GridIndex::new(f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?);
        let list = match f[1] {
            "observed" => &mut masks.observed,
            "label" => &mut masks.labels,
            _ => return Err(bad()),
        };
        match list.last_mut() {
            Some((lb, grids)) if *lb == b => grids.push(g),
            _ => list.push((b, vec![g])),
        }
    }
    Ok(masks)
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<(TrainingConfig, TrainedModel)> {
    let dir = dir.as_ref();
    let cfg_path = dir.join("config.toml");
    let cfg_text = std::fs::read_to_string(&cfg_path)?;
    let cfg: TrainingConfig = toml::from_str(&cfg_text).map_err(|e| parse_err(&cfg_path, 0, e.to_string()))?;

    let loss_path = dir.join("loss.csv");
    let mut loss_trace = Vec::new();
    for (i, line) in std::fs::read_to_string(&loss_path)?.lines().enumerate().skip(1) {
        let v = line
            .split_once(',')
            .and_then(|(_, l)| l.parse::<f64>().ok())
            .ok_or_else(|| parse_err(&loss_path, i + 1, "expected epoch,mean_loss"))?;
        loss_trace.push(v);
    }

    let (model, _) = load_checkpoint(dir.join("model.bin"))?;
    let norm_path = dir.join("normalization.json");
    let norm: NormFile = serde_json::from_str(&std::fs::read_to_string(&norm_path)?)
        .map_err(|e| parse_err(&norm_path, e.line(), e.to_string()))?;
    norm.bounds.validate()?;
    let masks = read_masks(&dir.join("masks.csv"))?;
    Ok((
        cfg,
        TrainedModel {
            model,
            bounds: norm.bounds,
            strategy: norm.strategy,
            f_obv_mhz: norm.f_obv_mhz,
            loss_trace,
            masks,
        },
    ))
}
