//! Metrics, rendering and experiment sweeps.

mod experiment;
mod metrics;
mod render;

pub use experiment::{
    evaluate_prediction, predict_area, run_experiment, Area, CellResult, ExperimentPlan, ExperimentReport,
    GatEncoding, Method,
};
pub use metrics::{histogram, rmse_area, rmse_block, BlockRmse, HistogramBin};
pub use render::{radiomap_ppm, render_radiomap, Palette};
