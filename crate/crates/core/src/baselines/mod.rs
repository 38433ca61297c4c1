mod halrtc;
mod idw;
mod kriging;

pub use halrtc::{halrtc, halrtc_with, objective, HalrtcParams, HalrtcResult, MaskedTensor};
pub use idw::{idw3d, IdwParams, Sample3D};
pub use kriging::{
    empirical_variogram, fit_trend, fit_variogram, kriging_fit, kriging_predict, kriging_weights,
    nearest_tx_distance_m, KrigingModel, KrigingSystem, SpatialSample, TrendPoint,
};
