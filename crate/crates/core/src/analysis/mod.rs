//! Measurables from tag streams: histograms, fits, rate curves, jitter.

mod fit;
pub mod histogram;
mod interarrival;
mod jitter;
mod rate;

pub use fit::{fit_ide_curve, IdeFit};
pub use histogram::{fwhm_fw1m, histogram_of, width_at_fraction, Histogram};
pub use interarrival::{fit_reset_time, interarrival_histogram, ResetFit};
pub use jitter::{compose_array_jitter, jitter_histogram, residuals, Reference};
pub use rate::{
    array_efficiency_vs_rate, efficiency_vs_rate, log_rates, mcr_3db, mean_interdetection_time,
    Normalization, RateCurve, RatePoint,
};
