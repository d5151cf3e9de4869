//! Spectral, saturation and photon-correlation fitting.

mod composite;
mod g2;
mod lsq;
mod saturation;
pub mod synth;

pub use composite::{
    fano_lineshape, fit_composite_spectrum, fit_composite_with, gaussian, CompositeFitResult, CompositeGuess,
    CompositeParams, FANO_Q_LORENTZ, PARAM_NAMES,
};
pub use g2::{
    g2_background_correct, g2_histogram, read_timestamps, signal_to_total, write_timestamps, CoincidenceHistogram,
    G2Correction, DIP_SEARCH_BINS, DIP_SMOOTHING_BINS,
};
pub use lsq::{least_squares, LsqOutcome, SolverOptions};
pub use saturation::{
    fit_saturation, fit_saturation_two_stage, read_power_series, saturation_model, write_power_series,
    SaturationFitResult, SaturationOptions,
};
