//! Shared fixtures for the criterion benchmarks.

use onebit_core::channel::{optimal_pilots, simulate, QuantizedObservation};
use onebit_core::{GmmPrior, SystemModel};

/// Two-component scalar prior with a 100:1 variance spread, unit power.
pub fn heavy_tailed_prior() -> GmmPrior {
    GmmPrior::scalar(&[0.8, 0.2], &[0.1, 10.0]).expect("valid prior").normalized()
}

/// Scalar system with `m` equidistant-phase pilots at the given SNR in dB.
pub fn scalar_system(m: usize, snr_db: f64) -> SystemModel {
    SystemModel::new(optimal_pilots(m), 10f64.powf(-snr_db / 10.0), 1).expect("valid system")
}

/// A handful of simulated bit patterns for `system`.
pub fn sample_patterns(prior: &GmmPrior, system: &SystemModel, count: usize) -> Vec<QuantizedObservation> {
    simulate(prior, system, count, 11).expect("simulation").into_iter().map(|o| o.r).collect()
}
