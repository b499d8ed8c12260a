//! Shared fixtures for the criterion benches.

use transverse_core::{NonlinearitySpec, Sigma, WaveParams};

/// The KdV test wave `a = 0, E = -0.05, c = 1`.
pub fn kdv_wave() -> WaveParams {
    WaveParams::new(0.0, -0.05, 1.0, NonlinearitySpec::kdv(), Sigma::Plus).expect("valid parameters")
}
