//! Periodic traveling waves of generalized KdV equations and their
//! transverse stability under the generalized KP equation.

pub mod asymptotics;
pub mod conserved;
pub mod error;
pub mod evans;
pub mod kernel;
pub mod model;
pub mod numerics;
pub mod tolerances;
pub mod tracking;
pub mod wave;

pub use asymptotics::{
    high_freq_sign, low_freq_coefficient, orientation_index, verify_block_reduction, BlockReductionReport,
    HighFreqReport, IndexConclusion, IndexVerdict, LowFreqReport,
};
pub use conserved::{compute_invariants, gradients, jacobian_tm, kdv_jacobian_closed_form, GradientSet, InvariantSet};
pub use error::{Error, Result};
pub use evans::{coefficient_matrix, evans, evans_scan, monodromy, EvansValue, Monodromy, ScanReport};
pub use kernel::{kernel_basis, KernelBasis};
pub use model::{eval_f, eval_v, NonlinearitySpec, Potential, Sigma, WaveParams};
pub use tolerances::Tolerances;
pub use tracking::{solve_conjugator, triangularized_blocks, BlockSystem, Conjugator, GapMode, SolveOptions};
pub use wave::{compute_period, find_turning_points, integrate_profile, WaveProfile};
