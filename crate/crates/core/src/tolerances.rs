use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative and absolute tolerance of the adaptive integrator.
    pub ode_tol: f64,
    /// Relative change that stops quadrature node doubling.
    pub quad_tol: f64,
    /// Turning points need |V'(u±)| > simplicity_rel·(1 + max|V'| on the well).
    pub simplicity_rel: f64,
    /// Relative step for finite-difference gradients in (a, E, c).
    pub fd_h_rel: f64,
    /// Relative sup-norm tolerance for kernel residuals.
    pub kernel_tol: f64,
    /// |{T,M}| below this (relative to its scale) counts as degenerate.
    pub jacobian_degeneracy: f64,
    /// Fixed-point tolerance for the conjugator iteration.
    pub fp_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ode_tol: 1e-12,
            quad_tol: 1e-12,
            simplicity_rel: 1e-8,
            fd_h_rel: 1e-3,
            kernel_tol: 1e-6,
            jacobian_degeneracy: 1e-8,
            fp_tol: 1e-12,
        }
    }
}

impl Tolerances {
    /// Every tolerance multiplied by `factor`; the FD step is left alone.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ode_tol: self.ode_tol * factor,
            quad_tol: self.quad_tol * factor,
            simplicity_rel: self.simplicity_rel * factor,
            fd_h_rel: self.fd_h_rel,
            kernel_tol: self.kernel_tol * factor,
            jacobian_degeneracy: self.jacobian_degeneracy * factor,
            fp_tol: self.fp_tol * factor,
        }
    }
}
