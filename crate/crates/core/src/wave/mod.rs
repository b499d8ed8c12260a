//! Periodic orbits of `u'' = -V'(u; a, c)`: turning points, regularized
//! period integrals and the sampled profile.

pub mod cnoidal;
pub mod elliptic;

use crate::error::{Error, Result};
use crate::model::{Potential, WaveParams};
use crate::numerics::ode::{Dop853, OdeOptions};
use crate::numerics::poly::Poly;
use crate::numerics::quadrature::integrate_doubling;
use crate::tolerances::Tolerances;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

pub use cnoidal::{cnoidal_wave, CnoidalWave};
pub use elliptic::{complete_e, complete_k, jacobi_elliptic, EllipticModulus};

const QUAD_START: usize = 16;
const QUAD_MAX: usize = 8192;

/// Adjacent simple roots of `E = V(u)` bounding the selected well.
pub fn find_turning_points(params: &WaveParams, tol: &Tolerances) -> Result<(f64, f64)> {
    let orbit = Orbit::new(params, tol)?;
    Ok((orbit.u_minus, orbit.u_plus))
}

/// A bounded well of `E - V` with its quadrature-ready factorization
/// `E - V(u) = (u - u₋)(u₊ - u) g(u)`.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub params: WaveParams,
    pub potential: Potential,
    pub u_minus: f64,
    pub u_plus: f64,
    g: Poly,
}

impl Orbit {
    pub fn new(params: &WaveParams, tol: &Tolerances) -> Result<Self> {
        params.validate()?;
        let potential = params.potential();
        let gap = potential.energy_gap_poly();
        if gap.degree() < 2 {
            return Err(Error::NoPeriodicOrbit("E - V has fewer than two roots".into()));
        }
        let roots = gap.real_roots();
        let wells: Vec<(f64, f64)> = roots
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|&(lo, hi)| hi > lo && gap.eval(0.5 * (lo + hi)) > 0.0)
            .collect();
        let chosen: Vec<(f64, f64)> = match params.well {
            Some([lo, hi]) => wells.iter().copied().filter(|&(a, b)| a <= hi && b >= lo).collect(),
            None => wells.clone(),
        };
        let (u_minus, u_plus) = match chosen.len() {
            0 if wells.is_empty() => {
                return Err(Error::NoPeriodicOrbit(format!(
                    "E - V has no bounded positive interval (a = {}, E = {}, c = {})",
                    params.a, params.e, params.c
                )))
            }
            0 => {
                return Err(Error::NoPeriodicOrbit(format!(
                    "no well overlaps the hint {:?}; wells are {wells:?}",
                    params.well.unwrap()
                )))
            }
            1 => chosen[0],
            n => return Err(Error::AmbiguousWell { count: n }),
        };
        let slope_scale = (0..=32)
            .map(|i| potential.v(u_minus + (u_plus - u_minus) * i as f64 / 32.0, 1).abs())
            .fold(0.0f64, f64::max);
        let limit = tol.simplicity_rel * (1.0 + slope_scale);
        for u in [u_minus, u_plus] {
            let slope = potential.v(u, 1).abs();
            if slope <= limit {
                return Err(Error::DegenerateTurningPoint { u, slope, tol: limit });
            }
        }
        // gap = (u - u₋)(u - u₊) q  ⇒  g = -q
        let g = gap.deflate_quadratic(u_minus, u_plus).scale(-1.0);
        Ok(Self {
            params: params.clone(),
            potential,
            u_minus,
            u_plus,
            g,
        })
    }

    /// `∫ h(u) · 2 du / √(2(E - V))` over the well (once across, doubled), for
    /// each component of `h`, using `u = u₋ + (u₊ - u₋) sin²θ`.
    pub fn well_integrals<const K: usize, H>(&self, h: H, quad_tol: f64) -> Result<[f64; K]>
    where
        H: Fn(f64) -> [f64; K],
    {
        let du = self.u_plus - self.u_minus;
        let integrand = |theta: f64| {
            let s = theta.sin();
            let u = self.u_minus + du * s * s;
            let g = self.g.eval(u).max(f64::MIN_POSITIVE);
            let w = 4.0 / (2.0 * g).sqrt();
            h(u).map(|v| v * w)
        };
        integrate_doubling::<K, _>(0.0, FRAC_PI_2, integrand, quad_tol, QUAD_START, QUAD_MAX)
            .map(|(v, _)| v)
            .ok_or(Error::QuadratureNotConverged(quad_tol))
    }

    pub fn period(&self, quad_tol: f64) -> Result<f64> {
        Ok(self.well_integrals(|_| [1.0], quad_tol)?[0])
    }
}

/// Period `T = 2∫ du / √(2(E - V))` by regularized Gauss-Legendre quadrature.
pub fn compute_period(params: &WaveParams, tol: &Tolerances) -> Result<f64> {
    Orbit::new(params, tol)?.period(tol.quad_tol)
}

/// Uniformly sampled periodic profile with `u(0) = u₋`, `u'(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub params: WaveParams,
    pub u_minus: f64,
    pub u_plus: f64,
    pub period: f64,
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    /// `u'' = -V'(u)`, carried so the interpolant needs no potential.
    pub uxx: Vec<f64>,
}

impl WaveProfile {
    pub fn samples(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn potential(&self) -> Potential {
        self.params.potential()
    }

    /// Quintic Hermite interpolation of `(u, u_x, u_xx)` at `x` (taken mod T).
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let n = self.samples();
        let h = self.period / n as f64;
        let xr = x.rem_euclid(self.period);
        let j = ((xr / h).floor() as usize).min(n - 1);
        let t = (xr - self.grid[j]) / h;
        let (f0, d0, s0) = (self.u[j], self.ux[j] * h, self.uxx[j] * h * h);
        let (f1, d1, s1) = (self.u[j + 1], self.ux[j + 1] * h, self.uxx[j + 1] * h * h);
        let (p, dp, ddp) = quintic_hermite(t, [f0, d0, s0, f1, d1, s1]);
        [p, dp / h, ddp / (h * h)]
    }

    /// `sup |u_x²/2 - E + V(u)|` over the grid.
    pub fn energy_residual(&self) -> f64 {
        let pot = self.potential();
        self.u
            .iter()
            .zip(&self.ux)
            .map(|(u, ux)| (0.5 * ux * ux - pot.e + pot.v(*u, 0)).abs())
            .fold(0.0, f64::max)
    }

    pub fn periodicity_mismatch(&self) -> f64 {
        let n = self.samples();
        (self.u[n] - self.u[0]).abs() + (self.ux[n] - self.ux[0]).abs()
    }

    /// CSV with header `x,u,ux`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "u", "ux"])?;
        for i in 0..self.grid.len() {
            out.write_record([sci(self.grid[i]), sci(self.u[i]), sci(self.ux[i])])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Full-precision scientific notation used by every CSV writer.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Value, first and second derivative (in t) of the quintic Hermite
/// interpolant on [0, 1] with data `[f0, f0', f0'', f1, f1', f1'']`
/// (derivatives already scaled to the unit interval).
pub(crate) fn quintic_hermite(t: f64, d: [f64; 6]) -> (f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let b = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
    ];
    let db = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        1.5 * t2 - 4.0 * t3 + 2.5 * t4,
    ];
    let ddb = [
        -60.0 * t + 180.0 * t2 - 120.0 * t3,
        -36.0 * t + 96.0 * t2 - 60.0 * t3,
        1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
        60.0 * t - 180.0 * t2 + 120.0 * t3,
        -24.0 * t + 84.0 * t2 - 60.0 * t3,
        3.0 * t - 12.0 * t2 + 10.0 * t3,
    ];
    let dot = |w: &[f64; 6]| w.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
    (dot(&b), dot(&db), dot(&ddb))
}

/// Integrates `u'' = -V'(u)` from `(u₋, 0)` over one period and samples it
/// on `samples_per_period + 1` uniform points.
pub fn integrate_profile(params: &WaveParams, samples_per_period: usize, tol: &Tolerances) -> Result<WaveProfile> {
    if samples_per_period < 64 || samples_per_period % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "samples_per_period must be even and >= 64, got {samples_per_period}"
        )));
    }
    let orbit = Orbit::new(params, tol)?;
    let period = orbit.period(tol.quad_tol)?;
    profile_from_orbit(&orbit, period, samples_per_period, tol)
}

pub(crate) fn profile_from_orbit(orbit: &Orbit, period: f64, n: usize, tol: &Tolerances) -> Result<WaveProfile> {
    let pot = &orbit.potential;
    let h = period / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| if i == n { period } else { i as f64 * h }).collect();
    let mut u = Vec::with_capacity(n + 1);
    let mut ux = Vec::with_capacity(n + 1);
    let mut y = [orbit.u_minus, 0.0];
    u.push(y[0]);
    ux.push(y[1]);
    let mut solver = Dop853::new(OdeOptions::with_tol(tol.ode_tol));
    let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = -pot.v(y[0], 1);
    };
    for w in grid.windows(2) {
        solver.integrate(rhs, w[0], w[1], &mut y)?;
        u.push(y[0]);
        ux.push(y[1]);
    }
    let uxx = u.iter().map(|&v| -pot.v(v, 1)).collect();
    let profile = WaveProfile {
        params: orbit.params.clone(),
        u_minus: orbit.u_minus,
        u_plus: orbit.u_plus,
        period,
        grid,
        u,
        ux,
        uxx,
    };
    let mismatch = profile.periodicity_mismatch();
    let limit = 100.0 * tol.ode_tol * (1.0 + orbit.u_plus.abs().max(orbit.u_minus.abs()));
    if !(mismatch <= limit) {
        return Err(Error::PeriodicityViolation { mismatch, limit });
    }
    Ok(profile)
}
