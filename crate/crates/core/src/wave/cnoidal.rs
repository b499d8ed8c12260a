//! Closed-form KdV cnoidal wave `u(x) = u₀ + 12k²κ² cn²(κx + K(k), k)`.
//!
//! The phase shift by K(k) starts the profile at its minimum, so it shares
//! the normalization `u(0) = u₋` of [`integrate_profile`](super::integrate_profile).

use super::elliptic::{complete_k, jacobi_elliptic, EllipticModulus};
use super::WaveProfile;
use crate::error::{Error, Result};
use crate::model::{NonlinearitySpec, Sigma, WaveParams};

#[derive(Debug, Clone)]
pub struct CnoidalWave {
    pub profile: WaveProfile,
    /// `(a, E, c)` recovered from the closed form, with `f(u) = u²/2`.
    pub params: WaveParams,
}

/// Samples the cnoidal wave on `samples + 1` uniform points of one period
/// `2K(k)/κ` and recovers `(a, E, c)`.
///
/// The speed is `c = 8k²κ² - 4κ² + u₀`; `a` and `E` solve the first integral
/// `u_x²/2 = E + a u + (c/2)u² - u³/6` at the two turning points.
pub fn cnoidal_wave(u0: f64, kappa: f64, m: EllipticModulus, sigma: Sigma, samples: usize) -> Result<CnoidalWave> {
    let k = m.k();
    if k == 0.0 {
        return Err(Error::ModulusOutOfRange(k));
    }
    if !(kappa > 0.0 && kappa.is_finite() && u0.is_finite()) {
        return Err(Error::InvalidInput(format!("kappa must be positive and u0 finite, got kappa = {kappa}")));
    }
    if samples < 2 || samples % 2 != 0 {
        return Err(Error::InvalidInput("cnoidal samples must be even".into()));
    }
    let k2 = k * k;
    let amp = 12.0 * k2 * kappa * kappa;
    let c = 8.0 * k2 * kappa * kappa - 4.0 * kappa * kappa + u0;
    let (u_minus, u_plus) = (u0, u0 + amp);
    let big_f = |u: f64| u * u * u / 6.0;
    // E + a u = F(u) - (c/2) u² at u₋ and u₊
    let r = |u: f64| big_f(u) - 0.5 * c * u * u;
    let a = (r(u_plus) - r(u_minus)) / (u_plus - u_minus);
    let e = r(u_minus) - a * u_minus;
    let params = WaveParams::new(a, e, c, NonlinearitySpec::kdv(), sigma)?;

    let kk = complete_k(m);
    let period = 2.0 * kk / kappa;
    let h = period / samples as f64;
    let grid: Vec<f64> = (0..=samples).map(|i| if i == samples { period } else { i as f64 * h }).collect();
    let mut u = Vec::with_capacity(samples + 1);
    let mut ux = Vec::with_capacity(samples + 1);
    for &x in &grid {
        let (sn, cn, dn) = jacobi_elliptic(kappa * x + kk, m);
        u.push(u0 + amp * cn * cn);
        ux.push(-2.0 * amp * kappa * cn * sn * dn);
    }
    let pot = params.potential();
    let uxx = u.iter().map(|&v| -pot.v(v, 1)).collect();
    Ok(CnoidalWave {
        profile: WaveProfile {
            params: params.clone(),
            u_minus,
            u_plus,
            period,
            grid,
            u,
            ux,
            uxx,
        },
        params,
    })
}
