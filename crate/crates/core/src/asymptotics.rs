//! High- and low-frequency limits of `D(μ, k, 1)` and the orientation index
//! `σ · {T, M}_{a,E}` built from them.

use crate::conserved::{compute_invariants, gradients};
use crate::error::{Error, Result};
use crate::evans::{evans_real, CMatrix4};
use crate::model::Potential;
use crate::tolerances::Tolerances;
use crate::tracking::{BlockSystem, GapMode};
use crate::wave::{sci, WaveProfile};
use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

/// Largest `μ` accepted by [`high_freq_sign`].
pub const HIGH_FREQ_MU_CEILING: f64 = 200.0;
pub const DEFAULT_MU_PROBES: [f64; 4] = [25.0, 50.0, 100.0, 200.0];
pub const DEFAULT_K_LADDER: [f64; 5] = [0.04, 0.057, 0.08, 0.113, 0.16];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighFreqProbe {
    pub mu: f64,
    pub sign: i8,
    pub log_abs_d: f64,
    /// `log|D| - (|μ|^{1/3} T + log(k² T / μ))`; advisory only.
    pub magnitude_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighFreqReport {
    pub k: f64,
    pub probes: Vec<HighFreqProbe>,
    /// First probe of the trailing run of equal signs.
    pub onset_mu: f64,
    pub verdict: i8,
}

impl HighFreqReport {
    /// CSV with header `mu,sign,log_abs_D`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mu", "sign", "log_abs_D"])?;
        for p in &self.probes {
            out.write_record([sci(p.mu), p.sign.to_string(), sci(p.log_abs_d)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sign of `D(μ, k, 1)` along increasing positive `μ`; conclusive when the
/// last three probes agree.
pub fn high_freq_sign(profile: &WaveProfile, k: f64, mu_list: &[f64], tol: &Tolerances) -> Result<HighFreqReport> {
    if k == 0.0 || !k.is_finite() {
        return Err(Error::Precondition("the high-frequency limit needs k ≠ 0".into()));
    }
    if mu_list.len() < 3 {
        return Err(Error::Precondition("at least three μ probes are needed".into()));
    }
    if mu_list[0] <= 0.0 || mu_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("μ probes must be positive and increasing".into()));
    }
    let mu_max = *mu_list.last().unwrap();
    if mu_max > HIGH_FREQ_MU_CEILING {
        return Err(Error::Precondition(format!("μ probes must not exceed {HIGH_FREQ_MU_CEILING}")));
    }
    let t = profile.period;
    let probes: Vec<HighFreqProbe> = mu_list
        .par_iter()
        .map(|&mu| {
            let d = evans_real(profile, mu, k, tol)?;
            let model = mu.cbrt() * t + (k * k * t / mu).ln();
            Ok(HighFreqProbe {
                mu,
                sign: d.sign(),
                log_abs_d: d.log_abs(),
                magnitude_residual: d.log_abs() - model,
            })
        })
        .collect::<Result<_>>()?;
    let last = probes.last().unwrap().sign;
    let n = probes.len();
    if last == 0 || probes[n - 3..].iter().any(|p| p.sign != last) {
        return Err(Error::Inconclusive { mu_max });
    }
    let start = probes.iter().rposition(|p| p.sign != last).map_or(0, |i| i + 1);
    Ok(HighFreqReport {
        k,
        onset_mu: probes[start].mu,
        probes,
        verdict: last,
    })
}

/// `A₁ = -2f''u_x`, `A₂ = -f' + c`, `A₁,ₓ = -2f'''u_x² - 2f''u_xx` at a profile state.
fn coefficients(pot: &Potential, u: f64, ux: f64) -> [f64; 3] {
    let uxx = -pot.v(u, 1);
    let (f1, f2, f3) = (pot.f(u, 1), pot.f(u, 2), pot.f(u, 3));
    [-2.0 * f2 * ux, -f1 + pot.c, -2.0 * f3 * ux * ux - 2.0 * f2 * uxx]
}

fn lam() -> Complex64 {
    Complex64::new(0.5, 0.5 * 3f64.sqrt())
}

/// The matrix diagonalizing the principal part `H₀` (bottom row `(0, -1, 0, 0)`).
pub fn q_matrix() -> CMatrix4 {
    let (l, ls) = (lam(), lam().conj());
    let (o, z) = (Complex64::from(1.0), Complex64::from(0.0));
    CMatrix4::new(
        -o, -o, -o, o,
        o, -l, -ls, z,
        -o, ls, l, z,
        o, o, o, z,
    )
}

pub fn principal_part() -> CMatrix4 {
    let mut h = CMatrix4::zeros();
    for i in 0..3 {
        h[(i, i + 1)] = Complex64::from(1.0);
    }
    h[(3, 1)] = Complex64::from(-1.0);
    h
}

/// `diag(-1, λ, λ*, 0)`.
pub fn lambda_diag() -> CMatrix4 {
    CMatrix4::from_diagonal(&nalgebra::Vector4::new(
        Complex64::from(-1.0),
        lam(),
        lam().conj(),
        Complex64::from(0.0),
    ))
}

/// Pieces of the reduction at one point, for coefficient values `(A₁, A₂, A₁,ₓ)`.
struct Reduction {
    b_tilde: CMatrix4,
    /// First-order `S = I + ε e₄ ℓᵀ`.
    s1: CMatrix4,
    /// `S = I + ε e₄ ℓᵀ + ε² e₄ ℓ₂ᵀ`.
    s2: CMatrix4,
    chi: f64,
    /// Lower row `(A₁ - A₂)ε - χ, (-λA₁ + λ*A₂)ε - χ, (-λ*A₁ + λA₂)ε - χ` as displayed.
    display_row: [Complex64; 3],
}

fn reduction(a: [f64; 3], eps: f64, sigma_k2: f64) -> Reduction {
    let [a1, a2, a1x] = a;
    let (l, ls) = (lam(), lam().conj());
    let chi = 0.5 * a1x * eps - sigma_k2 * eps * eps;
    let mut b = CMatrix4::zeros();
    b[(3, 0)] = Complex64::from(chi);
    b[(3, 1)] = Complex64::from(a1 * eps);
    b[(3, 2)] = Complex64::from(a2 * eps);
    let q = q_matrix();
    let q_inv = q.try_inverse().unwrap();
    let b_tilde = q_inv * b * q;
    let eigs = [Complex64::from(-1.0), l, ls];
    let s = [
        Complex64::from(a1 - a2),
        -l * a1 + ls * a2,
        -ls * a1 + l * a2,
    ];
    let ell: [Complex64; 3] = std::array::from_fn(|j| (s[j] - 0.5 * a1x) / eigs[j]);
    let ell2: [Complex64; 3] =
        std::array::from_fn(|j| (sigma_k2 + 0.5 * a1x * ell[j] + a1 * (s[j] - 0.5 * a1x)) / eigs[j]);
    let mut s1 = CMatrix4::identity();
    let mut s2 = CMatrix4::identity();
    for j in 0..3 {
        s1[(3, j)] += ell[j] * eps;
        s2[(3, j)] += ell[j] * eps + ell2[j] * eps * eps;
    }
    let display_row = std::array::from_fn(|j| s[j] * eps - chi);
    Reduction {
        b_tilde,
        s1,
        s2,
        chi,
        display_row,
    }
}

/// Inverse of `I + e₄ rᵀ` with `r₄ = 0`.
fn s_inverse(s: &CMatrix4) -> CMatrix4 {
    let mut inv = CMatrix4::identity();
    for j in 0..3 {
        inv[(3, j)] = -s[(3, j)];
    }
    inv
}

fn lower_left_norm(m: &CMatrix4) -> f64 {
    (0..3).map(|j| m[(3, j)].norm()).fold(0.0, f64::max)
}

fn upper_left_norm(m: &CMatrix4) -> f64 {
    let mut s = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            s = s.max(m[(i, j)].norm());
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockReductionReport {
    pub mu: f64,
    pub k: f64,
    pub eps: f64,
    /// `max |Q⁻¹H₀Q - diag(-1, λ, λ*, 0)|`.
    pub q_diag_error: f64,
    /// `max |B̃| over the upper-left 3×3 block / (C ε)`.
    pub upper_left_ratio: f64,
    /// `max |B̃_{i4} - χ/3|`, `i < 4`, and `|B̃_{44} - χ|`.
    pub last_column_error: f64,
    /// Distance of the lower row of `B̃` from its displayed form.
    pub lower_row_error: f64,
    /// `sup |lower-left of S⁻¹(Λ + B̃)S|` with the first-order `S`.
    pub lower_left_first_order: f64,
    /// Same with the second-order `S`.
    pub lower_left: f64,
    /// `lower_left / (C³ ε³)`.
    pub lower_left_ratio: f64,
    /// `sup |(4,4) entry - ½A₁,ₓε - ε²(½A₁A₁,ₓ - σk²)|`.
    pub corner_error: f64,
    /// `corner_error / (C³ ε^{5/2})`.
    pub corner_ratio: f64,
    pub avg_a1x: f64,
    pub avg_a1_a1x: f64,
    /// `C = 1 + max(|A₁|, |A₂|, |A₁,ₓ|, k²)` over the profile.
    pub coefficient_scale: f64,
}

pub const STRUCTURE_FACTOR: f64 = 10.0;

/// Checks each displayed step of the high-frequency block reduction on the
/// profile grid, with `(A₁, A₂, A₁,ₓ)` taken from the profile as `O(1)`
/// functions and `ε = μ^{-2/3}`.
pub fn verify_block_reduction(profile: &WaveProfile, mu: f64, k: f64) -> Result<BlockReductionReport> {
    if !(mu >= 25.0) {
        return Err(Error::Precondition("block reduction needs μ ≥ 25".into()));
    }
    let eps = mu.powf(-2.0 / 3.0);
    let sk2 = profile.params.sigma.value() * k * k;
    let pot = profile.potential();
    let q = q_matrix();
    let q_diag_error = (q.try_inverse().unwrap() * principal_part() * q - lambda_diag())
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let lambda = lambda_diag();
    let n = profile.samples();
    let coeffs: Vec<[f64; 3]> = (0..n).map(|i| coefficients(&pot, profile.u[i], profile.ux[i])).collect();
    let scale = 1.0 + coeffs.iter().flatten().map(|v| v.abs()).fold(k * k, f64::max);

    let mut rep = BlockReductionReport {
        mu,
        k,
        eps,
        q_diag_error,
        upper_left_ratio: 0.0,
        last_column_error: 0.0,
        lower_row_error: 0.0,
        lower_left_first_order: 0.0,
        lower_left: 0.0,
        lower_left_ratio: 0.0,
        corner_error: 0.0,
        corner_ratio: 0.0,
        avg_a1x: 0.0,
        avg_a1_a1x: 0.0,
        coefficient_scale: scale,
    };
    for a in &coeffs {
        let r = reduction(*a, eps, sk2);
        let bt = &r.b_tilde;
        rep.upper_left_ratio = rep.upper_left_ratio.max(upper_left_norm(bt) / (scale * eps));
        for i in 0..3 {
            rep.last_column_error = rep.last_column_error.max((bt[(i, 3)] - r.chi / 3.0).norm());
            rep.lower_row_error = rep.lower_row_error.max((bt[(3, i)] - r.display_row[i]).norm());
        }
        rep.last_column_error = rep.last_column_error.max((bt[(3, 3)] - r.chi).norm());
        let full = lambda + bt;
        let c1 = s_inverse(&r.s1) * full * r.s1;
        let c2 = s_inverse(&r.s2) * full * r.s2;
        rep.lower_left_first_order = rep.lower_left_first_order.max(lower_left_norm(&c1));
        rep.lower_left = rep.lower_left.max(lower_left_norm(&c2));
        let [a1, _, a1x] = *a;
        let corner = 0.5 * a1x * eps + eps * eps * (0.5 * a1 * a1x - sk2);
        rep.corner_error = rep.corner_error.max((c2[(3, 3)] - corner).norm());
    }
    rep.lower_left_ratio = rep.lower_left / (scale.powi(3) * eps.powi(3));
    rep.corner_ratio = rep.corner_error / (scale.powi(3) * eps.powf(2.5));
    let h = profile.period / n as f64;
    rep.avg_a1x = h * coeffs.iter().map(|a| a[2]).sum::<f64>();
    rep.avg_a1_a1x = h * coeffs.iter().map(|a| a[0] * a[2]).sum::<f64>();

    let checks = [
        ("upper-left block of B̃ beyond O(ε)", rep.upper_left_ratio),
        ("lower-left block of S⁻¹(Λ + B̃)S beyond O(ε³)", rep.lower_left_ratio),
        ("(4,4) entry beyond O(ε^{5/2})", rep.corner_ratio),
    ];
    for (what, ratio) in checks {
        if !(ratio <= STRUCTURE_FACTOR) {
            return Err(Error::StructureViolation {
                what: what.into(),
                ratio,
            });
        }
    }
    Ok(rep)
}

/// Log-log slope in `μ` of the lower-left block norm between `μ` and `2μ`,
/// for the second-order and first-order `S`.
pub fn block_order_slopes(profile: &WaveProfile, mu: f64, k: f64) -> Result<(f64, f64)> {
    let a = verify_block_reduction(profile, mu, k)?;
    let b = verify_block_reduction(profile, 2.0 * mu, k)?;
    let slope = |x: f64, y: f64| (y / x).ln() / 2f64.ln();
    Ok((
        slope(a.lower_left, b.lower_left),
        slope(a.lower_left_first_order, b.lower_left_first_order),
    ))
}

/// The spectral system in `x̃ = μ^{1/3}x` after the `Q` and second-order `S`
/// changes of variables, split as a 3 + 1 block system for the tracking
/// solver. The coefficients here are the exactly rescaled ones: `A₁` and
/// `A₁,ₓ` carry the factors `ε^{1/2}` and `ε` of derivatives in `x̃`.
pub fn reduced_block_system(profile: &WaveProfile, mu: f64, k: f64) -> Result<BlockSystem> {
    if !(mu >= 25.0) {
        return Err(Error::Precondition("block reduction needs μ ≥ 25".into()));
    }
    let eps = mu.powf(-2.0 / 3.0);
    let stretch = mu.cbrt();
    let sk2 = profile.params.sigma.value() * k * k;
    let prof = Arc::new(profile.clone());
    let pot = Arc::new(profile.potential());
    let lambda = lambda_diag();
    let at = {
        let (prof, pot) = (prof.clone(), pot.clone());
        move |xt: f64| {
            let [u, ux, _] = prof.eval(xt / stretch);
            let [a1, a2, a1x] = coefficients(&pot, u, ux);
            reduction([eps.sqrt() * a1, a2, eps * a1x], eps, sk2)
        }
    };
    // A(x̃) = Λ + S⁻¹B̃S - S⁻¹S', with S' by a fourth-order central difference
    let h = 1e-3;
    let full = move |xt: f64| -> CMatrix4 {
        let r = at(xt);
        let s2 = |x: f64| at(x).s2;
        let ds = (s2(xt - 2.0 * h) - s2(xt - h) * Complex64::from(8.0) + s2(xt + h) * Complex64::from(8.0) - s2(xt + 2.0 * h))
            / Complex64::from(12.0 * h);
        let inv = s_inverse(&r.s2);
        lambda + inv * r.b_tilde * r.s2 - inv * ds
    };
    let full = Arc::new(full);
    let block = |r0: usize, c0: usize, rows: usize, cols: usize| {
        let full = full.clone();
        Arc::new(move |x: f64| {
            let m = full(x);
            DMatrix::from_fn(rows, cols, |i, j| m[(r0 + i, c0 + j)])
        })
    };
    let lower = block(3, 0, 1, 3);
    let delta = {
        let lower = lower.clone();
        Arc::new(move |x: f64| lower(x).iter().fold(0.0f64, |m, z| m.max(z.norm())))
    };
    let theta = {
        let lower = lower.clone();
        Arc::new(move |x: f64| {
            let l = lower(x);
            let d = l.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            if d > 0.0 {
                l / Complex64::from(d)
            } else {
                l
            }
        })
    };
    Ok(BlockSystem {
        period: stretch * profile.period,
        n1: 3,
        n2: 1,
        m1: block(0, 0, 3, 3),
        m2: block(3, 3, 1, 1),
        n: block(0, 3, 3, 1),
        theta,
        delta,
        eta: Arc::new(|_| 0.25),
        gap_mode: GapMode::Dichotomy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowFreqReport {
    pub k_samples: Vec<f64>,
    pub d_values: Vec<f64>,
    pub fitted_c4: f64,
    pub fitted_c6: f64,
    /// `-(PT - M²){T, M}_{a,E} σ²`, with `σ² = 1`.
    pub predicted_c4: f64,
    pub relative_error: f64,
    /// RMS of `D - c₄k⁴ - c₆k⁶` relative to RMS of `D`.
    pub fit_residual: f64,
    pub jensen_gap: f64,
    pub jacobian: f64,
}

impl LowFreqReport {
    /// CSV with header `k,D`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "D"])?;
        for (k, d) in self.k_samples.iter().zip(&self.d_values) {
            out.write_record([sci(*k), sci(*d)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Least squares `D ≈ c₄k⁴ + c₆k⁶` with columns scaled by `k_max`.
pub fn fit_k4_k6(ks: &[f64], ds: &[f64]) -> Result<(f64, f64, f64)> {
    if ks.len() < 4 || ks.len() != ds.len() {
        return Err(Error::FitIllConditioned(f64::INFINITY));
    }
    let kmax = ks.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    if kmax == 0.0 {
        return Err(Error::FitIllConditioned(f64::INFINITY));
    }
    let cols: Vec<[f64; 2]> = ks.iter().map(|k| [(k / kmax).powi(4), (k / kmax).powi(6)]).collect();
    let mut ata = Matrix2::<f64>::zeros();
    let mut atb = Vector2::<f64>::zeros();
    for (c, d) in cols.iter().zip(ds) {
        for i in 0..2 {
            atb[i] += c[i] * d;
            for j in 0..2 {
                ata[(i, j)] += c[i] * c[j];
            }
        }
    }
    let sv = ata.singular_values();
    let cond = (sv.max() / sv.min()).sqrt();
    if !(cond < 1e8) {
        return Err(Error::FitIllConditioned(cond));
    }
    let x = ata.lu().solve(&atb).ok_or(Error::FitIllConditioned(cond))?;
    let resid: f64 = cols.iter().zip(ds).map(|(c, d)| (d - x[0] * c[0] - x[1] * c[1]).powi(2)).sum();
    let norm: f64 = ds.iter().map(|d| d * d).sum();
    Ok((x[0] / kmax.powi(4), x[1] / kmax.powi(6), (resid / norm.max(f64::MIN_POSITIVE)).sqrt()))
}

/// `D(0, k, 1)` on a small-`k` ladder fitted against the predicted `k⁴` coefficient.
pub fn low_freq_coefficient(profile: &WaveProfile, k_samples: &[f64], tol: &Tolerances) -> Result<LowFreqReport> {
    let d_values: Vec<f64> = k_samples
        .par_iter()
        .map(|&k| {
            let d = evans_real(profile, 0.0, k, tol)?;
            d.value().map(|v| v.re).ok_or(Error::ScaleOverflow(d.log_scale))
        })
        .collect::<Result<_>>()?;
    let (c4, c6, fit_residual) = fit_k4_k6(k_samples, &d_values)?;
    let params = &profile.params;
    let inv = compute_invariants(params, tol)?;
    let jacobian = gradients(params, tol.fd_h_rel, tol)?.jacobian_tm();
    let sigma = params.sigma.value();
    let predicted_c4 = -inv.jensen_gap() * jacobian * sigma * sigma;
    Ok(LowFreqReport {
        k_samples: k_samples.to_vec(),
        d_values,
        fitted_c4: c4,
        fitted_c6: c6,
        predicted_c4,
        relative_error: (c4 - predicted_c4).abs() / predicted_c4.abs(),
        fit_residual,
        jensen_gap: inv.jensen_gap(),
        jacobian,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexConclusion {
    UnstableDetected,
    IndexInconclusive,
    DegenerateJacobian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexVerdict {
    pub jacobian: f64,
    /// `|T_a M_E| + |T_E M_a|`, the size the degeneracy test is relative to.
    pub jacobian_scale: f64,
    pub sigma: i8,
    /// Sign of `σ{T, M}_{a,E}`, absent when degenerate.
    pub product_sign: Option<i8>,
    pub conclusion: IndexConclusion,
}

/// `σ{T, M}_{a,E} > 0` detects transverse instability; the test is one-sided.
pub fn orientation_index(profile: &WaveProfile, tol: &Tolerances) -> Result<IndexVerdict> {
    let g = gradients(&profile.params, tol.fd_h_rel, tol)?;
    let jacobian = g.jacobian_tm();
    let jacobian_scale = (g.d_t[0] * g.d_m[1]).abs() + (g.d_t[1] * g.d_m[0]).abs();
    let sigma = profile.params.sigma.value();
    let (product_sign, conclusion) = if jacobian.abs() <= tol.jacobian_degeneracy * jacobian_scale {
        (None, IndexConclusion::DegenerateJacobian)
    } else if sigma * jacobian > 0.0 {
        (Some(1), IndexConclusion::UnstableDetected)
    } else {
        (Some(-1), IndexConclusion::IndexInconclusive)
    };
    Ok(IndexVerdict {
        jacobian,
        jacobian_scale,
        sigma: sigma as i8,
        product_sign,
        conclusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evans::{evans, evans_scan};
    use crate::model::{NonlinearitySpec, Sigma, WaveParams};
    use crate::tracking::{solve_conjugator, triangularized_blocks, SolveOptions};
    use crate::wave::integrate_profile;

    fn profile(params: WaveParams) -> WaveProfile {
        integrate_profile(&params, 256, &Tolerances::default()).unwrap()
    }

    fn kdv(sigma: Sigma) -> WaveProfile {
        profile(WaveParams::new(0.0, -0.05, 1.0, NonlinearitySpec::kdv(), sigma).unwrap())
    }

    fn dnoidal(sigma: Sigma) -> WaveProfile {
        profile(WaveParams::new(0.0, -0.5, 1.0, NonlinearitySpec::mkdv(), sigma).unwrap().with_well(0.5, 2.0))
    }

    fn cnoidal_mkdv(sigma: Sigma) -> WaveProfile {
        profile(WaveParams::new(0.0, 0.5, 1.0, NonlinearitySpec::mkdv(), sigma).unwrap())
    }

    #[test]
    fn q_diagonalizes_principal_part() {
        let q = q_matrix();
        let d = q.try_inverse().unwrap() * principal_part() * q - lambda_diag();
        assert!(d.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn high_frequency_sign_follows_sigma() {
        let tol = Tolerances::default();
        for sigma in [Sigma::Plus, Sigma::Minus] {
            let rep = high_freq_sign(&kdv(sigma), 0.5, &DEFAULT_MU_PROBES, &tol).unwrap();
            assert_eq!(rep.verdict as f64, sigma.value());
            assert!(rep.probes.iter().filter(|p| p.mu >= rep.onset_mu).all(|p| p.sign == rep.verdict));
        }
        let err = high_freq_sign(&kdv(Sigma::Plus), 0.0, &DEFAULT_MU_PROBES, &tol).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        assert!(high_freq_sign(&kdv(Sigma::Plus), 0.5, &[25.0, 50.0, 400.0], &tol).is_err());
    }

    #[test]
    fn block_reduction_structure() {
        let p = kdv(Sigma::Plus);
        let rep = verify_block_reduction(&p, 400.0, 0.5).unwrap();
        assert!(rep.q_diag_error < 1e-14);
        assert!(rep.last_column_error < 1e-14 && rep.lower_row_error < 1e-14);
        assert!(rep.avg_a1x.abs() < 1e-10 && rep.avg_a1_a1x.abs() < 1e-10, "{rep:?}");
        let (second, first) = block_order_slopes(&p, 400.0, 0.5).unwrap();
        assert!((second + 2.0).abs() < 0.4, "slope {second}");
        assert!((first + 4.0 / 3.0).abs() < 0.3, "slope {first}");
        assert!(matches!(verify_block_reduction(&p, 10.0, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn reduced_system_factorizes_the_evans_function() {
        let tol = Tolerances::default();
        for sigma in [Sigma::Plus, Sigma::Minus] {
            let p = kdv(sigma);
            let (mu, k) = (100.0, 0.5);
            let sys = reduced_block_system(&p, mu, k).unwrap();
            let opts = SolveOptions {
                cells: 512,
                ..SolveOptions::default()
            };
            let conj = solve_conjugator(&sys, &opts).unwrap();
            assert!(conj.norm_bound < 10.0 * mu.powf(-1.0), "{}", conj.norm_bound);
            let tri = triangularized_blocks(&sys, &conj, 1e-9).unwrap();
            // neutral block: exp(∫ M̃₂) - 1 ≈ -σk²T/μ
            let n = conj.grid.len() - 1;
            let h = sys.period / n as f64;
            let integral: f64 = (0..n).map(|j| tri.m2_tilde(j as f64 * h)[(0, 0)].re).sum::<f64>() * h;
            let neutral = integral.exp_m1();
            let predicted = -sigma.value() * k * k * p.period / mu;
            assert!((neutral - predicted).abs() < 0.1 * predicted.abs(), "{neutral} vs {predicted}");
            let d = evans(&p, Complex64::from(mu), k, Complex64::from(1.0), &tol).unwrap();
            assert_eq!(d.sign() as f64, sigma.value());
        }
    }

    #[test]
    fn low_frequency_matches_prediction() {
        let tol = Tolerances::default();
        let plus = low_freq_coefficient(&kdv(Sigma::Plus), &DEFAULT_K_LADDER, &tol).unwrap();
        assert!(plus.relative_error < 5e-3, "{plus:?}");
        assert!(plus.predicted_c4 < 0.0);
        let minus = low_freq_coefficient(&kdv(Sigma::Minus), &DEFAULT_K_LADDER, &tol).unwrap();
        assert_eq!(plus.predicted_c4, minus.predicted_c4);
        // the k⁶ term carries σ³, so the fits agree only to the fit residual
        let fit_tol = 10.0 * plus.fit_residual.max(minus.fit_residual);
        assert!((plus.fitted_c4 - minus.fitted_c4).abs() < fit_tol * plus.fitted_c4.abs());
        assert!(plus.fitted_c6 * minus.fitted_c6 < 0.0);
        let mut buf = Vec::new();
        plus.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn fit_guards() {
        assert!(matches!(fit_k4_k6(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]), Err(Error::FitIllConditioned(_))));
        assert!(matches!(fit_k4_k6(&[0.1; 5], &[1.0; 5]), Err(Error::FitIllConditioned(_))));
        let ks = [0.1, 0.2, 0.3, 0.4];
        let ds: Vec<f64> = ks.iter().map(|k: &f64| 2.0 * k.powi(4) - 3.0 * k.powi(6)).collect();
        let (c4, c6, r) = fit_k4_k6(&ks, &ds).unwrap();
        assert!((c4 - 2.0).abs() < 1e-10 && (c6 + 3.0).abs() < 1e-8 && r < 1e-12);
    }

    #[test]
    fn index_verdicts() {
        let tol = Tolerances::default();
        let cases = [
            (kdv(Sigma::Plus), IndexConclusion::UnstableDetected),
            (kdv(Sigma::Minus), IndexConclusion::IndexInconclusive),
            (dnoidal(Sigma::Plus), IndexConclusion::UnstableDetected),
            (cnoidal_mkdv(Sigma::Minus), IndexConclusion::UnstableDetected),
            (cnoidal_mkdv(Sigma::Plus), IndexConclusion::IndexInconclusive),
        ];
        for (p, expect) in cases {
            assert_eq!(orientation_index(&p, &tol).unwrap().conclusion, expect);
        }
    }

    #[test]
    fn unstable_index_implies_bracketed_root() {
        let tol = Tolerances::default();
        let p = cnoidal_mkdv(Sigma::Minus);
        assert_eq!(orientation_index(&p, &tol).unwrap().conclusion, IndexConclusion::UnstableDetected);
        let grid: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
        let rep = evans_scan(&p, &grid, 0.1, Complex64::from(1.0), &tol).unwrap();
        assert!(rep.unstable && rep.roots[0].width <= 1e-6);
    }
}
