//! Stationary solutions `u_x, u_a, u_E, φ` of `∂²ₓ L[u] v = 0` at `μ = 0, k = 0`,
//! the solution matrix `W(x, 0, 0)` and its increment over one period.
//!
//! `L[u] = -∂²ₓ - V''(u)`, so `L u_x = L u_E = 0`, `L u_a = -1`, `L φ = x`.

use crate::conserved::gradients;
use crate::error::{Error, Result};
use crate::model::Potential;
use crate::numerics::fd::differentiate_uniform;
use crate::numerics::ode::{Dop853, OdeOptions};
use crate::tolerances::Tolerances;
use crate::wave::{sci, WaveProfile};
use nalgebra::{Matrix4, Vector4};
use serde::Serialize;
use std::io::Write;

/// A sampled function with its first three derivatives: `[v, v', v'', v''']`.
pub type Jet = [Vec<f64>; 4];

/// `u_x, u_a, u_E` and the running integrals used by `φ` and by `W⁻¹e₄`.
#[derive(Debug, Clone)]
pub struct VariationalSolutions {
    pub grid: Vec<f64>,
    pub period: f64,
    pub u_minus: f64,
    pub u: Vec<f64>,
    pub ux: Jet,
    pub ua: Jet,
    pub ue: Jet,
    /// `∂u₋/∂a = u₋ / V'(u₋)`.
    pub du_minus_da: f64,
    /// `∂u₋/∂E = 1 / V'(u₋)`.
    pub du_minus_de: f64,
    /// `∫₀ˣ s u_E(s) ds`.
    pub int_s_ue: Vec<f64>,
    /// `∫₀ˣ s u_x(s) ds`.
    pub int_s_ux: Vec<f64>,
    /// `∫₀ˣ u`.
    pub int_u: Vec<f64>,
    /// `∫₀ˣ u_E`.
    pub int_ue: Vec<f64>,
    /// `∫₀ˣ ∫₀ˢ u_E`.
    pub int_int_ue: Vec<f64>,
    pub(crate) potential: Potential,
}

/// All four kernel functions.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub vars: VariationalSolutions,
    pub phi: Jet,
    /// `u_x u_E' - u_xx u_E`, constant and equal to 1 for the chosen initial data.
    pub wronskian: f64,
}

// state layout of the augmented integration
const U: usize = 0;
const UX: usize = 1;
const UA: usize = 2;
const UAX: usize = 3;
const UE: usize = 4;
const UEX: usize = 5;
const I_SUE: usize = 6;
const I_SUX: usize = 7;
const I_U: usize = 8;
const I_UE: usize = 9;
const II_UE: usize = 10;
const DIM: usize = 11;

/// Integrates the profile together with the variational equations
/// `u_a'' = -V''u_a + 1`, `u_E'' = -V''u_E` and the running moments.
pub fn variational_solutions(profile: &WaveProfile, tol: &Tolerances) -> Result<VariationalSolutions> {
    let pot = profile.potential();
    let um = profile.u_minus;
    let vp = pot.v(um, 1);
    let du_minus_da = um / vp;
    let du_minus_de = 1.0 / vp;
    let n = profile.samples();
    let mut y = [0.0; DIM];
    y[U] = um;
    y[UA] = du_minus_da;
    y[UE] = du_minus_de;
    let mut states = Vec::with_capacity(n + 1);
    states.push(y);
    let rhs = |x: f64, y: &[f64], d: &mut [f64]| {
        let v2 = pot.v(y[U], 2);
        d[U] = y[UX];
        d[UX] = -pot.v(y[U], 1);
        d[UA] = y[UAX];
        d[UAX] = -v2 * y[UA] + 1.0;
        d[UE] = y[UEX];
        d[UEX] = -v2 * y[UE];
        d[I_SUE] = x * y[UE];
        d[I_SUX] = x * y[UX];
        d[I_U] = y[U];
        d[I_UE] = y[UE];
        d[II_UE] = y[I_UE];
    };
    let mut solver = Dop853::new(OdeOptions::with_tol(tol.ode_tol));
    for w in profile.grid.windows(2) {
        solver.integrate(rhs, w[0], w[1], &mut y)?;
        states.push(y);
    }
    let col = |k: usize| states.iter().map(|s| s[k]).collect::<Vec<f64>>();
    let u = col(U);
    let v2: Vec<f64> = u.iter().map(|&v| pot.v(v, 2)).collect();
    let v3: Vec<f64> = u.iter().map(|&v| pot.v(v, 3)).collect();
    let uxv = col(UX);
    let uxx: Vec<f64> = u.iter().map(|&v| -pot.v(v, 1)).collect();
    let ux_jet = [
        uxv.clone(),
        uxx.clone(),
        (0..=n).map(|i| -v2[i] * uxv[i]).collect(),
        (0..=n).map(|i| -v3[i] * uxv[i] * uxv[i] - v2[i] * uxx[i]).collect(),
    ];
    let jet = |v: Vec<f64>, dv: Vec<f64>, forcing: f64| -> Jet {
        let d2 = (0..=n).map(|i| -v2[i] * v[i] + forcing).collect();
        let d3 = (0..=n).map(|i| -v3[i] * uxv[i] * v[i] - v2[i] * dv[i]).collect();
        [v, dv, d2, d3]
    };
    Ok(VariationalSolutions {
        grid: profile.grid.clone(),
        period: profile.period,
        u_minus: um,
        ua: jet(col(UA), col(UAX), 1.0),
        ue: jet(col(UE), col(UEX), 0.0),
        ux: ux_jet,
        u,
        du_minus_da,
        du_minus_de,
        int_s_ue: col(I_SUE),
        int_s_ux: col(I_SUX),
        int_u: col(I_U),
        int_ue: col(I_UE),
        int_int_ue: col(II_UE),
        potential: pot,
    })
}

/// `φ = (∫₀ˣ s u_E) u_x - (∫₀ˣ s u_x) u_E` with derivatives
/// `φ' = I_E u_xx - I_x u_E'`, `φ'' = -x W + I_E u_xxx - I_x u_E''`,
/// `φ''' = -W + I_E u_xxxx - I_x u_E'''`, `W` the Wronskian of `(u_x, u_E)`.
pub fn phi_solution(vars: VariationalSolutions) -> Result<KernelBasis> {
    let n = vars.grid.len();
    let wr: Vec<f64> = (0..n)
        .map(|i| vars.ux[0][i] * vars.ue[1][i] - vars.ux[1][i] * vars.ue[0][i])
        .collect();
    let wronskian = wr[0];
    let drift = wr.iter().map(|w| (w - wronskian).abs()).fold(0.0, f64::max);
    if wronskian.abs() < 1e-8 || drift > 1e-6 * wronskian.abs() {
        return Err(Error::WronskianDegenerate(wronskian));
    }
    let (ie, ix) = (&vars.int_s_ue, &vars.int_s_ux);
    let phi_d = |d: usize, extra: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..n)
            .map(|i| ie[i] * vars.ux[d][i] - ix[i] * vars.ue[d][i] + extra(i))
            .collect()
    };
    let phi = [
        phi_d(0, &|_| 0.0),
        phi_d(1, &|_| 0.0),
        phi_d(2, &|i| -vars.grid[i] * wronskian),
        phi_d(3, &|_| -wronskian),
    ];
    Ok(KernelBasis { vars, phi, wronskian })
}

/// Convenience: variational solutions followed by `φ`.
pub fn kernel_basis(profile: &WaveProfile, tol: &Tolerances) -> Result<KernelBasis> {
    phi_solution(variational_solutions(profile, tol)?)
}

impl KernelBasis {
    fn jets(&self) -> [&Jet; 4] {
        [&self.vars.ux, &self.vars.ua, &self.vars.ue, &self.phi]
    }

    /// `W(x_i, 0, 0)` at grid index `i`.
    pub fn w_at(&self, i: usize) -> Matrix4<f64> {
        let jets = self.jets();
        Matrix4::from_fn(|r, c| jets[c][r][i])
    }

    /// `sup |L v - r|` over the grid relative to `1 + sup|v|`, with `v''` taken
    /// from a 9-point finite difference of the sampled `v'` so the check does
    /// not reuse the ODE right-hand side.
    pub fn residuals(&self) -> KernelResiduals {
        let v = &self.vars;
        let h = v.period / (v.grid.len() - 1) as f64;
        let v2: Vec<f64> = v.u.iter().map(|&u| v.potential.v(u, 2)).collect();
        let check = |jet: &Jet, rhs: &dyn Fn(usize) -> f64| {
            let d2 = differentiate_uniform(&jet[1], h, 9);
            let scale = 1.0 + jet[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (0..jet[0].len())
                .map(|i| (-d2[i] - v2[i] * jet[0][i] - rhs(i)).abs())
                .fold(0.0, f64::max)
                / scale
        };
        KernelResiduals {
            ux: check(&v.ux, &|_| 0.0),
            ue: check(&v.ue, &|_| 0.0),
            ua: check(&v.ua, &|_| -1.0),
            phi: check(&self.phi, &|i| v.grid[i]),
        }
    }

    /// Writes `(x, u_x, u_a, u_E, φ)` and the pointwise residuals.
    pub fn write_debug_csv<W: Write>(&self, w: W) -> Result<()> {
        let v = &self.vars;
        let h = v.period / (v.grid.len() - 1) as f64;
        let v2: Vec<f64> = v.u.iter().map(|&u| v.potential.v(u, 2)).collect();
        let res = |jet: &Jet, rhs: &dyn Fn(usize) -> f64| -> Vec<f64> {
            let d2 = differentiate_uniform(&jet[1], h, 9);
            (0..jet[0].len()).map(|i| -d2[i] - v2[i] * jet[0][i] - rhs(i)).collect()
        };
        let r = [
            res(&v.ux, &|_| 0.0),
            res(&v.ua, &|_| -1.0),
            res(&v.ue, &|_| 0.0),
            res(&self.phi, &|i| v.grid[i]),
        ];
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "u_x", "u_a", "u_E", "phi", "res_ux", "res_ua", "res_uE", "res_phi"])?;
        for i in 0..v.grid.len() {
            out.write_record(
                [v.grid[i], v.ux[0][i], v.ua[0][i], v.ue[0][i], self.phi[0][i], r[0][i], r[1][i], r[2][i], r[3][i]]
                    .map(sci),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelResiduals {
    pub ux: f64,
    pub ua: f64,
    pub ue: f64,
    pub phi: f64,
}

impl KernelResiduals {
    pub fn max(&self) -> f64 {
        self.ux.max(self.ua).max(self.ue).max(self.phi)
    }
}

/// `W(x, 0, 0)` on the grid with its endpoint values and increment.
#[derive(Debug, Clone)]
pub struct WMatrix {
    pub values: Vec<Matrix4<f64>>,
    pub w0: Matrix4<f64>,
    pub wt: Matrix4<f64>,
    pub delta: Matrix4<f64>,
}

pub fn build_w(basis: &KernelBasis) -> WMatrix {
    let n = basis.vars.grid.len();
    let values: Vec<Matrix4<f64>> = (0..n).map(|i| basis.w_at(i)).collect();
    let w0 = values[0];
    let wt = values[n - 1];
    WMatrix {
        values,
        w0,
        wt,
        delta: wt - w0,
    }
}

/// Closed-form `W(0, 0, 0)` from the turning-point data.
pub fn w0_display(basis: &KernelBasis) -> Matrix4<f64> {
    let v = &basis.vars;
    let vp = v.potential.v(v.u_minus, 1);
    let vpp = v.potential.v(v.u_minus, 2);
    let (da, de) = (v.du_minus_da, v.du_minus_de);
    Matrix4::new(
        0.0, da, de, 0.0,
        -vp, 0.0, 0.0, 0.0,
        0.0, 1.0 - vpp * da, -vpp * de, 0.0,
        vpp * vp, 0.0, 0.0, -1.0,
    )
}

/// Comparison of the measured `δW(0,0) = W(T) - W(0)` with its closed form.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaWCheck {
    pub measured: [[f64; 4]; 4],
    pub display: [[f64; 4]; 4],
    /// Entries (2,4) and (4,4) with the `T_E ∫x u_x` terms dropped.
    pub display_without_te_terms: [[f64; 4]; 4],
    /// Max over entries of `|measured - display| / (scale of δW)`.
    pub max_rel_error: f64,
    pub max_rel_error_without_te_terms: f64,
    pub t_a: f64,
    pub t_e: f64,
}

/// Builds the closed form of `δW(0,0)` from `T_a, T_E` (finite differences of
/// the period, independent of the kernel integration) and compares.
///
/// Because `u_E'(T) = u_E'(0) + V'(u₋) T_E`, the second and fourth entries of
/// the `φ` column pick up `∓ V'(u₋)(V''(u₋)) T_E ∫₀ᵀ x u_x` in addition to the
/// `∫₀ᵀ x u_E` terms.
pub fn check_delta_w(profile: &WaveProfile, basis: &KernelBasis, w: &WMatrix, tol: &Tolerances) -> Result<DeltaWCheck> {
    let g = gradients(&profile.params, tol.fd_h_rel, tol)?;
    let (t_a, t_e) = (g.d_t[0], g.d_t[1]);
    let v = &basis.vars;
    let n = v.grid.len() - 1;
    let vp = v.potential.v(v.u_minus, 1);
    let vpp = v.potential.v(v.u_minus, 2);
    let de = v.du_minus_de;
    let x_ux = v.int_s_ux[n];
    let x_ue = v.int_s_ue[n];
    let t = v.period;
    let reduced = [
        [0.0, 0.0, 0.0, -de * x_ux],
        [0.0, vp * t_a, vp * t_e, -vp * x_ue],
        [0.0, 0.0, 0.0, -t + vpp * de * x_ux],
        [0.0, -vp * vpp * t_a, -vp * vpp * t_e, vpp * vp * x_ue],
    ];
    let mut display = reduced;
    display[1][3] -= vp * t_e * x_ux;
    display[3][3] += vpp * vp * t_e * x_ux;
    let measured: [[f64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| w.delta[(r, c)]));
    let scale = measured.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = |d: &[[f64; 4]; 4]| {
        (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| (measured[r][c] - d[r][c]).abs())
            .fold(0.0, f64::max)
            / scale
    };
    Ok(DeltaWCheck {
        max_rel_error: err(&display),
        max_rel_error_without_te_terms: err(&reduced),
        measured,
        display,
        display_without_te_terms: reduced,
        t_a,
        t_e,
    })
}

/// Residuals of the explicit inverse column `W(x)⁻¹ e₄ = (-∫∫u_E, -x, ∫u, -1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InverseColumnReport {
    /// `sup_x |W(x) v(x) - e₄|`.
    pub sup_residual: f64,
    /// `sup_x |v(x) - LU solve of W(x) y = e₄|`.
    pub lu_difference: f64,
    /// `sup_x |u_ax u_E - u_a u_Ex - ∫₀ˣ u_E|`.
    pub first_identity: f64,
    /// `sup_x |u_a u_Exx - u_axx u_E + u_E|`.
    pub second_identity: f64,
    /// First component of the claimed column at `x = T`.
    pub a0_at_period: f64,
}

/// `(-∫₀ˣ∫₀ˢ u_E, -x, ∫₀ˣ u, -1)` at grid index `i`.
pub fn claimed_inverse_column(basis: &KernelBasis, i: usize) -> Vector4<f64> {
    let v = &basis.vars;
    Vector4::new(-v.int_int_ue[i], -v.grid[i], v.int_u[i], -1.0)
}

pub fn verify_inverse_column(w: &WMatrix, basis: &KernelBasis) -> InverseColumnReport {
    let v = &basis.vars;
    let e4 = Vector4::new(0.0, 0.0, 0.0, 1.0);
    let mut sup_residual = 0.0f64;
    let mut lu_difference = 0.0f64;
    let mut first_identity = 0.0f64;
    let mut second_identity = 0.0f64;
    for (i, wi) in w.values.iter().enumerate() {
        let claimed = claimed_inverse_column(basis, i);
        sup_residual = sup_residual.max((wi * claimed - e4).amax());
        if let Some(direct) = wi.full_piv_lu().solve(&e4) {
            lu_difference = lu_difference.max((direct - claimed).amax());
        }
        first_identity = first_identity.max((v.ua[1][i] * v.ue[0][i] - v.ua[0][i] * v.ue[1][i] - v.int_ue[i]).abs());
        second_identity = second_identity.max((v.ua[0][i] * v.ue[2][i] - v.ua[2][i] * v.ue[0][i] + v.ue[0][i]).abs());
    }
    InverseColumnReport {
        sup_residual,
        lu_difference,
        first_identity,
        second_identity,
        a0_at_period: -v.int_int_ue[v.grid.len() - 1],
    }
}
