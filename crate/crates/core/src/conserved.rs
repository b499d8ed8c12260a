//! Period, mass, momentum and Hamiltonian as functions of `(a, E, c)`,
//! their gradients, and the Jacobian `{T, M}_{a,E}`.

use crate::error::{Error, Result};
use crate::model::WaveParams;
use crate::tolerances::Tolerances;
use crate::wave::{sci, Orbit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSet {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

impl InvariantSet {
    /// `P T - M²`, positive for every nonconstant wave.
    pub fn jensen_gap(&self) -> f64 {
        self.p * self.t - self.m * self.m
    }

    fn to_array(self) -> [f64; 4] {
        [self.t, self.m, self.p, self.h]
    }
}

/// Gradients in the order `(∂a, ∂E, ∂c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    #[serde(rename = "dT")]
    pub d_t: [f64; 3],
    #[serde(rename = "dM")]
    pub d_m: [f64; 3],
    #[serde(rename = "dP")]
    pub d_p: [f64; 3],
    #[serde(rename = "dH")]
    pub d_h: [f64; 3],
}

impl GradientSet {
    /// `T_a M_E - T_E M_a`.
    pub fn jacobian_tm(&self) -> f64 {
        self.d_t[0] * self.d_m[1] - self.d_t[1] * self.d_m[0]
    }

    /// `|E∇T + a∇M + (c/2)∇P + ∇H|` divided by the same sum taken in absolute values.
    pub fn identity_residual(&self, params: &WaveParams) -> f64 {
        let (e, a, hc) = (params.e, params.a, 0.5 * params.c);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..3 {
            let terms = [e * self.d_t[i], a * self.d_m[i], hc * self.d_p[i], self.d_h[i]];
            num = num.hypot(terms.iter().sum::<f64>());
            den = den.hypot(terms.iter().map(|t| t.abs()).sum::<f64>());
        }
        num / den.max(f64::MIN_POSITIVE)
    }
}

fn invariants_on(orbit: &Orbit, quad_tol: f64) -> Result<InvariantSet> {
    let pot = &orbit.potential;
    let e = pot.e;
    let [t, m, p, h] = orbit.well_integrals(
        |u| [1.0, u, u * u, e - pot.v(u, 0) - pot.big_f(u)],
        quad_tol,
    )?;
    Ok(InvariantSet { t, m, p, h })
}

/// `T, M, P, H` by the regularized quadrature used for the period.
pub fn compute_invariants(params: &WaveParams, tol: &Tolerances) -> Result<InvariantSet> {
    invariants_on(&Orbit::new(params, tol)?, tol.quad_tol)
}

/// Central differences with one Richardson step (`h` and `h/2`) in each of
/// `a, E, c`, with `h = h_rel (1 + |param|)`. Stencil points stay on the
/// well of the base wave.
pub fn gradients(params: &WaveParams, h_rel: f64, tol: &Tolerances) -> Result<GradientSet> {
    let base = Orbit::new(params, tol)?;
    let anchored = params.with_well(base.u_minus, base.u_plus);
    let names = ["a", "E", "c"];
    let center = [params.a, params.e, params.c];
    let mut cols = [[0.0; 4]; 3];
    for (i, col) in cols.iter_mut().enumerate() {
        let step = h_rel * (1.0 + center[i].abs());
        let eval = |dx: f64| -> Result<[f64; 4]> {
            let mut p = center;
            p[i] += dx;
            let q = anchored.with_aec(p[0], p[1], p[2]);
            compute_invariants(&q, tol)
                .map(InvariantSet::to_array)
                .map_err(|e| Error::StencilLeftRegion {
                    param: names[i],
                    step: dx,
                    source: Box::new(e),
                })
        };
        let central = |h: f64| -> Result<[f64; 4]> {
            let (plus, minus) = (eval(h)?, eval(-h)?);
            Ok(std::array::from_fn(|k| (plus[k] - minus[k]) / (2.0 * h)))
        };
        let d1 = central(step)?;
        let d2 = central(0.5 * step)?;
        *col = std::array::from_fn(|k| (4.0 * d2[k] - d1[k]) / 3.0);
    }
    let pick = |k: usize| [cols[0][k], cols[1][k], cols[2][k]];
    Ok(GradientSet {
        d_t: pick(0),
        d_m: pick(1),
        d_p: pick(2),
        d_h: pick(3),
    })
}

/// `{T, M}_{a,E}` from finite-difference gradients at the default step.
pub fn jacobian_tm(params: &WaveParams, tol: &Tolerances) -> Result<f64> {
    Ok(gradients(params, tol.fd_h_rel, tol)?.jacobian_tm())
}

/// Closed-form `{T, M}_{a,E}` for a quadratic nonlinearity (cubic `V`):
/// `3 lc(V) · (-T² V'(M/T)) / (12 disc(E - V))`, with the discriminant
/// normalized as `lc⁴ Π (r_i - r_j)²`.
///
/// The factor `3 lc(V)` is 1 for `f = u²`; for `f = βu²/2` it is `β/2`.
pub fn kdv_jacobian_closed_form(params: &WaveParams, tol: &Tolerances) -> Result<f64> {
    let pot = params.potential();
    if pot.v_poly().degree() != 3 {
        return Err(Error::NotKdV);
    }
    let inv = compute_invariants(params, tol)?;
    let disc = pot.energy_gap_poly().discriminant();
    let lc = pot.v_poly().leading();
    let mean = inv.m / inv.t;
    Ok(3.0 * lc * (-inv.t * inv.t * pot.v(mean, 1)) / (12.0 * disc))
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub c: f64,
    #[serde(flatten)]
    pub invariants: InvariantSet,
    pub jacobian_tm: f64,
}

/// Invariants and `{T, M}_{a,E}` at every parameter point, in input order.
pub fn sweep(points: &[WaveParams], tol: &Tolerances) -> Vec<Result<SweepRow>> {
    points
        .par_iter()
        .map(|p| {
            let invariants = compute_invariants(p, tol)?;
            let jacobian_tm = jacobian_tm(p, tol)?;
            Ok(SweepRow {
                a: p.a,
                e: p.e,
                c: p.c,
                invariants,
                jacobian_tm,
            })
        })
        .collect()
}

/// CSV with header `a,E,c,T,M,P,H,jacobian_TM`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["a", "E", "c", "T", "M", "P", "H", "jacobian_TM"])?;
    for r in rows {
        let i = r.invariants;
        out.write_record([r.a, r.e, r.c, i.t, i.m, i.p, i.h, r.jacobian_tm].map(sci))?;
    }
    out.flush()?;
    Ok(())
}
