//! The 4×4 first-order form of the transverse spectral problem, its period
//! map and the periodic Evans function `D(μ, k, λ) = det(M(μ, k) - λI)`.

use crate::error::{Error, Result};
use crate::model::Potential;
use crate::numerics::ode::{Dop853, OdeOptions};
use crate::numerics::poly::bisect;
use crate::tolerances::Tolerances;
use crate::wave::{sci, WaveProfile};
use nalgebra::{Matrix4, Matrix6};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub type CMatrix4 = Matrix4<Complex64>;
pub type CMatrix6 = Matrix6<Complex64>;

const RESCALE_AT: f64 = 1e100;
/// The integrator's relative tolerance is `ode_tol / (1 + |μ|)`, floored here.
const MIN_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub mu: Complex64,
    pub k: f64,
    pub lambda: Complex64,
}

/// Bottom row `(-σk² - f'''u_x² - f''u_xx, -2f''u_x - μ, -f' + c, 0)` at a profile state.
fn bottom_row(pot: &Potential, sigma_k2: f64, mu: Complex64, u: f64, ux: f64) -> [Complex64; 4] {
    let uxx = -pot.v(u, 1);
    let (f1, f2, f3) = (pot.f(u, 1), pot.f(u, 2), pot.f(u, 3));
    [
        Complex64::from(-sigma_k2 - f3 * ux * ux - f2 * uxx),
        Complex64::from(-2.0 * f2 * ux) - mu,
        Complex64::from(-f1 + pot.c),
        Complex64::from(0.0),
    ]
}

fn companion(row: [Complex64; 4]) -> CMatrix4 {
    let (o, z) = (Complex64::from(1.0), Complex64::from(0.0));
    CMatrix4::new(
        z, o, z, z,
        z, z, o, z,
        z, z, z, o,
        row[0], row[1], row[2], row[3],
    )
}

/// `H(x, μ, k)` with `u, u_x` from the profile interpolant.
pub fn coefficient_matrix(profile: &WaveProfile, mu: Complex64, k: f64, x: f64) -> CMatrix4 {
    let pot = profile.potential();
    let [u, ux, _] = profile.eval(x);
    companion(bottom_row(&pot, profile.params.sigma.value() * k * k, mu, u, ux))
}

/// Second compound (exterior square) of a 4×4 generator, on the basis
/// `e₀∧e₁, e₀∧e₂, e₀∧e₃, e₁∧e₂, e₁∧e₃, e₂∧e₃`.
pub fn compound_generator(h: &CMatrix4) -> CMatrix6 {
    const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let index = |i: usize, j: usize| PAIRS.iter().position(|&p| p == (i, j)).unwrap();
    let mut g = CMatrix6::zeros();
    for (col, &(i, j)) in PAIRS.iter().enumerate() {
        for r in 0..4 {
            // H e_i ∧ e_j
            if r != j {
                let (a, b, s) = if r < j { (r, j, 1.0) } else { (j, r, -1.0) };
                g[(index(a, b), col)] += h[(r, i)] * s;
            }
            // e_i ∧ H e_j
            if r != i {
                let (a, b, s) = if i < r { (i, r, 1.0) } else { (r, i, -1.0) };
                g[(index(a, b), col)] += h[(r, j)] * s;
            }
        }
    }
    g
}

/// Which linear flows ride along with the profile during one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    /// `Y' = H Y` (4×4).
    Forward,
    /// `Z' = H⁽²⁾ Z` (6×6).
    Compound,
    /// `Ψ' = -Ψ H` (4×4), so `Ψ = Y⁻¹`.
    Inverse,
}

impl Block {
    fn dim(self) -> usize {
        match self {
            Block::Compound => 6,
            _ => 4,
        }
    }
}

/// State: `[u, u_x]` followed by each block as re/im row-major arrays.
struct Flow<'a> {
    pot: &'a Potential,
    sigma_k2: f64,
    mu: Complex64,
    blocks: &'a [Block],
}

impl Flow<'_> {
    fn len(&self) -> usize {
        2 + self.blocks.iter().map(|b| 2 * b.dim() * b.dim()).sum::<usize>()
    }

    fn identity_state(&self, u: f64, ux: f64) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        y[0] = u;
        y[1] = ux;
        let mut off = 2;
        for b in self.blocks {
            let n = b.dim();
            for i in 0..n {
                y[off + i * n + i] = 1.0;
            }
            off += 2 * n * n;
        }
        y
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let (u, ux) = (y[0], y[1]);
        dy[0] = ux;
        dy[1] = -self.pot.v(u, 1);
        let row = bottom_row(self.pot, self.sigma_k2, self.mu, u, ux);
        let mut off = 2;
        for b in self.blocks {
            let n = b.dim();
            let nn = n * n;
            let (re, im) = y[off..off + 2 * nn].split_at(nn);
            let (dre, dim) = dy[off..off + 2 * nn].split_at_mut(nn);
            match b {
                Block::Forward => {
                    // rows 0..3 shift up; row 3 is the bottom row times Y
                    for c in 0..4 {
                        for r in 0..3 {
                            dre[r * 4 + c] = re[(r + 1) * 4 + c];
                            dim[r * 4 + c] = im[(r + 1) * 4 + c];
                        }
                        let mut acc = Complex64::from(0.0);
                        for (j, h) in row.iter().enumerate() {
                            acc += h * Complex64::new(re[j * 4 + c], im[j * 4 + c]);
                        }
                        dre[12 + c] = acc.re;
                        dim[12 + c] = acc.im;
                    }
                }
                Block::Inverse => {
                    // (-Ψ H)[r][c] = -Ψ[r][c-1] - Ψ[r][3] row[c]
                    for r in 0..4 {
                        let last = Complex64::new(re[r * 4 + 3], im[r * 4 + 3]);
                        for c in 0..4 {
                            let mut v = -last * row[c];
                            if c > 0 {
                                v -= Complex64::new(re[r * 4 + c - 1], im[r * 4 + c - 1]);
                            }
                            dre[r * 4 + c] = v.re;
                            dim[r * 4 + c] = v.im;
                        }
                    }
                }
                Block::Compound => {
                    let g = compound_generator(&companion(row));
                    for r in 0..6 {
                        for c in 0..6 {
                            let mut acc = Complex64::from(0.0);
                            for j in 0..6 {
                                acc += g[(r, j)] * Complex64::new(re[j * 6 + c], im[j * 6 + c]);
                            }
                            dre[r * 6 + c] = acc.re;
                            dim[r * 6 + c] = acc.im;
                        }
                    }
                }
            }
            off += 2 * nn;
        }
    }

    fn block4(&self, y: &[f64], which: usize) -> CMatrix4 {
        let off = self.offset(which);
        CMatrix4::from_fn(|r, c| Complex64::new(y[off + r * 4 + c], y[off + 16 + r * 4 + c]))
    }

    fn block6(&self, y: &[f64], which: usize) -> CMatrix6 {
        let off = self.offset(which);
        CMatrix6::from_fn(|r, c| Complex64::new(y[off + r * 6 + c], y[off + 36 + r * 6 + c]))
    }

    fn offset(&self, which: usize) -> usize {
        2 + self.blocks[..which].iter().map(|b| 2 * b.dim() * b.dim()).sum::<usize>()
    }
}

fn solver_for(mu: Complex64, tol: &Tolerances) -> Dop853 {
    let rtol = (tol.ode_tol / (1.0 + mu.norm())).max(MIN_RTOL);
    Dop853::new(OdeOptions::with_tol(rtol))
}

/// The period map, stored as `e^{log_scale} · matrix`, together with
/// `Σ log det` of the segment factors it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub matrix: CMatrix4,
    pub log_scale: f64,
    pub segments: usize,
    /// `Σ_i log det F_i` over the segment factors `F_i` (complex logarithm).
    pub log_det_factors: Complex64,
}

impl Monodromy {
    /// `det(e^{log_scale} M)` as the product of the segment-factor
    /// determinants. Each factor spans a short interval and is well
    /// conditioned, unlike the assembled product at large `|μ|`.
    pub fn determinant(&self) -> Complex64 {
        self.log_det_factors.exp()
    }

    /// `det(e^{log_scale} M)` from the assembled matrix (loses accuracy once
    /// the spread of Floquet multipliers approaches `1/ε`).
    pub fn assembled_determinant(&self) -> Complex64 {
        self.matrix.full_piv_lu().determinant() * (4.0 * self.log_scale).exp()
    }

    /// `e^{log_scale} M` when representable.
    pub fn scaled(&self) -> Result<CMatrix4> {
        let s = self.log_scale.exp();
        if !s.is_finite() {
            return Err(Error::ScaleOverflow(self.log_scale));
        }
        Ok(self.matrix * Complex64::from(s))
    }
}

pub fn segment_count(mu: Complex64, period: f64) -> usize {
    ((mu.norm().cbrt() * period / 5.0).ceil() as usize).max(1)
}

/// `Φ(x1)` for `Φ' = HΦ`, `Φ(x0) = I`, integrating the profile from its
/// state at `x0` (obtained by integrating from `(u₋, 0)`).
fn forward_factor(
    pot: &Potential,
    sigma_k2: f64,
    mu: Complex64,
    profile_state: &mut [f64; 2],
    x0: f64,
    x1: f64,
    solver: &mut Dop853,
) -> Result<CMatrix4> {
    let blocks = [Block::Forward];
    let flow = Flow { pot, sigma_k2, mu, blocks: &blocks };
    let mut y = flow.identity_state(profile_state[0], profile_state[1]);
    solver.integrate(|_, y: &[f64], d: &mut [f64]| flow.rhs(y, d), x0, x1, &mut y)?;
    profile_state.copy_from_slice(&y[..2]);
    Ok(flow.block4(&y, 0))
}

/// Period map `M(μ, k) = Φ(T)` with `Φ(0) = I`, assembled from
/// `⌈|μ|^{1/3} T / 5⌉` segment factors with whole-matrix rescaling.
pub fn monodromy(profile: &WaveProfile, mu: Complex64, k: f64, tol: &Tolerances) -> Result<Monodromy> {
    let segments = segment_count(mu, profile.period);
    monodromy_segments(profile, mu, k, tol, segments)
}

pub fn monodromy_segments(profile: &WaveProfile, mu: Complex64, k: f64, tol: &Tolerances, segments: usize) -> Result<Monodromy> {
    let pot = profile.potential();
    let sigma_k2 = profile.params.sigma.value() * k * k;
    let t = profile.period;
    let mut state = [profile.u_minus, 0.0];
    let mut solver = solver_for(mu, tol);
    let mut product = CMatrix4::identity();
    let mut log_scale = 0.0;
    let mut log_det = Complex64::from(0.0);
    for s in 0..segments {
        let x0 = t * s as f64 / segments as f64;
        let x1 = if s + 1 == segments { t } else { t * (s + 1) as f64 / segments as f64 };
        let f = forward_factor(&pot, sigma_k2, mu, &mut state, x0, x1, &mut solver)?;
        log_det += f.full_piv_lu().determinant().ln();
        product = f * product;
        let norm = product.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if norm > RESCALE_AT {
            product /= Complex64::from(norm);
            log_scale += norm.ln();
        }
    }
    if !log_scale.is_finite() || product.iter().any(|z| !z.is_finite()) {
        return Err(Error::ScaleOverflow(log_scale));
    }
    Ok(Monodromy {
        matrix: product,
        log_scale,
        segments,
        log_det_factors: log_det,
    })
}

/// `D` as `mantissa · e^{log_scale}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvansValue {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl EvansValue {
    /// The true determinant, or `None` when it is not representable.
    pub fn value(&self) -> Option<Complex64> {
        let s = self.log_scale.exp();
        let v = self.mantissa * s;
        (s.is_finite() && v.re.is_finite() && v.im.is_finite()).then_some(v)
    }

    /// `log |D|`.
    pub fn log_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.log_scale
    }

    /// Sign of `Re D`, or 0 below the floor `1e-300 · e^{log_scale}`.
    pub fn sign(&self) -> i8 {
        let re = self.mantissa.re;
        if re.abs() <= 1e-300 {
            0
        } else if re > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// `det(e^{s}M - λI) = e^{4s} det(M - λ e^{-s} I)`.
pub fn evans_from_monodromy(m: &Monodromy, lambda: Complex64) -> EvansValue {
    let shift = lambda * (-m.log_scale).exp();
    let a = m.matrix - CMatrix4::identity() * shift;
    EvansValue {
        mantissa: a.full_piv_lu().determinant(),
        log_scale: 4.0 * m.log_scale,
    }
}

pub fn evans(profile: &WaveProfile, mu: Complex64, k: f64, lambda: Complex64, tol: &Tolerances) -> Result<EvansValue> {
    Ok(evans_from_monodromy(&monodromy(profile, mu, k, tol)?, lambda))
}

/// Real `D(μ, k, 1)` for real `μ`; errors if the imaginary part is not negligible.
pub fn evans_real(profile: &WaveProfile, mu: f64, k: f64, tol: &Tolerances) -> Result<EvansValue> {
    let d = evans(profile, Complex64::from(mu), k, Complex64::from(1.0), tol)?;
    check_real(mu, &d)?;
    Ok(d)
}

fn check_real(mu: f64, d: &EvansValue) -> Result<()> {
    if d.mantissa.im.abs() > 1e-9 * d.mantissa.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::NonRealEvans {
            mu,
            re: d.mantissa.re,
            im: d.mantissa.im,
        });
    }
    Ok(())
}

/// Coefficients of `det(λI - M) = λ⁴ + aλ³ + bλ² + cλ + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharPoly {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl CharPoly {
    /// From the elementary symmetric functions: `a = -tr M`,
    /// `b = ((tr M)² - tr M²)/2`, `c = -tr Λ³M = -det M · tr M⁻¹`, `d = det M`.
    pub fn of(m: &CMatrix4) -> Self {
        let tr = m.trace();
        let tr2 = (m * m).trace();
        let d = m.full_piv_lu().determinant();
        let inv = m.try_inverse().unwrap_or_else(CMatrix4::zeros);
        Self {
            a: -tr,
            b: (tr * tr - tr2) * 0.5,
            c: -d * inv.trace(),
            d,
        }
    }

    pub fn eval(&self, lambda: Complex64) -> Complex64 {
        (((lambda + self.a) * lambda + self.b) * lambda + self.c) * lambda + self.d
    }
}

/// `D(μ, k, 1)` by the exterior-algebra route, for cross-checking:
/// `det(M - I) = 1 - tr M + tr Λ²M - tr Λ³M + det M` with `det M = 1` and
/// `tr Λ³M = tr M⁻¹`, where `Λ²M` and `M⁻¹` are integrated as their own flows.
pub fn evans_exterior(profile: &WaveProfile, mu: Complex64, k: f64, tol: &Tolerances) -> Result<Complex64> {
    let pot = profile.potential();
    let blocks = [Block::Forward, Block::Compound, Block::Inverse];
    let flow = Flow {
        pot: &pot,
        sigma_k2: profile.params.sigma.value() * k * k,
        mu,
        blocks: &blocks,
    };
    let mut y = flow.identity_state(profile.u_minus, 0.0);
    solver_for(mu, tol).integrate(|_, y: &[f64], d: &mut [f64]| flow.rhs(y, d), 0.0, profile.period, &mut y)?;
    let m = flow.block4(&y, 0);
    let z = flow.block6(&y, 1);
    let inv = flow.block4(&y, 2);
    Ok(Complex64::from(2.0) - m.trace() + z.trace() - inv.trace())
}

/// One evaluation of a real scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvansSample {
    pub mu: f64,
    pub k: f64,
    pub re_d: f64,
    pub im_d: f64,
    pub log_scale: f64,
    pub sign: i8,
}

/// A sign change of `D(·, k, 1)` refined by bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
    pub mu_star: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub k: f64,
    pub lambda: Complex64,
    pub samples: Vec<EvansSample>,
    pub roots: Vec<RootBracket>,
    /// A refined real root `μ* > 0` was found.
    pub unstable: bool,
}

pub const ROOT_WIDTH: f64 = 1e-6;

fn sample(profile: &WaveProfile, mu: f64, k: f64, lambda: Complex64, tol: &Tolerances) -> Result<EvansSample> {
    let d = evans(profile, Complex64::from(mu), k, lambda, tol)?;
    if lambda.im == 0.0 {
        check_real(mu, &d)?;
    }
    Ok(EvansSample {
        mu,
        k,
        re_d: d.mantissa.re,
        im_d: d.mantissa.im,
        log_scale: d.log_scale,
        sign: d.sign(),
    })
}

/// Evaluates `D(μ, k, λ)` on a sorted real grid (in parallel, output in grid
/// order), brackets sign changes of `Re D` and bisects each to width `≤ 1e-6`.
pub fn evans_scan(profile: &WaveProfile, mu_grid: &[f64], k: f64, lambda: Complex64, tol: &Tolerances) -> Result<ScanReport> {
    if mu_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("mu_grid must be strictly increasing".into()));
    }
    let samples: Vec<EvansSample> = mu_grid
        .par_iter()
        .map(|&mu| sample(profile, mu, k, lambda, tol))
        .collect::<Result<_>>()?;
    let brackets: Vec<(f64, f64)> = samples
        .windows(2)
        .filter(|w| w[0].sign * w[1].sign < 0)
        .map(|w| (w[0].mu, w[1].mu))
        .collect();
    let roots: Vec<RootBracket> = brackets
        .par_iter()
        .map(|&(lo, hi)| refine_root(profile, lo, hi, k, lambda, tol))
        .collect::<Result<_>>()?;
    let unstable = roots.iter().any(|r| r.mu_star > 0.0);
    Ok(ScanReport {
        k,
        lambda,
        samples,
        roots,
        unstable,
    })
}

fn refine_root(profile: &WaveProfile, mut lo: f64, mut hi: f64, k: f64, lambda: Complex64, tol: &Tolerances) -> Result<RootBracket> {
    let sgn = |mu: f64| sample(profile, mu, k, lambda, tol).map(|s| s.sign);
    let s_lo = sgn(lo)?;
    while hi - lo > ROOT_WIDTH {
        let mid = 0.5 * (lo + hi);
        let s = sgn(mid)?;
        if s == 0 {
            lo = mid;
            hi = mid;
            break;
        }
        if s == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // polish inside the final bracket on the real part itself
    let mu_star = if hi > lo {
        bisect(|mu| sample(profile, mu, k, lambda, tol).map(|s| s.re_d).unwrap_or(f64::NAN), lo, hi)
    } else {
        lo
    };
    Ok(RootBracket {
        lo,
        hi,
        mu_star,
        width: hi - lo,
    })
}

impl ScanReport {
    /// CSV with header `mu,k,re_D,im_D,log_scale,sign`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mu", "k", "re_D", "im_D", "log_scale", "sign"])?;
        for s in &self.samples {
            out.write_record([sci(s.mu), sci(s.k), sci(s.re_d), sci(s.im_d), sci(s.log_scale), s.sign.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
