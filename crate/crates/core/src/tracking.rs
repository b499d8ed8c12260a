//! Periodic block-triangularization: for `A = [[M₁, N], [δΘ, M₂]]` find a
//! periodic `Φ` so that `S = [[I, 0], [Φ, I]]` takes `A` to block upper
//! triangular form.
//!
//! `Φ` solves the Riccati equation `Φ' = M₂Φ - ΦM₁ + δΘ - ΦNΦ`. Each
//! fixed-point sweep freezes the quadratic term at the previous iterate and
//! solves the resulting linear periodic Sylvester problem by (multiple)
//! shooting on the affine period map.

use crate::error::{Error, Result};
use crate::numerics::ode::{Dop853, OdeOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type CMat = DMatrix<Complex64>;
pub type MatFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How the spectral separation of `M₁` and `M₂` is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `min spec Re M₁ - max spec Re M₂ ≥ η`, with `Re A = (A + A*)/2`.
    Ordered,
    /// `|Re(ν₁ - ν₂)| ≥ η` for all eigenvalues `ν₁` of `M₁`, `ν₂` of `M₂`.
    /// Enough for the periodic Sylvester problem to be uniquely solvable.
    Dichotomy,
}

#[derive(Clone)]
pub struct BlockSystem {
    pub period: f64,
    pub n1: usize,
    pub n2: usize,
    pub m1: MatFn,
    pub m2: MatFn,
    /// `n₁ × n₂`
    pub n: MatFn,
    /// `n₂ × n₁`
    pub theta: MatFn,
    pub delta: ScalarFn,
    pub eta: ScalarFn,
    pub gap_mode: GapMode,
}

impl std::fmt::Debug for BlockSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockSystem")
            .field("period", &self.period)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("gap_mode", &self.gap_mode)
            .finish_non_exhaustive()
    }
}

fn constant_fn(m: CMat) -> MatFn {
    Arc::new(move |_| m.clone())
}

impl BlockSystem {
    /// Constant blocks with the gap taken from the spectra.
    pub fn constant(period: f64, m1: CMat, m2: CMat, n: CMat, theta: CMat, delta: f64) -> Result<Self> {
        let (n1, n2) = (m1.nrows(), m2.nrows());
        if !m1.is_square() || !m2.is_square() || n.shape() != (n1, n2) || theta.shape() != (n2, n1) {
            return Err(Error::InvalidInput("block shapes do not fit together".into()));
        }
        let eta = ordered_gap(&m1, &m2);
        Ok(Self {
            period,
            n1,
            n2,
            m1: constant_fn(m1),
            m2: constant_fn(m2),
            n: constant_fn(n),
            theta: constant_fn(theta),
            delta: Arc::new(move |_| delta),
            eta: Arc::new(move |_| eta),
            gap_mode: GapMode::Ordered,
        })
    }

    pub fn dim(&self) -> usize {
        self.n1 + self.n2
    }

    /// The full coefficient matrix `[[M₁, N], [δΘ, M₂]]`.
    pub fn full_matrix(&self, x: f64) -> CMat {
        let (n1, n2) = (self.n1, self.n2);
        let mut a = CMat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&(self.m1)(x));
        a.view_mut((0, n1), (n1, n2)).copy_from(&(self.n)(x));
        a.view_mut((n1, 0), (n2, n1)).copy_from(&((self.theta)(x) * Complex64::from((self.delta)(x))));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&(self.m2)(x));
        a
    }

    /// Gap margin `gap(x) - η(x)` and `δ/η` on `samples` points of `[0, T)`.
    pub fn gap_report(&self, samples: usize) -> GapReport {
        let mut rep = GapReport {
            min_margin: f64::INFINITY,
            at_x: 0.0,
            min_gap: f64::INFINITY,
            sup_delta_over_eta: 0.0,
        };
        for i in 0..samples.max(1) {
            let x = self.period * i as f64 / samples.max(1) as f64;
            let (m1, m2) = ((self.m1)(x), (self.m2)(x));
            let gap = match self.gap_mode {
                GapMode::Ordered => ordered_gap(&m1, &m2),
                GapMode::Dichotomy => dichotomy_gap(&m1, &m2),
            };
            let eta = (self.eta)(x);
            if gap - eta < rep.min_margin {
                rep.min_margin = gap - eta;
                rep.at_x = x;
            }
            rep.min_gap = rep.min_gap.min(gap);
            rep.sup_delta_over_eta = rep.sup_delta_over_eta.max((self.delta)(x).abs() / eta);
        }
        rep
    }

    /// The gap report, or `GapViolation` at the worst sample.
    pub fn check_gap(&self, samples: usize) -> Result<GapReport> {
        let rep = self.gap_report(samples);
        if !(rep.min_margin >= 0.0) || !(rep.min_gap > 0.0) {
            return Err(Error::GapViolation {
                x: rep.at_x,
                gap: rep.min_gap,
            });
        }
        Ok(rep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `min_x (gap(x) - η(x))`.
    pub min_margin: f64,
    pub at_x: f64,
    pub min_gap: f64,
    pub sup_delta_over_eta: f64,
}

fn hermitian_part_eigs(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::from(0.5);
    h.symmetric_eigenvalues().iter().copied().collect()
}

fn ordered_gap(m1: &CMat, m2: &CMat) -> f64 {
    let lo = hermitian_part_eigs(m1).into_iter().fold(f64::INFINITY, f64::min);
    let hi = hermitian_part_eigs(m2).into_iter().fold(f64::NEG_INFINITY, f64::max);
    lo - hi
}

fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    m.clone().schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default()
}

fn dichotomy_gap(m1: &CMat, m2: &CMat) -> f64 {
    let (e1, e2) = (eigenvalues(m1), eigenvalues(m2));
    if e1.len() != m1.nrows() || e2.len() != m2.nrows() {
        return 0.0;
    }
    let mut g = f64::INFINITY;
    for a in &e1 {
        for b in &e2 {
            g = g.min((a.re - b.re).abs());
        }
    }
    g
}

/// Sampled coefficient tables, interpolated linearly and periodically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockTable {
    pub period: f64,
    /// Uniform nodes `x_j = jT/n`, `j = 0..n` (the value at `T` is implied by periodicity).
    pub samples: usize,
    pub m1: Vec<CMat>,
    pub m2: Vec<CMat>,
    pub n: Vec<CMat>,
    pub theta: Vec<CMat>,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub gap_mode: GapMode,
}

impl BlockTable {
    pub fn into_system(self) -> Result<BlockSystem> {
        let s = self.samples;
        let lens = [self.m1.len(), self.m2.len(), self.n.len(), self.theta.len(), self.delta.len(), self.eta.len()];
        if s == 0 || lens.iter().any(|&l| l != s) || !(self.period > 0.0) {
            return Err(Error::InvalidInput("table columns must all have `samples` entries".into()));
        }
        let (n1, n2) = (self.m1[0].nrows(), self.m2[0].nrows());
        let t = self.period;
        let locate = move |x: f64| {
            let y = x.rem_euclid(t) / t * s as f64;
            let j = (y.floor() as usize).min(s - 1);
            (j, (j + 1) % s, y - j as f64)
        };
        let mat = move |v: Vec<CMat>| -> MatFn {
            Arc::new(move |x| {
                let (j, k, w) = locate(x);
                &v[j] * Complex64::from(1.0 - w) + &v[k] * Complex64::from(w)
            })
        };
        let scal = move |v: Vec<f64>| -> ScalarFn {
            Arc::new(move |x| {
                let (j, k, w) = locate(x);
                v[j] * (1.0 - w) + v[k] * w
            })
        };
        Ok(BlockSystem {
            period: t,
            n1,
            n2,
            m1: mat(self.m1),
            m2: mat(self.m2),
            n: mat(self.n),
            theta: mat(self.theta),
            delta: scal(self.delta),
            eta: scal(self.eta),
            gap_mode: self.gap_mode,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub fp_tol: f64,
    pub ode_tol: f64,
    /// Grid cells per period on which `Φ` is stored.
    pub cells: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            fp_tol: 1e-12,
            ode_tol: 1e-12,
            cells: 256,
        }
    }
}

/// A periodic `n₂ × n₁` conjugator on a uniform grid, with `Φ'` from the
/// final linear sweep, plus convergence and residual certificates.
#[derive(Debug, Clone)]
pub struct Conjugator {
    pub period: f64,
    pub grid: Vec<f64>,
    pub phi: Vec<CMat>,
    pub dphi: Vec<CMat>,
    pub iterations: usize,
    /// Sup-norm change per sweep.
    pub increments: Vec<f64>,
    /// `sup |Φ|`.
    pub norm_bound: f64,
    /// `sup |Φ| / sup(δ/η)`, the measured constant in the pointwise bound.
    pub bound_constant: f64,
    /// Sup of the one-cell defect of the Riccati equation started from the
    /// stored `Φ(x_j)`, divided by the cell length.
    pub residual: f64,
    /// `|Φ(T⁻) - Φ(0)|` after integrating the last segment.
    pub periodicity_error: f64,
    pub segments: usize,
}

fn sup_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |s, z| s.max(z.norm()))
}

impl Conjugator {
    /// Cubic Hermite interpolant of `Φ` at `x` (mod T).
    pub fn eval(&self, x: f64) -> CMat {
        let n = self.grid.len() - 1;
        let h = self.period / n as f64;
        let xr = x.rem_euclid(self.period);
        let j = ((xr / h).floor() as usize).min(n - 1);
        hermite(&self.phi[j], &self.dphi[j], &self.phi[j + 1], &self.dphi[j + 1], h, (xr - self.grid[j]) / h)
    }
}

fn hermite(p0: &CMat, d0: &CMat, p1: &CMat, d1: &CMat, h: f64, t: f64) -> CMat {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    p0 * Complex64::from(h00) + d0 * Complex64::from(h10 * h) + p1 * Complex64::from(h01) + d1 * Complex64::from(h11 * h)
}

fn pack(values: &[Complex64], out: &mut [f64]) {
    for (i, z) in values.iter().enumerate() {
        out[2 * i] = z.re;
        out[2 * i + 1] = z.im;
    }
}

fn unpack(y: &[f64]) -> Vec<Complex64> {
    y.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// `M₂Φ - ΦM₁` on row-major `vec Φ`.
fn sylvester(m1: &CMat, m2: &CMat, phi: &CMat) -> CMat {
    m2 * phi - phi * m1
}

fn to_mat(v: &[Complex64], rows: usize, cols: usize) -> CMat {
    CMat::from_row_slice(rows, cols, v)
}

fn to_vec(m: &CMat) -> Vec<Complex64> {
    m.transpose().iter().copied().collect()
}

/// One linear periodic solve of `Φ' = M₂Φ - ΦM₁ + R(x)`, returning values and
/// derivatives on the grid and the end-of-period mismatch.
struct LinearSweep {
    phi: Vec<CMat>,
    dphi: Vec<CMat>,
    periodicity_error: f64,
}

fn growth_rate(system: &BlockSystem, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&x| self_norm(&(system.m1)(x)) + self_norm(&(system.m2)(x)))
        .fold(0.0, f64::max)
}

fn self_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn segment_bounds(cells: usize, segments: usize) -> Vec<usize> {
    (0..=segments).map(|s| s * cells / segments).collect()
}

fn linear_sweep<R>(system: &BlockSystem, grid: &[f64], bounds: &[usize], r: R, ode_tol: f64) -> Result<LinearSweep>
where
    R: Fn(f64) -> CMat,
{
    let (n1, n2) = (system.n1, system.n2);
    let d = n1 * n2;
    let cells = grid.len() - 1;
    let segs = bounds.len() - 1;
    let mut solver = Dop853::new(OdeOptions::with_tol(ode_tol));
    // state: φ (d) then Y (d × d, column j is the response to e_j), complex interleaved
    let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
        let (m1, m2) = ((system.m1)(x), (system.m2)(x));
        let z = unpack(y);
        let phi = to_mat(&z[..d], n2, n1);
        let f = sylvester(&m1, &m2, &phi) + r(x);
        let out = to_vec(&f);
        for j in 0..d {
            let col: Vec<Complex64> = (0..d).map(|i| z[d + i * d + j]).collect();
            let g = sylvester(&m1, &m2, &to_mat(&col, n2, n1));
            let gv = to_vec(&g);
            for i in 0..d {
                let idx = d + i * d + j;
                dy[2 * idx] = gv[i].re;
                dy[2 * idx + 1] = gv[i].im;
            }
        }
        pack(&out, &mut dy[..2 * d]);
    };
    // per grid point: particular φ_j and homogeneous Y_j relative to the segment start
    let mut part = vec![Vec::new(); cells + 1];
    let mut homo = vec![CMat::zeros(d, d); cells + 1];
    let mut p_maps = Vec::with_capacity(segs);
    let mut q_vecs = Vec::with_capacity(segs);
    for s in 0..segs {
        let mut y = vec![0.0; 2 * (d + d * d)];
        for i in 0..d {
            y[2 * (d + i * d + i)] = 1.0;
        }
        let start = bounds[s];
        part[start] = vec![Complex64::from(0.0); d];
        homo[start] = CMat::identity(d, d);
        for j in start..bounds[s + 1] {
            solver.integrate(&rhs, grid[j], grid[j + 1], &mut y)?;
            let z = unpack(&y);
            let ymat = CMat::from_row_slice(d, d, &z[d..]);
            if j + 1 < bounds[s + 1] {
                part[j + 1] = z[..d].to_vec();
                homo[j + 1] = ymat;
            } else {
                q_vecs.push(z[..d].to_vec());
                p_maps.push(ymat);
            }
        }
    }
    // block-cyclic system: z_{s+1} - P_s z_s = q_s (indices mod S)
    let n = segs * d;
    let mut big = CMat::zeros(n, n);
    let mut rhs_vec = nalgebra::DVector::<Complex64>::zeros(n);
    for s in 0..segs {
        let next = (s + 1) % segs;
        for i in 0..d {
            big[(next * d + i, next * d + i)] += Complex64::from(1.0);
            rhs_vec[next * d + i] = q_vecs[s][i];
            for j in 0..d {
                big[(next * d + i, s * d + j)] -= p_maps[s][(i, j)];
            }
        }
    }
    let lu = big.clone().full_piv_lu();
    let sol = lu.solve(&rhs_vec).ok_or(Error::PeriodMapSingular(0.0))?;
    let det = lu.determinant().norm();
    if !(det > 0.0) || sol.iter().any(|z| !z.is_finite()) {
        return Err(Error::PeriodMapSingular(det));
    }
    let mut phi = vec![CMat::zeros(n2, n1); cells + 1];
    for s in 0..segs {
        let z0 = sol.rows(s * d, d).clone_owned();
        for j in bounds[s]..bounds[s + 1] {
            let v = &homo[j] * &z0 + nalgebra::DVector::from_vec(part[j].clone());
            phi[j] = to_mat(v.as_slice(), n2, n1);
        }
    }
    let last = segs - 1;
    let z_last = sol.rows(last * d, d).clone_owned();
    let end = &p_maps[last] * &z_last + nalgebra::DVector::from_vec(q_vecs[last].clone());
    let end = to_mat(end.as_slice(), n2, n1);
    phi[cells] = phi[0].clone();
    let periodicity_error = sup_abs(&(end - &phi[0]));
    let dphi = grid
        .iter()
        .zip(&phi)
        .map(|(&x, p)| sylvester(&(system.m1)(x), &(system.m2)(x), p) + r(x))
        .collect();
    Ok(LinearSweep {
        phi,
        dphi,
        periodicity_error,
    })
}

fn forcing<'a>(system: &'a BlockSystem, prev: Option<(&[CMat], &[CMat], f64)>) -> impl Fn(f64) -> CMat + 'a {
    let prev = prev.map(|(p, d, h)| (p.to_vec(), d.to_vec(), h));
    move |x: f64| {
        let mut r = (system.theta)(x) * Complex64::from((system.delta)(x));
        if let Some((p, d, h)) = &prev {
            let n = p.len() - 1;
            let xr = x.rem_euclid(system.period);
            let j = ((xr / h).floor() as usize).min(n - 1);
            let phi = hermite(&p[j], &d[j], &p[j + 1], &d[j + 1], *h, (xr - j as f64 * h) / h);
            r -= &phi * (system.n)(x) * &phi;
        }
        r
    }
}

/// Fixed-point iteration for the periodic conjugator.
pub fn solve_conjugator(system: &BlockSystem, opts: &SolveOptions) -> Result<Conjugator> {
    let cells = opts.cells.max(2);
    let t = system.period;
    if !(t > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidInput("period and max_iter must be positive".into()));
    }
    let grid: Vec<f64> = (0..=cells).map(|j| t * j as f64 / cells as f64).collect();
    let gap = system.check_gap(cells)?;
    let segments = ((growth_rate(system, &grid) * t / 4.0).ceil() as usize).clamp(1, cells);
    let bounds = segment_bounds(cells, segments);
    let h = t / cells as f64;

    let mut phi = vec![CMat::zeros(system.n2, system.n1); cells + 1];
    let mut dphi = phi.clone();
    let mut increments = Vec::new();
    let mut periodicity_error = 0.0;
    let mut converged = false;
    for iter in 0..opts.max_iter {
        let prev = (iter > 0).then_some((phi.as_slice(), dphi.as_slice(), h));
        let sweep = linear_sweep(system, &grid, &bounds, forcing(system, prev), opts.ode_tol)?;
        let change = sweep.phi.iter().zip(&phi).map(|(a, b)| sup_abs(&(a - b))).fold(0.0, f64::max);
        phi = sweep.phi;
        dphi = sweep.dphi;
        periodicity_error = sweep.periodicity_error;
        increments.push(change);
        if !change.is_finite() {
            break;
        }
        if change < opts.fp_tol {
            converged = true;
            break;
        }
        // growing increments after the first few sweeps: no contraction
        let n = increments.len();
        if n >= 4 && increments[n - 1] > increments[n - 2] && increments[n - 2] > increments[n - 3] && change > 1.0 {
            break;
        }
    }
    if !converged {
        return Err(Error::NoContraction {
            iterations: increments.len(),
            last_change: increments.last().copied().unwrap_or(f64::NAN),
        });
    }
    let norm_bound = phi.iter().map(sup_abs).fold(0.0, f64::max);
    let mut conj = Conjugator {
        period: t,
        grid,
        phi,
        dphi,
        iterations: increments.len(),
        increments,
        norm_bound,
        bound_constant: if gap.sup_delta_over_eta > 0.0 {
            norm_bound / gap.sup_delta_over_eta
        } else {
            0.0
        },
        residual: 0.0,
        periodicity_error,
        segments,
    };
    conj.residual = riccati_defect(system, &conj, opts.ode_tol)?;
    Ok(conj)
}

/// `Φ' = M₂Φ - ΦM₁ + δΘ - ΦNΦ`.
fn riccati_rhs(system: &BlockSystem, x: f64, phi: &CMat) -> CMat {
    sylvester(&(system.m1)(x), &(system.m2)(x), phi) + (system.theta)(x) * Complex64::from((system.delta)(x))
        - phi * (system.n)(x) * phi
}

fn riccati_defect(system: &BlockSystem, conj: &Conjugator, ode_tol: f64) -> Result<f64> {
    let (n1, n2) = (system.n1, system.n2);
    let mut solver = Dop853::new(OdeOptions::with_tol(ode_tol));
    let mut worst = 0.0f64;
    for j in 0..conj.grid.len() - 1 {
        let mut y = vec![0.0; 2 * n1 * n2];
        pack(&to_vec(&conj.phi[j]), &mut y);
        let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
            let phi = to_mat(&unpack(y), n2, n1);
            pack(&to_vec(&riccati_rhs(system, x, &phi)), dy);
        };
        let (x0, x1) = (conj.grid[j], conj.grid[j + 1]);
        solver.integrate(rhs, x0, x1, &mut y)?;
        let end = to_mat(&unpack(&y), n2, n1);
        worst = worst.max(sup_abs(&(end - &conj.phi[j + 1])) / (x1 - x0));
    }
    Ok(worst)
}

/// The blocks of `Ã = S⁻¹(AS - S')`: `M̃₁ = M₁ + NΦ`, `M̃₂ = M₂ - ΦN`, `Ñ = N`.
pub struct TriangularBlocks<'a> {
    pub system: &'a BlockSystem,
    pub conjugator: &'a Conjugator,
    /// `sup ‖S' + SÃ - AS‖` over the grid.
    pub residual: f64,
}

impl TriangularBlocks<'_> {
    pub fn m1_tilde(&self, x: f64) -> CMat {
        (self.system.m1)(x) + (self.system.n)(x) * self.conjugator.eval(x)
    }

    pub fn m2_tilde(&self, x: f64) -> CMat {
        (self.system.m2)(x) - self.conjugator.eval(x) * (self.system.n)(x)
    }

    pub fn n_tilde(&self, x: f64) -> CMat {
        (self.system.n)(x)
    }

    fn assembled(&self, x: f64, phi: &CMat) -> CMat {
        let (n1, n2) = (self.system.n1, self.system.n2);
        let nn = (self.system.n)(x);
        let mut a = CMat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&((self.system.m1)(x) + &nn * phi));
        a.view_mut((0, n1), (n1, n2)).copy_from(&nn);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&((self.system.m2)(x) - phi * &nn));
        a
    }
}

fn s_matrix(n1: usize, n2: usize, phi: &CMat) -> CMat {
    let mut s = CMat::identity(n1 + n2, n1 + n2);
    s.view_mut((n1, 0), (n2, n1)).copy_from(phi);
    s
}

/// Builds the triangular blocks and certifies them by `S' + SÃ - AS = 0` on the grid.
pub fn triangularized_blocks<'a>(system: &'a BlockSystem, conj: &'a Conjugator, tol: f64) -> Result<TriangularBlocks<'a>> {
    let (n1, n2) = (system.n1, system.n2);
    let mut blocks = TriangularBlocks {
        system,
        conjugator: conj,
        residual: 0.0,
    };
    let mut worst = 0.0f64;
    for (j, &x) in conj.grid.iter().enumerate() {
        let phi = &conj.phi[j];
        let s = s_matrix(n1, n2, phi);
        let mut ds = CMat::zeros(n1 + n2, n1 + n2);
        ds.view_mut((n1, 0), (n2, n1)).copy_from(&conj.dphi[j]);
        let r = ds + &s * blocks.assembled(x, phi) - system.full_matrix(x) * &s;
        worst = worst.max(sup_abs(&r));
    }
    blocks.residual = worst;
    if !(worst <= tol) {
        return Err(Error::ResidualExceeded { residual: worst, tol });
    }
    Ok(blocks)
}

/// Period map `Ψ(T)` of `Ψ' = G(x)Ψ`, `Ψ(0) = I`.
pub fn period_map<G>(gen: G, dim: usize, period: f64, ode_tol: f64) -> Result<CMat>
where
    G: Fn(f64) -> CMat,
{
    let mut y = vec![0.0; 2 * dim * dim];
    pack(&to_vec(&CMat::identity(dim, dim)), &mut y);
    let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
        let m = to_mat(&unpack(y), dim, dim);
        pack(&to_vec(&(gen(x) * m)), dy);
    };
    Dop853::new(OdeOptions::with_tol(ode_tol)).integrate(rhs, 0.0, period, &mut y)?;
    Ok(to_mat(&unpack(&y), dim, dim))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationCheck {
    /// `det(P_A - I)` for the original system.
    pub full: Complex64,
    /// `det(P_{M̃₁} - I) · det(P_{M̃₂} - I)`.
    pub product: Complex64,
    pub relative_error: f64,
}

/// Evans-type factorization through the periodic conjugation.
pub fn evans_factorization(blocks: &TriangularBlocks<'_>, ode_tol: f64) -> Result<FactorizationCheck> {
    let sys = blocks.system;
    let t = sys.period;
    let minus_i = |p: CMat| {
        let n = p.nrows();
        (p - CMat::identity(n, n)).determinant()
    };
    let full = minus_i(period_map(|x| sys.full_matrix(x), sys.dim(), t, ode_tol)?);
    let d1 = minus_i(period_map(|x| blocks.m1_tilde(x), sys.n1, t, ode_tol)?);
    let d2 = minus_i(period_map(|x| blocks.m2_tilde(x), sys.n2, t, ode_tol)?);
    let product = d1 * d2;
    Ok(FactorizationCheck {
        full,
        product,
        relative_error: (full - product).norm() / full.norm().max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::from(x)
    }

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    fn constant_example(delta: f64) -> BlockSystem {
        BlockSystem::constant(2.0, scalar(1.0), scalar(-1.0), scalar(1.0), scalar(1.0), delta).unwrap()
    }

    #[test]
    fn zero_coupling_gives_zero_conjugator() {
        let sys = constant_example(0.0);
        let conj = solve_conjugator(&sys, &SolveOptions::default()).unwrap();
        assert_eq!(conj.iterations, 1);
        assert_eq!(conj.norm_bound, 0.0);
        let tri = triangularized_blocks(&sys, &conj, 1e-12).unwrap();
        assert_eq!(tri.m1_tilde(0.3), scalar(1.0));
        assert_eq!(tri.m2_tilde(0.3), scalar(-1.0));
        assert_eq!(tri.n_tilde(0.3), scalar(1.0));
    }

    #[test]
    fn constant_example_hits_quadratic_root() {
        let sys = constant_example(0.1);
        let conj = solve_conjugator(&sys, &SolveOptions::default()).unwrap();
        let exact = -1.0 + 1.1f64.sqrt();
        for p in &conj.phi {
            assert!((p[(0, 0)] - c(exact)).norm() < 1e-12, "{}", p[(0, 0)]);
        }
        // increments shrink by roughly δ/η per sweep
        assert!(conj.increments[2] < 0.1 * conj.increments[1]);
        assert!(conj.residual < 1e-10 && conj.periodicity_error < 1e-10);
        let tri = triangularized_blocks(&sys, &conj, 1e-10).unwrap();
        // lower-left of S⁻¹(AS - S') is the Riccati residual
        let phi = conj.eval(0.7);
        let s = s_matrix(1, 1, &phi);
        let a = sys.full_matrix(0.7);
        let t = s.clone().try_inverse().unwrap() * (a * s);
        assert!(t[(1, 0)].norm() < 1e-12);
        let f = evans_factorization(&tri, 1e-13).unwrap();
        assert!(f.relative_error < 1e-10, "{f:?}");
    }

    #[test]
    fn single_fourier_mode() {
        let (t, eps) = (3.0, 0.2);
        let omega = 2.0 * PI / t;
        let mut sys = constant_example(0.0);
        sys.n = constant_fn(scalar(0.0));
        sys.delta = Arc::new(move |x| eps * (omega * x).cos());
        sys.eta = Arc::new(|_| 1.0);
        sys.period = t;
        let conj = solve_conjugator(&sys, &SolveOptions::default()).unwrap();
        // Φ' = -2Φ + ε cos ωx  ⇒  Φ = Re(ε e^{iωx} / (2 + iω))
        for (x, p) in conj.grid.iter().zip(&conj.phi) {
            let exact = (Complex64::new(0.0, omega * x).exp() * eps / Complex64::new(2.0, omega)).re;
            assert!((p[(0, 0)] - c(exact)).norm() < 1e-10);
        }
        assert!(conj.periodicity_error < 1e-10);
    }

    #[test]
    fn multiple_segments_match_single_shooting() {
        let m1 = CMat::from_row_slice(2, 2, &[c(2.0), c(0.3), c(-0.2), c(1.5)]);
        let sys = BlockSystem::constant(12.0, m1, scalar(-1.0), CMat::from_element(2, 1, c(0.5)), CMat::from_element(1, 2, c(1.0)), 0.05).unwrap();
        let conj = solve_conjugator(&sys, &SolveOptions::default()).unwrap();
        assert!(conj.segments > 1);
        let grid: Vec<f64> = conj.grid.clone();
        let one = linear_sweep(&sys, &grid, &segment_bounds(grid.len() - 1, 1), forcing(&sys, None), 1e-12).unwrap();
        let many = linear_sweep(&sys, &grid, &segment_bounds(grid.len() - 1, 7), forcing(&sys, None), 1e-12).unwrap();
        for (a, b) in one.phi.iter().zip(&many.phi) {
            assert!(sup_abs(&(a - b)) < 1e-11);
        }
    }

    #[test]
    fn dichotomy_allows_interleaved_spectra() {
        let m1 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1.0), c(0.5)]));
        let mut sys = BlockSystem::constant(20.0, m1, scalar(0.0), CMat::from_element(2, 1, c(0.1)), CMat::from_element(1, 2, c(1.0)), 0.01).unwrap();
        assert!(matches!(solve_conjugator(&sys, &SolveOptions::default()), Err(Error::GapViolation { .. })));
        sys.gap_mode = GapMode::Dichotomy;
        sys.eta = Arc::new(|_| 0.4);
        let conj = solve_conjugator(&sys, &SolveOptions::default()).unwrap();
        let tri = triangularized_blocks(&sys, &conj, 1e-10).unwrap();
        assert!(tri.residual < 1e-10 && conj.residual < 1e-9);
    }

    #[test]
    fn strong_coupling_fails_to_contract() {
        let sys = constant_example(5.0);
        let err = solve_conjugator(&sys, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoContraction { .. } | Error::PeriodMapSingular(_)), "{err:?}");
    }

    #[test]
    fn table_round_trip() {
        let n = 16;
        let table = BlockTable {
            period: 2.0,
            samples: n,
            m1: vec![scalar(1.0); n],
            m2: vec![scalar(-1.0); n],
            n: vec![scalar(1.0); n],
            theta: vec![scalar(1.0); n],
            delta: vec![0.1; n],
            eta: vec![2.0; n],
            gap_mode: GapMode::Ordered,
        };
        let json = serde_json::to_string(&table).unwrap();
        let sys = serde_json::from_str::<BlockTable>(&json).unwrap().into_system().unwrap();
        let conj = solve_conjugator(&sys, &SolveOptions::default()).unwrap();
        assert!((conj.phi[3][(0, 0)] - c(-1.0 + 1.1f64.sqrt())).norm() < 1e-12);
    }
}
