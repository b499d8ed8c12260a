//! Adaptive Dormand-Prince 8(5,3) integrator for real systems `y' = f(x, y)`.
//!
//! Complex systems are integrated by splitting into real and imaginary parts.
//! The integrator keeps its last accepted step size between calls, so sampling
//! a trajectory on a grid by repeated `integrate` calls costs little extra.

use super::dop853_tableau::{A, B, C, E3, E5};
use thiserror::Error;

const STAGES: usize = 12;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {x}")]
    StepSizeUnderflow { x: f64 },
    #[error("maximum number of steps ({max_steps}) exceeded at x = {x}")]
    TooManySteps { x: f64, max_steps: usize },
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on |h|; `f64::INFINITY` for none.
    pub h_max: f64,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            max_steps: 1_000_000,
            h_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Reusable DOP853 stepper. Work buffers are sized on first use.
#[derive(Debug, Clone)]
pub struct Dop853 {
    opts: OdeOptions,
    k: Vec<Vec<f64>>,
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    h_last: Option<f64>,
    pub stats: OdeStats,
}

impl Dop853 {
    pub fn new(opts: OdeOptions) -> Self {
        Self {
            opts,
            k: Vec::new(),
            y_stage: Vec::new(),
            y_new: Vec::new(),
            h_last: None,
            stats: OdeStats::default(),
        }
    }

    pub fn options(&self) -> &OdeOptions {
        &self.opts
    }

    /// Forget the step-size memory (use before integrating an unrelated problem).
    pub fn reset(&mut self) {
        self.h_last = None;
    }

    fn ensure_buffers(&mut self, n: usize) {
        if self.y_new.len() != n {
            self.k = vec![vec![0.0; n]; STAGES + 1];
            self.y_stage = vec![0.0; n];
            self.y_new = vec![0.0; n];
            self.h_last = None;
        }
    }

    fn error_scale(&self, y: &[f64], y_new: &[f64], i: usize) -> f64 {
        self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs())
    }

    /// Integrate from `x0` to `x1` in place. `x1 < x0` integrates backwards.
    pub fn integrate<F>(&mut self, mut f: F, x0: f64, x1: f64, y: &mut [f64]) -> Result<(), OdeError>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        self.ensure_buffers(n);
        if x1 == x0 {
            return Ok(());
        }
        let dir = (x1 - x0).signum();
        let span = (x1 - x0).abs();

        f(x0, y, &mut self.k[0]);
        self.stats.evaluations += 1;

        let mut h = match self.h_last {
            Some(h) => h.abs(),
            None => self.initial_step(&mut f, x0, y, dir),
        };
        h = h.min(self.opts.h_max).min(span);

        let mut x = x0;
        let mut steps = 0usize;
        let mut last_rejected = false;
        loop {
            let remaining = (x1 - x).abs();
            if remaining <= 1e-14 * span.max(x.abs()) {
                break;
            }
            if steps >= self.opts.max_steps {
                return Err(OdeError::TooManySteps {
                    x,
                    max_steps: self.opts.max_steps,
                });
            }
            steps += 1;
            let mut reaches_end = false;
            if h >= remaining {
                h = remaining;
                reaches_end = true;
            }
            if h < 1e-15 * x.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { x });
            }
            let hs = dir * h;

            for s in 1..STAGES {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s].iter().take(s).enumerate() {
                        if *a != 0.0 {
                            acc += a * self.k[j][i];
                        }
                    }
                    self.y_stage[i] = y[i] + hs * acc;
                }
                let (_, tail) = self.k.split_at_mut(s);
                f(x + C[s] * hs, &self.y_stage, &mut tail[0]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for (j, b) in B.iter().enumerate() {
                    if *b != 0.0 {
                        acc += b * self.k[j][i];
                    }
                }
                self.y_new[i] = y[i] + hs * acc;
            }
            let x_new = if reaches_end { x1 } else { x + hs };
            let (_, tail) = self.k.split_at_mut(STAGES);
            f(x_new, &self.y_new, &mut tail[0]);
            self.stats.evaluations += STAGES;

            let mut err5 = 0.0;
            let mut err3 = 0.0;
            for i in 0..n {
                let sc = self.error_scale(y, &self.y_new, i);
                let mut e5 = 0.0;
                let mut e3 = 0.0;
                for j in 0..=STAGES {
                    let kj = self.k[j][i];
                    e5 += E5[j] * kj;
                    e3 += E3[j] * kj;
                }
                err5 += (e5 / sc).powi(2);
                err3 += (e3 / sc).powi(2);
            }
            let err = if err5 == 0.0 && err3 == 0.0 {
                0.0
            } else {
                let denom = err5 + 0.01 * err3;
                h * err5 / (denom * n as f64).sqrt()
            };
            if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
                if h < 1e-15 * x.abs().max(1.0) {
                    return Err(OdeError::NonFinite { x });
                }
                h *= MIN_FACTOR;
                self.stats.rejected += 1;
                last_rejected = true;
                continue;
            }

            if err <= 1.0 {
                self.stats.accepted += 1;
                x = x_new;
                y.copy_from_slice(&self.y_new);
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[STAGES - 1]);
                let mut factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-1.0 / 8.0)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                if last_rejected {
                    factor = factor.min(1.0);
                }
                last_rejected = false;
                h = (h * factor).min(self.opts.h_max);
                // A truncated final step says nothing about the natural step.
                if !reaches_end {
                    self.h_last = Some(h);
                }
                if reaches_end {
                    break;
                }
            } else {
                self.stats.rejected += 1;
                last_rejected = true;
                h *= (SAFETY * err.powf(-1.0 / 8.0)).clamp(MIN_FACTOR, 1.0);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { x });
        }
        Ok(())
    }

    fn initial_step<F>(&mut self, f: &mut F, x0: f64, y: &[f64], dir: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (self.k[0][i] / sc).powi(2);
        }
        d0 = (d0 / n as f64).sqrt();
        d1 = (d1 / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..n {
            self.y_stage[i] = y[i] + dir * h0 * self.k[0][i];
        }
        f(x0 + dir * h0, &self.y_stage, &mut self.k[1]);
        self.stats.evaluations += 1;
        let mut d2 = 0.0;
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs();
            d2 += ((self.k[1][i] - self.k[0][i]) / sc).powi(2);
        }
        d2 = (d2 / n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let mut ode = Dop853::new(OdeOptions::with_tol(1e-12));
        let mut y = [1.0, 0.0];
        let tau = 2.0 * std::f64::consts::PI;
        ode.integrate(|_, y, dy| {
            dy[0] = y[1];
            dy[1] = -y[0];
        }, 0.0, tau, &mut y)
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10, "{:?}", y);
        assert!(y[1].abs() < 1e-10, "{:?}", y);
    }

    #[test]
    fn exponential_growth_and_backward() {
        let mut ode = Dop853::new(OdeOptions::with_tol(1e-13));
        let mut y = [1.0];
        ode.integrate(|_, y, dy| dy[0] = y[0], 0.0, 3.0, &mut y).unwrap();
        assert!((y[0] / 3f64.exp() - 1.0).abs() < 1e-11);
        ode.reset();
        ode.integrate(|_, y, dy| dy[0] = y[0], 3.0, 0.0, &mut y).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn eighth_order_convergence_on_smooth_problem() {
        // y' = cos(x) y, y(0)=1 => y = exp(sin x)
        let exact = 2.5f64.sin().exp();
        let run = |tol: f64| {
            let mut ode = Dop853::new(OdeOptions::with_tol(tol));
            let mut y = [1.0];
            ode.integrate(|x, y, dy| dy[0] = x.cos() * y[0], 0.0, 2.5, &mut y).unwrap();
            ((y[0] - exact).abs(), ode.stats.evaluations)
        };
        let (e1, n1) = run(1e-8);
        let (e2, n2) = run(1e-12);
        assert!(e2 < e1 || e2 < 1e-14);
        assert!(e2 < 1e-11);
        assert!(n2 > n1);
    }

    #[test]
    fn grid_sampling_reuses_step() {
        let mut ode = Dop853::new(OdeOptions::with_tol(1e-12));
        let mut y = [0.0, 1.0];
        let n = 64;
        let tau = 2.0 * std::f64::consts::PI;
        for j in 0..n {
            let a = tau * j as f64 / n as f64;
            let b = tau * (j + 1) as f64 / n as f64;
            ode.integrate(|_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            }, a, b, &mut y)
            .unwrap();
            assert!((y[0] - b.sin()).abs() < 1e-11);
        }
    }
}
