//! Nonlinearity `f`, its antiderivative `F` (with `F(0) = 0`) and the
//! effective potential `V(u; a, c) = F(u) - a u - (c/2) u²` of the
//! traveling-wave oscillator `u_x²/2 = E - V(u; a, c)`.
//!
//! Only polynomial nonlinearities are supported, so every derivative used
//! downstream is exact.

use crate::error::{Error, Result};
use crate::numerics::poly::Poly;
use serde::{Deserialize, Serialize};

/// The gKdV nonlinearity in `u_t = u_xxx + f(u)_x`.
///
/// JSON: `{"kind":"power","coef":0.5,"exponent":2}` or
/// `{"kind":"poly","coeffs":[0,0,0.5]}` (ascending degree, representing `f`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum NonlinearitySpec {
    #[serde(rename = "power")]
    Power { coef: f64, exponent: u32 },
    #[serde(rename = "poly")]
    Poly { coeffs: Vec<f64> },
}

impl NonlinearitySpec {
    /// KdV, `f(u) = u²/2`.
    pub fn kdv() -> Self {
        NonlinearitySpec::Power {
            coef: 0.5,
            exponent: 2,
        }
    }

    /// Focusing mKdV, `f(u) = u³/3`.
    pub fn mkdv() -> Self {
        NonlinearitySpec::Power {
            coef: 1.0 / 3.0,
            exponent: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NonlinearitySpec::Power { coef, exponent } => {
                if *exponent == 0 {
                    return Err(Error::InvalidInput("power-law exponent must be positive".into()));
                }
                if !coef.is_finite() {
                    return Err(Error::InvalidInput("power-law coefficient must be finite".into()));
                }
            }
            NonlinearitySpec::Poly { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput(
                        "polynomial nonlinearity needs finite coefficients".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `f` as a polynomial.
    pub fn f_poly(&self) -> Poly {
        match self {
            NonlinearitySpec::Power { coef, exponent } => {
                let mut c = vec![0.0; *exponent as usize + 1];
                c[*exponent as usize] = *coef;
                Poly::new(c)
            }
            NonlinearitySpec::Poly { coeffs } => Poly::new(coeffs.clone()),
        }
    }

    /// `F`, the antiderivative of `f` with `F(0) = 0`.
    pub fn antiderivative(&self) -> Poly {
        self.f_poly().antiderivative()
    }

    /// True when `f` is exactly quadratic in `u` with no lower terms, i.e. `f(u) = β u²/2`.
    pub fn kdv_coefficient(&self) -> Option<f64> {
        let p = self.f_poly();
        let c = p.coeffs();
        (p.degree() == 2 && c[0] == 0.0 && c[1] == 0.0).then(|| 2.0 * c[2])
    }
}

/// Sign of the transverse dispersion term `σ u_yy` (`+1` is KP-I, `-1` KP-II).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum Sigma {
    Plus,
    Minus,
}

impl Sigma {
    pub fn value(self) -> f64 {
        match self {
            Sigma::Plus => 1.0,
            Sigma::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Sigma {
        match self {
            Sigma::Plus => Sigma::Minus,
            Sigma::Minus => Sigma::Plus,
        }
    }
}

impl TryFrom<i32> for Sigma {
    type Error = String;

    fn try_from(v: i32) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sigma::Plus),
            -1 => Ok(Sigma::Minus),
            other => Err(format!("sigma must be +1 or -1, got {other}")),
        }
    }
}

impl From<Sigma> for i32 {
    fn from(s: Sigma) -> i32 {
        match s {
            Sigma::Plus => 1,
            Sigma::Minus => -1,
        }
    }
}

/// Traveling-wave parameters `(a, E, c)` together with the nonlinearity and `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub a: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub c: f64,
    pub nonlinearity: NonlinearitySpec,
    pub sigma: Sigma,
    /// Selects the potential well overlapping `[lo, hi]` when `E - V > 0`
    /// on more than one bounded interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub well: Option<[f64; 2]>,
}

impl WaveParams {
    pub fn new(a: f64, e: f64, c: f64, nonlinearity: NonlinearitySpec, sigma: Sigma) -> Result<Self> {
        let p = Self {
            a,
            e,
            c,
            nonlinearity,
            sigma,
            well: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity.validate()?;
        if !(self.a.is_finite() && self.e.is_finite() && self.c.is_finite()) {
            return Err(Error::InvalidInput("a, E, c must be finite".into()));
        }
        if let Some([lo, hi]) = self.well {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!("well hint [{lo}, {hi}] is not an interval")));
            }
        }
        if self.c <= 0.0 {
            return Err(Error::InvalidInput(format!("wave speed c must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// Same wave with `(a, E, c)` replaced.
    pub fn with_aec(&self, a: f64, e: f64, c: f64) -> Self {
        Self {
            a,
            e,
            c,
            ..self.clone()
        }
    }

    pub fn with_well(&self, lo: f64, hi: f64) -> Self {
        Self {
            well: Some([lo, hi]),
            ..self.clone()
        }
    }

    pub fn with_sigma(&self, sigma: Sigma) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    pub fn potential(&self) -> Potential {
        Potential::new(self)
    }
}

/// Precomputed polynomial forms of `f`, `F`, `V` and their derivatives.
#[derive(Debug, Clone)]
pub struct Potential {
    pub a: f64,
    pub e: f64,
    pub c: f64,
    f: [Poly; 4],
    big_f: Poly,
    v: [Poly; 4],
}

impl Potential {
    pub fn new(params: &WaveParams) -> Self {
        let f0 = params.nonlinearity.f_poly();
        let f1 = f0.derivative();
        let f2 = f1.derivative();
        let f3 = f2.derivative();
        let big_f = f0.antiderivative();
        let v0 = big_f.add(&Poly::new(vec![0.0, -params.a, -0.5 * params.c]));
        let v1 = v0.derivative();
        let v2 = v1.derivative();
        let v3 = v2.derivative();
        Self {
            a: params.a,
            e: params.e,
            c: params.c,
            f: [f0, f1, f2, f3],
            big_f,
            v: [v0, v1, v2, v3],
        }
    }

    #[inline]
    pub fn f(&self, u: f64, order: usize) -> f64 {
        self.f[order].eval(u)
    }

    #[inline]
    pub fn big_f(&self, u: f64) -> f64 {
        self.big_f.eval(u)
    }

    #[inline]
    pub fn v(&self, u: f64, order: usize) -> f64 {
        self.v[order].eval(u)
    }

    pub fn v_poly(&self) -> &Poly {
        &self.v[0]
    }

    /// `E - V(u)` as a polynomial in `u`.
    pub fn energy_gap_poly(&self) -> Poly {
        Poly::new(vec![self.e]).add(&self.v[0].scale(-1.0))
    }
}

/// Order-th derivative of `f` at `u`.
pub fn eval_f(spec: &NonlinearitySpec, u: f64, order: usize) -> Result<f64> {
    if order > 3 {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(spec.f_poly().eval_derivative(u, order))
}

/// Order-th derivative of `V(·; a, c)` at `u`.
pub fn eval_v(params: &WaveParams, u: f64, order: usize) -> Result<f64> {
    if order > 3 {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(params.potential().v(u, order))
}
