//! Jacobi elliptic functions by the descending Landen (AGM) scale, and the
//! complete integrals K(k), E(k) by the arithmetic-geometric mean.

use crate::error::{Error, Result};
use std::f64::consts::FRAC_PI_2;

/// Elliptic modulus `k` with `0 ≤ k < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticModulus(f64);

impl EllipticModulus {
    pub fn new(k: f64) -> Result<Self> {
        if (0.0..1.0).contains(&k) {
            Ok(Self(k))
        } else {
            Err(Error::ModulusOutOfRange(k))
        }
    }

    pub fn k(self) -> f64 {
        self.0
    }
}

/// AGM sequence `(a_n, c_n)` starting from `a₀ = 1, b₀ = √(1 - k²), c₀ = k`.
fn agm_scale(k: f64) -> Vec<(f64, f64)> {
    let mut a = 1.0;
    let mut b = (1.0 - k * k).sqrt();
    let mut seq = vec![(a, k)];
    for _ in 0..64 {
        let c = 0.5 * (a - b);
        if c.abs() <= f64::EPSILON * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
        seq.push((a, c));
    }
    seq
}

/// `(sn, cn, dn)(x, k)` by Bulirsch's descending Landen recurrence, which
/// carries `dn` separately instead of recovering it from `sn`.
pub fn jacobi_elliptic(x: f64, m: EllipticModulus) -> (f64, f64, f64) {
    let k = m.k();
    if k == 0.0 {
        return (x.sin(), x.cos(), 1.0);
    }
    const CA: f64 = 1e-8;
    let mut em = [0.0; 16];
    let mut en = [0.0; 16];
    let mut emc = 1.0 - k * k;
    let mut a = 1.0;
    let mut c = 1.0;
    let mut last = 0;
    for i in 0..16 {
        last = i;
        em[i] = a;
        emc = emc.sqrt();
        en[i] = emc;
        c = 0.5 * (a + emc);
        if (a - emc).abs() <= CA * a {
            break;
        }
        emc *= a;
        a = c;
    }
    let u = c * x;
    let (mut sn, mut cn) = u.sin_cos();
    let mut dn = 1.0;
    if sn != 0.0 {
        let mut a = cn / sn;
        c *= a;
        for ii in (0..=last).rev() {
            let b = em[ii];
            a *= c;
            c *= dn;
            dn = (en[ii] + a) / (b + a);
            a = c / b;
        }
        let a = 1.0 / (c * c + 1.0).sqrt();
        sn = if sn >= 0.0 { a } else { -a };
        cn = c * sn;
    }
    (sn, cn, dn)
}

/// Complete elliptic integral of the first kind, `K(k) = π / (2 AGM(1, √(1-k²)))`.
pub fn complete_k(m: EllipticModulus) -> f64 {
    let seq = agm_scale(m.k());
    FRAC_PI_2 / seq.last().unwrap().0
}

/// Complete elliptic integral of the second kind,
/// `E(k) = K(k) (1 - Σ 2^{n-1} c_n²)`.
pub fn complete_e(m: EllipticModulus) -> f64 {
    let seq = agm_scale(m.k());
    let sum: f64 = seq
        .iter()
        .enumerate()
        .map(|(n, &(_, c))| 2f64.powi(n as i32 - 1) * c * c)
        .sum();
    complete_k(m) * (1.0 - sum)
}
