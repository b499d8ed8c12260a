//! Dense real polynomials with coefficients in ascending degree.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Poly {
        let mut out = vec![0.0];
        out.extend(self.coeffs.iter().enumerate().map(|(i, c)| c / (i + 1) as f64));
        Poly::new(out)
    }

    /// n-th derivative evaluated at x.
    pub fn eval_derivative(&self, x: f64, order: usize) -> f64 {
        let mut p = self.clone();
        for _ in 0..order {
            p = p.derivative();
        }
        p.eval(x)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new(
            (0..n)
                .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Quotient of division by the monic quadratic (x - r1)(x - r2); the
    /// remainder is discarded.
    pub fn deflate_quadratic(&self, r1: f64, r2: f64) -> Poly {
        self.deflate_linear(r1).deflate_linear(r2)
    }

    /// Synthetic division by (x - r), remainder discarded.
    pub fn deflate_linear(&self, r: f64) -> Poly {
        let n = self.degree();
        if n == 0 {
            return Poly::new(vec![0.0]);
        }
        let mut q = vec![0.0; n];
        let mut carry = 0.0;
        for i in (0..=n).rev() {
            let v = self.coeffs[i] + carry;
            if i > 0 {
                q[i - 1] = v;
                carry = v * r;
            }
        }
        Poly::new(q)
    }

    /// Cauchy bound: every root satisfies |x| <= 1 + max |a_i / a_n|.
    pub fn cauchy_bound(&self) -> f64 {
        let lc = self.leading();
        1.0 + self.coeffs[..self.degree()]
            .iter()
            .fold(0.0f64, |m, c| m.max((c / lc).abs()))
    }

    /// All distinct real roots in ascending order, including multiple roots.
    ///
    /// Critical points (real roots of the derivative, found recursively)
    /// split [-R, R] into monotone pieces; each sign change is refined by
    /// bisection and a critical point where the polynomial vanishes to
    /// rounding is reported as a multiple root.
    pub fn real_roots(&self) -> Vec<f64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![-self.coeffs[0] / self.coeffs[1]];
        }
        let bound = self.cauchy_bound();
        let crit = self.derivative().real_roots();
        let mut knots = vec![-bound];
        knots.extend(crit.iter().copied().filter(|c| c.abs() < bound));
        knots.push(bound);
        let mag = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut roots: Vec<f64> = Vec::new();
        for (idx, w) in knots.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            // interior knots are critical points
            if idx > 0 {
                let tiny = 64.0 * f64::EPSILON * mag * (1.0 + a.abs()).powi(n as i32);
                if fa.abs() <= tiny && roots.last().is_none_or(|r| (r - a).abs() > 0.0) {
                    roots.push(a);
                    continue;
                }
            }
            if fa == 0.0 {
                if roots.last().is_none_or(|r| *r != a) {
                    roots.push(a);
                }
                continue;
            }
            if fa * fb < 0.0 {
                roots.push(bisect(|x| self.eval(x), a, b));
            }
        }
        if let Some(&b) = knots.last() {
            if self.eval(b) == 0.0 && roots.last().is_none_or(|r| *r != b) {
                roots.push(b);
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        roots.dedup();
        roots
    }

    /// Discriminant with the normalization (-1)^{n(n-1)/2} res(p, p') / lc(p),
    /// which equals lc^{2n-2} Π_{i<j} (r_i - r_j)^2.
    pub fn discriminant(&self) -> f64 {
        let n = self.degree();
        let res = resultant(self, &self.derivative());
        let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign * res / self.leading()
    }
}

/// Resultant as the determinant of the Sylvester matrix.
pub fn resultant(p: &Poly, q: &Poly) -> f64 {
    let (m, n) = (p.degree(), q.degree());
    let size = m + n;
    if size == 0 {
        return 1.0;
    }
    let mut s = DMatrix::<f64>::zeros(size, size);
    // rows hold descending coefficients
    for row in 0..n {
        for (j, c) in p.coeffs.iter().rev().enumerate() {
            s[(row, row + j)] = *c;
        }
    }
    for row in 0..m {
        for (j, c) in q.coeffs.iter().rev().enumerate() {
            s[(n + row, row + j)] = *c;
        }
    }
    s.determinant()
}

/// Bisection to full double precision for a sign change on [a, b].
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_roots(lc: f64, roots: &[f64]) -> Poly {
        let mut c = vec![lc];
        for r in roots {
            let mut next = vec![0.0; c.len() + 1];
            for (i, v) in c.iter().enumerate() {
                next[i + 1] += v;
                next[i] -= r * v;
            }
            c = next;
        }
        Poly::new(c)
    }

    #[test]
    fn roots_of_product_form() {
        let p = from_roots(-0.5, &[-1.5, 0.25, 3.0]);
        let r = p.real_roots();
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([-1.5, 0.25, 3.0]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn double_root_is_reported_once() {
        // u^2 (3 - u) / 6 : the KdV separatrix cubic
        let p = Poly::new(vec![0.0, 0.0, 0.5, -1.0 / 6.0]);
        let r = p.real_roots();
        assert_eq!(r.len(), 2, "{r:?}");
        assert!(r[0].abs() < 1e-12);
        assert!((r[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn discriminant_sign_convention_on_test_cubics() {
        for (lc, roots) in [(1.0, [0.0, 1.0, 3.0]), (-1.0 / 6.0, [-2.0, 0.5, 1.0]), (2.5, [-1.0, 4.0, 5.0])] {
            let p = from_roots(lc, &roots);
            let mut prod = 1.0;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    prod *= (roots[i] - roots[j]).powi(2);
                }
            }
            let expected = lc.powi(4) * prod;
            assert!((p.discriminant() / expected - 1.0).abs() < 1e-10);
        }
        // one real root: negative discriminant
        let p = Poly::new(vec![1.0, 0.0, 0.0, 1.0]);
        assert!(p.discriminant() < 0.0);
    }

    #[test]
    fn deflation_recovers_quotient() {
        let p = from_roots(2.0, &[1.0, -2.0, 0.5, 4.0]);
        let q = p.deflate_quadratic(1.0, 4.0);
        let expected = from_roots(2.0, &[-2.0, 0.5]);
        for (a, b) in q.coeffs().iter().zip(expected.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
