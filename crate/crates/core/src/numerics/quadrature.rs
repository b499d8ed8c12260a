//! Gauss-Legendre rules and a node-doubling driver.

use std::f64::consts::PI;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on P_n from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `g` over [a, b].
    pub fn integrate<G: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut g: G) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of a converged node-doubling quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOutcome {
    pub nodes: usize,
    pub relative_change: f64,
}

/// Integrate a vector-valued integrand over [a, b], doubling the node count
/// from `n_start` until every component changes by less than `rel_tol`
/// relative to the largest component magnitude. Returns `None` if `n_max` is
/// reached first.
pub fn integrate_doubling<const K: usize, G>(
    a: f64,
    b: f64,
    mut g: G,
    rel_tol: f64,
    n_start: usize,
    n_max: usize,
) -> Option<([f64; K], QuadratureOutcome)>
where
    G: FnMut(f64) -> [f64; K],
{
    let rule_sum = |n: usize, g: &mut G| {
        let rule = GaussLegendre::new(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [0.0; K];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = g(mid + half * x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc.map(|s| s * half)
    };
    let mut n = n_start.max(2);
    let mut prev = rule_sum(n, &mut g);
    while n < n_max {
        n *= 2;
        let next = rule_sum(n, &mut g);
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let change = prev
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
            / scale;
        if change < rel_tol {
            return Some((
                next,
                QuadratureOutcome {
                    nodes: n,
                    relative_change: change,
                },
            ));
        }
        prev = next;
    }
    None
}
