//! Finite-difference weights (Fornberg) and sampled-derivative helpers.

/// Weights for the `order`-th derivative at `x0` from samples at `xs`.
pub fn fornberg_weights(x0: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// First derivative of uniformly sampled data with a `width`-point stencil,
/// centered in the interior and shifted inward at the ends.
pub fn differentiate_uniform(values: &[f64], h: f64, width: usize) -> Vec<f64> {
    let n = values.len();
    assert!(n >= width && width >= 2, "need at least `width` samples");
    let half = width / 2;
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; width];
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - width);
            let offset = i - start;
            let w = cache[offset].get_or_insert_with(|| {
                let xs: Vec<f64> = (0..width).map(|j| j as f64).collect();
                fornberg_weights(offset as f64, &xs, 1)
            });
            w.iter()
                .zip(&values[start..start + width])
                .map(|(a, v)| a * v)
                .sum::<f64>()
                / h
        })
        .collect()
}
