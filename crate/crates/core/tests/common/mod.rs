//! Reference computations shared by integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Neumaier-compensated sum.
pub fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `g_i = 1/2 sum_j e^{-|y_i - y_j|} m_j` and
/// `g_y,i = 1/2 sum_j sgn(y_j - y_i) e^{-|y_i - y_j|} m_j` by direct O(N^2)
/// summation, with `m_j = values_j * weights_j`.
pub fn direct_field(positions: &[f64], values: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let masses: Vec<f64> = values.iter().zip(weights).map(|(v, w)| v * w).collect();
    let mut g = Vec::with_capacity(positions.len());
    let mut gy = Vec::with_capacity(positions.len());
    for &y in positions {
        let kernel = |(x, m): (&f64, &f64)| 0.5 * (-(y - x).abs()).exp() * m;
        g.push(compensated_sum(positions.iter().zip(&masses).map(kernel)));
        gy.push(compensated_sum(positions.iter().zip(&masses).map(
            |(x, m)| {
                let s = if *x > y {
                    1.0
                } else if *x < y {
                    -1.0
                } else {
                    0.0
                };
                s * kernel((x, m))
            },
        )));
    }
    (g, gy)
}

/// `max |a - b| / max |b|`.
pub fn relative_linf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Strictly increasing positions in `[-half_width, half_width]`, values of one
/// sign, and positive weights.
pub fn random_samples(
    seed: u64,
    n: usize,
    half_width: f64,
    sign: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect();
    positions.sort_by(f64::total_cmp);
    positions.dedup();
    let values = positions
        .iter()
        .map(|_| sign * rng.random_range(1e-3..1.0))
        .collect();
    let weights = positions
        .iter()
        .map(|_| rng.random_range(1e-3..0.1))
        .collect();
    (positions, values, weights)
}
