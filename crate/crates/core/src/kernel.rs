//! Inversion of the Helmholtz operator `1 - d^2/dy^2` on the line.
//!
//! The Green's function is `p(y) = e^{-|y|} / 2`, so for a momentum density
//! `phi` the velocity is
//!
//! ```text
//! g(y)   = 1/2 sum_j e^{-|y - y_j|} phi_j w_j
//! g_y(y) = 1/2 sum_j sgn(y_j - y) e^{-|y - y_j|} phi_j w_j
//! ```
//!
//! Both sums are evaluated with two exponential scans. Writing `m_j = phi_j w_j`,
//!
//! ```text
//! A_i = A_{i-1} e^{-(y_i - y_{i-1})} + m_i      (left, inclusive)
//! B_i = B_{i+1} e^{-(y_{i+1} - y_i)} + m_i      (right, inclusive)
//! g_i   = (A_i + B_i - m_i) / 2
//! g_y,i = (B_i - A_i) / 2
//! ```
//!
//! Only non-positive exponents are ever formed, so the scan cannot overflow
//! regardless of how far apart the points are. The self term counts fully in
//! `g` and drops out of `g_y`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::math::exp;

/// Momentum samples with quadrature weights on a strictly increasing point set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    positions: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSamples {
    pub fn new(positions: Vec<f64>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Shape {
                what: "sample count",
                expected: 1,
                found: 0,
            });
        }
        for (what, len) in [("values", values.len()), ("weights", weights.len())] {
            if len != positions.len() {
                return Err(Error::Shape {
                    what,
                    expected: positions.len(),
                    found: len,
                });
            }
        }
        check_increasing(&positions)?;
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Parameter {
                name: "weights",
                reason: "quadrature weights must be finite and strictly positive",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter {
                name: "values",
                reason: "momentum values must be finite",
            });
        }
        Ok(Self {
            positions,
            values,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `value * weight` per sample: the point masses fed to the scan.
    pub fn masses(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w)
    }
}

/// `g` and `g_y` at an ordered set of positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldSample {
    pub positions: Vec<f64>,
    pub g: Vec<f64>,
    pub g_y: Vec<f64>,
}

impl FieldSample {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Inclusive one-sided accumulators of the exponential scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    /// `A_i = sum_{j <= i} e^{-(y_i - y_j)} m_j`
    pub left: Vec<f64>,
    /// `B_i = sum_{j >= i} e^{-(y_j - y_i)} m_j`
    pub right: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Accumulators {
    /// The two factors whose product is `g_i^2 - g_y,i^2`:
    /// `(A_i - m_i/2, B_i - m_i/2)`.
    pub fn factors(&self, i: usize) -> (f64, f64) {
        let half = 0.5 * self.masses[i];
        (self.left[i] - half, self.right[i] - half)
    }
}

pub fn scan_accumulators(samples: &WeightedSamples) -> Accumulators {
    let y = samples.positions();
    let masses: Vec<f64> = samples.masses().collect();
    let n = masses.len();

    let mut left = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        if i > 0 {
            acc *= exp(-(y[i] - y[i - 1]));
        }
        acc += masses[i];
        left[i] = acc;
    }

    let mut right = vec![0.0; n];
    acc = 0.0;
    for i in (0..n).rev() {
        if i + 1 < n {
            acc *= exp(-(y[i + 1] - y[i]));
        }
        acc += masses[i];
        right[i] = acc;
    }

    Accumulators {
        left,
        right,
        masses,
    }
}

/// `g` and `g_y` at the sample positions themselves, in `O(N)`.
pub fn reconstruct_field(samples: &WeightedSamples) -> FieldSample {
    let acc = scan_accumulators(samples);
    field_from_accumulators(samples.positions(), &acc)
}

pub(crate) fn field_from_accumulators(positions: &[f64], acc: &Accumulators) -> FieldSample {
    let (g, g_y) = acc
        .left
        .iter()
        .zip(&acc.right)
        .zip(&acc.masses)
        .map(|((a, b), m)| (0.5 * (a + b - m), 0.5 * (b - a)))
        .unzip();
    FieldSample {
        positions: positions.to_vec(),
        g,
        g_y,
    }
}

/// `g` and `g_y` at arbitrary strictly increasing query points.
///
/// A query that coincides with a sample position is treated like the
/// diagonal of [`reconstruct_field`].
pub fn evaluate_field_at(samples: &WeightedSamples, queries: &[f64]) -> Result<FieldSample> {
    check_increasing(queries)?;
    let y = samples.positions();
    let masses: Vec<f64> = samples.masses().collect();
    let n = y.len();
    let q = queries.len();

    // Mass strictly left of each query, and any coincident mass.
    let mut below = vec![0.0; q];
    let mut tie = vec![0.0; q];
    let mut acc = 0.0;
    let mut last = f64::NAN;
    let mut j = 0;
    for (k, &x) in queries.iter().enumerate() {
        while j < n && y[j] < x {
            if j > 0 {
                acc *= exp(-(y[j] - last));
            }
            acc += masses[j];
            last = y[j];
            j += 1;
        }
        if j > 0 {
            below[k] = acc * exp(-(x - last));
        }
        if j < n && y[j] == x {
            tie[k] = masses[j];
        }
    }

    let mut above = vec![0.0; q];
    acc = 0.0;
    last = f64::NAN;
    let mut j = n;
    for (k, &x) in queries.iter().enumerate().rev() {
        while j > 0 && y[j - 1] > x {
            if j < n {
                acc *= exp(-(last - y[j - 1]));
            }
            acc += masses[j - 1];
            last = y[j - 1];
            j -= 1;
        }
        if j < n {
            above[k] = acc * exp(-(last - x));
        }
    }

    let g = (0..q)
        .map(|k| 0.5 * (below[k] + above[k] + tie[k]))
        .collect();
    let g_y = (0..q).map(|k| 0.5 * (above[k] - below[k])).collect();
    Ok(FieldSample {
        positions: queries.to_vec(),
        g,
        g_y,
    })
}

/// Result of a three-point stencil on a uniform grid.
///
/// The first and last entries are copies of their interior neighbours and
/// must not be read as stencil output.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilImage {
    pub values: Vec<f64>,
}

impl StencilImage {
    pub fn interior_range(&self) -> Range<usize> {
        1..self.values.len() - 1
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[self.interior_range()]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.values.len()
    }
}

/// `phi = g - g_yy` with the central second difference.
pub fn helmholtz_apply(g: &[f64], spacing: f64) -> Result<StencilImage> {
    if g.len() < 3 {
        return Err(Error::Shape {
            what: "grid length",
            expected: 3,
            found: g.len(),
        });
    }
    check_spacing(spacing)?;
    let inv_h2 = 1.0 / (spacing * spacing);
    let n = g.len();
    let mut values = vec![0.0; n];
    for i in 1..n - 1 {
        values[i] = g[i] - (g[i + 1] - 2.0 * g[i] + g[i - 1]) * inv_h2;
    }
    values[0] = values[1];
    values[n - 1] = values[n - 2];
    Ok(StencilImage { values })
}

/// Symmetric uniform grid `y_i = (i - (n-1)/2) h` on `[-L, L]`, `n` odd.
///
/// Building nodes from the centre index keeps `y = 0` exact and the grid
/// exactly mirror-symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    half_width: f64,
    points: usize,
}

impl UniformGrid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Parameter {
                name: "L",
                reason: "half width must be positive and finite",
            });
        }
        if points < 3 || points.is_multiple_of(2) {
            return Err(Error::Parameter {
                name: "n",
                reason: "point count must be odd and at least 3",
            });
        }
        Ok(Self { half_width, points })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn center(&self) -> usize {
        (self.points - 1) / 2
    }

    pub fn node(&self, i: usize) -> f64 {
        let m = self.center() as f64;
        let h = self.spacing();
        (i as f64 - m) * h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.points];
        w[0] = 0.5 * h;
        w[self.points - 1] = 0.5 * h;
        w
    }
}

/// Trapezoid weights on an arbitrary strictly increasing point set.
pub fn trapezoid_weights(positions: &[f64]) -> Result<Vec<f64>> {
    check_increasing(positions)?;
    let n = positions.len();
    if n < 2 {
        return Err(Error::Shape {
            what: "trapezoid nodes",
            expected: 2,
            found: n,
        });
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (positions[i + 1] - positions[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    Ok(w)
}

/// Trapezoid integral of `values` sampled at `positions`.
pub fn trapezoid(positions: &[f64], values: &[f64]) -> f64 {
    positions
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
        .sum()
}

pub(crate) fn check_increasing(positions: &[f64]) -> Result<()> {
    for (i, w) in positions.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::Ordering { index: i + 1 });
        }
    }
    if positions.iter().any(|p| !p.is_finite()) {
        return Err(Error::Parameter {
            name: "positions",
            reason: "positions must be finite",
        });
    }
    Ok(())
}

pub(crate) fn check_spacing(spacing: f64) -> Result<()> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Parameter {
            name: "spacing",
            reason: "grid spacing must be positive and finite",
        });
    }
    Ok(())
}
