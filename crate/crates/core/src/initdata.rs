//! Initial momentum profiles `phi0 = g0 - g0''` and their admissibility checks.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{self, FieldSample, UniformGrid, WeightedSamples};
use crate::math::abs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `a (1 + y^2)^{-2}`.
    RationalBump,
    /// The rational bump with amplitude fitted to a prescribed `g0(0)`.
    ScaledRationalBump,
    /// Piecewise linear through tabulated samples, zero outside them.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignClass {
    Nonnegative,
    Nonpositive,
    Mixed,
}

impl SignClass {
    pub fn classify(values: &[f64]) -> Self {
        let any_neg = values.iter().any(|v| *v < 0.0);
        let any_pos = values.iter().any(|v| *v > 0.0);
        match (any_pos, any_neg) {
            (_, false) => SignClass::Nonnegative,
            (false, true) => SignClass::Nonpositive,
            (true, true) => SignClass::Mixed,
        }
    }

    pub fn is_single_signed(self) -> bool {
        self != SignClass::Mixed
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignClass::Nonnegative => "nonnegative",
            SignClass::Nonpositive => "nonpositive",
            SignClass::Mixed => "mixed",
        }
    }
}

/// Initial momentum together with its verified hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumProfile {
    kind: ProfileKind,
    amplitude: f64,
    samples: Option<WeightedSamples>,
    decay_constant: f64,
    sign_class: SignClass,
    even: bool,
}

/// Ratio `y^2|phi0|(edge) / y^2|phi0|(L/2)` above which decay is rejected.
/// An `O(1/y)` tail gives 2, an `O(1/y^2)` tail tends to 1.
const DECAY_GROWTH_LIMIT: f64 = 1.5;

impl MomentumProfile {
    /// `amplitude * (1 + y^2)^{-2}` checked on `grid`.
    pub fn rational_bump(amplitude: f64, grid: &UniformGrid) -> Result<Self> {
        Self::bump(ProfileKind::RationalBump, amplitude, grid)
    }

    fn bump(kind: ProfileKind, amplitude: f64, grid: &UniformGrid) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::Parameter {
                name: "amplitude",
                reason: "amplitude must be finite",
            });
        }
        let mut profile = Self {
            kind,
            amplitude,
            samples: None,
            // sup y^2/(1+y^2)^2 = 1/4 at y = 1
            decay_constant: abs(amplitude) / 4.0,
            sign_class: SignClass::Nonnegative,
            even: true,
        };
        profile.verify(grid)?;
        Ok(profile)
    }

    /// Piecewise linear profile through `(positions, values)`.
    pub fn tabulated(positions: Vec<f64>, values: Vec<f64>, grid: &UniformGrid) -> Result<Self> {
        let weights = kernel::trapezoid_weights(&positions)?;
        let samples = WeightedSamples::new(positions, values, weights)?;
        let mut profile = Self {
            kind: ProfileKind::Tabulated,
            amplitude: 1.0,
            samples: Some(samples),
            decay_constant: 0.0,
            sign_class: SignClass::Nonnegative,
            even: true,
        };
        profile.verify(grid)?;
        Ok(profile)
    }

    /// Recomputes sign class, evenness, and the decay constant on `grid`.
    fn verify(&mut self, grid: &UniformGrid) -> Result<()> {
        let y = grid.nodes();
        let phi = self.sample(&y);
        self.sign_class = SignClass::classify(&phi);

        let scale = crate::math::max_abs(&phi);
        let n = y.len();
        self.even = (0..n / 2).all(|i| abs(phi[i] - phi[n - 1 - i]) <= 1e-13 * scale);

        let weighted: Vec<f64> = y.iter().zip(&phi).map(|(y, p)| y * y * abs(*p)).collect();
        let sup = weighted.iter().cloned().fold(0.0, f64::max);
        if sup > self.decay_constant {
            self.decay_constant = sup;
        }

        let quarter = n / 4;
        for (edge, interior) in [(0, quarter), (n - 1, n - 1 - quarter)] {
            let (e, m) = (weighted[edge], weighted[interior]);
            if e > DECAY_GROWTH_LIMIT * m && e > f64::MIN_POSITIVE {
                return Err(Error::Decay {
                    edge: e,
                    interior: m,
                });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn samples(&self) -> Option<&WeightedSamples> {
        self.samples.as_ref()
    }

    pub fn decay_constant(&self) -> f64 {
        self.decay_constant
    }

    pub fn sign_class(&self) -> SignClass {
        self.sign_class
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    pub fn value_at(&self, y: f64) -> f64 {
        match (&self.kind, &self.samples) {
            (ProfileKind::Tabulated, Some(s)) => interpolate(s.positions(), s.values(), y),
            _ => {
                let d = 1.0 + y * y;
                self.amplitude / (d * d)
            }
        }
    }

    pub fn sample(&self, positions: &[f64]) -> Vec<f64> {
        positions.iter().map(|y| self.value_at(*y)).collect()
    }

    /// Upper bound on `||phi0||_1`: trapezoid on `grid` plus the tail
    /// `2 M / L` implied by the decay constant.
    pub fn l1_norm_bound(&self, grid: &UniformGrid) -> f64 {
        let y = grid.nodes();
        let abs_phi: Vec<f64> = self.sample(&y).into_iter().map(abs).collect();
        kernel::trapezoid(&y, &abs_phi) + 2.0 * self.decay_constant / grid.half_width()
    }
}

/// Linear interpolation, zero outside `[x_0, x_last]`.
pub(crate) fn interpolate(x: &[f64], v: &[f64], at: f64) -> f64 {
    if x.is_empty() || at < x[0] || at > x[x.len() - 1] {
        return 0.0;
    }
    let k = x.partition_point(|p| *p <= at);
    if k == 0 {
        return v[0];
    }
    if k >= x.len() {
        return v[x.len() - 1];
    }
    let (x0, x1) = (x[k - 1], x[k]);
    let s = (at - x0) / (x1 - x0);
    v[k - 1] + s * (v[k] - v[k - 1])
}

/// How `g0` is supplied to [`momentum_from_velocity`].
pub enum VelocitySource<'a> {
    /// `g0` and `g0''` as functions.
    Analytic {
        value: &'a dyn Fn(f64) -> f64,
        second_derivative: &'a dyn Fn(f64) -> f64,
    },
    /// `g0` at the nodes of the grid.
    Sampled(&'a [f64]),
}

/// `phi0 = g0 - g0''` tabulated on `grid`.
///
/// Sampled input goes through [`kernel::helmholtz_apply`]; its two boundary
/// nodes take the stencil's copied values.
pub fn momentum_from_velocity(
    source: VelocitySource<'_>,
    grid: &UniformGrid,
) -> Result<MomentumProfile> {
    let y = grid.nodes();
    let phi = match source {
        VelocitySource::Analytic {
            value,
            second_derivative,
        } => y
            .iter()
            .map(|y| value(*y) - second_derivative(*y))
            .collect(),
        VelocitySource::Sampled(g) => {
            if g.len() != grid.points() {
                return Err(Error::Shape {
                    what: "velocity samples",
                    expected: grid.points(),
                    found: g.len(),
                });
            }
            kernel::helmholtz_apply(g, grid.spacing())?.values
        }
    };
    MomentumProfile::tabulated(y, phi, grid)
}

/// `g0`, `g0'` on the nodes of `grid` by trapezoid reconstruction.
pub fn velocity_from_momentum(
    profile: &MomentumProfile,
    grid: &UniformGrid,
) -> Result<FieldSample> {
    let y = grid.nodes();
    let phi = profile.sample(&y);
    let samples = WeightedSamples::new(y, phi, grid.trapezoid_weights())?;
    Ok(kernel::reconstruct_field(&samples))
}

/// Even, nonpositive bump `-c (1 + y^2)^{-2}` whose discrete `g0(0)` on
/// `grid` equals `target`.
pub fn blowup_profile(target_g0_at_zero: f64, grid: &UniformGrid) -> Result<MomentumProfile> {
    if !(target_g0_at_zero < 0.0) || !target_g0_at_zero.is_finite() {
        return Err(Error::Parameter {
            name: "target_g0",
            reason: "target g0(0) must be negative and finite",
        });
    }
    let unit = MomentumProfile::rational_bump(1.0, grid)?;
    let g = velocity_from_momentum(&unit, grid)?;
    let q = g.g[grid.center()];
    MomentumProfile::bump(ProfileKind::ScaledRationalBump, target_g0_at_zero / q, grid)
}
