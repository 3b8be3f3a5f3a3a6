//! Fixed-grid solver of the momentum form
//!
//! ```text
//! phi_t + y g phi_y = (y g_y - 4g) phi
//! ```
//!
//! on a truncated symmetric domain, first-order upwind in space and RK4 in
//! time. It exists to cross-check the particle solver and shares nothing with
//! it beyond the kernel scan. Also hosts the nonlocal velocity form and the
//! finite-difference residual of the original third-order equation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::initdata::MomentumProfile;
use crate::kernel::{self, FieldSample, StencilImage, UniformGrid, WeightedSamples};
use crate::math::{abs, max_abs};

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    grid: UniformGrid,
    phi: Vec<f64>,
    time: f64,
}

impl GridState {
    pub fn new(grid: UniformGrid, phi: Vec<f64>, time: f64) -> Result<Self> {
        if phi.len() != grid.points() {
            return Err(Error::Shape {
                what: "grid values",
                expected: grid.points(),
                found: phi.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter {
                name: "phi",
                reason: "grid values must be finite",
            });
        }
        Ok(Self { grid, phi, time })
    }

    pub fn from_profile(profile: &MomentumProfile, grid: UniformGrid) -> Self {
        Self {
            phi: profile.sample(&grid.nodes()),
            grid,
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn samples(&self) -> WeightedSamples {
        WeightedSamples::new(
            self.grid.nodes(),
            self.phi.clone(),
            self.grid.trapezoid_weights(),
        )
        .expect("grid nodes are ordered and phi is finite")
    }

    pub fn field(&self) -> FieldSample {
        kernel::reconstruct_field(&self.samples())
    }
}

/// `d phi / dt` on the grid.
pub fn eulerian_rhs(state: &GridState) -> Result<Vec<f64>> {
    Ok(rhs_with_field(state, &state.field()).0)
}

/// Returns the rate plus the largest advection speed and reaction rate.
fn rhs_with_field(state: &GridState, f: &FieldSample) -> (Vec<f64>, f64, f64) {
    let phi = &state.phi;
    let y = &f.positions;
    let n = phi.len();
    let h = state.grid.spacing();
    let mut out = vec![0.0; n];
    let mut max_speed = 0.0f64;
    let mut max_rate = 0.0f64;
    for i in 0..n {
        let speed = y[i] * f.g[i];
        let rate = y[i] * f.g_y[i] - 4.0 * f.g[i];
        let dphi = if i == 0 {
            (phi[1] - phi[0]) / h
        } else if i == n - 1 {
            (phi[n - 1] - phi[n - 2]) / h
        } else if speed > 0.0 {
            (phi[i] - phi[i - 1]) / h
        } else {
            (phi[i + 1] - phi[i]) / h
        };
        out[i] = -speed * dphi + rate * phi[i];
        max_speed = max_speed.max(abs(speed));
        max_rate = max_rate.max(abs(rate));
    }
    (out, max_speed, max_rate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerianConfig {
    pub t_end: f64,
    pub output_interval: f64,
    pub cfl: f64,
    pub blow_threshold: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for EulerianConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            output_interval: 0.1,
            cfl: 0.5,
            blow_threshold: 1e3,
            dt_min: 1e-12,
            dt_max: 0.05,
        }
    }
}

impl EulerianConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t_end)
            || !positive(self.output_interval)
            || self.output_interval > self.t_end
        {
            return Err(Error::Parameter {
                name: "t_end/output_interval",
                reason: "need 0 < output_interval <= t_end",
            });
        }
        if !positive(self.cfl) {
            return Err(Error::Parameter {
                name: "cfl",
                reason: "must be positive",
            });
        }
        if !positive(self.blow_threshold) {
            return Err(Error::Parameter {
                name: "blow_threshold",
                reason: "must be positive",
            });
        }
        if !positive(self.dt_min) || !positive(self.dt_max) || self.dt_min > self.dt_max {
            return Err(Error::Parameter {
                name: "dt_min/dt_max",
                reason: "need 0 < dt_min <= dt_max",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSnapshot {
    pub time: f64,
    pub state: GridState,
    pub field: FieldSample,
}

impl GridSnapshot {
    pub fn capture(state: &GridState) -> Self {
        Self {
            time: state.time,
            field: state.field(),
            state: state.clone(),
        }
    }

    pub fn g_at_zero(&self) -> f64 {
        self.field.g[self.state.grid.center()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTermination {
    Completed,
    BlowupDetected,
    StepUnderflow,
    Diverged,
}

impl GridTermination {
    pub fn as_str(self) -> &'static str {
        match self {
            GridTermination::Completed => "completed",
            GridTermination::BlowupDetected => "blowup_detected",
            GridTermination::StepUnderflow => "step_underflow",
            GridTermination::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerianRun {
    pub snapshots: Vec<GridSnapshot>,
    pub termination: GridTermination,
    pub final_time: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EulerianError {
    #[error(transparent)]
    Invalid(#[from] Error),
    /// Non-finite values appeared; `partial` ends with the last good state.
    #[error("grid solution diverged at t = {time}")]
    Divergence { time: f64, partial: EulerianRun },
}

/// RK4 with `dt = cfl / (max|y g| / h + max|y g_y - 4g|)`, clipped to the
/// next output time and `dt_max`.
pub fn eulerian_integrate(
    config: &EulerianConfig,
    state: GridState,
) -> core::result::Result<EulerianRun, EulerianError> {
    config.validate()?;
    let t0 = state.time;
    let t_end = t0 + config.t_end;
    let h = state.grid.spacing();
    let mut state = state;
    let mut snapshots = vec![GridSnapshot::capture(&state)];
    let mut output_index = 1usize;
    let mut steps = 0usize;

    let termination = loop {
        let field = state.field();
        let g0 = field.g[state.grid.center()];
        if abs(g0) >= config.blow_threshold {
            break GridTermination::BlowupDetected;
        }
        if state.time >= t_end {
            break GridTermination::Completed;
        }
        let (k1, speed, rate) = rhs_with_field(&state, &field);
        let denom = speed / h + rate;
        let mut dt = if denom > 0.0 {
            config.cfl / denom
        } else {
            config.dt_max
        };
        dt = dt.min(config.dt_max);
        if dt < config.dt_min {
            break GridTermination::StepUnderflow;
        }
        let next_output = (t0 + output_index as f64 * config.output_interval).min(t_end);
        let clipped = dt * (1.0 + 1e-6) >= next_output - state.time;
        if clipped {
            dt = next_output - state.time;
        }

        let stage = |base: &GridState, k: &[f64], c: f64| -> GridState {
            let phi = base.phi.iter().zip(k).map(|(p, k)| p + c * k).collect();
            GridState {
                grid: base.grid,
                phi,
                time: base.time + c,
            }
        };
        let k2 = eulerian_rhs(&stage(&state, &k1, 0.5 * dt))?;
        let k3 = eulerian_rhs(&stage(&state, &k2, 0.5 * dt))?;
        let k4 = eulerian_rhs(&stage(&state, &k3, dt))?;
        let phi: Vec<f64> = (0..state.phi.len())
            .map(|i| state.phi[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        steps += 1;
        let time = if clipped {
            next_output
        } else {
            state.time + dt
        };
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(EulerianError::Divergence {
                time,
                partial: EulerianRun {
                    final_time: state.time,
                    snapshots,
                    termination: GridTermination::Diverged,
                    steps,
                },
            });
        }
        state = GridState {
            grid: state.grid,
            phi,
            time,
        };
        if clipped {
            output_index += 1;
            snapshots.push(GridSnapshot::capture(&state));
        }
    };

    if snapshots.last().map(|s| s.time) != Some(state.time) {
        snapshots.push(GridSnapshot::capture(&state));
    }
    Ok(EulerianRun {
        final_time: state.time,
        snapshots,
        termination,
        steps,
    })
}

/// Right side of the nonlocal form
///
/// ```text
/// g_t = -g^2 - y g g_y - p * [4 g_y^2 + 3 g^2 + y d/dy (2 g_y^2 - g^2/2)],  p = e^{-|y|}/2
/// ```
///
/// on the symmetric grid of odd length `g.len()` with the given spacing.
/// Derivatives are central; the convolution uses the kernel scan with weight
/// `spacing` per node. Boundary entries are stencil copies.
pub fn nonlocal_gt(g: &[f64], spacing: f64) -> Result<StencilImage> {
    let n = g.len();
    if n < 5 || n.is_multiple_of(2) {
        return Err(Error::Shape {
            what: "nonlocal grid length (odd, >= 5)",
            expected: 5,
            found: n,
        });
    }
    kernel::check_spacing(spacing)?;
    let grid = UniformGrid::new(spacing * (n - 1) as f64 / 2.0, n)?;
    let y = grid.nodes();
    let g_y = central_first(g, spacing);
    let flux: Vec<f64> = g
        .iter()
        .zip(&g_y)
        .map(|(g, d)| 2.0 * d * d - 0.5 * g * g)
        .collect();
    let flux_y = central_first(&flux, spacing);
    let bracket: Vec<f64> = (0..n)
        .map(|i| 4.0 * g_y[i] * g_y[i] + 3.0 * g[i] * g[i] + y[i] * flux_y[i])
        .collect();
    let samples = WeightedSamples::new(y.clone(), bracket, vec![spacing; n])?;
    let conv = kernel::reconstruct_field(&samples).g;
    let mut values: Vec<f64> = (0..n)
        .map(|i| -g[i] * g[i] - y[i] * g[i] * g_y[i] - conv[i])
        .collect();
    values[0] = values[1];
    values[n - 1] = values[n - 2];
    Ok(StencilImage { values })
}

/// Central first difference, one-sided at the two ends.
fn central_first(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[0] = (v[1] - v[0]) / h;
    d[n - 1] = (v[n - 1] - v[n - 2]) / h;
    d
}

/// Residual of the third-order equation at the nodes `first_node..first_node + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFrame {
    pub time: f64,
    pub first_node: usize,
    pub values: Vec<f64>,
}

impl ResidualFrame {
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

/// Residual of
///
/// ```text
/// g_t - g_yyt + 4g^2 - 4 g g_yy - y g g_yyy + y g_y g_yy
/// ```
///
/// from snapshots `(t_k, g(t_k, .))` at uniform time steps on the symmetric
/// grid with the given spacing. One frame per interior time, covering nodes
/// `2..n-2`. All derivatives are second-order central differences.
pub fn main_equation_residual(
    frames: &[(f64, Vec<f64>)],
    spacing: f64,
) -> Result<Vec<ResidualFrame>> {
    if frames.len() < 3 {
        return Err(Error::Shape {
            what: "snapshot count",
            expected: 3,
            found: frames.len(),
        });
    }
    kernel::check_spacing(spacing)?;
    let n = frames[0].1.len();
    if n < 5 || n.is_multiple_of(2) {
        return Err(Error::Shape {
            what: "residual grid length (odd, >= 5)",
            expected: 5,
            found: n,
        });
    }
    if let Some(bad) = frames.iter().find(|f| f.1.len() != n) {
        return Err(Error::Shape {
            what: "snapshot length",
            expected: n,
            found: bad.1.len(),
        });
    }
    let tau = frames[1].0 - frames[0].0;
    if !(tau > 0.0) {
        return Err(Error::Usage("snapshot times must increase"));
    }
    for w in frames.windows(2) {
        if abs((w[1].0 - w[0].0) - tau) > 1e-9 * tau.max(1.0) {
            return Err(Error::Usage("snapshot times must be uniformly spaced"));
        }
    }

    let h = spacing;
    let m = (n - 1) as f64 / 2.0;
    let d2 = |v: &[f64], i: usize| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);

    let mut out = Vec::with_capacity(frames.len() - 2);
    for k in 1..frames.len() - 1 {
        let (prev, cur, next) = (&frames[k - 1].1, &frames[k].1, &frames[k + 1].1);
        let mut values = Vec::with_capacity(n - 4);
        for i in 2..n - 2 {
            let y = (i as f64 - m) * h;
            let g = cur[i];
            let g_t = (next[i] - prev[i]) / (2.0 * tau);
            let g_tyy = (d2(next, i) - d2(prev, i)) / (2.0 * tau);
            let g_y = (cur[i + 1] - cur[i - 1]) / (2.0 * h);
            let g_yy = d2(cur, i);
            let g_yyy =
                (cur[i + 2] - 2.0 * cur[i + 1] + 2.0 * cur[i - 1] - cur[i - 2]) / (2.0 * h * h * h);
            values
                .push(g_t - g_tyy + 4.0 * g * g - 4.0 * g * g_yy - y * g * g_yyy + y * g_y * g_yy);
        }
        out.push(ResidualFrame {
            time: frames[k].0,
            first_node: 2,
            values,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn bump_state(amplitude: f64, l: f64, n: usize) -> GridState {
        let grid = UniformGrid::new(l, n).unwrap();
        let p = MomentumProfile::rational_bump(amplitude, &grid).unwrap();
        GridState::from_profile(&p, grid)
    }

    #[test]
    fn zero_state_has_zero_rate() {
        let s = bump_state(0.0, 10.0, 101);
        assert!(eulerian_rhs(&s).unwrap().iter().all(|v| *v == 0.0));
        let run = eulerian_integrate(&EulerianConfig::default(), s).unwrap();
        assert_eq!(run.termination, GridTermination::Completed);
        assert!(run
            .snapshots
            .iter()
            .all(|s| s.state.phi().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn origin_node_is_pure_reaction() {
        let s = bump_state(1.0, 20.0, 401);
        let f = s.field();
        let d = eulerian_rhs(&s).unwrap();
        let c = s.grid().center();
        assert_eq!(d[c], -4.0 * f.g[c] * s.phi()[c]);
    }

    #[test]
    fn even_input_gives_even_rate() {
        let s = bump_state(1.0, 20.0, 401);
        let d = eulerian_rhs(&s).unwrap();
        let scale = max_abs(&d);
        for i in 0..401 {
            assert!((d[i] - d[400 - i]).abs() <= 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn rejects_wrong_length() {
        let grid = UniformGrid::new(1.0, 5).unwrap();
        assert!(GridState::new(grid, vec![0.0; 4], 0.0).is_err());
        assert!(GridState::new(grid, vec![f64::NAN; 5], 0.0).is_err());
    }

    #[test]
    fn nonlocal_of_zero_is_zero() {
        let img = nonlocal_gt(&[0.0; 11], 0.1).unwrap();
        assert!(img.values.iter().all(|v| *v == 0.0));
        assert!(nonlocal_gt(&[0.0; 10], 0.1).is_err());
    }

    #[test]
    fn residual_of_zero_is_zero() {
        let frames: Vec<(f64, Vec<f64>)> = (0..3).map(|k| (0.1 * k as f64, vec![0.0; 9])).collect();
        let r = main_equation_residual(&frames, 0.5).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].values.iter().all(|v| *v == 0.0));
        assert!(main_equation_residual(&frames[..2], 0.5).is_err());
    }

    #[test]
    fn manufactured_non_solution_is_flagged() {
        // g = (1+t) e^{-y^2}: at (0,0) the residual is
        // g_t - g_tyy + 4g^2 - 4g g_yy = 1 - (-2) + 4 - 4(-2) = 15.
        let mut errs = vec![];
        for (n, tau) in [(201usize, 0.01), (401, 0.005)] {
            let h = 10.0 / (n - 1) as f64;
            let frames: Vec<(f64, Vec<f64>)> = [-tau, 0.0, tau]
                .iter()
                .map(|&t| {
                    let g = (0..n)
                        .map(|i| {
                            let y = (i as f64 - (n - 1) as f64 / 2.0) * h;
                            (1.0 + t) * (-y * y).exp()
                        })
                        .collect();
                    (t, g)
                })
                .collect();
            let r = main_equation_residual(&frames, h).unwrap();
            let centre = (n - 1) / 2 - r[0].first_node;
            errs.push((r[0].values[centre] - 15.0).abs());
        }
        assert!(errs[0] < 0.05 && errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn uneven_times_are_rejected() {
        let frames = vec![
            (0.0, vec![0.0; 9]),
            (0.1, vec![0.0; 9]),
            (0.3, vec![0.0; 9]),
        ];
        assert!(matches!(
            main_equation_residual(&frames, 0.5),
            Err(Error::Usage(_))
        ));
    }
}
