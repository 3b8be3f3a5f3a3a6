//! Checks of sign preservation, gradient and sup bounds, mass decay, the
//! Riccati comparison at the origin, the exponential envelope, and agreement
//! between the two solvers.
//!
//! Every check is a pure function of solver output in the solver-agnostic
//! [`Frame`] / [`SeriesRow`] form, so it can be replayed from files.
//! A record passes iff `residual <= tolerance`; checks whose hypotheses do not
//! hold return [`Verdict::NotApplicable`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eulerian::GridSnapshot;
use crate::initdata::SignClass;
use crate::kernel::{self, FieldSample, WeightedSamples};
use crate::lagrangian::{self, Snapshot};
use crate::math::{abs, exp, max_abs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: &'static str,
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl CheckRecord {
    pub fn evaluate(
        name: &'static str,
        time: f64,
        lhs: f64,
        rhs: f64,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        let verdict = if residual <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            name,
            time,
            lhs,
            rhs,
            residual,
            tolerance,
            verdict,
        }
    }

    pub fn not_applicable(name: &'static str, time: f64) -> Self {
        Self {
            name,
            time,
            lhs: f64::NAN,
            rhs: f64::NAN,
            residual: f64::NAN,
            tolerance: f64::NAN,
            verdict: Verdict::NotApplicable,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// The record with the largest `residual - tolerance`, preferring failures.
pub fn worst(records: &[CheckRecord]) -> Option<&CheckRecord> {
    records
        .iter()
        .filter(|r| r.verdict != Verdict::NotApplicable)
        .max_by(|a, b| {
            (a.residual - a.tolerance)
                .partial_cmp(&(b.residual - b.tolerance))
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .or_else(|| records.first())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetadata {
    pub config_hash: String,
    pub solver: String,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsReport {
    pub metadata: RunMetadata,
    pub checks: Vec<CheckRecord>,
}

impl DiagnosticsReport {
    pub fn new(metadata: RunMetadata) -> Self {
        Self {
            metadata,
            checks: Vec::new(),
        }
    }

    pub fn extend<I: IntoIterator<Item = CheckRecord>>(&mut self, records: I) {
        self.checks.extend(records);
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Solver output at one time: positions with `g`, `g_y`, and `phi`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub time: f64,
    pub positions: Vec<f64>,
    pub g: Vec<f64>,
    pub g_y: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Frame {
    pub fn field(&self) -> FieldSample {
        FieldSample {
            positions: self.positions.clone(),
            g: self.g.clone(),
            g_y: self.g_y.clone(),
        }
    }

    /// `g` at `y = 0` if the origin is a node.
    pub fn g_at_zero(&self) -> Option<f64> {
        self.positions
            .iter()
            .position(|y| *y == 0.0)
            .map(|i| self.g[i])
    }
}

impl From<&Snapshot> for Frame {
    fn from(s: &Snapshot) -> Self {
        Self {
            time: s.time,
            positions: s.field.positions.clone(),
            g: s.field.g.clone(),
            g_y: s.field.g_y.clone(),
            phi: s.phi.clone(),
        }
    }
}

impl From<&GridSnapshot> for Frame {
    fn from(s: &GridSnapshot) -> Self {
        Self {
            time: s.time,
            positions: s.field.positions.clone(),
            g: s.field.g.clone(),
            g_y: s.field.g_y.clone(),
            phi: s.state.phi().to_vec(),
        }
    }
}

/// One row of the time-series table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub g_at_zero: f64,
    pub int_g: f64,
    pub int_g2: f64,
    pub int_gy2: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    /// NaN for solvers without a flow map.
    pub min_gamma_y: f64,
    pub max_gamma_y: f64,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(*x), hi.max(*x))
        })
}

impl SeriesRow {
    /// Integrals are those of the particle field over the whole line; see
    /// [`lagrangian::field_integrals`].
    pub fn from_particles(s: &Snapshot) -> Result<Self> {
        let fi = lagrangian::field_integrals(&s.ensemble)?;
        let (min_phi, max_phi) = min_max(&s.phi);
        let (min_gamma_y, max_gamma_y) = min_max(s.ensemble.gamma_y());
        Ok(Self {
            t: s.time,
            g_at_zero: s.g_at_zero(),
            int_g: fi.int_g,
            int_g2: fi.int_g2,
            int_gy2: fi.int_gy2,
            min_phi,
            max_phi,
            min_gamma_y,
            max_gamma_y,
        })
    }

    /// Trapezoid integrals on the grid.
    pub fn from_grid(s: &GridSnapshot) -> Self {
        let y = &s.field.positions;
        let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<f64>>();
        let (min_phi, max_phi) = min_max(s.state.phi());
        Self {
            t: s.time,
            g_at_zero: s.g_at_zero(),
            int_g: kernel::trapezoid(y, &s.field.g),
            int_g2: kernel::trapezoid(y, &sq(&s.field.g)),
            int_gy2: kernel::trapezoid(y, &sq(&s.field.g_y)),
            min_phi,
            max_phi,
            min_gamma_y: f64::NAN,
            max_gamma_y: f64::NAN,
        }
    }
}

/// Per-check tolerances. Each is recorded next to its residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed sign violation relative to `max|phi|` (resp. `max|g|`).
    pub sign: f64,
    /// Allowed `|g_y| - |g|`.
    pub gradient: f64,
    /// Factorization residual relative to `max g^2`.
    pub factorization: f64,
    /// Relative mismatch of the mass-rate identity, before the truncation term.
    pub mass_rate: f64,
    /// Allowed increase of `int phi` over its initial value, relative.
    pub mass_bound: f64,
    pub sup_bound: f64,
    /// Allowed excess of `d g(t,0)/dt` over `-sqrt(6) g(t,0)^2`, relative.
    pub riccati_rate: f64,
    pub riccati_comparison: f64,
    /// Slack on `final_time + 1/(sqrt 6 |g(t,0)|)` vs `1/(sqrt 6 |g0(0)|)`.
    pub blowup_slack: f64,
    pub envelope: f64,
    pub transport: f64,
}

impl Tolerances {
    pub fn lagrangian() -> Self {
        Self {
            sign: 1e-10,
            gradient: 1e-6,
            factorization: 1e-12,
            mass_rate: 1e-2,
            mass_bound: 1e-12,
            sup_bound: 1e-6,
            riccati_rate: 1e-2,
            riccati_comparison: 1e-3,
            blowup_slack: 5e-4,
            envelope: 1e-5,
            transport: 5e-3,
        }
    }

    /// Sign and gradient slack grow with the upwind diffusion, `O(spacing)`.
    pub fn eulerian(spacing: f64) -> Self {
        Self {
            sign: 2.5e-5 * spacing,
            gradient: 1e-6,
            mass_rate: 5e-2,
            mass_bound: 1e-6,
            ..Self::lagrangian()
        }
    }
}

/// Largest sign violation of `phi` and of `g`, relative to the field's size.
pub fn check_sign_preservation(
    frames: &[Frame],
    sign_class: SignClass,
    tol: f64,
) -> [CheckRecord; 2] {
    let t0 = frames.first().map(|f| f.time).unwrap_or(0.0);
    let flip = match sign_class {
        SignClass::Nonnegative => 1.0,
        SignClass::Nonpositive => -1.0,
        SignClass::Mixed => {
            return [
                CheckRecord::not_applicable("sign_phi", t0),
                CheckRecord::not_applicable("sign_g", t0),
            ]
        }
    };
    let scan = |name: &'static str, pick: &dyn Fn(&Frame) -> &[f64]| {
        // (time, relative violation, signed extreme value)
        let mut worst = (t0, 0.0f64, 0.0f64);
        for (k, f) in frames.iter().enumerate() {
            let v = pick(f);
            let scale = max_abs(v).max(f64::MIN_POSITIVE);
            let extreme = v.iter().map(|x| flip * x).fold(f64::INFINITY, f64::min);
            let violation = if extreme < 0.0 { -extreme / scale } else { 0.0 };
            if k == 0 || violation > worst.1 {
                worst = (f.time, violation, extreme.min(f64::MAX));
            }
        }
        CheckRecord::evaluate(name, worst.0, worst.2, 0.0, worst.1, tol)
    };
    [scan("sign_phi", &|f| &f.phi), scan("sign_g", &|f| &f.g)]
}

/// `max(|g_y| - |g|, 0)` over the sample.
pub fn check_gradient_bound(
    field: &FieldSample,
    time: f64,
    applicable: bool,
    tol: f64,
) -> CheckRecord {
    if !applicable {
        return CheckRecord::not_applicable("gradient_bound", time);
    }
    let mut worst = (0.0f64, 0.0, 0.0);
    for (g, gy) in field.g.iter().zip(&field.g_y) {
        let excess = abs(*gy) - abs(*g);
        if excess > worst.0 {
            worst = (excess, abs(*gy), abs(*g));
        }
    }
    CheckRecord::evaluate("gradient_bound", time, worst.1, worst.2, worst.0, tol)
}

/// `max_i |g_i^2 - g_y,i^2 - (A_i - m_i/2)(B_i - m_i/2)|` relative to `max g^2`.
pub fn check_factorization_identity(
    samples: &WeightedSamples,
    field: &FieldSample,
    time: f64,
    tol: f64,
) -> Result<CheckRecord> {
    if field.positions.as_slice() != samples.positions() || field.g.len() != samples.len() {
        return Err(Error::Usage(
            "field was not reconstructed from these samples",
        ));
    }
    let acc = kernel::scan_accumulators(samples);
    let scale = field
        .g
        .iter()
        .map(|g| g * g)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst = (0.0f64, 0.0, 0.0);
    for i in 0..samples.len() {
        let (a, b) = acc.factors(i);
        let lhs = field.g[i] * field.g[i] - field.g_y[i] * field.g_y[i];
        let r = abs(lhs - a * b);
        if r >= worst.0 {
            worst = (r, lhs, a * b);
        }
    }
    Ok(CheckRecord::evaluate(
        "factorization_identity",
        time,
        worst.1,
        worst.2,
        worst.0 / scale,
        tol,
    ))
}

/// Three-point derivative on a possibly uneven stencil.
fn stencil_derivative(t: [f64; 3], v: [f64; 3]) -> f64 {
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    (-h1 / (h0 * (h0 + h1))) * v[0]
        + ((h1 - h0) / (h0 * h1)) * v[1]
        + (h0 / (h1 * (h0 + h1))) * v[2]
}

/// Mass-rate identity `d/dt int g = -2 (2 int g^2 + int g_y^2)` at interior
/// rows, `int phi(t) <= int phi0` at every row, and strict decrease of
/// `int g` when the field is nonzero.
///
/// The rate tolerance is `mass_rate |rhs|` plus ten times the central
/// difference truncation estimate `|r_{k+1} - 2 r_k + r_{k-1}| / 6`.
pub fn check_mass_decay(rows: &[SeriesRow], tol: &Tolerances) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    if rows.len() < 2 {
        out.push(CheckRecord::not_applicable(
            "mass_rate",
            rows.first().map_or(0.0, |r| r.t),
        ));
        return out;
    }
    let rate = |r: &SeriesRow| -2.0 * (2.0 * r.int_g2 + r.int_gy2);
    for k in 1..rows.len().saturating_sub(1) {
        let (a, b, c) = (&rows[k - 1], &rows[k], &rows[k + 1]);
        let lhs = stencil_derivative([a.t, b.t, c.t], [a.int_g, b.int_g, c.int_g]);
        let rhs = rate(b);
        let truncation = abs(rate(c) - 2.0 * rate(b) + rate(a)) / 6.0;
        let allowed = tol.mass_rate * abs(rhs) + 10.0 * truncation + 1e-14;
        out.push(CheckRecord::evaluate(
            "mass_rate",
            b.t,
            lhs,
            rhs,
            abs(lhs - rhs),
            allowed,
        ));
    }
    let m0 = rows[0].int_g;
    for r in rows {
        let excess = (r.int_g - m0).max(0.0);
        out.push(CheckRecord::evaluate(
            "mass_bound",
            r.t,
            r.int_g,
            m0,
            excess,
            tol.mass_bound * abs(m0) + 1e-15,
        ));
    }
    let nonzero = rows.iter().any(|r| r.int_g2 > 0.0);
    if nonzero {
        let mut worst = (rows[1].t, f64::NEG_INFINITY, 0.0, 0.0);
        for w in rows.windows(2) {
            let rise = w[1].int_g - w[0].int_g;
            if rise > worst.1 {
                worst = (w[1].t, rise, w[1].int_g, w[0].int_g);
            }
        }
        // strictly decreasing: every increment must be negative
        let residual = if worst.1 < 0.0 {
            0.0
        } else {
            worst.1.max(f64::MIN_POSITIVE)
        };
        out.push(CheckRecord::evaluate(
            "mass_decreasing",
            worst.0,
            worst.2,
            worst.3,
            residual,
            0.0,
        ));
    }
    out
}

/// `sup |g(t)| <= ||phi0||_1 / 2` for nonnegative momentum.
pub fn check_sup_bound(
    frames: &[Frame],
    phi0_l1: f64,
    sign_class: SignClass,
    tol: f64,
) -> CheckRecord {
    let t0 = frames.first().map_or(0.0, |f| f.time);
    if sign_class != SignClass::Nonnegative {
        return CheckRecord::not_applicable("sup_bound", t0);
    }
    let bound = 0.5 * phi0_l1;
    let (mut time, mut sup) = (t0, 0.0f64);
    for f in frames {
        let s = max_abs(&f.g);
        if s >= sup {
            sup = s;
            time = f.time;
        }
    }
    CheckRecord::evaluate("sup_bound", time, sup, bound, (sup - bound).max(0.0), tol)
}

/// Riccati checks on the origin series `(t, g(t, 0))` for even data with
/// `g0(0) < 0`:
/// - `riccati_rate`: `d g(t,0)/dt <= -sqrt(6) g(t,0)^2` at interior samples,
/// - `riccati_comparison`: `g(t,0) <= g0 / (1 + sqrt(6) g0 t)`,
/// - `blowup_estimate`: `t_last + 1/(sqrt(6)|g(t_last,0)|)` against the
///   a-priori bound `1/(sqrt(6)|g0(0)|)`.
pub fn check_riccati(
    series: &[(f64, f64)],
    g0_at_zero: f64,
    even: bool,
    tol: &Tolerances,
) -> Vec<CheckRecord> {
    let t0 = series.first().map_or(0.0, |s| s.0);
    if !even || !(g0_at_zero < 0.0) || series.is_empty() {
        return alloc::vec![
            CheckRecord::not_applicable("riccati_rate", t0),
            CheckRecord::not_applicable("riccati_comparison", t0),
            CheckRecord::not_applicable("blowup_estimate", t0),
        ];
    }
    let s6 = sqrt(6.0);
    let mut out = Vec::new();
    for k in 1..series.len().saturating_sub(1) {
        let (a, b, c) = (series[k - 1], series[k], series[k + 1]);
        let lhs = stencil_derivative([a.0, b.0, c.0], [a.1, b.1, c.1]);
        let rhs = -s6 * b.1 * b.1;
        out.push(CheckRecord::evaluate(
            "riccati_rate",
            b.0,
            lhs,
            rhs,
            (lhs - rhs).max(0.0),
            tol.riccati_rate * abs(rhs),
        ));
    }
    let t_star = 1.0 / (s6 * abs(g0_at_zero));
    for &(t, g) in series {
        if t - t0 < t_star {
            let w = g0_at_zero / (1.0 + s6 * g0_at_zero * (t - t0));
            out.push(CheckRecord::evaluate(
                "riccati_comparison",
                t,
                g,
                w,
                (g - w).max(0.0),
                tol.riccati_comparison,
            ));
        }
    }
    let (t_last, g_last) = series[series.len() - 1];
    let estimate = if g_last < 0.0 {
        t_last - t0 + 1.0 / (s6 * abs(g_last))
    } else {
        f64::INFINITY
    };
    out.push(CheckRecord::evaluate(
        "blowup_estimate",
        t_last,
        estimate,
        t_star,
        (estimate - t_star).max(0.0),
        tol.blowup_slack,
    ));
    out
}

/// `|g(t,0)| e^{-|y|} <= |g(t,y)| <= |g(t,0)| e^{|y|}` at every node.
pub fn check_envelope(
    field: &FieldSample,
    g_at_zero: f64,
    time: f64,
    applicable: bool,
    tol: f64,
) -> CheckRecord {
    if !applicable {
        return CheckRecord::not_applicable("envelope", time);
    }
    let g0 = abs(g_at_zero);
    let mut worst = (0.0f64, 0.0, 0.0);
    for (y, g) in field.positions.iter().zip(&field.g) {
        let e = exp(-abs(*y));
        let lower = g0 * e;
        let upper = if e > 0.0 { g0 / e } else { f64::INFINITY };
        let a = abs(*g);
        if lower - a > worst.0 {
            worst = (lower - a, a, lower);
        }
        if a - upper > worst.0 {
            worst = (a - upper, a, upper);
        }
    }
    CheckRecord::evaluate("envelope", time, worst.1, worst.2, worst.0, tol)
}

pub(crate) fn interpolate_linear(x: &[f64], v: &[f64], at: f64) -> Option<f64> {
    if x.len() < 2 || at < x[0] || at > x[x.len() - 1] {
        return None;
    }
    let k = x.partition_point(|p| *p <= at).clamp(1, x.len() - 1);
    let s = (at - x[k - 1]) / (x[k] - x[k - 1]);
    Some(v[k - 1] + s * (v[k] - v[k - 1]))
}

fn match_times<'a>(
    particles: &'a [Frame],
    grid: &'a [Frame],
) -> Result<Vec<(&'a Frame, &'a Frame)>> {
    let mut pairs = Vec::new();
    for p in particles {
        let tol = 1e-9 * p.time.abs().max(1.0);
        if let Some(g) = grid.iter().find(|g| abs(g.time - p.time) <= tol) {
            pairs.push((p, g));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Usage("no common output times between the two runs"));
    }
    Ok(pairs)
}

fn relative_difference(
    particles: &Frame,
    grid: &Frame,
    pick: impl Fn(&Frame) -> &[f64],
) -> (f64, f64, f64) {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    let pv = pick(particles);
    let gv = pick(grid);
    for (x, v) in particles.positions.iter().zip(pv) {
        if let Some(e) = interpolate_linear(&grid.positions, gv, *x) {
            diff = diff.max(abs(v - e));
            scale = scale.max(abs(*v));
        }
    }
    let rel = if scale > 0.0 { diff / scale } else { diff };
    (rel, diff, scale)
}

fn compare_frames(
    name: &'static str,
    particles: &[Frame],
    grid: &[Frame],
    tol: f64,
    pick: impl Fn(&Frame) -> &[f64] + Copy,
) -> Result<Vec<CheckRecord>> {
    let reference = particles.first().map_or(0.0, |f| max_abs(pick(f)));
    Ok(match_times(particles, grid)?
        .into_iter()
        .map(|(p, g)| {
            let (rel, diff, scale) = relative_difference(p, g, pick);
            let growth = if reference > 0.0 {
                scale / reference
            } else {
                1.0
            };
            CheckRecord::evaluate(name, p.time, diff, scale, rel, tol * growth.max(1.0))
        })
        .collect())
}

/// Momentum along particle trajectories against the grid solution,
/// interpolated linearly to the particle positions. One record per common
/// output time; the residual is `max|diff| / max|phi_particles|`.
///
/// The grid error is first order with a constant proportional to the size of
/// the solution, so the tolerance is `tol * max(1, max|phi(t)| / max|phi(t0)|)`.
pub fn check_transport_consistency(
    particles: &[Frame],
    grid: &[Frame],
    tol: f64,
) -> Result<Vec<CheckRecord>> {
    compare_frames("transport_consistency", particles, grid, tol, |f| &f.phi)
}

/// Same comparison for the velocity `g`.
pub fn check_field_agreement(
    particles: &[Frame],
    grid: &[Frame],
    tol: f64,
) -> Result<Vec<CheckRecord>> {
    compare_frames("field_agreement", particles, grid, tol, |f| &f.g)
}
