//! Run configuration.
//!
//! The file is flat `key = value` TOML with one level of section headers.
//! Every key is unique across sections, so each can also be set by a flag of
//! the same name.
//!
//! ```toml
//! [run]
//! solver = "both"            # lagrangian | eulerian | both
//! expect_blowup = false
//! resolutions = [1001, 2001, 4001]
//! compare_tolerance = 5e-3
//!
//! [initial]
//! profile = "rational_bump"  # zero | rational_bump | blowup | tabulated
//! amplitude = 1.0
//! target_g0 = -1.0
//! profile_path = "phi0.dat"
//!
//! [grid]
//! L = 40.0
//! n = 2001
//!
//! [time]
//! t_end = 1.0
//! output_interval = 0.1
//! rk_tolerance = 1e-8
//! cfl = 0.5
//! dt_min = 1e-12
//! dt_max = 0.05
//!
//! [limits]
//! a_min = 1e-4
//! b_max = 1e4
//! blow_threshold = 1e3
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use contactflow_core::eulerian::EulerianConfig;
use contactflow_core::initdata::{blowup_profile, MomentumProfile};
use contactflow_core::kernel::UniformGrid;
use contactflow_core::lagrangian::IntegrationConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::format;

/// Upper limit on the number of output times per run.
const MAX_OUTPUTS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Lagrangian,
    Eulerian,
    Both,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Lagrangian => "lagrangian",
            SolverKind::Eulerian => "eulerian",
            SolverKind::Both => "both",
        }
    }

    pub fn runs_lagrangian(self) -> bool {
        self != SolverKind::Eulerian
    }

    pub fn runs_eulerian(self) -> bool {
        self != SolverKind::Lagrangian
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ProfileFamily {
    Zero,
    RationalBump,
    Blowup,
    Tabulated,
}

impl ProfileFamily {
    pub const ALL: [ProfileFamily; 4] = [
        ProfileFamily::Zero,
        ProfileFamily::RationalBump,
        ProfileFamily::Blowup,
        ProfileFamily::Tabulated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileFamily::Zero => "zero",
            ProfileFamily::RationalBump => "rational_bump",
            ProfileFamily::Blowup => "blowup",
            ProfileFamily::Tabulated => "tabulated",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ProfileFamily::Zero => "phi0 = 0",
            ProfileFamily::RationalBump => "phi0 = amplitude (1 + y^2)^-2",
            ProfileFamily::Blowup => {
                "phi0 = -c (1 + y^2)^-2 with c chosen so g0(0) = target_g0 < 0"
            }
            ProfileFamily::Tabulated => {
                "phi0 interpolated linearly from profile_path (columns: y phi), zero outside"
            }
        }
    }

    pub fn parameters(self) -> &'static str {
        match self {
            ProfileFamily::Zero => "",
            ProfileFamily::RationalBump => "amplitude",
            ProfileFamily::Blowup => "target_g0",
            ProfileFamily::Tabulated => "profile_path",
        }
    }
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line(usize),
    Flag,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{}", field_message(.origin, .at, .key, .reason))]
    Field {
        origin: String,
        at: Origin,
        key: &'static str,
        reason: String,
    },
}

fn field_message(origin: &str, at: &Origin, key: &str, reason: &str) -> String {
    match at {
        Origin::Line(line) => format!("{origin}:{line}: {key}: {reason}"),
        Origin::Flag => format!("--{key}: {reason}"),
        Origin::Default => format!("{key}: {reason}"),
    }
}

/// Values supplied on the command line; each replaces the key of the same name.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// Solver(s) to run.
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Treat blowup as the expected outcome.
    #[arg(long = "expect_blowup")]
    pub expect_blowup: Option<bool>,
    /// Comma-separated node counts for `compare`.
    #[arg(long, value_delimiter = ',')]
    pub resolutions: Option<Vec<i64>>,
    /// Relative L-infinity tolerance for solver comparisons.
    #[arg(long = "compare_tolerance")]
    pub compare_tolerance: Option<f64>,
    /// Initial-data family (see `list-profiles`).
    #[arg(long)]
    pub profile: Option<ProfileFamily>,
    /// Scale of the rational bump.
    #[arg(long, allow_negative_numbers = true)]
    pub amplitude: Option<f64>,
    /// Target g0(0) for the blowup family; must be negative.
    #[arg(long = "target_g0", allow_negative_numbers = true)]
    pub target_g0: Option<f64>,
    /// Two-column table (y phi) for the tabulated family.
    #[arg(long = "profile_path")]
    pub profile_path: Option<PathBuf>,
    /// Domain half-width.
    #[arg(long = "L", allow_negative_numbers = true)]
    pub half_width: Option<f64>,
    /// Number of nodes (odd).
    #[arg(long, allow_negative_numbers = true)]
    pub n: Option<i64>,
    /// Final time.
    #[arg(long = "t_end", allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Time between snapshots.
    #[arg(long = "output_interval", allow_negative_numbers = true)]
    pub output_interval: Option<f64>,
    /// Per-step error tolerance of the particle integrator.
    #[arg(long = "rk_tolerance")]
    pub rk_tolerance: Option<f64>,
    /// Courant number of the grid solver.
    #[arg(long, allow_negative_numbers = true)]
    pub cfl: Option<f64>,
    /// Smallest adaptive step before giving up.
    #[arg(long = "dt_min")]
    pub dt_min: Option<f64>,
    /// Largest adaptive step.
    #[arg(long = "dt_max")]
    pub dt_max: Option<f64>,
    /// Lower validity bound on gamma_y.
    #[arg(long = "a_min", allow_negative_numbers = true)]
    pub a_min: Option<f64>,
    /// Upper validity bound on gamma_y.
    #[arg(long = "b_max")]
    pub b_max: Option<f64>,
    /// |g(t, 0)| at which blowup is declared.
    #[arg(long = "blow_threshold")]
    pub blow_threshold: Option<f64>,
}

type Field<T> = Option<Spanned<T>>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    limits: RawLimits,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    solver: Field<SolverKind>,
    expect_blowup: Field<bool>,
    resolutions: Field<Vec<i64>>,
    compare_tolerance: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    profile: Field<ProfileFamily>,
    amplitude: Field<f64>,
    target_g0: Field<f64>,
    profile_path: Field<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(rename = "L")]
    half_width: Field<f64>,
    n: Field<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_end: Field<f64>,
    output_interval: Field<f64>,
    rk_tolerance: Field<f64>,
    cfl: Field<f64>,
    dt_min: Field<f64>,
    dt_max: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    a_min: Field<f64>,
    b_max: Field<f64>,
    blow_threshold: Field<f64>,
}

#[derive(Serialize)]
struct ResolvedFile<'a> {
    run: ResolvedRun<'a>,
    initial: ResolvedInitial<'a>,
    grid: ResolvedGrid,
    time: ResolvedTime,
    limits: ResolvedLimits,
}

#[derive(Serialize)]
struct ResolvedRun<'a> {
    solver: SolverKind,
    expect_blowup: bool,
    resolutions: &'a [usize],
    compare_tolerance: f64,
}

#[derive(Serialize)]
struct ResolvedInitial<'a> {
    profile: ProfileFamily,
    amplitude: f64,
    target_g0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile_path: Option<&'a Path>,
}

#[derive(Serialize)]
struct ResolvedGrid {
    #[serde(rename = "L")]
    half_width: f64,
    n: usize,
}

#[derive(Serialize)]
struct ResolvedTime {
    t_end: f64,
    output_interval: f64,
    rk_tolerance: f64,
    cfl: f64,
    dt_min: f64,
    dt_max: f64,
}

#[derive(Serialize)]
struct ResolvedLimits {
    a_min: f64,
    b_max: f64,
    blow_threshold: f64,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub solver: SolverKind,
    pub expect_blowup: bool,
    /// Extra node counts for the refinement table of `compare`.
    pub resolutions: Vec<usize>,
    /// Relative L-infinity tolerance for cross-solver comparisons.
    pub compare_tolerance: f64,
    pub profile: ProfileFamily,
    pub amplitude: f64,
    pub target_g0: f64,
    pub profile_path: Option<PathBuf>,
    pub half_width: f64,
    pub n: usize,
    pub t_end: f64,
    pub output_interval: f64,
    pub rk_tolerance: f64,
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub a_min: f64,
    pub b_max: f64,
    pub blow_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let lagrangian = IntegrationConfig::default();
        let eulerian = EulerianConfig::default();
        Self {
            solver: SolverKind::Lagrangian,
            expect_blowup: false,
            resolutions: Vec::new(),
            compare_tolerance: 5e-3,
            profile: ProfileFamily::RationalBump,
            amplitude: 1.0,
            target_g0: -1.0,
            profile_path: None,
            half_width: 40.0,
            n: 2001,
            t_end: lagrangian.t_end,
            output_interval: lagrangian.output_interval,
            rk_tolerance: lagrangian.rk_tolerance,
            cfl: eulerian.cfl,
            dt_min: lagrangian.dt_min,
            dt_max: lagrangian.dt_max,
            a_min: lagrangian.a_min,
            b_max: lagrangian.b_max,
            blow_threshold: lagrangian.blow_threshold,
        }
    }
}

struct Builder<'a> {
    text: &'a str,
    origin: &'a str,
    at: BTreeMap<&'static str, Origin>,
}

impl Builder<'_> {
    fn line_of<T>(&self, v: &Spanned<T>) -> Origin {
        let start = v.span().start.min(self.text.len());
        Origin::Line(self.text[..start].matches('\n').count() + 1)
    }

    fn error(&self, key: &'static str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            origin: self.origin.to_string(),
            at: self.at.get(key).copied().unwrap_or(Origin::Default),
            key,
            reason: reason.into(),
        }
    }

    fn take<T>(&mut self, key: &'static str, slot: &mut T, field: Field<T>) {
        if let Some(v) = field {
            self.at.insert(key, self.line_of(&v));
            *slot = v.into_inner();
        }
    }

    fn flag<T>(&mut self, key: &'static str, slot: &mut T, value: Option<T>) {
        if let Some(v) = value {
            self.at.insert(key, Origin::Flag);
            *slot = v;
        }
    }
}

fn count(b: &Builder<'_>, key: &'static str, v: i64) -> Result<usize, ConfigError> {
    if v < 3 || v % 2 == 0 {
        return Err(b.error(key, format!("must be an odd integer >= 3, got {v}")));
    }
    usize::try_from(v).map_err(|_| b.error(key, "too large"))
}

impl SolverConfig {
    /// Reads `path`; a relative `profile_path` is taken relative to the
    /// directory of `path`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string(), overrides)?;
        if let (Some(p), Some(dir)) = (&cfg.profile_path, path.parent()) {
            if p.is_relative() && overrides.profile_path.is_none() {
                cfg.profile_path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    /// Parses configuration text. `origin` names the source in messages.
    pub fn parse(text: &str, origin: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let mut b = Builder {
            text,
            origin,
            at: BTreeMap::new(),
        };
        let mut c = SolverConfig::default();
        let mut n = c.n as i64;
        let mut resolutions: Vec<i64> = Vec::new();
        let mut profile_path: Option<PathBuf> = None;

        let RawFile {
            run,
            initial,
            grid,
            time,
            limits,
        } = raw;
        b.take("solver", &mut c.solver, run.solver);
        b.take("expect_blowup", &mut c.expect_blowup, run.expect_blowup);
        b.take("resolutions", &mut resolutions, run.resolutions);
        b.take(
            "compare_tolerance",
            &mut c.compare_tolerance,
            run.compare_tolerance,
        );
        b.take("profile", &mut c.profile, initial.profile);
        b.take("amplitude", &mut c.amplitude, initial.amplitude);
        b.take("target_g0", &mut c.target_g0, initial.target_g0);
        if let Some(p) = initial.profile_path {
            b.at.insert("profile_path", b.line_of(&p));
            profile_path = Some(p.into_inner());
        }
        b.take("L", &mut c.half_width, grid.half_width);
        b.take("n", &mut n, grid.n);
        b.take("t_end", &mut c.t_end, time.t_end);
        b.take(
            "output_interval",
            &mut c.output_interval,
            time.output_interval,
        );
        b.take("rk_tolerance", &mut c.rk_tolerance, time.rk_tolerance);
        b.take("cfl", &mut c.cfl, time.cfl);
        b.take("dt_min", &mut c.dt_min, time.dt_min);
        b.take("dt_max", &mut c.dt_max, time.dt_max);
        b.take("a_min", &mut c.a_min, limits.a_min);
        b.take("b_max", &mut c.b_max, limits.b_max);
        b.take(
            "blow_threshold",
            &mut c.blow_threshold,
            limits.blow_threshold,
        );

        let o = overrides.clone();
        b.flag("solver", &mut c.solver, o.solver);
        b.flag("expect_blowup", &mut c.expect_blowup, o.expect_blowup);
        b.flag("resolutions", &mut resolutions, o.resolutions);
        b.flag(
            "compare_tolerance",
            &mut c.compare_tolerance,
            o.compare_tolerance,
        );
        b.flag("profile", &mut c.profile, o.profile);
        b.flag("amplitude", &mut c.amplitude, o.amplitude);
        b.flag("target_g0", &mut c.target_g0, o.target_g0);
        if o.profile_path.is_some() {
            b.flag("profile_path", &mut profile_path, Some(o.profile_path));
        }
        b.flag("L", &mut c.half_width, o.half_width);
        b.flag("n", &mut n, o.n);
        b.flag("t_end", &mut c.t_end, o.t_end);
        b.flag("output_interval", &mut c.output_interval, o.output_interval);
        b.flag("rk_tolerance", &mut c.rk_tolerance, o.rk_tolerance);
        b.flag("cfl", &mut c.cfl, o.cfl);
        b.flag("dt_min", &mut c.dt_min, o.dt_min);
        b.flag("dt_max", &mut c.dt_max, o.dt_max);
        b.flag("a_min", &mut c.a_min, o.a_min);
        b.flag("b_max", &mut c.b_max, o.b_max);
        b.flag("blow_threshold", &mut c.blow_threshold, o.blow_threshold);

        c.n = count(&b, "n", n)?;
        c.resolutions = resolutions
            .into_iter()
            .map(|r| count(&b, "resolutions", r))
            .collect::<Result<_, _>>()?;
        c.profile_path = profile_path;
        c.validate(&b)?;
        Ok(c)
    }

    fn validate(&self, b: &Builder<'_>) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(b.error(key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("L", self.half_width)?;
        positive("t_end", self.t_end)?;
        positive("output_interval", self.output_interval)?;
        positive("rk_tolerance", self.rk_tolerance)?;
        positive("cfl", self.cfl)?;
        positive("dt_min", self.dt_min)?;
        positive("dt_max", self.dt_max)?;
        positive("a_min", self.a_min)?;
        positive("b_max", self.b_max)?;
        positive("blow_threshold", self.blow_threshold)?;
        positive("compare_tolerance", self.compare_tolerance)?;
        if self.output_interval > self.t_end {
            return Err(b.error("output_interval", "must not exceed t_end"));
        }
        if self.t_end / self.output_interval > MAX_OUTPUTS {
            return Err(b.error("output_interval", "more than 10^6 output times"));
        }
        if self.cfl > 1.0 {
            return Err(b.error("cfl", format!("must be at most 1, got {}", self.cfl)));
        }
        if self.dt_max < self.dt_min {
            return Err(b.error("dt_max", "must be at least dt_min"));
        }
        if self.a_min >= 1.0 {
            return Err(b.error("a_min", format!("must lie in (0, 1), got {}", self.a_min)));
        }
        if self.b_max <= 1.0 {
            return Err(b.error("b_max", format!("must exceed 1, got {}", self.b_max)));
        }
        if !self.amplitude.is_finite() {
            return Err(b.error("amplitude", "must be finite"));
        }
        match self.profile {
            ProfileFamily::Blowup if !(self.target_g0 < 0.0 && self.target_g0.is_finite()) => {
                return Err(b.error("target_g0", "must be negative and finite"));
            }
            ProfileFamily::Tabulated if self.profile_path.is_none() => {
                return Err(b.error("profile_path", "required by profile = \"tabulated\""));
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical text of every setting, defaults included.
    pub fn resolved(&self) -> String {
        let file = ResolvedFile {
            run: ResolvedRun {
                solver: self.solver,
                expect_blowup: self.expect_blowup,
                resolutions: &self.resolutions,
                compare_tolerance: self.compare_tolerance,
            },
            initial: ResolvedInitial {
                profile: self.profile,
                amplitude: self.amplitude,
                target_g0: self.target_g0,
                profile_path: self.profile_path.as_deref(),
            },
            grid: ResolvedGrid {
                half_width: self.half_width,
                n: self.n,
            },
            time: ResolvedTime {
                t_end: self.t_end,
                output_interval: self.output_interval,
                rk_tolerance: self.rk_tolerance,
                cfl: self.cfl,
                dt_min: self.dt_min,
                dt_max: self.dt_max,
            },
            limits: ResolvedLimits {
                a_min: self.a_min,
                b_max: self.b_max,
                blow_threshold: self.blow_threshold,
            },
        };
        toml::to_string(&file).expect("resolved configuration is plain data")
    }

    /// SHA-256 of [`Self::resolved`], lower-case hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.resolved().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn grid(&self) -> contactflow_core::Result<UniformGrid> {
        UniformGrid::new(self.half_width, self.n)
    }

    pub fn with_nodes(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn integration(&self) -> IntegrationConfig {
        IntegrationConfig {
            t_end: self.t_end,
            output_interval: self.output_interval,
            rk_tolerance: self.rk_tolerance,
            a_min: self.a_min,
            b_max: self.b_max,
            blow_threshold: self.blow_threshold,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
        }
    }

    pub fn eulerian(&self) -> EulerianConfig {
        EulerianConfig {
            t_end: self.t_end,
            output_interval: self.output_interval,
            cfl: self.cfl,
            blow_threshold: self.blow_threshold,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
        }
    }

    /// Builds and checks the initial momentum on `grid`.
    pub fn profile(&self, grid: &UniformGrid) -> anyhow::Result<MomentumProfile> {
        use anyhow::Context;
        Ok(match self.profile {
            ProfileFamily::Zero => MomentumProfile::rational_bump(0.0, grid)?,
            ProfileFamily::RationalBump => MomentumProfile::rational_bump(self.amplitude, grid)?,
            ProfileFamily::Blowup => blowup_profile(self.target_g0, grid)?,
            ProfileFamily::Tabulated => {
                let path = self
                    .profile_path
                    .as_deref()
                    .context("profile_path is not set")?;
                let table = format::read_table(path, 2)?;
                let (y, phi): (Vec<f64>, Vec<f64>) = table.iter().map(|r| (r[0], r[1])).unzip();
                MomentumProfile::tabulated(y, phi, grid)
                    .with_context(|| format!("profile table {}", path.display()))?
            }
        })
    }
}

impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.resolved())
    }
}
