//! Subcommands: run the solvers, write their output, and assess it.
//!
//! Output directory layout:
//!
//! ```text
//! config.resolved             every setting, defaults filled in
//! report.txt, report.tsv      check records of all solvers
//! convergence.dat             compare with resolutions only
//! <solver>/snapshot_NNNNN.dat position g g_y phi
//! <solver>/samples_NNNNN.dat  position value weight (kernel input)
//! <solver>/timeseries.dat
//! <solver>/summary.dat
//! ```
//!
//! Reports are always computed from the files just written, so `diagnose`
//! on the same directory reproduces them byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use contactflow_core::diagnostics::{
    self, CheckRecord, DiagnosticsReport, Frame, RunMetadata, SeriesRow, Tolerances,
};
use contactflow_core::eulerian::{eulerian_integrate, EulerianError, EulerianRun, GridState};
use contactflow_core::initdata::{MomentumProfile, SignClass};
use contactflow_core::kernel::{UniformGrid, WeightedSamples};
use contactflow_core::lagrangian::{self, integrate_with, ParticleEnsemble, Termination};

use crate::config::{Overrides, ProfileFamily, SolverConfig, SolverKind};
use crate::format::{self, num, FrameHeader, SeriesWriter, Summary};

pub const CONFIG_FILE: &str = "config.resolved";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_TABLE: &str = "report.tsv";
pub const CONVERGENCE_FILE: &str = "convergence.dat";
pub const SUMMARY_FILE: &str = "summary.dat";
pub const SERIES_FILE: &str = "timeseries.dat";

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    InvalidInput = 1,
    Blowup = 2,
    Abnormal = 3,
    DiagnosticFailure = 4,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Lagrangian,
    Eulerian,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Lagrangian => "lagrangian",
            Solver::Eulerian => "eulerian",
        }
    }

    fn selected(kind: SolverKind) -> Vec<Solver> {
        let mut out = Vec::new();
        if kind.runs_lagrangian() {
            out.push(Solver::Lagrangian);
        }
        if kind.runs_eulerian() {
            out.push(Solver::Eulerian);
        }
        out
    }
}

pub fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:05}.dat")
}

pub fn samples_name(k: usize) -> String {
    format!("samples_{k:05}.dat")
}

/// Everything a solver leaves on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub solver: Solver,
    pub frames: Vec<Frame>,
    pub samples: Vec<WeightedSamples>,
    pub series: Vec<SeriesRow>,
    pub summary: Summary,
}

/// One line of the refinement table written by `compare`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub spacing: f64,
    /// Largest relative transport difference over common output times.
    pub transport: f64,
    /// Same for the velocity.
    pub field: f64,
    pub last_common_time: f64,
}

/// Result of a subcommand.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: ExitStatus,
    pub report: DiagnosticsReport,
    pub scopes: Vec<String>,
    pub summaries: Vec<(Solver, Summary)>,
    pub convergence: Vec<ConvergenceRow>,
}

/// Runs the configured solver(s) and writes output and report under `out`.
pub fn run(cfg: &SolverConfig, out: &Path) -> Result<Outcome> {
    execute(cfg, out, false)
}

/// Runs both solvers, compares them, and tabulates the differences for every
/// entry of `resolutions`.
pub fn compare(cfg: &SolverConfig, out: &Path) -> Result<Outcome> {
    if cfg.solver != SolverKind::Both {
        bail!(
            "compare requires solver = \"both\", found \"{}\"",
            cfg.solver.as_str()
        );
    }
    execute(cfg, out, true)
}

fn execute(cfg: &SolverConfig, out: &Path, with_table: bool) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let profile = cfg.profile(&grid)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    format::write_text(&out.join(CONFIG_FILE), &cfg.resolved())?;

    let solvers = Solver::selected(cfg.solver);
    std::thread::scope(|s| -> Result<()> {
        let handles: Vec<_> = solvers
            .iter()
            .map(|&solver| {
                let (grid, profile) = (&grid, &profile);
                s.spawn(move || solve(cfg, solver, grid, profile, &out.join(solver.name())))
            })
            .collect();
        for h in handles {
            h.join()
                .map_err(|_| anyhow::anyhow!("solver thread panicked"))??;
        }
        Ok(())
    })?;

    let table = out.join(CONVERGENCE_FILE);
    if with_table && !cfg.resolutions.is_empty() {
        let rows = convergence_table(cfg)?;
        write_convergence(&table, &rows)?;
    } else if table.exists() {
        fs::remove_file(&table).with_context(|| format!("removing stale {}", table.display()))?;
    }
    diagnose_directory(cfg, out)
}

/// Recomputes the report of an existing output directory.
pub fn diagnose(out: &Path) -> Result<Outcome> {
    let cfg = SolverConfig::load(&out.join(CONFIG_FILE), &Overrides::default())?;
    diagnose_directory(&cfg, out)
}

fn diagnose_directory(cfg: &SolverConfig, out: &Path) -> Result<Outcome> {
    let outputs = Solver::selected(cfg.solver)
        .into_iter()
        .map(|s| load_output(s, &out.join(s.name())))
        .collect::<Result<Vec<_>>>()?;
    let table = out.join(CONVERGENCE_FILE);
    let convergence = if table.exists() {
        read_convergence(&table)?
    } else {
        Vec::new()
    };
    let (report, scopes) = assess(cfg, &outputs, &convergence)?;
    let notes: Vec<(String, String)> = outputs
        .iter()
        .flat_map(|o| {
            let name = o.solver.name();
            let s = &o.summary;
            [
                (format!("{name}.termination"), s.termination.clone()),
                (format!("{name}.final_time"), num(s.final_time)),
                (
                    format!("{name}.blowup_estimate"),
                    s.blowup_estimate.map_or_else(|| "none".into(), num),
                ),
            ]
        })
        .collect();
    format::write_text(
        &out.join(REPORT_TEXT),
        &format::report_text(&report, &scopes, &notes),
    )?;
    format::write_text(
        &out.join(REPORT_TABLE),
        &format::report_table(&report, &scopes),
    )?;
    let summaries: Vec<(Solver, Summary)> = outputs
        .iter()
        .map(|o| (o.solver, o.summary.clone()))
        .collect();
    let status = exit_status(&report, &summaries, cfg.expect_blowup);
    Ok(Outcome {
        status,
        report,
        scopes,
        summaries,
        convergence,
    })
}

fn exit_status(
    report: &DiagnosticsReport,
    summaries: &[(Solver, Summary)],
    expect_blowup: bool,
) -> ExitStatus {
    if !report.all_passed() {
        return ExitStatus::DiagnosticFailure;
    }
    let mut status = ExitStatus::Success;
    for (_, s) in summaries {
        let this = match s.termination.as_str() {
            "completed" => ExitStatus::Success,
            "blowup_detected" => ExitStatus::Blowup,
            _ if expect_blowup => ExitStatus::Blowup,
            _ => ExitStatus::Abnormal,
        };
        status = status.max(this);
    }
    status
}

/// Creates `dir` and removes output files a previous run may have left.
fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ours = (name.starts_with("snapshot_") || name.starts_with("samples_"))
            && name.ends_with(".dat")
            || name == SERIES_FILE
            || name == SUMMARY_FILE;
        if ours {
            fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
    }
    Ok(())
}

fn solve(
    cfg: &SolverConfig,
    solver: Solver,
    grid: &UniformGrid,
    profile: &MomentumProfile,
    dir: &Path,
) -> Result<()> {
    prepare_dir(dir)?;
    let header = |time: f64| FrameHeader {
        time,
        solver: solver.name().to_string(),
        n: grid.points(),
        half_width: grid.half_width(),
    };
    let mut series = SeriesWriter::create(&dir.join(SERIES_FILE))?;
    let mut count = 0usize;
    let mut emit = |frame: &Frame, samples: &WeightedSamples, row: &SeriesRow| -> Result<()> {
        let h = header(frame.time);
        format::write_snapshot(&dir.join(snapshot_name(count)), &h, frame)?;
        format::write_samples(&dir.join(samples_name(count)), &h, samples)?;
        series.push(row)?;
        count += 1;
        Ok(())
    };

    let summary = match solver {
        Solver::Lagrangian => {
            let mut failure = None;
            let result = integrate_with(
                &cfg.integration(),
                ParticleEnsemble::new(profile, grid),
                |s| {
                    if failure.is_none() {
                        let written = lagrangian::effective_momentum(&s.ensemble)
                            .map_err(anyhow::Error::from)
                            .and_then(|samples| {
                                let row = SeriesRow::from_particles(s)?;
                                emit(&Frame::from(s), &samples, &row)
                            });
                        failure = written.err();
                    }
                    false
                },
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            Summary {
                termination: result.termination.as_str().to_string(),
                final_time: result.final_time,
                blowup_estimate: result.blowup_estimate,
                steps: result.accepted_steps,
                rejected_steps: result.rejected_steps,
                snapshots: 0,
            }
        }
        Solver::Eulerian => {
            let run = eulerian_run(cfg, grid, profile)?;
            for s in &run.snapshots {
                emit(
                    &Frame::from(s),
                    &s.state.samples(),
                    &SeriesRow::from_grid(s),
                )?;
            }
            let g0 = run.snapshots.last().map_or(0.0, |s| s.g_at_zero());
            let stopped = run.termination.as_str() != Termination::Completed.as_str();
            Summary {
                termination: run.termination.as_str().to_string(),
                final_time: run.final_time,
                blowup_estimate: (stopped && g0 < 0.0)
                    .then(|| run.final_time + 1.0 / (6f64.sqrt() * g0.abs())),
                steps: run.steps,
                rejected_steps: 0,
                snapshots: 0,
            }
        }
    };
    series.finish()?;
    format::write_summary(
        &dir.join(SUMMARY_FILE),
        &Summary {
            snapshots: count,
            ..summary
        },
    )?;
    Ok(())
}

/// A diverged grid run still yields its snapshots up to the last good state.
fn eulerian_run(
    cfg: &SolverConfig,
    grid: &UniformGrid,
    profile: &MomentumProfile,
) -> Result<EulerianRun> {
    match eulerian_integrate(&cfg.eulerian(), GridState::from_profile(profile, *grid)) {
        Ok(run) => Ok(run),
        Err(EulerianError::Divergence { partial, .. }) => Ok(partial),
        Err(EulerianError::Invalid(e)) => Err(e.into()),
    }
}

pub fn load_output(solver: Solver, dir: &Path) -> Result<SolverOutput> {
    let summary = format::read_summary(&dir.join(SUMMARY_FILE))?;
    let mut frames = Vec::with_capacity(summary.snapshots);
    let mut samples = Vec::with_capacity(summary.snapshots);
    for k in 0..summary.snapshots {
        let (header, frame) = format::read_snapshot(&dir.join(snapshot_name(k)))?;
        if header.solver != solver.name() {
            bail!("{}: written by solver {}", dir.display(), header.solver);
        }
        frames.push(frame);
        samples.push(format::read_samples(&dir.join(samples_name(k)))?);
    }
    let series = format::read_series(&dir.join(SERIES_FILE))?;
    if frames.is_empty() || series.len() != frames.len() {
        bail!(
            "{}: {} snapshots but {} time-series rows",
            dir.display(),
            frames.len(),
            series.len()
        );
    }
    Ok(SolverOutput {
        solver,
        frames,
        samples,
        series,
        summary,
    })
}

/// Initial-data properties recovered from the first snapshot.
struct InitialData {
    sign_class: SignClass,
    even: bool,
    l1_bound: f64,
}

fn initial_data(cfg: &SolverConfig, first: &Frame) -> Result<InitialData> {
    let grid = cfg.grid()?;
    let p = MomentumProfile::tabulated(first.positions.clone(), first.phi.clone(), &grid)
        .context("initial snapshot")?;
    Ok(InitialData {
        sign_class: p.sign_class(),
        even: p.is_even(),
        l1_bound: p.l1_norm_bound(&grid),
    })
}

/// All check records of the given outputs, with the scope of each record.
pub fn assess(
    cfg: &SolverConfig,
    outputs: &[SolverOutput],
    convergence: &[ConvergenceRow],
) -> Result<(DiagnosticsReport, Vec<String>)> {
    let mut report = DiagnosticsReport::new(RunMetadata {
        config_hash: cfg.hash(),
        solver: cfg.solver.as_str().to_string(),
        nodes: cfg.n,
    });
    let mut scopes = Vec::new();
    let mut add = |scope: &str, records: Vec<CheckRecord>| {
        scopes.extend(std::iter::repeat_n(scope.to_string(), records.len()));
        report.extend(records);
    };
    for o in outputs {
        add(o.solver.name(), solver_checks(cfg, o)?);
    }
    let find = |s: Solver| outputs.iter().find(|o| o.solver == s);
    if let (Some(l), Some(e)) = (find(Solver::Lagrangian), find(Solver::Eulerian)) {
        let mut records =
            diagnostics::check_transport_consistency(&l.frames, &e.frames, cfg.compare_tolerance)?;
        records.extend(diagnostics::check_field_agreement(
            &l.frames,
            &e.frames,
            cfg.compare_tolerance,
        )?);
        add("compare", records);
    }
    if convergence.len() >= 2 {
        add("compare", refinement_checks(convergence));
    }
    Ok((report, scopes))
}

fn solver_checks(cfg: &SolverConfig, o: &SolverOutput) -> Result<Vec<CheckRecord>> {
    let init = initial_data(cfg, &o.frames[0])?;
    let tol = match o.solver {
        Solver::Lagrangian => Tolerances::lagrangian(),
        Solver::Eulerian => Tolerances::eulerian(cfg.grid()?.spacing()),
    };
    let mut records = Vec::new();
    records.extend(diagnostics::check_sign_preservation(
        &o.frames,
        init.sign_class,
        tol.sign,
    ));
    let single = init.sign_class.is_single_signed();
    let envelope = init.sign_class == SignClass::Nonpositive && init.even;
    for (frame, samples) in o.frames.iter().zip(&o.samples) {
        let field = frame.field();
        let g0 = frame.g_at_zero().unwrap_or(f64::NAN);
        records.push(diagnostics::check_gradient_bound(
            &field,
            frame.time,
            single,
            tol.gradient,
        ));
        records.push(diagnostics::check_factorization_identity(
            samples,
            &field,
            frame.time,
            tol.factorization,
        )?);
        records.push(diagnostics::check_envelope(
            &field,
            g0,
            frame.time,
            envelope,
            tol.envelope,
        ));
    }
    records.extend(diagnostics::check_mass_decay(&o.series, &tol));
    records.push(diagnostics::check_sup_bound(
        &o.frames,
        init.l1_bound,
        init.sign_class,
        tol.sup_bound,
    ));
    let origin: Vec<(f64, f64)> = o.series.iter().map(|r| (r.t, r.g_at_zero)).collect();
    records.extend(diagnostics::check_riccati(
        &origin,
        origin[0].1,
        init.even,
        &tol,
    ));
    if cfg.expect_blowup {
        let s = &o.summary;
        let last = o.series.last().map_or(f64::NAN, |r| r.g_at_zero.abs());
        let missed = if s.termination == "completed" {
            1.0
        } else {
            0.0
        };
        records.push(CheckRecord::evaluate(
            "expect_blowup",
            s.final_time,
            last,
            cfg.blow_threshold,
            missed,
            0.0,
        ));
    }
    Ok(records)
}

/// Differences must not grow as the node count increases.
fn refinement_checks(rows: &[ConvergenceRow]) -> Vec<CheckRecord> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.n);
    let time = rows
        .iter()
        .map(|r| r.last_common_time)
        .fold(f64::INFINITY, f64::min);
    let growth = |pick: fn(&ConvergenceRow) -> f64| {
        rows.windows(2)
            .map(|w| pick(&w[1]) - pick(&w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let record = |name, pick: fn(&ConvergenceRow) -> f64| {
        let g = growth(pick);
        let (first, last) = (pick(&rows[0]), pick(&rows[rows.len() - 1]));
        CheckRecord::evaluate(
            name,
            time,
            last,
            first,
            if g < 0.0 {
                0.0
            } else {
                g.max(f64::MIN_POSITIVE)
            },
            0.0,
        )
    };
    vec![
        record("refinement_transport", |r| r.transport),
        record("refinement_field", |r| r.field),
    ]
}

fn convergence_table(cfg: &SolverConfig) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.resolutions {
        let c = cfg.with_nodes(n);
        let grid = c.grid()?;
        let profile = c.profile(&grid)?;
        let (particles, cells) = std::thread::scope(|s| {
            let h = s.spawn(|| -> Result<Vec<Frame>> {
                let mut frames = Vec::new();
                integrate_with(
                    &c.integration(),
                    ParticleEnsemble::new(&profile, &grid),
                    |snap| {
                        frames.push(Frame::from(snap));
                        false
                    },
                )?;
                Ok(frames)
            });
            let cells = eulerian_run(&c, &grid, &profile)
                .map(|r| r.snapshots.iter().map(Frame::from).collect::<Vec<_>>());
            (h.join(), cells)
        });
        let particles = particles.map_err(|_| anyhow::anyhow!("solver thread panicked"))??;
        let cells = cells?;
        let tr = diagnostics::check_transport_consistency(&particles, &cells, c.compare_tolerance)?;
        let fa = diagnostics::check_field_agreement(&particles, &cells, c.compare_tolerance)?;
        let worst = |r: &[CheckRecord]| r.iter().map(|x| x.residual).fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            n,
            spacing: grid.spacing(),
            transport: worst(&tr),
            field: worst(&fa),
            last_common_time: tr.iter().map(|r| r.time).fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(rows)
}

fn write_convergence(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut text =
        String::from("# columns = n spacing transport_linf field_linf last_common_time\n");
    for r in rows {
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            num(r.n as f64),
            num(r.spacing),
            num(r.transport),
            num(r.field),
            num(r.last_common_time)
        ));
    }
    Ok(format::write_text(path, &text)?)
}

pub fn read_convergence(path: &Path) -> Result<Vec<ConvergenceRow>> {
    Ok(format::read_table(path, 5)?
        .into_iter()
        .map(|r| ConvergenceRow {
            n: r[0] as usize,
            spacing: r[1],
            transport: r[2],
            field: r[3],
            last_common_time: r[4],
        })
        .collect())
}

/// Profile families and their parameters, one per line.
pub fn list_profiles() -> String {
    ProfileFamily::ALL
        .iter()
        .map(|p| {
            let params = match p.parameters() {
                "" => String::new(),
                s => format!(" [{s}]"),
            };
            format!("{}{params}: {}\n", p.as_str(), p.describe())
        })
        .collect()
}

/// Path of solver output below `out`.
pub fn solver_dir(out: &Path, solver: Solver) -> PathBuf {
    out.join(solver.name())
}
