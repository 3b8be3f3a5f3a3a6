//! Plain-text output files.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` exactly. Header lines start with `#` and
//! carry `key = value` pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use contactflow_core::diagnostics::{DiagnosticsReport, Frame, SeriesRow};
use contactflow_core::kernel::WeightedSamples;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` in one go.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_error(path))
}

fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_error(path))
}

fn write_row(w: &mut impl Write, row: &[f64]) -> io::Result<()> {
    let mut line = String::with_capacity(row.len() * 24);
    for (k, x) in row.iter().enumerate() {
        if k > 0 {
            line.push(' ');
        }
        line.push_str(&num(*x));
    }
    line.push('\n');
    w.write_all(line.as_bytes())
}

/// Header pairs and numeric rows of a whitespace-separated table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: BTreeMap<String, String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

/// Reads a table whose rows all have `columns` numbers.
pub fn read_table_with_header(path: &Path, columns: usize) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut table = Table::default();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                table
                    .header
                    .insert(key.trim().to_string(), value.trim().to_string());
            }
            continue;
        }
        let parse_error = |message: String| FormatError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message,
        };
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| parse_error(format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns {
            return Err(parse_error(format!(
                "expected {columns} columns, found {}",
                row.len()
            )));
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    Ok(read_table_with_header(path, columns)?.rows)
}

/// Header values shared by snapshot and sample files.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameHeader {
    pub time: f64,
    pub solver: String,
    pub n: usize,
    pub half_width: f64,
}

fn write_header(w: &mut impl Write, h: &FrameHeader, columns: &str) -> io::Result<()> {
    writeln!(w, "# time = {}", num(h.time))?;
    writeln!(w, "# solver = {}", h.solver)?;
    writeln!(w, "# n = {}", h.n)?;
    writeln!(w, "# L = {}", num(h.half_width))?;
    writeln!(w, "# columns = {columns}")
}

fn header_value<T: std::str::FromStr>(path: &Path, table: &Table, key: &str) -> Result<T> {
    table
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| FormatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("missing or invalid header `{key}`"),
        })
}

fn read_header(path: &Path, table: &Table) -> Result<FrameHeader> {
    Ok(FrameHeader {
        time: header_value(path, table, "time")?,
        solver: header_value(path, table, "solver")?,
        n: header_value(path, table, "n")?,
        half_width: header_value(path, table, "L")?,
    })
}

/// Rows `position g g_y phi`.
pub fn write_snapshot(path: &Path, header: &FrameHeader, frame: &Frame) -> Result<()> {
    write_with(path, |w| {
        write_header(w, header, "position g g_y phi")?;
        for i in 0..frame.positions.len() {
            write_row(
                w,
                &[frame.positions[i], frame.g[i], frame.g_y[i], frame.phi[i]],
            )?;
        }
        Ok(())
    })
}

pub fn read_snapshot(path: &Path) -> Result<(FrameHeader, Frame)> {
    let table = read_table_with_header(path, 4)?;
    let header = read_header(path, &table)?;
    let frame = Frame {
        time: header.time,
        positions: table.column(0),
        g: table.column(1),
        g_y: table.column(2),
        phi: table.column(3),
    };
    Ok((header, frame))
}

/// Rows `position value weight` of the weighted momentum behind a snapshot.
pub fn write_samples(path: &Path, header: &FrameHeader, samples: &WeightedSamples) -> Result<()> {
    write_with(path, |w| {
        write_header(w, header, "position value weight")?;
        for i in 0..samples.len() {
            write_row(
                w,
                &[
                    samples.positions()[i],
                    samples.values()[i],
                    samples.weights()[i],
                ],
            )?;
        }
        Ok(())
    })
}

pub fn read_samples(path: &Path) -> Result<WeightedSamples> {
    let table = read_table_with_header(path, 3)?;
    WeightedSamples::new(table.column(0), table.column(1), table.column(2)).map_err(|e| {
        FormatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        }
    })
}

pub const SERIES_COLUMNS: &str =
    "t g_at_zero int_g int_g2 int_gy2 min_phi max_phi min_gamma_y max_gamma_y";

/// Appends rows to a time-series file as the run progresses.
pub struct SeriesWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl SeriesWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(io_error(path))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# columns = {SERIES_COLUMNS}").map_err(io_error(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn push(&mut self, r: &SeriesRow) -> Result<()> {
        write_row(
            &mut self.out,
            &[
                r.t,
                r.g_at_zero,
                r.int_g,
                r.int_g2,
                r.int_gy2,
                r.min_phi,
                r.max_phi,
                r.min_gamma_y,
                r.max_gamma_y,
            ],
        )
        .map_err(io_error(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(io_error(&self.path))
    }
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    Ok(read_table(path, 9)?
        .into_iter()
        .map(|r| SeriesRow {
            t: r[0],
            g_at_zero: r[1],
            int_g: r[2],
            int_g2: r[3],
            int_gy2: r[4],
            min_phi: r[5],
            max_phi: r[6],
            min_gamma_y: r[7],
            max_gamma_y: r[8],
        })
        .collect())
}

/// How a solver run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub termination: String,
    pub final_time: f64,
    pub blowup_estimate: Option<f64>,
    pub steps: usize,
    pub rejected_steps: usize,
    pub snapshots: usize,
}

pub fn write_summary(path: &Path, s: &Summary) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "termination = {}", s.termination);
    let _ = writeln!(text, "final_time = {}", num(s.final_time));
    let estimate = s.blowup_estimate.map_or_else(|| "none".to_string(), num);
    let _ = writeln!(text, "blowup_estimate = {estimate}");
    let _ = writeln!(text, "steps = {}", s.steps);
    let _ = writeln!(text, "rejected_steps = {}", s.rejected_steps);
    let _ = writeln!(text, "snapshots = {}", s.snapshots);
    write_text(path, &text)
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let table = Table {
        header: map,
        rows: Vec::new(),
    };
    let estimate: String = header_value(path, &table, "blowup_estimate")?;
    Ok(Summary {
        termination: header_value(path, &table, "termination")?,
        final_time: header_value(path, &table, "final_time")?,
        blowup_estimate: if estimate == "none" {
            None
        } else {
            Some(header_value(path, &table, "blowup_estimate")?)
        },
        steps: header_value(path, &table, "steps")?,
        rejected_steps: header_value(path, &table, "rejected_steps")?,
        snapshots: header_value(path, &table, "snapshots")?,
    })
}

/// One record per line: `scope name time residual tolerance verdict`.
pub fn report_text(
    report: &DiagnosticsReport,
    scopes: &[String],
    notes: &[(String, String)],
) -> String {
    let mut out = String::new();
    let m = &report.metadata;
    let _ = writeln!(out, "# config_hash = {}", m.config_hash);
    let _ = writeln!(out, "# solver = {}", m.solver);
    let _ = writeln!(out, "# nodes = {}", m.nodes);
    for (k, v) in notes {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let failures = report.failures().count();
    let _ = writeln!(out, "# checks = {}", report.checks.len());
    let _ = writeln!(out, "# failures = {failures}");
    let _ = writeln!(
        out,
        "# columns = scope name time residual tolerance verdict"
    );
    for (scope, c) in scopes.iter().zip(&report.checks) {
        let _ = writeln!(
            out,
            "{scope} {} {} {} {} {}",
            c.name,
            num(c.time),
            num(c.residual),
            num(c.tolerance),
            c.verdict.as_str()
        );
    }
    out
}

/// Tab-separated table with a header row, every record field included.
pub fn report_table(report: &DiagnosticsReport, scopes: &[String]) -> String {
    let mut out = String::from("scope\tname\ttime\tlhs\trhs\tresidual\ttolerance\tverdict\n");
    for (scope, c) in scopes.iter().zip(&report.checks) {
        let _ = writeln!(
            out,
            "{scope}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.name,
            num(c.time),
            num(c.lhs),
            num(c.rhs),
            num(c.residual),
            num(c.tolerance),
            c.verdict.as_str()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        for x in [
            0.1,
            -1.0 / 3.0,
            1e-300,
            5e-324,
            f64::MAX,
            0.0,
            -0.0,
            f64::NAN,
            f64::INFINITY,
        ] {
            let back: f64 = num(x).parse().unwrap();
            assert!(
                back.to_bits() == x.to_bits() || (x.is_nan() && back.is_nan()),
                "{x}"
            );
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dat");
        let frame = Frame {
            time: 0.3,
            positions: vec![-1.0, 0.0, 1.0],
            g: vec![0.1, 0.2, 1.0 / 3.0],
            g_y: vec![0.0, -0.0, 1e-17],
            phi: vec![1.0, 2.0, 3.0],
        };
        let h = FrameHeader {
            time: 0.3,
            solver: "lagrangian".into(),
            n: 3,
            half_width: 1.0,
        };
        write_snapshot(&path, &h, &frame).unwrap();
        let (h2, f2) = read_snapshot(&path).unwrap();
        assert_eq!(h2, h);
        assert_eq!(f2, frame);
    }

    #[test]
    fn malformed_rows_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dat");
        fs::write(&path, "# c\n1 2\n3 x\n").unwrap();
        let e = read_table(&path, 2).unwrap_err();
        assert!(e.to_string().contains(":3:"), "{e}");
        fs::write(&path, "1 2 3\n").unwrap();
        assert!(read_table(&path, 2).is_err());
    }

    #[test]
    fn summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.dat");
        for estimate in [None, Some(0.3)] {
            let s = Summary {
                termination: "completed".into(),
                final_time: 1.0,
                blowup_estimate: estimate,
                steps: 10,
                rejected_steps: 1,
                snapshots: 11,
            };
            write_summary(&path, &s).unwrap();
            assert_eq!(read_summary(&path).unwrap(), s);
        }
    }
}
