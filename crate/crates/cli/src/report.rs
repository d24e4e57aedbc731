//! CSV artifacts of a run. Every file starts with the same `#` comment line
//! carrying the scenario hash, the seed and the command-line overrides.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use diststeer::constraints::RiskAllocation;
use diststeer::lift::{Controller, LiftedSystem};
use diststeer::mc::McReport;
use diststeer::steer::{Solution, SolveStatus, SteeringProblem};

use crate::analysis::{relative_cost_gap, Check, DensityPoint, DimensionRow};
use crate::scenario::Overrides;

pub const SCENARIO_COPY: &str = "scenario.toml";
pub const SOLUTION: &str = "solution.csv";
pub const TABLE1: &str = "table1.csv";
pub const TABLE2: &str = "table2.csv";
pub const VALIDATION: &str = "validation.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const TERMINAL_DENSITY: &str = "terminal_density.csv";
pub const TERMINAL_HISTOGRAM: &str = "terminal_histogram.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> ReportError {
    ReportError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Provenance line shared by all CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub scenario: String,
    pub sha256: String,
    pub seed: u64,
    pub mc_samples: usize,
    pub lambda_scale: Option<f64>,
    pub fixed_risk: bool,
    /// Seconds since the Unix epoch; omitted for reproducible output.
    pub generated: Option<u64>,
}

impl Header {
    pub fn line(&self) -> String {
        let mut s = format!(
            "# diststeer scenario={} scenario_sha256={} seed={} mc_samples={} lambda_scale={} fixed_risk={}",
            if self.scenario.is_empty() { "-" } else { &self.scenario },
            self.sha256,
            self.seed,
            self.mc_samples,
            self.lambda_scale.map_or("-".to_string(), |l| l.to_string()),
            self.fixed_risk,
        );
        if let Some(t) = self.generated {
            s.push_str(&format!(" generated_unix={t}"));
        }
        s
    }

    pub fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix("# diststeer ")?;
        let mut h = Header {
            scenario: String::new(),
            sha256: String::new(),
            seed: 0,
            mc_samples: 0,
            lambda_scale: None,
            fixed_risk: false,
            generated: None,
        };
        for kv in body.split_whitespace() {
            let (k, v) = kv.split_once('=')?;
            match k {
                "scenario" => {
                    h.scenario = if v == "-" {
                        String::new()
                    } else {
                        v.to_string()
                    }
                }
                "scenario_sha256" => h.sha256 = v.to_string(),
                "seed" => h.seed = v.parse().ok()?,
                "mc_samples" => h.mc_samples = v.parse().ok()?,
                "lambda_scale" => {
                    h.lambda_scale = if v == "-" {
                        None
                    } else {
                        Some(v.parse().ok()?)
                    }
                }
                "fixed_risk" => h.fixed_risk = v.parse().ok()?,
                "generated_unix" => h.generated = Some(v.parse().ok()?),
                _ => return None,
            }
        }
        Some(h)
    }

    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: Some(self.seed),
            mc_samples: Some(self.mc_samples),
            lambda_scale: self.lambda_scale,
            fixed_risk: self.fixed_risk,
        }
    }
}

fn status_name(status: Option<SolveStatus>, fallback: &str) -> String {
    match status {
        Some(SolveStatus::Converged) => "converged".into(),
        Some(SolveStatus::Stalled) => "stalled".into(),
        None => fallback.into(),
    }
}

/// Shortest round-trip representation, in exponent form for tiny or huge
/// magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

struct Sink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Sink {
    fn create(
        dir: &Path,
        name: &str,
        header: &Header,
        columns: &[&str],
    ) -> Result<Self, ReportError> {
        let path = dir.join(name);
        let mut file = File::create(&path).map_err(io_err(&path))?;
        writeln!(file, "{}", header.line()).map_err(io_err(&path))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns).map_err(csv_err(&path))?;
        Ok(Self { path, writer })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<(), ReportError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(csv_err(&self.path))
    }

    fn finish(mut self) -> Result<(), ReportError> {
        self.writer.flush().map_err(io_err(&self.path))
    }
}

/// Everything a run writes.
pub struct Artifacts<'a> {
    pub header: Header,
    pub scenario_text: &'a str,
    pub problem: &'a SteeringProblem,
    pub solution: &'a Solution,
    /// Solver status, `None` when the solver did not finish cleanly.
    pub status: Option<SolveStatus>,
    /// Reported in place of the status when it is `None`.
    pub failure: &'a str,
    pub mc: &'a McReport,
    pub dimensions: &'a [DimensionRow],
    pub density: &'a [DensityPoint],
    pub checks: &'a [Check],
}

impl Artifacts<'_> {
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let copy = dir.join(SCENARIO_COPY);
        std::fs::write(&copy, self.scenario_text).map_err(io_err(&copy))?;
        self.write_solution(dir)?;
        self.write_table1(dir)?;
        self.write_table2(dir)?;
        self.write_validation(dir)?;
        self.write_trajectories(dir)?;
        self.write_density(dir)?;
        self.write_histograms(dir)
    }

    fn write_solution(&self, dir: &Path) -> Result<(), ReportError> {
        let lf = self.problem.lifted();
        let mut s = Sink::create(
            dir,
            SOLUTION,
            &self.header,
            &["block", "row", "col", "value"],
        )?;
        let k = self.solution.controller.gain();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                if lf.is_causal_entry(i, j) {
                    s.row(["K".into(), i.to_string(), j.to_string(), num(k[(i, j)])])?;
                }
            }
        }
        for (i, x) in self.solution.controller.feedforward().iter().enumerate() {
            s.row(["v".into(), i.to_string(), "0".into(), num(*x)])?;
        }
        let cons = self.problem.constraints();
        let deltas = self
            .solution
            .risk
            .state
            .iter()
            .chain(&self.solution.risk.input);
        let nx = self.solution.risk.state.len();
        for (idx, (c, d)) in cons.iter().zip(deltas).enumerate() {
            let (block, row) = if idx < nx {
                ("delta_state", idx)
            } else {
                ("delta_input", idx - nx)
            };
            s.row([
                block.into(),
                row.to_string(),
                c.stage().to_string(),
                num(*d),
            ])?;
        }
        s.finish()
    }

    fn write_table1(&self, dir: &Path) -> Result<(), ReportError> {
        let mut s = Sink::create(
            dir,
            TABLE1,
            &self.header,
            &[
                "dimension",
                "sup_deviation",
                "distance",
                "distance_integral",
                "bound_holds",
                "ks",
                "ks_limit",
                "ks_checked",
                "ks_pass",
            ],
        )?;
        for r in self.dimensions {
            s.row([
                r.dimension.to_string(),
                num(r.sup_deviation),
                num(r.distance),
                num(2.0 * std::f64::consts::PI * r.distance),
                r.bound_holds().to_string(),
                num(r.ks),
                num(r.ks_limit),
                r.ks_checked.to_string(),
                r.ks_pass().to_string(),
            ])?;
        }
        s.finish()
    }

    fn write_table2(&self, dir: &Path) -> Result<(), ReportError> {
        let sol = self.solution;
        let spec = self.problem.spec();
        let d = &sol.diagnostics;
        let mut s = Sink::create(dir, TABLE2, &self.header, &["metric", "value"])?;
        let rows: Vec<(&str, String)> = vec![
            ("status", status_name(self.status, self.failure)),
            ("objective", num(sol.objective)),
            ("cost", num(sol.cost)),
            ("cost_mc", num(self.mc.cost_mean)),
            ("cost_mc_std_error", num(self.mc.cost_std_error)),
            (
                "cost_gap",
                num(relative_cost_gap(sol.cost, self.mc.cost_mean)),
            ),
            ("state_risk_budget", num(spec.state_risk)),
            ("input_risk_budget", num(spec.input_risk)),
            ("state_risk_allocated", num(sol.risk.state_sum())),
            ("input_risk_allocated", num(sol.risk.input_sum())),
            ("state_joint_violation_mc", num(self.mc.state_joint_rate)),
            ("input_joint_violation_mc", num(self.mc.input_joint_rate)),
            (
                "state_stage_average_violation_mc",
                num(self.mc.state_stage_average),
            ),
            (
                "input_stage_average_violation_mc",
                num(self.mc.input_stage_average),
            ),
            ("max_margin_violation", num(d.max_violation)),
            ("stationarity", num(d.stationarity)),
            ("penalty", num(d.penalty)),
            ("outer_iterations", d.outer_iterations.to_string()),
            ("inner_iterations", d.inner_iterations.to_string()),
            ("evaluations", d.evaluations.to_string()),
            ("mc_samples", self.mc.samples.to_string()),
        ];
        for (k, v) in rows {
            s.row([k.to_string(), v])?;
        }
        s.finish()
    }

    fn write_validation(&self, dir: &Path) -> Result<(), ReportError> {
        let mut s = Sink::create(
            dir,
            VALIDATION,
            &self.header,
            &["check", "value", "limit", "pass"],
        )?;
        for c in self.checks {
            s.row([
                c.name.clone(),
                num(c.value),
                num(c.limit),
                c.pass.to_string(),
            ])?;
        }
        s.finish()
    }

    fn write_trajectories(&self, dir: &Path) -> Result<(), ReportError> {
        let lf = self.problem.lifted();
        let (n, m, _) = lf.dims();
        let mut columns = vec!["series".to_string(), "stage".to_string()];
        columns.extend((0..n).map(|i| format!("x{i}")));
        columns.extend((0..m).map(|i| format!("u{i}")));
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut s = Sink::create(dir, TRAJECTORIES, &self.header, &cols)?;
        let mut series =
            |name: String, x: &DVector<f64>, u: &DVector<f64>| -> Result<(), ReportError> {
                for k in 0..=lf.horizon() {
                    let mut row = vec![name.clone(), k.to_string()];
                    row.extend((0..n).map(|i| num(x[k * n + i])));
                    if k < lf.horizon() {
                        row.extend((0..m).map(|i| num(u[k * m + i])));
                    } else {
                        row.extend((0..m).map(|_| String::new()));
                    }
                    s.row(row)?;
                }
                Ok(())
            };
        series("mean".into(), &self.mc.state_mean, &self.mc.input_mean)?;
        series("std".into(), &self.mc.state_std, &self.mc.input_std)?;
        for (i, (x, u)) in self.mc.paths.iter().enumerate() {
            series(format!("sample{i}"), x, u)?;
        }
        s.finish()
    }

    fn write_density(&self, dir: &Path) -> Result<(), ReportError> {
        let mut s = Sink::create(
            dir,
            TERMINAL_DENSITY,
            &self.header,
            &["dimension", "y", "achieved_pdf", "target_pdf"],
        )?;
        for p in self.density {
            s.row([
                p.dimension.to_string(),
                num(p.y),
                num(p.achieved),
                num(p.target),
            ])?;
        }
        s.finish()
    }

    fn write_histograms(&self, dir: &Path) -> Result<(), ReportError> {
        let mut s = Sink::create(
            dir,
            TERMINAL_HISTOGRAM,
            &self.header,
            &["dimension", "bin_lower", "bin_upper", "count", "density"],
        )?;
        for (i, h) in self.mc.histograms.iter().enumerate() {
            let w = h.bin_width();
            for (b, ((_, density), count)) in h.density().iter().zip(&h.counts).enumerate() {
                let lo = h.lower + b as f64 * w;
                s.row([
                    i.to_string(),
                    num(lo),
                    num(lo + w),
                    count.to_string(),
                    num(*density),
                ])?;
            }
        }
        s.finish()
    }
}

/// A CSV artifact read back: its header line and string records.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub header: Header,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(dir: &Path, name: &str) -> Result<Self, ReportError> {
        let path = dir.join(name);
        let file = File::open(&path).map_err(io_err(&path))?;
        let mut first = String::new();
        let mut buf = BufReader::new(file);
        buf.read_line(&mut first).map_err(io_err(&path))?;
        let header = Header::parse(first.trim_end())
            .ok_or_else(|| format_err(&path, "missing or malformed header comment"))?;
        let mut reader = csv::Reader::from_reader(buf);
        let columns = reader
            .headers()
            .map_err(csv_err(&path))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(csv_err(&path))?;
        Ok(Self {
            path,
            header,
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize, ReportError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| format_err(&self.path, format!("no column {name}")))
    }

    pub fn number(&self, row: usize, col: usize) -> Result<f64, ReportError> {
        self.rows[row][col].parse().map_err(|_| {
            format_err(
                &self.path,
                format!("row {}: {:?} is not a number", row + 1, self.rows[row][col]),
            )
        })
    }

    pub fn index(&self, row: usize, col: usize) -> Result<usize, ReportError> {
        self.rows[row][col].parse().map_err(|_| {
            format_err(
                &self.path,
                format!("row {}: {:?} is not an index", row + 1, self.rows[row][col]),
            )
        })
    }

    /// Value of `metric` in a two-column `metric,value` table.
    pub fn metric(&self, metric: &str) -> Result<&str, ReportError> {
        self.rows
            .iter()
            .find(|r| r.first().is_some_and(|m| m == metric))
            .and_then(|r| r.get(1))
            .map(String::as_str)
            .ok_or_else(|| format_err(&self.path, format!("no metric {metric}")))
    }

    pub fn metric_number(&self, metric: &str) -> Result<f64, ReportError> {
        let v = self.metric(metric)?;
        v.parse().map_err(|_| {
            format_err(
                &self.path,
                format!("metric {metric}: {v:?} is not a number"),
            )
        })
    }
}

/// Controller and risk shares from `solution.csv`.
pub fn read_solution(
    table: &Table,
    lift: &LiftedSystem,
    state_count: usize,
    input_count: usize,
    budgets: (f64, f64),
) -> Result<(Controller, RiskAllocation), ReportError> {
    let (block, row, col, value) = (
        table.column("block")?,
        table.column("row")?,
        table.column("col")?,
        table.column("value")?,
    );
    let mut k = DMatrix::zeros(lift.input_len(), lift.state_len());
    let mut v = DVector::zeros(lift.input_len());
    let mut state = vec![f64::NAN; state_count];
    let mut input = vec![f64::NAN; input_count];
    for r in 0..table.rows.len() {
        let (i, j, x) = (
            table.index(r, row)?,
            table.index(r, col)?,
            table.number(r, value)?,
        );
        let slot = match table.rows[r][block].as_str() {
            "K" if i < k.nrows() && j < k.ncols() => &mut k[(i, j)],
            "v" if i < v.len() => &mut v[i],
            "delta_state" if i < state_count => &mut state[i],
            "delta_input" if i < input_count => &mut input[i],
            other => {
                return Err(format_err(
                    &table.path,
                    format!("row {}: unexpected entry {other} ({i}, {j})", r + 1),
                ))
            }
        };
        *slot = x;
    }
    if state.iter().chain(&input).any(|d| d.is_nan()) {
        return Err(format_err(
            &table.path,
            "risk shares missing for some constraints",
        ));
    }
    let ctrl = Controller::new(lift, k, v).map_err(|e| format_err(&table.path, e.to_string()))?;
    Ok((
        ctrl,
        RiskAllocation {
            state,
            input,
            total_state: budgets.0,
            total_input: budgets.1,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips() {
        let h = Header {
            scenario: "gaussian".into(),
            sha256: "ab12".into(),
            seed: 7,
            mc_samples: 1000,
            lambda_scale: Some(0.5),
            fixed_risk: true,
            generated: Some(1_700_000_000),
        };
        assert_eq!(Header::parse(&h.line()), Some(h.clone()));
        let quiet = Header {
            generated: None,
            lambda_scale: None,
            ..h
        };
        assert!(!quiet.line().contains("generated"));
        assert_eq!(Header::parse(&quiet.line()), Some(quiet));
    }

    #[test]
    fn malformed_header_is_rejected() {
        assert_eq!(Header::parse("scenario=x"), None);
        assert_eq!(Header::parse("# diststeer seed=abc"), None);
    }
}
