//! Plain-text CSV formats. Every file uses `\n` line endings, a dot as the
//! decimal separator, and the shortest float representation that parses back
//! to the same value.
//!
//! | file        | header                    |
//! |-------------|---------------------------|
//! | input path  | `t,u1,...,ud`             |
//! | trajectory  | `t,u1,...,ud,z`           |
//! | target      | `t,z`                     |
//! | signature   | `word,value`              |
//! | model       | `# key = value` lines, then `index,beta` |
//! | solver log  | `iter,objective,grad_norm,lambda` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::control::SolveReport;
use crate::error::{Error, Result};
use crate::features::{Dataset, SigModel};
use crate::paths::{SampledPath, TimeGrid};
use crate::signature::TruncatedTensorSeries;

/// A parsed numeric table: header names and rows of floats.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    /// 1-based file line of each row.
    lines: Vec<u64>,
}

fn parse_error(file: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

fn read_table(file: &Path, text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(file, 1, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(file, line, 1, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(parse_error(
                file,
                line,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.trim().parse::<f64>().map_err(|_| {
                    parse_error(file, line, c + 1, format!("not a number: {field:?}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        lines.push(line);
    }
    Ok(Table {
        header,
        rows,
        lines,
    })
}

fn read_text(file: &Path) -> Result<String> {
    fs::read_to_string(file).map_err(|e| Error::io(file, e))
}

pub fn write_text(file: &Path, text: &str) -> Result<()> {
    fs::write(file, text).map_err(|e| Error::io(file, e))
}

fn input_header(channels: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=channels {
        let _ = write!(h, ",u{i}");
    }
    h
}

/// Checks `t,u1..ud[,z]` and returns `d`.
fn check_input_header(file: &Path, header: &[String], with_output: bool) -> Result<usize> {
    let extra = usize::from(with_output);
    let d = header.len().saturating_sub(1 + extra);
    let mut expected: Vec<String> = vec!["t".into()];
    expected.extend((1..=d).map(|i| format!("u{i}")));
    if with_output {
        expected.push("z".into());
    }
    if d == 0 || header != expected.as_slice() {
        return Err(parse_error(
            file,
            1,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.join(",")
            ),
        ));
    }
    Ok(d)
}

fn grid_from_table(file: &Path, table: &Table) -> Result<TimeGrid> {
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    TimeGrid::new(times).map_err(|e| {
        let line = table.lines.first().copied().unwrap_or(1);
        parse_error(file, line, 1, e.to_string())
    })
}

/// Shortest round-trip text for a float, switching to exponent form for very
/// small or very large magnitudes.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if self.0 == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

pub fn format_path(u: &SampledPath) -> String {
    let d = u.channels();
    let mut out = input_header(d);
    out.push('\n');
    for (j, t) in u.grid().points().iter().enumerate() {
        let _ = write!(out, "{}", Num(*t));
        for v in u.value(j) {
            let _ = write!(out, ",{}", Num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_path(file: &Path, u: &SampledPath) -> Result<()> {
    write_text(file, &format_path(u))
}

pub fn read_path(file: &Path) -> Result<SampledPath> {
    let table = read_table(file, &read_text(file)?)?;
    let d = check_input_header(file, &table.header, false)?;
    let grid = grid_from_table(file, &table)?;
    let values = table.rows.iter().flat_map(|r| r[1..].to_vec()).collect();
    SampledPath::from_flat(grid, d, values)
}

pub fn format_trajectory(u: &SampledPath, z: &[f64]) -> String {
    let d = u.channels();
    let mut out = input_header(d);
    out.push_str(",z\n");
    for (j, t) in u.grid().points().iter().enumerate() {
        let _ = write!(out, "{}", Num(*t));
        for v in u.value(j) {
            let _ = write!(out, ",{}", Num(*v));
        }
        let _ = writeln!(out, ",{}", Num(z[j]));
    }
    out
}

pub fn read_trajectory(file: &Path) -> Result<(SampledPath, Vec<f64>)> {
    let table = read_table(file, &read_text(file)?)?;
    let d = check_input_header(file, &table.header, true)?;
    let grid = grid_from_table(file, &table)?;
    let values = table.rows.iter().flat_map(|r| r[1..=d].to_vec()).collect();
    let z = table.rows.iter().map(|r| r[d + 1]).collect();
    Ok((SampledPath::from_flat(grid, d, values)?, z))
}

/// Writes one `traj_XXXX.csv` per trajectory into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(data.len());
    for (m, (u, z)) in data.inputs().iter().zip(data.outputs()).enumerate() {
        let file = dir.join(format!("traj_{m:04}.csv"));
        write_text(&file, &format_trajectory(u, z))?;
        files.push(file);
    }
    Ok(files)
}

/// Reads every `*.csv` in `dir` (sorted by name) as one trajectory.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .csv trajectories in {}",
            dir.display()
        )));
    }
    let mut inputs = Vec::with_capacity(files.len());
    let mut outputs = Vec::with_capacity(files.len());
    for file in &files {
        let (u, z) = read_trajectory(file)?;
        inputs.push(u);
        outputs.push(z);
    }
    let z0 = outputs[0][0];
    Dataset::new(inputs, outputs, z0)
}

pub fn format_target(grid: &TimeGrid, z: &[f64]) -> String {
    let mut out = String::from("t,z\n");
    for (t, v) in grid.points().iter().zip(z) {
        let _ = writeln!(out, "{},{}", Num(*t), Num(*v));
    }
    out
}

/// Reads a desired output trajectory `t,z`.
pub fn read_target(file: &Path) -> Result<(TimeGrid, Vec<f64>)> {
    let table = read_table(file, &read_text(file)?)?;
    if table.header != ["t", "z"] {
        return Err(parse_error(
            file,
            1,
            1,
            format!("expected header `t,z`, found `{}`", table.header.join(",")),
        ));
    }
    let grid = grid_from_table(file, &table)?;
    Ok((grid, table.rows.iter().map(|r| r[1]).collect()))
}

pub fn format_signature(s: &TruncatedTensorSeries) -> String {
    let mut out = String::from("word,value\n");
    for (word, value) in s.iter_words() {
        let _ = writeln!(out, "{word},{}", Num(value));
    }
    out
}

pub fn format_model(model: &SigModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# order = {}", model.order);
    let _ = writeln!(out, "# channels = {}", model.channels);
    let _ = writeln!(out, "# z0 = {}", Num(model.z0));
    let _ = writeln!(out, "# gamma = {}", Num(model.gamma));
    let grid: Vec<String> = model.grid.points().iter().map(|t| Num(*t).to_string()).collect();
    let _ = writeln!(out, "# grid = {}", grid.join(" "));
    out.push_str("index,beta\n");
    for (k, b) in model.beta.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", Num(*b));
    }
    out
}

pub fn write_model(file: &Path, model: &SigModel) -> Result<()> {
    write_text(file, &format_model(model))
}

pub fn read_model(file: &Path) -> Result<SigModel> {
    let text = read_text(file)?;
    let mut order = None;
    let mut channels = None;
    let mut z0 = None;
    let mut gamma = None;
    let mut grid = None;
    for (n, line) in text.lines().enumerate() {
        let Some(meta) = line.strip_prefix('#') else {
            continue;
        };
        let line_no = n as u64 + 1;
        let Some((key, value)) = meta.split_once('=') else {
            continue;
        };
        let value = value.trim();
        let bad = |what: &str| parse_error(file, line_no, 1, format!("invalid {what}: {value:?}"));
        match key.trim() {
            "order" => order = Some(value.parse::<usize>().map_err(|_| bad("order"))?),
            "channels" => channels = Some(value.parse::<usize>().map_err(|_| bad("channels"))?),
            "z0" => z0 = Some(value.parse::<f64>().map_err(|_| bad("z0"))?),
            "gamma" => gamma = Some(value.parse::<f64>().map_err(|_| bad("gamma"))?),
            "grid" => {
                let points = value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("grid"))?;
                grid = Some(
                    TimeGrid::new(points)
                        .map_err(|e| parse_error(file, line_no, 1, e.to_string()))?,
                );
            }
            _ => {}
        }
    }
    let missing = |key: &str| parse_error(file, 1, 1, format!("missing `# {key} = ...` line"));
    let table = read_table(file, &text)?;
    if table.header != ["index", "beta"] {
        return Err(parse_error(
            file,
            1,
            1,
            format!("expected header `index,beta`, found `{}`", table.header.join(",")),
        ));
    }
    for (k, (row, line)) in table.rows.iter().zip(&table.lines).enumerate() {
        if row[0] != k as f64 {
            return Err(parse_error(file, *line, 1, format!("expected index {k}")));
        }
    }
    let beta = table.rows.iter().map(|r| r[1]).collect();
    SigModel::new(
        beta,
        order.ok_or_else(|| missing("order"))?,
        channels.ok_or_else(|| missing("channels"))?,
        z0.ok_or_else(|| missing("z0"))?,
        gamma.ok_or_else(|| missing("gamma"))?,
        grid.ok_or_else(|| missing("grid"))?,
    )
}

pub fn format_solver_log(report: &SolveReport) -> String {
    let mut out = String::from("iter,objective,grad_norm,lambda\n");
    for rec in &report.history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            rec.iteration,
            Num(rec.objective),
            Num(rec.gradient_norm),
            Num(rec.damping)
        );
    }
    out
}
