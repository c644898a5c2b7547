//! File formats.
//!
//! Dataset text format, one record per line, `#` starts a comment:
//!
//! ```text
//! n p q K q_1 ... q_K
//! y x_1 ... x_p col:value col:value ...
//! ```
//!
//! Z columns are 0-based. Floats are written in Rust's shortest round-trip
//! form so a written dataset reads back bit-exact.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::estimators::RunTrace;
use crate::model::{GlmmData, ModelError, SparseRows, Theta};
use crate::simulate::{SalamanderDesign, SalamanderPair, SimulateError, Species};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] SimulateError),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

pub fn write_dataset<W: Write>(mut w: W, data: &GlmmData) -> io::Result<()> {
    write!(w, "{} {} {} {}", data.n(), data.p(), data.q(), data.k())?;
    for q in data.groups() {
        write!(w, " {q}")?;
    }
    writeln!(w)?;
    for i in 0..data.n() {
        write!(w, "{}", data.y()[i])?;
        for j in 0..data.p() {
            write!(w, " {}", data.x()[(i, j)])?;
        }
        for (col, v) in data.z().row(i) {
            write!(w, " {col}:{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<GlmmData, IoError> {
    let mut header: Option<(usize, usize, usize, Vec<usize>)> = None;
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut z_rows = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let Some((_, p, _, _)) = &header else {
            let nums = fields
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(lineno, format!("header: {e}")))?;
            if nums.len() < 4 || nums.len() != 4 + nums[3] {
                return Err(parse_err(lineno, "header must be `n p q K q_1 .. q_K`"));
            }
            header = Some((nums[0], nums[1], nums[2], nums[4..].to_vec()));
            continue;
        };
        let p = *p;
        if fields.len() < 1 + p {
            return Err(parse_err(lineno, format!("expected y and {p} covariates")));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("`{s}`: {e}")))
        };
        y.push(num(fields[0])?);
        for f in &fields[1..=p] {
            x.push(num(f)?);
        }
        let mut row = Vec::new();
        for f in &fields[1 + p..] {
            let (col, val) = f
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected col:value, got `{f}`")))?;
            let col = col
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("column `{col}`: {e}")))?;
            row.push((col, num(val)?));
        }
        z_rows.push(row);
    }
    let (n, p, q, groups) = header.ok_or_else(|| parse_err(0, "empty dataset"))?;
    if y.len() != n {
        return Err(parse_err(0, format!("header says n = {n}, found {} rows", y.len())));
    }
    let x = DMatrix::from_row_slice(n, p, &x);
    let z = SparseRows::new(q, z_rows)?;
    Ok(GlmmData::new(DVector::from_vec(y), x, z, groups)?)
}

pub fn save_dataset(path: &Path, data: &GlmmData) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, data)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<GlmmData, IoError> {
    read_dataset(io::BufReader::new(fs::File::open(path)?))
}

const DESIGN_HEADER: [&str; 4] = ["female_id", "male_id", "fspecies", "mspecies"];

pub fn write_design<W: Write>(w: W, design: &SalamanderDesign) -> Result<(), IoError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(DESIGN_HEADER)?;
    for p in design.pairs() {
        csv.write_record([
            p.female.to_string(),
            p.male.to_string(),
            p.female_species.label().to_string(),
            p.male_species.label().to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_design<R: io::Read>(r: R) -> Result<SalamanderDesign, IoError> {
    let mut csv = csv::Reader::from_reader(r);
    let headers = csv.headers()?.clone();
    if headers.iter().map(str::trim).ne(DESIGN_HEADER) {
        return Err(parse_err(1, format!("design header must be {}", DESIGN_HEADER.join(","))));
    }
    let mut pairs = Vec::new();
    for (idx, record) in csv.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let id = |i: usize| {
            record[i]
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("{}: {e}", DESIGN_HEADER[i])))
        };
        let species = |i: usize| {
            Species::parse(record[i].trim())
                .ok_or_else(|| parse_err(line, format!("unknown species `{}`", &record[i])))
        };
        pairs.push(SalamanderPair {
            female: id(0)?,
            male: id(1)?,
            female_species: species(2)?,
            male_species: species(3)?,
        });
    }
    Ok(SalamanderDesign::new(pairs)?)
}

pub fn load_design_file(path: &Path) -> Result<SalamanderDesign, IoError> {
    read_design(fs::File::open(path)?)
}

pub fn save_design_file(path: &Path, design: &SalamanderDesign) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_design(&mut buf, design)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Trace CSV columns: iteration, θ components, update_norm, acceptance_rate.
pub fn write_trace<W: Write>(w: W, trace: &RunTrace) -> Result<(), IoError> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string()];
    header.extend(trace.final_theta.component_names());
    header.push("update_norm".into());
    header.push("acceptance_rate".into());
    csv.write_record(&header)?;
    for (t, theta) in trace.theta_series.iter().enumerate() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(theta.to_vector().iter().map(|v| v.to_string()));
        row.push(trace.update_norms[t].to_string());
        row.push(trace.acceptance_rates[t].to_string());
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn trace_csv_bytes(trace: &RunTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).expect("writing to memory");
    buf
}

/// A trace CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub parameter_names: Vec<String>,
    pub iterations: Vec<usize>,
    pub thetas: Vec<Vec<f64>>,
    pub update_norms: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
}

pub fn read_trace<R: io::Read>(r: R) -> Result<TraceTable, IoError> {
    let mut csv = csv::Reader::from_reader(r);
    let headers = csv.headers()?.clone();
    let ncol = headers.len();
    if ncol < 3
        || &headers[0] != "iteration"
        || &headers[ncol - 2] != "update_norm"
        || &headers[ncol - 1] != "acceptance_rate"
    {
        return Err(parse_err(1, "not a trace file"));
    }
    let mut table = TraceTable {
        parameter_names: headers.iter().skip(1).take(ncol - 3).map(String::from).collect(),
        iterations: Vec::new(),
        thetas: Vec::new(),
        update_norms: Vec::new(),
        acceptance_rates: Vec::new(),
    };
    for (idx, record) in csv.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("{}: {e}", &headers[i])))
        };
        table.iterations.push(
            record[0]
                .parse()
                .map_err(|e| parse_err(line, format!("iteration: {e}")))?,
        );
        table.thetas.push((1..ncol - 2).map(num).collect::<Result<_, _>>()?);
        table.update_norms.push(num(ncol - 2)?);
        table.acceptance_rates.push(num(ncol - 1)?);
    }
    Ok(table)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Formats θ as `name=value` pairs for terminal output.
pub fn describe_theta(theta: &Theta) -> String {
    theta
        .component_names()
        .iter()
        .zip(theta.to_vector().iter())
        .map(|(n, v)| format!("{n}={v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}
