//! Cycle CSV files: a `t` column in seconds, then `c:<name>` (continuous)
//! and `d:<name>` (discrete) columns. An optional `cycle` column splits one
//! file into several cycles.

use std::io::Write;
use std::path::{Path, PathBuf};

use hybrid_ad_core::signals::{ObservationExample, SignalKind};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub names: Vec<String>,
    pub kinds: Vec<SignalKind>,
    cycle_column: Option<usize>,
    /// Header position of each signal.
    signal_columns: Vec<usize>,
}

impl Schema {
    pub fn new(names: Vec<String>, kinds: Vec<SignalKind>) -> Self {
        let signal_columns = (1..=names.len()).collect();
        Self {
            names,
            kinds,
            cycle_column: None,
            signal_columns,
        }
    }

    /// Default names `c0, c1, …` and `d0, d1, …`.
    pub fn generic(kinds: &[SignalKind]) -> Self {
        let (mut c, mut d) = (0, 0);
        let names = kinds
            .iter()
            .map(|k| match k {
                SignalKind::Continuous => {
                    c += 1;
                    format!("c{}", c - 1)
                }
                SignalKind::Discrete => {
                    d += 1;
                    format!("d{}", d - 1)
                }
            })
            .collect();
        Self::new(names, kinds.to_vec())
    }

    pub fn from_header(header: &csv::StringRecord) -> std::result::Result<Self, String> {
        if header.get(0).map(str::trim) != Some("t") {
            return Err("first column must be `t`".into());
        }
        let mut schema = Self::new(Vec::new(), Vec::new());
        schema.signal_columns.clear();
        for (i, field) in header.iter().enumerate().skip(1) {
            let field = field.trim();
            let (kind, name) = match field.split_once(':') {
                Some(("c", name)) => (SignalKind::Continuous, name),
                Some(("d", name)) => (SignalKind::Discrete, name),
                _ if field == "cycle" && schema.cycle_column.is_none() => {
                    schema.cycle_column = Some(i);
                    continue;
                }
                _ => {
                    return Err(format!(
                        "column {} `{field}` needs a `c:` or `d:` prefix",
                        i + 1
                    ))
                }
            };
            schema.names.push(name.to_string());
            schema.kinds.push(kind);
            schema.signal_columns.push(i);
        }
        if schema.kinds.is_empty() {
            return Err("no signal columns".into());
        }
        Ok(schema)
    }

    fn header(&self) -> Vec<String> {
        std::iter::once("t".to_string())
            .chain(self.names.iter().zip(&self.kinds).map(|(n, k)| match k {
                SignalKind::Continuous => format!("c:{n}"),
                SignalKind::Discrete => format!("d:{n}"),
            }))
            .collect()
    }
}

/// A parsed cycle and its identifier (file stem, or `stem/cycle` when the
/// file carries a `cycle` column).
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub id: String,
    pub observation: ObservationExample,
}

type Rows = Vec<(f64, Vec<f64>)>;

pub fn read_file(path: &Path) -> Result<(Schema, Vec<Cycle>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let schema = Schema::from_header(&header).map_err(|m| CliError::parse(path, m))?;
    let stem = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());

    let mut groups: Vec<(String, Rows)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |col: usize| -> Result<f64> {
            let text = record.get(col).unwrap_or("");
            text.parse::<f64>().map_err(|_| {
                CliError::parse(
                    path,
                    format!(
                        "line {line}: column `{}`: `{text}` is not a number",
                        &header[col]
                    ),
                )
            })
        };
        let t = number(0)?;
        let values = schema
            .signal_columns
            .iter()
            .map(|&c| number(c))
            .collect::<Result<Vec<_>>>()?;
        let key = schema
            .cycle_column
            .map_or_else(String::new, |c| record.get(c).unwrap_or("").to_string());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push((t, values)),
            None => groups.push((key, vec![(t, values)])),
        }
    }
    if groups.is_empty() {
        return Err(CliError::parse(path, "no data rows"));
    }
    let cycles = groups
        .into_iter()
        .map(|(key, rows)| {
            let id = if schema.cycle_column.is_some() {
                format!("{stem}/{key}")
            } else {
                stem.clone()
            };
            let observation = ObservationExample::new(rows, schema.kinds.clone()).map_err(|e| {
                CliError::Validation(format!("{}: cycle `{id}`: {e}", path.display()))
            })?;
            Ok(Cycle { id, observation })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((schema, cycles))
}

/// `.csv` files directly inside `dir`, in name order.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every cycle in `dir`. All files must share one schema.
pub fn read_dir(dir: &Path) -> Result<(Schema, Vec<Cycle>)> {
    let mut schema: Option<Schema> = None;
    let mut cycles = Vec::new();
    for path in csv_files(dir)? {
        let (s, mut c) = read_file(&path)?;
        match &schema {
            Some(first) if first.kinds != s.kinds => {
                return Err(CliError::Validation(format!(
                    "{}: signal kinds differ from the other files",
                    path.display()
                )))
            }
            Some(_) => {}
            None => schema = Some(s),
        }
        cycles.append(&mut c);
    }
    match schema {
        Some(s) => Ok((s, cycles)),
        None => Err(CliError::Validation(format!(
            "{}: no cycle files (EmptyData)",
            dir.display()
        ))),
    }
}

/// Writes one cycle. Floats use the shortest text that parses back to the
/// same value.
pub fn write_cycle(
    out: impl Write,
    schema: &Schema,
    observation: &ObservationExample,
) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(schema.header())?;
    for (t, row) in observation.times().iter().zip(observation.rows()) {
        let fields = std::iter::once(t.to_string()).chain(row.iter().zip(&schema.kinds).map(
            |(v, k)| match k {
                SignalKind::Discrete => format!("{}", *v as u8),
                SignalKind::Continuous => v.to_string(),
            },
        ));
        writer.write_record(fields)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_cycle_file(
    path: &Path,
    schema: &Schema,
    observation: &ObservationExample,
) -> Result<()> {
    let mut buf = Vec::new();
    write_cycle(&mut buf, schema, observation).map_err(|e| csv_error(path, e))?;
    crate::error::write(path, buf)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        CliError::parse(path, e)
    }
}
