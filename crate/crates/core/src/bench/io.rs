//! CSV formats: raw sensor streams, feature tables, and label columns.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Result, StlError};
use crate::features::{FeatureVector, SensorStream};

/// A feature CSV, with or without a trailing `label` column.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTable {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

impl FeatureTable {
    pub fn x(&self) -> ArrayView2<'_, f64> {
        match self {
            FeatureTable::Labeled(d) => d.x(),
            FeatureTable::Unlabeled(d) => d.x(),
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            FeatureTable::Labeled(d) => Some(d.y()),
            FeatureTable::Unlabeled(_) => None,
        }
    }

    pub fn unlabeled(&self) -> UnlabeledDataset {
        match self {
            FeatureTable::Labeled(d) => d.unlabeled(),
            FeatureTable::Unlabeled(d) => d.clone(),
        }
    }
}

struct Table {
    header: Vec<String>,
    /// (1-based line number, cells)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(reader: impl Read) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header: Vec<String> = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?.iter().map(str::to_owned).collect(),
        None => return Err(StlError::Parse { line: 1, message: "missing header row".into() }),
    };
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(e, line))?;
        let line = rec.position().map_or(line, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(StlError::Parse {
                line,
                message: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Table { header, rows })
}

fn csv_error(e: csv::Error, line: usize) -> StlError {
    let line = e.position().map_or(line, |p| p.line() as usize);
    StlError::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_f64(cell: &str, line: usize, col: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| StlError::Parse {
        line,
        message: format!("column `{col}`: `{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(StlError::Parse {
            line,
            message: format!("column `{col}`: non-finite value"),
        });
    }
    Ok(v)
}

fn parse_label(cell: &str, line: usize) -> Result<usize> {
    cell.parse().map_err(|_| StlError::Parse {
        line,
        message: format!("label `{cell}` is not a nonnegative integer"),
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        StlError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Reads a feature table: numeric columns, optionally followed by `label`.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    parse_feature_csv(open(path.as_ref())?)
}

pub fn parse_feature_csv(reader: impl Read) -> Result<FeatureTable> {
    let table = read_table(reader)?;
    let has_label = table.header.last().is_some_and(|h| h.eq_ignore_ascii_case("label"));
    let d = table.header.len() - usize::from(has_label);
    if d == 0 {
        return Err(StlError::Parse { line: 1, message: "no feature columns".into() });
    }
    if table.rows.is_empty() {
        return Err(StlError::empty("feature table has no rows"));
    }
    let mut values = Vec::with_capacity(table.rows.len() * d);
    let mut labels = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        for (j, cell) in cells[..d].iter().enumerate() {
            values.push(parse_f64(cell, *line, &table.header[j])?);
        }
        if has_label {
            labels.push(parse_label(&cells[d], *line)?);
        }
    }
    let x = Array2::from_shape_vec((table.rows.len(), d), values).expect("row widths checked");
    Ok(if has_label {
        FeatureTable::Labeled(LabeledDataset::new(x, labels)?)
    } else {
        FeatureTable::Unlabeled(UnlabeledDataset::new(x)?)
    })
}

/// Writes `x` with header `f1..fd` and an optional `label` column.
pub fn write_feature_csv(path: impl AsRef<Path>, x: ArrayView2<'_, f64>, labels: Option<&[usize]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_feature_rows(&mut w, x, labels)?;
    w.flush()?;
    Ok(())
}

pub fn write_feature_rows(mut w: impl Write, x: ArrayView2<'_, f64>, labels: Option<&[usize]>) -> Result<()> {
    let mut header: Vec<String> = (1..=x.ncols()).map(|j| format!("f{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in x.rows().into_iter().enumerate() {
        // `{:?}` prints the shortest representation that round-trips exactly
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Writes extracted feature vectors; labels are written when every vector has one.
pub fn write_feature_vectors(path: impl AsRef<Path>, vectors: &[FeatureVector]) -> Result<()> {
    let d = vectors.first().map_or(0, |v| v.values.len());
    let x = Array2::from_shape_fn((vectors.len(), d), |(i, j)| vectors[i].values[j]);
    let labels: Option<Vec<usize>> = vectors.iter().map(|v| v.label).collect();
    write_feature_csv(path, x.view(), labels.as_deref())
}

/// Reads a single `label` column (the first column is used if there are several).
pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let table = read_table(open(path.as_ref())?)?;
    let col = table
        .header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("label"))
        .unwrap_or(0);
    table.rows.iter().map(|(line, cells)| parse_label(&cells[col], *line)).collect()
}

pub fn write_labels_csv(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "label")?;
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a raw sensor file with header `t,x,y,z[,label]`.
pub fn load_raw_csv(path: impl AsRef<Path>, rate_hz: f64) -> Result<SensorStream> {
    parse_raw_csv(open(path.as_ref())?, rate_hz)
}

pub fn parse_raw_csv(reader: impl Read, rate_hz: f64) -> Result<SensorStream> {
    let table = read_table(reader)?;
    let names: Vec<String> = table.header.iter().map(|h| h.to_ascii_lowercase()).collect();
    let find = |name: &str| names.iter().position(|h| h == name);
    let (Some(xi), Some(yi), Some(zi)) = (find("x"), find("y"), find("z")) else {
        return Err(StlError::Parse {
            line: 1,
            message: "raw sensor header must contain x, y and z columns".into(),
        });
    };
    let li = find("label");
    let mut samples = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::new();
    for (line, cells) in &table.rows {
        samples.push([
            parse_f64(&cells[xi], *line, "x")?,
            parse_f64(&cells[yi], *line, "y")?,
            parse_f64(&cells[zi], *line, "z")?,
        ]);
        if let Some(li) = li {
            labels.push(parse_label(&cells[li], *line)?);
        }
    }
    SensorStream::new(samples, rate_hz, li.map(|_| labels))
}
