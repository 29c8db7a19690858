//! Numeric tables, CSV ingestion, standardization and train/test splits.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n×d table of finite reals with unique column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    names: Vec<String>,
    n: usize,
    values: Vec<f64>,
}

impl Table {
    pub fn new(names: Vec<String>, rows: usize, values: Vec<f64>) -> Result<Self> {
        let d = names.len();
        if values.len() != rows * d {
            return Err(Error::shape(format!(
                "table {rows}x{d} needs {} values, got {}",
                rows * d,
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate column name {name:?}")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingestion {
                row: pos / d.max(1),
                column: names[pos % d.max(1)].clone(),
                reason: "non-finite value".into(),
            });
        }
        Ok(Table {
            names,
            n: rows,
            values,
        })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != names.len()) {
            return Err(Error::shape("row width does not match column count"));
        }
        Table::new(names, rows.len(), rows.concat())
    }

    /// Columns named `x1..xd`.
    pub fn default_names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("x{i}")).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_cols().max(1)).take(self.n)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select_rows(&self, idx: &[usize]) -> Table {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Table {
            names: self.names.clone(),
            n: idx.len(),
            values,
        }
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Table {
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let values = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        Table {
            names,
            n: self.n,
            values,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Reads a header-first, comma-separated numeric file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("bad header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Data("missing header row".into()));
    }
    let d = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Ingestion {
            row: i,
            column: String::new(),
            reason: e.to_string(),
        })?;
        if rec.len() != d {
            return Err(Error::Ingestion {
                row: i,
                column: String::new(),
                reason: format!("expected {d} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
                row: i,
                column: names[j].clone(),
                reason: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row: i,
                    column: names[j].clone(),
                    reason: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    Table::new(names, n, values)
}

/// Writes the table with shortest round-trip float formatting.
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(table)).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(table: &Table) -> String {
    let mut out = table.names().join(",");
    out.push('\n');
    for row in table.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub shift: f64,
    pub scale: f64,
}

/// Per-column affine standardization `(x - shift) / scale`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<ColumnScale>,
}

/// Fits mean / population standard deviation per column.
pub fn fit_preprocessor(t: &Table) -> Result<Preprocessor> {
    if t.n_rows() < 2 {
        return Err(Error::Data("need at least two rows to fit a preprocessor".into()));
    }
    let n = t.n_rows() as f64;
    let mut columns = Vec::with_capacity(t.n_cols());
    for (j, name) in t.names().iter().enumerate() {
        let col = t.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || std <= 1e-12 * mean.abs() {
            return Err(Error::Data(format!("column {name:?} is constant")));
        }
        columns.push(ColumnScale {
            name: name.clone(),
            shift: mean,
            scale: std,
        });
    }
    Ok(Preprocessor { columns })
}

impl Preprocessor {
    pub fn is_fitted(&self) -> bool {
        !self.columns.is_empty()
    }

    fn check(&self, t: &Table) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::usage("preprocessor is not fitted"));
        }
        if self.columns.len() != t.n_cols() {
            return Err(Error::usage(format!(
                "preprocessor has {} columns, table has {}",
                self.columns.len(),
                t.n_cols()
            )));
        }
        Ok(())
    }

    fn map(&self, t: &Table, f: impl Fn(f64, &ColumnScale) -> f64) -> Result<Table> {
        self.check(t)?;
        let d = t.n_cols();
        let values = t
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, &self.columns[i % d]))
            .collect();
        Table::new(t.names().to_vec(), t.n_rows(), values)
    }

    pub fn transform(&self, t: &Table) -> Result<Table> {
        self.map(t, |v, c| (v - c.shift) / c.scale)
    }

    pub fn inverse_transform(&self, t: &Table) -> Result<Table> {
        self.map(t, |v, c| v * c.scale + c.shift)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.6,
            seed: 0,
        }
    }
}

/// Seeded random row partition with `round(fraction · n)` training rows.
pub fn split(t: &Table, spec: &SplitSpec) -> Result<(Table, Table)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::usage(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if t.n_rows() < 2 {
        return Err(Error::usage("need at least two rows to split"));
    }
    let mut idx: Vec<usize> = (0..t.n_rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let k = (spec.train_fraction * t.n_rows() as f64).round() as usize;
    let (train, test) = idx.split_at(k);
    Ok((t.select_rows(train), t.select_rows(test)))
}
