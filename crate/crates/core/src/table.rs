//! Loading tables from CSV or JSON records, with column-kind inference.
//!
//! Kinds are inferred per column: all-numeric → quantitative, ISO-date-like
//! or month names → temporal, anything else → categorical. A sidecar JSON
//! schema (`{"name": "...", "columns": {"Month": "temporal"}}`) overrides
//! both the table name and individual kinds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{format_number, Cell, Column, ColumnKind, DataTable, TableError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("json table must be an array of flat records")]
    NotRecords,
    #[error("record {row} field `{field}` is not a scalar")]
    NestedValue { row: usize, field: String },
    #[error("schema names unknown column `{0}`")]
    SchemaColumn(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Sidecar schema overriding inferred kinds.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct TableSchema {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
}

impl TableSchema {
    pub fn from_path(path: &Path) -> Result<Self, LoadError> {
        let text = read(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a `.json` file as records, anything else as CSV.
pub fn load_table(path: &Path, schema: Option<&TableSchema>) -> Result<DataTable, LoadError> {
    let text = read(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string();
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        table_from_json(&name, &text, schema)
    } else {
        table_from_csv(&name, &text, schema)
    }
}

pub fn table_from_csv(name: &str, text: &str, schema: Option<&TableSchema>) -> Result<DataTable, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut raw = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        raw.push(
            rec.iter()
                .map(|s| (!is_null_token(s)).then(|| s.to_string()))
                .collect::<Vec<_>>(),
        );
    }
    build(name, header, raw, schema)
}

pub fn table_from_json(name: &str, text: &str, schema: Option<&TableSchema>) -> Result<DataTable, LoadError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let records = value.as_array().ok_or(LoadError::NotRecords)?;
    let mut header: Vec<String> = Vec::new();
    for rec in records {
        let obj = rec.as_object().ok_or(LoadError::NotRecords)?;
        for k in obj.keys() {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
    }
    let mut raw = Vec::with_capacity(records.len());
    for (row, rec) in records.iter().enumerate() {
        let obj = rec.as_object().ok_or(LoadError::NotRecords)?;
        let mut cells = Vec::with_capacity(header.len());
        for h in &header {
            let cell = match obj.get(h) {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) if is_null_token(s) => None,
                Some(serde_json::Value::String(s)) => Some(s.clone()),
                Some(serde_json::Value::Number(n)) => {
                    Some(n.as_f64().map(format_number).unwrap_or_else(|| n.to_string()))
                }
                Some(serde_json::Value::Bool(b)) => Some(b.to_string()),
                Some(_) => return Err(LoadError::NestedValue { row, field: h.clone() }),
            };
            cells.push(cell);
        }
        raw.push(cells);
    }
    build(name, header, raw, schema)
}

fn is_null_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("na") || t == "NaN"
}

fn build(
    name: &str,
    header: Vec<String>,
    raw: Vec<Vec<Option<String>>>,
    schema: Option<&TableSchema>,
) -> Result<DataTable, LoadError> {
    if let Some(s) = schema {
        if let Some(missing) = s.columns.keys().find(|k| !header.contains(k)) {
            return Err(LoadError::SchemaColumn(missing.clone()));
        }
    }
    let columns: Vec<Column> = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let kind = schema
                .and_then(|s| s.columns.get(h).copied())
                .unwrap_or_else(|| infer_kind(raw.iter().filter_map(|r| r.get(i)?.as_deref())));
            Column::new(h.clone(), kind)
        })
        .collect();
    let rows = raw
        .into_iter()
        .map(|r| {
            r.into_iter()
                .zip(&columns)
                .map(|(v, c)| match (v, c.kind) {
                    (None, _) => Cell::Null,
                    (Some(s), ColumnKind::Quantitative) => match s.parse::<f64>() {
                        Ok(n) => Cell::Number(n),
                        Err(_) => Cell::Text(s),
                    },
                    (Some(s), _) => Cell::Text(s),
                })
                .collect()
        })
        .collect();
    let name = schema.and_then(|s| s.name.clone()).unwrap_or_else(|| name.to_string());
    Ok(DataTable::new(name, columns, rows)?)
}

/// Infers a column kind from its non-null raw values.
pub fn infer_kind<'a>(values: impl Iterator<Item = &'a str>) -> ColumnKind {
    let values: Vec<&str> = values.collect();
    if values.is_empty() {
        return ColumnKind::Categorical;
    }
    if values.iter().all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)) {
        return ColumnKind::Quantitative;
    }
    if values.iter().all(|v| is_month_name(v) || is_iso_date(v)) {
        return ColumnKind::Temporal;
    }
    ColumnKind::Categorical
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

pub fn is_month_name(s: &str) -> bool {
    let t = s.trim().trim_end_matches('.').to_ascii_lowercase();
    if t.len() < 3 {
        return false;
    }
    MONTHS.iter().any(|m| *m == t || (t.len() <= 4 && m.starts_with(&t)))
}

/// `YYYY-MM`, `YYYY-MM-DD`, optionally followed by a `T`/space time part.
pub fn is_iso_date(s: &str) -> bool {
    let date = s.trim().split(['T', ' ']).next().unwrap_or("");
    let parts: Vec<&str> = date.split(['-', '/']).collect();
    let digits = |p: &str, n: usize| p.len() == n && p.bytes().all(|b| b.is_ascii_digit());
    match parts.as_slice() {
        [y, m] => digits(y, 4) && digits(m, 2) && in_range(m, 1, 12),
        [y, m, d] => digits(y, 4) && digits(m, 2) && digits(d, 2) && in_range(m, 1, 12) && in_range(d, 1, 31),
        _ => false,
    }
}

fn in_range(s: &str, lo: u32, hi: u32) -> bool {
    s.parse::<u32>().is_ok_and(|v| (lo..=hi).contains(&v))
}
