//! Shared domain types: tables, data facts, clauses and stories.
//!
//! A [`DataFact`] is the 6-tuple `{type, parameters, measures, context,
//! breakdowns, focus}` that ties a narrative clause to a subspace of a
//! [`DataTable`]. Everything here is immutable once built and the free
//! functions are pure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column role inside a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Temporal,
    Quantitative,
}

impl ColumnKind {
    /// Categorical and temporal columns can partition a subspace.
    pub fn is_dimension(self) -> bool {
        !matches!(self, ColumnKind::Quantitative)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// A single table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Number(f64),
    Text(String),
}

impl Cell {
    /// Text form used when matching cells against fact filter values.
    /// Nulls never match anything.
    pub fn key(&self) -> Option<String> {
        match self {
            Cell::Null => None,
            Cell::Number(n) => Some(format_number(*n)),
            Cell::Text(s) => Some(s.clone()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(n) => Some(*n),
            _ => None,
        }
    }
}

/// Formats a number the way filter values spell it (`3`, `12.5`).
pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{n:.0}")
    } else {
        format!("{n}")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("table has no columns")]
    NoColumns,
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("row {row}, column `{column}`: quantitative value is not a finite number")]
    NotFinite { row: usize, column: String },
}

/// A pre-processed, flat data table.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Cell>>,
}

impl DataTable {
    /// Builds a table, checking column names and that quantitative cells
    /// are finite numbers (or null).
    pub fn new(name: impl Into<String>, columns: Vec<Column>, rows: Vec<Vec<Cell>>) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::NoColumns);
        }
        let mut seen = BTreeSet::new();
        for (i, c) in columns.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(TableError::EmptyColumnName(i));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(TableError::RaggedRow {
                    row: r,
                    found: row.len(),
                    expected: columns.len(),
                });
            }
            for (cell, col) in row.iter().zip(&columns) {
                if col.kind != ColumnKind::Quantitative {
                    continue;
                }
                match cell {
                    Cell::Null => {}
                    Cell::Number(n) if n.is_finite() => {}
                    _ => {
                        return Err(TableError::NotFinite {
                            row: r,
                            column: col.name.clone(),
                        })
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            columns,
            rows,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.column(name).map(|c| c.kind)
    }

    pub fn cell(&self, row: usize, column: usize) -> &Cell {
        &self.rows[row][column]
    }

    /// Distinct non-null values of a column in first-appearance order.
    pub fn distinct_values(&self, name: &str) -> Vec<String> {
        let Some(idx) = self.column_index(name) else {
            return Vec::new();
        };
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            if let Some(k) = row[idx].key() {
                if seen.insert(k.clone()) {
                    out.push(k);
                }
            }
        }
        out
    }

    pub fn contains_value(&self, name: &str, value: &str) -> bool {
        let Some(idx) = self.column_index(name) else {
            return false;
        };
        self.rows.iter().any(|row| row[idx].key().as_deref() == Some(value))
    }

    /// Finite values of a quantitative column over the given rows.
    pub fn numbers<'a>(
        &'a self,
        name: &str,
        rows: impl IntoIterator<Item = usize> + 'a,
    ) -> impl Iterator<Item = f64> + 'a {
        let idx = self.column_index(name);
        rows.into_iter()
            .filter_map(move |r| idx.and_then(|i| self.rows[r][i].as_f64()))
    }

    /// Compact schema line used in prompts.
    pub fn schema_summary(&self) -> String {
        let mut out = format!("table `{}` ({} rows)\n", self.name, self.rows.len());
        for c in &self.columns {
            let kind = match c.kind {
                ColumnKind::Categorical => "categorical",
                ColumnKind::Temporal => "temporal",
                ColumnKind::Quantitative => "quantitative",
            };
            out.push_str(&format!("- {} ({kind})", c.name));
            if c.kind.is_dimension() {
                let vals = self.distinct_values(&c.name);
                out.push_str(&format!(": {}", vals.join(", ")));
            }
            out.push('\n');
        }
        out
    }
}

/// Fact types. `comparison` and `correlation` also accept the short
/// `compare`/`correlate` spellings on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactType {
    Value,
    Trend,
    #[serde(alias = "compare")]
    Comparison,
    Deviation,
    Extreme,
    Distribution,
    #[serde(alias = "correlate")]
    Correlation,
    Rank,
    Proportion,
}

impl FactType {
    pub const ALL: [FactType; 9] = [
        FactType::Value,
        FactType::Trend,
        FactType::Comparison,
        FactType::Deviation,
        FactType::Extreme,
        FactType::Distribution,
        FactType::Correlation,
        FactType::Rank,
        FactType::Proportion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactType::Value => "value",
            FactType::Trend => "trend",
            FactType::Comparison => "comparison",
            FactType::Deviation => "deviation",
            FactType::Extreme => "extreme",
            FactType::Distribution => "distribution",
            FactType::Correlation => "correlation",
            FactType::Rank => "rank",
            FactType::Proportion => "proportion",
        }
    }
}

impl fmt::Display for FactType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Opaque scalar carried in a fact's `parameters`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Text(String),
}

/// Column → permitted (or highlighted) values.
pub type ValueFilter = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFact {
    #[serde(rename = "type")]
    pub fact_type: FactType,
    #[serde(default)]
    pub parameters: BTreeMap<String, Scalar>,
    #[serde(default)]
    pub measures: Vec<String>,
    #[serde(default, deserialize_with = "lenient_filter")]
    pub context: ValueFilter,
    #[serde(default)]
    pub breakdowns: Vec<String>,
    #[serde(default, deserialize_with = "lenient_filter")]
    pub focus: ValueFilter,
}

impl DataFact {
    pub fn new(fact_type: FactType, measures: &[&str]) -> Self {
        Self {
            fact_type,
            parameters: BTreeMap::new(),
            measures: measures.iter().map(|s| s.to_string()).collect(),
            context: ValueFilter::new(),
            breakdowns: Vec::new(),
            focus: ValueFilter::new(),
        }
    }

    pub fn with_context(mut self, column: &str, values: &[&str]) -> Self {
        self.context
            .insert(column.to_string(), values.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn with_focus(mut self, column: &str, values: &[&str]) -> Self {
        self.focus
            .insert(column.to_string(), values.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn with_breakdowns(mut self, columns: &[&str]) -> Self {
        self.breakdowns = columns.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_parameter(mut self, key: &str, value: Scalar) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    pub fn has_focus(&self) -> bool {
        self.focus.values().any(|v| !v.is_empty())
    }

    /// Copy with every set and map sorted and deduplicated.
    pub fn canonical(&self) -> DataFact {
        fn sorted(v: &[String]) -> Vec<String> {
            let set: BTreeSet<&String> = v.iter().collect();
            set.into_iter().cloned().collect()
        }
        fn filter(f: &ValueFilter) -> ValueFilter {
            f.iter().map(|(k, v)| (k.clone(), sorted(v))).collect()
        }
        DataFact {
            fact_type: self.fact_type,
            parameters: self.parameters.clone(),
            measures: sorted(&self.measures),
            context: filter(&self.context),
            breakdowns: sorted(&self.breakdowns),
            focus: filter(&self.focus),
        }
    }

    /// Stable identity string: canonical JSON of [`DataFact::canonical`].
    pub fn canonical_key(&self) -> String {
        serde_json::to_string(&self.canonical()).expect("facts always serialize")
    }

    pub fn same_fact(&self, other: &DataFact) -> bool {
        self.canonical() == other.canonical()
    }
}

fn lenient_filter<'de, D: Deserializer<'de>>(d: D) -> Result<ValueFilter, D::Error> {
    // Accepts `{"Month": "Dec"}`, `{"Month": ["Dec", 12]}` and `null`.
    let raw: Option<BTreeMap<String, serde_json::Value>> = Option::deserialize(d)?;
    let mut out = ValueFilter::new();
    for (k, v) in raw.unwrap_or_default() {
        let list = match v {
            serde_json::Value::Array(items) => items
                .into_iter()
                .map(scalar_text::<D::Error>)
                .collect::<Result<Vec<_>, _>>()?,
            serde_json::Value::Null => Vec::new(),
            other => vec![scalar_text::<D::Error>(other)?],
        };
        out.insert(k, list);
    }
    Ok(out)
}

fn scalar_text<E: de::Error>(v: serde_json::Value) -> Result<String, E> {
    match v {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.as_f64().map(format_number).unwrap_or_else(|| n.to_string())),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        other => Err(E::custom(format!("expected a scalar filter value, got {other}"))),
    }
}

/// Which slot of a fact a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactSlot {
    Measures,
    Context,
    Breakdowns,
    Focus,
}

impl fmt::Display for FactSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactSlot::Measures => "measures",
            FactSlot::Context => "context",
            FactSlot::Breakdowns => "breakdowns",
            FactSlot::Focus => "focus",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyMeasures,
    UnknownColumn {
        slot: FactSlot,
        column: String,
    },
    DuplicateColumn {
        slot: FactSlot,
        column: String,
    },
    MeasureNotQuantitative(String),
    BreakdownNotDimension(String),
    BreakdownIsMeasure(String),
    ValueNotInColumn {
        slot: FactSlot,
        column: String,
        value: String,
    },
    FocusOutsideContext {
        column: String,
        value: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyMeasures => write!(f, "empty measures"),
            Violation::UnknownColumn { slot, column } => {
                write!(f, "unknown column `{column}` in {slot}")
            }
            Violation::DuplicateColumn { slot, column } => {
                write!(f, "column `{column}` listed twice in {slot}")
            }
            Violation::MeasureNotQuantitative(c) => write!(f, "measure `{c}` is not quantitative"),
            Violation::BreakdownNotDimension(c) => {
                write!(f, "breakdown `{c}` is not categorical or temporal")
            }
            Violation::BreakdownIsMeasure(c) => write!(f, "breakdown `{c}` is also a measure"),
            Violation::ValueNotInColumn { slot, column, value } => {
                write!(f, "{slot} value not in column: `{column}` has no `{value}`")
            }
            Violation::FocusOutsideContext { column, value } => {
                write!(f, "focus value outside context: `{column}` = `{value}`")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

/// Checks a fact's well-formedness against a table. Every violated rule is
/// reported; an empty report means the fact is usable.
pub fn validate_fact(fact: &DataFact, table: &DataTable) -> ValidationReport {
    let mut v = Vec::new();

    if fact.measures.is_empty() {
        v.push(Violation::EmptyMeasures);
    }
    let mut seen = BTreeSet::new();
    for m in &fact.measures {
        if !seen.insert(m) {
            v.push(Violation::DuplicateColumn {
                slot: FactSlot::Measures,
                column: m.clone(),
            });
        }
        match table.kind_of(m) {
            None => v.push(Violation::UnknownColumn {
                slot: FactSlot::Measures,
                column: m.clone(),
            }),
            Some(ColumnKind::Quantitative) => {}
            Some(_) => v.push(Violation::MeasureNotQuantitative(m.clone())),
        }
    }

    let mut seen = BTreeSet::new();
    for b in &fact.breakdowns {
        if !seen.insert(b) {
            v.push(Violation::DuplicateColumn {
                slot: FactSlot::Breakdowns,
                column: b.clone(),
            });
        }
        if fact.measures.contains(b) {
            v.push(Violation::BreakdownIsMeasure(b.clone()));
        }
        match table.kind_of(b) {
            None => v.push(Violation::UnknownColumn {
                slot: FactSlot::Breakdowns,
                column: b.clone(),
            }),
            Some(k) if k.is_dimension() => {}
            Some(_) => v.push(Violation::BreakdownNotDimension(b.clone())),
        }
    }

    for (slot, filter) in [(FactSlot::Context, &fact.context), (FactSlot::Focus, &fact.focus)] {
        for (col, values) in filter {
            if table.column(col).is_none() {
                v.push(Violation::UnknownColumn {
                    slot,
                    column: col.clone(),
                });
                continue;
            }
            for val in values {
                if !table.contains_value(col, val) {
                    v.push(Violation::ValueNotInColumn {
                        slot,
                        column: col.clone(),
                        value: val.clone(),
                    });
                }
            }
        }
    }

    for (col, values) in &fact.focus {
        if let Some(permitted) = fact.context.get(col) {
            for val in values {
                if !permitted.contains(val) {
                    v.push(Violation::FocusOutsideContext {
                        column: col.clone(),
                        value: val.clone(),
                    });
                }
            }
        }
    }

    ValidationReport { violations: v }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScopeError {
    #[error("filter references unknown column `{0}`")]
    UnknownColumn(String),
}

/// Rows selected by a column → values filter. Keys intersect; null cells
/// never match.
pub fn filter_rows(filter: &ValueFilter, table: &DataTable) -> Result<BTreeSet<usize>, ScopeError> {
    let mut keyed = Vec::with_capacity(filter.len());
    for (col, values) in filter {
        let idx = table
            .column_index(col)
            .ok_or_else(|| ScopeError::UnknownColumn(col.clone()))?;
        keyed.push((idx, values));
    }
    Ok((0..table.row_count())
        .filter(|&r| {
            keyed.iter().all(|(idx, values)| match table.cell(r, *idx).key() {
                Some(k) => values.contains(&k),
                None => false,
            })
        })
        .collect())
}

/// Rows of the fact's data subspace (its context filter).
pub fn fact_data_scope(fact: &DataFact, table: &DataTable) -> Result<BTreeSet<usize>, ScopeError> {
    filter_rows(&fact.context, table)
}

/// Rows inside the subspace that the focus highlights.
pub fn fact_focus_rows(fact: &DataFact, table: &DataTable) -> Result<BTreeSet<usize>, ScopeError> {
    let scope = fact_data_scope(fact, table)?;
    if !fact.has_focus() {
        return Ok(BTreeSet::new());
    }
    let focus = filter_rows(&fact.focus, table)?;
    Ok(scope.intersection(&focus).copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseKind {
    Factual,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clarity {
    Clear,
    Vague,
    Unknown,
}

/// A fact with the similarity score that ranked it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFact {
    pub fact: DataFact,
    pub similarity: f64,
}

impl ScoredFact {
    pub fn new(fact: DataFact, similarity: f64) -> Self {
        Self { fact, similarity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub id: usize,
    pub text: String,
    pub sentence_id: usize,
    pub paragraph: usize,
    /// Byte range of the clause inside the narrative.
    pub span: (usize, usize),
    pub kind: ClauseKind,
    pub clarity: Clarity,
    /// Ranked qualified candidates; always empty for background clauses.
    #[serde(default)]
    pub candidates: Vec<ScoredFact>,
}

impl Clause {
    pub fn background(id: usize, text: impl Into<String>, sentence_id: usize, paragraph: usize) -> Self {
        Self {
            id,
            text: text.into(),
            sentence_id,
            paragraph,
            span: (0, 0),
            kind: ClauseKind::Background,
            clarity: Clarity::Unknown,
            candidates: Vec::new(),
        }
    }

    pub fn factual(id: usize, text: impl Into<String>, sentence_id: usize, paragraph: usize) -> Self {
        Self {
            kind: ClauseKind::Factual,
            ..Self::background(id, text, sentence_id, paragraph)
        }
    }

    pub fn is_clear(&self) -> bool {
        self.kind == ClauseKind::Factual && self.clarity == Clarity::Clear
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoryError {
    #[error("clause ids must be 0..n in order; found {found} at position {position}")]
    ClauseOrder { position: usize, found: usize },
    #[error("clause {0} is background but carries facts")]
    BackgroundWithFacts(usize),
    #[error("factual clause {0} has no fact set")]
    MissingFacts(usize),
    #[error("fact set keyed by unknown clause {0}")]
    UnknownClause(usize),
}

/// Clause list plus the fact dictionary keyed by factual clause id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Story {
    pub clauses: Vec<Clause>,
    pub facts: BTreeMap<usize, Vec<ScoredFact>>,
}

impl Story {
    pub fn check(&self) -> Result<(), StoryError> {
        for (i, c) in self.clauses.iter().enumerate() {
            if c.id != i {
                return Err(StoryError::ClauseOrder {
                    position: i,
                    found: c.id,
                });
            }
            match c.kind {
                ClauseKind::Background if self.facts.contains_key(&c.id) || !c.candidates.is_empty() => {
                    return Err(StoryError::BackgroundWithFacts(c.id))
                }
                ClauseKind::Factual if self.facts.get(&c.id).is_none_or(|f| f.is_empty()) => {
                    return Err(StoryError::MissingFacts(c.id))
                }
                _ => {}
            }
        }
        if let Some(&k) = self.facts.keys().find(|&&k| k >= self.clauses.len()) {
            return Err(StoryError::UnknownClause(k));
        }
        Ok(())
    }

    pub fn facts_of(&self, clause: usize) -> &[ScoredFact] {
        self.facts.get(&clause).map(Vec::as_slice).unwrap_or(&[])
    }
}
