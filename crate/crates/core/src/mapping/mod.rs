//! Turning data facts into chart specifications.

mod harmonize;
mod vega;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{fact_data_scope, filter_rows, ColumnKind, DataFact, DataTable, FactType, ScopeError, ValueFilter};

pub use harmonize::{comparable_groups, harmonize, parse_groups, shade, FieldGroups, PALETTE};
pub use vega::{to_vega_lite, VEGA_LITE_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mark {
    Bar,
    StackedBar,
    GroupedBar,
    Line,
    MultiLine,
    Point,
    Tick,
}

/// What a channel shows: a table column, or (for charts over several
/// measures) the measure names / values of the folded measures.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Field(String),
    MeasureName,
    MeasureValue,
}

/// Scale settings for one field, shared by every chart that shows it once
/// harmonized.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldScale {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 2]>,
    /// Category order for dimension fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedChart {
    pub chart: ChartSpec,
    /// Column both charts share on their aligned axis.
    pub align: String,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub mark: Mark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Channel>,
    /// Quantitative fields plotted, in fold order.
    pub measures: Vec<String>,
    pub data_scope: ValueFilter,
    pub emphasis: ValueFilter,
    pub title: String,
    pub scales: BTreeMap<String, FieldScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<Box<PairedChart>>,
}

impl ChartSpec {
    /// Every column the chart encodes (measures and dimensions).
    pub fn fields(&self) -> BTreeSet<&str> {
        let mut out: BTreeSet<&str> = self.measures.iter().map(String::as_str).collect();
        for ch in [&self.x, &self.y, &self.color].into_iter().flatten() {
            if let Channel::Field(f) = ch {
                out.insert(f);
            }
        }
        out
    }

    /// Dimension columns placed on a channel.
    pub fn dimensions(&self) -> BTreeSet<&str> {
        let measures: BTreeSet<&str> = self.measures.iter().map(String::as_str).collect();
        self.fields().into_iter().filter(|f| !measures.contains(f)).collect()
    }

    pub fn has_emphasis(&self) -> bool {
        !self.emphasis.is_empty()
    }

    /// The one or two single charts making up this visual.
    pub fn parts(&self) -> Vec<&ChartSpec> {
        match &self.pair {
            Some(p) => vec![self, &p.chart],
            None => vec![self],
        }
    }

    pub fn without_emphasis(&self) -> ChartSpec {
        let mut c = self.clone();
        c.emphasis.clear();
        if let Some(p) = c.pair.as_mut() {
            p.chart.emphasis.clear();
        }
        c
    }

    /// Identity used to group repeated visuals: everything but emphasis.
    pub fn identity_key(&self) -> String {
        serde_json::to_string(&self.without_emphasis()).expect("chart spec serializes")
    }

    /// Axes and title only: no marks are drawn, no emphasis.
    pub fn skeleton(&self) -> ChartSpec {
        let mut c = self.without_emphasis();
        c.data_scope.clear();
        c.pair = None;
        c
    }

    pub fn emphasis_rows(&self, table: &DataTable) -> Result<BTreeSet<usize>, ScopeError> {
        if self.emphasis.is_empty() {
            return Ok(BTreeSet::new());
        }
        let scope = filter_rows(&self.data_scope, table)?;
        let focus = filter_rows(&self.emphasis, table)?;
        Ok(scope.intersection(&focus).copied().collect())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("no chart mapping for {fact_type} fact over {measures:?}: {reason}")]
    Unmappable {
        fact_type: &'static str,
        measures: Vec<String>,
        reason: &'static str,
    },
    #[error(transparent)]
    Scope(#[from] ScopeError),
}

fn unmappable(fact: &DataFact, reason: &'static str) -> MappingError {
    MappingError::Unmappable {
        fact_type: fact.fact_type.as_str(),
        measures: fact.measures.clone(),
        reason,
    }
}

fn title_of(fact: &DataFact) -> String {
    let kind = fact.fact_type.as_str();
    let mut t = format!(
        "{}{} of {}",
        kind[..1].to_uppercase(),
        &kind[1..],
        fact.measures.join(", ")
    );
    if !fact.breakdowns.is_empty() {
        t.push_str(" by ");
        t.push_str(&fact.breakdowns.join(", "));
    }
    if !fact.context.is_empty() {
        let ctx: Vec<String> = fact
            .context
            .iter()
            .map(|(k, v)| format!("{k}: {}", v.join(", ")))
            .collect();
        t.push_str(&format!(" ({})", ctx.join("; ")));
    }
    t
}

/// Local scales from the fact's own data; `harmonize` replaces them with
/// shared ones.
fn local_scales(spec: &ChartSpec, table: &DataTable) -> BTreeMap<String, FieldScale> {
    let rows = filter_rows(&spec.data_scope, table).unwrap_or_default();
    let mut out = BTreeMap::new();
    for (i, m) in spec.measures.iter().enumerate() {
        let idx = table.column_index(m).expect("validated measure");
        let vals: Vec<f64> = rows.iter().filter_map(|&r| table.cell(r, idx).as_f64()).collect();
        out.insert(
            m.clone(),
            FieldScale {
                domain: harmonize::padded_domain(vals.iter().copied()),
                order: None,
                color: Some(PALETTE[i % PALETTE.len()].to_string()),
            },
        );
    }
    for d in spec.dimensions() {
        let order = table.distinct_values(d);
        out.insert(
            d.to_string(),
            FieldScale {
                domain: None,
                order: Some(order),
                color: None,
            },
        );
    }
    out
}

struct Builder<'a> {
    fact: &'a DataFact,
    table: &'a DataTable,
}

impl Builder<'_> {
    fn chart(
        &self,
        mark: Mark,
        x: Option<Channel>,
        y: Option<Channel>,
        color: Option<Channel>,
        measures: &[String],
    ) -> ChartSpec {
        let mut spec = ChartSpec {
            mark,
            x,
            y,
            color,
            measures: measures.to_vec(),
            data_scope: self.fact.context.clone(),
            emphasis: self.fact.focus.clone(),
            title: title_of(self.fact),
            scales: BTreeMap::new(),
            pair: None,
        };
        spec.scales = local_scales(&spec, self.table);
        spec
    }

    /// Bars of one or several measures over `x` (or over measure names).
    fn bars(&self, x: Option<&str>, measures: &[String]) -> ChartSpec {
        let field = |s: &str| Channel::Field(s.to_string());
        match (x, measures.len()) {
            (Some(x), 1) => self.chart(Mark::Bar, Some(field(x)), Some(field(&measures[0])), None, measures),
            (Some(x), _) => self.chart(
                Mark::GroupedBar,
                Some(field(x)),
                Some(Channel::MeasureValue),
                Some(Channel::MeasureName),
                measures,
            ),
            (None, 1) => self.chart(Mark::Bar, None, Some(field(&measures[0])), None, measures),
            (None, _) => self.chart(
                Mark::Bar,
                Some(Channel::MeasureName),
                Some(Channel::MeasureValue),
                Some(Channel::MeasureName),
                measures,
            ),
        }
    }

    fn side_by_side(&self, mut first: ChartSpec, second: ChartSpec, align: &str) -> ChartSpec {
        first.pair = Some(Box::new(PairedChart {
            chart: second,
            align: align.to_string(),
            // The aligned column sits on the horizontal axis, so the two
            // charts stack vertically.
            orientation: Orientation::Vertical,
        }));
        first
    }
}

/// Candidate charts for a fact, following the type/breakdown/measure table.
pub fn map_fact_to_charts(fact: &DataFact, table: &DataTable) -> Result<Vec<ChartSpec>, MappingError> {
    fact_data_scope(fact, table)?;
    if fact.measures.is_empty() {
        return Err(unmappable(fact, "no measures"));
    }
    let b = Builder { fact, table };
    let f = |s: &str| Channel::Field(s.to_string());
    let kind = |c: &str| table.kind_of(c);
    let dims: Vec<&str> = fact
        .breakdowns
        .iter()
        .map(String::as_str)
        .filter(|c| kind(c).is_some_and(ColumnKind::is_dimension))
        .collect();
    let temporal = dims.iter().copied().find(|c| kind(c) == Some(ColumnKind::Temporal));
    let first_dim = dims.first().copied();
    let ms = &fact.measures;

    let out = match fact.fact_type {
        FactType::Trend => {
            let t = temporal.ok_or_else(|| unmappable(fact, "trend needs a temporal breakdown"))?;
            let other = dims.iter().copied().find(|&c| c != t);
            if ms.len() > 1 {
                vec![b.chart(
                    Mark::MultiLine,
                    Some(f(t)),
                    Some(Channel::MeasureValue),
                    Some(Channel::MeasureName),
                    ms,
                )]
            } else if let Some(o) = other {
                vec![b.chart(Mark::MultiLine, Some(f(t)), Some(f(&ms[0])), Some(f(o)), ms)]
            } else {
                vec![b.chart(Mark::Line, Some(f(t)), Some(f(&ms[0])), None, ms)]
            }
        }
        FactType::Comparison => {
            if ms.len() == 1 {
                match (first_dim, dims.get(1)) {
                    (Some(x), Some(&c)) => {
                        vec![b.chart(Mark::GroupedBar, Some(f(x)), Some(f(&ms[0])), Some(f(c)), ms)]
                    }
                    _ => vec![b.bars(first_dim, ms)],
                }
            } else {
                let mut out = vec![b.bars(first_dim, ms)];
                if let Some(x) = first_dim {
                    let left = b.bars(Some(x), &ms[..1]);
                    let right = b.bars(Some(x), &ms[1..]);
                    out.push(b.side_by_side(left, right, x));
                }
                out
            }
        }
        FactType::Correlation => {
            if ms.len() < 2 {
                return Err(unmappable(fact, "correlation needs two measures"));
            }
            let color = first_dim.map(f);
            let mut out = vec![b.chart(Mark::Point, Some(f(&ms[0])), Some(f(&ms[1])), color, &ms[..2])];
            if let Some(x) = first_dim {
                let mark = if kind(x) == Some(ColumnKind::Temporal) {
                    Mark::Line
                } else {
                    Mark::Bar
                };
                let left = b.chart(mark, Some(f(x)), Some(f(&ms[0])), None, &ms[..1]);
                let right = b.chart(mark, Some(f(x)), Some(f(&ms[1])), None, &ms[1..2]);
                out.push(b.side_by_side(left, right, x));
            }
            out
        }
        FactType::Distribution => {
            let tick = if ms.len() == 1 {
                b.chart(Mark::Tick, Some(f(&ms[0])), None, None, ms)
            } else {
                b.chart(
                    Mark::Tick,
                    Some(Channel::MeasureValue),
                    Some(Channel::MeasureName),
                    Some(Channel::MeasureName),
                    ms,
                )
            };
            match first_dim {
                Some(x) => vec![b.bars(Some(x), ms), tick],
                None => vec![tick],
            }
        }
        FactType::Extreme | FactType::Value | FactType::Rank | FactType::Deviation => {
            vec![b.bars(first_dim, ms)]
        }
        FactType::Proportion => match (first_dim, dims.get(1), ms.len()) {
            (Some(x), Some(&c), _) => {
                vec![b.chart(Mark::StackedBar, Some(f(x)), Some(f(&ms[0])), Some(f(c)), &ms[..1])]
            }
            (Some(c), None, 1) => vec![b.chart(Mark::StackedBar, None, Some(f(&ms[0])), Some(f(c)), ms)],
            (x, _, n) if n > 1 => vec![b.chart(
                Mark::StackedBar,
                x.map(f),
                Some(Channel::MeasureValue),
                Some(Channel::MeasureName),
                ms,
            )],
            _ => return Err(unmappable(fact, "proportion needs a breakdown or several measures")),
        },
    };
    Ok(out)
}

/// One position of the sequence search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Candidate {
    Chart {
        spec: ChartSpec,
    },
    /// Show exactly what the previous clause showed.
    RepeatPrevious,
    /// Axes and title of the next chart, for leading clauses without facts.
    Skeleton,
}

/// Per-clause summary used by `adjust_vague_visuals` and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInfo {
    pub clear: bool,
    pub vague: bool,
    pub charts: Vec<ChartSpec>,
}

/// Applies the rules for vague and fact-less clauses and returns one
/// candidate list per clause.
pub fn adjust_vague_visuals(slots: &[SlotInfo]) -> Vec<Vec<Candidate>> {
    let mut seen_chart = false;
    slots
        .iter()
        .map(|s| {
            let charts = s.charts.iter();
            let out: Vec<Candidate> = if s.charts.is_empty() {
                if seen_chart {
                    vec![Candidate::RepeatPrevious]
                } else {
                    vec![Candidate::Skeleton]
                }
            } else if s.vague && !seen_chart {
                charts
                    .map(|c| Candidate::Chart {
                        spec: c.without_emphasis(),
                    })
                    .collect()
            } else if s.vague {
                charts
                    .map(|c| Candidate::Chart { spec: c.clone() })
                    .chain([Candidate::RepeatPrevious])
                    .collect()
            } else {
                charts.map(|c| Candidate::Chart { spec: c.clone() }).collect()
            };
            seen_chart |= !s.charts.is_empty();
            out
        })
        .collect()
}
