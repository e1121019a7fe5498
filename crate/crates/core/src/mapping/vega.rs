use serde_json::{json, Map, Value};

use super::{Channel, ChartSpec, Mark, Orientation};
use crate::model::{filter_rows, Cell, ColumnKind, DataTable, ValueFilter};

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

const MEASURE: &str = "measure";
const VALUE: &str = "value";

/// Vega expression that is true for rows matching every filter entry.
fn filter_test(filter: &ValueFilter) -> String {
    filter
        .iter()
        .map(|(col, vals)| {
            let col = serde_json::to_string(col).expect("string");
            let vals = serde_json::to_string(vals).expect("strings");
            format!("indexof({vals}, '' + datum[{col}]) >= 0")
        })
        .collect::<Vec<_>>()
        .join(" && ")
}

fn cell_value(cell: &Cell) -> Value {
    match cell {
        Cell::Null => Value::Null,
        Cell::Number(n) => json!(n),
        Cell::Text(s) => json!(s),
    }
}

fn inline_values(spec: &ChartSpec, table: &DataTable) -> Vec<Value> {
    let rows = filter_rows(&spec.data_scope, table).unwrap_or_default();
    let mut cols: Vec<&str> = spec.fields().into_iter().collect();
    for k in spec.emphasis.keys() {
        if !cols.contains(&k.as_str()) {
            cols.push(k);
        }
    }
    rows.into_iter()
        .map(|r| {
            let mut obj = Map::new();
            for c in &cols {
                if let Some(i) = table.column_index(c) {
                    obj.insert(c.to_string(), cell_value(table.cell(r, i)));
                }
            }
            Value::Object(obj)
        })
        .collect()
}

fn union_domain(spec: &ChartSpec) -> Option<[f64; 2]> {
    spec.measures
        .iter()
        .filter_map(|m| spec.scales.get(m)?.domain)
        .reduce(|a, b| [a[0].min(b[0]), a[1].max(b[1])])
}

fn encode(spec: &ChartSpec, ch: &Channel, table: &DataTable) -> Value {
    match ch {
        Channel::MeasureName => {
            let range: Vec<Value> = spec
                .measures
                .iter()
                .map(|m| json!(spec.scales.get(m).and_then(|s| s.color.clone()).unwrap_or_default()))
                .collect();
            json!({"field": MEASURE, "type": "nominal", "sort": spec.measures})
                .as_object()
                .cloned()
                .map(|mut o| {
                    o.insert("scale".into(), json!({"domain": spec.measures, "range": range}));
                    Value::Object(o)
                })
                .expect("object")
        }
        Channel::MeasureValue => {
            let mut o = json!({"field": VALUE, "type": "quantitative"});
            if let Some(d) = union_domain(spec) {
                o["scale"] = json!({"domain": d, "zero": false});
            }
            o
        }
        Channel::Field(f) => match table.kind_of(f) {
            Some(ColumnKind::Quantitative) => {
                let mut o = json!({"field": f, "type": "quantitative"});
                if let Some(d) = spec.scales.get(f).and_then(|s| s.domain) {
                    o["scale"] = json!({"domain": d, "zero": false});
                }
                o
            }
            kind => {
                let ty = if kind == Some(ColumnKind::Temporal) {
                    "ordinal"
                } else {
                    "nominal"
                };
                let mut o = json!({"field": f, "type": ty});
                if let Some(order) = spec.scales.get(f).and_then(|s| s.order.clone()) {
                    o["sort"] = json!(order);
                }
                o
            }
        },
    }
}

fn single(spec: &ChartSpec, table: &DataTable) -> Value {
    let mark = match spec.mark {
        Mark::Bar | Mark::StackedBar | Mark::GroupedBar => "bar",
        Mark::Line | Mark::MultiLine => "line",
        Mark::Point => "point",
        Mark::Tick => "tick",
    };
    let mut mark_obj = json!({"type": mark});
    if matches!(spec.mark, Mark::Line | Mark::MultiLine) {
        mark_obj["point"] = json!(true);
    }
    let mut enc = Map::new();
    for (name, ch) in [("x", &spec.x), ("y", &spec.y), ("color", &spec.color)] {
        if let Some(ch) = ch {
            enc.insert(name.into(), encode(spec, ch, table));
        }
    }
    if spec.color.is_none() && spec.measures.len() == 1 {
        if let Some(c) = spec.scales.get(&spec.measures[0]).and_then(|s| s.color.clone()) {
            mark_obj["color"] = json!(c);
        }
    }
    if spec.mark == Mark::GroupedBar {
        if let Some(c) = enc.get("color").and_then(|c| c.get("field")).cloned() {
            enc.insert("xOffset".into(), json!({"field": c}));
        }
    }
    if spec.has_emphasis() {
        let test = filter_test(&spec.emphasis);
        enc.insert(
            "opacity".into(),
            json!({"condition": {"test": test, "value": 1}, "value": 0.3}),
        );
        enc.insert(
            "strokeWidth".into(),
            json!({"condition": {"test": test, "value": 2}, "value": 0}),
        );
        enc.insert("stroke".into(), json!({"value": "#222222"}));
    }
    let mut out = json!({
        "title": spec.title,
        "data": {"values": inline_values(spec, table)},
        "mark": mark_obj,
        "encoding": enc,
    });
    if spec.measures.len() > 1 && !spec.fields().is_empty() && uses_fold(spec) {
        out["transform"] = json!([{"fold": spec.measures, "as": [MEASURE, VALUE]}]);
    }
    out
}

fn uses_fold(spec: &ChartSpec) -> bool {
    [&spec.x, &spec.y, &spec.color]
        .into_iter()
        .flatten()
        .any(|c| matches!(c, Channel::MeasureName | Channel::MeasureValue))
}

/// Vega-Lite v5 document for a chart (or side-by-side pair), data inline.
pub fn to_vega_lite(spec: &ChartSpec, table: &DataTable) -> Value {
    let mut doc = match &spec.pair {
        None => single(spec, table),
        Some(p) => {
            let key = match p.orientation {
                Orientation::Vertical => "vconcat",
                Orientation::Horizontal => "hconcat",
            };
            let shared = match p.orientation {
                Orientation::Vertical => "x",
                Orientation::Horizontal => "y",
            };
            json!({
                "title": spec.title,
                key: [single(spec, table), single(&p.chart, table)],
                "resolve": {"scale": {shared: "shared"}},
            })
        }
    };
    let obj = doc.as_object_mut().expect("object");
    let mut ordered = Map::new();
    ordered.insert("$schema".into(), json!(VEGA_LITE_SCHEMA));
    ordered.append(obj);
    Value::Object(ordered)
}
