//! Browser demo for the narrative player. Everything runs on the embedded
//! weather example; no network, no LLM.
//!
//! The plain Rust functions return JSON strings so they can be tested
//! natively; the `#[wasm_bindgen]` wrappers at the bottom only convert
//! errors for JavaScript.

pub mod svg;

use std::sync::Arc;

use narrative_player::analysis::Prompts;
use narrative_player::gateway::{FixtureBackend, FixtureEntry, Gateway};
use narrative_player::mapping::{comparable_groups, harmonize, map_fact_to_charts, ChartSpec};
use narrative_player::model::{DataTable, Story};
use narrative_player::optimizer::{
    activations, retrieval_probability, transition_cost, transition_cost_composite, transition_cost_joined, CostTable,
    Visual, Weights,
};
use narrative_player::pipeline::{generate, PipelineConfig};
use narrative_player::storyboard::{plan_transition, FrameRole};
use narrative_player::table::table_from_csv;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const TABLE_CSV: &str = include_str!("../../../fixtures/weather/table.csv");
const STORY_JSON: &str = include_str!("../../../fixtures/weather/story.json");
/// The one recorded reply `generate` needs: which fields share an axis.
const FIELDS_FIXTURE: &str =
    include_str!("../../../fixtures/weather/fx/561830de0cd5fee7e57185fb86624814bd57f64d320d1a94bf584a69a3dc9297.json");

fn table() -> DataTable {
    table_from_csv("table", TABLE_CSV, None).expect("embedded table parses")
}

fn story() -> Story {
    serde_json::from_str(STORY_JSON).expect("embedded story parses")
}

fn gateway() -> Gateway {
    let entry: FixtureEntry = serde_json::from_str(FIELDS_FIXTURE).expect("embedded fixture parses");
    Gateway::new(
        Arc::new(FixtureBackend::in_memory().with(entry)),
        "fixture-llm",
        "fixture-embed",
    )
}

/// Activations and the retrieval probability of a whitespace-separated
/// sequence of labels, e.g. `"A A B"`.
pub fn retrieval_report(sequence: &str, alpha: f64, beta: f64) -> Result<String, String> {
    if !(alpha.is_finite() && beta.is_finite()) || alpha < 0.0 || beta < 0.0 {
        return Err("alpha and beta must be non-negative numbers".into());
    }
    let seq: Vec<&str> = sequence.split_whitespace().collect();
    let acts = activations(&seq, alpha, beta);
    let max = acts.iter().map(|(_, a)| *a).fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = acts.iter().map(|(_, a)| (a - max).exp()).sum();
    let items: Vec<Value> = acts
        .iter()
        .map(|(k, a)| json!({"label": k, "activation": a, "share": (a - max).exp() / denom}))
        .collect();
    Ok(json!({"p": retrieval_probability(&seq, alpha, beta), "items": items}).to_string())
}

/// Re-runs selection and assembly on the weather story with the given
/// weights. Frames come back with an SVG rendering each.
pub fn weather_storyboard(transition: f64, focus: f64, retrieval: f64) -> Result<String, String> {
    let weights = Weights::parse_triple(&format!("{transition},{focus},{retrieval}"))?;
    let cfg = PipelineConfig {
        weights,
        ..PipelineConfig::default()
    };
    let table = table();
    let g = generate(&story(), &table, Some(&gateway()), &Prompts::default(), None, &cfg).map_err(|e| e.to_string())?;
    let sb = &g.storyboard;
    let frames: Vec<Value> = sb
        .frames
        .iter()
        .map(|f| {
            json!({
                "index": f.index,
                "subtitle": f.subtitle,
                "start_ms": f.start_ms,
                "end_ms": f.end_ms,
                "role": f.role,
                "title": f.charts.first().map(|c| c.spec.title.clone()),
                "svg": f.charts.first().map(|c| svg::render_with(&c.spec, &table, f.role != FrameRole::Skeleton)),
            })
        })
        .collect();
    let transitions: Vec<Value> = sb
        .transitions
        .iter()
        .map(|t| json!({"from": t.from_frame, "to": t.to_frame, "kind": t.kind, "steps": t.steps.len()}))
        .collect();
    Ok(json!({
        "score": g.selection.score,
        "choice": g.selection.choice,
        "search": g.selection.mode,
        "total_ms": sb.total_ms,
        "frames": frames,
        "transitions": transitions,
        "storyboard": sb,
    })
    .to_string())
}

/// Every chart the weather story's facts map to, harmonized the same way
/// `generate` does it.
fn chart_pool(table: &DataTable) -> Vec<ChartSpec> {
    let story = story();
    let mut charts: Vec<ChartSpec> = Vec::new();
    for c in &story.clauses {
        for sf in story.facts_of(c.id) {
            for chart in map_fact_to_charts(&sf.fact, table).unwrap_or_default() {
                if !charts.contains(&chart) {
                    charts.push(chart);
                }
            }
        }
    }
    let mut fields: Vec<String> = Vec::new();
    for m in charts.iter().flat_map(|c| c.parts()).flat_map(|c| c.measures.iter()) {
        if !fields.contains(m) {
            fields.push(m.clone());
        }
    }
    let groups = comparable_groups(&gateway(), &Prompts::default(), &fields, 0.3);
    harmonize(&[charts], &groups, table).remove(0)
}

/// Titles of the charts available to `transition_report`.
pub fn weather_charts() -> String {
    let table = table();
    let list: Vec<Value> = chart_pool(&table)
        .iter()
        .enumerate()
        .map(|(i, c)| json!({"index": i, "title": c.title, "paired": c.pair.is_some(), "focus": c.has_emphasis()}))
        .collect();
    Value::Array(list).to_string()
}

/// Transition plan and the three cost variants between two pool charts.
pub fn transition_report(from: usize, to: usize) -> Result<String, String> {
    let table = table();
    let pool = chart_pool(&table);
    let get = |i: usize| {
        pool.get(i)
            .ok_or_else(|| format!("no chart {i}; there are {}", pool.len()))
    };
    let (a, b) = (get(from)?, get(to)?);
    let costs = CostTable::default();
    let plan = plan_transition(a, b, 0, 1, &costs);
    let steps: Vec<Value> = plan
        .steps
        .iter()
        .map(|s| {
            json!({
                "action": s.action,
                "from": s.from,
                "to": s.to,
                "phase": s.phase,
                "via": s.via.as_ref().map(|v| svg::render(v, &table)),
            })
        })
        .collect();
    Ok(json!({
        "kind": plan.kind,
        "cost": {
            "static": transition_cost(Some(a), Some(b), &costs),
            "joined": transition_cost_joined(Some(a), Some(b), &costs),
            "composite": transition_cost_composite(Visual::of(Some(a)), Visual::of(Some(b)), &costs),
        },
        "steps": steps,
        "from_svg": svg::render(a, &table),
        "to_svg": svg::render(b, &table),
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = retrievalReport)]
pub fn retrieval_report_js(sequence: &str, alpha: f64, beta: f64) -> Result<String, JsValue> {
    js(retrieval_report(sequence, alpha, beta))
}

#[wasm_bindgen(js_name = weatherStoryboard)]
pub fn weather_storyboard_js(transition: f64, focus: f64, retrieval: f64) -> Result<String, JsValue> {
    js(weather_storyboard(transition, focus, retrieval))
}

#[wasm_bindgen(js_name = weatherCharts)]
pub fn weather_charts_js() -> String {
    weather_charts()
}

#[wasm_bindgen(js_name = transitionReport)]
pub fn transition_report_js(from: usize, to: usize) -> Result<String, JsValue> {
    js(transition_report(from, to))
}
