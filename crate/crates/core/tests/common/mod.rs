//! Shared helpers for the integration tests: the weather fixtures and a
//! seeded generator of random facts, charts and candidate tables.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use narrative_player::gateway::{FixtureBackend, Gateway};
use narrative_player::mapping::{map_fact_to_charts, Candidate, ChartSpec};
use narrative_player::model::{validate_fact, DataFact, DataTable, FactType};
use narrative_player::table::load_table;
use rand::seq::SliceRandom;
use rand::Rng;

pub const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
pub const MEASURES: [&str; 6] = [
    "Record high",
    "Average high",
    "Daily mean",
    "Average low",
    "Record low",
    "Precipitation",
];
const TYPES: [FactType; 9] = [
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

pub fn weather_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/weather")
}

pub fn weather_table() -> DataTable {
    load_table(&weather_dir().join("table.csv"), None).unwrap()
}

pub fn weather_narrative() -> String {
    std::fs::read_to_string(weather_dir().join("narrative.txt")).unwrap()
}

pub fn weather_gateway() -> Gateway {
    let fx = FixtureBackend::open(&weather_dir().join("fx")).unwrap();
    Gateway::new(Arc::new(fx), "fixture-llm", "fixture-embed")
}

fn some_months<R: Rng>(rng: &mut R, max: usize) -> Vec<&'static str> {
    let n = rng.gen_range(1..=max);
    let mut m: Vec<&str> = MONTHS.choose_multiple(rng, n).copied().collect();
    m.sort_by_key(|x| MONTHS.iter().position(|y| y == x));
    m
}

/// A random fact over the weather table; may be invalid or unmappable.
pub fn random_fact<R: Rng>(rng: &mut R) -> DataFact {
    let ty = *TYPES.choose(rng).unwrap();
    let n = rng.gen_range(1..=3);
    let measures: Vec<&str> = MEASURES.choose_multiple(rng, n).copied().collect();
    let mut f = DataFact::new(ty, &measures);
    if rng.gen_bool(0.8) {
        f = f.with_breakdowns(&["Month"]);
    }
    if rng.gen_bool(0.3) {
        f = f.with_context("Month", &some_months(rng, 8));
    }
    if rng.gen_bool(0.5) {
        f = f.with_focus("Month", &some_months(rng, 3));
    }
    f
}

/// A random valid chart for the weather table.
pub fn random_chart<R: Rng>(rng: &mut R, table: &DataTable) -> ChartSpec {
    loop {
        let f = random_fact(rng);
        if !validate_fact(&f, table).is_valid() {
            continue;
        }
        if let Ok(charts) = map_fact_to_charts(&f, table) {
            return charts.choose(rng).unwrap().clone();
        }
    }
}

/// A random single (unpaired) chart.
pub fn random_single<R: Rng>(rng: &mut R, table: &DataTable) -> ChartSpec {
    loop {
        let c = random_chart(rng, table);
        if c.pair.is_none() {
            return c;
        }
    }
}

/// A random paired chart.
pub fn random_pair<R: Rng>(rng: &mut R, table: &DataTable) -> ChartSpec {
    loop {
        let c = random_chart(rng, table);
        if c.pair.is_some() {
            return c;
        }
    }
}

/// Random candidate table: `n` positions with up to `k` chart candidates
/// each, occasionally a repeat-previous option, plus random clarity flags.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    table: &DataTable,
    n: usize,
    k: usize,
    exact: bool,
) -> (Vec<Vec<Candidate>>, Vec<bool>) {
    // A small pool so that identical charts recur across positions.
    let pool: Vec<ChartSpec> = (0..n + 3).map(|_| random_chart(rng, table)).collect();
    let mut candidates = Vec::with_capacity(n);
    for pos in 0..n {
        let m = if exact { k } else { rng.gen_range(1..=k) };
        let mut list: Vec<Candidate> = (0..m)
            .map(|_| Candidate::Chart {
                spec: pool.choose(rng).unwrap().clone(),
            })
            .collect();
        if pos > 0 && m > 1 && rng.gen_bool(0.2) {
            list[m - 1] = Candidate::RepeatPrevious;
        }
        candidates.push(list);
    }
    let clear = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    (candidates, clear)
}
