//! Regenerates `fixtures/weather`: the fixture directory and the golden
//! story and storyboard.
//!
//! The replies below stand in for a live model. They are routed through the
//! recording backend so the files on disk have exactly the `--record` format.
//!
//!     cargo run -p narrative-player --example synth_weather_fixtures [DIR]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use narrative_player::analysis::{segment_sentences, AnalysisConfig, NarrativeDoc, Prompts};
use narrative_player::gateway::{Gateway, GenerationRequest, RecordingBackend, ScriptedBackend};
use narrative_player::model::{DataFact, FactType};
use narrative_player::pipeline::{run, PipelineConfig};
use narrative_player::table::load_table;

const LLM: &str = "fixture-llm";
const EMBED: &str = "fixture-embed";
const DIM: usize = 8;

const TEMPERATURES: [&str; 5] = ["Record high", "Average high", "Daily mean", "Average low", "Record low"];

struct ClauseScript {
    text: &'static str,
    /// Opening words of every rewrite, so rewrites stay distinct per clause.
    lead: &'static str,
    sessions: [Vec<(DataFact, f64)>; 3],
}

fn fact(ty: FactType, measures: &[&str]) -> DataFact {
    DataFact::new(ty, measures).with_breakdowns(&["Month"])
}

fn scripts() -> Vec<ClauseScript> {
    use FactType::*;
    let jul = || fact(Extreme, &["Average high"]).with_focus("Month", &["Jul"]);
    let jul_value = || DataFact::new(Value, &["Average high"]).with_context("Month", &["Jul"]);
    let summer_trend = || fact(Trend, &["Average high"]);
    let rain_peak = || fact(Extreme, &["Precipitation"]).with_focus("Month", &["May", "Jun"]);
    let rain_ctx = || DataFact::new(Value, &["Precipitation"]).with_context("Month", &["May", "Jun"]);
    let rain_corr = || fact(Correlation, &["Average high", "Precipitation"]);
    let nov = || DataFact::new(Value, &["Daily mean"]).with_context("Month", &["Nov"]);
    let autumn = || fact(Trend, &["Daily mean"]).with_focus("Month", &["Sep", "Oct", "Nov"]);
    let dec_value = || DataFact::new(Value, &["Average low"]).with_context("Month", &["Dec"]);
    let dec_dist = || fact(Distribution, &["Average low", "Record low"]).with_focus("Month", &["Dec"]);
    let dec_ext = || fact(Extreme, &["Average low", "Record low"]).with_focus("Month", &["Dec"]);
    let low_ext = || fact(Extreme, &["Record low"]).with_focus("Month", &["Dec"]);
    let low_value = || DataFact::new(Value, &["Record low"]).with_context("Month", &["Dec"]);
    let low_cmp = || fact(Comparison, &["Average low", "Record low"]).with_focus("Month", &["Dec"]);
    vec![
        ClauseScript {
            text: "Summers here are long and hot, with July's average high reaching 31.6°C.",
            lead: "Summers here are long and hot, with",
            sessions: [
                vec![(jul(), 0.95), (jul_value(), 0.93), (summer_trend(), 0.88)],
                vec![
                    (jul(), 0.95),
                    (
                        fact(Extreme, &["Record high", "Average high"]).with_focus("Month", &["Jul"]),
                        0.84,
                    ),
                    (jul_value(), 0.93),
                ],
                vec![
                    (
                        fact(Distribution, &["Average high"]).with_focus("Month", &["Jul"]),
                        0.80,
                    ),
                    (summer_trend(), 0.88),
                    (
                        fact(Comparison, &["Average high"]).with_focus("Month", &["Jun", "Jul", "Aug"]),
                        0.86,
                    ),
                ],
            ],
        },
        ClauseScript {
            text: "The rain follows the heat, especially in May and June.",
            lead: "The rain follows the heat, with",
            sessions: [
                vec![(rain_peak(), 0.94), (rain_ctx(), 0.90), (rain_corr(), 0.89)],
                vec![
                    (rain_corr(), 0.89),
                    (rain_peak(), 0.94),
                    (fact(Trend, &["Precipitation"]), 0.83),
                ],
                vec![
                    (
                        fact(Comparison, &["Precipitation"]).with_focus("Month", &["May", "Jun"]),
                        0.91,
                    ),
                    (rain_ctx(), 0.90),
                    (fact(Rank, &["Precipitation"]), 0.79),
                ],
            ],
        },
        ClauseScript {
            text: "November's daily mean falls to 21.4°C as autumn cools off.",
            lead: "As autumn cools off,",
            sessions: [
                vec![(nov(), 0.95), (autumn(), 0.92), (fact(Trend, &["Daily mean"]), 0.89)],
                vec![
                    (nov(), 0.95),
                    (autumn(), 0.92),
                    (fact(Trend, &["Average high", "Daily mean"]), 0.82),
                ],
                vec![
                    (fact(Extreme, &["Daily mean"]).with_focus("Month", &["Nov"]), 0.86),
                    (nov(), 0.95),
                    (fact(Deviation, &["Daily mean"]).with_focus("Month", &["Nov"]), 0.81),
                ],
            ],
        },
        ClauseScript {
            text: "The chill of winter finds its way.",
            lead: "Winter brings",
            sessions: [
                vec![
                    (
                        DataFact::new(Value, &["Daily mean"]).with_context("Month", &["Jan"]),
                        0.78,
                    ),
                    (fact(Trend, &["Average low"]), 0.83),
                    (fact(Extreme, &["Record low"]).with_focus("Month", &["Jan"]), 0.80),
                ],
                vec![
                    (fact(Distribution, &["Average low"]), 0.86),
                    (fact(Trend, &["Daily mean"]), 0.87),
                    (fact(Trend, &["Average low"]), 0.83),
                ],
                vec![
                    (fact(Comparison, &["Average high", "Average low"]), 0.74),
                    (fact(Rank, &["Record low"]), 0.71),
                    (fact(Distribution, &["Average low"]), 0.86),
                ],
            ],
        },
        ClauseScript {
            text: "It arrives with December's average low at a cool 12.5°C",
            lead: "It arrives with",
            sessions: [
                vec![(dec_value(), 0.90), (dec_dist(), 0.89), (dec_ext(), 0.96)],
                vec![
                    (dec_ext(), 0.96),
                    (dec_value(), 0.90),
                    (fact(Trend, &["Average low"]), 0.82),
                ],
                vec![
                    (dec_dist(), 0.89),
                    (fact(Rank, &["Average low"]).with_focus("Month", &["Dec"]), 0.88),
                    (dec_ext(), 0.96),
                ],
            ],
        },
        ClauseScript {
            text: "and a record low that dips to an almost freezing 1.7°C.",
            lead: "and",
            sessions: [
                vec![(low_ext(), 0.95), (low_value(), 0.93), (low_cmp(), 0.87)],
                vec![
                    (low_value(), 0.93),
                    (low_ext(), 0.95),
                    (fact(Trend, &["Record low"]), 0.81),
                ],
                vec![
                    (low_cmp(), 0.87),
                    (fact(Distribution, &["Record low"]).with_focus("Month", &["Dec"]), 0.86),
                    (low_ext(), 0.95),
                ],
            ],
        },
    ]
}

/// Deterministic unit vector for a clause.
fn base_vector(k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..DIM).map(|j| ((k * 7 + j * 3 + 1) as f64).sin()).collect();
    normalize(v)
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// A unit vector at cosine `sim` from `base`, rounded like a stored reply.
fn at_similarity(base: &[f64], sim: f64, salt: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..DIM).map(|j| ((salt * 13 + j * 5 + 2) as f64).cos()).collect();
    let dot: f64 = raw.iter().zip(base).map(|(a, b)| a * b).sum();
    let ortho = normalize(raw.iter().zip(base).map(|(a, b)| a - dot * b).collect());
    let s = (1.0 - sim * sim).sqrt();
    base.iter().zip(&ortho).map(|(b, o)| round6(sim * b + s * o)).collect()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn describe(f: &DataFact) -> String {
    let mut s = format!(
        "the {} of {}",
        f.fact_type.as_str(),
        f.measures.join(" and ").to_lowercase()
    );
    for (col, vals) in &f.context {
        s.push_str(&format!(" in {} {}", col.to_lowercase(), vals.join(", ")));
    }
    if !f.breakdowns.is_empty() {
        s.push_str(&format!(" by {}", f.breakdowns.join(", ").to_lowercase()));
    }
    for vals in f.focus.values() {
        s.push_str(&format!(", highlighting {}", vals.join(" and ")));
    }
    s
}

fn line_after<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(label)).map(str::trim)
}

struct Script {
    clauses: Vec<ClauseScript>,
    plain: String,
    vectors: Mutex<HashMap<String, Vec<f64>>>,
}

impl Script {
    fn clause_of_gap(&self, prompt: &str) -> Option<usize> {
        self.clauses
            .iter()
            .position(|c| prompt.contains(&self.plain.replacen(c.text, "[[____]]", 1)))
    }

    fn reply(&self, req: &GenerationRequest) -> Option<String> {
        let p = req.prompt.as_str();
        let markers = [
            ("classify", "FACTUAL or BACKGROUND"),
            ("clauses", "Split the sentence below into clauses"),
            ("extract", "You extract data facts"),
            ("rewrite", "A clause has been removed"),
            ("keywords", "The clause below is vague"),
            ("fields", "These fields are shown"),
        ];
        let (template, _) = markers.iter().find(|(_, m)| p.contains(m))?;
        match *template {
            "classify" => {
                let s = line_after(p, "Sentence:")?;
                Some(
                    if s.starts_with("Welcome") {
                        "BACKGROUND"
                    } else {
                        "FACTUAL"
                    }
                    .into(),
                )
            }
            "clauses" => {
                let s = line_after(p, "Sentence:")?;
                let parts: Vec<&str> = match s.find(" and a record low") {
                    Some(i) => vec![&s[..i], &s[i + 1..]],
                    None => vec![s],
                };
                Some(serde_json::to_string(&parts).unwrap())
            }
            "extract" => {
                let target = line_after(p, "Target clause:")?;
                let c = self.clauses.iter().find(|c| c.text == target)?;
                let facts: Vec<&DataFact> = c.sessions[req.session_id as usize].iter().map(|(f, _)| f).collect();
                Some(serde_json::to_string_pretty(&facts).unwrap())
            }
            "rewrite" => {
                let k = self.clause_of_gap(p)?;
                let json = p.lines().find(|l| l.starts_with('{'))?;
                let f: DataFact = serde_json::from_str(json).ok()?;
                let sim = self.clauses[k]
                    .sessions
                    .iter()
                    .flatten()
                    .find(|(g, _)| g.same_fact(&f))
                    .map(|(_, s)| *s)?;
                let text = format!("{} {}", self.clauses[k].lead, describe(&f));
                let salt = text.len() + k;
                self.vectors
                    .lock()
                    .unwrap()
                    .insert(text.clone(), at_similarity(&base_vector(k), sim, salt));
                Some(text)
            }
            "keywords" => {
                let target = line_after(p, "Target clause:")?;
                (target == "The chill of winter finds its way.").then(|| {
                    serde_json::json!({"keywords": [
                        {"keyword": "chill", "properties": TEMPERATURES, "values": []},
                        {"keyword": "winter", "properties": [], "values": [
                            {"column": "Month", "value": "Dec"},
                            {"column": "Month", "value": "Jan"},
                            {"column": "Month", "value": "Feb"}
                        ]}
                    ]})
                    .to_string()
                })
            }
            "fields" => {
                let listed: Vec<&str> = p.lines().filter_map(|l| l.strip_prefix("- ")).collect();
                let temps: Vec<&str> = TEMPERATURES.iter().copied().filter(|t| listed.contains(t)).collect();
                let groups: Vec<Vec<&str>> = if temps.len() > 1 { vec![temps] } else { vec![] };
                Some(serde_json::to_string(&groups).unwrap())
            }
            _ => None,
        }
    }

    fn embed(&self, text: &str) -> Option<Vec<f64>> {
        if let Some(k) = self.clauses.iter().position(|c| c.text == text) {
            return Some(base_vector(k).into_iter().map(round6).collect());
        }
        self.vectors.lock().unwrap().get(text).cloned()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/weather"));
    let narrative = std::fs::read_to_string(dir.join("narrative.txt"))?;
    let table = load_table(&dir.join("table.csv"), None)?;
    let cfg = PipelineConfig::default();
    let plain = NarrativeDoc::new(segment_sentences(&narrative, &AnalysisConfig::default())?).plain();

    let fx = dir.join("fx");
    if fx.exists() {
        std::fs::remove_dir_all(&fx)?;
    }
    let script = Arc::new(Script {
        clauses: scripts(),
        plain,
        vectors: Mutex::new(HashMap::new()),
    });
    let (s1, s2) = (script.clone(), script.clone());
    let scripted = ScriptedBackend::new(move |r| s1.reply(r), move |t| s2.embed(t));
    let backend = RecordingBackend::new(Box::new(scripted), &fx)?;
    let gw = Gateway::new(Arc::new(backend), LLM, EMBED);

    let (story, generated) = run(&narrative, &table, &gw, &Prompts::default(), None, &cfg)?;
    let mut story_json = serde_json::to_string_pretty(&story)?;
    story_json.push('\n');
    std::fs::write(dir.join("story.json"), story_json)?;
    std::fs::write(dir.join("storyboard.json"), generated.storyboard.to_json())?;
    eprintln!(
        "wrote {} fixtures, {} frames, F = {:.4}",
        std::fs::read_dir(&fx)?.count() - 1,
        generated.storyboard.frames.len(),
        generated.selection.score.f
    );
    Ok(())
}
