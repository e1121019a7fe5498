use narrative_player_demo::{retrieval_report, transition_report, weather_charts, weather_storyboard};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn golden() -> Value {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/weather/storyboard.json");
    parse(&std::fs::read_to_string(path).unwrap())
}

#[test]
fn retrieval_matches_the_worked_value() {
    let r = parse(&retrieval_report("A A B", 1.0, 0.5).unwrap());
    assert!((r["p"].as_f64().unwrap() - 0.62246).abs() < 1e-5);
    assert_eq!(r["items"][0]["label"], "A");
    assert_eq!(r["items"][0]["activation"], 2.0);
    let shares: f64 = r["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["share"].as_f64().unwrap())
        .sum();
    assert!((shares - 1.0).abs() < 1e-12);
}

#[test]
fn empty_sequence_and_bad_parameters() {
    assert_eq!(parse(&retrieval_report("  ", 1.0, 0.5).unwrap())["p"], 1.0);
    assert!(retrieval_report("A", -1.0, 0.5).is_err());
    assert!(retrieval_report("A", f64::NAN, 0.5).is_err());
}

#[test]
fn default_weights_reproduce_the_golden_storyboard() {
    let out = parse(&weather_storyboard(1.0, 0.5, 2.0).unwrap());
    let golden = golden();
    assert_eq!(out["storyboard"], golden);
    assert_eq!(out["choice"], golden["meta"]["choice"]);
    for f in out["frames"].as_array().unwrap() {
        let svg = f["svg"].as_str().unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
    }
}

#[test]
fn weights_steer_the_selection() {
    let cheap = parse(&weather_storyboard(10.0, 0.0, 0.0).unwrap());
    let default = parse(&weather_storyboard(1.0, 0.5, 2.0).unwrap());
    assert!(cheap["score"]["t"].as_f64().unwrap() <= default["score"]["t"].as_f64().unwrap());
    let focused = parse(&weather_storyboard(0.0, 10.0, 0.0).unwrap());
    assert!(focused["score"]["b"].as_f64().unwrap() >= default["score"]["b"].as_f64().unwrap());
    assert!(weather_storyboard(1.0, -1.0, 0.0).is_err());
}

#[test]
fn transitions_between_pool_charts() {
    let pool = parse(&weather_charts());
    let n = pool.as_array().unwrap().len();
    assert!(n >= 5);
    let same = parse(&transition_report(0, 0).unwrap());
    assert_eq!(same["cost"]["composite"], 0.0);
    let mut kinds = std::collections::BTreeSet::new();
    for a in 0..n {
        for b in 0..n {
            let r = parse(&transition_report(a, b).unwrap());
            let c = &r["cost"];
            assert!(c["composite"].as_f64().unwrap() >= 0.0);
            assert!(c["joined"].as_f64().unwrap() >= 0.0);
            kinds.insert(r["kind"].as_str().unwrap().to_string());
        }
    }
    assert!(kinds.contains("one-to-one"), "{kinds:?}");
    assert!(transition_report(0, n).is_err());
}
