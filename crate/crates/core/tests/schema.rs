mod common;

use jsonschema::Validator;
use narrative_player::mapping::to_vega_lite;
use narrative_player::storyboard::STORYBOARD_SCHEMA;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::*;

fn storyboard_validator() -> Validator {
    jsonschema::validator_for(&serde_json::from_str(STORYBOARD_SCHEMA).unwrap()).unwrap()
}

/// Definition names such as `MarkPropDef<(Gradient|string|null)>` are not
/// valid URI fragments, which the validator insists on. Escape them the
/// same way in keys and references.
fn escape_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c.to_string()
            } else {
                format!("-{:x}-", c as u32)
            }
        })
        .collect()
}

fn escape_refs(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (k, child) in map.iter_mut() {
                match (k.as_str(), child) {
                    ("$ref", Value::String(r)) => {
                        if let Some(name) = r.strip_prefix("#/definitions/") {
                            *r = format!("#/definitions/{}", escape_name(name));
                        }
                    }
                    (_, child) => escape_refs(child),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(escape_refs),
        _ => {}
    }
}

/// The Vega-Lite v5 grammar schema, vendored from the vega-lite npm package.
fn vega_lite_validator() -> Validator {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/vega-lite-v5.23.0.schema.json");
    let mut schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let defs = schema["definitions"].as_object_mut().unwrap();
    *defs = std::mem::take(defs)
        .into_iter()
        .map(|(k, v)| (escape_name(&k), v))
        .collect();
    escape_refs(&mut schema);
    jsonschema::validator_for(&schema).unwrap()
}

fn errors(v: &Validator, doc: &Value) -> Vec<String> {
    v.iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect()
}

fn golden() -> Value {
    serde_json::from_str(&std::fs::read_to_string(weather_dir().join("storyboard.json")).unwrap()).unwrap()
}

#[test]
fn golden_storyboard_is_schema_valid() {
    let errs = errors(&storyboard_validator(), &golden());
    assert!(errs.is_empty(), "{errs:#?}");
}

#[test]
fn corrupted_storyboards_are_rejected() {
    let v = storyboard_validator();
    let mut wrong_version = golden();
    wrong_version["version"] = "2".into();
    let mut no_frames = golden();
    no_frames.as_object_mut().unwrap().remove("frames");
    let mut stray_key = golden();
    stray_key["frames"][0]["colour"] = "red".into();
    let mut bad_step = golden();
    bad_step["transitions"][0]["steps"][0]["action"] = "teleport".into();
    for doc in [wrong_version, no_frames, stray_key, bad_step] {
        assert!(!v.is_valid(&doc));
    }
}

#[test]
fn golden_charts_are_valid_vega_lite() {
    let v = vega_lite_validator();
    let sb = golden();
    let mut n = 0;
    for frame in sb["frames"].as_array().unwrap() {
        for chart in frame["charts"].as_array().unwrap() {
            let errs = errors(&v, &chart["vega_lite"]);
            assert!(errs.is_empty(), "{}: {errs:#?}", chart["id"]);
            n += 1;
        }
    }
    assert!(n >= 7);
}

#[test]
fn every_mapped_chart_is_valid_vega_lite() {
    let v = vega_lite_validator();
    let table = weather_table();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let chart = random_chart(&mut rng, &table);
        let doc = to_vega_lite(&chart, &table);
        let errs = errors(&v, &doc);
        assert!(errs.is_empty(), "{}: {errs:#?}\n{doc:#}", chart.title);
    }
    // The validator is not vacuous.
    let mut bad = to_vega_lite(&random_chart(&mut rng, &table), &table);
    bad["mark"] = "banana".into();
    bad["encoding"] = serde_json::json!({"x": {"field": "Month", "type": "ordinal-ish"}});
    assert!(!v.is_valid(&bad));
}
