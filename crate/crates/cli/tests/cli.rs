use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_narrative-player"));
    for var in [
        "NP_CONFIG",
        "NP_LLM_ENDPOINT",
        "NP_FIXTURE_DIR",
        "NP_WEIGHTS",
        "NP_API_KEY",
        "NP_EXHAUSTIVE_BOUND",
    ] {
        c.env_remove(var);
    }
    c
}

fn weather(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/weather")
        .join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn weather_run(extra: &[&str]) -> Command {
    let mut c = bin();
    c.arg("run")
        .arg("--narrative")
        .arg(weather("narrative.txt"))
        .arg("--table")
        .arg(weather("table.csv"))
        .arg("--fixture-dir")
        .arg(weather("fx"))
        .args(extra);
    c
}

#[test]
fn run_reproduces_the_golden_storyboard_twice() {
    let golden = std::fs::read(weather("storyboard.json")).unwrap();
    for _ in 0..2 {
        let out = run_ok(&mut weather_run(&[]));
        assert_eq!(out.stdout, golden);
    }
}

#[test]
fn analyze_then_generate_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let story = dir.path().join("story.json");
    let sb = dir.path().join("sb.json");
    run_ok(
        bin()
            .arg("analyze")
            .arg("--narrative")
            .arg(weather("narrative.txt"))
            .arg("--table")
            .arg(weather("table.csv"))
            .arg("--fixture-dir")
            .arg(weather("fx"))
            .arg("--out")
            .arg(&story),
    );
    assert_eq!(
        std::fs::read(&story).unwrap(),
        std::fs::read(weather("story.json")).unwrap()
    );
    run_ok(
        bin()
            .arg("generate")
            .arg("--story")
            .arg(&story)
            .arg("--table")
            .arg(weather("table.csv"))
            .arg("--fixture-dir")
            .arg(weather("fx"))
            .args(["--weights", "1,0.5,2"])
            .arg("--out")
            .arg(&sb),
    );
    assert_eq!(
        std::fs::read(&sb).unwrap(),
        std::fs::read(weather("storyboard.json")).unwrap()
    );
}

#[test]
fn missing_table_exits_with_two() {
    let out = bin()
        .args(["analyze", "--narrative"])
        .arg(weather("narrative.txt"))
        .args(["--table", "/nonexistent/table.csv"])
        .arg("--fixture-dir")
        .arg(weather("fx"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/table.csv"));
}

#[test]
fn fixture_miss_exits_with_three() {
    let empty = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--narrative"])
        .arg(weather("narrative.txt"))
        .arg("--table")
        .arg(weather("table.csv"))
        .arg("--fixture-dir")
        .arg(empty.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no fixture"));
}

#[test]
fn zero_exhaustive_bound_forces_beam() {
    let out = run_ok(&mut weather_run(&["--exhaustive-bound", "0"]));
    let sb: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(sb["meta"]["search"], "beam");
}

#[test]
fn small_instances_are_searched_exhaustively() {
    let out = run_ok(&mut weather_run(&["--exhaustive-bound", "100000000"]));
    let sb: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(sb["meta"]["search"], "exhaustive");
}

#[test]
fn dump_scores_prints_score_rows() {
    let out = run_ok(&mut weather_run(&["--dump-scores"]));
    let err = String::from_utf8(out.stderr).unwrap();
    let mut lines = err.lines();
    assert_eq!(lines.next(), Some("prefix\tT\tB\tP\tF"));
    let row = lines.next().unwrap();
    assert_eq!(row.split('\t').count(), 5);
    assert!(err.lines().any(|l| l.starts_with("# selected")));
}

#[test]
fn flags_beat_env_beat_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("np.json");
    std::fs::write(&cfg, r#"{"weights": "3,0,0", "seed": 7, "min_anim_ms": 400}"#).unwrap();
    let meta = |c: &mut Command| -> Value {
        let out = run_ok(c);
        serde_json::from_slice::<Value>(&out.stdout).unwrap()["meta"].clone()
    };
    let from_file = meta(weather_run(&[]).arg("--config").arg(&cfg));
    assert_eq!(from_file["weights"]["transition"], 3.0);
    assert_eq!(from_file["seed"], 7);

    let from_env = meta(weather_run(&[]).arg("--config").arg(&cfg).env("NP_WEIGHTS", "2,0,0"));
    assert_eq!(from_env["weights"]["transition"], 2.0);

    let from_flag = meta(
        weather_run(&["--weights", "1,1,1", "--seed", "9"])
            .arg("--config")
            .arg(&cfg)
            .env("NP_WEIGHTS", "2,0,0"),
    );
    assert_eq!(from_flag["weights"]["transition"], 1.0);
    assert_eq!(from_flag["seed"], 9);
}

#[test]
fn bad_weights_are_an_input_error() {
    let out = weather_run(&["--weights", "1,2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("np.json");
    std::fs::write(&cfg, r#"{"wieghts": "1,1,1"}"#).unwrap();
    let out = weather_run(&[]).arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// A tiny OpenAI-style server that answers the pipeline's prompts: every
/// sentence is factual and one clause long, extraction returns one fact,
/// and each rewrite repeats the clause, so every clause comes out clear.
fn stub_server() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let req: Value = serde_json::from_slice(&buf).unwrap();
            let body = if request_line.contains("/embeddings") {
                let text = req["input"].as_str().unwrap();
                let v: Vec<f64> = (0..4).map(|i| (text.len() + i) as f64).collect();
                json!({"data": [{"embedding": v}]})
            } else {
                let prompt = req["messages"][0]["content"].as_str().unwrap();
                json!({"choices": [{"message": {"content": stub_reply(prompt)}}]})
            };
            let body = body.to_string();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    format!("http://{addr}/v1")
}

fn stub_reply(prompt: &str) -> String {
    let line = |label: &str| {
        prompt
            .lines()
            .find_map(|l| l.strip_prefix(label))
            .map(|s| s.trim().to_string())
            .unwrap_or_default()
    };
    if prompt.contains("FACTUAL or BACKGROUND") {
        "FACTUAL".into()
    } else if prompt.contains("Split the sentence") {
        json!([line("Sentence:")]).to_string()
    } else if prompt.contains("You extract data facts") {
        r#"[{"type": "trend", "measures": ["Precipitation"], "breakdowns": ["Month"]}]"#.into()
    } else if prompt.contains("A clause has been removed") {
        "The rain peaks in June.".into()
    } else {
        "[]".into()
    }
}

#[test]
fn record_then_replay_offline() {
    let dir = tempfile::tempdir().unwrap();
    let narrative = dir.path().join("n.txt");
    std::fs::write(&narrative, "The rain peaks in June.\n").unwrap();
    let fx = dir.path().join("fx");
    let endpoint = stub_server();

    let live = run_ok(
        bin()
            .args(["run", "--record", "--llm-endpoint", &endpoint])
            .arg("--narrative")
            .arg(&narrative)
            .arg("--table")
            .arg(weather("table.csv"))
            .arg("--fixture-dir")
            .arg(&fx)
            .env("NP_API_KEY", "test-key"),
    );
    let index = std::fs::read_to_string(fx.join("index.tsv")).unwrap();
    let recorded = std::fs::read_dir(&fx).unwrap().count() - 1;
    assert_eq!(index.lines().count(), recorded);
    // classify, clauses, 3 extraction sessions, 1 rewrite and 1 embedding
    // (the rewrite equals the clause). One field needs no grouping call.
    assert_eq!(recorded, 7);

    let replay = run_ok(
        bin()
            .arg("run")
            .arg("--narrative")
            .arg(&narrative)
            .arg("--table")
            .arg(weather("table.csv"))
            .arg("--fixture-dir")
            .arg(&fx),
    );
    assert_eq!(live.stdout, replay.stdout);
}

#[test]
fn record_without_endpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = weather_run(&["--record"])
        .arg("--fixture-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
