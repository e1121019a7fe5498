mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use narrative_player::analysis::Prompts;
use narrative_player::gateway::{Backend, FixtureBackend, Gateway, HttpBackend, HttpConfig, RecordingBackend};
use narrative_player::model::{DataTable, Story};
use narrative_player::optimizer::{Selection, Weights};
use narrative_player::pipeline::{analyze, generate, Generated, PipelineConfig, PipelineError};
use narrative_player::table::{load_table, TableSchema};

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "narrative-player",
    version,
    about = "Turn a data narrative and its table into an animated chart storyboard"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the narrative into clauses and attach data facts (story JSON).
    Analyze {
        #[command(flatten)]
        input: NarrativeInput,
        #[command(flatten)]
        opts: Options,
    },
    /// Choose charts for a saved story and lay out the storyboard.
    Generate {
        /// Story JSON written by `analyze`.
        #[arg(long)]
        story: PathBuf,
        #[command(flatten)]
        table: TableInput,
        #[command(flatten)]
        opts: Options,
    },
    /// `analyze` followed by `generate`.
    Run {
        #[command(flatten)]
        input: NarrativeInput,
        /// Also write the intermediate story here.
        #[arg(long)]
        story_out: Option<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
}

#[derive(Args)]
struct TableInput {
    /// Data table (CSV, or JSON records when the extension is .json).
    #[arg(long)]
    table: PathBuf,
    /// JSON sidecar overriding column kinds: {"columns": {"Month": "temporal"}}.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct NarrativeInput {
    /// Plain-text narrative; blank lines separate paragraphs.
    #[arg(long)]
    narrative: PathBuf,
    #[command(flatten)]
    table: TableInput,
}

#[derive(Args)]
struct Options {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags and environment take precedence over it.
    #[arg(long, env = "NP_CONFIG")]
    config: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API (chat completions + embeddings).
    #[arg(long, env = "NP_LLM_ENDPOINT")]
    llm_endpoint: Option<String>,
    #[arg(long, env = "NP_LLM_MODEL")]
    llm_model: Option<String>,
    #[arg(long, env = "NP_EMBED_MODEL")]
    embed_model: Option<String>,
    /// Serve model calls from recorded fixtures in this directory.
    #[arg(long, env = "NP_FIXTURE_DIR")]
    fixture_dir: Option<PathBuf>,
    /// Call the live endpoint and record every exchange into --fixture-dir.
    #[arg(long)]
    record: bool,
    /// Directory of prompt template overrides (<name>.txt).
    #[arg(long, env = "NP_PROMPTS_DIR")]
    prompts_dir: Option<PathBuf>,
    /// Objective weights "transition,focus,retrieval".
    #[arg(long, env = "NP_WEIGHTS")]
    weights: Option<String>,
    #[arg(long, env = "NP_BEAM_WIDTH")]
    beam_width: Option<usize>,
    /// Exhaustive search up to this many assignments; beam search beyond.
    #[arg(long, env = "NP_EXHAUSTIVE_BOUND")]
    exhaustive_bound: Option<u64>,
    /// Turn off search pruning.
    #[arg(long)]
    no_prune: bool,
    #[arg(long, env = "NP_MIN_ANIM_MS")]
    min_anim_ms: Option<u64>,
    /// Reading rate used to time clauses.
    #[arg(long, env = "NP_WPM")]
    wpm: Option<f64>,
    /// Recorded in the output metadata.
    #[arg(long, env = "NP_SEED")]
    seed: Option<u64>,
    /// Print T, B, P and F of every scored sequence head to stderr.
    #[arg(long)]
    dump_scores: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

/// Fully merged settings for one invocation.
struct Settings {
    pipeline: PipelineConfig,
    prompts: Prompts,
    backend: Option<Arc<dyn Backend>>,
    llm_model: String,
    embed_model: String,
}

impl Settings {
    fn gateway(&self) -> Option<Gateway> {
        self.backend
            .clone()
            .map(|b| Gateway::new(b, self.llm_model.clone(), self.embed_model.clone()))
    }
}

const DEFAULT_LLM_MODEL: &str = "fixture-llm";
const DEFAULT_EMBED_MODEL: &str = "fixture-embed";

fn settings(opts: &Options) -> Result<Settings, Failure> {
    let file = match &opts.config {
        Some(p) => FileConfig::load(p).map_err(Failure::input)?,
        None => FileConfig::default(),
    };
    let mut cfg = PipelineConfig::default();

    if let Some(w) = opts.weights.as_ref().or(file.weights.as_ref()) {
        cfg.weights = Weights::parse_triple(w).map_err(|e| Failure::input(format!("--weights: {e}")))?;
    }
    if let Some(a) = file.alpha {
        cfg.weights.alpha = a;
    }
    if let Some(b) = file.beta {
        cfg.weights.beta = b;
    }
    if let Some(c) = file.costs {
        cfg.costs = c;
    }
    if let Some(w) = opts.beam_width.or(file.beam_width) {
        if w == 0 {
            return Err(Failure::input("--beam-width must be at least 1"));
        }
        cfg.search.beam_width = w;
    }
    if let Some(b) = opts.exhaustive_bound.or(file.exhaustive_bound) {
        cfg.search.exhaustive_bound = b;
    }
    cfg.search.prune = !opts.no_prune && file.prune.unwrap_or(true);
    cfg.search.trace = opts.dump_scores;
    if let Some(ms) = opts.min_anim_ms.or(file.min_anim_ms) {
        cfg.timeline.min_anim_ms = ms;
    }
    if let Some(wpm) = opts.wpm.or(file.wpm) {
        if !(wpm.is_finite() && wpm > 0.0) {
            return Err(Failure::input("--wpm must be positive"));
        }
        cfg.timeline.words_per_minute = wpm;
    }
    if let Some(t) = file.temperature {
        cfg.analysis.temperature = t;
    }
    cfg.seed = opts.seed.or(file.seed);

    let prompts = match opts.prompts_dir.as_ref().or(file.prompts_dir.as_ref()) {
        Some(dir) => Prompts::with_overrides(dir).map_err(|e| Failure::input(format!("prompts: {e}")))?,
        None => Prompts::default(),
    };

    let endpoint = opts.llm_endpoint.clone().or(file.llm_endpoint);
    let fixture_dir = opts.fixture_dir.clone().or(file.fixture_dir);
    let live = |url: String| -> Result<HttpBackend, Failure> {
        let key = std::env::var("NP_API_KEY").ok().filter(|k| !k.is_empty());
        HttpBackend::new(HttpConfig::new(url, key)).map_err(|e| Failure {
            code: 3,
            message: e.to_string(),
        })
    };
    let backend: Option<Arc<dyn Backend>> = match (opts.record, endpoint, fixture_dir) {
        (true, Some(url), Some(dir)) => {
            let inner = live(url)?;
            let rec = RecordingBackend::new(Box::new(inner), dir).map_err(|e| Failure::input(e.to_string()))?;
            Some(Arc::new(rec))
        }
        (true, _, _) => return Err(Failure::input("--record needs both --llm-endpoint and --fixture-dir")),
        (false, _, Some(dir)) => {
            let fx = FixtureBackend::open(&dir).map_err(|e| Failure::input(e.to_string()))?;
            Some(Arc::new(fx))
        }
        (false, Some(url), None) => Some(Arc::new(live(url)?)),
        (false, None, None) => None,
    };

    Ok(Settings {
        pipeline: cfg,
        prompts,
        backend,
        llm_model: opts
            .llm_model
            .clone()
            .or(file.llm_model)
            .unwrap_or_else(|| DEFAULT_LLM_MODEL.into()),
        embed_model: opts
            .embed_model
            .clone()
            .or(file.embed_model)
            .unwrap_or_else(|| DEFAULT_EMBED_MODEL.into()),
    })
}

fn read(path: &Path, what: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {what} `{}`: {e}", path.display())))
}

fn load(input: &TableInput) -> Result<DataTable, Failure> {
    let schema = match &input.schema {
        Some(p) => Some(TableSchema::from_path(p).map_err(|e| Failure::input(e.to_string()))?),
        None => None,
    };
    load_table(&input.table, schema.as_ref()).map_err(|e| Failure::input(e.to_string()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::input(format!("cannot write output: {e}"));
    match path {
        Some(p) => std::fs::write(p, text).map_err(io),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io),
    }
}

fn story_json(story: &Story) -> String {
    let mut s = serde_json::to_string_pretty(story).expect("stories serialize");
    s.push('\n');
    s
}

fn dump_scores(selection: &Selection) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "prefix\tT\tB\tP\tF");
    for e in &selection.trace {
        let prefix: Vec<String> = e.prefix.iter().map(|i| i.to_string()).collect();
        let s = e.score;
        let _ = writeln!(err, "{}\t{:.6}\t{}\t{:.6}\t{:.6}", prefix.join(","), s.t, s.b, s.p, s.f);
    }
    let s = selection.score;
    let _ = writeln!(
        err,
        "# selected {:?} ({:?}, {} explored): T={:.6} B={} P={:.6} F={:.6}",
        selection.choice, selection.mode, selection.explored, s.t, s.b, s.p, s.f
    );
}

fn finish(generated: &Generated, opts: &Options) -> Result<(), Failure> {
    if opts.dump_scores {
        dump_scores(&generated.selection);
    }
    write_out(opts.out.as_deref(), &generated.storyboard.to_json())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { input, opts } => {
            let s = settings(&opts)?;
            let narrative = read(&input.narrative, "narrative")?;
            let table = load(&input.table)?;
            let gw = s
                .gateway()
                .ok_or_else(|| Failure::input("analysis needs --fixture-dir or --llm-endpoint"))?;
            let story = analyze(&narrative, &table, &gw, &s.prompts, &s.pipeline)?;
            write_out(opts.out.as_deref(), &story_json(&story))
        }
        Command::Generate { story, table, opts } => {
            let s = settings(&opts)?;
            let story: Story =
                serde_json::from_str(&read(&story, "story")?).map_err(|e| Failure::input(format!("story: {e}")))?;
            let table = load(&table)?;
            let gw = s.gateway();
            let generated = generate(&story, &table, gw.as_ref(), &s.prompts, None, &s.pipeline)?;
            finish(&generated, &opts)
        }
        Command::Run { input, story_out, opts } => {
            let s = settings(&opts)?;
            let narrative = read(&input.narrative, "narrative")?;
            let table = load(&input.table)?;
            let gw = s
                .gateway()
                .ok_or_else(|| Failure::input("analysis needs --fixture-dir or --llm-endpoint"))?;
            let story = analyze(&narrative, &table, &gw, &s.prompts, &s.pipeline)?;
            if let Some(p) = &story_out {
                write_out(Some(p), &story_json(&story))?;
            }
            let generated = generate(&story, &table, Some(&gw), &s.prompts, None, &s.pipeline)?;
            finish(&generated, &opts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
