//! Offline backends: a digest-keyed fixture store, a recorder that writes
//! one, and a scripted backend driven by closures.
//!
//! On disk a fixture directory holds one `<digest>.json` per request plus a
//! human-readable `index.tsv` (`digest<TAB>kind<TAB>summary`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{embedding_digest, generation_digest, Backend, GatewayError, GenerationRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FixtureEntry {
    Generate {
        digest: String,
        model: String,
        session_id: u8,
        temperature: f64,
        prompt: String,
        response: String,
    },
    Embed {
        digest: String,
        model: String,
        text: String,
        vector: Vec<f64>,
    },
}

impl FixtureEntry {
    pub fn generation(model: &str, req: &GenerationRequest, response: impl Into<String>) -> Self {
        FixtureEntry::Generate {
            digest: generation_digest(model, req),
            model: model.to_string(),
            session_id: req.session_id,
            temperature: req.temperature,
            prompt: req.prompt.clone(),
            response: response.into(),
        }
    }

    pub fn embedding(model: &str, text: &str, vector: Vec<f64>) -> Self {
        FixtureEntry::Embed {
            digest: embedding_digest(model, text),
            model: model.to_string(),
            text: text.to_string(),
            vector,
        }
    }

    pub fn digest(&self) -> &str {
        match self {
            FixtureEntry::Generate { digest, .. } | FixtureEntry::Embed { digest, .. } => digest,
        }
    }

    fn index_line(&self) -> String {
        let (kind, summary) = match self {
            FixtureEntry::Generate { session_id, prompt, .. } => {
                let first = prompt.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
                ("generate", format!("s{session_id} {}", truncate(first, 70)))
            }
            FixtureEntry::Embed { text, .. } => ("embed", truncate(text, 78)),
        };
        format!("{}\t{kind}\t{}", self.digest(), summary.replace('\t', " "))
    }
}

fn truncate(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(n).collect();
        t.push('…');
        t
    }
}

/// Serves stored responses by request digest. Never contacts anything.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    entries: BTreeMap<String, FixtureEntry>,
}

impl FixtureBackend {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every `*.json` entry in `dir`.
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        let mut entries = BTreeMap::new();
        let listing = std::fs::read_dir(dir).map_err(|e| GatewayError::Fixture(format!("{}: {e}", dir.display())))?;
        for item in listing {
            let path = item.map_err(|e| GatewayError::Fixture(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
            let entry: FixtureEntry =
                serde_json::from_str(&text).map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
            entries.insert(entry.digest().to_string(), entry);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, entry: FixtureEntry) {
        self.entries.insert(entry.digest().to_string(), entry);
    }

    pub fn with(mut self, entry: FixtureEntry) -> Self {
        self.insert(entry);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &FixtureEntry> {
        self.entries.values()
    }
}

impl Backend for FixtureBackend {
    fn generate(&self, model: &str, req: &GenerationRequest) -> Result<String, GatewayError> {
        let digest = generation_digest(model, req);
        match self.entries.get(&digest) {
            Some(FixtureEntry::Generate { response, .. }) => Ok(response.clone()),
            _ => Err(GatewayError::FixtureMiss {
                kind: "generate",
                digest,
            }),
        }
    }

    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError> {
        let digest = embedding_digest(model, text);
        match self.entries.get(&digest) {
            Some(FixtureEntry::Embed { vector, .. }) => Ok(vector.clone()),
            _ => Err(GatewayError::FixtureMiss { kind: "embed", digest }),
        }
    }
}

/// Passes calls through to another backend and writes each successful
/// exchange into a fixture directory.
pub struct RecordingBackend {
    inner: Box<dyn Backend>,
    dir: PathBuf,
    index: Mutex<BTreeMap<String, String>>,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn Backend>, dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| GatewayError::Fixture(format!("{}: {e}", dir.display())))?;
        let mut index = BTreeMap::new();
        if let Ok(text) = std::fs::read_to_string(dir.join("index.tsv")) {
            for line in text.lines() {
                if let Some((digest, _)) = line.split_once('\t') {
                    index.insert(digest.to_string(), line.to_string());
                }
            }
        }
        Ok(Self {
            inner,
            dir,
            index: Mutex::new(index),
        })
    }

    fn record(&self, entry: &FixtureEntry) -> Result<(), GatewayError> {
        let io = |e: std::io::Error| GatewayError::Fixture(e.to_string());
        let mut body = serde_json::to_string_pretty(entry).expect("fixture entries serialize");
        body.push('\n');
        std::fs::write(self.dir.join(format!("{}.json", entry.digest())), body).map_err(io)?;
        let mut index = self.index.lock().expect("index lock poisoned");
        index.insert(entry.digest().to_string(), entry.index_line());
        let mut text: String = index.values().map(|l| format!("{l}\n")).collect();
        if text.is_empty() {
            text.push('\n');
        }
        std::fs::write(self.dir.join("index.tsv"), text).map_err(io)
    }
}

impl Backend for RecordingBackend {
    fn generate(&self, model: &str, req: &GenerationRequest) -> Result<String, GatewayError> {
        let response = self.inner.generate(model, req)?;
        self.record(&FixtureEntry::generation(model, req, response.clone()))?;
        Ok(response)
    }

    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError> {
        let vector = self.inner.embed(model, text)?;
        self.record(&FixtureEntry::embedding(model, text, vector.clone()))?;
        Ok(vector)
    }
}

type GenerateFn = dyn Fn(&GenerationRequest) -> Option<String> + Send + Sync;
type EmbedFn = dyn Fn(&str) -> Option<Vec<f64>> + Send + Sync;

/// Answers from closures; `None` surfaces as a fixture miss.
pub struct ScriptedBackend {
    generate: Box<GenerateFn>,
    embed: Box<EmbedFn>,
}

impl ScriptedBackend {
    pub fn new(
        generate: impl Fn(&GenerationRequest) -> Option<String> + Send + Sync + 'static,
        embed: impl Fn(&str) -> Option<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            generate: Box::new(generate),
            embed: Box::new(embed),
        }
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, model: &str, req: &GenerationRequest) -> Result<String, GatewayError> {
        (self.generate)(req).ok_or_else(|| GatewayError::FixtureMiss {
            kind: "generate",
            digest: generation_digest(model, req),
        })
    }

    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, GatewayError> {
        (self.embed)(text).ok_or_else(|| GatewayError::FixtureMiss {
            kind: "embed",
            digest: embedding_digest(model, text),
        })
    }
}
