//! Narrative slicing, fact extraction and candidate validation.
//!
//! The flow per narrative: split into sentences, classify each one as
//! factual or background, cut factual sentences into clauses, extract nine
//! fact candidates per clause (three sessions × three facts), then rank the
//! candidates by how closely a fact-driven rewrite of the clause matches the
//! original in embedding space.

mod prompts;
mod segment;

use std::collections::HashMap;

use serde_json::Value;
use thiserror::Error;

use crate::gateway::{cosine_similarity, Gateway, GatewayError, GenerationRequest};
use crate::model::{validate_fact, Clarity, Clause, ClauseKind, DataFact, DataTable, ScoredFact};

pub use prompts::{Prompts, Template};
pub use segment::{collapse_ws, split_sentences, Sentence, DEFAULT_ABBREVIATIONS};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Rewrites must score strictly above this to count toward clarity.
    pub similarity_threshold: f64,
    /// Minimum number of above-threshold candidates for a clear clause.
    pub clear_quorum: usize,
    pub sessions: u8,
    pub facts_per_session: usize,
    /// Extra requests when a session reply holds no parseable fact.
    pub reparse_attempts: usize,
    pub max_qualified: usize,
    pub temperature: f64,
    pub abbreviations: Vec<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.85,
            clear_quorum: 6,
            sessions: 3,
            facts_per_session: 3,
            reparse_attempts: 2,
            max_qualified: 3,
            temperature: crate::gateway::DEFAULT_TEMPERATURE,
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("narrative is empty")]
    EmptyNarrative,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cannot classify sentence {sentence:?}; model replied {reply:?}")]
    Classification { sentence: String, reply: String },
    #[error("clause split of {sentence:?} failed ({reason}); model replied {reply:?}")]
    Segmentation {
        sentence: String,
        reply: String,
        reason: String,
    },
    #[error("no usable fact candidates for clause {clause:?}: {reason}")]
    Extraction { clause: String, reason: String },
}

/// The narrative as a list of normalized sentences, used to build prompt
/// contexts around a target clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrativeDoc {
    sentences: Vec<Sentence>,
}

impl NarrativeDoc {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Self { sentences }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn plain(&self) -> String {
        self.render(|s| s.text.clone())
    }

    /// Full narrative with the clause wrapped in `[[` `]]`.
    pub fn with_marked(&self, clause: &Clause) -> String {
        self.with_replacement(clause, |t| format!("[[{t}]]"))
    }

    /// Full narrative with the clause replaced by a `[[____]]` gap.
    pub fn with_gap(&self, clause: &Clause) -> String {
        self.with_replacement(clause, |_| "[[____]]".to_string())
    }

    fn with_replacement(&self, clause: &Clause, f: impl Fn(&str) -> String) -> String {
        self.render(|s| {
            if s.id != clause.sentence_id {
                return s.text.clone();
            }
            let (a, b) = clause.span;
            let (a, b) = (a.min(s.text.len()), b.min(s.text.len()));
            format!("{}{}{}", &s.text[..a], f(&s.text[a..b]), &s.text[b..])
        })
    }

    fn render(&self, f: impl Fn(&Sentence) -> String) -> String {
        let mut out = String::new();
        let mut para = None;
        for s in &self.sentences {
            match para {
                None => {}
                Some(p) if p == s.paragraph => out.push(' '),
                Some(_) => out.push_str("\n\n"),
            }
            out.push_str(&f(s));
            para = Some(s.paragraph);
        }
        out
    }
}

pub fn segment_sentences(narrative: &str, cfg: &AnalysisConfig) -> Result<Vec<Sentence>, AnalysisError> {
    let out = split_sentences(narrative, &cfg.abbreviations);
    if out.is_empty() {
        return Err(AnalysisError::EmptyNarrative);
    }
    Ok(out)
}

/// Reads a one-word FACTUAL/BACKGROUND verdict, case-insensitively.
pub fn parse_classification(reply: &str) -> Option<ClauseKind> {
    let word: String = reply
        .trim_start_matches(|c: char| !c.is_alphabetic())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase();
    match word.as_str() {
        "FACTUAL" => Some(ClauseKind::Factual),
        "BACKGROUND" => Some(ClauseKind::Background),
        _ => None,
    }
}

pub fn classify_sentence(
    gw: &Gateway,
    prompts: &Prompts,
    doc: &NarrativeDoc,
    sentence: &Sentence,
    table: &DataTable,
    cfg: &AnalysisConfig,
) -> Result<ClauseKind, AnalysisError> {
    let prompt = prompts.classify.render(&[
        ("table_schema", &table.schema_summary()),
        ("narrative", &doc.plain()),
        ("sentence", &sentence.text),
    ]);
    let reply = gw.generate(&GenerationRequest::new(prompt).temperature(cfg.temperature))?;
    parse_classification(&reply).ok_or_else(|| AnalysisError::Classification {
        sentence: sentence.text.clone(),
        reply,
    })
}

/// Matches the model's clause list back onto the sentence. Each clause must
/// be found verbatim after the previous one and only whitespace or joining
/// punctuation may be left uncovered. Returns byte spans into `sentence`.
pub fn reconcile_clauses(sentence: &str, reply: &str) -> Result<Vec<(usize, usize)>, String> {
    let items = json_payload(reply)
        .and_then(|v| serde_json::from_value::<Vec<String>>(v).ok())
        .ok_or_else(|| "reply is not a JSON array of strings".to_string())?;
    let items: Vec<String> = items.iter().map(|s| collapse_ws(s)).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("no clauses in reply".into());
    }
    let filler = |s: &str| s.chars().all(|c| c.is_whitespace() || ",;:-–—".contains(c));
    let mut spans = Vec::with_capacity(items.len());
    let mut cursor = 0;
    for item in &items {
        let Some(found) = sentence[cursor..].find(item.as_str()) else {
            return Err(format!("clause {item:?} is not in the sentence"));
        };
        let start = cursor + found;
        if !filler(&sentence[cursor..start]) {
            return Err(format!(
                "text {:?} is missing from the clauses",
                &sentence[cursor..start]
            ));
        }
        spans.push((start, start + item.len()));
        cursor = start + item.len();
    }
    let tail = &sentence[cursor..];
    if !tail.chars().all(|c| c.is_whitespace() || ",;:-–—.!?".contains(c)) {
        return Err(format!("text {tail:?} is missing from the clauses"));
    }
    // Terminal punctuation left outside the last clause belongs to it.
    if let Some(last) = spans.last_mut() {
        last.1 = sentence.trim_end().len().max(last.1);
    }
    Ok(spans)
}

pub fn segment_clauses(
    gw: &Gateway,
    prompts: &Prompts,
    sentence: &Sentence,
    cfg: &AnalysisConfig,
) -> Result<Vec<(usize, usize)>, AnalysisError> {
    let prompt = prompts.clauses.render(&[("sentence", &sentence.text)]);
    let reply = gw.generate(&GenerationRequest::new(prompt).temperature(cfg.temperature))?;
    reconcile_clauses(&sentence.text, &reply).map_err(|reason| AnalysisError::Segmentation {
        sentence: sentence.text.clone(),
        reply,
        reason,
    })
}

/// Pulls the JSON value out of a reply that may wrap it in prose or a
/// fenced code block.
pub fn json_payload(reply: &str) -> Option<Value> {
    let trimmed = reply.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    for (open, close) in [('[', ']'), ('{', '}')] {
        if let (Some(a), Some(b)) = (trimmed.find(open), trimmed.rfind(close)) {
            if a < b {
                if let Ok(v) = serde_json::from_str(&trimmed[a..=b]) {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Facts that parse against the schema, or `None` when the reply holds no
/// JSON at all. Accepts a bare array, `{"facts": [...]}`, or one object.
pub fn parse_fact_reply(reply: &str) -> Option<Vec<DataFact>> {
    let items = match json_payload(reply)? {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("facts") {
            Some(Value::Array(items)) => items,
            Some(_) => return None,
            None => vec![Value::Object(obj)],
        },
        _ => return None,
    };
    Some(
        items
            .into_iter()
            .filter_map(|v| serde_json::from_value::<DataFact>(v).ok())
            .collect(),
    )
}

/// Outcome of one extraction session.
#[derive(Debug, Clone, PartialEq)]
enum SessionOutcome {
    Facts(Vec<DataFact>),
    Empty(String),
    Failed(GatewayError),
}

fn run_session(gw: &Gateway, prompt: &str, session: u8, table: &DataTable, cfg: &AnalysisConfig) -> SessionOutcome {
    for attempt in 0..=cfg.reparse_attempts {
        let text = if attempt == 0 {
            prompt.to_string()
        } else {
            format!(
                "{prompt}\n\nRetry {attempt}: the previous reply could not be read as a JSON array \
                 of data facts. Reply with the JSON array only."
            )
        };
        let req = GenerationRequest::new(text)
            .session(session)
            .temperature(cfg.temperature);
        let reply = match gw.generate(&req) {
            Ok(r) => r,
            Err(e) if attempt == 0 => return SessionOutcome::Failed(e),
            Err(e) => return SessionOutcome::Empty(format!("re-request failed: {e}")),
        };
        let Some(parsed) = parse_fact_reply(&reply).filter(|f| !f.is_empty()) else {
            continue;
        };
        let mut valid: Vec<DataFact> = parsed
            .into_iter()
            .filter(|f| validate_fact(f, table).is_valid())
            .take(cfg.facts_per_session)
            .collect();
        let Some(last) = valid.last().cloned() else {
            return SessionOutcome::Empty("no candidate passed validation".into());
        };
        valid.resize(cfg.facts_per_session, last);
        return SessionOutcome::Facts(valid);
    }
    SessionOutcome::Empty("reply never parsed as facts".into())
}

/// Runs the extraction sessions (same prompt, different session ids) and
/// returns exactly `sessions × facts_per_session` candidates in session
/// order. A short session is padded with its own last fact; an empty one
/// borrows the output of the nearest productive session.
pub fn extract_fact_candidates(
    gw: &Gateway,
    prompts: &Prompts,
    doc: &NarrativeDoc,
    clause: &Clause,
    table: &DataTable,
    cfg: &AnalysisConfig,
) -> Result<Vec<DataFact>, AnalysisError> {
    let prompt = prompts.extract.render(&[
        ("table_schema", &table.schema_summary()),
        ("narrative", &doc.with_marked(clause)),
        ("clause", &clause.text),
    ]);
    let sessions: Vec<u8> = (0..cfg.sessions).collect();
    let outcomes = par_map(&sessions, |&s| run_session(gw, &prompt, s, table, cfg));

    let productive: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| matches!(o, SessionOutcome::Facts(_)))
        .map(|(i, _)| i)
        .collect();
    if productive.is_empty() {
        if let Some(SessionOutcome::Failed(e)) = outcomes.iter().find(|o| matches!(o, SessionOutcome::Failed(_))) {
            if outcomes.iter().all(|o| matches!(o, SessionOutcome::Failed(_))) {
                return Err(e.clone().into());
            }
        }
        let reasons: Vec<String> = outcomes
            .iter()
            .map(|o| match o {
                SessionOutcome::Empty(r) => r.clone(),
                SessionOutcome::Failed(e) => e.to_string(),
                SessionOutcome::Facts(_) => unreachable!(),
            })
            .collect();
        return Err(AnalysisError::Extraction {
            clause: clause.text.clone(),
            reason: reasons.join("; "),
        });
    }

    let mut out = Vec::with_capacity(outcomes.len() * cfg.facts_per_session);
    for (i, o) in outcomes.iter().enumerate() {
        let source = match o {
            SessionOutcome::Facts(f) => f,
            _ => {
                let donor = productive
                    .iter()
                    .copied()
                    .filter(|&p| p < i)
                    .max()
                    .or_else(|| productive.iter().copied().find(|&p| p > i))
                    .expect("at least one productive session");
                match &outcomes[donor] {
                    SessionOutcome::Facts(f) => f,
                    _ => unreachable!(),
                }
            }
        };
        out.extend(source.iter().cloned());
    }
    Ok(out)
}

pub fn rewrite_clause(
    gw: &Gateway,
    prompts: &Prompts,
    doc: &NarrativeDoc,
    clause: &Clause,
    fact: &DataFact,
    cfg: &AnalysisConfig,
) -> Result<String, AnalysisError> {
    let fact_json = serde_json::to_string(fact).expect("facts serialize");
    let prompt = prompts.rewrite.render(&[
        ("narrative", &doc.with_gap(clause)),
        ("clause", &clause.text),
        ("fact_json", &fact_json),
    ]);
    let reply = gw.generate(&GenerationRequest::new(prompt).temperature(cfg.temperature))?;
    let line = reply
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
        .trim_matches(|c| c == '"' || c == '“' || c == '”');
    Ok(line.to_string())
}

/// Cosine similarity between the clause and the rewrite of each candidate.
/// Identical candidates are scored once.
pub fn score_candidates(
    gw: &Gateway,
    prompts: &Prompts,
    doc: &NarrativeDoc,
    clause: &Clause,
    candidates: &[DataFact],
    cfg: &AnalysisConfig,
) -> Result<Vec<f64>, AnalysisError> {
    let original = gw.embed(&clause.text)?;
    let mut first_of: HashMap<String, usize> = HashMap::new();
    let mut unique = Vec::new();
    for f in candidates {
        let key = f.canonical_key();
        if let std::collections::hash_map::Entry::Vacant(e) = first_of.entry(key) {
            e.insert(unique.len());
            unique.push(f);
        }
    }
    let scored = par_map(&unique, |f| -> Result<f64, AnalysisError> {
        let text = rewrite_clause(gw, prompts, doc, clause, f, cfg)?;
        let emb = gw.embed(&text)?;
        Ok(cosine_similarity(&original, &emb)?)
    });
    let scored: Vec<f64> = scored.into_iter().collect::<Result<_, _>>()?;
    Ok(candidates
        .iter()
        .map(|f| scored[first_of[&f.canonical_key()]])
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateValidation {
    pub clarity: Clarity,
    pub above_threshold: usize,
    /// Deduplicated, best first, at most `max_qualified` long.
    pub qualified: Vec<ScoredFact>,
}

/// Clear iff at least `clear_quorum` scores are strictly above the
/// threshold. Qualified facts are the top candidates by similarity after
/// removing canonical duplicates; ties keep candidate order.
pub fn validate_candidates(candidates: &[DataFact], scores: &[f64], cfg: &AnalysisConfig) -> CandidateValidation {
    assert_eq!(candidates.len(), scores.len(), "one score per candidate");
    let above_threshold = scores.iter().filter(|&&s| s > cfg.similarity_threshold).count();
    let clarity = if above_threshold >= cfg.clear_quorum {
        Clarity::Clear
    } else {
        Clarity::Vague
    };
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut seen = std::collections::HashSet::new();
    let qualified = order
        .into_iter()
        .filter(|&i| seen.insert(candidates[i].canonical_key()))
        .take(cfg.max_qualified)
        .map(|i| ScoredFact::new(candidates[i].clone(), scores[i]))
        .collect();
    CandidateValidation {
        clarity,
        above_threshold,
        qualified,
    }
}

/// Maps items concurrently, keeping input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if cfg!(target_arch = "wasm32") || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = items.iter().map(|it| scope.spawn(move || f(it))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
