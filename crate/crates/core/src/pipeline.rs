//! End-to-end drivers: narrative + table to story, story to storyboard.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    classify_sentence, extract_fact_candidates, par_map, score_candidates, segment_clauses, segment_sentences,
    validate_candidates, AnalysisConfig, AnalysisError, NarrativeDoc, Prompts,
};
use crate::context::{bind_keywords, complete_facts, infer_vague_facts, ContextConfig, ContextError};
use crate::gateway::{Gateway, GatewayError};
use crate::mapping::{adjust_vague_visuals, comparable_groups, harmonize, map_fact_to_charts, ChartSpec, SlotInfo};
use crate::model::{Clarity, Clause, ClauseKind, DataTable, ScoredFact, Story};
use crate::optimizer::{select_sequence, CostTable, OptimizeError, SearchConfig, Selection, Weights};
use crate::storyboard::{
    assemble_storyboard, compute_timeline, frames_from_selection, AssemblyError, Storyboard, TimelineConfig,
    TtsProvider,
};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub analysis: AnalysisConfig,
    pub context: ContextConfig,
    pub weights: Weights,
    pub costs: CostTable,
    pub search: SearchConfig,
    pub timeline: TimelineConfig,
    /// Recorded in the output; nothing downstream is randomized.
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Analysis(AnalysisError),
    #[error("no clause could be tied to the data (unresolved clauses: {0:?})")]
    Unresolved(Vec<usize>),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Assembly(AssemblyError),
}

impl From<AnalysisError> for PipelineError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Gateway(g) => PipelineError::Gateway(g),
            AnalysisError::EmptyNarrative => PipelineError::Input(e.to_string()),
            other => PipelineError::Analysis(other),
        }
    }
}

impl PipelineError {
    /// Process exit code: 2 for bad input, 3 for model access, 4 when
    /// nothing in the narrative could be resolved, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 2,
            PipelineError::Gateway(_) => 3,
            PipelineError::Unresolved(_) | PipelineError::Assembly(AssemblyError::NoCharts) => 4,
            _ => 1,
        }
    }
}

fn build_clauses(
    gw: &Gateway,
    prompts: &Prompts,
    doc: &NarrativeDoc,
    table: &DataTable,
    cfg: &AnalysisConfig,
) -> Result<Vec<Clause>, PipelineError> {
    let sentences = doc.sentences();
    let kinds = par_map(sentences, |s| classify_sentence(gw, prompts, doc, s, table, cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let factual: Vec<usize> = (0..sentences.len())
        .filter(|&i| kinds[i] == ClauseKind::Factual)
        .collect();
    let mut splits = par_map(&factual, |&i| segment_clauses(gw, prompts, &sentences[i], cfg)).into_iter();
    let mut clauses = Vec::new();
    for (s, kind) in sentences.iter().zip(kinds) {
        match kind {
            ClauseKind::Background => {
                let mut c = Clause::background(clauses.len(), s.text.clone(), s.id, s.paragraph);
                c.span = (0, s.text.len());
                clauses.push(c);
            }
            ClauseKind::Factual => {
                let split = splits.next().expect("one split per factual sentence");
                for (a, b) in split? {
                    let mut c = Clause::factual(clauses.len(), s.text[a..b].to_string(), s.id, s.paragraph);
                    c.span = (a, b);
                    clauses.push(c);
                }
            }
        }
    }
    Ok(clauses)
}

/// Narrative to story: clauses, clarity, and completed fact sets. Clauses
/// that can be tied to no data become background clauses marked vague.
pub fn analyze(
    narrative: &str,
    table: &DataTable,
    gw: &Gateway,
    prompts: &Prompts,
    cfg: &PipelineConfig,
) -> Result<Story, PipelineError> {
    let acfg = &cfg.analysis;
    let doc = NarrativeDoc::new(segment_sentences(narrative, acfg)?);
    let mut clauses = build_clauses(gw, prompts, &doc, table, acfg)?;

    let factual: Vec<usize> = clauses
        .iter()
        .filter(|c| c.kind == ClauseKind::Factual)
        .map(|c| c.id)
        .collect();
    let validated = par_map(&factual, |&i| -> Result<_, AnalysisError> {
        let clause = &clauses[i];
        let candidates = match extract_fact_candidates(gw, prompts, &doc, clause, table, acfg) {
            Ok(c) => c,
            Err(AnalysisError::Extraction { reason, .. }) => {
                log::warn!("clause {i}: no fact candidates ({reason})");
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let scores = score_candidates(gw, prompts, &doc, clause, &candidates, acfg)?;
        Ok(Some(validate_candidates(&candidates, &scores, acfg)))
    });
    for (&i, v) in factual.iter().zip(validated) {
        match v? {
            Some(v) => {
                clauses[i].clarity = v.clarity;
                clauses[i].candidates = v.qualified;
            }
            None => clauses[i].clarity = Clarity::Vague,
        }
    }

    let vague: Vec<usize> = factual.iter().copied().filter(|&i| !clauses[i].is_clear()).collect();
    let bindings = par_map(&vague, |&i| bind_keywords(gw, prompts, &doc, &clauses[i], table, acfg));
    let mut facts: BTreeMap<usize, Vec<ScoredFact>> = BTreeMap::new();
    for &i in &factual {
        if clauses[i].is_clear() {
            facts.insert(i, clauses[i].candidates.clone());
        }
    }
    let mut unresolved = Vec::new();
    for (&i, b) in vague.iter().zip(bindings) {
        match infer_vague_facts(i, &clauses, &b?, table, &cfg.context) {
            Ok(inf) => {
                facts.insert(i, inf.facts);
            }
            Err(ContextError::Unresolved(_)) => unresolved.push(i),
        }
    }
    for &i in &unresolved {
        log::warn!("clause {i} has no clear clause to borrow from; it will be shown without its own facts");
        let c = &mut clauses[i];
        c.kind = ClauseKind::Background;
        c.clarity = Clarity::Vague;
        c.candidates.clear();
    }
    if facts.is_empty() {
        return Err(PipelineError::Unresolved(unresolved));
    }
    let story = complete_facts(&Story { clauses, facts }, table, &cfg.context);
    story.check().map_err(|e| PipelineError::Input(e.to_string()))?;
    Ok(story)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub storyboard: Storyboard,
    pub selection: Selection,
}

fn dedup_charts(charts: Vec<ChartSpec>) -> Vec<ChartSpec> {
    let mut seen = HashSet::new();
    charts
        .into_iter()
        .filter(|c| seen.insert(serde_json::to_string(c).expect("serializable")))
        .collect()
}

/// Story to storyboard. `gw` is only used to group comparable fields;
/// without it fields are matched by name.
pub fn generate(
    story: &Story,
    table: &DataTable,
    gw: Option<&Gateway>,
    prompts: &Prompts,
    tts: Option<&dyn TtsProvider>,
    cfg: &PipelineConfig,
) -> Result<Generated, PipelineError> {
    story.check().map_err(|e| PipelineError::Input(e.to_string()))?;
    let per_clause: Vec<Vec<ChartSpec>> = story
        .clauses
        .iter()
        .map(|c| {
            let charts = story
                .facts_of(c.id)
                .iter()
                .flat_map(|sf| match map_fact_to_charts(&sf.fact, table) {
                    Ok(v) => v,
                    Err(e) => {
                        log::info!("clause {}: {e}", c.id);
                        Vec::new()
                    }
                })
                .collect();
            dedup_charts(charts)
        })
        .collect();

    let mut fields: Vec<String> = Vec::new();
    for c in per_clause.iter().flatten().flat_map(|c| c.parts()) {
        for m in &c.measures {
            if !fields.contains(m) {
                fields.push(m.clone());
            }
        }
    }
    let groups = match gw {
        Some(gw) => comparable_groups(gw, prompts, &fields, cfg.analysis.temperature),
        None => Vec::new(),
    };
    let harmonized = harmonize(&per_clause, &groups, table);

    let slots: Vec<SlotInfo> = story
        .clauses
        .iter()
        .zip(harmonized)
        .map(|(c, charts)| SlotInfo {
            clear: c.is_clear(),
            vague: c.kind == ClauseKind::Factual && c.clarity == Clarity::Vague,
            charts: dedup_charts(charts),
        })
        .collect();
    if slots.iter().all(|s| s.charts.is_empty()) {
        return Err(PipelineError::Assembly(AssemblyError::NoCharts));
    }
    let candidates = adjust_vague_visuals(&slots);
    let clear: Vec<bool> = slots.iter().map(|s| s.clear).collect();
    let selection = select_sequence(&candidates, &clear, &cfg.weights, &cfg.costs, &cfg.search)?;

    let texts: Vec<(usize, String)> = story.clauses.iter().map(|c| (c.id, c.text.clone())).collect();
    let frames = frames_from_selection(&candidates, &selection.choice, &texts).map_err(PipelineError::Assembly)?;
    let refs: Vec<&str> = texts.iter().map(|(_, t)| t.as_str()).collect();
    let timeline = compute_timeline(&refs, tts, &cfg.timeline);
    let mut storyboard =
        assemble_storyboard(&frames, &timeline, table, &cfg.costs, &cfg.timeline).map_err(PipelineError::Assembly)?;
    storyboard.meta = json!({
        "weights": cfg.weights,
        "score": selection.score,
        "search": selection.mode,
        "choice": selection.choice,
        "seed": cfg.seed,
    });
    Ok(Generated { storyboard, selection })
}

/// `analyze` then `generate` with the same gateway.
pub fn run(
    narrative: &str,
    table: &DataTable,
    gw: &Gateway,
    prompts: &Prompts,
    tts: Option<&dyn TtsProvider>,
    cfg: &PipelineConfig,
) -> Result<(Story, Generated), PipelineError> {
    let story = analyze(narrative, table, gw, prompts, cfg)?;
    let generated = generate(&story, table, Some(gw), prompts, tts, cfg)?;
    Ok((story, generated))
}
