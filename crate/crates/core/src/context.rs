//! Resolving vague clauses from their neighbours and completing fact sets.
//!
//! Vague clauses get facts by binding their keywords to table columns and
//! values, intersecting those candidates with what the nearest clear clauses
//! on either side talk about, and aligning new facts to those references.
//! Completion then closes every clause's fact set under three rewrites:
//! swapping focus and context, cross-combining type/parameters between
//! facts over the same measures, and widening a fact to an adjacent clause's
//! measures or context when it is a strict subset of them.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{json_payload, AnalysisConfig, AnalysisError, NarrativeDoc, Prompts};
use crate::gateway::{Gateway, GenerationRequest};
use crate::model::{
    filter_rows, validate_fact, Clause, ClauseKind, ColumnKind, DataFact, DataTable, ScoredFact, Story, ValueFilter,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextConfig {
    /// Maximum clause distance to a reference clause; `None` means anywhere
    /// in the same paragraph.
    pub reference_window: Option<usize>,
    /// Facts kept per clause after completion.
    pub fact_cap: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            reference_window: None,
            fact_cap: 8,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("clause {0} cannot be resolved: the story has no clear clause")]
    Unresolved(usize),
}

/// A keyword of a vague clause and the table columns/values it may mean.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeywordBinding {
    pub keyword: String,
    pub candidate_properties: BTreeSet<String>,
    pub candidate_values: BTreeSet<(String, String)>,
}

#[derive(Deserialize)]
struct RawBindings {
    #[serde(default)]
    keywords: Vec<RawBinding>,
}

#[derive(Deserialize)]
struct RawBinding {
    #[serde(default)]
    keyword: String,
    #[serde(default)]
    properties: Vec<String>,
    #[serde(default)]
    values: Vec<RawValue>,
}

#[derive(Deserialize)]
struct RawValue {
    column: String,
    value: serde_json::Value,
}

/// Parses the keyword-binding reply, dropping columns or values the table
/// does not have.
pub fn parse_bindings(reply: &str, table: &DataTable) -> Vec<KeywordBinding> {
    let Some(raw) = json_payload(reply).and_then(|v| serde_json::from_value::<RawBindings>(v).ok()) else {
        return Vec::new();
    };
    raw.keywords
        .into_iter()
        .map(|b| KeywordBinding {
            keyword: b.keyword,
            candidate_properties: b.properties.into_iter().filter(|p| table.column(p).is_some()).collect(),
            candidate_values: b
                .values
                .into_iter()
                .filter_map(|v| {
                    let value = match v.value {
                        serde_json::Value::String(s) => s,
                        serde_json::Value::Number(n) => crate::model::format_number(n.as_f64()?),
                        _ => return None,
                    };
                    table.contains_value(&v.column, &value).then_some((v.column, value))
                })
                .collect(),
        })
        .collect()
}

pub fn bind_keywords(
    gw: &Gateway,
    prompts: &Prompts,
    doc: &NarrativeDoc,
    clause: &Clause,
    table: &DataTable,
    cfg: &AnalysisConfig,
) -> Result<Vec<KeywordBinding>, AnalysisError> {
    let prompt = prompts.keywords.render(&[
        ("table_schema", &table.schema_summary()),
        ("narrative", &doc.with_marked(clause)),
        ("clause", &clause.text),
    ]);
    let reply = gw.generate(&GenerationRequest::new(prompt).temperature(cfg.temperature))?;
    Ok(parse_bindings(&reply, table))
}

/// Properties (columns) and values a set of facts talks about.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySet {
    pub properties: BTreeSet<String>,
    pub values: BTreeSet<(String, String)>,
}

impl PropertySet {
    pub fn of_facts<'a>(facts: impl IntoIterator<Item = &'a DataFact>) -> Self {
        let mut s = Self::default();
        for f in facts {
            s.properties.extend(f.measures.iter().cloned());
            s.properties.extend(f.breakdowns.iter().cloned());
            for filter in [&f.context, &f.focus] {
                for (k, vals) in filter {
                    s.values.extend(vals.iter().map(|v| (k.clone(), v.clone())));
                }
            }
        }
        s
    }

    pub fn of_bindings(bindings: &[KeywordBinding]) -> Self {
        let mut s = Self::default();
        for b in bindings {
            s.properties.extend(b.candidate_properties.iter().cloned());
            s.values.extend(b.candidate_values.iter().cloned());
        }
        s
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self {
            properties: self.properties.intersection(&other.properties).cloned().collect(),
            values: self.values.intersection(&other.values).cloned().collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            properties: self.properties.union(&other.properties).cloned().collect(),
            values: self.values.union(&other.values).cloned().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty() && self.values.is_empty()
    }
}

/// How a vague clause was resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub facts: Vec<ScoredFact>,
    pub references: Vec<usize>,
    pub candidates: PropertySet,
    /// Candidate set ∩ each reference's properties, in reference order.
    pub intersections: Vec<PropertySet>,
    pub filtered: PropertySet,
    /// Set when facts were copied from the nearest clear clause instead.
    pub copied_from: Option<usize>,
}

/// Nearest clear clause before and after `idx` in the same paragraph.
pub fn select_references(idx: usize, clauses: &[Clause], cfg: &ContextConfig) -> (Option<usize>, Option<usize>) {
    let para = clauses[idx].paragraph;
    let usable = |j: usize| {
        let c = &clauses[j];
        c.paragraph == para
            && c.is_clear()
            && !c.candidates.is_empty()
            && cfg.reference_window.is_none_or(|w| j.abs_diff(idx) <= w)
    };
    let before = (0..idx)
        .rev()
        .take_while(|&j| clauses[j].paragraph == para)
        .find(|&j| usable(j));
    let after = (idx + 1..clauses.len())
        .take_while(|&j| clauses[j].paragraph == para)
        .find(|&j| usable(j));
    (before, after)
}

fn nearest_clear(idx: usize, clauses: &[Clause]) -> Option<usize> {
    (0..clauses.len())
        .filter(|&j| j != idx && clauses[j].is_clear() && !clauses[j].candidates.is_empty())
        .min_by_key(|&j| (j.abs_diff(idx), j > idx))
}

/// Infers up to three facts for a vague clause from keyword bindings and
/// the qualified facts of its reference clauses.
pub fn infer_vague_facts(
    idx: usize,
    clauses: &[Clause],
    bindings: &[KeywordBinding],
    table: &DataTable,
    cfg: &ContextConfig,
) -> Result<Inference, ContextError> {
    let (before, after) = select_references(idx, clauses, cfg);
    let references: Vec<usize> = before.into_iter().chain(after).collect();
    let candidates = PropertySet::of_bindings(bindings);
    let intersections: Vec<PropertySet> = references
        .iter()
        .map(|&r| {
            let facts = clauses[r].candidates.iter().map(|s| &s.fact);
            candidates.intersection(&PropertySet::of_facts(facts))
        })
        .collect();
    let filtered = intersections.iter().fold(PropertySet::default(), |acc, s| acc.union(s));

    if filtered.is_empty() {
        let source = nearest_clear(idx, clauses).ok_or(ContextError::Unresolved(idx))?;
        return Ok(Inference {
            facts: clauses[source].candidates.clone(),
            references,
            candidates,
            intersections,
            filtered,
            copied_from: Some(source),
        });
    }

    let part = |i: usize| {
        if intersections[i].is_empty() {
            &filtered
        } else {
            &intersections[i]
        }
    };
    let template = |r: usize| &clauses[r].candidates[0];
    let mut facts = Vec::with_capacity(3);
    let first = align(template(references[0]), part(0), Placement::Context, table);
    facts.push(first.clone());
    if references.len() == 2 {
        let combined = part(0).union(part(1));
        facts.push(align(template(references[0]), &combined, Placement::Focus, table));
        facts.push(align(template(references[1]), part(1), Placement::Context, table));
    } else {
        facts.push(first.clone());
        facts.push(first);
    }
    let mut seen = HashSet::new();
    facts.retain(|f| seen.insert(f.fact.canonical_key()));
    Ok(Inference {
        facts,
        references,
        candidates,
        intersections,
        filtered,
        copied_from: None,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Placement {
    Context,
    Focus,
}

/// The reference fact re-targeted at the given properties and values.
/// Quantitative properties become measures, dimension properties become
/// breakdowns, and values land in the context (or focus).
fn align(template: &ScoredFact, set: &PropertySet, place: Placement, table: &DataTable) -> ScoredFact {
    let mut f = template.fact.clone();
    let ordered: Vec<&str> = table
        .columns()
        .iter()
        .map(|c| c.name.as_str())
        .filter(|c| set.properties.contains(*c))
        .collect();
    let measures: Vec<String> = ordered
        .iter()
        .filter(|c| table.kind_of(c) == Some(ColumnKind::Quantitative))
        .map(|c| c.to_string())
        .collect();
    if !measures.is_empty() {
        f.measures = measures;
    }
    for c in ordered
        .iter()
        .filter(|c| table.kind_of(c).is_some_and(ColumnKind::is_dimension))
    {
        if !f.breakdowns.iter().any(|b| b == c) {
            f.breakdowns.push(c.to_string());
        }
    }
    f.breakdowns.retain(|b| !f.measures.contains(b));

    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (col, val) in &set.values {
        grouped.entry(col.clone()).or_default().push(val.clone());
    }
    for (col, vals) in grouped {
        match place {
            Placement::Context => {
                let narrower = f
                    .focus
                    .get(&col)
                    .is_some_and(|fv| fv.len() < vals.len() && fv.iter().all(|v| vals.contains(v)));
                if !narrower {
                    f.focus.remove(&col);
                }
                f.context.insert(col, vals);
            }
            Placement::Focus => {
                if f.context
                    .get(&col)
                    .is_some_and(|cv| !vals.iter().all(|v| cv.contains(v)))
                {
                    f.context.remove(&col);
                }
                f.focus.insert(col, vals);
            }
        }
    }
    if validate_fact(&f, table).is_valid() {
        ScoredFact::new(f, template.similarity)
    } else {
        template.clone()
    }
}

/// Interchanges a fact's context and focus.
pub fn swap_context_focus(fact: &DataFact) -> DataFact {
    let mut f = fact.clone();
    std::mem::swap(&mut f.context, &mut f.focus);
    f
}

fn pairs(filter: &ValueFilter) -> BTreeSet<(&str, &str)> {
    filter
        .iter()
        .flat_map(|(k, vs)| vs.iter().map(move |v| (k.as_str(), v.as_str())))
        .collect()
}

fn measure_set(f: &DataFact) -> BTreeSet<&str> {
    f.measures.iter().map(String::as_str).collect()
}

/// Focus-for-context swap, when the focus selects strictly fewer rows than
/// the context.
fn swap_candidates(facts: &[ScoredFact], table: &DataTable) -> Vec<ScoredFact> {
    let mut out = Vec::new();
    for sf in facts {
        let f = &sf.fact;
        if !f.has_focus() {
            continue;
        }
        let (Ok(ctx), Ok(foc)) = (filter_rows(&f.context, table), filter_rows(&f.focus, table)) else {
            continue;
        };
        if foc.len() < ctx.len() && foc.is_subset(&ctx) {
            out.push(ScoredFact::new(swap_context_focus(f), sf.similarity));
        }
    }
    out
}

/// Exchange type/parameters between facts with the same measures and
/// breakdowns.
fn cross_combine(facts: &[ScoredFact]) -> Vec<ScoredFact> {
    let mut out = Vec::new();
    for a in facts {
        for b in facts {
            let same_shape = measure_set(&a.fact) == measure_set(&b.fact)
                && a.fact.breakdowns.iter().collect::<BTreeSet<_>>()
                    == b.fact.breakdowns.iter().collect::<BTreeSet<_>>();
            let differs = a.fact.fact_type != b.fact.fact_type || a.fact.parameters != b.fact.parameters;
            if same_shape && differs {
                let mut f = a.fact.clone();
                f.fact_type = b.fact.fact_type;
                f.parameters = b.fact.parameters.clone();
                out.push(ScoredFact::new(f, a.similarity));
            }
        }
    }
    out
}

/// Widen measures or context to an adjacent clause's fact that matches on
/// the other field and strictly contains this one.
fn neighbor_expansion(facts: &[ScoredFact], neighbors: &[&ScoredFact]) -> Vec<ScoredFact> {
    let mut out = Vec::new();
    for sf in facts {
        let f = &sf.fact;
        for g in neighbors.iter().map(|g| &g.fact) {
            let (fm, gm) = (measure_set(f), measure_set(g));
            let (fc, gc) = (pairs(&f.context), pairs(&g.context));
            if fm == gm && fc.len() < gc.len() && fc.is_subset(&gc) {
                let mut w = f.clone();
                w.context = g.context.clone();
                out.push(ScoredFact::new(w, sf.similarity));
            }
            if fc == gc && fm.len() < gm.len() && fm.is_subset(&gm) {
                let mut w = f.clone();
                for m in &g.measures {
                    if !w.measures.contains(m) {
                        w.measures.push(m.clone());
                    }
                }
                out.push(ScoredFact::new(w, sf.similarity));
            }
        }
    }
    out
}

fn push_new(set: &mut Vec<ScoredFact>, keys: &mut HashSet<String>, new: Vec<ScoredFact>, table: &DataTable) {
    for sf in new {
        if validate_fact(&sf.fact, table).is_valid() && keys.insert(sf.fact.canonical_key()) {
            set.push(sf);
        }
    }
}

/// Closes each factual clause's fact set under swap, cross-combine and
/// neighbour expansion (applied in that order, repeated to a fixpoint).
/// The clause's own facts are always kept; derived facts fill the rest of
/// `fact_cap`, most similar first. The result is ordered by similarity.
pub fn complete_facts(story: &Story, table: &DataTable, cfg: &ContextConfig) -> Story {
    let ids: Vec<usize> = story
        .clauses
        .iter()
        .filter(|c| c.kind == ClauseKind::Factual && story.facts.contains_key(&c.id))
        .map(|c| c.id)
        .collect();
    let mut originals: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sets = story.facts.clone();
    for &id in &ids {
        let mut keys = HashSet::new();
        let set = sets.get_mut(&id).expect("id taken from facts");
        set.retain(|sf| keys.insert(sf.fact.canonical_key()));
        originals.insert(id, set.len());
    }
    // Each round only adds facts and the candidate space is finite.
    loop {
        let snapshot = sets.clone();
        let mut changed = false;
        for &id in &ids {
            let mut cur = snapshot[&id].clone();
            let mut keys: HashSet<String> = cur.iter().map(|sf| sf.fact.canonical_key()).collect();
            let swapped = swap_candidates(&cur, table);
            push_new(&mut cur, &mut keys, swapped, table);
            let crossed = cross_combine(&cur);
            push_new(&mut cur, &mut keys, crossed, table);
            let neighbors: Vec<&ScoredFact> = [id.checked_sub(1), Some(id + 1)]
                .into_iter()
                .flatten()
                .filter_map(|n| snapshot.get(&n))
                .flatten()
                .collect();
            let widened = neighbor_expansion(&cur, &neighbors);
            push_new(&mut cur, &mut keys, widened, table);

            changed |= cur.len() != snapshot[&id].len();
            sets.insert(id, cur);
        }
        if !changed {
            break;
        }
    }
    for &id in &ids {
        let set = sets.get_mut(&id).expect("id taken from facts");
        let own = originals[&id];
        let mut derived = set.split_off(own);
        derived.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        derived.truncate(cfg.fact_cap.saturating_sub(own));
        set.extend(derived);
        // Stable: the clause's own facts win similarity ties.
        set.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    }
    Story {
        clauses: story.clauses.clone(),
        facts: sets,
    }
}
