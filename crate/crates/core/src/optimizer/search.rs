use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CostTable, Score, Scorer, Slot, Weights};
use crate::mapping::{Candidate, Mark};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Enumerate every assignment when there are at most this many.
    pub exhaustive_bound: u64,
    pub beam_width: usize,
    pub prune: bool,
    /// Keep every scored prefix for `--dump-scores`.
    pub trace: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            exhaustive_bound: 20_000,
            beam_width: 50,
            prune: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exhaustive,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub prefix: Vec<usize>,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Chosen candidate index per position.
    pub choice: Vec<usize>,
    pub score: Score,
    pub mode: SearchMode,
    /// Complete or partial sequences scored during the search.
    pub explored: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OptimizeError {
    #[error("nothing to sequence")]
    NoPositions,
    #[error("position {0} has no candidates")]
    EmptyCandidates(usize),
    #[error("{candidates} candidate lists but {clear} clarity flags")]
    LengthMismatch { candidates: usize, clear: usize },
}

#[derive(Clone)]
struct State {
    choice: Vec<usize>,
    last: Slot,
    last_id: Option<usize>,
    t: f64,
    b: f64,
    acts: Vec<(usize, f64)>,
    /// First mark each quantitative field appeared with.
    marks: Vec<(String, Mark)>,
}

type StateKey = (Slot, Option<usize>, bool, Vec<(usize, u64)>, Vec<(String, Mark)>);

impl State {
    fn root() -> Self {
        Self {
            choice: Vec::new(),
            last: None,
            last_id: None,
            t: 0.0,
            b: 0.0,
            acts: Vec::new(),
            marks: Vec::new(),
        }
    }

    /// Everything the rest of the search can see. Two prefixes with the
    /// same key gain exactly the same from any continuation.
    /// Whether any focus was gained matters to prefix pruning.
    fn key(&self) -> StateKey {
        let mut acts: Vec<(usize, u64)> = self.acts.iter().map(|&(i, a)| (i, a.to_bits())).collect();
        acts.sort_unstable();
        let mut marks = self.marks.clone();
        marks.sort();
        (self.last, self.last_id, self.b > 0.0, acts, marks)
    }

    fn partial(&self, w: &Weights) -> Score {
        let p = match self.acts.iter().map(|(_, a)| *a).reduce(f64::max) {
            None => 1.0,
            Some(max) => 1.0 / self.acts.iter().map(|(_, a)| (a - max).exp()).sum::<f64>(),
        };
        Score {
            t: self.t,
            b: self.b,
            p,
            f: -w.transition * self.t + w.focus * self.b + w.retrieval * p,
        }
    }
}

struct Search<'a> {
    scorer: Scorer<'a>,
    candidates: &'a [Vec<Candidate>],
    cfg: SearchConfig,
    /// Last position where a clear clause offers an emphasized chart.
    last_focus: Option<usize>,
}

impl Search<'_> {
    fn conflicts(&self, state: &State, pos: usize, k: usize) -> bool {
        let Candidate::Chart { spec } = &self.candidates[pos][k] else {
            return false;
        };
        spec.parts().iter().any(|part| {
            part.measures
                .iter()
                .any(|m| state.marks.iter().any(|(f, mk)| f == m && *mk != part.mark))
        })
    }

    /// Candidate indices worth trying at `pos`. Charts that redraw a seen
    /// field with a different mark go, unless nothing else is left.
    fn allowed(&self, state: &State, pos: usize, prune: bool) -> Vec<usize> {
        let all: Vec<usize> = (0..self.candidates[pos].len()).collect();
        if !prune {
            return all;
        }
        let kept: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&k| !self.conflicts(state, pos, k))
            .collect();
        if kept.is_empty() {
            all
        } else {
            kept
        }
    }

    fn extend(&self, state: &State, pos: usize, k: usize) -> State {
        let slot = self.scorer.step(state.last, pos, k);
        let mut next = state.clone();
        next.choice.push(k);
        next.t += self.scorer.transition(state.last, slot);
        next.b += self.scorer.bonus(pos, slot);
        if let Some(id) = self.scorer.id(slot) {
            let w = self.scorer.weights();
            let inc = if state.last_id == Some(id) {
                w.beta
            } else {
                w.alpha + w.beta
            };
            match next.acts.iter_mut().find(|(i, _)| *i == id) {
                Some((_, a)) => *a += inc,
                None => next.acts.push((id, inc)),
            }
            next.last_id = Some(id);
        }
        if let Some(spec) = self.scorer.chart(slot) {
            for part in spec.parts() {
                for m in &part.measures {
                    if !next.marks.iter().any(|(f, _)| f == m) {
                        next.marks.push((m.clone(), part.mark));
                    }
                }
            }
        }
        next.last = slot;
        next
    }

    /// A prefix without any emphasized clear clause is hopeless once it is
    /// past the last position that could still add one.
    fn unfocused(&self, state: &State) -> bool {
        let pos = state.choice.len() - 1;
        state.b == 0.0 && self.last_focus.is_some_and(|l| pos >= l)
    }

    fn better(a: &(Score, Vec<usize>), b: &(Score, Vec<usize>)) -> bool {
        match a.0.f.total_cmp(&b.0.f) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => a.1 < b.1,
        }
    }

    fn exhaustive(
        &self,
        prune: bool,
        trace: &mut Vec<TraceEntry>,
        explored: &mut usize,
    ) -> Option<(Score, Vec<usize>)> {
        let mut best: Option<(Score, Vec<usize>)> = None;
        self.dfs(&State::root(), prune, &mut best, trace, explored);
        best
    }

    fn dfs(
        &self,
        state: &State,
        prune: bool,
        best: &mut Option<(Score, Vec<usize>)>,
        trace: &mut Vec<TraceEntry>,
        explored: &mut usize,
    ) {
        let pos = state.choice.len();
        if pos == self.candidates.len() {
            let score = self.scorer.score(&state.choice);
            *explored += 1;
            if self.cfg.trace {
                trace.push(TraceEntry {
                    prefix: state.choice.clone(),
                    score,
                });
            }
            let cand = (score, state.choice.clone());
            if best.as_ref().is_none_or(|b| Self::better(&cand, b)) {
                *best = Some(cand);
            }
            return;
        }
        for k in self.allowed(state, pos, prune) {
            let next = self.extend(state, pos, k);
            if prune && self.unfocused(&next) {
                continue;
            }
            self.dfs(&next, prune, best, trace, explored);
        }
    }

    fn beam(&self, prune: bool, trace: &mut Vec<TraceEntry>, explored: &mut usize) -> (Score, Vec<usize>) {
        let w = *self.scorer.weights();
        let width = self.cfg.beam_width.max(1);
        let mut beam = vec![State::root()];
        for pos in 0..self.candidates.len() {
            let expanded: Vec<State> = beam
                .iter()
                .flat_map(|s| self.allowed(s, pos, prune).into_iter().map(move |k| (s, k)))
                .map(|(s, k)| self.extend(s, pos, k))
                .collect();
            *explored += expanded.len();
            let (focused, rest): (Vec<State>, Vec<State>) = if prune {
                expanded.into_iter().partition(|s| !self.unfocused(s))
            } else {
                (expanded, Vec::new())
            };
            let next = if focused.is_empty() { rest } else { focused };
            let mut scored: Vec<(Score, State)> = next.into_iter().map(|s| (s.partial(&w), s)).collect();
            scored.sort_by(|a, b| b.0.f.total_cmp(&a.0.f).then_with(|| a.1.choice.cmp(&b.1.choice)));
            // Keep only the best prefix per state; the sort put it first.
            let mut seen = HashSet::new();
            scored.retain(|(_, s)| seen.insert(s.key()));
            scored.truncate(width);
            if self.cfg.trace {
                trace.extend(scored.iter().map(|(sc, s)| TraceEntry {
                    prefix: s.choice.clone(),
                    score: *sc,
                }));
            }
            beam = scored.into_iter().map(|(_, s)| s).collect();
        }
        // Rescore from scratch so the reported numbers do not depend on
        // the order partial sums were accumulated in.
        beam.into_iter()
            .map(|s| (self.scorer.score(&s.choice), s.choice))
            .reduce(|a, b| if Self::better(&b, &a) { b } else { a })
            .expect("beam is never empty")
    }
}

/// Picks one candidate per position maximizing the objective.
pub fn select_sequence(
    candidates: &[Vec<Candidate>],
    clear: &[bool],
    weights: &Weights,
    costs: &CostTable,
    cfg: &SearchConfig,
) -> Result<Selection, OptimizeError> {
    if candidates.is_empty() {
        return Err(OptimizeError::NoPositions);
    }
    if candidates.len() != clear.len() {
        return Err(OptimizeError::LengthMismatch {
            candidates: candidates.len(),
            clear: clear.len(),
        });
    }
    if let Some(pos) = candidates.iter().position(Vec::is_empty) {
        return Err(OptimizeError::EmptyCandidates(pos));
    }
    let last_focus = (0..candidates.len()).rev().find(|&p| {
        clear[p]
            && candidates[p].iter().any(|c| match c {
                Candidate::Chart { spec } => {
                    spec.has_emphasis() || spec.pair.as_ref().is_some_and(|x| x.chart.has_emphasis())
                }
                _ => false,
            })
    });
    let search = Search {
        scorer: Scorer::new(candidates, clear, *weights, *costs),
        candidates,
        cfg: *cfg,
        last_focus,
    };
    let total = candidates
        .iter()
        .fold(1u64, |acc, c| acc.saturating_mul(c.len() as u64));
    let mut trace = Vec::new();
    let mut explored = 0;
    let (mode, (score, choice)) = if total <= cfg.exhaustive_bound {
        let found = search
            .exhaustive(cfg.prune, &mut trace, &mut explored)
            .or_else(|| search.exhaustive(false, &mut trace, &mut explored))
            .expect("unpruned enumeration always finds a sequence");
        (SearchMode::Exhaustive, found)
    } else {
        (SearchMode::Beam, search.beam(cfg.prune, &mut trace, &mut explored))
    };
    log::debug!("{mode:?} search scored {explored} sequences; best F = {}", score.f);
    Ok(Selection {
        choice,
        score,
        mode,
        explored,
        trace,
    })
}
