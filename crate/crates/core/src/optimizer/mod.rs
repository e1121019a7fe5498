//! Scoring and searching visualization sequences.
//!
//! A sequence picks one candidate per clause. It is scored by
//! `F = -w1*T + w2*B + w3*P`: `T` sums composite transition costs starting
//! from an empty chart, `B` counts clear clauses shown with emphasis, and
//! `P` is the retrieval probability of the most activated visual.

mod cost;
mod search;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mapping::{Candidate, ChartSpec};

pub use cost::{
    composite_detail, interim_states, join_keys, shared_scope, structural_key, transition_cost,
    transition_cost_composite, transition_cost_joined, CostTable, Pairing, Visual,
};
pub use search::{select_sequence, OptimizeError, SearchConfig, SearchMode, Selection, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub transition: f64,
    pub focus: f64,
    pub retrieval: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            transition: 1.0,
            focus: 0.5,
            retrieval: 2.0,
            alpha: 1.0,
            beta: 0.5,
        }
    }
}

impl Weights {
    /// Parses `"w1,w2,w3"`, keeping the default activation parameters.
    pub fn parse_triple(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad weight {p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let [w1, w2, w3] = parts[..] else {
            return Err(format!("expected three comma-separated weights, got {}", parts.len()));
        };
        if w2 < 0.0 || w3 < 0.0 || !(w1.is_finite() && w2.is_finite() && w3.is_finite()) {
            return Err("focus and retrieval weights must be finite and non-negative".into());
        }
        Ok(Self {
            transition: w1,
            focus: w2,
            retrieval: w3,
            ..Self::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub t: f64,
    pub b: f64,
    pub p: f64,
    pub f: f64,
}

/// Activation per distinct item, in first-appearance order. Each maximal
/// run of an item adds `alpha + beta * run_length`.
pub fn activations<K: PartialEq + Clone>(seq: &[K], alpha: f64, beta: f64) -> Vec<(K, f64)> {
    let mut out: Vec<(K, f64)> = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        let mut j = i + 1;
        while j < seq.len() && seq[j] == seq[i] {
            j += 1;
        }
        let a = alpha + beta * (j - i) as f64;
        match out.iter_mut().find(|(k, _)| *k == seq[i]) {
            Some((_, acc)) => *acc += a,
            None => out.push((seq[i].clone(), a)),
        }
        i = j;
    }
    out
}

/// Largest softmax share among the activations; 1 for an empty sequence.
pub fn retrieval_probability<K: PartialEq + Clone>(seq: &[K], alpha: f64, beta: f64) -> f64 {
    let acts = activations(seq, alpha, beta);
    let Some(max) = acts.iter().map(|(_, a)| *a).reduce(f64::max) else {
        return 1.0;
    };
    1.0 / acts.iter().map(|(_, a)| (a - max).exp()).sum::<f64>()
}

fn focused(c: &ChartSpec) -> bool {
    c.has_emphasis() || c.pair.as_ref().is_some_and(|p| p.chart.has_emphasis())
}

/// Number of clear clauses whose chart carries emphasis.
pub fn focus_bonus(seq: &[Option<&ChartSpec>], clear: &[bool]) -> f64 {
    seq.iter()
        .zip(clear)
        .filter(|(c, &clear)| clear && c.is_some_and(focused))
        .count() as f64
}

/// Shared arithmetic for every way of scoring a resolved sequence, so the
/// search and `objective` agree to the last bit.
fn combine<K: PartialEq + Clone>(transitions: impl Iterator<Item = f64>, b: f64, keys: &[K], w: &Weights) -> Score {
    let t: f64 = transitions.sum();
    let p = retrieval_probability(keys, w.alpha, w.beta);
    Score {
        t,
        b,
        p,
        f: -w.transition * t + w.focus * b + w.retrieval * p,
    }
}

/// Scores a resolved sequence (`None` = empty chart, excluded from runs).
pub fn objective(seq: &[Option<&ChartSpec>], clear: &[bool], w: &Weights, costs: &CostTable) -> Score {
    let prev = std::iter::once(None).chain(seq.iter().copied());
    let transitions = prev
        .zip(seq.iter().copied())
        .map(|(a, b)| transition_cost_composite(Visual::of(a), Visual::of(b), costs));
    let keys: Vec<String> = seq.iter().flatten().map(|c| c.identity_key()).collect();
    combine(transitions, focus_bonus(seq, clear), &keys, w)
}

/// Turns a choice of candidate indices into charts. `RepeatPrevious` takes
/// the previous position's chart and `Skeleton` is empty while searching.
pub fn resolve<'a>(candidates: &'a [Vec<Candidate>], choice: &[usize]) -> Vec<Option<&'a ChartSpec>> {
    let mut out: Vec<Option<&ChartSpec>> = Vec::with_capacity(choice.len());
    for (pos, &k) in choice.iter().enumerate() {
        let c = match &candidates[pos][k] {
            Candidate::Chart { spec } => Some(spec),
            Candidate::RepeatPrevious => out.last().copied().flatten(),
            Candidate::Skeleton => None,
        };
        out.push(c);
    }
    out
}

/// Interned identities and memoized costs for one candidate table.
pub(crate) struct Scorer<'a> {
    candidates: &'a [Vec<Candidate>],
    clear: &'a [bool],
    weights: Weights,
    costs: CostTable,
    ids: Vec<Vec<Option<usize>>>,
    cache: std::cell::RefCell<HashMap<(Slot, Slot), f64>>,
}

/// A resolved chart by the position/candidate it came from.
pub(crate) type Slot = Option<(usize, usize)>;

impl<'a> Scorer<'a> {
    pub(crate) fn new(candidates: &'a [Vec<Candidate>], clear: &'a [bool], weights: Weights, costs: CostTable) -> Self {
        let mut intern: HashMap<String, usize> = HashMap::new();
        let ids = candidates
            .iter()
            .map(|cs| {
                cs.iter()
                    .map(|c| match c {
                        Candidate::Chart { spec } => {
                            let n = intern.len();
                            Some(*intern.entry(spec.identity_key()).or_insert(n))
                        }
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        Self {
            candidates,
            clear,
            weights,
            costs,
            ids,
            cache: Default::default(),
        }
    }

    pub(crate) fn weights(&self) -> &Weights {
        &self.weights
    }

    pub(crate) fn chart(&self, slot: Slot) -> Option<&'a ChartSpec> {
        let (p, k) = slot?;
        match &self.candidates[p][k] {
            Candidate::Chart { spec } => Some(spec),
            _ => None,
        }
    }

    pub(crate) fn id(&self, slot: Slot) -> Option<usize> {
        slot.and_then(|(p, k)| self.ids[p][k])
    }

    /// Slot shown at `pos` when choosing `k` after `prev` was shown.
    pub(crate) fn step(&self, prev: Slot, pos: usize, k: usize) -> Slot {
        match &self.candidates[pos][k] {
            Candidate::Chart { .. } => Some((pos, k)),
            Candidate::RepeatPrevious => prev,
            Candidate::Skeleton => None,
        }
    }

    pub(crate) fn transition(&self, a: Slot, b: Slot) -> f64 {
        if let Some(&t) = self.cache.borrow().get(&(a, b)) {
            return t;
        }
        let t = transition_cost_composite(Visual::of(self.chart(a)), Visual::of(self.chart(b)), &self.costs);
        self.cache.borrow_mut().insert((a, b), t);
        t
    }

    pub(crate) fn bonus(&self, pos: usize, slot: Slot) -> f64 {
        if self.clear[pos] && self.chart(slot).is_some_and(focused) {
            1.0
        } else {
            0.0
        }
    }

    pub(crate) fn resolve(&self, choice: &[usize]) -> Vec<Slot> {
        let mut prev = None;
        choice
            .iter()
            .enumerate()
            .map(|(pos, &k)| {
                prev = self.step(prev, pos, k);
                prev
            })
            .collect()
    }

    /// Full score of a complete choice, computed from scratch.
    pub(crate) fn score(&self, choice: &[usize]) -> Score {
        let slots = self.resolve(choice);
        let prev = std::iter::once(None).chain(slots.iter().copied());
        let transitions = prev.zip(slots.iter().copied()).map(|(a, b)| self.transition(a, b));
        let b: f64 = slots.iter().enumerate().map(|(i, &s)| self.bonus(i, s)).sum();
        let keys: Vec<usize> = slots.iter().filter_map(|&s| self.id(s)).collect();
        combine(transitions, b, &keys, &self.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_counts_runs() {
        let a = activations(&['A', 'A', 'B'], 1.0, 0.5);
        assert_eq!(a, vec![('A', 2.0), ('B', 1.5)]);
        let split = activations(&['A', 'B', 'A'], 1.0, 0.5);
        assert_eq!(split, vec![('A', 3.0), ('B', 1.5)]);
    }

    #[test]
    fn retrieval_probability_hand_values() {
        let p = retrieval_probability(&['A', 'A', 'B'], 1.0, 0.5);
        let want = 2f64.exp() / (2f64.exp() + 1.5f64.exp());
        assert!((p - want).abs() < 1e-12);
        assert!(retrieval_probability(&['A', 'B', 'A'], 1.0, 0.5) > p);
        assert_eq!(retrieval_probability(&['X'; 4], 1.0, 0.5), 1.0);
    }

    #[test]
    fn weight_triples() {
        let w = Weights::parse_triple("1, 0.5,2").unwrap();
        assert_eq!(
            (w.transition, w.focus, w.retrieval, w.alpha, w.beta),
            (1.0, 0.5, 2.0, 1.0, 0.5)
        );
        assert!(Weights::parse_triple("1,2").is_err());
        assert!(Weights::parse_triple("1,-1,2").is_err());
    }
}
