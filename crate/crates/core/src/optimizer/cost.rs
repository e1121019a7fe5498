use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::mapping::{Channel, ChartSpec, FieldScale};
use crate::model::ValueFilter;

/// Edit-operation costs between two single charts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTable {
    pub mark: f64,
    /// Per channel whose field is added, removed or swapped.
    pub encoding: f64,
    /// Per channel that keeps its field but changes scale or colors.
    pub scale: f64,
    pub scope: f64,
    pub emphasis: f64,
    pub add_mark: f64,
    pub add_encoding: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            mark: 1.0,
            encoding: 0.6,
            scale: 0.3,
            scope: 0.3,
            emphasis: 0.1,
            add_mark: 1.0,
            add_encoding: 0.6,
        }
    }
}

impl CostTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn channels(c: &ChartSpec) -> [Option<&Channel>; 3] {
    [c.x.as_ref(), c.y.as_ref(), c.color.as_ref()]
}

/// What a channel shows, comparable across charts. Folded channels are
/// identified by the measures they fold.
fn channel_sig(c: &ChartSpec, ch: &Channel) -> String {
    match ch {
        Channel::Field(f) => format!("field:{f}"),
        Channel::MeasureName => format!("names:{}", c.measures.join("\u{1f}")),
        Channel::MeasureValue => format!("values:{}", c.measures.join("\u{1f}")),
    }
}

fn channel_scales<'a>(c: &'a ChartSpec, ch: &Channel) -> Vec<Option<&'a FieldScale>> {
    match ch {
        Channel::Field(f) => vec![c.scales.get(f)],
        _ => c.measures.iter().map(|m| c.scales.get(m)).collect(),
    }
}

/// The parts of a chart the cost model looks at. `T(s, e) == 0` exactly
/// when these agree.
pub fn structural_key(c: &ChartSpec) -> String {
    let chans: Vec<Option<(String, Vec<Option<&FieldScale>>)>> = channels(c)
        .into_iter()
        .map(|ch| ch.map(|ch| (channel_sig(c, ch), channel_scales(c, ch))))
        .collect();
    serde_json::to_string(&(c.mark, chans, &c.data_scope, &c.emphasis)).expect("serializable")
}

fn add_cost(c: &ChartSpec, costs: &CostTable) -> f64 {
    costs.add_mark + costs.add_encoding * channels(c).iter().flatten().count() as f64
}

/// Static transition cost between single charts; `None` is the empty
/// chart. Any pair attached to a spec is ignored here.
pub fn transition_cost(s: Option<&ChartSpec>, e: Option<&ChartSpec>, costs: &CostTable) -> f64 {
    let (s, e) = match (s, e) {
        (None, None) => return 0.0,
        (None, Some(c)) | (Some(c), None) => return add_cost(c, costs),
        (Some(s), Some(e)) => (s, e),
    };
    let mut t = 0.0;
    if s.mark != e.mark {
        t += costs.mark;
    }
    for (a, b) in channels(s).into_iter().zip(channels(e)) {
        match (a, b) {
            (None, None) => {}
            (Some(a), Some(b)) if channel_sig(s, a) == channel_sig(e, b) => {
                if channel_scales(s, a) != channel_scales(e, b) {
                    t += costs.scale;
                }
            }
            _ => t += costs.encoding,
        }
    }
    if s.data_scope != e.data_scope {
        t += costs.scope;
    }
    if s.emphasis != e.emphasis {
        t += costs.emphasis;
    }
    t
}

/// Dimension columns both charts encode.
pub fn join_keys<'a>(s: &'a ChartSpec, e: &ChartSpec) -> BTreeSet<&'a str> {
    let other = e.dimensions();
    s.dimensions().into_iter().filter(|d| other.contains(d)).collect()
}

/// Conjunction of two data scopes, or `None` when they share no rows on
/// some column.
pub fn shared_scope(a: &ValueFilter, b: &ValueFilter) -> Option<ValueFilter> {
    let mut out = a.clone();
    for (col, vals) in b {
        match out.get_mut(col) {
            Some(mine) => {
                mine.retain(|v| vals.contains(v));
                if mine.is_empty() {
                    return None;
                }
            }
            None => {
                out.insert(col.clone(), vals.clone());
            }
        }
    }
    Some(out)
}

/// Interim states for a joined transition: both charts limited to their
/// shared data. `None` unless the charts draw the same mark, share a join
/// key, and differ in fields or data scope.
pub fn interim_states(s: &ChartSpec, e: &ChartSpec) -> Option<(ChartSpec, ChartSpec)> {
    if s.mark != e.mark || join_keys(s, e).is_empty() {
        return None;
    }
    if s.fields() == e.fields() && s.data_scope == e.data_scope {
        return None;
    }
    let shared = shared_scope(&s.data_scope, &e.data_scope)?;
    let strip = |c: &ChartSpec| {
        let mut c = c.clone();
        c.pair = None;
        c.data_scope = shared.clone();
        c
    };
    Some((strip(s), strip(e)))
}

/// Transition cost that routes joined charts through their interim states.
pub fn transition_cost_joined(s: Option<&ChartSpec>, e: Option<&ChartSpec>, costs: &CostTable) -> f64 {
    if let (Some(s), Some(e)) = (s, e) {
        if let Some((s2, e2)) = interim_states(s, e) {
            return transition_cost(Some(s), Some(&s2), costs) + transition_cost(Some(&e2), Some(e), costs);
        }
    }
    transition_cost(s, e, costs)
}

/// A visual at one position: nothing, a single chart, or a side-by-side pair.
#[derive(Debug, Clone, Copy)]
pub enum Visual<'a> {
    Null,
    One(&'a ChartSpec),
    Two(&'a ChartSpec, &'a ChartSpec),
}

impl<'a> Visual<'a> {
    pub fn of(spec: Option<&'a ChartSpec>) -> Self {
        match spec {
            None => Visual::Null,
            Some(c) => match &c.pair {
                None => Visual::One(c),
                Some(p) => Visual::Two(c, &p.chart),
            },
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Visual::Null => 0,
            Visual::One(_) => 1,
            Visual::Two(..) => 2,
        }
    }

    fn first(&self) -> Option<&'a ChartSpec> {
        match *self {
            Visual::Null => None,
            Visual::One(a) | Visual::Two(a, _) => Some(a),
        }
    }
}

/// Which parts of the previous visual move into which parts of the next.
/// Indices are 0 for the first chart and 1 for the paired chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub moves: Vec<(usize, usize)>,
}

/// Composite transition cost and the pairing that achieves it.
pub fn composite_detail(prev: Visual, next: Visual, costs: &CostTable) -> (f64, Pairing) {
    let tj = |a: Option<&ChartSpec>, b: Option<&ChartSpec>| transition_cost_joined(a, b, costs);
    let moves = |m: &[(usize, usize)]| Pairing { moves: m.to_vec() };
    match (prev, next) {
        (Visual::Two(s1, s2), Visual::Two(e1, e2)) => {
            let straight = tj(Some(s1), Some(e1)) + tj(Some(s2), Some(e2));
            let crossed = tj(Some(s1), Some(e2)) + tj(Some(s2), Some(e1));
            if crossed < straight {
                (crossed, moves(&[(0, 1), (1, 0)]))
            } else {
                (straight, moves(&[(0, 0), (1, 1)]))
            }
        }
        (s, Visual::Two(e1, e2)) => {
            let a = tj(s.first(), Some(e1));
            let b = tj(s.first(), Some(e2));
            // The cheaper target carries the morph; the other part enters.
            let primary = if b < a { 1 } else { 0 };
            (a + b, moves(&[(0, primary)]))
        }
        (Visual::Two(s1, s2), e) => {
            let a = tj(Some(s1), e.first());
            let b = tj(Some(s2), e.first());
            let primary = if b < a { 1 } else { 0 };
            (a + b, moves(&[(primary, 0)]))
        }
        (s, e) => (tj(s.first(), e.first()), moves(&[(0, 0)])),
    }
}

pub fn transition_cost_composite(prev: Visual, next: Visual, costs: &CostTable) -> f64 {
    composite_detail(prev, next, costs).0
}
