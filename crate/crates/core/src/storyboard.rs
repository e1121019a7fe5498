//! Transition plans, clause timing and the storyboard document.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::mapping::{to_vega_lite, Candidate, ChartSpec};
use crate::model::DataTable;
use crate::optimizer::{composite_detail, interim_states, CostTable, Visual};

pub const STORYBOARD_VERSION: &str = "1";

/// JSON Schema for storyboard documents.
pub const STORYBOARD_SCHEMA: &str = include_str!("../schema/storyboard.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    None,
    OneToOne,
    OneToTwo,
    TwoToOne,
    TwoToTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepAction {
    Enter,
    Exit,
    Morph,
    InterpolateVia,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionStep {
    pub action: StepAction,
    /// Chart id in the outgoing frame, absent for `enter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    /// Chart id in the incoming frame, absent for `exit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    /// Interim chart for `interpolate-via`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<ChartSpec>,
    /// Steps sharing a phase play together; phases play in order.
    pub phase: usize,
    /// Offset from the transition start.
    pub start_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPlan {
    pub from_frame: usize,
    pub to_frame: usize,
    pub kind: TransitionKind,
    pub start_ms: u64,
    pub duration_ms: u64,
    pub steps: Vec<TransitionStep>,
}

pub fn chart_id(frame: usize, part: usize) -> String {
    format!("f{frame}.{part}")
}

fn step(action: StepAction, from: Option<String>, to: Option<String>, phase: usize) -> TransitionStep {
    TransitionStep {
        action,
        from,
        to,
        via: None,
        phase,
        start_ms: 0,
        duration_ms: 0,
    }
}

fn shares_anything(prev: &ChartSpec, next: &ChartSpec) -> bool {
    prev.parts().iter().any(|a| {
        next.parts()
            .iter()
            .any(|b| !a.fields().is_disjoint(&b.fields()) || !crate::optimizer::join_keys(a, b).is_empty())
    })
}

/// Plans the animation between two adjacent frames. Times are left at zero
/// until `schedule` assigns them.
pub fn plan_transition(
    prev: &ChartSpec,
    next: &ChartSpec,
    from_frame: usize,
    to_frame: usize,
    costs: &CostTable,
) -> TransitionPlan {
    let (pv, nv) = (Visual::of(Some(prev)), Visual::of(Some(next)));
    let id_from = |p: usize| Some(chart_id(from_frame, p));
    let id_to = |p: usize| Some(chart_id(to_frame, p));
    let mut plan = TransitionPlan {
        from_frame,
        to_frame,
        kind: TransitionKind::None,
        start_ms: 0,
        duration_ms: 0,
        steps: Vec::new(),
    };
    if !shares_anything(prev, next) {
        return plan;
    }
    let (_, pairing) = composite_detail(pv, nv, costs);
    match (pv.arity(), nv.arity()) {
        (1, 1) => {
            plan.kind = TransitionKind::OneToOne;
            if let Some((s2, e2)) = interim_states(prev, next) {
                let mut a = step(StepAction::InterpolateVia, id_from(0), id_to(0), 0);
                a.via = Some(s2);
                let mut b = step(StepAction::InterpolateVia, id_from(0), id_to(0), 1);
                b.via = Some(e2);
                plan.steps = vec![a, b, step(StepAction::Morph, id_from(0), id_to(0), 2)];
            } else {
                plan.steps = vec![step(StepAction::Morph, id_from(0), id_to(0), 0)];
            }
        }
        (1, 2) => {
            plan.kind = TransitionKind::OneToTwo;
            let primary = pairing.moves[0].1;
            plan.steps = vec![
                step(StepAction::Morph, id_from(0), id_to(primary), 0),
                step(StepAction::Enter, None, id_to(1 - primary), 1),
            ];
        }
        (2, 1) => {
            plan.kind = TransitionKind::TwoToOne;
            let primary = pairing.moves[0].0;
            plan.steps = vec![
                step(StepAction::Exit, id_from(1 - primary), None, 0),
                step(StepAction::Morph, id_from(primary), id_to(0), 1),
            ];
        }
        _ => {
            plan.kind = TransitionKind::TwoToTwo;
            plan.steps = pairing
                .moves
                .iter()
                .map(|&(a, b)| step(StepAction::Morph, id_from(a), id_to(b), 0))
                .collect();
        }
    }
    plan
}

/// Gives each phase `min_ms`, starting at `boundary_ms`, then shrinks the
/// whole transition to fit in `frame_ms` when needed.
pub fn schedule(plan: &mut TransitionPlan, boundary_ms: u64, frame_ms: u64, min_ms: u64) {
    plan.start_ms = boundary_ms;
    let phases = plan.steps.iter().map(|s| s.phase + 1).max().unwrap_or(0) as u64;
    if phases == 0 {
        plan.duration_ms = 0;
        return;
    }
    let total = (phases * min_ms).min(frame_ms);
    let per = total / phases;
    for s in &mut plan.steps {
        let p = s.phase as u64;
        s.start_ms = p * per;
        s.duration_ms = if p + 1 == phases { total - p * per } else { per };
    }
    plan.duration_ms = total;
}

/// Supplies spoken durations per clause.
pub trait TtsProvider {
    fn durations(&self, texts: &[&str]) -> Result<Vec<u64>, String>;

    /// Audio file holding the narration, if the provider rendered one.
    fn audio_file(&self) -> Option<String> {
        None
    }
}

/// Provider replaying known durations (e.g. measured from recorded audio).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedDurations {
    pub durations: Vec<u64>,
    pub audio_file: Option<String>,
}

impl TtsProvider for FixedDurations {
    fn durations(&self, texts: &[&str]) -> Result<Vec<u64>, String> {
        if texts.len() != self.durations.len() {
            return Err(format!(
                "{} durations for {} clauses",
                self.durations.len(),
                texts.len()
            ));
        }
        Ok(self.durations.clone())
    }

    fn audio_file(&self) -> Option<String> {
        self.audio_file.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineConfig {
    pub words_per_minute: f64,
    /// Shortest frame and shortest animation phase.
    pub min_anim_ms: u64,
}

impl Default for TimelineConfig {
    fn default() -> Self {
        Self {
            words_per_minute: 150.0,
            min_anim_ms: 500,
        }
    }
}

pub fn estimate_ms(text: &str, cfg: &TimelineConfig) -> u64 {
    let words = text.split_whitespace().count() as f64;
    let ms = (words * 60_000.0 / cfg.words_per_minute).round() as u64;
    ms.max(cfg.min_anim_ms)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub intervals: Vec<(u64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_file: Option<String>,
}

fn prefix_sums(durations: impl Iterator<Item = u64>) -> Vec<(u64, u64)> {
    let mut t = 0;
    durations
        .map(|d| {
            let iv = (t, t + d);
            t += d;
            iv
        })
        .collect()
}

/// Per-clause intervals, contiguous from 0. Provider durations win; a
/// failing provider falls back to the reading-rate estimate.
pub fn compute_timeline(texts: &[&str], provider: Option<&dyn TtsProvider>, cfg: &TimelineConfig) -> Timeline {
    if let Some(p) = provider {
        match p.durations(texts) {
            Ok(d) if d.len() == texts.len() => {
                return Timeline {
                    intervals: prefix_sums(d.into_iter().map(|x| x.max(1))),
                    audio_file: p.audio_file(),
                }
            }
            Ok(d) => log::warn!(
                "speech provider returned {} durations for {} clauses; estimating",
                d.len(),
                texts.len()
            ),
            Err(e) => log::warn!("speech provider failed ({e}); estimating durations"),
        }
    }
    Timeline {
        intervals: prefix_sums(texts.iter().map(|t| estimate_ms(t, cfg))),
        audio_file: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameRole {
    Chart,
    /// Carries the previous frame's chart.
    Repeat,
    /// Axes and title of the next chart only.
    Skeleton,
}

/// A frame before timing: clause, subtitle and what it shows.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub clause_id: usize,
    pub text: String,
    pub chart: ChartSpec,
    pub role: FrameRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameChart {
    pub id: String,
    pub spec: ChartSpec,
    pub vega_lite: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub clause_id: usize,
    pub subtitle: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub role: FrameRole,
    pub charts: Vec<FrameChart>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audio {
    pub file: String,
    pub offsets_ms: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storyboard {
    pub version: String,
    pub table: String,
    pub total_ms: u64,
    pub frames: Vec<Frame>,
    pub transitions: Vec<TransitionPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<Audio>,
    /// Free-form provenance (weights, scores, search mode).
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub meta: Value,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssemblyError {
    #[error("{frames} frames but {intervals} timeline intervals")]
    LengthMismatch { frames: usize, intervals: usize },
    #[error("no clause has a chart to show")]
    NoCharts,
    #[error("{candidates} candidate lists, {choice} choices and {clauses} clauses")]
    SelectionMismatch {
        candidates: usize,
        choice: usize,
        clauses: usize,
    },
    #[error("storyboard invariant broken: {0}")]
    Invalid(String),
}

/// Resolves repeats and skeletons of a selection into concrete frames.
pub fn frames_from_selection(
    candidates: &[Vec<Candidate>],
    choice: &[usize],
    clauses: &[(usize, String)],
) -> Result<Vec<FrameInput>, AssemblyError> {
    if candidates.len() != choice.len() || choice.len() != clauses.len() {
        return Err(AssemblyError::SelectionMismatch {
            candidates: candidates.len(),
            choice: choice.len(),
            clauses: clauses.len(),
        });
    }
    let mut shown: Vec<Option<(ChartSpec, FrameRole)>> = Vec::with_capacity(choice.len());
    for (pos, &k) in choice.iter().enumerate() {
        let prev = shown.last().cloned().flatten().map(|(c, _)| c);
        shown.push(match &candidates[pos][k] {
            Candidate::Chart { spec } => Some((spec.clone(), FrameRole::Chart)),
            Candidate::RepeatPrevious => prev.map(|c| (c, FrameRole::Repeat)),
            Candidate::Skeleton => None,
        });
    }
    let mut next: Option<ChartSpec> = None;
    for slot in shown.iter_mut().rev() {
        match slot {
            Some((c, FrameRole::Chart | FrameRole::Repeat)) => next = Some(c.clone()),
            _ => *slot = next.as_ref().map(|c| (c.skeleton(), FrameRole::Skeleton)),
        }
    }
    shown
        .into_iter()
        .zip(clauses)
        .map(|(s, (id, text))| {
            let (chart, role) = s.ok_or(AssemblyError::NoCharts)?;
            Ok(FrameInput {
                clause_id: *id,
                text: text.clone(),
                chart,
                role,
            })
        })
        .collect()
}

fn frame_charts(index: usize, chart: &ChartSpec, table: &DataTable) -> Vec<FrameChart> {
    chart
        .parts()
        .into_iter()
        .enumerate()
        .map(|(p, c)| {
            let mut single = c.clone();
            single.pair = None;
            FrameChart {
                id: chart_id(index, p),
                vega_lite: to_vega_lite(&single, table),
                spec: single,
            }
        })
        .collect()
}

/// Builds the storyboard: one frame per clause on the timeline, one
/// transition per frame boundary starting at the boundary instant.
pub fn assemble_storyboard(
    frames: &[FrameInput],
    timeline: &Timeline,
    table: &DataTable,
    costs: &CostTable,
    cfg: &TimelineConfig,
) -> Result<Storyboard, AssemblyError> {
    if frames.len() != timeline.intervals.len() {
        return Err(AssemblyError::LengthMismatch {
            frames: frames.len(),
            intervals: timeline.intervals.len(),
        });
    }
    if frames.is_empty() {
        return Err(AssemblyError::NoCharts);
    }
    let out_frames: Vec<Frame> = frames
        .iter()
        .zip(&timeline.intervals)
        .enumerate()
        .map(|(i, (f, &(start, end)))| Frame {
            index: i,
            clause_id: f.clause_id,
            subtitle: f.text.clone(),
            start_ms: start,
            end_ms: end,
            role: f.role,
            charts: frame_charts(i, &f.chart, table),
        })
        .collect();
    let transitions = (1..frames.len())
        .map(|i| {
            let mut plan = plan_transition(&frames[i - 1].chart, &frames[i].chart, i - 1, i, costs);
            let (start, end) = timeline.intervals[i];
            schedule(&mut plan, start, end - start, cfg.min_anim_ms);
            plan
        })
        .collect();
    let sb = Storyboard {
        version: STORYBOARD_VERSION.to_string(),
        table: table.name().to_string(),
        total_ms: timeline.intervals.last().map_or(0, |iv| iv.1),
        frames: out_frames,
        transitions,
        audio: timeline.audio_file.clone().map(|file| Audio {
            file,
            offsets_ms: timeline.intervals.iter().map(|iv| iv.0).collect(),
        }),
        meta: Value::Null,
    };
    sb.check().map_err(AssemblyError::Invalid)?;
    Ok(sb)
}

impl Storyboard {
    /// Structural invariants: frames tile `[0, total)`, one transition per
    /// boundary between adjacent frames, steps name charts that exist.
    pub fn check(&self) -> Result<(), String> {
        if self.version != STORYBOARD_VERSION {
            return Err(format!("unsupported version {:?}", self.version));
        }
        let mut t = 0;
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i {
                return Err(format!("frame {i} has index {}", f.index));
            }
            if f.start_ms != t || f.end_ms <= f.start_ms {
                return Err(format!(
                    "frame {i} interval [{}, {}) does not continue at {t}",
                    f.start_ms, f.end_ms
                ));
            }
            t = f.end_ms;
        }
        if t != self.total_ms {
            return Err(format!("frames end at {t}, total is {}", self.total_ms));
        }
        if self.transitions.len() + 1 != self.frames.len().max(1) {
            return Err(format!(
                "{} transitions for {} frames",
                self.transitions.len(),
                self.frames.len()
            ));
        }
        for (i, tr) in self.transitions.iter().enumerate() {
            if tr.from_frame != i || tr.to_frame != i + 1 {
                return Err(format!("transition {i} joins {} and {}", tr.from_frame, tr.to_frame));
            }
            let has = |frame: usize, id: &Option<String>| {
                id.as_ref()
                    .is_none_or(|id| self.frames[frame].charts.iter().any(|c| &c.id == id))
            };
            for s in &tr.steps {
                if !has(tr.from_frame, &s.from) || !has(tr.to_frame, &s.to) {
                    return Err(format!("transition {i} names a missing chart"));
                }
            }
            let frame = &self.frames[tr.to_frame];
            if tr.duration_ms > frame.end_ms - frame.start_ms {
                return Err(format!("transition {i} outlasts its frame"));
            }
        }
        Ok(())
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal input.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("storyboard serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::map_fact_to_charts;
    use crate::model::{Cell, Column, ColumnKind, DataFact, FactType};

    fn table() -> DataTable {
        DataTable::new(
            "t",
            vec![
                Column::new("Month", ColumnKind::Temporal),
                Column::new("City", ColumnKind::Categorical),
                Column::new("a", ColumnKind::Quantitative),
                Column::new("b", ColumnKind::Quantitative),
                Column::new("c", ColumnKind::Quantitative),
            ],
            [("Jan", "X"), ("Feb", "Y"), ("Mar", "X")]
                .iter()
                .map(|(m, c)| {
                    vec![
                        Cell::Text(m.to_string()),
                        Cell::Text(c.to_string()),
                        Cell::Number(1.0),
                        Cell::Number(2.0),
                        Cell::Number(3.0),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    fn chart(f: DataFact, i: usize) -> ChartSpec {
        map_fact_to_charts(&f, &table()).unwrap().remove(i)
    }

    #[test]
    fn reading_rate() {
        let cfg = TimelineConfig::default();
        let ten = "w ".repeat(10);
        let twenty = "w ".repeat(20);
        let tl = compute_timeline(&[&ten, &twenty], None, &cfg);
        assert_eq!(tl.intervals, vec![(0, 4000), (4000, 12000)]);
        assert_eq!(estimate_ms("", &cfg), 500);
    }

    #[test]
    fn provider_wins_and_failure_falls_back() {
        let cfg = TimelineConfig::default();
        let p = FixedDurations {
            durations: vec![3000, 5000],
            audio_file: Some("n.wav".into()),
        };
        let tl = compute_timeline(&["a", "b"], Some(&p), &cfg);
        assert_eq!(tl.intervals, vec![(0, 3000), (3000, 8000)]);
        assert_eq!(tl.audio_file.as_deref(), Some("n.wav"));
        let tl = compute_timeline(&["a"], Some(&p), &cfg);
        assert_eq!(tl.intervals, vec![(0, 500)]);
    }

    #[test]
    fn disjoint_charts_cut() {
        let a = chart(DataFact::new(FactType::Value, &["a"]).with_breakdowns(&["Month"]), 0);
        let b = chart(DataFact::new(FactType::Value, &["b"]).with_breakdowns(&["City"]), 0);
        let plan = plan_transition(&a, &b, 0, 1, &CostTable::default());
        assert_eq!(plan.kind, TransitionKind::None);
        assert!(plan.steps.is_empty());
    }

    #[test]
    fn joined_one_to_one_interpolates() {
        let a = chart(DataFact::new(FactType::Value, &["a"]).with_breakdowns(&["Month"]), 0);
        let b = chart(
            DataFact::new(FactType::Value, &["b"])
                .with_breakdowns(&["Month"])
                .with_context("Month", &["Jan", "Feb"]),
            0,
        );
        let mut plan = plan_transition(&a, &b, 0, 1, &CostTable::default());
        assert_eq!(plan.kind, TransitionKind::OneToOne);
        let actions: Vec<StepAction> = plan.steps.iter().map(|s| s.action).collect();
        assert_eq!(
            actions,
            vec![
                StepAction::InterpolateVia,
                StepAction::InterpolateVia,
                StepAction::Morph
            ]
        );
        schedule(&mut plan, 4000, 1000, 500);
        assert_eq!(plan.duration_ms, 1000);
        assert_eq!(
            plan.steps
                .iter()
                .map(|s| (s.start_ms, s.duration_ms))
                .collect::<Vec<_>>(),
            vec![(0, 333), (333, 333), (666, 334)]
        );
    }

    #[test]
    fn pair_cases() {
        let single = chart(DataFact::new(FactType::Trend, &["a"]).with_breakdowns(&["Month"]), 0);
        let pair = chart(
            DataFact::new(FactType::Comparison, &["b", "a"]).with_breakdowns(&["Month"]),
            1,
        );
        let pair2 = chart(
            DataFact::new(FactType::Comparison, &["c", "a"]).with_breakdowns(&["Month"]),
            1,
        );
        let c = CostTable::default();
        let up = plan_transition(&single, &pair, 0, 1, &c);
        assert_eq!(up.kind, TransitionKind::OneToTwo);
        // `a` sits in the second slot of the pair, so that part morphs.
        assert_eq!(up.steps[0].to.as_deref(), Some("f1.1"));
        assert_eq!(up.steps[1].action, StepAction::Enter);
        let down = plan_transition(&pair, &single, 0, 1, &c);
        assert_eq!(down.kind, TransitionKind::TwoToOne);
        assert_eq!(down.steps[0].action, StepAction::Exit);
        assert_eq!(down.steps[0].from.as_deref(), Some("f0.0"));
        let both = plan_transition(&pair, &pair2, 0, 1, &c);
        assert_eq!(both.kind, TransitionKind::TwoToTwo);
        assert!(both.steps.iter().all(|s| s.phase == 0 && s.action == StepAction::Morph));
    }

    #[test]
    fn single_clause_story() {
        let a = chart(DataFact::new(FactType::Value, &["a"]).with_breakdowns(&["Month"]), 0);
        let frames = vec![FrameInput {
            clause_id: 0,
            text: "One.".into(),
            chart: a,
            role: FrameRole::Chart,
        }];
        let cfg = TimelineConfig::default();
        let tl = compute_timeline(&["One."], None, &cfg);
        let sb = assemble_storyboard(&frames, &tl, &table(), &CostTable::default(), &cfg).unwrap();
        assert_eq!((sb.frames.len(), sb.transitions.len(), sb.total_ms), (1, 0, 500));
    }

    #[test]
    fn short_frame_clamps_transition() {
        let a = chart(DataFact::new(FactType::Value, &["a"]).with_breakdowns(&["Month"]), 0);
        let b = chart(DataFact::new(FactType::Trend, &["a"]).with_breakdowns(&["Month"]), 0);
        let frames: Vec<FrameInput> = [a, b]
            .into_iter()
            .enumerate()
            .map(|(i, chart)| FrameInput {
                clause_id: i,
                text: "x".into(),
                chart,
                role: FrameRole::Chart,
            })
            .collect();
        let tl = Timeline {
            intervals: vec![(0, 2000), (2000, 2300)],
            audio_file: None,
        };
        let sb = assemble_storyboard(
            &frames,
            &tl,
            &table(),
            &CostTable::default(),
            &TimelineConfig::default(),
        )
        .unwrap();
        assert_eq!(sb.transitions[0].start_ms, 2000);
        assert_eq!(sb.transitions[0].duration_ms, 300);
    }

    #[test]
    fn skeletons_and_repeats_resolve() {
        let a = chart(
            DataFact::new(FactType::Value, &["a"])
                .with_breakdowns(&["Month"])
                .with_focus("Month", &["Jan"]),
            0,
        );
        let cands = vec![
            vec![Candidate::Skeleton],
            vec![Candidate::Chart { spec: a.clone() }],
            vec![Candidate::RepeatPrevious],
        ];
        let clauses: Vec<(usize, String)> = (0..3).map(|i| (i, format!("c{i}"))).collect();
        let frames = frames_from_selection(&cands, &[0, 0, 0], &clauses).unwrap();
        assert_eq!(frames[0].role, FrameRole::Skeleton);
        assert_eq!(frames[0].chart, a.skeleton());
        assert_eq!(frames[2].chart, a);
        assert_eq!(
            frames_from_selection(&[vec![Candidate::Skeleton]], &[0], &clauses[..1]),
            Err(AssemblyError::NoCharts)
        );
    }
}
