//! Telic questions over an intention-aware policy graph: what the agent
//! intends in a state, why it would take an action, and how it plans to
//! fulfil a desire. Also per-scene intention traces.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::desires::{AnyDesire, Goal, KindFilter};
use crate::graph::{GraphError, PolicyGraph};
use crate::intention::{IntentionError, IntentionTable};
use crate::state::{ActionLabel, DiscreteState, Predicate};
use crate::trajectory::Trajectory;

/// Changes smaller than this are treated as zero.
pub const EPS: f64 = 1e-12;

/// Threshold for an intention increase: values are only as precise as the
/// solver tolerance they were computed with.
pub fn increase_threshold(table: &IntentionTable) -> f64 {
    (100.0 * table.solver().tol).max(EPS)
}

#[derive(Debug, Error, PartialEq)]
pub enum QaError {
    #[error("state never observed: {0}")]
    UnknownState(DiscreteState),
    #[error("unknown desire `{0}`")]
    UnknownDesire(String),
    #[error("step {step} of scene `{scene}` is not in the intention table")]
    TraceStateMissing { scene: String, step: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Intention(#[from] IntentionError),
}

fn registered_value(table: &IntentionTable, desire: &str, i: usize) -> f64 {
    table.column(desire).map(|c| c.values[i]).unwrap_or(0.0)
}

fn index(table: &IntentionTable, s: &DiscreteState) -> Result<usize, QaError> {
    table.index_of(s).ok_or(QaError::UnknownState(*s))
}

/// Registered desires with `I_d(s) ≥ C` and `I_d(s) > 0`, strongest first.
pub fn ask_what(
    table: &IntentionTable,
    s: &DiscreteState,
    c: f64,
) -> Result<Vec<(String, f64)>, QaError> {
    let i = index(table, s)?;
    let mut out: Vec<(String, f64)> = table
        .desire_columns()
        .map(|col| (col.name.clone(), col.values[i]))
        .filter(|(_, v)| *v >= c && *v > 0.0)
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WhyTier {
    ExpectedIncrease,
    ProbabilisticIncrease,
    Unintentional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhyAnswer {
    pub desire: String,
    pub tier: WhyTier,
    /// `P(I_d(s') > I_d(s) | s, a)`; 1 when the action fulfils the desire.
    pub probability_of_increase: f64,
    /// Mean increase over the increasing successors; `1 - I_d(s)` when fulfilling.
    pub conditional_increase: f64,
    /// `Σ P(s'|s,a) I_d(s') - I_d(s)`; `1 - I_d(s)` when fulfilling.
    pub expected_change: f64,
    pub fulfils: bool,
}

/// Three decimals, or scientific notation below 0.001.
fn fmt_small(v: f64) -> String {
    if v.abs() < 1e-3 && v != 0.0 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

impl WhyAnswer {
    pub fn sentence(&self) -> String {
        let d = &self.desire;
        match self.tier {
            WhyTier::ExpectedIncrease if self.fulfils => format!("In order to fulfil {d}"),
            WhyTier::ExpectedIncrease => format!(
                "For the purpose of furthering {d}, as it yields an expected intention increase of {}",
                fmt_small(self.expected_change)
            ),
            WhyTier::ProbabilisticIncrease => format!(
                "For the purpose of furthering {d}, as it has a {:.3} probability of an expected intention increase of {}",
                self.probability_of_increase,
                fmt_small(self.conditional_increase)
            ),
            WhyTier::Unintentional => format!("Not in pursuit of {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhyReport {
    pub state: DiscreteState,
    pub action: ActionLabel,
    /// Some registered desire has `I_d(s) ≥ C`.
    pub attributed: bool,
    /// No attributed intention at `s`, or no desire reaches a tier.
    pub unintentional: bool,
    /// Every registered desire in registry order.
    pub answers: Vec<WhyAnswer>,
}

impl WhyReport {
    /// Tiered answers, expected increases first, then by magnitude.
    pub fn reasons(&self) -> Vec<&WhyAnswer> {
        let mut r: Vec<&WhyAnswer> = self
            .answers
            .iter()
            .filter(|a| a.tier != WhyTier::Unintentional)
            .collect();
        r.sort_by(|a, b| {
            a.tier
                .cmp(&b.tier)
                .then_with(|| b.fulfils.cmp(&a.fulfils))
                .then_with(|| b.conditional_increase.total_cmp(&a.conditional_increase))
                .then_with(|| a.desire.cmp(&b.desire))
        });
        r
    }

    pub fn render(&self) -> String {
        if self.unintentional {
            return format!(
                "{} in this state is unintentional with respect to the policy graph and the registered desires",
                self.action
            );
        }
        let mut out = String::new();
        for a in self.reasons() {
            writeln!(out, "{} {}", self.action, a.sentence()).unwrap();
        }
        out.trim_end().to_string()
    }
}

pub fn ask_why(
    g: &PolicyGraph,
    table: &IntentionTable,
    s: &DiscreteState,
    a: ActionLabel,
    c: f64,
) -> Result<WhyReport, QaError> {
    let i = index(table, s)?;
    let succ = g.successor_distribution(s, a)?;
    let succ_idx: Vec<(usize, f64)> = succ
        .iter()
        .map(|(t, p)| index(table, t).map(|j| (j, *p)))
        .collect::<Result<_, _>>()?;
    let eps = increase_threshold(table);
    let mut attributed = false;
    let mut answers = Vec::new();
    for col in table.desire_columns() {
        let here = col.values[i];
        attributed |= here >= c && here > 0.0;
        let spec = table
            .spec(&col.name)
            .ok_or_else(|| QaError::UnknownDesire(col.name.clone()))?;
        let answer = if spec.fulfilled_by(s, a) {
            WhyAnswer {
                desire: col.name.clone(),
                tier: WhyTier::ExpectedIncrease,
                probability_of_increase: 1.0,
                conditional_increase: 1.0 - here,
                expected_change: 1.0 - here,
                fulfils: true,
            }
        } else {
            let expected: f64 = succ_idx.iter().map(|(j, p)| p * col.values[*j]).sum();
            let delta = expected - here;
            let (mut p_up, mut gain) = (0.0, 0.0);
            for (j, p) in &succ_idx {
                let d = col.values[*j] - here;
                if d > eps {
                    p_up += p;
                    gain += p * d;
                }
            }
            let tier = if delta > eps {
                WhyTier::ExpectedIncrease
            } else if p_up > 0.0 {
                WhyTier::ProbabilisticIncrease
            } else {
                WhyTier::Unintentional
            };
            let (p_up, cond) = if tier == WhyTier::Unintentional {
                (0.0, 0.0)
            } else {
                (p_up, gain / p_up)
            };
            WhyAnswer {
                desire: col.name.clone(),
                tier,
                probability_of_increase: p_up,
                conditional_increase: cond,
                expected_change: delta,
                fulfils: false,
            }
        };
        answers.push(answer);
    }
    let any_tier = answers.iter().any(|a| a.tier != WhyTier::Unintentional);
    Ok(WhyReport {
        state: *s,
        action: a,
        attributed,
        unintentional: !attributed || !any_tier,
        answers,
    })
}

/// Resolve a table column name to its fulfilment goal.
pub fn resolve_goal<'a>(
    table: &'a IntentionTable,
    desire: &str,
) -> Result<Box<dyn Goal + 'a>, QaError> {
    if let Some(spec) = table.spec(desire) {
        return Ok(Box::new(spec.clone()));
    }
    [KindFilter::All, KindFilter::Safe, KindFilter::Unsafe]
        .into_iter()
        .find(|f| f.aggregate_name() == desire)
        .map(|filter| {
            Box::new(AnyDesire {
                registry: table.registry(),
                filter,
            }) as Box<dyn Goal>
        })
        .ok_or_else(|| QaError::UnknownDesire(desire.to_string()))
}

pub type Assignment = (Predicate, &'static str);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanStep {
    pub action: ActionLabel,
    pub removed: Vec<Assignment>,
    pub added: Vec<Assignment>,
    pub intention_after: f64,
    /// The step executes a fulfilling action; the plan ends here.
    pub fulfils: bool,
    /// State the step starts from.
    pub from: DiscreteState,
    /// Successor state; `None` on the fulfilling step.
    pub to: Option<DiscreteState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoPlan {
    /// The greedy walk returned to a visited state.
    Cycle,
    /// Fulfilment needs more than `max_len` steps.
    TooLong,
    /// No observed continuation leads towards fulfilment.
    DeadEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Plan {
    Steps(Vec<PlanStep>),
    NoPlan(NoPlan),
}

impl Plan {
    pub fn steps(&self) -> Option<&[PlanStep]> {
        match self {
            Plan::Steps(s) => Some(s),
            Plan::NoPlan(_) => None,
        }
    }

    pub fn render(&self, desire: &str) -> String {
        match self {
            Plan::NoPlan(reason) => format!("no plan to fulfil {desire} ({reason:?})"),
            Plan::Steps(steps) => {
                let mut out = String::new();
                for (k, st) in steps.iter().enumerate() {
                    let fmt = |xs: &[Assignment]| {
                        xs.iter()
                            .map(|(p, v)| format!("{p}({v})"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    };
                    write!(out, "{}. {}", k + 1, st.action).unwrap();
                    if st.fulfils {
                        write!(out, " fulfils {desire}").unwrap();
                    } else {
                        if !st.removed.is_empty() {
                            write!(out, "; remove {}", fmt(&st.removed)).unwrap();
                        }
                        if !st.added.is_empty() {
                            write!(out, "; add {}", fmt(&st.added)).unwrap();
                        }
                    }
                    writeln!(out, "; I = {:.3}", st.intention_after).unwrap();
                }
                out.trim_end().to_string()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanObjective {
    /// Follow the successor with the highest intention.
    #[default]
    Greedy,
    /// Highest-probability observed path ending in a fulfilling action.
    MostProbable,
}

fn fulfilling_choice(
    g: &PolicyGraph,
    goal: &dyn Goal,
    s: &DiscreteState,
) -> Option<(ActionLabel, f64)> {
    let set = goal.fulfilling(s);
    let dist = g.action_distribution(s).ok()?;
    dist.into_iter()
        .filter(|(a, p)| set.contains(*a) && *p > 0.0)
        .fold(
            None,
            |best: Option<(ActionLabel, f64)>, (a, p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((a, p)),
            },
        )
}

fn transition_step(
    from: &DiscreteState,
    action: ActionLabel,
    to: &DiscreteState,
    value: f64,
) -> PlanStep {
    let (removed, added) = from.diff(to);
    PlanStep {
        action,
        removed,
        added,
        intention_after: value,
        fulfils: false,
        from: *from,
        to: Some(*to),
    }
}

fn fulfilling_step(from: &DiscreteState, action: ActionLabel) -> PlanStep {
    PlanStep {
        action,
        removed: vec![],
        added: vec![],
        intention_after: 1.0,
        fulfils: true,
        from: *from,
        to: None,
    }
}

/// Observed `(action, successor, P(a|s) P(s'|s,a), P(s'|s,a))` out of `s`.
fn outgoing(g: &PolicyGraph, s: &DiscreteState) -> Vec<(ActionLabel, DiscreteState, f64, f64)> {
    let mut out = Vec::new();
    let Ok(actions) = g.action_distribution(s) else {
        return out;
    };
    for (a, pa) in actions {
        if let Ok(succ) = g.successor_distribution(s, a) {
            for (t, p) in succ {
                out.push((a, t, pa * p, p));
            }
        }
    }
    out
}

pub fn ask_how(
    g: &PolicyGraph,
    table: &IntentionTable,
    desire: &str,
    s: &DiscreteState,
    max_len: usize,
) -> Result<Plan, QaError> {
    ask_how_with(g, table, desire, s, max_len, PlanObjective::Greedy)
}

pub fn ask_how_with(
    g: &PolicyGraph,
    table: &IntentionTable,
    desire: &str,
    s: &DiscreteState,
    max_len: usize,
    objective: PlanObjective,
) -> Result<Plan, QaError> {
    index(table, s)?;
    let col = table.column(desire)?;
    let goal = resolve_goal(table, desire)?;
    match objective {
        PlanObjective::Greedy => Ok(greedy_plan(
            g,
            table,
            &col.values,
            goal.as_ref(),
            s,
            max_len,
        )),
        PlanObjective::MostProbable => Ok(probable_plan(
            g,
            table,
            &col.values,
            goal.as_ref(),
            s,
            max_len,
        )),
    }
}

fn greedy_plan(
    g: &PolicyGraph,
    table: &IntentionTable,
    values: &[f64],
    goal: &dyn Goal,
    s: &DiscreteState,
    max_len: usize,
) -> Plan {
    let value = |t: &DiscreteState| table.index_of(t).map_or(0.0, |j| values[j]);
    let mut steps = Vec::new();
    let mut visited = BTreeSet::from([*s]);
    let mut cur = *s;
    loop {
        if steps.len() >= max_len {
            return Plan::NoPlan(NoPlan::TooLong);
        }
        if let Some((a, _)) = fulfilling_choice(g, goal, &cur) {
            steps.push(fulfilling_step(&cur, a));
            return Plan::Steps(steps);
        }
        let best = outgoing(g, &cur).into_iter().fold(
            None,
            |best: Option<(ActionLabel, DiscreteState, f64, f64)>, (a, t, _, p)| {
                let v = value(&t);
                match best {
                    Some((_, _, bv, bp)) if bv > v || (bv == v && bp >= p) => best,
                    _ => Some((a, t, v, p)),
                }
            },
        );
        let Some((a, next, v, _)) = best else {
            return Plan::NoPlan(NoPlan::DeadEnd);
        };
        if v <= 0.0 {
            return Plan::NoPlan(NoPlan::DeadEnd);
        }
        if !visited.insert(next) {
            return Plan::NoPlan(NoPlan::Cycle);
        }
        steps.push(transition_step(&cur, a, &next, v));
        cur = next;
    }
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    hops: usize,
    state: DiscreteState,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.hops.cmp(&self.hops))
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on `-ln P` over observed transitions, closed by the fulfilling action.
fn probable_plan(
    g: &PolicyGraph,
    table: &IntentionTable,
    values: &[f64],
    goal: &dyn Goal,
    s: &DiscreteState,
    max_len: usize,
) -> Plan {
    let value = |t: &DiscreteState| table.index_of(t).map_or(0.0, |j| values[j]);
    let mut best: BTreeMap<DiscreteState, (f64, usize)> = BTreeMap::new();
    let mut parent: BTreeMap<DiscreteState, (DiscreteState, ActionLabel)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let mut done: Option<(f64, DiscreteState, ActionLabel)> = None;
    best.insert(*s, (0.0, 0));
    heap.push(Frontier {
        cost: 0.0,
        hops: 0,
        state: *s,
    });
    while let Some(Frontier { cost, hops, state }) = heap.pop() {
        if best.get(&state).is_some_and(|(c, _)| *c < cost) {
            continue;
        }
        if done.as_ref().is_some_and(|(c, _, _)| *c <= cost) {
            break;
        }
        if hops < max_len {
            if let Some((a, p)) = fulfilling_choice(g, goal, &state) {
                let total = cost - p.ln();
                if done.as_ref().is_none_or(|(c, _, _)| total < *c) {
                    done = Some((total, state, a));
                }
            }
        }
        if hops + 1 >= max_len {
            continue;
        }
        for (a, t, p, _) in outgoing(g, &state) {
            let c = cost - p.ln();
            if best.get(&t).is_none_or(|(bc, _)| c < *bc) {
                best.insert(t, (c, hops + 1));
                parent.insert(t, (state, a));
                heap.push(Frontier {
                    cost: c,
                    hops: hops + 1,
                    state: t,
                });
            }
        }
    }
    let Some((_, end, action)) = done else {
        return Plan::NoPlan(NoPlan::DeadEnd);
    };
    let mut chain = Vec::new();
    let mut cur = end;
    while cur != *s {
        let (prev, a) = parent[&cur];
        chain.push(transition_step(&prev, a, &cur, value(&cur)));
        cur = prev;
    }
    chain.reverse();
    chain.push(fulfilling_step(&end, action));
    Plan::Steps(chain)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub action: ActionLabel,
    /// Aligned with [`IntentionTrace::desires`].
    pub values: Vec<f64>,
    /// Registered desires fulfilled at this step.
    pub fulfilled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentionTrace {
    pub scene_id: String,
    /// Desires whose trace reaches `min_peak` at least once.
    pub desires: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl IntentionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,action");
        for d in &self.desires {
            write!(out, ",{}", csv_quote(d)).unwrap();
        }
        out.push_str(",fulfilled\n");
        for r in &self.rows {
            write!(out, "{},{}", r.step, r.action).unwrap();
            for v in &r.values {
                write!(out, ",{v:.6}").unwrap();
            }
            writeln!(out, ",{}", csv_quote(&r.fulfilled.join(";"))).unwrap();
        }
        out
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn intention_trace(
    scene: &Trajectory,
    table: &IntentionTable,
    min_peak: f64,
) -> Result<IntentionTrace, QaError> {
    let idx: Vec<usize> = scene
        .steps
        .iter()
        .enumerate()
        .map(|(k, st)| {
            table
                .index_of(&st.state)
                .ok_or_else(|| QaError::TraceStateMissing {
                    scene: scene.scene_id.clone(),
                    step: k,
                })
        })
        .collect::<Result<_, _>>()?;
    let kept: Vec<&str> = table
        .desire_columns()
        .filter(|col| idx.iter().any(|i| col.values[*i] >= min_peak))
        .map(|col| col.name.as_str())
        .collect();
    let rows = scene
        .steps
        .iter()
        .zip(&idx)
        .enumerate()
        .map(|(k, (st, i))| TraceRow {
            step: k,
            action: st.action,
            values: kept
                .iter()
                .map(|d| registered_value(table, d, *i))
                .collect(),
            fulfilled: table
                .registry()
                .desires()
                .iter()
                .filter(|d| d.fulfilled_by(&st.state, st.action))
                .map(|d| d.name.clone())
                .collect(),
        })
        .collect();
    Ok(IntentionTrace {
        scene_id: scene.scene_id.clone(),
        desires: kept.into_iter().map(String::from).collect(),
        rows,
    })
}

/// Observed states closest to `s` in Hamming distance, nearest first.
pub fn nearest_states(g: &PolicyGraph, s: &DiscreteState, k: usize) -> Vec<(DiscreteState, usize)> {
    let mut all: Vec<(DiscreteState, usize)> = g.states().map(|t| (*t, s.hamming(t))).collect();
    all.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
