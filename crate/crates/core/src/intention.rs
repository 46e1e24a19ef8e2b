//! Intention values: the probability that, starting from a state, the agent
//! eventually executes a fulfilling action of a desire from inside its region.
//!
//! With `F(s)` the fulfilling action set at `s`,
//!
//! ```text
//! I(s) = Σ_{a∈F(s)} P(a|s) + γ Σ_{a∉F(s)} P(a|s) Σ_{s'} P(s'|s,a) I(s')
//! ```
//!
//! Fulfilment absorbs, terminal-only actions leak their mass, and value
//! iteration from `I ≡ 0` converges monotonically to the least fixed point.
//! [`exact_intentions`] solves the same system directly and serves as the
//! verification oracle.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desires::{AnyDesire, DesireKind, DesireSpec, Goal, KindFilter, Registry};
use crate::graph::{Dynamics, PolicyGraph};
use crate::state::DiscreteState;

#[derive(Debug, Error, PartialEq)]
pub enum IntentionError {
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("`{desire}` did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        desire: String,
        iterations: usize,
        residual: f64,
    },
    #[error("graph has {states} states; the exact solver accepts at most {limit}")]
    TooLarge { states: usize, limit: usize },
    #[error("singular system while solving `{0}`")]
    Singular(String),
    #[error("unknown desire `{0}`")]
    UnknownDesire(String),
    #[error("state never observed: {0}")]
    UnknownState(DiscreteState),
    #[error("invalid intention table: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default = "one")]
    pub discount: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iter: 100_000,
            discount: 1.0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), IntentionError> {
        if !(self.tol > 0.0) {
            return Err(IntentionError::InvalidTolerance(self.tol));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(IntentionError::InvalidDiscount(self.discount));
        }
        Ok(())
    }
}

/// The one-step system `x = b + W x` for a goal.
#[derive(Debug, Clone)]
pub struct FulfilmentSystem {
    /// One-step fulfilment probability per state.
    pub immediate: Vec<f64>,
    /// Non-fulfilling continuation `(successor, weight)` per state.
    pub continuation: Vec<Vec<(usize, f64)>>,
}

impl FulfilmentSystem {
    pub fn new(dynamics: &Dynamics, goal: &dyn Goal, discount: f64) -> Self {
        let mut immediate = Vec::with_capacity(dynamics.len());
        let mut continuation = Vec::with_capacity(dynamics.len());
        for (state, rows) in dynamics.states.iter().zip(&dynamics.rows) {
            let fulfilling = goal.fulfilling(state);
            let mut b = 0.0;
            let mut next: BTreeMap<usize, f64> = BTreeMap::new();
            for row in rows {
                if fulfilling.contains(row.action) {
                    b += row.prob;
                } else {
                    for (j, p) in &row.successors {
                        *next.entry(*j).or_default() += discount * row.prob * p;
                    }
                }
            }
            immediate.push(b);
            continuation.push(next.into_iter().collect());
        }
        FulfilmentSystem {
            immediate,
            continuation,
        }
    }

    pub fn len(&self) -> usize {
        self.immediate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.immediate.is_empty()
    }

    /// States from which fulfilment has positive probability.
    pub fn can_fulfil(&self) -> Vec<bool> {
        let n = self.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, row) in self.continuation.iter().enumerate() {
            for (j, w) in row {
                if *w > 0.0 {
                    preds[*j].push(i);
                }
            }
        }
        let mut reach: Vec<bool> = self.immediate.iter().map(|b| *b > 0.0).collect();
        let mut stack: Vec<usize> = (0..n).filter(|i| reach[*i]).collect();
        while let Some(j) = stack.pop() {
            for &i in &preds[j] {
                if !reach[i] {
                    reach[i] = true;
                    stack.push(i);
                }
            }
        }
        reach
    }
}

/// Jacobi value iteration from zero.
pub struct ValueIteration<'a> {
    system: &'a FulfilmentSystem,
    values: Vec<f64>,
    scratch: Vec<f64>,
    pub iterations: usize,
}

impl<'a> ValueIteration<'a> {
    pub fn new(system: &'a FulfilmentSystem) -> Self {
        ValueIteration {
            system,
            values: vec![0.0; system.len()],
            scratch: vec![0.0; system.len()],
            iterations: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One sweep; returns the max-norm change.
    pub fn step(&mut self) -> f64 {
        let mut residual: f64 = 0.0;
        for i in 0..self.values.len() {
            let cont: f64 = self.system.continuation[i]
                .iter()
                .map(|(j, w)| w * self.values[*j])
                .sum();
            let v = (self.system.immediate[i] + cont).min(1.0);
            residual = residual.max((v - self.values[i]).abs());
            self.scratch[i] = v;
        }
        std::mem::swap(&mut self.values, &mut self.scratch);
        self.iterations += 1;
        residual
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn solve_iterative(
    dynamics: &Dynamics,
    goal: &dyn Goal,
    cfg: &SolverConfig,
) -> Result<Solution, IntentionError> {
    cfg.validate()?;
    let system = FulfilmentSystem::new(dynamics, goal, cfg.discount);
    let mut vi = ValueIteration::new(&system);
    let mut residual = f64::INFINITY;
    while vi.iterations < cfg.max_iter {
        residual = vi.step();
        if residual <= cfg.tol {
            return Ok(Solution {
                values: vi.values,
                iterations: vi.iterations,
                residual,
            });
        }
    }
    Err(IntentionError::NonConvergence {
        desire: goal.name().to_string(),
        iterations: vi.iterations,
        residual,
    })
}

/// Largest graph the dense oracle accepts.
pub const EXACT_STATE_LIMIT: usize = 2000;

/// Direct linear solve of `(I - W) x = b` on the states that can fulfil;
/// the rest are exactly zero.
pub fn exact_intentions(
    dynamics: &Dynamics,
    goal: &dyn Goal,
    discount: f64,
) -> Result<Vec<f64>, IntentionError> {
    if dynamics.len() > EXACT_STATE_LIMIT {
        return Err(IntentionError::TooLarge {
            states: dynamics.len(),
            limit: EXACT_STATE_LIMIT,
        });
    }
    let system = FulfilmentSystem::new(dynamics, goal, discount);
    let live = system.can_fulfil();
    let index: Vec<Option<usize>> = {
        let mut k = 0;
        live.iter()
            .map(|l| {
                l.then(|| {
                    k += 1;
                    k - 1
                })
            })
            .collect()
    };
    let m = live.iter().filter(|l| **l).count();
    let mut values = vec![0.0; dynamics.len()];
    if m == 0 {
        return Ok(values);
    }
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (i, row) in system.continuation.iter().enumerate() {
        let Some(r) = index[i] else { continue };
        b[r] = system.immediate[i];
        for (j, w) in row {
            if let Some(c) = index[*j] {
                a[(r, c)] -= w;
            }
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| IntentionError::Singular(goal.name().to_string()))?;
    for (i, slot) in index.iter().enumerate() {
        if let Some(r) = slot {
            values[i] = x[*r].clamp(0.0, 1.0);
        }
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Safe,
    Unsafe,
    /// Any-desire aggregate over the filtered kinds.
    Aggregate(KindFilter),
}

impl ColumnKind {
    pub fn of(kind: DesireKind) -> Self {
        match kind {
            DesireKind::Safe => ColumnKind::Safe,
            DesireKind::Unsafe => ColumnKind::Unsafe,
        }
    }

    pub fn is_aggregate(self) -> bool {
        matches!(self, ColumnKind::Aggregate(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            ColumnKind::Safe => "safe",
            ColumnKind::Unsafe => "unsafe",
            ColumnKind::Aggregate(f) => f.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentionColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `I_d(s)` for every registered desire plus the any-desire aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentionTable {
    states: Vec<DiscreteState>,
    columns: Vec<IntentionColumn>,
    registry: Registry,
    solver: SolverConfig,
}

impl IntentionTable {
    pub fn compute(
        graph: &PolicyGraph,
        registry: &Registry,
        cfg: &SolverConfig,
    ) -> Result<Self, IntentionError> {
        cfg.validate()?;
        let dynamics = graph.dynamics();
        let any: Vec<AnyDesire<'_>> = [KindFilter::Safe, KindFilter::Unsafe, KindFilter::All]
            .into_iter()
            .map(|filter| AnyDesire { registry, filter })
            .collect();
        let mut goals: Vec<(&(dyn Goal + Sync), ColumnKind)> = registry
            .desires()
            .iter()
            .map(|d| (d as &(dyn Goal + Sync), ColumnKind::of(d.kind)))
            .collect();
        goals.extend(
            any.iter()
                .map(|g| (g as &(dyn Goal + Sync), ColumnKind::Aggregate(g.filter))),
        );

        let results: Vec<Result<Solution, IntentionError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = goals
                .iter()
                .map(|(goal, _)| {
                    let dynamics = &dynamics;
                    scope.spawn(move || solve_iterative(dynamics, *goal, cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect()
        });
        let mut columns = Vec::with_capacity(goals.len());
        for ((goal, kind), result) in goals.iter().zip(results) {
            let sol = result?;
            columns.push(IntentionColumn {
                name: goal.name().to_string(),
                kind: *kind,
                values: sol.values,
                iterations: sol.iterations,
                residual: sol.residual,
            });
        }
        Ok(IntentionTable {
            states: dynamics.states,
            columns,
            registry: registry.clone(),
            solver: *cfg,
        })
    }

    pub fn states(&self) -> &[DiscreteState] {
        &self.states
    }

    pub fn columns(&self) -> &[IntentionColumn] {
        &self.columns
    }

    /// Columns for registered desires, aggregates excluded.
    pub fn desire_columns(&self) -> impl Iterator<Item = &IntentionColumn> {
        self.columns.iter().filter(|c| !c.kind.is_aggregate())
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn column(&self, name: &str) -> Result<&IntentionColumn, IntentionError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| IntentionError::UnknownDesire(name.to_string()))
    }

    pub fn index_of(&self, state: &DiscreteState) -> Option<usize> {
        self.states.binary_search(state).ok()
    }

    pub fn value(&self, desire: &str, state: &DiscreteState) -> Result<f64, IntentionError> {
        let col = self.column(desire)?;
        let i = self
            .index_of(state)
            .ok_or(IntentionError::UnknownState(*state))?;
        Ok(col.values[i])
    }

    /// The desire spec behind a column; `None` for aggregates.
    pub fn spec(&self, desire: &str) -> Option<&DesireSpec> {
        self.registry.get(desire).ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TableDoc::from(self)).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IntentionError> {
        let doc: TableDoc =
            serde_json::from_str(text).map_err(|e| IntentionError::Format(e.to_string()))?;
        doc.try_into()
    }
}

/// Round to 12 significant digits.
fn round_sig(v: f64) -> f64 {
    format!("{v:.11e}").parse().expect("formatted float parses")
}

#[derive(Serialize, Deserialize)]
struct ColumnDoc {
    name: String,
    kind: ColumnKind,
    iterations: usize,
    residual: f64,
}

#[derive(Serialize, Deserialize)]
struct RowDoc {
    desire: String,
    state: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    solver: SolverConfig,
    desires: Vec<DesireSpec>,
    columns: Vec<ColumnDoc>,
    rows: Vec<RowDoc>,
}

impl From<&IntentionTable> for TableDoc {
    fn from(t: &IntentionTable) -> Self {
        let mut cols: Vec<&IntentionColumn> = t.columns.iter().collect();
        cols.sort_by(|a, b| a.name.cmp(&b.name));
        let rows = cols
            .iter()
            .flat_map(|c| {
                t.states.iter().zip(&c.values).map(|(s, v)| RowDoc {
                    desire: c.name.clone(),
                    state: s.key(),
                    value: round_sig(*v),
                })
            })
            .collect();
        TableDoc {
            solver: t.solver,
            desires: t.registry.desires().to_vec(),
            columns: t
                .columns
                .iter()
                .map(|c| ColumnDoc {
                    name: c.name.clone(),
                    kind: c.kind,
                    iterations: c.iterations,
                    residual: c.residual,
                })
                .collect(),
            rows,
        }
    }
}

impl TryFrom<TableDoc> for IntentionTable {
    type Error = IntentionError;

    fn try_from(doc: TableDoc) -> Result<Self, IntentionError> {
        let fmt = IntentionError::Format;
        let registry = Registry::new(doc.desires).map_err(|e| fmt(e.to_string()))?;
        let mut by_col: BTreeMap<&str, BTreeMap<DiscreteState, f64>> = BTreeMap::new();
        for r in &doc.rows {
            let s: DiscreteState = r.state.parse().map_err(|e| fmt(format!("{e}")))?;
            if !(0.0..=1.0).contains(&r.value) {
                return Err(fmt(format!("value {} outside [0, 1]", r.value)));
            }
            by_col.entry(&r.desire).or_default().insert(s, r.value);
        }
        let states: Vec<DiscreteState> = by_col
            .values()
            .next()
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default();
        let mut columns = Vec::new();
        for c in &doc.columns {
            let values = by_col
                .get(c.name.as_str())
                .ok_or_else(|| fmt(format!("no rows for `{}`", c.name)))?;
            if values.len() != states.len() || !values.keys().eq(states.iter()) {
                return Err(fmt(format!("`{}` does not cover every state", c.name)));
            }
            columns.push(IntentionColumn {
                name: c.name.clone(),
                kind: c.kind,
                values: values.values().copied().collect(),
                iterations: c.iterations,
                residual: c.residual,
            });
        }
        Ok(IntentionTable {
            states,
            columns,
            registry,
            solver: doc.solver,
        })
    }
}
