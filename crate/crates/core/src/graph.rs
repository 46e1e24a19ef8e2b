//! Frequency-counted policy graph over discrete states.
//!
//! Nodes count every observed step; edges count `(s, a, s')` triples between
//! consecutive steps. The final step of a trajectory has no successor, so it
//! contributes to the node and to `P(a|s)` but creates no edge: `P(a|s)` comes
//! from action occurrences at `s`, `P(s'|s,a)` from edge counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{ActionLabel, DiscreteState};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no observations")]
    NoObservations,
    #[error("trajectory `{0}` has no steps")]
    EmptyTrajectory(String),
    #[error("state not observed: {0}")]
    StateNotObserved(DiscreteState),
    #[error("action not observed in state: {action} at {state}")]
    ActionNotObserved {
        state: DiscreteState,
        action: ActionLabel,
    },
    #[error("invalid policy graph: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct NodeStats {
    visits: u64,
    actions: BTreeMap<ActionLabel, u64>,
}

type EdgeKey = (DiscreteState, ActionLabel, DiscreteState);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyGraph {
    nodes: BTreeMap<DiscreteState, NodeStats>,
    edges: BTreeMap<EdgeKey, u64>,
}

impl PolicyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count one trajectory into the graph.
    pub fn observe(&mut self, trajectory: &Trajectory) -> Result<(), GraphError> {
        if trajectory.steps.is_empty() {
            return Err(GraphError::EmptyTrajectory(trajectory.scene_id.clone()));
        }
        for step in &trajectory.steps {
            let node = self.nodes.entry(step.state).or_default();
            node.visits += 1;
            *node.actions.entry(step.action).or_default() += 1;
        }
        for key in trajectory.transitions() {
            *self.edges.entry(key).or_default() += 1;
        }
        Ok(())
    }

    pub fn build(trajectories: &[Trajectory]) -> Result<Self, GraphError> {
        if trajectories.is_empty() {
            return Err(GraphError::NoObservations);
        }
        let mut g = PolicyGraph::new();
        for t in trajectories {
            g.observe(t)?;
        }
        Ok(g)
    }

    /// Entrywise sum of counts.
    pub fn merge(&self, other: &PolicyGraph) -> PolicyGraph {
        let mut out = self.clone();
        for (state, stats) in &other.nodes {
            let node = out.nodes.entry(*state).or_default();
            node.visits += stats.visits;
            for (a, n) in &stats.actions {
                *node.actions.entry(*a).or_default() += n;
            }
        }
        for (key, n) in &other.edges {
            *out.edges.entry(*key).or_default() += n;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, state: &DiscreteState) -> bool {
        self.nodes.contains_key(state)
    }

    pub fn visits(&self, state: &DiscreteState) -> u64 {
        self.nodes.get(state).map_or(0, |n| n.visits)
    }

    pub fn total_visits(&self) -> u64 {
        self.nodes.values().map(|n| n.visits).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = &DiscreteState> {
        self.nodes.keys()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&DiscreteState, u64)> {
        self.nodes.iter().map(|(s, n)| (s, n.visits))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, u64)> {
        self.edges.iter().map(|(k, n)| (k, *n))
    }

    pub fn edge_count_of(
        &self,
        from: &DiscreteState,
        action: ActionLabel,
        to: &DiscreteState,
    ) -> u64 {
        self.edges.get(&(*from, action, *to)).copied().unwrap_or(0)
    }

    /// Number of times `action` was taken in `state`, with or without a successor.
    pub fn action_count(&self, state: &DiscreteState, action: ActionLabel) -> u64 {
        self.nodes
            .get(state)
            .and_then(|n| n.actions.get(&action))
            .copied()
            .unwrap_or(0)
    }

    /// Multiply every count by `factor`.
    pub fn scaled(&self, factor: u64) -> PolicyGraph {
        let mut out = self.clone();
        for node in out.nodes.values_mut() {
            node.visits *= factor;
            node.actions.values_mut().for_each(|n| *n *= factor);
        }
        out.edges.values_mut().for_each(|n| *n *= factor);
        out
    }

    pub fn action_distribution(
        &self,
        state: &DiscreteState,
    ) -> Result<BTreeMap<ActionLabel, f64>, GraphError> {
        let node = self
            .nodes
            .get(state)
            .ok_or(GraphError::StateNotObserved(*state))?;
        let total: u64 = node.actions.values().sum();
        Ok(node
            .actions
            .iter()
            .map(|(a, n)| (*a, *n as f64 / total as f64))
            .collect())
    }

    /// `P(s'|s,a)`. Empty when `a` was observed at `s` only as a terminal step.
    pub fn successor_distribution(
        &self,
        state: &DiscreteState,
        action: ActionLabel,
    ) -> Result<BTreeMap<DiscreteState, f64>, GraphError> {
        if !self.nodes.contains_key(state) {
            return Err(GraphError::StateNotObserved(*state));
        }
        if self.action_count(state, action) == 0 {
            return Err(GraphError::ActionNotObserved {
                state: *state,
                action,
            });
        }
        let succ: Vec<(DiscreteState, u64)> = self
            .edges
            .range((*state, action, DiscreteState::min())..)
            .take_while(|((s, a, _), _)| s == state && *a == action)
            .map(|((_, _, to), n)| (*to, *n))
            .collect();
        let total: u64 = succ.iter().map(|(_, n)| n).sum();
        Ok(succ
            .into_iter()
            .map(|(to, n)| (to, n as f64 / total as f64))
            .collect())
    }

    /// Index-addressed view used by the solvers.
    pub fn dynamics(&self) -> Dynamics {
        let states: Vec<DiscreteState> = self.nodes.keys().copied().collect();
        let index = |s: &DiscreteState| states.binary_search(s).expect("edge endpoint is a node");
        let mut rows: Vec<Vec<ActionRow>> = Vec::with_capacity(states.len());
        for (state, stats) in &self.nodes {
            let total: u64 = stats.actions.values().sum();
            let mut actions = Vec::with_capacity(stats.actions.len());
            for (action, count) in &stats.actions {
                let succ: Vec<(usize, u64)> = self
                    .edges
                    .range((*state, *action, DiscreteState::min())..)
                    .take_while(|((s, a, _), _)| s == state && a == action)
                    .map(|((_, _, to), n)| (index(to), *n))
                    .collect();
                let succ_total: u64 = succ.iter().map(|(_, n)| n).sum();
                actions.push(ActionRow {
                    action: *action,
                    prob: *count as f64 / total as f64,
                    successors: succ
                        .into_iter()
                        .map(|(j, n)| (j, n as f64 / succ_total as f64))
                        .collect(),
                });
            }
            rows.push(actions);
        }
        let visits = self.nodes.values().map(|n| n.visits).collect();
        Dynamics {
            states,
            visits,
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphDoc::from(self)).expect("graph serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&GraphDoc::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDoc =
            serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        doc.try_into()
    }
}

impl DiscreteState {
    fn min() -> DiscreteState {
        use crate::state::*;
        DiscreteState {
            velocity: Velocity::ALL[0],
            steering: Steering::ALL[0],
            lane_position: LanePosition::ALL[0],
            block_progress: BlockProgress::ALL[0],
            next_intersection: NextIntersection::ALL[0],
            stop_area_nearby: StopArea::ALL[0],
            crosswalk_nearby: Presence::ALL[0],
            traffic_light_nearby: Presence::ALL[0],
            pedestrian_nearby: Presence::ALL[0],
            two_wheel_nearby: Presence::ALL[0],
            objects_nearby: Presence::ALL[0],
        }
    }
}

/// One action's probability at a state and its successor distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub action: ActionLabel,
    pub prob: f64,
    /// `(state index, P(s'|s,a))`; empty for terminal-only actions.
    pub successors: Vec<(usize, f64)>,
}

/// Policy graph flattened to state indices in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub states: Vec<DiscreteState>,
    pub visits: Vec<u64>,
    pub rows: Vec<Vec<ActionRow>>,
}

impl Dynamics {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &DiscreteState) -> Option<usize> {
        self.states.binary_search(state).ok()
    }
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    state: DiscreteState,
    count: u64,
    /// Occurrences of actions that ended a trajectory, keyed by action.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    terminal: BTreeMap<ActionLabel, u64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    from: usize,
    to: usize,
    action: ActionLabel,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

impl From<&PolicyGraph> for GraphDoc {
    fn from(g: &PolicyGraph) -> Self {
        let states: Vec<&DiscreteState> = g.nodes.keys().collect();
        let index = |s: &DiscreteState| states.binary_search(&s).expect("endpoint is a node");
        let mut out_counts: BTreeMap<(DiscreteState, ActionLabel), u64> = BTreeMap::new();
        let edges = g
            .edges
            .iter()
            .map(|((from, action, to), count)| {
                *out_counts.entry((*from, *action)).or_default() += count;
                EdgeDoc {
                    from: index(from),
                    to: index(to),
                    action: *action,
                    count: *count,
                }
            })
            .collect();
        let nodes = g
            .nodes
            .iter()
            .map(|(state, stats)| NodeDoc {
                state: *state,
                count: stats.visits,
                terminal: stats
                    .actions
                    .iter()
                    .filter_map(|(a, n)| {
                        let rest = n - out_counts.get(&(*state, *a)).copied().unwrap_or(0);
                        (rest > 0).then_some((*a, rest))
                    })
                    .collect(),
            })
            .collect();
        GraphDoc { nodes, edges }
    }
}

impl TryFrom<GraphDoc> for PolicyGraph {
    type Error = GraphError;

    fn try_from(doc: GraphDoc) -> Result<Self, GraphError> {
        let states: Vec<DiscreteState> = doc.nodes.iter().map(|n| n.state).collect();
        let mut g = PolicyGraph::new();
        for n in &doc.nodes {
            let stats = NodeStats {
                visits: n.count,
                actions: n.terminal.clone(),
            };
            if g.nodes.insert(n.state, stats).is_some() {
                return Err(GraphError::Format(format!("duplicate node {}", n.state)));
            }
        }
        for e in &doc.edges {
            let (from, to) = match (states.get(e.from), states.get(e.to)) {
                (Some(f), Some(t)) => (*f, *t),
                _ => {
                    return Err(GraphError::Format(format!(
                        "edge endpoint out of range: {} -> {}",
                        e.from, e.to
                    )))
                }
            };
            if g.edges.insert((from, e.action, to), e.count).is_some() {
                return Err(GraphError::Format(format!(
                    "duplicate edge {} -> {} ({})",
                    e.from, e.to, e.action
                )));
            }
            *g.nodes
                .get_mut(&from)
                .expect("checked above")
                .actions
                .entry(e.action)
                .or_default() += e.count;
        }
        for (state, stats) in &g.nodes {
            let occurrences: u64 = stats.actions.values().sum();
            if occurrences != stats.visits {
                return Err(GraphError::Format(format!(
                    "node count {} differs from action occurrences {} at {}",
                    stats.visits, occurrences, state
                )));
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Predicate;

    fn s_a() -> DiscreteState {
        DiscreteState::default()
    }

    fn s_b() -> DiscreteState {
        DiscreteState::default().with(Predicate::Velocity, "Slow")
    }

    #[test]
    fn single_transition() {
        let t = Trajectory::from_pairs(
            "t",
            [
                (s_a(), ActionLabel::GoStraight),
                (s_b(), ActionLabel::Brake),
            ],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        assert_eq!(g.visits(&s_a()), 1);
        assert_eq!(g.visits(&s_b()), 1);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_count_of(&s_a(), ActionLabel::GoStraight, &s_b()), 1);
    }

    #[test]
    fn hand_counted_triples() {
        let t = Trajectory::from_pairs(
            "t",
            [
                (s_a(), ActionLabel::GoStraight),
                (s_a(), ActionLabel::GoStraight),
                (s_b(), ActionLabel::Stop),
            ],
        );
        let g = PolicyGraph::build(&[t.clone(), t]).unwrap();
        assert_eq!(g.edge_count_of(&s_a(), ActionLabel::GoStraight, &s_a()), 2);
        assert_eq!(g.edge_count_of(&s_a(), ActionLabel::GoStraight, &s_b()), 2);
        let succ = g
            .successor_distribution(&s_a(), ActionLabel::GoStraight)
            .unwrap();
        assert_eq!(succ[&s_a()], 0.5);
        assert_eq!(succ[&s_b()], 0.5);
        let act = g.action_distribution(&s_a()).unwrap();
        assert_eq!(act.len(), 1);
        assert_eq!(act[&ActionLabel::GoStraight], 1.0);
        assert_eq!(
            g.successor_distribution(&s_a(), ActionLabel::Brake),
            Err(GraphError::ActionNotObserved {
                state: s_a(),
                action: ActionLabel::Brake
            })
        );
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(PolicyGraph::build(&[]), Err(GraphError::NoObservations));
        let empty = Trajectory::new("e", vec![]);
        assert!(matches!(
            PolicyGraph::build(&[empty]),
            Err(GraphError::EmptyTrajectory(_))
        ));
    }

    #[test]
    fn unknown_state_is_an_error() {
        let t = Trajectory::from_pairs("t", [(s_a(), ActionLabel::Idle)]);
        let g = PolicyGraph::build(&[t]).unwrap();
        assert!(matches!(
            g.action_distribution(&s_b()),
            Err(GraphError::StateNotObserved(_))
        ));
    }

    #[test]
    fn terminal_only_action_has_empty_successors() {
        let t = Trajectory::from_pairs(
            "t",
            [(s_a(), ActionLabel::Gas), (s_a(), ActionLabel::Brake)],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        let act = g.action_distribution(&s_a()).unwrap();
        assert_eq!(act[&ActionLabel::Brake], 0.5);
        assert!(g
            .successor_distribution(&s_a(), ActionLabel::Brake)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let t = Trajectory::from_pairs(
            "t",
            [(s_a(), ActionLabel::Gas), (s_b(), ActionLabel::Brake)],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        assert_eq!(g.merge(&PolicyGraph::new()), g);
        assert_eq!(PolicyGraph::new().merge(&g), g);
    }

    #[test]
    fn json_round_trip_keeps_terminal_counts() {
        let t = Trajectory::from_pairs(
            "t",
            [
                (s_a(), ActionLabel::Gas),
                (s_b(), ActionLabel::Brake),
                (s_a(), ActionLabel::Stop),
            ],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        let json = g.to_json();
        let back = PolicyGraph::from_json(&json).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn json_rejects_inconsistent_counts() {
        let t = Trajectory::from_pairs(
            "t",
            [(s_a(), ActionLabel::Gas), (s_b(), ActionLabel::Brake)],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        v["nodes"][0]["count"] = 5.into();
        assert!(matches!(
            PolicyGraph::from_json(&v.to_string()),
            Err(GraphError::Format(_))
        ));
    }

    #[test]
    fn json_layout() {
        let t = Trajectory::from_pairs(
            "t",
            [(s_b(), ActionLabel::Gas), (s_a(), ActionLabel::Brake)],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        // s_a (Stopped) sorts before s_b (Slow)
        assert_eq!(v["nodes"][0]["state"]["Velocity"], "Stopped");
        assert_eq!(v["edges"][0]["from"], 1);
        assert_eq!(v["edges"][0]["to"], 0);
        assert_eq!(v["edges"][0]["action"], "Gas");
        assert_eq!(v["edges"][0]["count"], 1);
    }
}
