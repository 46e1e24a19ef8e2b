//! Small hand-checkable fixtures shared by tests and examples.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::desires::{ActionSet, DesireKind, DesireSpec, PredicateClause, Registry};
use crate::state::{ActionLabel, DiscreteState, Predicate};
use crate::trajectory::Trajectory;

/// The three states of the toy graph G1, distinguished by velocity.
pub fn g1_states() -> [DiscreteState; 3] {
    let at = |v| DiscreteState::default().with(Predicate::Velocity, v);
    [at("Medium"), at("Stopped"), at("High")]
}

/// Desire `d`: region `{s2}`, fulfilled by braking.
pub fn g1_desire() -> DesireSpec {
    DesireSpec {
        name: "d".to_string(),
        kind: DesireKind::Safe,
        clauses: vec![PredicateClause {
            predicate: Predicate::Velocity,
            values: ["High".to_string()].into(),
            negated: false,
        }],
        actions: [ActionLabel::Brake].into_iter().collect::<ActionSet>(),
    }
}

pub fn g1_registry() -> Registry {
    Registry::new(vec![g1_desire()]).expect("single desire registry")
}

/// Trajectories whose graph is G1.
///
/// `s0` always goes straight, half the time to `s1` and half to `s2`; `s1`
/// idles in place; `s2` brakes with probability 0.8 and otherwise
/// accelerates back to `s0`. Visits are 10/5/5.
pub fn g1_trajectories() -> Vec<Trajectory> {
    use ActionLabel::*;
    let [s0, s1, s2] = g1_states();
    let mut out = vec![
        vec![(s2, Gas), (s0, GoStraight)],
        vec![(s0, GoStraight)],
        vec![(s0, GoStraight), (s1, Idle), (s1, Idle)],
    ];
    for _ in 0..3 {
        out.push(vec![(s0, GoStraight), (s1, Idle)]);
    }
    for _ in 0..4 {
        out.push(vec![(s0, GoStraight), (s2, Brake)]);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, pairs)| Trajectory::from_pairs(format!("g1-{i}"), pairs))
        .collect()
}

/// A uniformly random full predicate assignment.
pub fn random_state<R: Rng>(rng: &mut R) -> DiscreteState {
    let mut s = DiscreteState::default();
    for p in Predicate::ALL {
        let values = p.values();
        let v = values[rng.gen_range(0..values.len())];
        s.set(p, v).expect("listed value");
    }
    s
}

/// `n` distinct random states.
pub fn random_states<R: Rng>(rng: &mut R, n: usize) -> Vec<DiscreteState> {
    let mut seen = BTreeSet::new();
    while seen.len() < n {
        seen.insert(random_state(rng));
    }
    let mut out: Vec<_> = seen.into_iter().collect();
    out.shuffle(rng);
    out
}

fn random_action<R: Rng>(rng: &mut R, palette: &[ActionLabel]) -> ActionLabel {
    palette[rng.gen_range(0..palette.len())]
}

/// Random walks over a pool of at most `max_states` states. Each state uses
/// a small action palette so that distributions have repeated mass.
pub fn random_trajectories<R: Rng>(rng: &mut R, max_states: usize) -> Vec<Trajectory> {
    let n = rng.gen_range(1..=max_states.max(1));
    let pool = random_states(rng, n);
    let palettes: Vec<Vec<ActionLabel>> = (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            (0..k)
                .map(|_| ActionLabel::ALL[rng.gen_range(0..ActionLabel::ALL.len())])
                .collect()
        })
        .collect();
    let n_traj = rng.gen_range(1..=(n / 2).max(3));
    (0..n_traj)
        .map(|t| {
            let len = rng.gen_range(1..=12);
            let mut i = rng.gen_range(0..n);
            let mut pairs = Vec::with_capacity(len);
            for _ in 0..len {
                pairs.push((pool[i], random_action(rng, &palettes[i])));
                // Mostly local moves so the graph has cycles and shared successors.
                i = if rng.gen_bool(0.7) {
                    (i + rng.gen_range(0..3)) % n
                } else {
                    rng.gen_range(0..n)
                };
            }
            Trajectory::from_pairs(format!("rand-{t}"), pairs)
        })
        .collect()
}

/// Random walks that only move to higher-indexed states, so the graph is a DAG.
pub fn random_dag_trajectories<R: Rng>(rng: &mut R, max_states: usize) -> Vec<Trajectory> {
    let n = rng.gen_range(2..=max_states.max(2));
    let pool = random_states(rng, n);
    let n_traj = rng.gen_range(1..=6);
    (0..n_traj)
        .map(|t| {
            let mut i = rng.gen_range(0..n);
            let mut pairs = Vec::new();
            loop {
                let a = ActionLabel::ALL[rng.gen_range(0..4)];
                pairs.push((pool[i], a));
                if i + 1 >= n || rng.gen_bool(0.15) {
                    break;
                }
                i = rng.gen_range(i + 1..n);
            }
            Trajectory::from_pairs(format!("dag-{t}"), pairs)
        })
        .collect()
}

/// A desire with one or two random clauses and a random non-empty action set.
pub fn random_desire<R: Rng>(rng: &mut R, name: &str) -> DesireSpec {
    let n_clauses = rng.gen_range(1..=2);
    let mut predicates = Predicate::ALL.to_vec();
    predicates.shuffle(rng);
    let clauses = predicates[..n_clauses]
        .iter()
        .map(|&p| {
            let values = p.values();
            let mut chosen: BTreeSet<String> = values
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .map(|v| v.to_string())
                .collect();
            if chosen.is_empty() {
                chosen.insert(values[0].to_string());
            }
            PredicateClause {
                predicate: p,
                values: chosen,
                negated: rng.gen_bool(0.2),
            }
        })
        .collect();
    let mut actions: ActionSet = ActionLabel::ALL
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.3))
        .collect();
    if actions.is_empty() {
        actions.insert(ActionLabel::Brake);
    }
    DesireSpec {
        name: name.to_string(),
        kind: if rng.gen_bool(0.7) {
            DesireKind::Safe
        } else {
            DesireKind::Unsafe
        },
        clauses,
        actions,
    }
}

pub fn random_registry<R: Rng>(rng: &mut R, n: usize) -> Registry {
    Registry::new(
        (0..n)
            .map(|i| random_desire(rng, &format!("d{i}")))
            .collect(),
    )
    .expect("distinct names")
}
