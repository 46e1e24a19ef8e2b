//! Declarative desires: a conjunctive predicate region `S_d` plus the action
//! set `A_d` that fulfils the desire from inside that region.
//!
//! Desires are stored one per TOML document:
//!
//! ```toml
//! name = "Approach Stop Sign"
//! kind = "safe"
//! actions = ["Brake", "BrakeTurnLeft", "BrakeTurnRight", "Stop"]
//!
//! [[clauses]]
//! predicate = "StopAreaNearby"
//! values = ["Stop"]
//! ```
//!
//! `complement = true` flips `actions` against the full action alphabet, and
//! `negated = true` on a clause turns membership into non-membership.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{ActionLabel, DiscreteState, Predicate};

#[derive(Debug, Error)]
pub enum DesireError {
    #[error("invalid desire specs:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("unknown desire `{0}`")]
    Unknown(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Compact set of action labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionSet(u16);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn all() -> Self {
        ActionLabel::ALL.iter().copied().collect()
    }

    fn bit(a: ActionLabel) -> u16 {
        1 << (a as u16)
    }

    pub fn contains(self, a: ActionLabel) -> bool {
        self.0 & Self::bit(a) != 0
    }

    pub fn insert(&mut self, a: ActionLabel) {
        self.0 |= Self::bit(a);
    }

    pub fn union(self, other: ActionSet) -> ActionSet {
        ActionSet(self.0 | other.0)
    }

    pub fn complement(self) -> ActionSet {
        ActionSet(!self.0 & Self::all().0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = ActionLabel> {
        ActionLabel::ALL
            .into_iter()
            .filter(move |a| self.contains(*a))
    }
}

impl FromIterator<ActionLabel> for ActionSet {
    fn from_iter<I: IntoIterator<Item = ActionLabel>>(iter: I) -> Self {
        let mut s = ActionSet::EMPTY;
        for a in iter {
            s.insert(a);
        }
        s
    }
}

impl Serialize for ActionSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ActionSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v: Vec<ActionLabel> = Vec::deserialize(deserializer)?;
        Ok(v.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesireKind {
    Safe,
    Unsafe,
}

impl fmt::Display for DesireKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesireKind::Safe => "safe",
            DesireKind::Unsafe => "unsafe",
        })
    }
}

/// Which registered desires an any-desire aggregate ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindFilter {
    All,
    Safe,
    Unsafe,
}

impl KindFilter {
    pub fn matches(self, kind: DesireKind) -> bool {
        match self {
            KindFilter::All => true,
            KindFilter::Safe => kind == DesireKind::Safe,
            KindFilter::Unsafe => kind == DesireKind::Unsafe,
        }
    }

    /// Column name used for the aggregate in tables and reports.
    pub fn aggregate_name(self) -> &'static str {
        match self {
            KindFilter::All => "any",
            KindFilter::Safe => "any-safe",
            KindFilter::Unsafe => "any-unsafe",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            KindFilter::All => "any",
            KindFilter::Safe => "safe",
            KindFilter::Unsafe => "unsafe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateClause {
    pub predicate: Predicate,
    pub values: BTreeSet<String>,
    #[serde(default)]
    pub negated: bool,
}

impl PredicateClause {
    pub fn holds(&self, s: &DiscreteState) -> bool {
        self.values.contains(s.get(self.predicate)) != self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesireSpec {
    pub name: String,
    pub kind: DesireKind,
    pub clauses: Vec<PredicateClause>,
    pub actions: ActionSet,
}

impl DesireSpec {
    /// `s ∈ S_d`: every clause holds.
    pub fn in_region(&self, s: &DiscreteState) -> bool {
        self.clauses.iter().all(|c| c.holds(s))
    }

    pub fn fulfilled_by(&self, s: &DiscreteState, a: ActionLabel) -> bool {
        self.in_region(s) && self.actions.contains(a)
    }

    /// `A_d` when `s ∈ S_d`, empty otherwise.
    pub fn fulfilling_actions(&self, s: &DiscreteState) -> ActionSet {
        if self.in_region(s) {
            self.actions
        } else {
            ActionSet::EMPTY
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, DesireError> {
        parse_spec(text, "<inline>").map_err(DesireError::Invalid)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClause {
    predicate: String,
    values: Vec<String>,
    #[serde(default)]
    negated: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    kind: String,
    #[serde(default)]
    clauses: Vec<RawClause>,
    #[serde(default)]
    actions: Vec<String>,
    #[serde(default)]
    complement: bool,
}

fn parse_spec(text: &str, origin: &str) -> Result<DesireSpec, Vec<String>> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| vec![format!("{origin}: {e}")])?;
    let mut errors = Vec::new();
    let kind = match raw.kind.as_str() {
        "safe" => DesireKind::Safe,
        "unsafe" => DesireKind::Unsafe,
        other => {
            errors.push(format!(
                "{origin}: kind `{other}` must be `safe` or `unsafe`"
            ));
            DesireKind::Safe
        }
    };
    if raw.name.trim().is_empty() {
        errors.push(format!("{origin}: empty desire name"));
    }
    if raw.clauses.is_empty() {
        errors.push(format!("{origin}: desire `{}` has no clauses", raw.name));
    }
    let mut clauses = Vec::new();
    for (i, c) in raw.clauses.iter().enumerate() {
        let predicate: Predicate = match c.predicate.parse() {
            Ok(p) => p,
            Err(e) => {
                errors.push(format!("{origin}: clause {i}: {e}"));
                continue;
            }
        };
        if c.values.is_empty() {
            errors.push(format!(
                "{origin}: clause {i} ({predicate}) lists no values"
            ));
        }
        for v in &c.values {
            if !predicate.accepts(v) {
                errors.push(format!(
                    "{origin}: clause {i}: `{v}` is not a value of {predicate} (expected one of {})",
                    predicate.values().join(", ")
                ));
            }
        }
        clauses.push(PredicateClause {
            predicate,
            values: c.values.iter().cloned().collect(),
            negated: c.negated,
        });
    }
    let mut actions = ActionSet::EMPTY;
    for a in &raw.actions {
        match a.parse::<ActionLabel>() {
            Ok(a) => actions.insert(a),
            Err(e) => errors.push(format!("{origin}: {e}")),
        }
    }
    if raw.complement {
        actions = actions.complement();
    }
    if actions.is_empty() {
        errors.push(format!(
            "{origin}: desire `{}` has an empty action set",
            raw.name
        ));
    }
    if errors.is_empty() {
        Ok(DesireSpec {
            name: raw.name,
            kind,
            clauses,
            actions,
        })
    } else {
        Err(errors)
    }
}

const BUILTIN: [(&str, &str); 13] = [
    (
        "lane_keeping.toml",
        include_str!("../desires/lane_keeping.toml"),
    ),
    ("turn_left.toml", include_str!("../desires/turn_left.toml")),
    (
        "turn_right.toml",
        include_str!("../desires/turn_right.toml"),
    ),
    (
        "lane_change_left.toml",
        include_str!("../desires/lane_change_left.toml"),
    ),
    (
        "lane_change_right.toml",
        include_str!("../desires/lane_change_right.toml"),
    ),
    (
        "approach_traffic_light.toml",
        include_str!("../desires/approach_traffic_light.toml"),
    ),
    (
        "approach_stop_sign.toml",
        include_str!("../desires/approach_stop_sign.toml"),
    ),
    (
        "peds_at_crosswalk.toml",
        include_str!("../desires/peds_at_crosswalk.toml"),
    ),
    (
        "non_crosswalk_peds.toml",
        include_str!("../desires/non_crosswalk_peds.toml"),
    ),
    (
        "ignore_two_wheel.toml",
        include_str!("../desires/ignore_two_wheel.toml"),
    ),
    (
        "ignore_peds_high.toml",
        include_str!("../desires/ignore_peds_high.toml"),
    ),
    (
        "ignore_peds_low.toml",
        include_str!("../desires/ignore_peds_low.toml"),
    ),
    (
        "ignore_stop_sign.toml",
        include_str!("../desires/ignore_stop_sign.toml"),
    ),
];

/// An ordered set of uniquely named desires.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    desires: Vec<DesireSpec>,
}

impl Registry {
    pub fn new(desires: Vec<DesireSpec>) -> Result<Self, DesireError> {
        let mut seen = BTreeSet::new();
        let dupes: Vec<String> = desires
            .iter()
            .filter(|d| !seen.insert(d.name.clone()))
            .map(|d| format!("duplicate desire name `{}`", d.name))
            .collect();
        if dupes.is_empty() {
            Ok(Registry { desires })
        } else {
            Err(DesireError::Invalid(dupes))
        }
    }

    /// The shipped driving desires.
    pub fn builtin() -> Self {
        Self::from_sources(BUILTIN.iter().map(|(n, t)| (n.to_string(), t.to_string())))
            .expect("shipped desire specs are valid")
    }

    /// Parse `(origin, toml)` pairs, reporting every violation at once.
    pub fn from_sources(
        sources: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, DesireError> {
        let mut errors = Vec::new();
        let mut desires = Vec::new();
        for (origin, text) in sources {
            match parse_spec(&text, &origin) {
                Ok(d) => desires.push(d),
                Err(e) => errors.extend(e),
            }
        }
        let mut seen = BTreeSet::new();
        for d in &desires {
            if !seen.insert(d.name.clone()) {
                errors.push(format!("duplicate desire name `{}`", d.name));
            }
        }
        if errors.is_empty() {
            Ok(Registry { desires })
        } else {
            Err(DesireError::Invalid(errors))
        }
    }

    /// Load every `*.toml` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, DesireError> {
        let io = |source| DesireError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut sources = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|source| DesireError::Io {
                path: p.display().to_string(),
                source,
            })?;
            sources.push((p.display().to_string(), text));
        }
        Self::from_sources(sources)
    }

    pub fn desires(&self) -> &[DesireSpec] {
        &self.desires
    }

    pub fn len(&self) -> usize {
        self.desires.len()
    }

    pub fn is_empty(&self) -> bool {
        self.desires.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&DesireSpec, DesireError> {
        self.desires
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| DesireError::Unknown(name.to_string()))
    }

    /// Union of `A_d` over desires matching `filter` whose region contains `s`.
    pub fn any_desire_actions(&self, s: &DiscreteState, filter: KindFilter) -> ActionSet {
        self.desires
            .iter()
            .filter(|d| filter.matches(d.kind))
            .fold(ActionSet::EMPTY, |acc, d| {
                acc.union(d.fulfilling_actions(s))
            })
    }
}

/// A fulfilment target for the intention solver.
pub trait Goal {
    fn name(&self) -> &str;
    /// Actions whose execution at `s` fulfils the goal.
    fn fulfilling(&self, s: &DiscreteState) -> ActionSet;
}

impl Goal for DesireSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn fulfilling(&self, s: &DiscreteState) -> ActionSet {
        self.fulfilling_actions(s)
    }
}

/// Pseudo-desire fulfilled by any registered desire of the filtered kind.
pub struct AnyDesire<'a> {
    pub registry: &'a Registry,
    pub filter: KindFilter,
}

impl Goal for AnyDesire<'_> {
    fn name(&self) -> &str {
        self.filter.aggregate_name()
    }

    fn fulfilling(&self, s: &DiscreteState) -> ActionSet {
        self.registry.any_desire_actions(s, self.filter)
    }
}
