//! Attributed and expected intention probabilities.
//!
//! For a desire `d` and commitment threshold `C`, with `A = {s : I_d(s) ≥ C}`
//! and `n(s)` the visit count of `s`:
//!
//! * attributed = `Σ_{s∈A} n(s) / Σ_s n(s)`
//! * expected   = `Σ_{s∈A} n(s) I_d(s) / Σ_{s∈A} n(s)`, or 0 when `A` is empty

use std::fmt::Write as _;

use thiserror::Error;

use crate::desires::{KindFilter, Registry};
use crate::graph::{GraphError, PolicyGraph};
use crate::intention::{ColumnKind, IntentionError, IntentionTable, SolverConfig};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("commitment threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("intention table does not match the policy graph: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Intention(#[from] IntentionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentionMetrics {
    pub desire: String,
    pub kind: ColumnKind,
    pub threshold: f64,
    pub attributed: f64,
    pub expected: f64,
    pub n_states_attributed: usize,
    /// Summed visit count of the attributed states.
    pub visitation_mass: u64,
}

fn check_threshold(c: f64) -> Result<(), MetricsError> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidThreshold(c))
    }
}

/// Visit counts aligned with the table's state order.
fn aligned_visits(g: &PolicyGraph, table: &IntentionTable) -> Result<Vec<u64>, MetricsError> {
    if g.node_count() != table.states().len() {
        return Err(MetricsError::Mismatch(format!(
            "graph has {} states, table has {}",
            g.node_count(),
            table.states().len()
        )));
    }
    table
        .states()
        .iter()
        .map(|s| {
            let n = g.visits(s);
            if n == 0 {
                Err(MetricsError::Mismatch(format!(
                    "state {s} is not in the graph"
                )))
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn summarise(
    desire: &str,
    kind: ColumnKind,
    values: &[f64],
    visits: &[u64],
    c: f64,
) -> IntentionMetrics {
    let total: u64 = visits.iter().sum();
    let mut mass = 0u64;
    let mut weighted = 0.0;
    let mut n = 0;
    for (v, w) in values.iter().zip(visits) {
        if *v >= c {
            mass += w;
            weighted += *w as f64 * v;
            n += 1;
        }
    }
    IntentionMetrics {
        desire: desire.to_string(),
        kind,
        threshold: c,
        attributed: if total == 0 {
            0.0
        } else {
            mass as f64 / total as f64
        },
        expected: if mass == 0 {
            0.0
        } else {
            weighted / mass as f64
        },
        n_states_attributed: n,
        visitation_mass: mass,
    }
}

pub fn intention_metrics(
    g: &PolicyGraph,
    table: &IntentionTable,
    desire: &str,
    c: f64,
) -> Result<IntentionMetrics, MetricsError> {
    check_threshold(c)?;
    let col = table.column(desire)?;
    let visits = aligned_visits(g, table)?;
    Ok(summarise(&col.name, col.kind, &col.values, &visits, c))
}

pub fn attributed_intention(
    g: &PolicyGraph,
    table: &IntentionTable,
    desire: &str,
    c: f64,
) -> Result<f64, MetricsError> {
    intention_metrics(g, table, desire, c).map(|m| m.attributed)
}

pub fn expected_intention(
    g: &PolicyGraph,
    table: &IntentionTable,
    desire: &str,
    c: f64,
) -> Result<f64, MetricsError> {
    intention_metrics(g, table, desire, c).map(|m| m.expected)
}

/// One row per table column: every desire, then the any-desire aggregates.
pub fn all_metrics(
    g: &PolicyGraph,
    table: &IntentionTable,
    c: f64,
) -> Result<Vec<IntentionMetrics>, MetricsError> {
    check_threshold(c)?;
    let visits = aligned_visits(g, table)?;
    Ok(table
        .columns()
        .iter()
        .map(|col| summarise(&col.name, col.kind, &col.values, &visits, c))
        .collect())
}

/// Diagnostic alternative to the union event: `max_d I_d(s)` over desires
/// matching `filter`. Reported under the name `max-<label>`.
pub fn max_over_desires(
    g: &PolicyGraph,
    table: &IntentionTable,
    filter: KindFilter,
    c: f64,
) -> Result<IntentionMetrics, MetricsError> {
    check_threshold(c)?;
    let visits = aligned_visits(g, table)?;
    let mut values = vec![0.0f64; visits.len()];
    for col in table.desire_columns() {
        let matches = match col.kind {
            ColumnKind::Safe => filter.matches(crate::desires::DesireKind::Safe),
            ColumnKind::Unsafe => filter.matches(crate::desires::DesireKind::Unsafe),
            ColumnKind::Aggregate(_) => false,
        };
        if matches {
            for (m, v) in values.iter_mut().zip(&col.values) {
                *m = m.max(*v);
            }
        }
    }
    Ok(summarise(
        &format!("max-{}", filter.label()),
        ColumnKind::Aggregate(filter),
        &values,
        &visits,
        c,
    ))
}

/// Assignment of trajectories to named cohorts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partition {
    /// A single cohort `all`.
    Identity,
    /// `<tag>` versus `not-<tag>`.
    Tag(String),
}

impl Partition {
    pub fn cohorts(&self) -> Vec<String> {
        match self {
            Partition::Identity => vec!["all".to_string()],
            Partition::Tag(t) => vec![t.clone(), format!("not-{t}")],
        }
    }

    pub fn assign(&self, t: &Trajectory) -> usize {
        match self {
            Partition::Identity => 0,
            Partition::Tag(tag) => usize::from(!t.has_tag(tag)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortReport {
    pub cohort: String,
    pub scenes: usize,
    /// `None` when the cohort holds no trajectories.
    pub metrics: Option<Vec<IntentionMetrics>>,
    /// Desire columns reported, in order; kept for empty cohorts.
    pub columns: Vec<(String, ColumnKind)>,
}

fn registry_columns(registry: &Registry) -> Vec<(String, ColumnKind)> {
    let mut cols: Vec<(String, ColumnKind)> = registry
        .desires()
        .iter()
        .map(|d| (d.name.clone(), ColumnKind::of(d.kind)))
        .collect();
    for f in [KindFilter::Safe, KindFilter::Unsafe, KindFilter::All] {
        cols.push((f.aggregate_name().to_string(), ColumnKind::Aggregate(f)));
    }
    cols
}

/// Build one graph and table per cohort and report metrics side by side.
pub fn cohort_metrics(
    trajectories: &[Trajectory],
    partition: &Partition,
    registry: &Registry,
    solver: &SolverConfig,
    c: f64,
) -> Result<Vec<CohortReport>, MetricsError> {
    check_threshold(c)?;
    let names = partition.cohorts();
    let mut buckets: Vec<Vec<Trajectory>> = vec![Vec::new(); names.len()];
    for t in trajectories {
        buckets[partition.assign(t)].push(t.clone());
    }
    let columns = registry_columns(registry);
    let mut out = Vec::with_capacity(names.len());
    for (cohort, bucket) in names.into_iter().zip(buckets) {
        let metrics = if bucket.is_empty() {
            None
        } else {
            let g = PolicyGraph::build(&bucket)?;
            let table = IntentionTable::compute(&g, registry, solver)?;
            Some(all_metrics(&g, &table, c)?)
        };
        out.push(CohortReport {
            cohort,
            scenes: bucket.len(),
            metrics,
            columns: columns.clone(),
        });
    }
    Ok(out)
}

pub const CSV_HEADER: &str =
    "cohort,desire,kind,C,attributed,expected,n_states_attributed,visitation_mass";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn push_row(out: &mut String, cohort: &str, m: &IntentionMetrics) {
    writeln!(
        out,
        "{},{},{},{},{:.6},{:.6},{},{}",
        csv_field(cohort),
        csv_field(&m.desire),
        m.kind.label(),
        m.threshold,
        m.attributed,
        m.expected,
        m.n_states_attributed,
        m.visitation_mass
    )
    .expect("writing to a string");
}

/// CSV for a single cohort.
pub fn metrics_csv(cohort: &str, rows: &[IntentionMetrics]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for m in rows {
        push_row(&mut out, cohort, m);
    }
    out
}

/// CSV across cohorts; empty cohorts report `NA` in the metric columns.
pub fn cohort_csv(reports: &[CohortReport], c: f64) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        match &r.metrics {
            Some(rows) => rows.iter().for_each(|m| push_row(&mut out, &r.cohort, m)),
            None => {
                for (name, kind) in &r.columns {
                    writeln!(
                        out,
                        "{},{},{},{},NA,NA,NA,NA",
                        csv_field(&r.cohort),
                        csv_field(name),
                        kind.label(),
                        c
                    )
                    .expect("writing to a string");
                }
            }
        }
    }
    out
}

/// Side-by-side text table: one line per desire, one column pair per cohort.
pub fn cohort_report_text(reports: &[CohortReport]) -> String {
    let mut out = String::new();
    let width = reports
        .iter()
        .flat_map(|r| r.columns.iter().map(|(n, _)| n.len()))
        .max()
        .unwrap_or(6)
        .max(6);
    write!(out, "{:width$}", "desire").unwrap();
    for r in reports {
        write!(out, "  {:>21}", format!("{} (n={})", r.cohort, r.scenes)).unwrap();
    }
    out.push('\n');
    let Some(first) = reports.first() else {
        return out;
    };
    for (i, (name, _)) in first.columns.iter().enumerate() {
        write!(out, "{name:width$}").unwrap();
        for r in reports {
            let cell = match &r.metrics {
                Some(rows) => format!("{:.3} / {:.3}", rows[i].attributed, rows[i].expected),
                None => "no data".to_string(),
            };
            write!(out, "  {cell:>21}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desires::{DesireKind, DesireSpec, PredicateClause};
    use crate::state::{ActionLabel, DiscreteState, Predicate};

    fn setup() -> (PolicyGraph, IntentionTable) {
        let a = DiscreteState::default();
        let b = a.with(Predicate::Velocity, "Slow");
        let t = Trajectory::from_pairs(
            "t",
            [
                (a, ActionLabel::Gas),
                (b, ActionLabel::Brake),
                (a, ActionLabel::Stop),
            ],
        );
        let g = PolicyGraph::build(&[t]).unwrap();
        let d = DesireSpec {
            name: "d".into(),
            kind: DesireKind::Safe,
            clauses: vec![PredicateClause {
                predicate: Predicate::Velocity,
                values: ["Slow".to_string()].into(),
                negated: false,
            }],
            actions: [ActionLabel::Brake].into_iter().collect(),
        };
        let reg = Registry::new(vec![d]).unwrap();
        let table = IntentionTable::compute(&g, &reg, &SolverConfig::default()).unwrap();
        (g, table)
    }

    #[test]
    fn threshold_above_maximum_attributes_nothing() {
        let (g, table) = setup();
        let m = intention_metrics(&g, &table, "d", 1.0).unwrap();
        assert!((m.attributed - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.expected, 1.0);
        let state_a = table.states()[0];
        assert!(table.value("d", &state_a).unwrap() < 1.0);
    }

    #[test]
    fn invalid_threshold() {
        let (g, table) = setup();
        assert_eq!(
            attributed_intention(&g, &table, "d", 0.0),
            Err(MetricsError::InvalidThreshold(0.0))
        );
        assert!(matches!(
            attributed_intention(&g, &table, "x", 0.5),
            Err(MetricsError::Intention(IntentionError::UnknownDesire(_)))
        ));
    }

    #[test]
    fn csv_layout() {
        let (g, table) = setup();
        let rows = all_metrics(&g, &table, 0.5).unwrap();
        let csv = metrics_csv("all", &rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("all,d,safe,0.5,1.000000,0.666667,2,3"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn empty_cohort_is_flagged() {
        let (_, table) = setup();
        let t = Trajectory::from_pairs("t", [(table.states()[0], ActionLabel::Idle)]);
        let reports = cohort_metrics(
            &[t],
            &Partition::Tag("night".into()),
            table.registry(),
            &SolverConfig::default(),
            0.5,
        )
        .unwrap();
        assert_eq!(reports[0].cohort, "night");
        assert!(reports[0].metrics.is_none());
        assert!(reports[1].metrics.is_some());
        let csv = cohort_csv(&reports, 0.5);
        assert!(csv.contains("night,d,safe,0.5,NA,NA,NA,NA"));
        assert!(cohort_report_text(&reports).contains("no data"));
    }
}
