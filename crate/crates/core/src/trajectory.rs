//! Discretised state-action trajectories and their JSONL encoding.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{ActionLabel, DiscreteState};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: scene `{scene_id}` has no steps")]
    Empty { line: usize, scene_id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: DiscreteState,
    pub action: ActionLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scene_id: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(scene_id: impl Into<String>, steps: Vec<Step>) -> Self {
        Trajectory {
            scene_id: scene_id.into(),
            tags: BTreeSet::new(),
            steps,
        }
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags.extend(tags.into_iter().map(Into::into));
        self
    }

    pub fn from_pairs(
        scene_id: impl Into<String>,
        pairs: impl IntoIterator<Item = (DiscreteState, ActionLabel)>,
    ) -> Self {
        let steps = pairs
            .into_iter()
            .map(|(state, action)| Step { state, action })
            .collect();
        Trajectory::new(scene_id, steps)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }

    /// `(state, action, next_state)` for every non-terminal step.
    pub fn transitions(
        &self,
    ) -> impl Iterator<Item = (DiscreteState, ActionLabel, DiscreteState)> + '_ {
        self.steps
            .windows(2)
            .map(|w| (w[0].state, w[0].action, w[1].state))
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Trajectory>, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory =
            serde_json::from_str(&line).map_err(|source| TrajectoryError::Parse {
                line: i + 1,
                source,
            })?;
        if traj.steps.is_empty() {
            return Err(TrajectoryError::Empty {
                line: i + 1,
                scene_id: traj.scene_id,
            });
        }
        out.push(traj);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
