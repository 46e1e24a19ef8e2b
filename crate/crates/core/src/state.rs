//! Symbolic vocabulary: the eleven state predicates, their value sets, and
//! the closed action alphabet.
//!
//! A [`DiscreteState`] is a total assignment of every predicate. Field order
//! is the canonical predicate order, so the derived `Ord` and `Hash` give a
//! deterministic node identity for the policy graph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("value `{value}` is not valid for predicate {predicate}")]
    UnknownValue { predicate: Predicate, value: String },
    #[error("unknown action label `{0}`")]
    UnknownAction(String),
    #[error("malformed state key `{0}`")]
    MalformedKey(String),
}

macro_rules! value_enum {
    ($(#[$meta:meta])* $name:ident : $pred:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl FromStr for $name {
            type Err = ParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $(stringify!($variant) => Ok($name::$variant),)+
                    _ => Err(ParseError::UnknownValue {
                        predicate: Predicate::$pred,
                        value: s.to_string(),
                    }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

value_enum!(Velocity: Velocity { Stopped, Slow, Medium, High });
value_enum!(Steering: Steering { Forward, Right, Left });
value_enum!(LanePosition: LanePosition { Aligned, Opposite, Centre, None });
value_enum!(BlockProgress: BlockProgress { Start, Middle, End, Intersection, None });
value_enum!(
    /// Manoeuvre the ego takes at the upcoming intersection.
    NextIntersection: NextIntersection { Left, Right, Straight, None }
);
value_enum!(StopArea: StopAreaNearby { Stop, Yield, TurnStop, None });
value_enum!(
    /// Binary presence flag shared by the five proximity predicates.
    Presence: CrosswalkNearby { Yes, No }
);

impl Presence {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Presence::Yes
        } else {
            Presence::No
        }
    }
}

/// The eleven predicates, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Predicate {
    Velocity,
    Steering,
    LanePosition,
    BlockProgress,
    NextIntersection,
    StopAreaNearby,
    CrosswalkNearby,
    TrafficLightNearby,
    PedestrianNearby,
    TwoWheelNearby,
    ObjectsNearby,
}

impl Predicate {
    pub const ALL: [Predicate; 11] = [
        Predicate::Velocity,
        Predicate::Steering,
        Predicate::LanePosition,
        Predicate::BlockProgress,
        Predicate::NextIntersection,
        Predicate::StopAreaNearby,
        Predicate::CrosswalkNearby,
        Predicate::TrafficLightNearby,
        Predicate::PedestrianNearby,
        Predicate::TwoWheelNearby,
        Predicate::ObjectsNearby,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Velocity => "Velocity",
            Predicate::Steering => "Steering",
            Predicate::LanePosition => "LanePosition",
            Predicate::BlockProgress => "BlockProgress",
            Predicate::NextIntersection => "NextIntersection",
            Predicate::StopAreaNearby => "StopAreaNearby",
            Predicate::CrosswalkNearby => "CrosswalkNearby",
            Predicate::TrafficLightNearby => "TrafficLightNearby",
            Predicate::PedestrianNearby => "PedestrianNearby",
            Predicate::TwoWheelNearby => "TwoWheelNearby",
            Predicate::ObjectsNearby => "ObjectsNearby",
        }
    }

    /// Names of every value this predicate can take, in declaration order.
    pub fn values(self) -> Vec<&'static str> {
        fn names<T: Copy>(all: &[T], f: impl Fn(T) -> &'static str) -> Vec<&'static str> {
            all.iter().map(|v| f(*v)).collect()
        }
        match self {
            Predicate::Velocity => names(Velocity::ALL, Velocity::as_str),
            Predicate::Steering => names(Steering::ALL, Steering::as_str),
            Predicate::LanePosition => names(LanePosition::ALL, LanePosition::as_str),
            Predicate::BlockProgress => names(BlockProgress::ALL, BlockProgress::as_str),
            Predicate::NextIntersection => names(NextIntersection::ALL, NextIntersection::as_str),
            Predicate::StopAreaNearby => names(StopArea::ALL, StopArea::as_str),
            _ => names(Presence::ALL, Presence::as_str),
        }
    }

    pub fn accepts(self, value: &str) -> bool {
        self.values().contains(&value)
    }
}

impl FromStr for Predicate {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ParseError::UnknownPredicate(s.to_string()))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A full assignment of the eleven predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase", deny_unknown_fields)]
pub struct DiscreteState {
    pub velocity: Velocity,
    pub steering: Steering,
    pub lane_position: LanePosition,
    pub block_progress: BlockProgress,
    pub next_intersection: NextIntersection,
    pub stop_area_nearby: StopArea,
    pub crosswalk_nearby: Presence,
    pub traffic_light_nearby: Presence,
    pub pedestrian_nearby: Presence,
    pub two_wheel_nearby: Presence,
    pub objects_nearby: Presence,
}

impl Default for DiscreteState {
    /// Stationary, aligned mid-block with quiet surroundings.
    fn default() -> Self {
        DiscreteState {
            velocity: Velocity::Stopped,
            steering: Steering::Forward,
            lane_position: LanePosition::Aligned,
            block_progress: BlockProgress::Middle,
            next_intersection: NextIntersection::None,
            stop_area_nearby: StopArea::None,
            crosswalk_nearby: Presence::No,
            traffic_light_nearby: Presence::No,
            pedestrian_nearby: Presence::No,
            two_wheel_nearby: Presence::No,
            objects_nearby: Presence::No,
        }
    }
}

impl DiscreteState {
    pub fn get(&self, predicate: Predicate) -> &'static str {
        match predicate {
            Predicate::Velocity => self.velocity.as_str(),
            Predicate::Steering => self.steering.as_str(),
            Predicate::LanePosition => self.lane_position.as_str(),
            Predicate::BlockProgress => self.block_progress.as_str(),
            Predicate::NextIntersection => self.next_intersection.as_str(),
            Predicate::StopAreaNearby => self.stop_area_nearby.as_str(),
            Predicate::CrosswalkNearby => self.crosswalk_nearby.as_str(),
            Predicate::TrafficLightNearby => self.traffic_light_nearby.as_str(),
            Predicate::PedestrianNearby => self.pedestrian_nearby.as_str(),
            Predicate::TwoWheelNearby => self.two_wheel_nearby.as_str(),
            Predicate::ObjectsNearby => self.objects_nearby.as_str(),
        }
    }

    pub fn set(&mut self, predicate: Predicate, value: &str) -> Result<(), ParseError> {
        match predicate {
            Predicate::Velocity => self.velocity = value.parse()?,
            Predicate::Steering => self.steering = value.parse()?,
            Predicate::LanePosition => self.lane_position = value.parse()?,
            Predicate::BlockProgress => self.block_progress = value.parse()?,
            Predicate::NextIntersection => self.next_intersection = value.parse()?,
            Predicate::StopAreaNearby => self.stop_area_nearby = value.parse()?,
            p => {
                let v = Presence::from_str(value).map_err(|_| ParseError::UnknownValue {
                    predicate: p,
                    value: value.to_string(),
                })?;
                match p {
                    Predicate::CrosswalkNearby => self.crosswalk_nearby = v,
                    Predicate::TrafficLightNearby => self.traffic_light_nearby = v,
                    Predicate::PedestrianNearby => self.pedestrian_nearby = v,
                    Predicate::TwoWheelNearby => self.two_wheel_nearby = v,
                    Predicate::ObjectsNearby => self.objects_nearby = v,
                    _ => unreachable!(),
                }
            }
        }
        Ok(())
    }

    /// Builder-style [`DiscreteState::set`]; panics on an invalid value.
    pub fn with(mut self, predicate: Predicate, value: &str) -> Self {
        self.set(predicate, value)
            .unwrap_or_else(|e| panic!("invalid state literal: {e}"));
        self
    }

    pub fn assignments(&self) -> impl Iterator<Item = (Predicate, &'static str)> + '_ {
        Predicate::ALL.iter().map(move |p| (*p, self.get(*p)))
    }

    /// Canonical textual key, e.g. `Velocity=Slow,Steering=Forward,...`.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self
            .assignments()
            .map(|(p, v)| format!("{}={}", p.as_str(), v))
            .collect();
        parts.join(",")
    }

    /// Predicate values that differ between `self` and `other`, as
    /// `(removed, added)` pairs taken from `self` and `other` respectively.
    pub fn diff(
        &self,
        other: &DiscreteState,
    ) -> (
        Vec<(Predicate, &'static str)>,
        Vec<(Predicate, &'static str)>,
    ) {
        let mut removed = Vec::new();
        let mut added = Vec::new();
        for p in Predicate::ALL {
            let (a, b) = (self.get(p), other.get(p));
            if a != b {
                removed.push((p, a));
                added.push((p, b));
            }
        }
        (removed, added)
    }

    pub fn hamming(&self, other: &DiscreteState) -> usize {
        Predicate::ALL
            .iter()
            .filter(|p| self.get(**p) != other.get(**p))
            .count()
    }
}

impl FromStr for DiscreteState {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut state = DiscreteState::default();
        let mut seen = [false; 11];
        for part in s.split(',') {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| ParseError::MalformedKey(s.to_string()))?;
            let predicate: Predicate = name.trim().parse()?;
            let idx = predicate as usize;
            if seen[idx] {
                return Err(ParseError::MalformedKey(s.to_string()));
            }
            seen[idx] = true;
            state.set(predicate, value.trim())?;
        }
        if seen.iter().any(|s| !s) {
            return Err(ParseError::MalformedKey(s.to_string()));
        }
        Ok(state)
    }
}

impl fmt::Display for DiscreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Labelled manoeuvre executed between two frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionLabel {
    Idle,
    GoStraight,
    Gas,
    Brake,
    TurnRight,
    TurnLeft,
    GasTurnRight,
    GasTurnLeft,
    BrakeTurnRight,
    BrakeTurnLeft,
    Stop,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 11] = [
        ActionLabel::Idle,
        ActionLabel::GoStraight,
        ActionLabel::Gas,
        ActionLabel::Brake,
        ActionLabel::TurnRight,
        ActionLabel::TurnLeft,
        ActionLabel::GasTurnRight,
        ActionLabel::GasTurnLeft,
        ActionLabel::BrakeTurnRight,
        ActionLabel::BrakeTurnLeft,
        ActionLabel::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::Idle => "Idle",
            ActionLabel::GoStraight => "GoStraight",
            ActionLabel::Gas => "Gas",
            ActionLabel::Brake => "Brake",
            ActionLabel::TurnRight => "TurnRight",
            ActionLabel::TurnLeft => "TurnLeft",
            ActionLabel::GasTurnRight => "GasTurnRight",
            ActionLabel::GasTurnLeft => "GasTurnLeft",
            ActionLabel::BrakeTurnRight => "BrakeTurnRight",
            ActionLabel::BrakeTurnLeft => "BrakeTurnLeft",
            ActionLabel::Stop => "Stop",
        }
    }
}

impl FromStr for ActionLabel {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionLabel::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ParseError::UnknownAction(s.to_string()))
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_round_trips() {
        let s = DiscreteState::default()
            .with(Predicate::Velocity, "Slow")
            .with(Predicate::PedestrianNearby, "Yes");
        let parsed: DiscreteState = s.key().parse().unwrap();
        assert_eq!(parsed, s);
    }

    #[test]
    fn key_requires_all_predicates() {
        assert!(matches!(
            "Velocity=Slow".parse::<DiscreteState>(),
            Err(ParseError::MalformedKey(_))
        ));
    }

    #[test]
    fn json_uses_predicate_names() {
        let json = serde_json::to_value(DiscreteState::default()).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), 11);
        assert_eq!(obj["Velocity"], "Stopped");
        assert_eq!(obj["TwoWheelNearby"], "No");
    }

    #[test]
    fn json_rejects_missing_and_unknown() {
        let mut json = serde_json::to_value(DiscreteState::default()).unwrap();
        json.as_object_mut().unwrap().remove("Steering");
        assert!(serde_json::from_value::<DiscreteState>(json.clone()).is_err());
        json.as_object_mut()
            .unwrap()
            .insert("Steering".into(), "Sideways".into());
        assert!(serde_json::from_value::<DiscreteState>(json).is_err());
    }

    #[test]
    fn unknown_action_is_an_error() {
        assert!("Drift".parse::<ActionLabel>().is_err());
        assert!(serde_json::from_str::<ActionLabel>("\"Drift\"").is_err());
        assert_eq!(
            "GasTurnLeft".parse::<ActionLabel>(),
            Ok(ActionLabel::GasTurnLeft)
        );
    }

    #[test]
    fn diff_is_symmetric_difference() {
        let a = DiscreteState::default();
        let b = a.with(Predicate::Steering, "Right");
        let (removed, added) = a.diff(&b);
        assert_eq!(removed, vec![(Predicate::Steering, "Forward")]);
        assert_eq!(added, vec![(Predicate::Steering, "Right")]);
        assert_eq!(a.hamming(&b), 1);
    }
}
