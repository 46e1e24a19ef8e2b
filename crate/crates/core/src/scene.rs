//! Continuous scene recordings: ego kinematics plus annotated detections.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PedestrianAdult,
    PedestrianChild,
    PoliceOfficer,
    Motorcycle,
    Bicycle,
    PersonalMobility,
    #[serde(rename = "vehicle_4wheel")]
    Vehicle4Wheel,
    Debris,
    TrafficCone,
    PushablePullable,
    Other,
}

impl Category {
    pub fn is_pedestrian(self) -> bool {
        matches!(
            self,
            Category::PedestrianAdult | Category::PedestrianChild | Category::PoliceOfficer
        )
    }

    pub fn is_two_wheeler(self) -> bool {
        matches!(
            self,
            Category::Motorcycle | Category::Bicycle | Category::PersonalMobility
        )
    }

    pub fn is_static_obstacle(self) -> bool {
        matches!(
            self,
            Category::Debris | Category::TrafficCone | Category::PushablePullable
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Moving,
    Parked,
    WithRider,
    WithoutRider,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: Category,
    pub position: Point,
    /// Visible fraction of the object, in `[0, 1]`.
    pub visibility: f64,
    #[serde(default)]
    pub activity: Activity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    pub t: f64,
    pub ego_position: Point,
    pub ego_heading: f64,
    pub ego_velocity: f64,
    pub ego_acceleration: f64,
    /// Signed steering angle, left positive.
    pub ego_steering: f64,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScene {
    pub scene_id: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_ref: Option<String>,
    pub frames: Vec<RawFrame>,
}

impl RawScene {
    /// Checks frame ordering and detection visibility.
    pub fn validate(&self) -> Result<(), String> {
        if self.frames.is_empty() {
            return Err(format!("scene `{}` has no frames", self.scene_id));
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(format!(
                    "scene `{}`: frame {} timestamp {} does not follow {}",
                    self.scene_id,
                    i + 1,
                    w[1].t,
                    w[0].t
                ));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            if let Some(d) = f
                .detections
                .iter()
                .find(|d| !(0.0..=1.0).contains(&d.visibility))
            {
                return Err(format!(
                    "scene `{}`: frame {i} has detection visibility {} outside [0, 1]",
                    self.scene_id, d.visibility
                ));
            }
        }
        Ok(())
    }
}
