//! Continuous frames to symbolic states and action labels.
//!
//! Every threshold lives in [`DiscretizerConfig`], which can be loaded from a
//! TOML key-value file. Unresolvable geometry degrades to `None`/`No` values;
//! state discretisation never fails.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Point, Sector};
use crate::map::{MapOracle, RouteLookahead, RoutePose, SceneMap, VectorMap};
use crate::scene::{Activity, Category, RawFrame, RawScene};
use crate::state::{
    ActionLabel, BlockProgress, DiscreteState, LanePosition, Presence, Steering, Velocity,
};
use crate::trajectory::{Step, Trajectory};

#[derive(Debug, Error)]
pub enum DiscretizeError {
    #[error("scene `{0}` has no frames")]
    EmptyScene(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid discretizer config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizerConfig {
    /// Below this speed (m/s) the ego is `Stopped`.
    pub stopped_speed: f64,
    pub slow_speed: f64,
    pub medium_speed: f64,
    /// Steering magnitude (rad) under which the wheel counts as straight.
    pub steering_threshold: f64,
    pub gas_accel: f64,
    /// Braking when acceleration is below `-brake_accel`.
    pub brake_accel: f64,
    pub front_half_angle_deg: f64,
    /// Radius of the front area for crosswalks and road users.
    pub front_radius: f64,
    /// Radius of the front area for stop areas and traffic lights.
    pub signage_radius: f64,
    pub object_min_visibility: f64,
    pub divider_tolerance: f64,
    pub alignment_tolerance_deg: f64,
    pub traffic_light_facing_tolerance_deg: f64,
    pub intersection_lookahead: f64,
    pub turn_angle_deg: f64,
}

impl Default for DiscretizerConfig {
    fn default() -> Self {
        DiscretizerConfig {
            stopped_speed: 0.2,
            slow_speed: 4.0,
            medium_speed: 8.33,
            steering_threshold: 0.1,
            gas_accel: 0.5,
            brake_accel: 0.5,
            front_half_angle_deg: 45.0,
            front_radius: 15.0,
            signage_radius: 30.0,
            object_min_visibility: 0.6,
            divider_tolerance: 0.75,
            alignment_tolerance_deg: 60.0,
            traffic_light_facing_tolerance_deg: 45.0,
            intersection_lookahead: 60.0,
            turn_angle_deg: 45.0,
        }
    }
}

impl DiscretizerConfig {
    pub fn from_toml(text: &str) -> Result<Self, DiscretizeError> {
        let cfg: DiscretizerConfig =
            toml::from_str(text).map_err(|e| DiscretizeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DiscretizeError> {
        let ordered = 0.0 <= self.stopped_speed
            && self.stopped_speed <= self.slow_speed
            && self.slow_speed <= self.medium_speed;
        if !ordered {
            return Err(DiscretizeError::Config(
                "speed bands must satisfy 0 <= stopped <= slow <= medium".into(),
            ));
        }
        if self.front_radius < 0.0 || self.signage_radius < 0.0 {
            return Err(DiscretizeError::Config("radii must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.object_min_visibility) {
            return Err(DiscretizeError::Config(
                "object_min_visibility must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn sector(&self, frame: &RawFrame, radius: f64) -> Sector {
        self.view_sector(frame.ego_position, frame.ego_heading, radius)
    }

    /// Forward view cone from a pose.
    pub fn view_sector(&self, apex: Point, heading: f64, radius: f64) -> Sector {
        Sector {
            apex,
            heading,
            half_angle: self.front_half_angle_deg.to_radians(),
            radius,
        }
    }

    pub fn velocity(&self, v: f64) -> Velocity {
        let v = v.abs();
        if v < self.stopped_speed {
            Velocity::Stopped
        } else if v < self.slow_speed {
            Velocity::Slow
        } else if v < self.medium_speed {
            Velocity::Medium
        } else {
            Velocity::High
        }
    }

    pub fn steering(&self, delta: f64) -> Steering {
        if delta.abs() < self.steering_threshold {
            Steering::Forward
        } else if delta > 0.0 {
            Steering::Left
        } else {
            Steering::Right
        }
    }
}

pub fn discretize_state(
    frame: &RawFrame,
    map: &dyn MapOracle,
    cfg: &DiscretizerConfig,
) -> DiscreteState {
    let pos = frame.ego_position;
    let drivable = map.in_drivable_area(pos);
    let lane = if drivable { map.lane_at(pos) } else { None };

    let lane_position = if !drivable {
        LanePosition::None
    } else if map
        .divider_distance(pos)
        .is_some_and(|d| d <= cfg.divider_tolerance)
    {
        LanePosition::Centre
    } else {
        match &lane {
            Some(m) => {
                let delta = wrap_angle(frame.ego_heading - m.projection.heading).abs();
                let tol = cfg.alignment_tolerance_deg.to_radians();
                if delta <= tol {
                    LanePosition::Aligned
                } else if delta >= std::f64::consts::PI - tol {
                    LanePosition::Opposite
                } else {
                    LanePosition::None
                }
            }
            None => LanePosition::None,
        }
    };

    let block_progress = if !drivable {
        BlockProgress::None
    } else if map.in_intersection(pos) {
        BlockProgress::Intersection
    } else {
        match &lane {
            Some(m) => {
                let f = m.projection.fraction();
                if f < 1.0 / 3.0 {
                    BlockProgress::Start
                } else if f < 2.0 / 3.0 {
                    BlockProgress::Middle
                } else {
                    BlockProgress::End
                }
            }
            None => BlockProgress::None,
        }
    };

    let signage = cfg.sector(frame, cfg.signage_radius);
    let near = cfg.sector(frame, cfg.front_radius);
    let proximity = proximity_predicates(frame, map, cfg, &near);

    DiscreteState {
        velocity: cfg.velocity(frame.ego_velocity),
        steering: cfg.steering(frame.ego_steering),
        lane_position,
        block_progress,
        next_intersection: map.next_manoeuvre(frame.t),
        stop_area_nearby: map.stop_area_in(&signage),
        crosswalk_nearby: proximity.crosswalk,
        traffic_light_nearby: Presence::from_bool(map.traffic_light_facing(
            &signage,
            cfg.traffic_light_facing_tolerance_deg.to_radians(),
        )),
        pedestrian_nearby: proximity.pedestrian,
        two_wheel_nearby: proximity.two_wheel,
        objects_nearby: proximity.objects,
    }
}

/// The four predicates evaluated over the near front area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proximity {
    pub crosswalk: Presence,
    pub pedestrian: Presence,
    pub two_wheel: Presence,
    pub objects: Presence,
}

pub fn proximity_predicates(
    frame: &RawFrame,
    map: &dyn MapOracle,
    cfg: &DiscretizerConfig,
    near: &Sector,
) -> Proximity {
    let ahead = || {
        frame
            .detections
            .iter()
            .filter(|d| near.contains(d.position))
    };
    let pedestrian = ahead().any(|d| {
        d.category.is_pedestrian() && d.visibility > 0.0 && map.in_drivable_area(d.position)
    });
    let two_wheel = ahead().any(|d| {
        d.category.is_two_wheeler()
            && d.activity == Activity::WithRider
            && d.visibility > 0.0
            && map.in_drivable_area(d.position)
    });
    let objects = ahead().any(|d| {
        let relevant = match d.category {
            Category::Vehicle4Wheel => d.activity != Activity::Parked,
            c => c.is_static_obstacle(),
        };
        relevant
            && d.visibility >= cfg.object_min_visibility
            && (map.in_drivable_area(d.position) || map.in_carpark(d.position))
    });
    Proximity {
        crosswalk: Presence::from_bool(map.crosswalk_in(near)),
        pedestrian: Presence::from_bool(pedestrian),
        two_wheel: Presence::from_bool(two_wheel),
        objects: Presence::from_bool(objects),
    }
}

/// Threshold heuristic over the frame's own kinematics.
pub fn label_action(frame: &RawFrame, cfg: &DiscretizerConfig) -> ActionLabel {
    let braking = frame.ego_acceleration < -cfg.brake_accel;
    if frame.ego_velocity.abs() < cfg.stopped_speed {
        return if braking {
            ActionLabel::Stop
        } else {
            ActionLabel::Idle
        };
    }
    let gas = frame.ego_acceleration > cfg.gas_accel;
    use ActionLabel::*;
    match (cfg.steering(frame.ego_steering), gas, braking) {
        (Steering::Forward, true, _) => Gas,
        (Steering::Forward, _, true) => Brake,
        (Steering::Forward, _, _) => GoStraight,
        (Steering::Left, true, _) => GasTurnLeft,
        (Steering::Left, _, true) => BrakeTurnLeft,
        (Steering::Left, _, _) => TurnLeft,
        (Steering::Right, true, _) => GasTurnRight,
        (Steering::Right, _, true) => BrakeTurnRight,
        (Steering::Right, _, _) => TurnRight,
    }
}

/// Route lookahead for a scene computed from its recorded poses.
pub fn scene_route(scene: &RawScene, map: &VectorMap, cfg: &DiscretizerConfig) -> RouteLookahead {
    let poses: Vec<RoutePose> = scene
        .frames
        .iter()
        .map(|f| RoutePose {
            t: f.t,
            position: f.ego_position,
            heading: f.ego_heading,
        })
        .collect();
    RouteLookahead::from_poses(
        &poses,
        |p| map.in_intersection(p),
        cfg.intersection_lookahead,
        cfg.turn_angle_deg.to_radians(),
    )
}

/// One step per frame; repeated identical steps are kept.
pub fn discretize_scene(
    scene: &RawScene,
    map: &VectorMap,
    cfg: &DiscretizerConfig,
) -> Result<Trajectory, DiscretizeError> {
    if scene.frames.is_empty() {
        return Err(DiscretizeError::EmptyScene(scene.scene_id.clone()));
    }
    scene.validate().map_err(DiscretizeError::InvalidScene)?;
    let oracle = SceneMap {
        map,
        route: scene_route(scene, map, cfg),
    };
    let steps = scene
        .frames
        .iter()
        .map(|f| Step {
            state: discretize_state(f, &oracle, cfg),
            action: label_action(f, cfg),
        })
        .collect();
    Ok(Trajectory {
        scene_id: scene.scene_id.clone(),
        tags: scene.tags.clone(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::map::Feature;
    use crate::scene::Detection;
    use crate::state::{NextIntersection, Predicate, StopArea};

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)]
    }

    /// One eastbound lane y in [-3.5, 0] over x in [0, 90], plus a carpark
    /// south of the road.
    fn fixture_map() -> VectorMap {
        VectorMap {
            name: Some("fixture".into()),
            features: vec![
                Feature::DrivableArea {
                    polygon: rect(0.0, -3.5, 90.0, 3.5),
                },
                Feature::Lane {
                    id: "east".into(),
                    centerline: vec![Point(0.0, -1.75), Point(90.0, -1.75)],
                    width: 3.5,
                },
                Feature::Lane {
                    id: "west".into(),
                    centerline: vec![Point(90.0, 1.75), Point(0.0, 1.75)],
                    width: 3.5,
                },
                Feature::Divider {
                    kind: crate::map::DividerKind::Road,
                    line: vec![Point(0.0, 0.0), Point(90.0, 0.0)],
                },
                Feature::Carpark {
                    polygon: rect(0.0, -20.0, 90.0, -3.5),
                },
            ],
        }
    }

    fn frame_at(x: f64, v: f64) -> RawFrame {
        RawFrame {
            t: 0.0,
            ego_position: Point(x, -1.75),
            ego_heading: 0.0,
            ego_velocity: v,
            ego_acceleration: 0.0,
            ego_steering: 0.0,
            detections: vec![],
        }
    }

    fn oracle(map: &VectorMap) -> SceneMap<'_> {
        SceneMap {
            map,
            route: RouteLookahead::default(),
        }
    }

    fn det(category: Category, x: f64, y: f64, visibility: f64, activity: Activity) -> Detection {
        Detection {
            category,
            position: Point(x, y),
            visibility,
            activity,
        }
    }

    #[test]
    fn quiet_baseline() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let s = discretize_state(&frame_at(45.0, 0.0), &oracle(&map), &cfg);
        assert_eq!(s, DiscreteState::default());
    }

    #[test]
    fn pedestrian_ahead() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let mut f = frame_at(20.0, 5.0);
        f.detections.push(det(
            Category::PedestrianAdult,
            28.0,
            -1.0,
            0.9,
            Activity::Moving,
        ));
        let s = discretize_state(&f, &oracle(&map), &cfg);
        assert_eq!(s.pedestrian_nearby, Presence::Yes);
        // behind the ego
        f.detections[0].position = Point(12.0, -1.0);
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).pedestrian_nearby,
            Presence::No
        );
        // on the sidewalk / carpark, outside the drivable area
        f.detections[0].position = Point(28.0, -5.0);
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).pedestrian_nearby,
            Presence::No
        );
    }

    #[test]
    fn parked_vehicle_is_not_an_object() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let mut f = frame_at(20.0, 5.0);
        f.detections.push(det(
            Category::Vehicle4Wheel,
            28.0,
            -1.0,
            0.9,
            Activity::Parked,
        ));
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).objects_nearby,
            Presence::No
        );
        f.detections[0].activity = Activity::Moving;
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).objects_nearby,
            Presence::Yes
        );
        f.detections[0].visibility = 0.5;
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).objects_nearby,
            Presence::No
        );
    }

    #[test]
    fn objects_count_in_carparks() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let mut f = frame_at(20.0, 5.0);
        f.detections.push(det(
            Category::TrafficCone,
            30.0,
            -6.0,
            0.7,
            Activity::Unknown,
        ));
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).objects_nearby,
            Presence::Yes
        );
    }

    #[test]
    fn two_wheeler_needs_rider() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let mut f = frame_at(20.0, 9.0);
        f.detections.push(det(
            Category::Bicycle,
            30.0,
            -1.75,
            0.3,
            Activity::WithoutRider,
        ));
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).two_wheel_nearby,
            Presence::No
        );
        f.detections[0].activity = Activity::WithRider;
        assert_eq!(
            discretize_state(&f, &oracle(&map), &cfg).two_wheel_nearby,
            Presence::Yes
        );
    }

    #[test]
    fn lane_position_and_block_progress() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let o = oracle(&map);
        let start = discretize_state(&frame_at(10.0, 5.0), &o, &cfg);
        assert_eq!(start.block_progress, BlockProgress::Start);
        let end = discretize_state(&frame_at(80.0, 5.0), &o, &cfg);
        assert_eq!(end.block_progress, BlockProgress::End);

        let mut wrong_way = frame_at(45.0, 5.0);
        wrong_way.ego_heading = std::f64::consts::PI;
        assert_eq!(
            discretize_state(&wrong_way, &o, &cfg).lane_position,
            LanePosition::Opposite
        );

        let mut on_divider = frame_at(45.0, 5.0);
        on_divider.ego_position = Point(45.0, -0.3);
        assert_eq!(
            discretize_state(&on_divider, &o, &cfg).lane_position,
            LanePosition::Centre
        );

        let mut off_road = frame_at(45.0, 5.0);
        off_road.ego_position = Point(45.0, 10.0);
        let s = discretize_state(&off_road, &o, &cfg);
        assert_eq!(s.lane_position, LanePosition::None);
        assert_eq!(s.block_progress, BlockProgress::None);
    }

    #[test]
    fn action_thresholds() {
        let cfg = DiscretizerConfig::default();
        let mut f = frame_at(0.0, 0.1);
        f.ego_acceleration = 0.1;
        assert_eq!(label_action(&f, &cfg), ActionLabel::Idle);
        f.ego_acceleration = -1.0;
        assert_eq!(label_action(&f, &cfg), ActionLabel::Stop);

        let mut f = frame_at(0.0, 5.0);
        f.ego_acceleration = 1.2;
        f.ego_steering = 0.3;
        assert_eq!(label_action(&f, &cfg), ActionLabel::GasTurnLeft);
        f.ego_acceleration = -1.2;
        f.ego_steering = -0.3;
        assert_eq!(label_action(&f, &cfg), ActionLabel::BrakeTurnRight);

        let mut f = frame_at(0.0, 6.0);
        f.ego_acceleration = -0.05;
        assert_eq!(label_action(&f, &cfg), ActionLabel::GoStraight);
    }

    #[test]
    fn velocity_bands() {
        let cfg = DiscretizerConfig::default();
        assert_eq!(cfg.velocity(0.19), Velocity::Stopped);
        assert_eq!(cfg.velocity(0.2), Velocity::Slow);
        assert_eq!(cfg.velocity(4.0), Velocity::Medium);
        assert_eq!(cfg.velocity(8.33), Velocity::High);
    }

    #[test]
    fn config_from_toml_overrides_defaults() {
        let cfg = DiscretizerConfig::from_toml("front_radius = 10.0\nslow_speed = 3.0\n").unwrap();
        assert_eq!(cfg.front_radius, 10.0);
        assert_eq!(cfg.slow_speed, 3.0);
        assert_eq!(cfg.medium_speed, 8.33);
        assert!(DiscretizerConfig::from_toml("bogus = 1").is_err());
        assert!(DiscretizerConfig::from_toml("slow_speed = 10.0").is_err());
    }

    #[test]
    fn scene_lengths() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let frames: Vec<RawFrame> = (0..40)
            .map(|i| {
                let mut f = frame_at(40.0 + i as f64 * 0.25, 0.5);
                f.t = i as f64 * 0.5;
                f
            })
            .collect();
        let scene = RawScene {
            scene_id: "s".into(),
            tags: ["rain".to_string()].into(),
            map_ref: None,
            frames,
        };
        let t = discretize_scene(&scene, &map, &cfg).unwrap();
        assert_eq!(t.steps.len(), 40);
        assert!(t.has_tag("rain"));

        let single = RawScene {
            frames: scene.frames[..1].to_vec(),
            ..scene.clone()
        };
        let t = discretize_scene(&single, &map, &cfg).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.transitions().count(), 0);

        let empty = RawScene {
            frames: vec![],
            ..scene
        };
        assert!(matches!(
            discretize_scene(&empty, &map, &cfg),
            Err(DiscretizeError::EmptyScene(_))
        ));
    }

    #[test]
    fn straight_cruise_fixture() {
        let map = fixture_map();
        let cfg = DiscretizerConfig::default();
        let frames: Vec<RawFrame> = (0..8)
            .map(|i| {
                let mut f = frame_at(32.0 + i as f64 * 3.0, 6.0);
                f.t = i as f64 * 0.5;
                f
            })
            .collect();
        let scene = RawScene {
            scene_id: "straight_cruise".into(),
            tags: Default::default(),
            map_ref: None,
            frames,
        };
        let t = discretize_scene(&scene, &map, &cfg).unwrap();
        let first = t.steps[0].state;
        assert!(t
            .steps
            .iter()
            .all(|s| s.state == first && s.action == ActionLabel::GoStraight));
        assert_eq!(first.get(Predicate::Velocity), "Medium");
        assert_eq!(first.get(Predicate::BlockProgress), "Middle");
        assert_eq!(first.next_intersection, NextIntersection::None);
        assert_eq!(first.stop_area_nearby, StopArea::None);
    }
}
