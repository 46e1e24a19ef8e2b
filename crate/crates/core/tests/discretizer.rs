use ipg_core::discretizer::{discretize_scene, discretize_state, label_action, DiscretizerConfig};
use ipg_core::geometry::Point;
use ipg_core::map::{RouteLookahead, SceneMap};
use ipg_core::scene::{Activity, Category, Detection, RawFrame, RawScene};
use ipg_core::state::Presence;
use ipg_core::synth::{World, WorldConfig};
use ipg_core::{Predicate, Trajectory};
use proptest::prelude::*;

const CATEGORIES: [Category; 11] = [
    Category::PedestrianAdult,
    Category::PedestrianChild,
    Category::PoliceOfficer,
    Category::Motorcycle,
    Category::Bicycle,
    Category::PersonalMobility,
    Category::Vehicle4Wheel,
    Category::Debris,
    Category::TrafficCone,
    Category::PushablePullable,
    Category::Other,
];

const ACTIVITIES: [Activity; 5] = [
    Activity::Moving,
    Activity::Parked,
    Activity::WithRider,
    Activity::WithoutRider,
    Activity::Unknown,
];

fn detection() -> impl Strategy<Value = Detection> {
    (
        0..11usize,
        -30.0..30.0f64,
        -30.0..30.0f64,
        0.0..=1.0f64,
        0..5usize,
    )
        .prop_map(|(c, dx, dy, vis, a)| Detection {
            category: CATEGORIES[c],
            position: Point(dx, dy),
            visibility: vis,
            activity: ACTIVITIES[a],
        })
}

/// Frames anywhere in and around the synthetic world, detections relative to the ego.
fn frame() -> impl Strategy<Value = RawFrame> {
    (
        -200.0..1200.0f64,
        -150.0..150.0f64,
        -3.2..3.2f64,
        0.0..16.0f64,
        -4.0..4.0f64,
        -0.6..0.6f64,
        prop::collection::vec(detection(), 0..8),
    )
        .prop_map(|(x, y, h, v, a, d, dets)| RawFrame {
            t: 0.0,
            ego_position: Point(x, y),
            ego_heading: h,
            ego_velocity: v,
            ego_acceleration: a,
            ego_steering: d,
            detections: dets
                .into_iter()
                .map(|mut det| {
                    det.position = Point(x + det.position.x(), y + det.position.y());
                    det
                })
                .collect(),
        })
}

fn world() -> World {
    World::new(WorldConfig::mixed()).unwrap()
}

const PROXIMITY: [Predicate; 4] = [
    Predicate::PedestrianNearby,
    Predicate::TwoWheelNearby,
    Predicate::ObjectsNearby,
    Predicate::CrosswalkNearby,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_frame_gets_a_full_assignment(f in frame()) {
        let w = world();
        let oracle = SceneMap { map: &w.map, route: RouteLookahead::default() };
        let s = discretize_state(&f, &oracle, &DiscretizerConfig::default());
        for p in Predicate::ALL {
            prop_assert!(p.accepts(s.get(p)));
        }
    }

    #[test]
    fn shrinking_the_front_area_only_removes_presence(f in frame(), shrink in 0.05..1.0f64) {
        let w = world();
        let oracle = SceneMap { map: &w.map, route: RouteLookahead::default() };
        let wide = DiscretizerConfig::default();
        let narrow = DiscretizerConfig { front_radius: wide.front_radius * shrink, ..wide.clone() };
        let (a, b) = (discretize_state(&f, &oracle, &wide), discretize_state(&f, &oracle, &narrow));
        for p in PROXIMITY {
            if a.get(p) == Presence::No.as_str() {
                prop_assert_eq!(b.get(p), Presence::No.as_str());
            }
        }
    }

    #[test]
    fn labels_ignore_history(frames in prop::collection::vec(frame(), 1..10)) {
        let cfg = DiscretizerConfig::default();
        let forward: Vec<_> = frames.iter().map(|f| label_action(f, &cfg)).collect();
        let backward: Vec<_> = frames.iter().rev().map(|f| label_action(f, &cfg)).collect();
        prop_assert!(forward.iter().eq(backward.iter().rev()));
    }
}

#[test]
fn scene_keeps_order_tags_and_repeats() {
    let w = world();
    let f = RawFrame {
        t: 0.0,
        ego_position: Point(75.0, -1.75),
        ego_heading: 0.0,
        ego_velocity: 6.0,
        ego_acceleration: 0.0,
        ego_steering: 0.0,
        detections: vec![],
    };
    let frames: Vec<RawFrame> = (0..40)
        .map(|i| RawFrame {
            t: i as f64 * 0.5,
            ego_position: Point(75.0 + 0.1 * i as f64, -1.75),
            ..f.clone()
        })
        .collect();
    let scene = RawScene {
        scene_id: "cruise".into(),
        tags: ["rain".to_string()].into(),
        map_ref: None,
        frames,
    };
    let traj: Trajectory = discretize_scene(&scene, &w.map, &DiscretizerConfig::default()).unwrap();
    assert_eq!(traj.steps.len(), 40);
    assert!(traj.has_tag("rain"));
    assert!(traj.steps.windows(2).all(|p| p[0] == p[1]));
}
