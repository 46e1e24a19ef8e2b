//! Axis-aligned synthetic town: one east-west avenue crossed by north-south
//! streets at regular intervals. Both road types carry two lanes per
//! direction, 3.5 m wide, with right-hand traffic.

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::map::{DividerKind, Feature, StopKind, VectorMap};

pub const LANE_WIDTH: f64 = 3.5;
/// Half width of every road.
pub const HALF_ROAD: f64 = 2.0 * LANE_WIDTH;
pub const INNER: f64 = 0.5 * LANE_WIDTH;
pub const OUTER: f64 = 1.5 * LANE_WIDTH;
/// Crosswalk depth on the west approach of each intersection.
pub const CROSSWALK_DEPTH: f64 = 4.0;
/// Stop area depth behind the stop line.
pub const STOP_AREA_DEPTH: f64 = 10.0;
/// Traffic-light mast offset south of the avenue edge.
pub const LIGHT_OFFSET: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Stop,
    Light,
    Yield,
    Uncontrolled,
}

/// Intersection controls, assigned cyclically along the avenue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPattern {
    Mixed,
    StopSigns,
    Custom(Vec<Control>),
}

impl ControlPattern {
    pub fn controls(&self) -> Vec<Control> {
        match self {
            ControlPattern::Mixed => vec![
                Control::Stop,
                Control::Light,
                Control::Yield,
                Control::Uncontrolled,
            ],
            ControlPattern::StopSigns => vec![Control::Stop],
            ControlPattern::Custom(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub intersections: usize,
    pub block_length: f64,
    /// Length of each cross street arm beyond the avenue.
    pub cross_street_length: f64,
    pub controls: ControlPattern,
    /// Probability that a pedestrian waits on the crosswalk of an approach.
    pub crosswalk_pedestrian_rate: f64,
    /// Probability of a mid-block pedestrian per block driven.
    pub jaywalker_rate: f64,
    /// Probability of a cyclist in the adjacent lane per block driven.
    pub cyclist_rate: f64,
    /// Probability that a signal shows red on approach.
    pub red_light_rate: f64,
    /// Mean number of oncoming vehicles per scene.
    pub oncoming_rate: f64,
    pub night_rate: f64,
    pub rain_rate: f64,
    /// Carpark with traffic cones on the south side of every n-th block; 0 disables.
    pub carpark_every: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            intersections: 6,
            block_length: 150.0,
            cross_street_length: 120.0,
            controls: ControlPattern::Mixed,
            crosswalk_pedestrian_rate: 0.3,
            jaywalker_rate: 0.2,
            cyclist_rate: 0.25,
            red_light_rate: 0.5,
            oncoming_rate: 2.0,
            night_rate: 0.2,
            rain_rate: 0.15,
            carpark_every: 2,
        }
    }
}

impl WorldConfig {
    pub fn mixed() -> Self {
        Self::default()
    }

    pub fn stop_signs() -> Self {
        WorldConfig {
            controls: ControlPattern::StopSigns,
            block_length: 450.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut errs = Vec::new();
        if self.intersections == 0 {
            errs.push("at least one intersection is required".to_string());
        }
        if !(self.block_length >= 120.0) {
            errs.push(format!(
                "block_length {} must be at least 120 m",
                self.block_length
            ));
        }
        if !(self.cross_street_length >= 30.0) {
            errs.push(format!(
                "cross_street_length {} must be at least 30 m",
                self.cross_street_length
            ));
        }
        if self.controls.controls().is_empty() {
            errs.push("control pattern is empty".to_string());
        }
        for (name, p) in [
            ("crosswalk_pedestrian_rate", self.crosswalk_pedestrian_rate),
            ("jaywalker_rate", self.jaywalker_rate),
            ("cyclist_rate", self.cyclist_rate),
            ("red_light_rate", self.red_light_rate),
            ("night_rate", self.night_rate),
            ("rain_rate", self.rain_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("{name} {p} is not a probability"));
            }
        }
        if !(self.oncoming_rate >= 0.0 && self.oncoming_rate <= 20.0) {
            errs.push(format!(
                "oncoming_rate {} must lie in [0, 20]",
                self.oncoming_rate
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.join("; "))
        }
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub map: VectorMap,
    /// Centre x of each intersection, ascending.
    pub centres: Vec<f64>,
    pub controls: Vec<Control>,
    /// Carpark rectangles `(x0, x1)` on the south side, `y ∈ [-25, -9]`.
    pub carparks: Vec<(f64, f64)>,
    pub avenue: (f64, f64),
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self, String> {
        config.validate()?;
        let b = config.block_length;
        let l = config.cross_street_length;
        let centres: Vec<f64> = (0..config.intersections).map(|k| k as f64 * b).collect();
        let pattern = config.controls.controls();
        let controls: Vec<Control> = (0..centres.len())
            .map(|k| pattern[k % pattern.len()])
            .collect();
        let avenue = (-b, centres.last().copied().unwrap_or(0.0) + 2.0 * b);
        let h = HALF_ROAD;
        let mut f = Vec::new();

        f.push(Feature::DrivableArea {
            polygon: rect(avenue.0, -h, avenue.1, h),
        });
        for &xc in &centres {
            f.push(Feature::DrivableArea {
                polygon: rect(xc - h, -l, xc + h, l),
            });
            f.push(Feature::Intersection {
                polygon: rect(xc - h, -h, xc + h, h),
            });
        }

        // avenue segments between intersection boxes
        let mut bounds = vec![avenue.0];
        for &xc in &centres {
            bounds.push(xc - h);
            bounds.push(xc + h);
        }
        bounds.push(avenue.1);
        for (seg, pair) in bounds.chunks(2).enumerate() {
            let (x0, x1) = (pair[0], pair[1]);
            for (tag, y) in [("i", -INNER), ("o", -OUTER)] {
                f.push(Feature::Lane {
                    id: format!("ave-{seg}-e{tag}"),
                    centerline: vec![Point(x0, y), Point(x1, y)],
                    width: LANE_WIDTH,
                });
            }
            for (tag, y) in [("i", INNER), ("o", OUTER)] {
                f.push(Feature::Lane {
                    id: format!("ave-{seg}-w{tag}"),
                    centerline: vec![Point(x1, y), Point(x0, y)],
                    width: LANE_WIDTH,
                });
            }
            f.push(Feature::Divider {
                kind: DividerKind::Road,
                line: vec![Point(x0, 0.0), Point(x1, 0.0)],
            });
            for y in [-LANE_WIDTH, LANE_WIDTH] {
                f.push(Feature::Divider {
                    kind: DividerKind::Lane,
                    line: vec![Point(x0, y), Point(x1, y)],
                });
            }
        }

        for (k, &xc) in centres.iter().enumerate() {
            for (arm, (y0, y1)) in [("n", (h, l)), ("s", (-h, -l))] {
                let (from, to) = if arm == "n" { (y0, y1) } else { (y1, y0) };
                // northbound on the east side, southbound on the west side
                for (tag, dx) in [("i", INNER), ("o", OUTER)] {
                    f.push(Feature::Lane {
                        id: format!("x{k}{arm}-n{tag}"),
                        centerline: vec![
                            Point(xc + dx, from.min(to)),
                            Point(xc + dx, from.max(to)),
                        ],
                        width: LANE_WIDTH,
                    });
                    f.push(Feature::Lane {
                        id: format!("x{k}{arm}-s{tag}"),
                        centerline: vec![
                            Point(xc - dx, from.max(to)),
                            Point(xc - dx, from.min(to)),
                        ],
                        width: LANE_WIDTH,
                    });
                }
                f.push(Feature::Divider {
                    kind: DividerKind::Road,
                    line: vec![Point(xc, y0), Point(xc, y1)],
                });
                for dx in [-LANE_WIDTH, LANE_WIDTH] {
                    f.push(Feature::Divider {
                        kind: DividerKind::Lane,
                        line: vec![Point(xc + dx, y0), Point(xc + dx, y1)],
                    });
                }
            }

            let west = xc - h;
            f.push(Feature::Crosswalk {
                polygon: rect(west - CROSSWALK_DEPTH, -h, west, h),
            });
            let line = west - CROSSWALK_DEPTH;
            match controls[k] {
                Control::Stop | Control::Yield => f.push(Feature::StopArea {
                    kind: if controls[k] == Control::Stop {
                        StopKind::Stop
                    } else {
                        StopKind::Yield
                    },
                    polygon: rect(line - STOP_AREA_DEPTH, -h, line, 0.0),
                }),
                Control::Light => f.push(Feature::TrafficLight {
                    position: Point(west, -h - LIGHT_OFFSET),
                    facing: std::f64::consts::PI,
                }),
                Control::Uncontrolled => {}
            }
        }

        let mut carparks = Vec::new();
        if config.carpark_every > 0 {
            for (k, &xc) in centres.iter().enumerate() {
                if k % config.carpark_every == 0 {
                    let x0 = xc + 30.0;
                    let x1 = x0 + 40.0;
                    f.push(Feature::Carpark {
                        polygon: rect(x0, -25.0, x1, -9.0),
                    });
                    carparks.push((x0, x1));
                }
            }
        }

        Ok(World {
            config,
            map: VectorMap {
                name: Some("synthtown".to_string()),
                features: f,
            },
            centres,
            controls,
            carparks,
            avenue,
        })
    }

    /// The stop line of the west approach of intersection `k`.
    pub fn stop_line(&self, k: usize) -> f64 {
        self.centres[k] - HALF_ROAD - CROSSWALK_DEPTH
    }

    /// West edge of the intersection box.
    pub fn box_entry(&self, k: usize) -> f64 {
        self.centres[k] - HALF_ROAD
    }

    /// Index of the first intersection whose box lies ahead of or around `x`.
    pub fn next_intersection(&self, x: f64) -> Option<usize> {
        self.centres.iter().position(|xc| xc + HALF_ROAD > x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_queries() {
        let w = World::new(WorldConfig::default()).unwrap();
        assert_eq!(w.centres.len(), 6);
        let m = &w.map;
        assert!(m.in_drivable_area(Point(75.0, -1.75)));
        assert!(!m.in_drivable_area(Point(75.0, -8.0)));
        assert!(m.in_intersection(Point(150.0, 0.0)));
        let lane = m.lane_at(Point(75.0, -INNER)).unwrap();
        assert_eq!(lane.lane_id, "ave-1-ei");
        assert!(lane.projection.heading.abs() < 1e-12);
        let north = m.lane_at(Point(150.0 + INNER, 30.0)).unwrap();
        assert!((north.projection.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let south = m.lane_at(Point(150.0 - INNER, -30.0)).unwrap();
        assert!((south.projection.heading + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((m.divider_distance(Point(75.0, -INNER)).unwrap() - INNER).abs() < 1e-12);
        assert!(w.map.in_carpark(Point(40.0, -10.0)));
    }

    #[test]
    fn control_pattern_cycles() {
        let w = World::new(WorldConfig::mixed()).unwrap();
        assert_eq!(
            w.controls[..5],
            [
                Control::Stop,
                Control::Light,
                Control::Yield,
                Control::Uncontrolled,
                Control::Stop
            ]
        );
        let stops = World::new(WorldConfig::stop_signs()).unwrap();
        assert!(stops.controls.iter().all(|c| *c == Control::Stop));
        assert_eq!(w.next_intersection(100.0), Some(1));
        assert_eq!(w.next_intersection(150.0 + 6.9), Some(1));
        assert_eq!(w.next_intersection(1e6), None);
    }

    #[test]
    fn rejects_bad_geometry() {
        let cfg = WorldConfig {
            block_length: 50.0,
            jaywalker_rate: 1.5,
            ..Default::default()
        };
        let err = World::new(cfg).unwrap_err();
        assert!(
            err.contains("block_length") && err.contains("jaywalker_rate"),
            "{err}"
        );
    }
}
