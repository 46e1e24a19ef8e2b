//! Vector road map and the query surface the discretizer relies on.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    point_in_polygon, project_onto_polyline, wrap_angle, Point, Projection, Sector,
};
use crate::state::{NextIntersection, StopArea};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DividerKind {
    Lane,
    Road,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Stop,
    Yield,
    TurnStop,
}

impl StopKind {
    fn rank(self) -> u8 {
        match self {
            StopKind::Stop => 0,
            StopKind::Yield => 1,
            StopKind::TurnStop => 2,
        }
    }

    pub fn to_predicate(self) -> StopArea {
        match self {
            StopKind::Stop => StopArea::Stop,
            StopKind::Yield => StopArea::Yield,
            StopKind::TurnStop => StopArea::TurnStop,
        }
    }
}

/// A typed map feature. Lane centrelines run in the direction of travel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Feature {
    Lane {
        id: String,
        centerline: Vec<Point>,
        width: f64,
    },
    Divider {
        kind: DividerKind,
        line: Vec<Point>,
    },
    DrivableArea {
        polygon: Vec<Point>,
    },
    Carpark {
        polygon: Vec<Point>,
    },
    Crosswalk {
        polygon: Vec<Point>,
    },
    StopArea {
        kind: StopKind,
        polygon: Vec<Point>,
    },
    TrafficLight {
        position: Point,
        /// Direction the signal face points to, radians.
        facing: f64,
    },
    Intersection {
        polygon: Vec<Point>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub features: Vec<Feature>,
}

/// Result of matching a position to a lane.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneMatch {
    pub lane_id: String,
    pub projection: Projection,
}

/// Read-only geometric queries over a map, plus the recorded-route lookahead.
pub trait MapOracle {
    fn in_drivable_area(&self, p: Point) -> bool;
    fn in_carpark(&self, p: Point) -> bool;
    fn in_intersection(&self, p: Point) -> bool;
    /// Lane whose corridor contains `p`; nearest centreline wins, ties by id.
    fn lane_at(&self, p: Point) -> Option<LaneMatch>;
    /// Distance to the nearest lane or road divider.
    fn divider_distance(&self, p: Point) -> Option<f64>;
    fn crosswalk_in(&self, sector: &Sector) -> bool;
    /// Most restrictive stop area reaching into the sector.
    fn stop_area_in(&self, sector: &Sector) -> StopArea;
    fn traffic_light_facing(&self, sector: &Sector, tolerance: f64) -> bool;
    /// Manoeuvre the recorded route takes at the next intersection.
    fn next_manoeuvre(&self, t: f64) -> NextIntersection;
}

impl VectorMap {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn polygons<'a>(
        &'a self,
        pick: impl Fn(&'a Feature) -> Option<&'a Vec<Point>> + 'a,
    ) -> impl Iterator<Item = &'a Vec<Point>> + 'a {
        self.features.iter().filter_map(pick)
    }

    pub fn in_drivable_area(&self, p: Point) -> bool {
        self.polygons(|f| match f {
            Feature::DrivableArea { polygon } => Some(polygon),
            _ => None,
        })
        .any(|poly| point_in_polygon(p, poly))
    }

    pub fn in_carpark(&self, p: Point) -> bool {
        self.polygons(|f| match f {
            Feature::Carpark { polygon } => Some(polygon),
            _ => None,
        })
        .any(|poly| point_in_polygon(p, poly))
    }

    pub fn in_intersection(&self, p: Point) -> bool {
        self.polygons(|f| match f {
            Feature::Intersection { polygon } => Some(polygon),
            _ => None,
        })
        .any(|poly| point_in_polygon(p, poly))
    }

    pub fn lane_at(&self, p: Point) -> Option<LaneMatch> {
        let mut best: Option<(&str, Projection)> = None;
        for f in &self.features {
            if let Feature::Lane {
                id,
                centerline,
                width,
            } = f
            {
                let Some(proj) = project_onto_polyline(p, centerline) else {
                    continue;
                };
                if proj.distance > width / 2.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bid, bp)) => {
                        proj.distance < bp.distance
                            || (proj.distance == bp.distance && id.as_str() < bid)
                    }
                };
                if better {
                    best = Some((id, proj));
                }
            }
        }
        best.map(|(id, projection)| LaneMatch {
            lane_id: id.to_string(),
            projection,
        })
    }

    pub fn divider_distance(&self, p: Point) -> Option<f64> {
        self.features
            .iter()
            .filter_map(|f| match f {
                Feature::Divider { line, .. } => {
                    project_onto_polyline(p, line).map(|pr| pr.distance)
                }
                _ => None,
            })
            .min_by(f64::total_cmp)
    }

    pub fn crosswalk_in(&self, sector: &Sector) -> bool {
        self.polygons(|f| match f {
            Feature::Crosswalk { polygon } => Some(polygon),
            _ => None,
        })
        .any(|poly| sector.intersects_polygon(poly))
    }

    pub fn stop_area_in(&self, sector: &Sector) -> StopArea {
        self.features
            .iter()
            .filter_map(|f| match f {
                Feature::StopArea { kind, polygon } if sector.intersects_polygon(polygon) => {
                    Some(*kind)
                }
                _ => None,
            })
            .min_by_key(|k| k.rank())
            .map_or(StopArea::None, StopKind::to_predicate)
    }

    pub fn traffic_light_facing(&self, sector: &Sector, tolerance: f64) -> bool {
        self.features.iter().any(|f| match f {
            Feature::TrafficLight { position, facing } => {
                sector.contains(*position)
                    && wrap_angle(facing - (sector.heading + std::f64::consts::PI)).abs()
                        <= tolerance
            }
            _ => false,
        })
    }
}

/// A map bound to one scene's recorded route.
pub struct SceneMap<'a> {
    pub map: &'a VectorMap,
    pub route: RouteLookahead,
}

impl MapOracle for SceneMap<'_> {
    fn in_drivable_area(&self, p: Point) -> bool {
        self.map.in_drivable_area(p)
    }

    fn in_carpark(&self, p: Point) -> bool {
        self.map.in_carpark(p)
    }

    fn in_intersection(&self, p: Point) -> bool {
        self.map.in_intersection(p)
    }

    fn lane_at(&self, p: Point) -> Option<LaneMatch> {
        self.map.lane_at(p)
    }

    fn divider_distance(&self, p: Point) -> Option<f64> {
        self.map.divider_distance(p)
    }

    fn crosswalk_in(&self, sector: &Sector) -> bool {
        self.map.crosswalk_in(sector)
    }

    fn stop_area_in(&self, sector: &Sector) -> StopArea {
        self.map.stop_area_in(sector)
    }

    fn traffic_light_facing(&self, sector: &Sector, tolerance: f64) -> bool {
        self.map.traffic_light_facing(sector, tolerance)
    }

    fn next_manoeuvre(&self, t: f64) -> NextIntersection {
        self.route.at(t)
    }
}

/// Per-frame manoeuvre at the upcoming intersection, read off the recorded
/// future of the scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteLookahead {
    entries: Vec<(f64, NextIntersection)>,
}

/// A pose sample along the recorded route.
#[derive(Debug, Clone, Copy)]
pub struct RoutePose {
    pub t: f64,
    pub position: Point,
    pub heading: f64,
}

impl RouteLookahead {
    pub fn from_entries(entries: Vec<(f64, NextIntersection)>) -> Self {
        RouteLookahead { entries }
    }

    /// `lookahead` bounds the path distance to the intersection entry;
    /// heading changes beyond `turn_angle` classify as turns.
    pub fn from_poses(
        poses: &[RoutePose],
        in_intersection: impl Fn(Point) -> bool,
        lookahead: f64,
        turn_angle: f64,
    ) -> Self {
        let n = poses.len();
        let inside: Vec<bool> = poses.iter().map(|p| in_intersection(p.position)).collect();
        let mut travelled = vec![0.0; n];
        for i in 1..n {
            travelled[i] = travelled[i - 1] + poses[i].position.dist(poses[i - 1].position);
        }
        // maximal runs of consecutive frames inside an intersection
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < n {
            if inside[i] {
                let start = i;
                while i < n && inside[i] {
                    i += 1;
                }
                runs.push((start, i));
            } else {
                i += 1;
            }
        }
        let classify = |start: usize, end: usize| {
            let before = poses[start.saturating_sub(1)].heading;
            let after = poses[end.min(n - 1)].heading;
            let delta = wrap_angle(after - before);
            if delta > turn_angle {
                NextIntersection::Left
            } else if delta < -turn_angle {
                NextIntersection::Right
            } else {
                NextIntersection::Straight
            }
        };
        let entries = (0..n)
            .map(|i| {
                let value = runs
                    .iter()
                    .find(|(_, end)| *end > i)
                    .and_then(|&(start, end)| {
                        if start <= i || travelled[start] - travelled[i] <= lookahead {
                            Some(classify(start, end))
                        } else {
                            None
                        }
                    })
                    .unwrap_or(NextIntersection::None);
                (poses[i].t, value)
            })
            .collect();
        RouteLookahead { entries }
    }

    pub fn at(&self, t: f64) -> NextIntersection {
        match self.entries.binary_search_by(|(et, _)| et.total_cmp(&t)) {
            Ok(i) => self.entries[i].1,
            Err(_) => NextIntersection::None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)]
    }

    #[test]
    fn map_json_is_a_typed_feature_list() {
        let json = r#"{"features":[
            {"type":"lane","id":"a","centerline":[[0,0],[10,0]],"width":3.5},
            {"type":"stop_area","kind":"turn_stop","polygon":[[0,0],[1,0],[1,1]]},
            {"type":"traffic_light","position":[5,5],"facing":3.14}
        ]}"#;
        let map = VectorMap::from_json(json).unwrap();
        assert_eq!(map.features.len(), 3);
        assert!(VectorMap::from_json(r#"{"features":[{"type":"tree"}]}"#).is_err());
    }

    #[test]
    fn lane_tie_break_by_id() {
        let map = VectorMap {
            name: None,
            features: vec![
                Feature::Lane {
                    id: "b".into(),
                    centerline: vec![Point(0.0, 1.0), Point(10.0, 1.0)],
                    width: 4.0,
                },
                Feature::Lane {
                    id: "a".into(),
                    centerline: vec![Point(0.0, -1.0), Point(10.0, -1.0)],
                    width: 4.0,
                },
            ],
        };
        assert_eq!(map.lane_at(Point(5.0, 0.0)).unwrap().lane_id, "a");
        assert_eq!(map.lane_at(Point(5.0, 0.5)).unwrap().lane_id, "b");
        assert!(map.lane_at(Point(5.0, 5.0)).is_none());
    }

    #[test]
    fn stop_area_priority() {
        let map = VectorMap {
            name: None,
            features: vec![
                Feature::StopArea {
                    kind: StopKind::TurnStop,
                    polygon: rect(5.0, -1.0, 6.0, 1.0),
                },
                Feature::StopArea {
                    kind: StopKind::Stop,
                    polygon: rect(20.0, -1.0, 21.0, 1.0),
                },
            ],
        };
        let sector = |r| Sector {
            apex: Point(0.0, 0.0),
            heading: 0.0,
            half_angle: std::f64::consts::FRAC_PI_4,
            radius: r,
        };
        assert_eq!(map.stop_area_in(&sector(10.0)), StopArea::TurnStop);
        assert_eq!(map.stop_area_in(&sector(30.0)), StopArea::Stop);
        assert_eq!(map.stop_area_in(&sector(3.0)), StopArea::None);
    }

    #[test]
    fn traffic_light_must_face_ego() {
        let mk = |facing| VectorMap {
            name: None,
            features: vec![Feature::TrafficLight {
                position: Point(20.0, 2.0),
                facing,
            }],
        };
        let sector = Sector {
            apex: Point(0.0, 0.0),
            heading: 0.0,
            half_angle: std::f64::consts::FRAC_PI_4,
            radius: 30.0,
        };
        let tol = std::f64::consts::FRAC_PI_4;
        assert!(mk(std::f64::consts::PI).traffic_light_facing(&sector, tol));
        assert!(!mk(0.0).traffic_light_facing(&sector, tol));
    }

    #[test]
    fn route_lookahead_classifies_turns() {
        // straight approach, left turn inside the box at x in [20, 30]
        let box_ = rect(20.0, -5.0, 30.0, 5.0);
        let poses: Vec<RoutePose> = [
            (0.0, 0.0, 0.0),
            (10.0, 0.0, 0.0),
            (21.0, 0.0, 0.5),
            (26.0, 3.0, 1.2),
            (26.0, 10.0, FRAC_PI_2),
            (26.0, 20.0, FRAC_PI_2),
        ]
        .iter()
        .enumerate()
        .map(|(i, &(x, y, h))| RoutePose {
            t: i as f64 * 0.5,
            position: Point(x, y),
            heading: h,
        })
        .collect();
        let route = RouteLookahead::from_poses(&poses, |p| point_in_polygon(p, &box_), 15.0, 0.785);
        assert_eq!(route.at(0.0), NextIntersection::None); // 21 m away
        assert_eq!(route.at(0.5), NextIntersection::Left);
        assert_eq!(route.at(1.0), NextIntersection::Left);
        assert_eq!(route.at(2.0), NextIntersection::None);
        assert_eq!(route.at(0.25), NextIntersection::None);
    }
}
