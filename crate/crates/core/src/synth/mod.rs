//! Seeded synthetic scenes with scripted ego behaviour and a ground-truth
//! log of every scripted situation.
//!
//! The ego starts eastbound on the avenue a short distance before an
//! intersection. Decisions are drawn once per situation (one stop sign, one
//! pedestrian, one cyclist), not per frame, so a non-compliant encounter
//! stays non-compliant until it is over. The scripted driver perceives signs,
//! signals and road users through the same view sectors the discretiser uses.

pub mod world;

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::desires::Registry;
use crate::discretizer::{discretize_scene, DiscretizeError, DiscretizerConfig};
use crate::geometry::Point;
use crate::scene::{Activity, Category, Detection, RawFrame, RawScene};
use crate::state::StopArea;

pub use world::{Control, ControlPattern, World, WorldConfig};
use world::{CROSSWALK_DEPTH, HALF_ROAD, INNER, LANE_WIDTH};

/// Sampling interval, seconds.
pub const DT: f64 = 0.5;
const WHEELBASE: f64 = 2.7;
const TURN_SPEED: f64 = 4.5;
const FOLLOW_SPEED: f64 = 4.5;
const GAS: f64 = 1.5;
const MIN_BRAKE: f64 = 0.6;
const MAX_SPEED: f64 = 14.0;
const CHANGE_STEER: f64 = 0.15;
const SETTLE_STEER: f64 = 0.05;
const CHANGE_HEADING: f64 = 0.25;
const SETTLE_HEADING: f64 = 0.08;
/// Distance to the box entry at which intersection decisions are drawn.
const PLAN_RANGE: f64 = 70.0;
/// Detections farther than this from the ego are not reported.
const SENSOR_RANGE: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid world: {0}")]
    World(String),
    #[error("invalid policy `{name}`: {reason}")]
    Policy { name: String, reason: String },
    #[error("n_frames must be at least 1")]
    NoFrames,
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
}

/// Per-situation behaviour probabilities of the scripted ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPolicy {
    pub name: String,
    /// P(stop | stop sign ahead).
    pub stop_sign_compliance: f64,
    /// P(stop | red signal ahead).
    pub red_light_compliance: f64,
    /// P(brake | pedestrian ahead).
    pub pedestrian_yield: f64,
    /// P(accelerate past | cyclist ahead in the adjacent lane).
    pub cyclist_gas: f64,
    /// P(turn) at an intersection when in the inner lane; split evenly left/right.
    pub turn_rate: f64,
    /// P(lane change) per block.
    pub lane_change_rate: f64,
    /// Cruise speed range, m/s.
    pub cruise_speed: (f64, f64),
}

impl ScriptedPolicy {
    pub fn compliant() -> Self {
        ScriptedPolicy {
            name: "compliant".into(),
            stop_sign_compliance: 0.95,
            red_light_compliance: 0.95,
            pedestrian_yield: 0.95,
            cyclist_gas: 0.0,
            turn_rate: 0.4,
            lane_change_rate: 0.3,
            cruise_speed: (11.5, 13.5),
        }
    }

    /// Never stops at stop signs.
    pub fn reckless() -> Self {
        ScriptedPolicy {
            name: "reckless".into(),
            stop_sign_compliance: 0.0,
            red_light_compliance: 0.3,
            pedestrian_yield: 0.3,
            cyclist_gas: 0.7,
            turn_rate: 0.3,
            lane_change_rate: 0.4,
            cruise_speed: (12.0, 14.0),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "compliant" => Some(Self::compliant()),
            "reckless" => Some(Self::reckless()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| {
            Err(SynthError::Policy {
                name: self.name.clone(),
                reason,
            })
        };
        for (field, p) in [
            ("stop_sign_compliance", self.stop_sign_compliance),
            ("red_light_compliance", self.red_light_compliance),
            ("pedestrian_yield", self.pedestrian_yield),
            ("cyclist_gas", self.cyclist_gas),
            ("turn_rate", self.turn_rate),
            ("lane_change_rate", self.lane_change_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{field} = {p} is not a probability"));
            }
        }
        let (lo, hi) = self.cruise_speed;
        if !(7.0..=MAX_SPEED).contains(&lo) || !(lo..=MAX_SPEED).contains(&hi) {
            return fail(format!(
                "cruise_speed ({lo}, {hi}) must satisfy 7 <= lo <= hi <= {MAX_SPEED}"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Situation {
    StopSign,
    TrafficLight,
    CrosswalkPedestrian,
    Jaywalker,
    Cyclist,
    TurnLeft,
    TurnRight,
    LaneChangeLeft,
    LaneChangeRight,
}

impl Situation {
    /// The desire the situation scripts.
    pub fn desire(self) -> &'static str {
        match self {
            Situation::StopSign => "Approach Stop Sign",
            Situation::TrafficLight => "Approach Traffic Light",
            Situation::CrosswalkPedestrian => "Peds at Crosswalk",
            Situation::Jaywalker => "Non-Crosswalk Peds",
            Situation::Cyclist => "Ignore Two-Wheel Vehicle",
            Situation::TurnLeft => "Turn Left",
            Situation::TurnRight => "Turn Right",
            Situation::LaneChangeLeft => "Lane Change (to lf)",
            Situation::LaneChangeRight => "Lane Change (to rt)",
        }
    }
}

/// One scripted situation whose desire region was entered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub scene_id: String,
    pub situation: Situation,
    pub desire: String,
    /// The scripted decision was to fulfil the desire.
    pub intended: bool,
    pub first_frame: usize,
    pub last_frame: usize,
    /// Frames of the window whose discrete state lies in the desire region.
    pub region_frames: usize,
    /// Some frame of the window took a fulfilling action from inside the region.
    pub fulfilled: bool,
}

struct Encounter {
    situation: Situation,
    intended: bool,
    first: usize,
    last: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Longitudinal {
    Cruise,
    /// `then` is the stop target still to be planned after a hard first phase.
    Stopping {
        decel: f64,
        steps_left: usize,
        then: Option<f64>,
    },
    Halted {
        frames_left: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lateral {
    Keep,
    /// `dir` is +1 for a leftward change.
    Change {
        dir: f64,
        target: f64,
        settling: bool,
        enc: usize,
    },
    Turn(TurnPlan),
    /// On a cross street after a turn.
    Turned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TurnPlan {
    dir: f64,
    entry: Point,
    radius: f64,
    started: bool,
    progress: f64,
    braking: bool,
    enc: usize,
}

impl TurnPlan {
    fn steering(&self) -> f64 {
        self.dir * (WHEELBASE / self.radius).atan()
    }
}

#[derive(Debug, Clone, Copy)]
struct Pedestrian {
    position: Point,
    category: Category,
    /// Frame from which the pedestrian is gone.
    leaves_at: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    category: Category,
    activity: Activity,
    start: Point,
    velocity: Point,
    visibility: f64,
    from: usize,
    until: usize,
}

impl Agent {
    fn at(&self, i: usize) -> Point {
        self.start
            .add(self.velocity.scale((i - self.from) as f64 * DT))
    }

    fn active(&self, i: usize) -> bool {
        self.from <= i && i < self.until
    }
}

struct IntersectionPlan {
    k: usize,
    control: Control,
    comply_stop: bool,
    red: bool,
    comply_red: bool,
    ped: Option<usize>,
    ped_yield: bool,
    hold: usize,
    stop_enc: Option<usize>,
    light_enc: Option<usize>,
    ped_enc: Option<usize>,
}

struct Cyclist {
    agent: usize,
    gas: bool,
    enc: Option<usize>,
}

struct Jaywalker {
    ped: usize,
    yield_: bool,
    enc: Option<usize>,
}

struct Sim<'a> {
    world: &'a World,
    policy: &'a ScriptedPolicy,
    perception: &'a DiscretizerConfig,
    rng: ChaCha8Rng,
    pos: Point,
    heading: f64,
    v: f64,
    lane_y: f64,
    cruise: f64,
    longitudinal: Longitudinal,
    lateral: Lateral,
    plan: Option<IntersectionPlan>,
    planned: Vec<usize>,
    hold: usize,
    peds: Vec<Pedestrian>,
    agents: Vec<Agent>,
    statics: Vec<Detection>,
    encounters: Vec<Encounter>,
    cyclist: Option<Cyclist>,
    jaywalker: Option<Jaywalker>,
    lane_change_at: Option<f64>,
    segment: usize,
}

impl<'a> Sim<'a> {
    fn open(&mut self, situation: Situation, intended: bool, i: usize) -> usize {
        self.encounters.push(Encounter {
            situation,
            intended,
            first: i,
            last: None,
        });
        self.encounters.len() - 1
    }

    fn close(&mut self, enc: Option<usize>, i: usize) {
        if let Some(e) = enc {
            if self.encounters[e].last.is_none() {
                self.encounters[e].last = Some(i);
            }
        }
    }

    fn turned(&self) -> bool {
        matches!(self.lateral, Lateral::Turned)
            || matches!(self.lateral, Lateral::Turn(t) if t.started)
    }

    fn signage(&self) -> crate::geometry::Sector {
        self.perception
            .view_sector(self.pos, self.heading, self.perception.signage_radius)
    }

    fn ahead(&self, p: Point) -> bool {
        self.perception
            .view_sector(self.pos, self.heading, self.perception.front_radius)
            .contains(p)
    }

    fn ped_present(&self, k: usize, i: usize) -> bool {
        self.peds[k].leaves_at.is_none_or(|t| i < t)
    }

    fn ped_visible(&self, k: usize, i: usize) -> bool {
        self.ped_present(k, i) && self.ahead(self.peds[k].position)
    }

    fn any_ped_visible(&self, i: usize) -> bool {
        (0..self.peds.len()).any(|k| self.ped_visible(k, i))
    }

    fn cyclist_visible(&self, i: usize) -> bool {
        self.cyclist.as_ref().is_some_and(|c| {
            let a = &self.agents[c.agent];
            a.active(i) && self.ahead(a.at(i))
        })
    }

    /// Brake to a halt at or just beyond `target_x`. From high speed the
    /// first phase brakes harder until the speed has dropped by 40%.
    fn start_stop(&mut self, target_x: f64, hold: usize) {
        if !matches!(self.longitudinal, Longitudinal::Cruise) || self.v <= 0.0 {
            return;
        }
        self.hold = hold;
        let v = self.v;
        let d = target_x - self.pos.x();
        if v > self.perception.medium_speed && d > 0.0 {
            let hard = 1.25 * v * v / (2.0 * d);
            let n = ((0.4 * v / (hard * DT)).ceil() as usize).max(1);
            self.longitudinal = Longitudinal::Stopping {
                decel: 0.4 * v / (n as f64 * DT),
                steps_left: n,
                then: Some(target_x),
            };
        } else {
            self.final_stop(target_x);
        }
    }

    /// Constant deceleration that reaches zero speed on the last step.
    fn final_stop(&mut self, target_x: f64) {
        let v = self.v;
        let d = target_x - self.pos.x();
        let mut n = if d > 0.0 {
            (2.0 * d / (v * DT)).ceil() as usize
        } else {
            1
        };
        n = n.max(1);
        if v / (n as f64 * DT) < MIN_BRAKE {
            n = ((v / (MIN_BRAKE * DT)).floor() as usize).max(1);
        }
        self.longitudinal = Longitudinal::Stopping {
            decel: v / (n as f64 * DT),
            steps_left: n,
            then: None,
        };
    }

    fn update_intersection(&mut self, i: usize) {
        if self.turned() {
            return;
        }
        let x = self.pos.x();
        if let Some(plan) = &self.plan {
            if x > self.world.box_entry(plan.k) {
                let encs = [plan.stop_enc, plan.light_enc, plan.ped_enc];
                self.plan = None;
                for e in encs {
                    self.close(e, i);
                }
            }
        }
        if self.plan.is_none() {
            let Some(k) = self.world.next_intersection(x) else {
                return;
            };
            let entry = self.world.box_entry(k);
            if x > entry || entry - x > PLAN_RANGE || self.planned.contains(&k) {
                return;
            }
            self.planned.push(k);
            self.plan = Some(self.draw_plan(k, i));
        }
        let Some(plan) = self.plan.take() else { return };
        let mut plan = plan;
        let stop_line = self.world.stop_line(plan.k);
        if plan.control == Control::Stop && plan.stop_enc.is_none() && self.sees_stop_sign() {
            plan.stop_enc = Some(self.open(Situation::StopSign, plan.comply_stop, i));
            if plan.comply_stop {
                self.start_stop(stop_line + 0.3, plan.hold);
            }
        }
        if plan.control == Control::Light
            && plan.red
            && plan.light_enc.is_none()
            && self.sees_light()
        {
            plan.light_enc = Some(self.open(Situation::TrafficLight, plan.comply_red, i));
            if plan.comply_red {
                self.start_stop(stop_line - 0.5, plan.hold + 2);
            }
        }
        if let Some(p) = plan.ped {
            if plan.ped_enc.is_none() && self.ped_visible(p, i) {
                plan.ped_enc = Some(self.open(Situation::CrosswalkPedestrian, plan.ped_yield, i));
                if plan.ped_yield {
                    self.start_stop(stop_line - 0.5, plan.hold);
                }
            }
        }
        self.plan = Some(plan);
    }

    fn sees_stop_sign(&self) -> bool {
        self.world.map.stop_area_in(&self.signage()) == StopArea::Stop
    }

    fn sees_light(&self) -> bool {
        let tol = self
            .perception
            .traffic_light_facing_tolerance_deg
            .to_radians();
        self.world.map.traffic_light_facing(&self.signage(), tol)
    }

    fn draw_plan(&mut self, k: usize, i: usize) -> IntersectionPlan {
        let control = self.world.controls[k];
        let comply_stop = self.rng.gen_bool(self.policy.stop_sign_compliance);
        let red = self.rng.gen_bool(self.world.config.red_light_rate);
        let comply_red = self.rng.gen_bool(self.policy.red_light_compliance);
        let wants_turn = self.rng.gen_bool(self.policy.turn_rate);
        let left = self.rng.gen_bool(0.5);
        let ped_here = self
            .rng
            .gen_bool(self.world.config.crosswalk_pedestrian_rate);
        let ped_y = -self.rng.gen_range(0.5..HALF_ROAD - 0.5);
        let ped_child = self.rng.gen_bool(0.2);
        let ped_yield = self.rng.gen_bool(self.policy.pedestrian_yield);
        let hold = self.rng.gen_range(2..=4);

        let entry = self.world.box_entry(k);
        let rolls_through = (control == Control::Stop && !comply_stop)
            || (control == Control::Light && red && !comply_red);
        let inner = (self.lane_y + INNER).abs() < 1e-6;
        if wants_turn && inner && !rolls_through && self.lateral == Lateral::Keep {
            let dir = if left { 1.0 } else { -1.0 };
            let radius = if left {
                HALF_ROAD + INNER
            } else {
                HALF_ROAD - INNER
            };
            let situation = if left {
                Situation::TurnLeft
            } else {
                Situation::TurnRight
            };
            let enc = self.open(situation, true, i);
            self.lateral = Lateral::Turn(TurnPlan {
                dir,
                entry: Point(entry, self.lane_y),
                radius,
                started: false,
                progress: 0.0,
                braking: false,
                enc,
            });
        }
        let ped = ped_here.then(|| {
            self.peds.push(Pedestrian {
                position: Point(entry - 0.5 * CROSSWALK_DEPTH, ped_y),
                category: if ped_child {
                    Category::PedestrianChild
                } else {
                    Category::PedestrianAdult
                },
                leaves_at: None,
            });
            self.peds.len() - 1
        });
        IntersectionPlan {
            k,
            control,
            comply_stop,
            red,
            comply_red,
            ped,
            ped_yield,
            hold,
            stop_enc: None,
            light_enc: None,
            ped_enc: None,
        }
    }

    /// Per-block situations, drawn on entering a block past an intersection.
    fn update_block(&mut self, i: usize) {
        if self.turned() {
            return;
        }
        let x = self.pos.x();
        let seg = self
            .world
            .centres
            .iter()
            .filter(|xc| x > **xc + HALF_ROAD)
            .count();
        if seg != self.segment {
            self.segment = seg;
            let wants_cyclist = self.rng.gen_bool(self.world.config.cyclist_rate);
            let cyclist_gas = self.rng.gen_bool(self.policy.cyclist_gas);
            let cyclist_gap = self.rng.gen_range(18.0..24.0);
            let wants_jay = self.rng.gen_bool(self.world.config.jaywalker_rate);
            let jay_dx = self.rng.gen_range(35.0..55.0);
            let jay_dy = self.rng.gen_range(-1.0..1.0);
            let jay_yield = self.rng.gen_bool(self.policy.pedestrian_yield);
            let wants_change = self.rng.gen_bool(self.policy.lane_change_rate);
            let change_dx = self.rng.gen_range(5.0..25.0);

            let next_entry = self
                .world
                .centres
                .get(seg)
                .map_or(f64::INFINITY, |xc| xc - HALF_ROAD);
            if wants_cyclist {
                let other_lane = if (self.lane_y + INNER).abs() < 1e-6 {
                    self.lane_y - LANE_WIDTH
                } else {
                    self.lane_y + LANE_WIDTH
                };
                self.agents.push(Agent {
                    category: Category::Bicycle,
                    activity: Activity::WithRider,
                    start: Point(x + cyclist_gap, other_lane),
                    velocity: Point(4.0, 0.0),
                    visibility: 1.0,
                    from: i,
                    until: i + 12,
                });
                self.cyclist = Some(Cyclist {
                    agent: self.agents.len() - 1,
                    gas: cyclist_gas,
                    enc: None,
                });
            } else if wants_jay && x + jay_dx < next_entry - 25.0 {
                self.peds.push(Pedestrian {
                    position: Point(x + jay_dx, self.lane_y + jay_dy),
                    category: Category::PedestrianAdult,
                    leaves_at: None,
                });
                self.jaywalker = Some(Jaywalker {
                    ped: self.peds.len() - 1,
                    yield_: jay_yield,
                    enc: None,
                });
            } else if wants_change && x + change_dx < next_entry - 80.0 {
                self.lane_change_at = Some(x + change_dx);
            }
        }

        if let Some(c) = &self.cyclist {
            let (gas, enc) = (c.gas, c.enc);
            let visible = self.cyclist_visible(i);
            match (enc, visible) {
                (None, true) => {
                    let e = self.open(Situation::Cyclist, gas, i);
                    self.cyclist.as_mut().unwrap().enc = Some(e);
                }
                (Some(_), false) => {
                    self.close(enc, i);
                    self.cyclist = None;
                }
                _ => {}
            }
        }
        if let Some(j) = &self.jaywalker {
            let (ped, yield_, enc) = (j.ped, j.yield_, j.enc);
            let visible = self.ped_visible(ped, i);
            match (enc, visible) {
                (None, true) => {
                    let e = self.open(Situation::Jaywalker, yield_, i);
                    self.jaywalker.as_mut().unwrap().enc = Some(e);
                    if yield_ {
                        let target = self.peds[ped].position.x() - 5.0;
                        let hold = 2;
                        self.start_stop(target, hold);
                    }
                }
                (Some(_), false) => {
                    self.close(enc, i);
                    self.jaywalker = None;
                }
                _ => {}
            }
        }
        if let Some(at) = self.lane_change_at {
            if x >= at && self.lateral == Lateral::Keep && self.longitudinal == Longitudinal::Cruise
            {
                self.lane_change_at = None;
                let inner = (self.lane_y + INNER).abs() < 1e-6;
                let (dir, situation) = if inner {
                    (-1.0, Situation::LaneChangeRight)
                } else {
                    (1.0, Situation::LaneChangeLeft)
                };
                let enc = self.open(situation, true, i);
                self.lateral = Lateral::Change {
                    dir,
                    target: self.lane_y + dir * LANE_WIDTH,
                    settling: false,
                    enc,
                };
            }
        }
    }

    fn control(&mut self, i: usize) -> (f64, f64) {
        let v = self.v;
        let accel = match self.longitudinal {
            Longitudinal::Stopping {
                decel,
                steps_left,
                then,
            } => {
                if steps_left <= 1 && then.is_none() {
                    -v / DT
                } else {
                    -decel
                }
            }
            Longitudinal::Halted { .. } => 0.0,
            Longitudinal::Cruise => {
                let mut target = self.cruise;
                let mut forced: Option<f64> = None;
                if let Lateral::Turn(mut t) = self.lateral {
                    if !t.started {
                        let d = t.entry.x() - self.pos.x();
                        if v > TURN_SPEED {
                            let req = if d > 0.0 {
                                (v * v - TURN_SPEED * TURN_SPEED) / (2.0 * d)
                            } else {
                                f64::INFINITY
                            };
                            if t.braking || req >= 1.0 {
                                t.braking = true;
                                let a = req.clamp(MIN_BRAKE, 5.0);
                                forced = Some(-(a.min((v - TURN_SPEED) / DT)));
                            }
                        } else {
                            target = TURN_SPEED.min(target);
                        }
                        self.lateral = Lateral::Turn(t);
                    }
                }
                if forced.is_none() && self.cyclist_visible(i) {
                    let gas = self.cyclist.as_ref().is_some_and(|c| c.gas);
                    forced = Some(if gas {
                        if v < MAX_SPEED - 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        ((FOLLOW_SPEED - v) / DT).clamp(-2.0, 0.0)
                    });
                }
                forced.unwrap_or_else(|| ((target - v) / DT).clamp(-0.4, GAS))
            }
        };
        let step = v * DT + 0.5 * accel * DT * DT;
        let steer = match &mut self.lateral {
            Lateral::Turn(t) => {
                if !t.started && step > t.entry.x() - self.pos.x() {
                    t.started = true;
                    t.progress = step - (t.entry.x() - self.pos.x());
                    t.steering()
                } else if t.started {
                    t.progress += step;
                    t.steering()
                } else {
                    0.0
                }
            }
            Lateral::Change { dir, settling, .. } => {
                if *settling {
                    -*dir * SETTLE_STEER
                } else {
                    *dir * CHANGE_STEER
                }
            }
            _ => 0.0,
        };
        (accel, steer)
    }

    fn integrate(&mut self, accel: f64, i: usize) {
        let step = (self.v * DT + 0.5 * accel * DT * DT).max(0.0);
        let mut v_next = (self.v + accel * DT).max(0.0);
        let mut replan = None;
        self.longitudinal = match self.longitudinal {
            Longitudinal::Stopping {
                decel,
                steps_left,
                then,
            } if steps_left > 1 => Longitudinal::Stopping {
                decel,
                steps_left: steps_left - 1,
                then,
            },
            Longitudinal::Stopping { then: Some(t), .. } => {
                replan = Some(t);
                Longitudinal::Cruise
            }
            Longitudinal::Stopping { then: None, .. } => {
                v_next = 0.0;
                let hold = self.hold;
                for p in &mut self.peds {
                    if p.leaves_at.is_none() && p.position.dist(self.pos) < 20.0 {
                        p.leaves_at = Some(i + 3);
                    }
                }
                Longitudinal::Halted { frames_left: hold }
            }
            Longitudinal::Halted { frames_left }
                if frames_left > 1 || self.any_ped_visible(i + 1) =>
            {
                Longitudinal::Halted {
                    frames_left: frames_left.saturating_sub(1),
                }
            }
            Longitudinal::Halted { .. } | Longitudinal::Cruise => Longitudinal::Cruise,
        };

        match self.lateral {
            Lateral::Keep | Lateral::Turned => {
                self.pos = self.pos.add(Point::from_polar(self.heading, step));
            }
            Lateral::Change {
                dir,
                target,
                settling,
                enc,
            } => {
                self.pos = self.pos.add(Point::from_polar(self.heading, step));
                let r = (target - self.pos.y()).abs();
                if r < 0.05 {
                    self.pos = Point(self.pos.x(), target);
                    self.heading = 0.0;
                    self.lane_y = target;
                    self.lateral = Lateral::Keep;
                    self.close(Some(enc), i + 1);
                } else {
                    let settling = settling || r <= 0.2 * LANE_WIDTH;
                    self.heading = if settling {
                        let reach = (v_next * DT).max(1e-9);
                        dir * SETTLE_HEADING.min((r / reach).min(1.0).asin())
                    } else {
                        dir * CHANGE_HEADING
                    };
                    self.lateral = Lateral::Change {
                        dir,
                        target,
                        settling,
                        enc,
                    };
                }
            }
            Lateral::Turn(t) => {
                if !t.started {
                    self.pos = self.pos.add(Point::from_polar(self.heading, step));
                } else {
                    let quarter = FRAC_PI_2 * t.radius;
                    if t.progress >= quarter {
                        let end = t.entry.add(Point(t.radius, t.dir * t.radius));
                        self.heading = t.dir * FRAC_PI_2;
                        self.pos = end.add(Point::from_polar(self.heading, t.progress - quarter));
                        self.lateral = Lateral::Turned;
                        self.close(Some(t.enc), i + 1);
                    } else {
                        let phi = t.progress / t.radius;
                        let centre = t.entry.add(Point(0.0, t.dir * t.radius));
                        self.pos =
                            centre.add(Point(t.radius * phi.sin(), -t.dir * t.radius * phi.cos()));
                        self.heading = t.dir * phi;
                    }
                }
            }
        }
        self.v = v_next;
        if let Some(t) = replan {
            if self.v > 0.0 {
                self.final_stop(t);
            }
        }
    }

    fn detections(&self, i: usize) -> Vec<Detection> {
        let mut out = Vec::new();
        for (k, p) in self.peds.iter().enumerate() {
            if self.ped_present(k, i) {
                out.push(Detection {
                    category: p.category,
                    position: p.position,
                    visibility: 1.0,
                    activity: Activity::Unknown,
                });
            }
        }
        for a in &self.agents {
            if a.active(i) {
                out.push(Detection {
                    category: a.category,
                    position: a.at(i),
                    visibility: a.visibility,
                    activity: a.activity,
                });
            }
        }
        out.extend(self.statics.iter().copied());
        out.retain(|d| d.position.dist(self.pos) <= SENSOR_RANGE);
        out
    }
}

/// Generate scene `index` of the corpus seeded by `seed`.
pub fn generate_scene(
    world: &World,
    policy: &ScriptedPolicy,
    perception: &DiscretizerConfig,
    n_frames: usize,
    seed: u64,
    index: u64,
) -> Result<(RawScene, Vec<GroundTruthEvent>), SynthError> {
    if n_frames == 0 {
        return Err(SynthError::NoFrames);
    }
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);

    let k = rng.gen_range(0..world.centres.len());
    let x0 = world.box_entry(k) - rng.gen_range(38.0..53.0);
    let lane_y = if rng.gen_bool(0.7) {
        -INNER
    } else {
        -world::OUTER
    };
    let cruise = rng.gen_range(policy.cruise_speed.0..=policy.cruise_speed.1);
    let v0 = cruise * rng.gen_range(0.97..=1.0);
    let mut tags = std::collections::BTreeSet::new();
    if rng.gen_bool(world.config.night_rate) {
        tags.insert("night".to_string());
    }
    if rng.gen_bool(world.config.rain_rate) {
        tags.insert("rain".to_string());
    }

    let mut agents = Vec::new();
    let slots = 8;
    for _ in 0..slots {
        let spawn = rng.gen_bool((world.config.oncoming_rate / slots as f64).min(1.0));
        let dx = rng.gen_range(30.0..220.0);
        let y = if rng.gen_bool(0.5) {
            INNER
        } else {
            world::OUTER
        };
        let speed = rng.gen_range(7.0..11.0);
        let visibility = rng.gen_range(0.4..1.0);
        if spawn {
            agents.push(Agent {
                category: Category::Vehicle4Wheel,
                activity: Activity::Moving,
                start: Point(x0 + dx, y),
                velocity: Point(-speed, 0.0),
                visibility,
                from: 0,
                until: n_frames,
            });
        }
    }
    let mut statics = Vec::new();
    for &(cx0, _) in &world.carparks {
        for j in 0..3 {
            statics.push(Detection {
                category: Category::TrafficCone,
                position: Point(cx0 + 10.0 + 10.0 * j as f64, -10.0),
                visibility: 0.9,
                activity: Activity::Unknown,
            });
        }
        statics.push(Detection {
            category: Category::Vehicle4Wheel,
            position: Point(cx0 + 5.0, -12.0),
            visibility: 1.0,
            activity: Activity::Parked,
        });
    }
    let debris = rng.gen_bool(0.15);
    let debris_dx = rng.gen_range(60.0..120.0);
    if debris {
        statics.push(Detection {
            category: Category::Debris,
            position: Point(x0 + debris_dx, -HALF_ROAD + 0.3),
            visibility: 0.8,
            activity: Activity::Unknown,
        });
    }

    let mut sim = Sim {
        world,
        policy,
        perception,
        rng,
        pos: Point(x0, lane_y),
        heading: 0.0,
        v: v0,
        lane_y,
        cruise,
        longitudinal: Longitudinal::Cruise,
        lateral: Lateral::Keep,
        plan: None,
        planned: Vec::new(),
        hold: 0,
        peds: Vec::new(),
        agents,
        statics,
        encounters: Vec::new(),
        cyclist: None,
        jaywalker: None,
        lane_change_at: None,
        segment: k,
    };

    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        sim.update_intersection(i);
        sim.update_block(i);
        let (accel, steer) = sim.control(i);
        frames.push(RawFrame {
            t: i as f64 * DT,
            ego_position: sim.pos,
            ego_heading: sim.heading,
            ego_velocity: sim.v,
            ego_acceleration: accel,
            ego_steering: steer,
            detections: sim.detections(i),
        });
        sim.integrate(accel, i);
    }

    let scene = RawScene {
        scene_id: format!("{}-{seed}-{index:05}", policy.name),
        tags,
        map_ref: Some("map.json".to_string()),
        frames,
    };
    let events = ground_truth(&scene, &sim.encounters, world, perception)?;
    Ok((scene, events))
}

fn ground_truth(
    scene: &RawScene,
    encounters: &[Encounter],
    world: &World,
    perception: &DiscretizerConfig,
) -> Result<Vec<GroundTruthEvent>, SynthError> {
    let traj = discretize_scene(scene, &world.map, perception)?;
    let registry = Registry::builtin();
    let last = traj.steps.len() - 1;
    let mut out = Vec::new();
    for e in encounters {
        let desire = registry
            .get(e.situation.desire())
            .expect("situations name builtin desires");
        let end = e.last.unwrap_or(last).min(last);
        let window = &traj.steps[e.first.min(end)..=end];
        let region_frames = window.iter().filter(|s| desire.in_region(&s.state)).count();
        if region_frames == 0 {
            continue;
        }
        out.push(GroundTruthEvent {
            scene_id: scene.scene_id.clone(),
            situation: e.situation,
            desire: desire.name.clone(),
            intended: e.intended,
            first_frame: e.first,
            last_frame: end,
            region_frames,
            fulfilled: window
                .iter()
                .any(|s| desire.fulfilled_by(&s.state, s.action)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub world: World,
    pub scenes: Vec<RawScene>,
    pub events: Vec<GroundTruthEvent>,
}

/// `n_scenes` scenes generated in parallel; output order is by scene index.
pub fn generate_corpus(
    world_config: &WorldConfig,
    policy: &ScriptedPolicy,
    perception: &DiscretizerConfig,
    n_scenes: usize,
    n_frames: usize,
    seed: u64,
) -> Result<Corpus, SynthError> {
    let world = World::new(world_config.clone()).map_err(SynthError::World)?;
    policy.validate()?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .clamp(1, 8);
    let chunk = n_scenes.div_ceil(workers).max(1);
    let indices: Vec<u64> = (0..n_scenes as u64).collect();
    let results: Vec<Result<Vec<(RawScene, Vec<GroundTruthEvent>)>, SynthError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = indices
                .chunks(chunk)
                .map(|ids| {
                    let world = &world;
                    scope.spawn(move || {
                        ids.iter()
                            .map(|&i| generate_scene(world, policy, perception, n_frames, seed, i))
                            .collect()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("generator thread panicked"))
                .collect()
        });
    let mut scenes = Vec::with_capacity(n_scenes);
    let mut events = Vec::new();
    for r in results {
        for (s, e) in r? {
            scenes.push(s);
            events.extend(e);
        }
    }
    Ok(Corpus {
        world,
        scenes,
        events,
    })
}

pub fn events_jsonl(events: &[GroundTruthEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}
