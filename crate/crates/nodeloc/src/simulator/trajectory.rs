use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Point2, PoseSeries, RigidTransform};

use super::{Scene, SimError};

const CROUCH_WALK_S: f64 = 4.0;
const CROUCH_HOLD_S: f64 = 3.0;
const CROUCH_RAMP_S: f64 = 0.6;
const CROUCH_WALK_SPEED: f64 = 1.2;
const CROUCH_SPEED: f64 = 0.2;
const BOB_M: f64 = 0.03;
const SWAY_RAD: f64 = 5.0 * PI / 180.0;
const STAND_SWAY_RAD: f64 = 1.5 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    FastWalk,
    SlowWalk,
    BackwardWalk,
    Stand,
    CrouchWalk,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::FastWalk,
        ScenarioKind::SlowWalk,
        ScenarioKind::BackwardWalk,
        ScenarioKind::Stand,
        ScenarioKind::CrouchWalk,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::FastWalk => "fast-walk",
            ScenarioKind::SlowWalk => "slow-walk",
            ScenarioKind::BackwardWalk => "backward-walk",
            ScenarioKind::Stand => "stand",
            ScenarioKind::CrouchWalk => "crouch-walk",
        }
    }

    /// Nominal walking speed in m/s; crouch-walk reports its walking phase.
    pub fn speed_mps(&self) -> f64 {
        match self {
            ScenarioKind::FastWalk => 1.8,
            ScenarioKind::SlowWalk | ScenarioKind::BackwardWalk => 0.8,
            ScenarioKind::Stand => 0.0,
            ScenarioKind::CrouchWalk => CROUCH_WALK_SPEED,
        }
    }

    fn step_hz(&self) -> f64 {
        match self {
            ScenarioKind::FastWalk => 2.2,
            ScenarioKind::SlowWalk => 1.7,
            ScenarioKind::BackwardWalk => 1.5,
            ScenarioKind::Stand => 0.0,
            ScenarioKind::CrouchWalk => 1.8,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown scenario kind '{s}'")))
    }
}

/// A walk around a closed loop of two parallel aisles joined by half
/// circles, starting above a node and heading down the first aisle.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    pub frame_rate_hz: f64,
    pub start_xy: Point2,
    pub heading_rad: f64,
    pub aisle_length_m: f64,
    /// Distance between the aisle centers; the turns have half this radius.
    pub aisle_spacing_m: f64,
    pub camera_height_m: f64,
    pub crouch_height_m: f64,
}

impl Scenario {
    /// Matches [`Scene::default_warehouse`]: start above node 1 at the origin.
    pub fn new(kind: ScenarioKind, duration_s: f64) -> Self {
        Self {
            kind,
            duration_s,
            frame_rate_hz: 5.0,
            start_xy: Point2::origin(),
            heading_rad: 0.0,
            aisle_length_m: 15.0,
            aisle_spacing_m: 3.0,
            camera_height_m: 1.0,
            crouch_height_m: 0.6,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidScenario(m.into()));
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad("frame rate must be positive");
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.aisle_length_m > 0.0 && self.aisle_spacing_m > 0.0) {
            return bad("aisle length and spacing must be positive");
        }
        if !(self.camera_height_m > 0.0 && self.crouch_height_m > 0.0) {
            return bad("camera heights must be positive");
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate_hz).round() as usize
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / self.frame_rate_hz
    }

    fn loop_length(&self) -> f64 {
        2.0 * self.aisle_length_m + PI * self.aisle_spacing_m
    }

    /// Position and travel direction at arc length `s` along the loop.
    fn path_point(&self, s: f64) -> (Point2, f64) {
        let l = self.aisle_length_m;
        let r = 0.5 * self.aisle_spacing_m;
        let arc = PI * r;
        let s = s.rem_euclid(self.loop_length());
        let (local, heading) = if s < l {
            (Point2::new(s, 0.0), 0.0)
        } else if s < l + arc {
            let a = (s - l) / r;
            (Point2::new(l + r * a.sin(), r - r * a.cos()), a)
        } else if s < 2.0 * l + arc {
            (Point2::new(l - (s - l - arc), 2.0 * r), PI)
        } else {
            let a = (s - 2.0 * l - arc) / r;
            (Point2::new(-r * a.sin(), r + r * a.cos()), PI + a)
        };
        let (c, sn) = (self.heading_rad.cos(), self.heading_rad.sin());
        let world = Point2::new(
            self.start_xy.x + c * local.x - sn * local.y,
            self.start_xy.y + sn * local.x + c * local.y,
        );
        (world, heading + self.heading_rad)
    }
}

/// Continuous camera motion for one scenario and seed.
#[derive(Debug, Clone)]
pub struct Trajectory {
    scenario: Scenario,
    phases: [f64; 4],
    wander_m: f64,
    wander_hz: f64,
}

/// Camera axes in the body frame: image x forward, image y to the right,
/// optical axis down.
fn camera_mount() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
}

impl Trajectory {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            scenario: scenario.clone(),
            phases: std::array::from_fn(|_| rng.gen_range(0.0..TAU)),
            wander_m: rng.gen_range(0.02..0.05),
            wander_hz: rng.gen_range(0.08..0.15),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Distance travelled along the loop after `t` seconds.
    pub fn arc_length(&self, t: f64) -> f64 {
        match self.scenario.kind {
            ScenarioKind::CrouchWalk => {
                let period = CROUCH_WALK_S + CROUCH_HOLD_S;
                let per_cycle = CROUCH_WALK_SPEED * CROUCH_WALK_S + CROUCH_SPEED * CROUCH_HOLD_S;
                let cycles = (t / period).floor();
                let tau = t - cycles * period;
                let partial = if tau < CROUCH_WALK_S {
                    CROUCH_WALK_SPEED * tau
                } else {
                    CROUCH_WALK_SPEED * CROUCH_WALK_S + CROUCH_SPEED * (tau - CROUCH_WALK_S)
                };
                cycles * per_cycle + partial
            }
            kind => kind.speed_mps() * t,
        }
    }

    /// 1 while walking, 0 while fully crouched.
    fn walking_weight(&self, t: f64) -> f64 {
        if self.scenario.kind != ScenarioKind::CrouchWalk {
            return 1.0;
        }
        let tau = t.rem_euclid(CROUCH_WALK_S + CROUCH_HOLD_S);
        let ramp = |x: f64| 0.5 + 0.5 * (PI * x.clamp(0.0, 1.0)).cos();
        if tau < CROUCH_WALK_S {
            1.0
        } else if tau < CROUCH_WALK_S + CROUCH_RAMP_S {
            ramp((tau - CROUCH_WALK_S) / CROUCH_RAMP_S)
        } else if tau < CROUCH_WALK_S + CROUCH_HOLD_S - CROUCH_RAMP_S {
            0.0
        } else {
            1.0 - ramp((tau - (CROUCH_WALK_S + CROUCH_HOLD_S - CROUCH_RAMP_S)) / CROUCH_RAMP_S)
        }
    }

    pub fn pose_at(&self, t: f64) -> RigidTransform {
        let sc = &self.scenario;
        let (mut xy, tangent) = sc.path_point(self.arc_length(t));
        let w = self.walking_weight(t);
        let height = sc.crouch_height_m + (sc.camera_height_m - sc.crouch_height_m) * w;
        let (bob, roll, pitch) = if sc.kind == ScenarioKind::Stand {
            let f = TAU * 0.25 * t;
            (0.0, STAND_SWAY_RAD * (f + self.phases[0]).sin(), STAND_SWAY_RAD * (0.8 * f + self.phases[1]).sin())
        } else {
            let f = TAU * sc.kind.step_hz() * t;
            let amp = 0.3 + 0.7 * w;
            (
                amp * BOB_M * (f + self.phases[2]).sin(),
                amp * SWAY_RAD * (f + self.phases[0]).sin(),
                amp * SWAY_RAD * (f + self.phases[1]).sin(),
            )
        };
        if sc.kind != ScenarioKind::Stand {
            let lateral = self.wander_m * (TAU * self.wander_hz * t).sin();
            xy += nalgebra::Vector2::new(-tangent.sin(), tangent.cos()) * lateral;
        }
        let yaw = if sc.kind == ScenarioKind::BackwardWalk {
            tangent + PI
        } else {
            tangent
        };
        let body = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), roll)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch);
        RigidTransform::from_approx(body.matrix() * camera_mount(), Vector3::new(xy.x, xy.y, height + bob))
    }
}

/// Camera poses at the scenario frame rate.
pub fn generate_trajectory(scenario: &Scenario, scene: &Scene, seed: u64) -> Result<PoseSeries, SimError> {
    let traj = Trajectory::new(scenario, seed)?;
    if !scene.bounds.contains(scenario.start_xy.x, scenario.start_xy.y) {
        return Err(SimError::InvalidScenario("start position outside the scene".into()));
    }
    let mut samples = Vec::with_capacity(scenario.frame_count());
    for i in 0..scenario.frame_count() {
        let t = scenario.frame_time(i);
        let pose = traj.pose_at(t);
        let p = pose.translation;
        if !scene.bounds.contains(p.x, p.y) {
            return Err(SimError::OutOfBounds { t, x: p.x, y: p.y });
        }
        if p.z <= scene.floor.height_m {
            return Err(SimError::CameraBelowFloor(p.z));
        }
        samples.push((t, pose));
    }
    Ok(PoseSeries::new(samples))
}
