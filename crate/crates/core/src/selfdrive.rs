// SPDX-License-Identifier: Apache-2.0

//! Top-down self-driving car in a walled arena with rectangular obstacles.
//!
//! Coordinates are screen-style: `x` grows east, `y` grows south, heading 0
//! points east and positive rotation is clockwise on screen. The car is a
//! disc. It never observes its position, only eight boolean probes fixed to
//! its body and its discrete speed.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::env::{Action, Environment, EpisodeLimit, StepResult};
use crate::rng::RngStream;
use crate::{Error, Result};

pub const SENSOR_COUNT: usize = 8;
pub const VELOCITY_LEVELS: u8 = 9;
pub const V_MIN: f64 = 0.5;
pub const V_STEP: f64 = 0.5;
pub const V_MAX: f64 = V_MIN + V_STEP * (VELOCITY_LEVELS - 1) as f64;
pub const OBSERVATION_COUNT: u32 = (1 << SENSOR_COUNT) * VELOCITY_LEVELS as u32;
pub const COLLISION_PENALTY: f64 = -100.0;
pub const PROBE_DIRECTIONS: usize = 16;
/// Heading probes at reset stop looking after this many sensor ranges.
pub const PROBE_RANGE_FACTOR: f64 = 4.0;
pub const MAX_SPAWN_ATTEMPTS: usize = 10_000;

pub const FRONT: usize = 0;
pub const FRONT_RIGHT: usize = 1;
pub const RIGHT: usize = 2;
pub const REAR: usize = 4;
pub const LEFT: usize = 6;
pub const FRONT_LEFT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    fn distance_sq(&self, px: f64, py: f64) -> f64 {
        let dx = (self.x - px).max(0.0).max(px - (self.x + self.w));
        let dy = (self.y - py).max(0.0).max(py - (self.y + self.h));
        dx * dx + dy * dy
    }

    /// Entry parameter of the ray `p + t d` into this rectangle, if within `[0, max_t]`.
    fn ray_entry(&self, px: f64, py: f64, dx: f64, dy: f64, max_t: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = max_t;
        for (p, d, lo, hi) in [
            (px, dx, self.x, self.x + self.w),
            (py, dy, self.y, self.y + self.h),
        ] {
            if d.abs() < 1e-12 {
                if p < lo || p > hi {
                    return None;
                }
            } else {
                let a = (lo - p) / d;
                let b = (hi - p) / d;
                let (near, far) = if a < b { (a, b) } else { (b, a) };
                t0 = t0.max(near);
                t1 = t1.min(far);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaMap {
    pub width: f64,
    pub height: f64,
    pub car_radius: f64,
    pub sensor_range: f64,
    pub obstacles: Vec<Rect>,
}

impl Default for ArenaMap {
    /// 50x50 arena with four blocks, car radius 1.5, probes reaching 6.
    fn default() -> Self {
        Self {
            width: 50.0,
            height: 50.0,
            car_radius: 1.5,
            sensor_range: 6.0,
            obstacles: vec![
                Rect {
                    x: 10.0,
                    y: 8.0,
                    w: 14.0,
                    h: 6.0,
                },
                Rect {
                    x: 32.0,
                    y: 6.0,
                    w: 7.0,
                    h: 16.0,
                },
                Rect {
                    x: 8.0,
                    y: 28.0,
                    w: 6.0,
                    h: 14.0,
                },
                Rect {
                    x: 24.0,
                    y: 33.0,
                    w: 18.0,
                    h: 6.0,
                },
            ],
        }
    }
}

impl ArenaMap {
    pub fn empty(width: f64, height: f64, car_radius: f64, sensor_range: f64) -> Self {
        Self {
            width,
            height,
            car_radius,
            sensor_range,
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("arena width and height must be positive");
        }
        if self.car_radius.is_nan()
            || self.car_radius <= 0.0
            || 2.0 * self.car_radius >= self.width.min(self.height)
        {
            return bad("car radius must be positive and smaller than the arena");
        }
        if self.sensor_range.is_nan() || self.sensor_range <= 0.0 {
            return bad("sensor range must be positive");
        }
        for o in &self.obstacles {
            if !(o.w > 0.0 && o.h > 0.0)
                || o.x < 0.0
                || o.y < 0.0
                || o.x + o.w > self.width
                || o.y + o.h > self.height
            {
                return bad("obstacle outside arena bounds or degenerate");
            }
        }
        Ok(())
    }

    /// True when a disc of the car's radius centred at `(px, py)` touches a
    /// wall or an obstacle.
    pub fn collides(&self, px: f64, py: f64) -> bool {
        let r = self.car_radius;
        if px - r < 0.0 || py - r < 0.0 || px + r > self.width || py + r > self.height {
            return true;
        }
        self.obstacles.iter().any(|o| o.distance_sq(px, py) < r * r)
    }

    /// Distance along `angle` from `(px, py)` to the first wall or obstacle,
    /// capped at `max`.
    pub fn ray_distance(&self, px: f64, py: f64, angle: f64, max: f64) -> f64 {
        let (dy, dx) = libm::sincos(angle);
        let mut best = max;
        // walls
        if dx > 1e-12 {
            best = best.min((self.width - px) / dx);
        } else if dx < -1e-12 {
            best = best.min(-px / dx);
        }
        if dy > 1e-12 {
            best = best.min((self.height - py) / dy);
        } else if dy < -1e-12 {
            best = best.min(-py / dy);
        }
        for o in &self.obstacles {
            if let Some(t) = o.ray_entry(px, py, dx, dy, best) {
                best = best.min(t);
            }
        }
        best.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarPose {
    pub px: f64,
    pub py: f64,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    /// `0..=8`; the speed is `V_MIN + 0.5 * velocity_index`.
    pub velocity_index: u8,
}

impl CarPose {
    pub fn velocity(&self) -> f64 {
        velocity_of(self.velocity_index)
    }
}

pub fn velocity_of(index: u8) -> f64 {
    V_MIN + V_STEP * f64::from(index)
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a % TAU;
    if w < 0.0 {
        w += TAU;
    }
    // a tiny negative remainder rounds up to exactly TAU
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SdObservation {
    /// Index `k` probes at `heading + k * 45°`.
    pub sensors: [bool; SENSOR_COUNT],
    pub velocity_index: u8,
}

impl SdObservation {
    pub fn encode(&self) -> u32 {
        let bits = self
            .sensors
            .iter()
            .enumerate()
            .fold(0u32, |acc, (k, &on)| acc | (u32::from(on) << k));
        u32::from(self.velocity_index) * 256 + bits
    }

    pub fn decode(id: u32) -> Option<Self> {
        if id >= OBSERVATION_COUNT {
            return None;
        }
        let bits = id % 256;
        let mut sensors = [false; SENSOR_COUNT];
        for (k, s) in sensors.iter_mut().enumerate() {
            *s = bits & (1 << k) != 0;
        }
        Some(Self {
            sensors,
            velocity_index: (id / 256) as u8,
        })
    }

    pub fn all() -> impl Iterator<Item = SdObservation> {
        (0..OBSERVATION_COUNT).map(|id| Self::decode(id).unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum SdAction {
    Accel = 0,
    Decel = 1,
    Left = 2,
    Right = 3,
    None = 4,
}

impl SdAction {
    pub fn from_id(id: usize) -> Option<Self> {
        match id {
            0 => Some(Self::Accel),
            1 => Some(Self::Decel),
            2 => Some(Self::Left),
            3 => Some(Self::Right),
            4 => Some(Self::None),
            _ => None,
        }
    }
}

pub static ACTIONS: [Action; 5] = [
    Action {
        id: 0,
        label: "accelerate",
    },
    Action {
        id: 1,
        label: "decelerate",
    },
    Action {
        id: 2,
        label: "turn_left",
    },
    Action {
        id: 3,
        label: "turn_right",
    },
    Action {
        id: 4,
        label: "none",
    },
];

pub fn observe(pose: &CarPose, map: &ArenaMap) -> SdObservation {
    let mut sensors = [false; SENSOR_COUNT];
    for (k, s) in sensors.iter_mut().enumerate() {
        let angle = pose.heading + k as f64 * (TAU / SENSOR_COUNT as f64);
        *s = map.ray_distance(pose.px, pose.py, angle, map.sensor_range) < map.sensor_range;
    }
    SdObservation {
        sensors,
        velocity_index: pose.velocity_index,
    }
}

/// Index of the probe direction with the most free space; ties go to the
/// lowest index.
pub fn freest_direction(map: &ArenaMap, px: f64, py: f64) -> usize {
    let cap = PROBE_RANGE_FACTOR * map.sensor_range;
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..PROBE_DIRECTIONS {
        let d = map.ray_distance(px, py, probe_angle(i), cap);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

pub fn probe_angle(i: usize) -> f64 {
    i as f64 * TAU / PROBE_DIRECTIONS as f64
}

/// A collision-free pose facing open space, at the lowest speed.
pub fn safe_reset(map: &ArenaMap, rng: &mut RngStream) -> Result<CarPose> {
    let r = map.car_radius;
    for _ in 0..MAX_SPAWN_ATTEMPTS {
        let px = rng.uniform_range(r, map.width - r);
        let py = rng.uniform_range(r, map.height - r);
        if !map.collides(px, py) {
            return Ok(CarPose {
                px,
                py,
                heading: probe_angle(freest_direction(map, px, py)),
                velocity_index: 0,
            });
        }
    }
    Err(Error::NoFreePose(MAX_SPAWN_ATTEMPTS))
}

/// Advances the car one tick. Returns `(pose, reward, collided)`; after a
/// collision the pose is a fresh safe spawn and the reward is the penalty.
pub fn step(
    pose: &CarPose,
    action: SdAction,
    map: &ArenaMap,
    options: &SelfDriveOptions,
    rng: &mut RngStream,
) -> Result<(CarPose, f64, bool)> {
    let turn = options.turn_deg * PI / 180.0;
    let mut next = *pose;
    match action {
        SdAction::Accel => next.velocity_index = (next.velocity_index + 1).min(VELOCITY_LEVELS - 1),
        SdAction::Decel => next.velocity_index = next.velocity_index.saturating_sub(1),
        SdAction::Left => next.heading = wrap_angle(next.heading - turn),
        SdAction::Right => next.heading = wrap_angle(next.heading + turn),
        SdAction::None => {}
    }
    let speed = next.velocity() * options.dt;
    let (sin, cos) = libm::sincos(next.heading);
    // sub-steps short enough that the disc cannot skip over a thin obstacle
    let n = libm::ceil(speed / (0.5 * map.car_radius)).max(1.0) as usize;
    for i in 1..=n {
        let t = speed * i as f64 / n as f64;
        if map.collides(pose.px + cos * t, pose.py + sin * t) {
            return Ok((safe_reset(map, rng)?, COLLISION_PENALTY, true));
        }
    }
    next.px = pose.px + cos * speed;
    next.py = pose.py + sin * speed;
    Ok((next, next.velocity(), false))
}

/// Avoid whatever is ahead, otherwise speed up.
pub fn oracle_action(obs: &SdObservation) -> SdAction {
    let s = &obs.sensors;
    let turn_away = |left_blocked: bool, right_blocked: bool| {
        if left_blocked && !right_blocked {
            SdAction::Right
        } else {
            SdAction::Left
        }
    };
    if s[FRONT] || s[FRONT_LEFT] || s[FRONT_RIGHT] {
        turn_away(s[FRONT_LEFT], s[FRONT_RIGHT])
    } else if obs.velocity_index < VELOCITY_LEVELS - 1 {
        SdAction::Accel
    } else {
        SdAction::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfDriveOptions {
    /// End the episode on a collision instead of respawning and continuing.
    pub terminate_on_collision: bool,
    /// Distance travelled per tick is `velocity * dt`.
    pub dt: f64,
    /// Heading change of one turn action, in degrees.
    pub turn_deg: f64,
}

impl Default for SelfDriveOptions {
    fn default() -> Self {
        Self {
            terminate_on_collision: false,
            dt: 0.25,
            turn_deg: 15.0,
        }
    }
}

impl SelfDriveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.dt.is_finite() && self.turn_deg.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "dt must be positive and turn finite".to_string(),
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelfDrive {
    map: alloc::sync::Arc<ArenaMap>,
    options: SelfDriveOptions,
    pose: CarPose,
    obs: SdObservation,
}

impl SelfDrive {
    pub fn new(map: alloc::sync::Arc<ArenaMap>, options: SelfDriveOptions) -> Result<Self> {
        map.validate()?;
        options.validate()?;
        let mut probe = crate::rng::derive_stream(0, "spawn-check");
        let pose = safe_reset(&map, &mut probe)?;
        let obs = observe(&pose, &map);
        Ok(Self {
            map,
            options,
            pose,
            obs,
        })
    }

    pub fn map(&self) -> &ArenaMap {
        &self.map
    }

    pub fn pose(&self) -> &CarPose {
        &self.pose
    }

    pub fn set_pose(&mut self, pose: CarPose) {
        self.pose = pose;
        self.obs = observe(&pose, &self.map);
    }
}

impl Environment for SelfDrive {
    type State = SdObservation;

    fn actions(&self) -> &'static [Action] {
        &ACTIONS
    }

    fn default_limit(&self) -> EpisodeLimit {
        EpisodeLimit::SELF_DRIVE
    }

    fn reset(&mut self, rng: &mut RngStream) -> SdObservation {
        let mut pose = safe_reset(&self.map, rng).expect("map validated to have free space");
        pose.velocity_index = rng.below(VELOCITY_LEVELS as usize) as u8;
        self.set_pose(pose);
        self.obs
    }

    fn step(&mut self, action: usize, rng: &mut RngStream) -> StepResult<SdObservation> {
        let a = SdAction::from_id(action).expect("self-driving action out of range");
        let (pose, reward, collided) = step(&self.pose, a, &self.map, &self.options, rng)
            .expect("map validated to have free space");
        self.set_pose(pose);
        let mut info = BTreeMap::new();
        if collided {
            info.insert("collision", "true".to_string());
        }
        StepResult {
            next_state: self.obs,
            reward,
            terminal: collided && self.options.terminate_on_collision,
            info,
        }
    }

    fn state(&self) -> &SdObservation {
        &self.obs
    }

    fn features(&self, s: &SdObservation) -> Vec<f64> {
        let mut f: Vec<f64> = s.sensors.iter().map(|&b| f64::from(u8::from(b))).collect();
        f.push(f64::from(s.velocity_index));
        f
    }

    fn feature_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, 1.0); SENSOR_COUNT];
        b.push((0.0, f64::from(VELOCITY_LEVELS - 1)));
        b
    }

    fn discrete_id(&self, s: &SdObservation) -> Option<u32> {
        Some(s.encode())
    }

    fn discrete_count(&self) -> Option<u32> {
        Some(OBSERVATION_COUNT)
    }

    fn oracle_action(&self, s: &SdObservation) -> usize {
        oracle_action(s) as usize
    }

    fn enumerate_states(&self) -> Option<Vec<SdObservation>> {
        Some(SdObservation::all().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn opts() -> SelfDriveOptions {
        SelfDriveOptions::default()
    }

    fn pose(px: f64, py: f64, heading_deg: f64, v: u8) -> CarPose {
        CarPose {
            px,
            py,
            heading: heading_deg * PI / 180.0,
            velocity_index: v,
        }
    }

    #[test]
    fn open_space_sees_nothing() {
        let map = ArenaMap::empty(20.0, 20.0, 1.0, 2.0);
        for deg in [0.0, 33.0, 90.0, 211.0] {
            let obs = observe(&pose(10.0, 10.0, deg, 3), &map);
            assert_eq!(obs.sensors, [false; 8]);
        }
    }

    #[test]
    fn probes_rotate_with_the_car() {
        let map = ArenaMap::empty(20.0, 20.0, 0.5, 2.0);
        // one unit from the east wall
        let east = observe(&pose(19.0, 10.0, 0.0, 0), &map);
        assert!(east.sensors[FRONT]);
        assert!(!east.sensors[REAR]);
        let west = observe(&pose(19.0, 10.0, 180.0, 0), &map);
        assert!(west.sensors[REAR]);
        assert!(!west.sensors[FRONT]);
    }

    #[test]
    fn right_side_is_clockwise() {
        // heading east, south wall is on the right in screen coordinates
        let map = ArenaMap::empty(20.0, 20.0, 0.5, 2.0);
        let obs = observe(&pose(10.0, 19.0, 0.0, 0), &map);
        assert!(obs.sensors[RIGHT]);
        assert!(!obs.sensors[LEFT]);
    }

    #[test]
    fn encode_corners() {
        let zero = SdObservation {
            sensors: [false; 8],
            velocity_index: 0,
        };
        let full = SdObservation {
            sensors: [true; 8],
            velocity_index: 8,
        };
        assert_eq!(zero.encode(), 0);
        assert_eq!(full.encode(), 2303);
    }

    #[test]
    fn encode_is_a_bijection() {
        let mut seen = alloc::collections::BTreeSet::new();
        for obs in SdObservation::all() {
            assert_eq!(SdObservation::decode(obs.encode()), Some(obs));
            seen.insert(obs.encode());
        }
        assert_eq!(seen.len(), 2304);
        assert_eq!(seen.len() * ACTIONS.len(), 11_520);
    }

    #[test]
    fn accel_clamps_at_top_speed() {
        let map = ArenaMap::empty(200.0, 200.0, 1.0, 4.0);
        let mut rng = derive_stream(1, "env");
        let (next, r, hit) = step(
            &pose(20.0, 100.0, 0.0, 8),
            SdAction::Accel,
            &map,
            &opts(),
            &mut rng,
        )
        .unwrap();
        assert!(!hit);
        assert_eq!(next.velocity_index, 8);
        assert_eq!(r, V_MAX);
    }

    #[test]
    fn reward_is_speed_when_clear() {
        let map = ArenaMap::empty(50.0, 50.0, 1.0, 4.0);
        let mut rng = derive_stream(1, "env");
        let (next, r, hit) = step(
            &pose(10.0, 25.0, 0.0, 3),
            SdAction::None,
            &map,
            &opts(),
            &mut rng,
        )
        .unwrap();
        assert!(!hit);
        assert_eq!(r, 2.0);
        assert!((next.px - 10.5).abs() < 1e-12);
        assert_eq!(next.py, 25.0);
    }

    #[test]
    fn head_on_collision_penalised_and_respawned() {
        let map = ArenaMap::default();
        let mut rng = derive_stream(1, "env");
        let p = pose(47.9, 25.0, 0.0, 8);
        let (next, r, hit) = step(&p, SdAction::None, &map, &opts(), &mut rng).unwrap();
        assert!(hit);
        assert_eq!(r, COLLISION_PENALTY);
        assert_eq!(next.velocity_index, 0);
        assert!(!map.collides(next.px, next.py));
    }

    #[test]
    fn turns_are_fifteen_degrees() {
        let map = ArenaMap::empty(200.0, 200.0, 1.0, 4.0);
        let mut rng = derive_stream(1, "env");
        let p = pose(100.0, 100.0, 90.0, 0);
        let (l, ..) = step(&p, SdAction::Left, &map, &opts(), &mut rng).unwrap();
        let (r, ..) = step(&p, SdAction::Right, &map, &opts(), &mut rng).unwrap();
        assert!((l.heading - 75f64.to_radians()).abs() < 1e-12);
        assert!((r.heading - 105f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn heading_tie_goes_to_direction_zero() {
        let map = ArenaMap::empty(20.0, 20.0, 1.0, 2.0);
        assert_eq!(freest_direction(&map, 10.0, 10.0), 0);
    }

    #[test]
    fn spawn_near_west_wall_faces_east() {
        let map = ArenaMap::empty(50.0, 50.0, 1.0, 10.0);
        let d = freest_direction(&map, 1.5, 25.0);
        // distances of all 16 probes; east-ish must be maximal
        let dist: Vec<f64> = (0..16)
            .map(|i| map.ray_distance(1.5, 25.0, probe_angle(i), 40.0))
            .collect();
        let max = dist.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(dist[d], max);
        assert!(d == 0 || d == 1 || d == 15, "direction {d}");
    }

    #[test]
    fn spawns_are_collision_free() {
        let map = ArenaMap::default();
        let mut rng = derive_stream(9, "env");
        for _ in 0..1000 {
            let p = safe_reset(&map, &mut rng).unwrap();
            assert!(!map.collides(p.px, p.py));
            assert_eq!(p.velocity_index, 0);
        }
    }

    #[test]
    fn no_free_space_is_an_error() {
        let mut map = ArenaMap::empty(10.0, 10.0, 1.0, 2.0);
        map.obstacles.push(Rect {
            x: 0.0,
            y: 0.0,
            w: 10.0,
            h: 10.0,
        });
        let mut rng = derive_stream(9, "env");
        assert_eq!(
            safe_reset(&map, &mut rng),
            Err(Error::NoFreePose(MAX_SPAWN_ATTEMPTS))
        );
    }

    #[test]
    fn oracle_rules() {
        let mut obs = SdObservation {
            sensors: [false; 8],
            velocity_index: 3,
        };
        assert_eq!(oracle_action(&obs), SdAction::Accel);
        obs.velocity_index = 8;
        assert_eq!(oracle_action(&obs), SdAction::None);
        obs.sensors[FRONT] = true;
        obs.sensors[FRONT_RIGHT] = true;
        assert_eq!(oracle_action(&obs), SdAction::Left);
        obs.sensors[FRONT_RIGHT] = false;
        obs.sensors[FRONT_LEFT] = true;
        assert_eq!(oracle_action(&obs), SdAction::Right);
        obs.sensors[FRONT] = false;
        assert_eq!(oracle_action(&obs), SdAction::Right);
    }
}
