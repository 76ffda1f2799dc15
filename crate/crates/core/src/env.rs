//! Multi-goal environment contract and the three desk environments.
//!
//! Every environment has a fixed horizon, never terminates early, and
//! pays the sparse reward `0` when the next achieved goal lies strictly
//! within the goal tolerance of the desired goal and `-1` otherwise.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// Absolute wrapped angle difference, summed over components.
    Angular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpace {
    pub dimension: usize,
    pub metric: Metric,
    pub tolerance: f64,
}

impl GoalSpace {
    /// Checked distance between two goals.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dimension {
            return Err(Error::dim("goal", self.dimension, a.len()));
        }
        if b.len() != self.dimension {
            return Err(Error::dim("goal", self.dimension, b.len()));
        }
        Ok(self.dist(a, b))
    }

    /// Distance without the dimension check, for goals already validated.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self.metric {
            Metric::Euclidean => {
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                math::sqrt(s)
            }
            Metric::Angular => a
                .iter()
                .zip(b)
                .map(|(x, y)| math::abs(math::wrap_angle(x - y)))
                .sum(),
        }
    }

    pub fn is_success(&self, achieved: &[f64], desired: &[f64]) -> bool {
        self.dist(achieved, desired) < self.tolerance
    }

    /// Sparse reward for reaching `achieved` when `desired` was asked for.
    pub fn reward(&self, achieved: &[f64], desired: &[f64]) -> f64 {
        if self.is_success(achieved, desired) {
            0.0
        } else {
            -1.0
        }
    }

    /// Width of the network encoding of a goal.
    pub fn feature_dim(&self) -> usize {
        match self.metric {
            Metric::Euclidean => self.dimension,
            Metric::Angular => 2 * self.dimension,
        }
    }

    /// Network encoding of a goal: angles become `(sin, cos)` pairs so the
    /// wrap-around is continuous.
    pub fn features_into(&self, goal: &[f64], out: &mut [f64]) {
        match self.metric {
            Metric::Euclidean => out.copy_from_slice(goal),
            Metric::Angular => {
                for (i, &g) in goal.iter().enumerate() {
                    out[2 * i] = math::sin(g);
                    out[2 * i + 1] = math::cos(g);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub goal_space: GoalSpace,
    /// Largest possible goal distance, used for difficulty histograms.
    pub max_goal_distance: f64,
}

impl EnvSpec {
    pub fn goal_dim(&self) -> usize {
        self.goal_space.dimension
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&a, (&lo, &hi))| if a.is_nan() { 0.0 } else { a.clamp(lo, hi) })
            .collect()
    }

    pub fn sample_action(&self, rng: &mut Rng) -> Vec<f64> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(&lo, &hi)| rng.random_range(lo..=hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reset {
    pub state: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_state: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait MultiGoalEnv {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode. The desired goal stays fixed until the next reset.
    fn reset(&mut self, rng: &mut Rng) -> Reset;

    /// Advance one step; the action is clipped to the bounds first.
    fn step(&mut self, action: &[f64]) -> Result<EnvStep>;

    /// Goal-space projection of a state.
    fn achieved_goal(&self, state: &[f64]) -> Vec<f64>;

    fn desired_goal(&self) -> &[f64];
}

/// Episode clock and goal bookkeeping shared by the concrete environments.
#[derive(Debug, Clone, PartialEq)]
struct Episode {
    t: usize,
    desired: Vec<f64>,
}

impl Episode {
    fn advance(&mut self, horizon: usize) -> Result<bool> {
        if self.t >= horizon {
            return Err(Error::EpisodeFinished(self.t));
        }
        self.t += 1;
        Ok(self.t == horizon)
    }
}

fn check_action(spec: &EnvSpec, action: &[f64]) -> Result<Vec<f64>> {
    if action.len() != spec.action_dim {
        return Err(Error::dim("action", spec.action_dim, action.len()));
    }
    Ok(spec.clip_action(action))
}

// ---------------------------------------------------------------------------
// BitFlip

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BitFlipParams {
    pub bits: usize,
    pub horizon: usize,
    pub tolerance: f64,
}

impl Default for BitFlipParams {
    fn default() -> Self {
        Self {
            bits: 8,
            horizon: 8,
            tolerance: 0.5,
        }
    }
}

/// `n` switches. The action has one component per bit plus a final "stay"
/// component: the largest component picks the bit to flip, or no flip
/// when it is the last one. Goals are bit-strings compared with the Euclidean
/// metric, so a tolerance of 0.5 means an exact match.
#[derive(Debug, Clone, PartialEq)]
pub struct BitFlip {
    spec: EnvSpec,
    bits: Vec<f64>,
    episode: Episode,
}

impl BitFlip {
    pub fn new(params: BitFlipParams) -> Result<Self> {
        if params.bits == 0 || params.horizon == 0 || params.tolerance <= 0.0 {
            return Err(Error::Config("bitflip needs bits, horizon and tolerance > 0".into()));
        }
        let n = params.bits;
        let spec = EnvSpec {
            id: alloc::format!("bitflip{n}"),
            state_dim: n,
            action_dim: n + 1,
            horizon: params.horizon,
            action_low: vec![-1.0; n + 1],
            action_high: vec![1.0; n + 1],
            goal_space: GoalSpace {
                dimension: n,
                metric: Metric::Euclidean,
                tolerance: params.tolerance,
            },
            max_goal_distance: math::sqrt(n as f64),
        };
        Ok(Self {
            spec,
            bits: vec![0.0; n],
            episode: Episode {
                t: params.horizon,
                desired: vec![0.0; n],
            },
        })
    }

    /// Which bit an action flips, if any. Ties go to the lowest index.
    pub fn flipped_bit(action: &[f64]) -> Option<usize> {
        let (idx, _) = action
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (i, v)| match acc {
                Some((_, b)) if *b >= *v => acc,
                _ => Some((i, v)),
            })?;
        (idx + 1 < action.len()).then_some(idx)
    }
}

impl MultiGoalEnv for BitFlip {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Reset {
        let n = self.spec.state_dim;
        self.bits = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let desired: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        self.episode = Episode {
            t: 0,
            desired: desired.clone(),
        };
        Reset {
            state: self.bits.clone(),
            achieved_goal: self.bits.clone(),
            desired_goal: desired,
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let action = check_action(&self.spec, action)?;
        let done = self.episode.advance(self.spec.horizon)?;
        if let Some(i) = Self::flipped_bit(&action) {
            self.bits[i] = 1.0 - self.bits[i];
        }
        let reward = self.spec.goal_space.reward(&self.bits, &self.episode.desired);
        Ok(EnvStep {
            next_state: self.bits.clone(),
            achieved_goal: self.bits.clone(),
            reward,
            done,
        })
    }

    fn achieved_goal(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    fn desired_goal(&self) -> &[f64] {
        &self.episode.desired
    }
}

// ---------------------------------------------------------------------------
// PointPush2D

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointPushParams {
    /// The plane is `[-bound, bound]^2`.
    pub bound: f64,
    /// Maximum agent displacement per step.
    pub agent_speed: f64,
    /// Agent centre to disk centre distance at contact.
    pub contact_radius: f64,
    /// Object starts and targets are drawn from `[-spawn, spawn]^2`.
    pub spawn: f64,
    /// Targets lie within this distance of the object start.
    pub max_goal_offset: f64,
    /// The agent starts between `1.5 * contact_radius` and this distance
    /// from the object.
    pub agent_start_offset: f64,
    pub horizon: usize,
    pub tolerance: f64,
}

impl Default for PointPushParams {
    fn default() -> Self {
        Self {
            bound: 1.0,
            agent_speed: 0.08,
            contact_radius: 0.1,
            spawn: 0.5,
            max_goal_offset: 0.6,
            agent_start_offset: 0.3,
            horizon: 50,
            tolerance: 0.05,
        }
    }
}

/// A point agent pushes a disk across a bounded plane. State is
/// `(agent_x, agent_y, object_x, object_y)`; the achieved goal is the
/// object position.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPush2D {
    params: PointPushParams,
    spec: EnvSpec,
    agent: [f64; 2],
    object: [f64; 2],
    episode: Episode,
}

impl PointPush2D {
    pub fn new(params: PointPushParams) -> Result<Self> {
        let p = params;
        if !(p.bound > 0.0
            && p.agent_speed > 0.0
            && p.contact_radius > 0.0
            && p.spawn > 0.0
            && p.spawn + p.contact_radius <= p.bound
            && p.max_goal_offset > 0.0
            && p.agent_start_offset > 1.5 * p.contact_radius
            && p.horizon > 0
            && p.tolerance > 0.0)
        {
            return Err(Error::Config("invalid pointpush2d parameters".into()));
        }
        let spec = EnvSpec {
            id: "pointpush2d".to_string(),
            state_dim: 4,
            action_dim: 2,
            horizon: p.horizon,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            goal_space: GoalSpace {
                dimension: 2,
                metric: Metric::Euclidean,
                tolerance: p.tolerance,
            },
            max_goal_distance: p.max_goal_offset.min(2.0 * math::sqrt(2.0) * p.spawn),
        };
        Ok(Self {
            params: p,
            spec,
            agent: [0.0; 2],
            object: [0.0; 2],
            episode: Episode {
                t: p.horizon,
                desired: vec![0.0; 2],
            },
        })
    }

    pub fn params(&self) -> &PointPushParams {
        &self.params
    }

    fn state(&self) -> Vec<f64> {
        vec![self.agent[0], self.agent[1], self.object[0], self.object[1]]
    }

    /// One step of the kinematics, exposed for scripted replays.
    pub fn kinematics(params: &PointPushParams, agent: [f64; 2], object: [f64; 2], action: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let b = params.bound;
        let a = [
            (agent[0] + params.agent_speed * action[0]).clamp(-b, b),
            (agent[1] + params.agent_speed * action[1]).clamp(-b, b),
        ];
        let d = [object[0] - a[0], object[1] - a[1]];
        let dist = math::sqrt(d[0] * d[0] + d[1] * d[1]);
        let r = params.contact_radius;
        if dist >= r {
            return (a, object);
        }
        let dir = if dist > 1e-12 {
            [d[0] / dist, d[1] / dist]
        } else {
            let n = math::sqrt(action[0] * action[0] + action[1] * action[1]);
            if n > 1e-12 {
                [action[0] / n, action[1] / n]
            } else {
                [1.0, 0.0]
            }
        };
        let lim = b - r;
        let o = [
            (a[0] + r * dir[0]).clamp(-lim, lim),
            (a[1] + r * dir[1]).clamp(-lim, lim),
        ];
        (a, o)
    }
}

impl MultiGoalEnv for PointPush2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Reset {
        let p = &self.params;
        let s = p.spawn;
        self.object = [rng.random_range(-s..s), rng.random_range(-s..s)];
        // Target within max_goal_offset of the start, kept inside the spawn square.
        let desired = loop {
            let r = p.max_goal_offset * math::sqrt(rng.random::<f64>());
            let th = rng.random_range(-PI..PI);
            let g = [self.object[0] + r * math::cos(th), self.object[1] + r * math::sin(th)];
            if math::abs(g[0]) <= s && math::abs(g[1]) <= s {
                break g;
            }
        };
        // Agent starts near the object but outside contact range.
        self.agent = loop {
            let r = rng.random_range(1.5 * p.contact_radius..p.agent_start_offset);
            let th = rng.random_range(-PI..PI);
            let a = [self.object[0] + r * math::cos(th), self.object[1] + r * math::sin(th)];
            if math::abs(a[0]) <= p.bound && math::abs(a[1]) <= p.bound {
                break a;
            }
        };
        self.episode = Episode {
            t: 0,
            desired: desired.to_vec(),
        };
        Reset {
            state: self.state(),
            achieved_goal: self.object.to_vec(),
            desired_goal: desired.to_vec(),
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let action = check_action(&self.spec, action)?;
        let done = self.episode.advance(self.spec.horizon)?;
        let (a, o) = Self::kinematics(&self.params, self.agent, self.object, [action[0], action[1]]);
        self.agent = a;
        self.object = o;
        let reward = self.spec.goal_space.reward(&self.object, &self.episode.desired);
        Ok(EnvStep {
            next_state: self.state(),
            achieved_goal: self.object.to_vec(),
            reward,
            done,
        })
    }

    fn achieved_goal(&self, state: &[f64]) -> Vec<f64> {
        state[2..4].to_vec()
    }

    fn desired_goal(&self) -> &[f64] {
        &self.episode.desired
    }
}

// ---------------------------------------------------------------------------
// PlanarRotate

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarRotateParams {
    /// Angular velocity change per unit torque per step.
    pub torque_gain: f64,
    /// Fraction of angular velocity lost per step.
    pub damping: f64,
    pub max_velocity: f64,
    pub horizon: usize,
    pub tolerance: f64,
}

impl Default for PlanarRotateParams {
    fn default() -> Self {
        Self {
            torque_gain: 0.1,
            damping: 0.05,
            max_velocity: 0.4,
            horizon: 50,
            tolerance: 0.1,
        }
    }
}

/// A held object rotated about one axis by a bounded torque. Velocity
/// carries over between steps, so the object has to be braked and held
/// at the target to keep scoring. State is `(sin, cos, velocity / max)`;
/// the achieved goal is the angle.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarRotate {
    params: PlanarRotateParams,
    spec: EnvSpec,
    angle: f64,
    velocity: f64,
    episode: Episode,
}

impl PlanarRotate {
    pub fn new(params: PlanarRotateParams) -> Result<Self> {
        let p = params;
        if !(p.torque_gain > 0.0
            && (0.0..1.0).contains(&p.damping)
            && p.max_velocity > 0.0
            && p.horizon > 0
            && p.tolerance > 0.0)
        {
            return Err(Error::Config("invalid planarrotate parameters".into()));
        }
        let spec = EnvSpec {
            id: "planarrotate".to_string(),
            state_dim: 3,
            action_dim: 1,
            horizon: p.horizon,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            goal_space: GoalSpace {
                dimension: 1,
                metric: Metric::Angular,
                tolerance: p.tolerance,
            },
            max_goal_distance: PI,
        };
        Ok(Self {
            params: p,
            spec,
            angle: 0.0,
            velocity: 0.0,
            episode: Episode {
                t: p.horizon,
                desired: vec![0.0],
            },
        })
    }

    pub fn params(&self) -> &PlanarRotateParams {
        &self.params
    }

    fn state(&self) -> Vec<f64> {
        vec![
            math::sin(self.angle),
            math::cos(self.angle),
            self.velocity / self.params.max_velocity,
        ]
    }

    /// One step of the rotation dynamics: returns the new `(angle, velocity)`.
    pub fn dynamics(params: &PlanarRotateParams, angle: f64, velocity: f64, torque: f64) -> (f64, f64) {
        let v = ((1.0 - params.damping) * velocity + params.torque_gain * torque)
            .clamp(-params.max_velocity, params.max_velocity);
        (math::wrap_angle(angle + v), v)
    }
}

impl MultiGoalEnv for PlanarRotate {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Reset {
        self.angle = rng.random_range(-PI..PI);
        self.velocity = 0.0;
        let desired = vec![rng.random_range(-PI..PI)];
        self.episode = Episode {
            t: 0,
            desired: desired.clone(),
        };
        Reset {
            state: self.state(),
            achieved_goal: vec![self.angle],
            desired_goal: desired,
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let action = check_action(&self.spec, action)?;
        let done = self.episode.advance(self.spec.horizon)?;
        let (a, v) = Self::dynamics(&self.params, self.angle, self.velocity, action[0]);
        self.angle = a;
        self.velocity = v;
        let achieved = vec![self.angle];
        let reward = self.spec.goal_space.reward(&achieved, &self.episode.desired);
        Ok(EnvStep {
            next_state: self.state(),
            achieved_goal: achieved,
            reward,
            done,
        })
    }

    fn achieved_goal(&self, state: &[f64]) -> Vec<f64> {
        vec![math::atan2(state[0], state[1])]
    }

    fn desired_goal(&self) -> &[f64] {
        &self.episode.desired
    }
}

// ---------------------------------------------------------------------------
// Selection by id

/// Environment choice plus parameter overrides, as found in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum EnvConfig {
    #[serde(rename = "bitflip")]
    BitFlip(BitFlipParams),
    #[serde(rename = "pointpush2d")]
    PointPush2D(PointPushParams),
    #[serde(rename = "planarrotate")]
    PlanarRotate(PlanarRotateParams),
}

impl EnvConfig {
    pub fn build(&self) -> Result<AnyEnv> {
        Ok(match *self {
            EnvConfig::BitFlip(p) => AnyEnv::BitFlip(BitFlip::new(p)?),
            EnvConfig::PointPush2D(p) => AnyEnv::PointPush2D(PointPush2D::new(p)?),
            EnvConfig::PlanarRotate(p) => AnyEnv::PlanarRotate(PlanarRotate::new(p)?),
        })
    }

    /// Canonical string id, e.g. `bitflip8`.
    pub fn id(&self) -> String {
        match self {
            EnvConfig::BitFlip(p) => alloc::format!("bitflip{}", p.bits),
            EnvConfig::PointPush2D(_) => "pointpush2d".to_string(),
            EnvConfig::PlanarRotate(_) => "planarrotate".to_string(),
        }
    }

    /// Default admission threshold on the combined goal-pair distance:
    /// 1.0 on bit-strings, 0.25 rad for rotation, and 5% of the workspace
    /// side for the pusher.
    pub fn default_c_comb(&self) -> f64 {
        match self {
            EnvConfig::BitFlip(_) => 1.0,
            EnvConfig::PointPush2D(p) => 0.05 * 2.0 * p.bound,
            EnvConfig::PlanarRotate(_) => 0.25,
        }
    }
}

impl fmt::Display for EnvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for EnvConfig {
    type Err = Error;

    /// Accepts `bitflip<n>` (bare `bitflip` means 8), `pointpush2d` and `planarrotate`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "pointpush2d" => return Ok(EnvConfig::PointPush2D(PointPushParams::default())),
            "planarrotate" => return Ok(EnvConfig::PlanarRotate(PlanarRotateParams::default())),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("bitflip") {
            let bits = if rest.is_empty() {
                8
            } else {
                rest.parse::<usize>()
                    .map_err(|_| Error::Config(alloc::format!("unknown environment id `{s}`")))?
            };
            return Ok(EnvConfig::BitFlip(BitFlipParams {
                bits,
                horizon: bits,
                ..BitFlipParams::default()
            }));
        }
        Err(Error::Config(alloc::format!("unknown environment id `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyEnv {
    BitFlip(BitFlip),
    PointPush2D(PointPush2D),
    PlanarRotate(PlanarRotate),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::BitFlip($e) => $body,
            AnyEnv::PointPush2D($e) => $body,
            AnyEnv::PlanarRotate($e) => $body,
        }
    };
}

impl MultiGoalEnv for AnyEnv {
    fn spec(&self) -> &EnvSpec {
        dispatch!(self, e => e.spec())
    }

    fn reset(&mut self, rng: &mut Rng) -> Reset {
        dispatch!(self, e => e.reset(rng))
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        dispatch!(self, e => e.step(action))
    }

    fn achieved_goal(&self, state: &[f64]) -> Vec<f64> {
        dispatch!(self, e => e.achieved_goal(state))
    }

    fn desired_goal(&self) -> &[f64] {
        dispatch!(self, e => e.desired_goal())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from;

    #[test]
    fn goal_distance_examples() {
        let e = GoalSpace {
            dimension: 2,
            metric: Metric::Euclidean,
            tolerance: 0.05,
        };
        assert_eq!(e.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(e.distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(e.distance(&[0.0], &[0.0, 1.0]).is_err());

        let a = GoalSpace {
            dimension: 1,
            metric: Metric::Angular,
            tolerance: 0.1,
        };
        let d = a.distance(&[3.0], &[-3.0]).unwrap();
        assert!((d - (2.0 * PI - 6.0)).abs() < 1e-12);
        assert!(a.distance(&[0.7], &[0.7 + 2.0 * PI]).unwrap() < 1e-12);
    }

    #[test]
    fn reward_boundary() {
        let e = GoalSpace {
            dimension: 2,
            metric: Metric::Euclidean,
            tolerance: 0.05,
        };
        assert_eq!(e.reward(&[0.2, 0.3], &[0.2, 0.3]), 0.0);
        assert_eq!(e.reward(&[0.0, 0.0], &[0.05 + 1e-9, 0.0]), -1.0);
        assert_eq!(e.reward(&[0.0, 0.0], &[0.05, 0.0]), -1.0);
        assert_eq!(e.reward(&[0.0, 0.0], &[0.0499, 0.0]), 0.0);
    }

    #[test]
    fn reset_is_deterministic() {
        for cfg in ["bitflip8", "pointpush2d", "planarrotate"] {
            let cfg: EnvConfig = cfg.parse().unwrap();
            let mut a = cfg.build().unwrap();
            let mut b = cfg.build().unwrap();
            assert_eq!(a.reset(&mut rng_from(5, 1)), b.reset(&mut rng_from(5, 1)));
        }
    }

    #[test]
    fn bitflip_reset_enumerates_rng_draws() {
        let mut env = BitFlip::new(BitFlipParams::default()).unwrap();
        let r = env.reset(&mut rng_from(11, 0));
        // Replay the same draws: 8 bits for the start, then 8 for the goal.
        let mut rng = rng_from(11, 0);
        let start: Vec<f64> = (0..8).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let goal: Vec<f64> = (0..8).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        assert_eq!(r.state, start);
        assert_eq!(r.achieved_goal, start);
        assert_eq!(r.desired_goal, goal);
    }

    #[test]
    fn bitflip_action_semantics() {
        assert_eq!(BitFlip::flipped_bit(&[-1.0, 0.5, 0.2]), Some(1));
        assert_eq!(BitFlip::flipped_bit(&[-1.0, -0.5, -0.2]), None);
        assert_eq!(BitFlip::flipped_bit(&[-0.9, -0.5, -0.7]), Some(1));
        assert_eq!(BitFlip::flipped_bit(&[0.3, 0.3, 0.3]), Some(0));
    }

    #[test]
    fn planar_rotate_reset_ranges() {
        let mut env = PlanarRotate::new(PlanarRotateParams::default()).unwrap();
        for s in 0..200 {
            let r = env.reset(&mut rng_from(s, 0));
            assert!((-PI..PI).contains(&r.desired_goal[0]));
            assert!((-PI..PI).contains(&r.achieved_goal[0]));
            assert_eq!(env.achieved_goal(&r.state).len(), 1);
            assert!((env.achieved_goal(&r.state)[0] - r.achieved_goal[0]).abs() < 1e-12);
            assert_eq!(r.state[2], 0.0);
        }
    }

    #[test]
    fn fixed_horizon_and_finished_episode() {
        let mut env: AnyEnv = "planarrotate".parse::<EnvConfig>().unwrap().build().unwrap();
        env.reset(&mut rng_from(0, 0));
        for t in 1..=50 {
            let s = env.step(&[0.3]).unwrap();
            assert_eq!(s.done, t == 50);
        }
        assert_eq!(env.step(&[0.3]), Err(Error::EpisodeFinished(50)));
    }

    #[test]
    fn actions_are_clipped() {
        let p = PlanarRotateParams::default();
        let mut a = PlanarRotate::new(p).unwrap();
        let mut b = PlanarRotate::new(p).unwrap();
        a.reset(&mut rng_from(2, 0));
        b.reset(&mut rng_from(2, 0));
        assert_eq!(a.step(&[7.0]).unwrap(), b.step(&[1.0]).unwrap());
        assert!(a.step(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn unknown_id_rejected() {
        assert!("cartpole".parse::<EnvConfig>().is_err());
        assert_eq!("bitflip4".parse::<EnvConfig>().unwrap().id(), "bitflip4");
    }
}
