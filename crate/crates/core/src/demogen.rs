//! Scripted demonstrators with tunable quality, the demonstration dataset
//! type, and goal-coverage analysis.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::env::{AnyEnv, EnvConfig, EnvSpec, Metric, MultiGoalEnv, PlanarRotateParams, PointPushParams, Reset};
use crate::math;
use crate::replay::{Source, Trajectory};
use crate::{Error, Result, Rng};

/// Version written into dataset headers.
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Number of bins in a coverage histogram.
pub const COVERAGE_BINS: usize = 20;

/// Resets tried per episode when looking for an easy goal pair.
const EASY_RESET_TRIES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerId {
    /// Flip the first mismatched bit.
    BitCorrect,
    /// Go behind the disk, then push it toward the target.
    PushBehind,
    /// Proportional-derivative torque toward the target angle.
    RotatePd,
}

impl ControllerId {
    pub fn for_env(env: &EnvConfig) -> Self {
        match env {
            EnvConfig::BitFlip(_) => ControllerId::BitCorrect,
            EnvConfig::PointPush2D(_) => ControllerId::PushBehind,
            EnvConfig::PlanarRotate(_) => ControllerId::RotatePd,
        }
    }
}

/// Quality knobs of a scripted demonstrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoProfile {
    /// Standard deviation of Gaussian action noise (unit action range).
    /// Also raises the rotation controller's gain, which makes it overshoot.
    pub noise_scale: f64,
    /// Probability that an episode's goal pair is drawn from the easiest
    /// quarter of the goal-distance range.
    pub coverage_skew: f64,
    /// Once the goal has been held for this fraction of the horizon the
    /// demonstrator lets go for the rest of the episode. 1.0 never lets go.
    pub hold_fraction_target: f64,
    /// Episodes allowed per requested demonstration.
    pub max_attempts: usize,
}

impl Default for DemoProfile {
    fn default() -> Self {
        Self::optimal()
    }
}

impl DemoProfile {
    pub fn optimal() -> Self {
        Self {
            noise_scale: 0.0,
            coverage_skew: 0.0,
            hold_fraction_target: 1.0,
            max_attempts: 50,
        }
    }

    /// Noisy demonstrator that favours easy goals and rarely holds the goal.
    pub fn suboptimal() -> Self {
        Self {
            noise_scale: 0.3,
            coverage_skew: 0.8,
            hold_fraction_target: 0.2,
            max_attempts: 50,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_scale >= 0.0)
            || !(0.0..=1.0).contains(&self.coverage_skew)
            || !(self.hold_fraction_target > 0.0 && self.hold_fraction_target <= 1.0)
            || self.max_attempts == 0
        {
            return Err(Error::Config("invalid demo profile".into()));
        }
        Ok(())
    }
}

/// Noise-free scripted action for a state and desired goal.
pub fn scripted_action(env: &EnvConfig, state: &[f64], goal: &[f64], gain_boost: f64) -> Vec<f64> {
    match env {
        EnvConfig::BitFlip(_) => {
            let n = state.len();
            let mut a = vec![-1.0; n + 1];
            a[(0..n).find(|&i| state[i] != goal[i]).unwrap_or(n)] = 1.0;
            a
        }
        EnvConfig::PointPush2D(p) => push_action(p, state, goal).to_vec(),
        EnvConfig::PlanarRotate(p) => vec![rotate_action(p, state, goal[0], gain_boost)],
    }
}

fn rotate_action(p: &PlanarRotateParams, state: &[f64], target: f64, gain_boost: f64) -> f64 {
    let angle = math::atan2(state[0], state[1]);
    let velocity = state[2] * p.max_velocity;
    let err = math::wrap_angle(target - angle);
    // Dead-beat velocity plan: aim for a velocity that brakes in time,
    // then apply the torque that reaches it in one step.
    let k = 0.5 * (1.0 + gain_boost);
    let desired_v = (k * err).clamp(-p.max_velocity, p.max_velocity);
    let u = (desired_v - (1.0 - p.damping) * velocity) / p.torque_gain;
    u.clamp(-1.0, 1.0)
}

fn push_action(p: &PointPushParams, state: &[f64], goal: &[f64]) -> [f64; 2] {
    let agent = [state[0], state[1]];
    let obj = [state[2], state[3]];
    let to_goal = [goal[0] - obj[0], goal[1] - obj[1]];
    let gd = norm(to_goal);
    if gd < 0.25 * p.tolerance {
        return [0.0, 0.0];
    }
    let u = [to_goal[0] / gd, to_goal[1] / gd];
    let r = p.contact_radius;
    let rel = [agent[0] - obj[0], agent[1] - obj[1]];
    let along = rel[0] * u[0] + rel[1] * u[1];
    let lateral = rel[0] * -u[1] + rel[1] * u[0];
    let behind = [obj[0] - 1.05 * r * u[0], obj[1] - 1.05 * r * u[1]];
    let aligned = along < -0.8 * r && math::abs(lateral) < 0.25 * r;
    let target = if aligned {
        // Push: the disk moves with the agent along the contact normal.
        let step = (gd / p.agent_speed).min(1.0);
        let dir = [behind[0] + u[0] * gd - agent[0], behind[1] + u[1] * gd - agent[1]];
        let n = norm(dir);
        return [dir[0] / n * step, dir[1] / n * step];
    } else if along > -0.5 * r {
        // On the wrong side: go around through a side point.
        let side = if lateral >= 0.0 { 1.0 } else { -1.0 };
        let perp = [-u[1] * side, u[0] * side];
        [
            obj[0] + 1.6 * r * perp[0] - 1.2 * r * u[0],
            obj[1] + 1.6 * r * perp[1] - 1.2 * r * u[1],
        ]
    } else {
        behind
    };
    let dir = [target[0] - agent[0], target[1] - agent[1]];
    let n = norm(dir);
    if n < 1e-12 {
        return [u[0], u[1]];
    }
    let step = (n / p.agent_speed).min(1.0);
    [dir[0] / n * step, dir[1] / n * step]
}

fn norm(v: [f64; 2]) -> f64 {
    math::sqrt(v[0] * v[0] + v[1] * v[1])
}

/// The noise-free scripted controller as a [`Policy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedPolicy {
    pub env: EnvConfig,
}

impl Policy for ScriptedPolicy {
    fn action(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        scripted_action(&self.env, state, goal, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub format_version: u32,
    pub env_id: String,
    pub env: EnvConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub tolerance: f64,
    pub metric: Metric,
    pub horizon: usize,
    pub controller: ControllerId,
    pub profile: DemoProfile,
    pub seed: u64,
}

impl DemoHeader {
    pub fn new(env: EnvConfig, spec: &EnvSpec, profile: DemoProfile, seed: u64) -> Self {
        Self {
            format_version: DATASET_FORMAT_VERSION,
            env_id: env.id(),
            env,
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            goal_dim: spec.goal_dim(),
            tolerance: spec.goal_space.tolerance,
            metric: spec.goal_space.metric,
            horizon: spec.horizon,
            controller: ControllerId::for_env(&env),
            profile,
            seed,
        }
    }

    /// Check the header against the environment it claims to describe.
    pub fn check(&self) -> Result<EnvSpec> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Config(alloc::format!(
                "dataset format version {} is not supported (expected {})",
                self.format_version,
                DATASET_FORMAT_VERSION
            )));
        }
        let spec = self.env.build()?.spec().clone();
        let matches = self.env_id == self.env.id()
            && self.state_dim == spec.state_dim
            && self.action_dim == spec.action_dim
            && self.goal_dim == spec.goal_dim()
            && self.tolerance == spec.goal_space.tolerance
            && self.metric == spec.goal_space.metric
            && self.horizon == spec.horizon;
        if !matches {
            return Err(Error::Config(alloc::format!("dataset header does not match environment {}", self.env_id)));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub header: DemoHeader,
    pub trajectories: Vec<Trajectory>,
}

impl DemoDataset {
    /// Every trajectory must fit the environment and reach its goal.
    pub fn validate(&self) -> Result<()> {
        let spec = self.header.check()?;
        for (i, t) in self.trajectories.iter().enumerate() {
            t.validate(&spec).map_err(|e| Error::MalformedTrajectory(alloc::format!("record {i}: {e}")))?;
            if !t.is_successful() {
                return Err(Error::MalformedTrajectory(alloc::format!("record {i} never reaches its goal")));
            }
        }
        Ok(())
    }
}

/// Per-episode demonstrator state: how long the goal has been held and
/// whether it has let go.
struct Demonstrator<'a> {
    env: &'a EnvConfig,
    profile: &'a DemoProfile,
    hold_budget: usize,
    held: usize,
    release: Option<Vec<f64>>,
}

impl Demonstrator<'_> {
    fn action(&mut self, state: &[f64], goal: &[f64], at_goal: bool, spec: &EnvSpec, rng: &mut Rng) -> Vec<f64> {
        if at_goal {
            self.held += 1;
        }
        if self.release.is_none() && self.held >= self.hold_budget {
            self.release = Some(self.release_action(spec, rng));
        }
        let mut a = match &self.release {
            Some(r) => match self.env {
                EnvConfig::BitFlip(_) => {
                    let mut a = vec![-1.0; spec.action_dim];
                    a[rng.random_range(0..spec.action_dim - 1)] = 1.0;
                    a
                }
                _ => r.clone(),
            },
            None => scripted_action(self.env, state, goal, 2.0 * self.profile.noise_scale),
        };
        if self.profile.noise_scale > 0.0 {
            for v in a.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *v += self.profile.noise_scale * n;
            }
        }
        spec.clip_action(&a)
    }

    /// Constant drift action used after letting go.
    fn release_action(&self, spec: &EnvSpec, rng: &mut Rng) -> Vec<f64> {
        let th = rng.random_range(-PI..PI);
        match spec.action_dim {
            1 => vec![if th >= 0.0 { 0.3 } else { -0.3 }],
            2 => vec![0.5 * math::cos(th), 0.5 * math::sin(th)],
            n => vec![-1.0; n],
        }
    }
}

/// Reset with probability `skew` restricted to the easiest quarter of the
/// goal-distance range.
fn skewed_reset(env: &mut AnyEnv, skew: f64, rng: &mut Rng) -> Reset {
    let easy = skew > 0.0 && rng.random::<f64>() < skew;
    let spec = env.spec().clone();
    let limit = 0.25 * spec.max_goal_distance;
    let mut r = env.reset(rng);
    if easy {
        for _ in 0..EASY_RESET_TRIES {
            if spec.goal_space.dist(&r.achieved_goal, &r.desired_goal) <= limit {
                break;
            }
            r = env.reset(rng);
        }
    }
    r
}

/// Run one demonstrator episode.
fn rollout(env: &mut AnyEnv, config: &EnvConfig, profile: &DemoProfile, rng: &mut Rng) -> Result<Trajectory> {
    let spec = env.spec().clone();
    let reset = skewed_reset(env, profile.coverage_skew, rng);
    let goal = reset.desired_goal.clone();
    let hold_budget = math::floor(profile.hold_fraction_target * spec.horizon as f64 + 0.5).max(1.0) as usize;
    let mut demo = Demonstrator {
        env: config,
        profile,
        hold_budget: if profile.hold_fraction_target >= 1.0 { usize::MAX } else { hold_budget },
        held: 0,
        release: None,
    };
    let mut states = vec![reset.state];
    let mut achieved = vec![reset.achieved_goal];
    let mut actions = Vec::with_capacity(spec.horizon);
    let mut rewards = Vec::with_capacity(spec.horizon);
    let mut at_goal = false;
    for _ in 0..spec.horizon {
        let a = demo.action(states.last().unwrap(), &goal, at_goal, &spec, rng);
        let step = env.step(&a)?;
        at_goal = step.reward == 0.0;
        actions.push(a);
        rewards.push(step.reward);
        states.push(step.next_state);
        achieved.push(step.achieved_goal);
    }
    Trajectory::new(&states, &actions, &achieved, goal, rewards, Source::DemoSeed)
}

/// Generate exactly `count` successful demonstrations.
pub fn generate_demos(env: &EnvConfig, profile: &DemoProfile, count: usize, seed: u64) -> Result<DemoDataset> {
    if count == 0 {
        return Err(Error::Config("demo count must be at least 1".into()));
    }
    profile.validate()?;
    let mut instance = env.build()?;
    let spec = instance.spec().clone();
    let mut rng = crate::rng_from(seed, 0xDE70);
    let budget = profile.max_attempts.saturating_mul(count);
    let mut trajectories = Vec::with_capacity(count);
    let mut attempts = 0;
    while trajectories.len() < count {
        if attempts == budget {
            return Err(Error::DemoGeneration {
                achieved: trajectories.len(),
                requested: count,
                attempts,
            });
        }
        attempts += 1;
        let traj = rollout(&mut instance, env, profile, &mut rng)?;
        if traj.is_successful() {
            trajectories.push(traj);
        }
    }
    Ok(DemoDataset {
        header: DemoHeader::new(*env, &spec, *profile, seed),
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Share of trajectories in this bin.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub env_id: String,
    pub trajectories: usize,
    pub max_distance: f64,
    pub bins: Vec<CoverageBin>,
    pub mean_goal_distance: f64,
    pub mean_hold_fraction: f64,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
}

impl CoverageReport {
    /// Probability mass in the lowest `n` bins.
    pub fn mass_in_lowest_bins(&self, n: usize) -> f64 {
        self.bins.iter().take(n).map(|b| b.density).sum()
    }
}

/// Histogram of `d(g_init, g_d)` over `[0, max goal distance]` plus
/// scalar quality summaries.
pub fn analyze_coverage(dataset: &DemoDataset) -> Result<CoverageReport> {
    let spec = dataset.header.check()?;
    let n = dataset.trajectories.len();
    if n == 0 {
        return Err(Error::Config("cannot analyze an empty dataset".into()));
    }
    let max = spec.max_goal_distance;
    let width = max / COVERAGE_BINS as f64;
    let mut counts = [0usize; COVERAGE_BINS];
    let mut dist_sum = 0.0;
    let mut hold_sum = 0.0;
    let mut ret_sum = 0.0;
    let mut min_return = f64::INFINITY;
    let mut max_return = f64::NEG_INFINITY;
    for t in &dataset.trajectories {
        let gp = t.goal_pair();
        let d = spec.goal_space.distance(gp.init, gp.desired)?;
        let bin = (math::floor(d / width) as usize).min(COVERAGE_BINS - 1);
        counts[bin] += 1;
        dist_sum += d;
        hold_sum += t.hold_fraction();
        ret_sum += t.episode_return();
        min_return = min_return.min(t.episode_return());
        max_return = max_return.max(t.episode_return());
    }
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| CoverageBin {
            lower: i as f64 * width,
            upper: (i + 1) as f64 * width,
            count: c,
            density: c as f64 / n as f64,
        })
        .collect();
    Ok(CoverageReport {
        env_id: dataset.header.env_id.clone(),
        trajectories: n,
        max_distance: max,
        bins,
        mean_goal_distance: dist_sum / n as f64,
        mean_hold_fraction: hold_sum / n as f64,
        mean_return: ret_sum / n as f64,
        min_return,
        max_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimal_bitflip_reaches_goal_within_n_steps() {
        let env: EnvConfig = "bitflip8".parse().unwrap();
        let ds = generate_demos(&env, &DemoProfile::optimal(), 50, 3).unwrap();
        assert_eq!(ds.trajectories.len(), 50);
        for t in &ds.trajectories {
            assert!(t.final_success());
            let mismatched = t
                .achieved_goal(0)
                .iter()
                .zip(t.desired_goal())
                .filter(|(a, b)| a != b)
                .count();
            // Reached after exactly `mismatched` flips, then held.
            let first = t.rewards().iter().position(|&r| r == 0.0).unwrap();
            assert!(first + 1 <= mismatched.max(1));
        }
        ds.validate().unwrap();
    }

    #[test]
    fn generation_is_pure_in_seed() {
        let env: EnvConfig = "planarrotate".parse().unwrap();
        let a = generate_demos(&env, &DemoProfile::suboptimal(), 5, 9).unwrap();
        let b = generate_demos(&env, &DemoProfile::suboptimal(), 5, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_demos(&env, &DemoProfile::suboptimal(), 5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn skew_one_keeps_easiest_quartile() {
        for id in ["planarrotate", "pointpush2d"] {
            let env: EnvConfig = id.parse().unwrap();
            let profile = DemoProfile {
                coverage_skew: 1.0,
                ..DemoProfile::optimal()
            };
            let ds = generate_demos(&env, &profile, 20, 1).unwrap();
            let spec = ds.header.check().unwrap();
            for t in &ds.trajectories {
                let gp = t.goal_pair();
                assert!(spec.goal_space.dist(gp.init, gp.desired) <= 0.25 * spec.max_goal_distance);
            }
        }
    }

    #[test]
    fn unreachable_count_reports_progress() {
        let env: EnvConfig = "planarrotate".parse().unwrap();
        let profile = DemoProfile {
            noise_scale: 50.0,
            max_attempts: 1,
            ..DemoProfile::optimal()
        };
        match generate_demos(&env, &profile, 200, 0) {
            Err(Error::DemoGeneration { requested, attempts, achieved }) => {
                assert_eq!(requested, 200);
                assert_eq!(attempts, 200);
                assert!(achieved < 200);
            }
            other => panic!("expected a generation error, got {other:?}"),
        }
    }

    #[test]
    fn identical_goal_pairs_fill_one_bin() {
        let env: EnvConfig = "bitflip4".parse().unwrap();
        let mut ds = generate_demos(&env, &DemoProfile::optimal(), 1, 0).unwrap();
        let t = ds.trajectories[0].clone();
        ds.trajectories = vec![t; 7];
        let rep = analyze_coverage(&ds).unwrap();
        let occupied: Vec<_> = rep.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(occupied[0].density, 1.0);
        assert_eq!(rep.bins.len(), COVERAGE_BINS);
    }
}
