//! Trajectory storage: the agent buffer, the FIFO-capped expert buffer,
//! and transition sampling over both.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;
use crate::math;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Part of the initial demonstration set.
    DemoSeed,
    /// Self-generated and promoted into the expert buffer.
    SelfAdmitted,
    /// Self-generated, kept as ordinary experience.
    Agent,
}

/// The difficulty signature of a trajectory: where it started in goal
/// space and where it was asked to go.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalPair<'a> {
    pub init: &'a [f64],
    pub desired: &'a [f64],
}

/// One timestep, owned.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub next_achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
    pub reward: f64,
    pub is_expert: bool,
}

/// A fixed-horizon episode stored as flat row-major arrays.
///
/// `states` and `achieved_goals` hold `T + 1` rows, `actions` and
/// `rewards` hold `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    state_dim: usize,
    action_dim: usize,
    goal_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    achieved_goals: Vec<f64>,
    desired_goal: Vec<f64>,
    rewards: Vec<f64>,
    episode_return: f64,
    pub source: Source,
    /// Collection index assigned by the training loop; 0 for demonstrations.
    pub tag: u64,
}

/// Nested-array view used for persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub achieved_goals: Vec<Vec<f64>>,
    pub desired_goal: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    /// Assemble a trajectory from per-step rows.
    pub fn new(
        states: &[Vec<f64>],
        actions: &[Vec<f64>],
        achieved_goals: &[Vec<f64>],
        desired_goal: Vec<f64>,
        rewards: Vec<f64>,
        source: Source,
    ) -> Result<Self> {
        let horizon = rewards.len();
        if horizon == 0 {
            return Err(Error::MalformedTrajectory("empty trajectory".into()));
        }
        if states.len() != horizon + 1 || achieved_goals.len() != horizon + 1 || actions.len() != horizon {
            return Err(Error::MalformedTrajectory(format!(
                "expected {} states/achieved goals and {} actions, got {}/{} and {}",
                horizon + 1,
                horizon,
                states.len(),
                achieved_goals.len(),
                actions.len()
            )));
        }
        let flatten = |rows: &[Vec<f64>], what: &str| -> Result<(usize, Vec<f64>)> {
            let dim = rows[0].len();
            if rows.iter().any(|r| r.len() != dim) {
                return Err(Error::MalformedTrajectory(format!("ragged {what} rows")));
            }
            Ok((dim, rows.iter().flatten().copied().collect()))
        };
        let (state_dim, states) = flatten(states, "state")?;
        let (action_dim, actions) = flatten(actions, "action")?;
        let (goal_dim, achieved_goals) = flatten(achieved_goals, "achieved goal")?;
        if desired_goal.len() != goal_dim {
            return Err(Error::MalformedTrajectory(format!(
                "desired goal has {} components, achieved goals {}",
                desired_goal.len(),
                goal_dim
            )));
        }
        let all = states
            .iter()
            .chain(&actions)
            .chain(&achieved_goals)
            .chain(&desired_goal)
            .chain(&rewards);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedTrajectory("non-finite value".into()));
        }
        let episode_return = rewards.iter().sum();
        Ok(Self {
            state_dim,
            action_dim,
            goal_dim,
            states,
            actions,
            achieved_goals,
            desired_goal,
            rewards,
            episode_return,
            source,
            tag: 0,
        })
    }

    pub fn from_record(record: &TrajectoryRecord, source: Source) -> Result<Self> {
        Self::new(
            &record.states,
            &record.actions,
            &record.achieved_goals,
            record.desired_goal.clone(),
            record.rewards.clone(),
            source,
        )
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        let rows = |flat: &[f64], dim: usize| flat.chunks(dim.max(1)).map(|c| c.to_vec()).collect();
        TrajectoryRecord {
            states: rows(&self.states, self.state_dim),
            actions: rows(&self.actions, self.action_dim),
            achieved_goals: rows(&self.achieved_goals, self.goal_dim),
            desired_goal: self.desired_goal.clone(),
            rewards: self.rewards.clone(),
        }
    }

    /// Number of transitions.
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn achieved_goal(&self, t: usize) -> &[f64] {
        &self.achieved_goals[t * self.goal_dim..(t + 1) * self.goal_dim]
    }

    pub fn desired_goal(&self) -> &[f64] {
        &self.desired_goal
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn goal_pair(&self) -> GoalPair<'_> {
        GoalPair {
            init: self.achieved_goal(0),
            desired: &self.desired_goal,
        }
    }

    /// Whether the desired goal was reached at any step.
    pub fn is_successful(&self) -> bool {
        self.rewards.iter().any(|&r| r == 0.0)
    }

    /// Whether the goal is held at the final step.
    pub fn final_success(&self) -> bool {
        self.rewards.last() == Some(&0.0)
    }

    /// Fraction of steps spent within tolerance of the goal.
    pub fn hold_fraction(&self) -> f64 {
        self.rewards.iter().filter(|&&r| r == 0.0).count() as f64 / self.horizon() as f64
    }

    pub fn transition(&self, t: usize, is_expert: bool) -> Transition {
        Transition {
            state: self.state(t).to_vec(),
            action: self.action(t).to_vec(),
            next_state: self.state(t + 1).to_vec(),
            achieved_goal: self.achieved_goal(t).to_vec(),
            next_achieved_goal: self.achieved_goal(t + 1).to_vec(),
            desired_goal: self.desired_goal.clone(),
            reward: self.rewards[t],
            is_expert,
        }
    }

    /// Check dimensions, horizon and sparse-reward consistency against an
    /// environment.
    pub fn validate(&self, spec: &EnvSpec) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::MalformedTrajectory(msg));
        if self.state_dim != spec.state_dim || self.action_dim != spec.action_dim || self.goal_dim != spec.goal_dim() {
            return bad(format!(
                "dimensions (state {}, action {}, goal {}) do not match {}",
                self.state_dim, self.action_dim, self.goal_dim, spec.id
            ));
        }
        if self.horizon() != spec.horizon {
            return bad(format!("horizon {} does not match {} ({})", self.horizon(), spec.id, spec.horizon));
        }
        for t in 0..self.horizon() {
            let expected = spec.goal_space.reward(self.achieved_goal(t + 1), &self.desired_goal);
            if self.rewards[t] != expected {
                return bad(format!("reward at step {t} is {} but the goals imply {expected}", self.rewards[t]));
            }
        }
        let sum: f64 = self.rewards.iter().sum();
        if sum != self.episode_return {
            return bad(format!("cached return {} differs from reward sum {sum}", self.episode_return));
        }
        Ok(())
    }
}

/// Read access shared by both buffers.
pub trait TrajectoryStore {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> &Trajectory;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transition_count(&self) -> usize {
        (0..self.len()).map(|i| self.get(i).horizon()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExpertEntry {
    id: u64,
    trajectory: Trajectory,
}

/// Demonstration store with FIFO eviction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBuffer {
    spec: EnvSpec,
    capacity: usize,
    entries: VecDeque<ExpertEntry>,
    next_id: u64,
}

impl ExpertBuffer {
    pub fn new(spec: EnvSpec, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("expert buffer capacity must be positive".into()));
        }
        Ok(Self {
            spec,
            capacity,
            entries: VecDeque::new(),
            next_id: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Insert at the back, evicting from the front when full. Returns the
    /// evicted trajectory, if any.
    pub fn push(&mut self, trajectory: Trajectory) -> Result<Option<Trajectory>> {
        trajectory.validate(&self.spec)?;
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front().map(|e| e.trajectory)
        } else {
            None
        };
        self.entries.push_back(ExpertEntry {
            id: self.next_id,
            trajectory,
        });
        self.next_id += 1;
        Ok(evicted)
    }

    /// Insertion ids, oldest first.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn id_at(&self, index: usize) -> u64 {
        self.entries[index].id
    }

    pub fn by_id(&self, id: u64) -> Option<&Trajectory> {
        self.entries.iter().find(|e| e.id == id).map(|e| &e.trajectory)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        self.entries.iter().map(|e| &e.trajectory)
    }
}

impl TrajectoryStore for ExpertBuffer {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn get(&self, index: usize) -> &Trajectory {
        &self.entries[index].trajectory
    }
}

/// Ring buffer of self-generated experience; the oldest trajectory is
/// overwritten once full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBuffer {
    spec: EnvSpec,
    capacity: usize,
    items: Vec<Trajectory>,
    next: usize,
}

impl AgentBuffer {
    pub fn new(spec: EnvSpec, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("agent buffer capacity must be positive".into()));
        }
        Ok(Self {
            spec,
            capacity,
            items: Vec::new(),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn push(&mut self, trajectory: Trajectory) -> Result<()> {
        trajectory.validate(&self.spec)?;
        if self.items.len() < self.capacity {
            self.items.push(trajectory);
        } else {
            self.items[self.next] = trajectory;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// Trajectories oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }
}

impl TrajectoryStore for AgentBuffer {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn get(&self, index: usize) -> &Trajectory {
        &self.items[index]
    }
}

/// A sampled timestep that keeps access to its whole episode, which
/// hindsight relabeling needs.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub trajectory: &'a Trajectory,
    pub t: usize,
    pub is_expert: bool,
}

impl Sample<'_> {
    pub fn transition(&self) -> Transition {
        self.trajectory.transition(self.t, self.is_expert)
    }
}

/// Share of expert transitions in the union of both buffers.
pub fn union_ratio(agent: &AgentBuffer, expert: Option<&ExpertBuffer>) -> f64 {
    let e = expert.map_or(0, |b| b.transition_count()) as f64;
    let a = agent.transition_count() as f64;
    if e + a == 0.0 {
        0.0
    } else {
        e / (e + a)
    }
}

/// Number of expert items in a batch: `floor(ratio * batch_size)`.
pub fn expert_share(batch_size: usize, demo_ratio: f64) -> usize {
    // The small slack keeps products like 0.5 * 5120 from landing a hair low.
    (math::floor(demo_ratio * batch_size as f64 + 1e-9) as usize).min(batch_size)
}

fn sample_from<'a, S: TrajectoryStore>(store: &'a S, n: usize, is_expert: bool, rng: &mut Rng, out: &mut Vec<Sample<'a>>) {
    for _ in 0..n {
        let trajectory = store.get(rng.random_range(0..store.len()));
        let t = rng.random_range(0..trajectory.horizon());
        out.push(Sample {
            trajectory,
            t,
            is_expert,
        });
    }
}

/// Draw a batch with a deterministic split: `floor(demo_ratio * batch_size)`
/// items from the expert buffer, the rest from the agent buffer. Within a
/// buffer, items are uniform over (trajectory, timestep); all trajectories
/// in a buffer share the environment horizon.
pub fn sample_transitions<'a>(
    agent: &'a AgentBuffer,
    expert: Option<&'a ExpertBuffer>,
    batch_size: usize,
    demo_ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<Sample<'a>>> {
    if !(0.0..=1.0).contains(&demo_ratio) {
        return Err(Error::Config(format!("demo ratio {demo_ratio} outside [0, 1]")));
    }
    let n_expert = expert_share(batch_size, demo_ratio);
    let n_agent = batch_size - n_expert;
    let mut out = Vec::with_capacity(batch_size);
    if n_expert > 0 {
        match expert {
            Some(e) if !e.is_empty() => sample_from(e, n_expert, true, rng, &mut out),
            _ => return Err(Error::EmptyBuffer("expert")),
        }
    }
    if n_agent > 0 {
        if agent.is_empty() {
            return Err(Error::EmptyBuffer("agent"));
        }
        sample_from(agent, n_agent, false, rng, &mut out);
    }
    Ok(out)
}

/// Draw `n` items from one buffer.
pub fn sample_store<'a, S: TrajectoryStore>(store: &'a S, n: usize, is_expert: bool, rng: &mut Rng) -> Result<Vec<Sample<'a>>> {
    if store.is_empty() && n > 0 {
        return Err(Error::EmptyBuffer(if is_expert { "expert" } else { "agent" }));
    }
    let mut out = Vec::with_capacity(n);
    sample_from(store, n, is_expert, rng, &mut out);
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use crate::env::{GoalSpace, Metric};
    use alloc::string::ToString;
    use alloc::vec;

    pub fn line_spec(horizon: usize) -> EnvSpec {
        EnvSpec {
            id: "line".to_string(),
            state_dim: 1,
            action_dim: 1,
            horizon,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            goal_space: GoalSpace {
                dimension: 1,
                metric: Metric::Euclidean,
                tolerance: 0.5,
            },
            max_goal_distance: 10.0,
        }
    }

    /// 1-D trajectory whose state walks through `positions`.
    pub fn line_trajectory(positions: &[f64], desired: f64) -> Trajectory {
        let states: Vec<Vec<f64>> = positions.iter().map(|&p| vec![p]).collect();
        let actions: Vec<Vec<f64>> = positions.windows(2).map(|w| vec![w[1] - w[0]]).collect();
        let rewards = positions[1..]
            .iter()
            .map(|&p| if (p - desired).abs() < 0.5 { 0.0 } else { -1.0 })
            .collect();
        Trajectory::new(&states, &actions, &states, vec![desired], rewards, Source::Agent).unwrap()
    }
}
