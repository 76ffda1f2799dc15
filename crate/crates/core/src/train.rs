//! The training loop: collect with admission routing, train the
//! discriminator, then run hindsight policy updates on mixed rewards.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::{return_bounds, ActorCritic, BcConfig, DdpgConfig, Policy, UpdateBatch};
use crate::env::{EnvConfig, EnvSpec, MultiGoalEnv};
use crate::gail::{mix_reward, train_discriminator, Discriminator, DiscriminatorConfig, GailWeightSchedule};
use crate::her::{relabel, RelabelConfig};
use crate::replay::{sample_transitions, union_ratio, AgentBuffer, ExpertBuffer, Source, Trajectory, TrajectoryStore, Transition};
use crate::sagail::{decide_admission, AdmissionConfig, AdmissionStats, Decision};
use crate::{Error, Result, Rng};

/// RNG stream used for evaluation episodes.
pub const EVAL_STREAM: u64 = 0xE7A1;
const TRAIN_STREAM: u64 = 0x7A11;
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Her,
    DdpgfdHer,
    GoalGail,
    GoalSagail,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Her, Algo::DdpgfdHer, Algo::GoalGail, Algo::GoalSagail];

    pub fn uses_demos(self) -> bool {
        !matches!(self, Algo::Her)
    }

    pub fn uses_discriminator(self) -> bool {
        matches!(self, Algo::GoalGail | Algo::GoalSagail)
    }

    pub fn uses_admission(self) -> bool {
        matches!(self, Algo::GoalSagail)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Her => "her",
            Algo::DdpgfdHer => "ddpgfd_her",
            Algo::GoalGail => "goal_gail",
            Algo::GoalSagail => "goal_sagail",
        }
    }
}

impl core::fmt::Display for Algo {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown algo `{s}` (expected her, ddpgfd_her, goal_gail or goal_sagail)")))
    }
}

/// How policy batches split between the expert and agent buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoSampling {
    /// Uniform over the union of both buffers.
    Union,
    /// Fixed expert share annealed toward the union share.
    Ratio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoRatioSchedule {
    pub initial: f64,
    /// Fraction of all epochs over which the share moves linearly to the
    /// union share.
    pub anneal_fraction: f64,
}

impl Default for DemoRatioSchedule {
    fn default() -> Self {
        Self {
            initial: 0.5,
            anneal_fraction: 0.5,
        }
    }
}

impl DemoRatioSchedule {
    pub fn ratio(&self, epoch: usize, epochs: usize, union: f64) -> f64 {
        let span = self.anneal_fraction * epochs as f64;
        let frac = if span <= 0.0 { 1.0 } else { (epoch as f64 / span).min(1.0) };
        (self.initial + (union - self.initial) * frac).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetUpdate {
    PerCycle,
    PerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub algo: Algo,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub episodes_per_cycle: usize,
    pub policy_batches_per_cycle: usize,
    pub policy_batch_size: usize,
    pub disc_batches_per_cycle: usize,
    pub disc_batch_size: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Demonstration dataset file, read by the command-line front end.
    pub demos: Option<String>,
    /// Agent buffer capacity in episodes.
    pub agent_buffer_episodes: usize,
    /// Expert buffer capacity as a multiple of the demonstration count.
    pub expert_cap_multiplier: usize,
    pub demo_sampling: DemoSampling,
    pub demo_ratio: DemoRatioSchedule,
    pub target_update: TargetUpdate,
    /// Keep an ordered log of collection and update events.
    pub record_events: bool,
    pub ddpg: DdpgConfig,
    pub bc: BcConfig,
    pub her: RelabelConfig,
    pub discriminator: DiscriminatorConfig,
    pub gail_weight: GailWeightSchedule,
    pub admission: AdmissionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = Self {
            env: EnvConfig::PlanarRotate(Default::default()),
            algo: Algo::GoalSagail,
            epochs: 50,
            cycles_per_epoch: 50,
            episodes_per_cycle: 40,
            policy_batches_per_cycle: 40,
            policy_batch_size: 5120,
            disc_batches_per_cycle: 40,
            disc_batch_size: 512,
            eval_episodes: 100,
            seeds: vec![0, 1, 2, 3, 4],
            demos: None,
            agent_buffer_episodes: 20_000,
            expert_cap_multiplier: 20,
            demo_sampling: DemoSampling::Union,
            demo_ratio: DemoRatioSchedule::default(),
            target_update: TargetUpdate::PerCycle,
            record_events: false,
            ddpg: DdpgConfig::default(),
            bc: BcConfig::default(),
            her: RelabelConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            gail_weight: GailWeightSchedule::default(),
            admission: AdmissionConfig::default(),
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => {
                let hidden = vec![64; 3];
                Self {
                    epochs: 20,
                    cycles_per_epoch: 10,
                    episodes_per_cycle: 16,
                    policy_batches_per_cycle: 40,
                    policy_batch_size: 256,
                    disc_batches_per_cycle: 20,
                    disc_batch_size: 256,
                    agent_buffer_episodes: 5_000,
                    ddpg: DdpgConfig {
                        hidden_layers: hidden.clone(),
                        ..DdpgConfig::default()
                    },
                    discriminator: DiscriminatorConfig {
                        hidden_layers: hidden,
                        ..DiscriminatorConfig::default()
                    },
                    gail_weight: GailWeightSchedule {
                        anneal_epochs: 20,
                        ..GailWeightSchedule::default()
                    },
                    ..paper
                }
            }
        }
    }

    /// A preset for `env` and `algo`, with the environment's admission threshold.
    pub fn for_env(preset: Preset, env: EnvConfig, algo: Algo) -> Self {
        let mut c = Self::preset(preset);
        c.admission.c_comb = env.default_c_comb();
        c.env = env;
        c.algo = algo;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.cycles_per_epoch, "cycles_per_epoch"),
            (self.episodes_per_cycle, "episodes_per_cycle"),
            (self.policy_batch_size, "policy_batch_size"),
            (self.eval_episodes, "eval_episodes"),
            (self.agent_buffer_episodes, "agent_buffer_episodes"),
            (self.expert_cap_multiplier, "expert_cap_multiplier"),
        ];
        for (v, name) in positive {
            if v == 0 {
                return Err(Error::Config(alloc::format!("{name} must be positive")));
            }
        }
        if self.algo.uses_discriminator() && self.disc_batch_size == 0 {
            return Err(Error::Config("disc_batch_size must be positive".into()));
        }
        if self.ddpg.bc.is_some() {
            return Err(Error::Config("set behaviour cloning through `bc` and algo = ddpgfd_her".into()));
        }
        if !(0.0..=1.0).contains(&self.demo_ratio.initial) {
            return Err(Error::Config("demo_ratio.initial must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gail_weight.initial) {
            return Err(Error::Config("gail_weight.initial must lie in [0, 1]".into()));
        }
        if !(self.admission.c_comb > 0.0) {
            return Err(Error::Config("admission.c_comb must be positive".into()));
        }
        Ok(())
    }

    fn agent_config(&self) -> DdpgConfig {
        let mut c = self.ddpg.clone();
        c.bc = (self.algo == Algo::DdpgfdHer).then_some(self.bc);
        c
    }
}

/// NaN marks "not measured"; JSON has no NaN, so it travels as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> core::result::Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One row per evaluated epoch; row 0 evaluates the untrained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub admit_direct: u64,
    pub admit_better: u64,
    pub reject: u64,
    /// Mean discriminator loss over the epoch; NaN when not trained.
    #[serde(with = "nan_as_null")]
    pub disc_loss: f64,
    pub delta_gail: f64,
    pub wall_clock: f64,
    pub expert_size: usize,
    /// Mean `d(g_init, g_d)` over the expert buffer; NaN without one.
    #[serde(with = "nan_as_null")]
    pub expert_goal_distance: f64,
    #[serde(with = "nan_as_null")]
    pub mean_critic_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// An episode finished collection with this global index.
    Collected { cycle: u64, episode: u64 },
    DiscriminatorStep { cycle: u64 },
    /// A policy update whose batch drew on episodes up to `newest_episode`.
    PolicyUpdate { cycle: u64, newest_episode: u64 },
    TargetUpdate { cycle: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub success: bool,
    pub episode_return: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: Vec<EpisodeRecord>,
}

/// Roll out `episodes` noise-free episodes. Success means the goal is
/// achieved at the final timestep.
pub fn run_eval<P: Policy + ?Sized>(policy: &P, env: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    let mut instance = env.build()?;
    let spec = instance.spec().clone();
    let mut rng = crate::rng_from(seed, EVAL_STREAM);
    let mut records = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let reset = instance.reset(&mut rng);
        let goal = reset.desired_goal;
        let mut state = reset.state;
        let mut achieved = reset.achieved_goal;
        let mut ret = 0.0;
        for _ in 0..spec.horizon {
            let a = spec.clip_action(&policy.action(&state, &goal));
            let step = instance.step(&a)?;
            ret += step.reward;
            state = step.next_state;
            achieved = step.achieved_goal;
        }
        records.push(EpisodeRecord {
            success: spec.goal_space.is_success(&achieved, &goal),
            episode_return: ret,
            final_distance: spec.goal_space.dist(&achieved, &goal),
        });
    }
    let n = episodes.max(1) as f64;
    Ok(EvalReport {
        success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
        mean_return: records.iter().map(|r| r.episode_return).sum::<f64>() / n,
        episodes: records,
    })
}

/// Everything a run owns. Serializable at epoch boundaries for resuming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub seed: u64,
    spec: EnvSpec,
    pub agent: ActorCritic,
    pub discriminator: Option<Discriminator>,
    pub agent_buffer: AgentBuffer,
    pub expert_buffer: Option<ExpertBuffer>,
    demo_count: usize,
    rng: Rng,
    /// Completed training epochs.
    pub epoch: usize,
    cycle: u64,
    episodes_collected: u64,
    pub admission_totals: AdmissionStats,
    pub metrics: Vec<EpochRow>,
    pub events: Vec<Event>,
}

impl Trainer {
    /// Build a run. `demos` seed the expert buffer and are required exactly
    /// when the algorithm uses demonstrations.
    pub fn new(config: TrainConfig, seed: u64, demos: Option<Vec<Trajectory>>) -> Result<Self> {
        config.validate()?;
        let env = config.env.build()?;
        let spec = env.spec().clone();
        let mut init_rng = crate::rng_from(seed, INIT_STREAM);
        let mut agent = ActorCritic::new(&spec, config.agent_config(), &mut init_rng)?;
        let demos = match (config.algo.uses_demos(), demos) {
            (true, Some(d)) if !d.is_empty() => Some(d),
            (true, _) => {
                return Err(Error::Config(alloc::format!("algo {} needs a non-empty demonstration set", config.algo)));
            }
            (false, _) => None,
        };
        let demo_count = demos.as_ref().map_or(0, Vec::len);
        let expert_buffer = match demos {
            Some(demos) => {
                let mut buf = ExpertBuffer::new(spec.clone(), config.expert_cap_multiplier * demo_count)?;
                for mut t in demos {
                    t.source = Source::DemoSeed;
                    agent.encoder.observe(&t);
                    buf.push(t)?;
                }
                agent.encoder.recompute();
                log::info!("expert buffer initialized with {demo_count} demonstrations");
                Some(buf)
            }
            None => None,
        };
        let discriminator = if config.algo.uses_discriminator() {
            let input = agent.encoder.obs_dim() + spec.action_dim;
            log::info!("discriminator constructed");
            Some(Discriminator::new(input, config.discriminator.clone(), &mut init_rng)?)
        } else {
            None
        };
        Ok(Self {
            agent_buffer: AgentBuffer::new(spec.clone(), config.agent_buffer_episodes)?,
            rng: crate::rng_from(seed, TRAIN_STREAM),
            seed,
            spec,
            agent,
            discriminator,
            expert_buffer,
            demo_count,
            epoch: 0,
            cycle: 0,
            episodes_collected: 0,
            admission_totals: AdmissionStats::default(),
            metrics: Vec::new(),
            events: Vec::new(),
            config,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn demo_count(&self) -> usize {
        self.demo_count
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs && !self.metrics.is_empty()
    }

    /// Mean `d(g_init, g_d)` over the expert buffer.
    pub fn expert_goal_distance(&self) -> Option<f64> {
        let buf = self.expert_buffer.as_ref()?;
        if buf.is_empty() {
            return None;
        }
        let space = &self.spec.goal_space;
        let sum: f64 = buf
            .iter()
            .map(|t| {
                let gp = t.goal_pair();
                space.dist(gp.init, gp.desired)
            })
            .sum();
        Some(sum / buf.len() as f64)
    }

    pub fn delta_gail(&self) -> f64 {
        if self.discriminator.is_some() {
            self.config.gail_weight.weight(self.epoch)
        } else {
            0.0
        }
    }

    fn collect_episode(&mut self, env: &mut crate::env::AnyEnv) -> Result<Trajectory> {
        let exploration = self.agent.default_exploration();
        let reset = env.reset(&mut self.rng);
        let goal = reset.desired_goal;
        let h = self.spec.horizon;
        let mut states = Vec::with_capacity(h + 1);
        let mut achieved = Vec::with_capacity(h + 1);
        let mut actions = Vec::with_capacity(h);
        let mut rewards = Vec::with_capacity(h);
        states.push(reset.state);
        achieved.push(reset.achieved_goal);
        for _ in 0..h {
            let a = self.agent.act(states.last().unwrap(), &goal, exploration, &mut self.rng);
            let step = env.step(&a)?;
            actions.push(a);
            rewards.push(step.reward);
            states.push(step.next_state);
            achieved.push(step.achieved_goal);
        }
        let mut t = Trajectory::new(&states, &actions, &achieved, goal, rewards, Source::Agent)?;
        t.tag = self.episodes_collected;
        self.episodes_collected += 1;
        Ok(t)
    }

    /// Route a fresh trajectory to a buffer and report the decision, if
    /// one was taken.
    fn store(&mut self, mut t: Trajectory) -> Result<Option<Decision>> {
        if self.config.algo.uses_admission() {
            let expert = self.expert_buffer.as_mut().expect("admission needs an expert buffer");
            let verdict = decide_admission(&t, expert, &self.spec.goal_space, &self.config.admission)?;
            self.admission_totals.record(&verdict);
            if verdict.decision.admits() {
                t.source = Source::SelfAdmitted;
                expert.push(t)?;
            } else {
                self.agent_buffer.push(t)?;
            }
            Ok(Some(verdict.decision))
        } else {
            self.agent_buffer.push(t)?;
            Ok(None)
        }
    }

    fn demo_share(&self) -> f64 {
        let union = union_ratio(&self.agent_buffer, self.expert_buffer.as_ref());
        let Some(expert) = &self.expert_buffer else { return 0.0 };
        if self.agent_buffer.is_empty() {
            return 1.0;
        }
        if expert.is_empty() {
            return 0.0;
        }
        match self.config.demo_sampling {
            DemoSampling::Union => union,
            DemoSampling::Ratio => self.config.demo_ratio.ratio(self.epoch, self.config.epochs, union),
        }
    }

    fn policy_update(&mut self, delta: f64) -> Result<f64> {
        let share = self.demo_share();
        let samples = sample_transitions(
            &self.agent_buffer,
            self.expert_buffer.as_ref(),
            self.config.policy_batch_size,
            share,
            &mut self.rng,
        )?;
        let newest = samples.iter().map(|s| s.trajectory.tag).max().unwrap_or(0);
        let relabeled = relabel(&samples, &self.config.her, &self.spec.goal_space, &mut self.rng)?;
        let transitions: Vec<Transition> = relabeled.into_iter().map(|r| r.transition).collect();
        let (rewards, bounds) = match &mut self.discriminator {
            Some(disc) if delta > 0.0 => {
                let inputs = self.agent.encoder.encode_obs_action(&transitions);
                let d = disc.rewards(&inputs)?;
                let (dlo, dhi) = disc.reward_range();
                let r: Vec<f64> = transitions.iter().zip(&d).map(|(t, &dv)| mix_reward(t.reward, dv, delta)).collect();
                let lo = mix_reward(-1.0, dlo, delta);
                let hi = mix_reward(0.0, dhi, delta);
                (r, return_bounds(lo, hi, self.agent.config.gamma))
            }
            _ => (
                transitions.iter().map(|t| t.reward).collect(),
                return_bounds(-1.0, 0.0, self.agent.config.gamma),
            ),
        };
        let stats = self.agent.update(&UpdateBatch {
            transitions: &transitions,
            rewards: &rewards,
            target_bounds: bounds,
        })?;
        if self.config.record_events {
            self.events.push(Event::PolicyUpdate {
                cycle: self.cycle,
                newest_episode: newest,
            });
        }
        Ok(stats.critic_loss)
    }

    /// Evaluate the current policy and append a metrics row.
    fn evaluate(&mut self, admissions: AdmissionStats, disc_losses: &[f64], critic_losses: &[f64], delta: f64) -> Result<()> {
        let report = run_eval(&self.agent, &self.config.env, self.config.eval_episodes, self.seed)?;
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        self.metrics.push(EpochRow {
            epoch: self.epoch,
            seed: self.seed,
            success_rate: report.success_rate,
            mean_return: report.mean_return,
            admit_direct: admissions.admit_direct,
            admit_better: admissions.admit_better,
            reject: admissions.reject,
            disc_loss: mean(disc_losses),
            delta_gail: delta,
            wall_clock: 0.0,
            expert_size: self.expert_buffer.as_ref().map_or(0, |b| b.len()),
            expert_goal_distance: self.expert_goal_distance().unwrap_or(f64::NAN),
            mean_critic_loss: mean(critic_losses),
        });
        Ok(())
    }

    /// Evaluate the untrained policy (row 0). Idempotent.
    pub fn evaluate_initial(&mut self) -> Result<()> {
        if self.metrics.is_empty() {
            self.evaluate(AdmissionStats::default(), &[], &[], self.delta_gail())?;
        }
        Ok(())
    }

    /// Run one epoch of training followed by its evaluation row.
    pub fn train_epoch(&mut self) -> Result<&EpochRow> {
        self.evaluate_initial()?;
        let mut env = self.config.env.build()?;
        let delta = self.delta_gail();
        let mut admissions = AdmissionStats::default();
        let mut disc_losses = Vec::new();
        let mut critic_losses = Vec::new();
        for _ in 0..self.config.cycles_per_epoch {
            // Step 1: collection and storage.
            for _ in 0..self.config.episodes_per_cycle {
                let t = self.collect_episode(&mut env)?;
                self.agent.encoder.observe(&t);
                if self.config.record_events {
                    self.events.push(Event::Collected {
                        cycle: self.cycle,
                        episode: t.tag,
                    });
                }
                if let Some(d) = self.store(t)? {
                    match d {
                        Decision::AdmitDirect => admissions.admit_direct += 1,
                        Decision::AdmitBetter => admissions.admit_better += 1,
                        Decision::Reject => admissions.reject += 1,
                    }
                }
            }
            self.agent.encoder.recompute();
            // Step 2: discriminator.
            if let (Some(disc), Some(expert)) = (self.discriminator.as_mut(), self.expert_buffer.as_ref()) {
                let trace = train_discriminator(
                    disc,
                    &self.agent_buffer,
                    expert,
                    &self.agent.encoder,
                    &self.config.her,
                    self.config.disc_batches_per_cycle,
                    self.config.disc_batch_size,
                    &mut self.rng,
                )?;
                if self.config.record_events {
                    for _ in &trace {
                        self.events.push(Event::DiscriminatorStep { cycle: self.cycle });
                    }
                }
                disc_losses.extend(trace);
            }
            // Step 3: policy updates.
            for _ in 0..self.config.policy_batches_per_cycle {
                critic_losses.push(self.policy_update(delta)?);
                if self.config.target_update == TargetUpdate::PerBatch {
                    self.soft_update()?;
                }
            }
            if self.config.target_update == TargetUpdate::PerCycle {
                self.soft_update()?;
            }
            self.check_buffers()?;
            self.cycle += 1;
        }
        self.epoch += 1;
        self.evaluate(admissions, &disc_losses, &critic_losses, delta)?;
        Ok(self.metrics.last().expect("row just pushed"))
    }

    fn soft_update(&mut self) -> Result<()> {
        self.agent.soft_update()?;
        if self.config.record_events {
            self.events.push(Event::TargetUpdate { cycle: self.cycle });
        }
        Ok(())
    }

    fn check_buffers(&self) -> Result<()> {
        if let Some(e) = &self.expert_buffer {
            if e.len() > e.capacity() {
                return Err(Error::Invariant(alloc::format!(
                    "expert buffer holds {} trajectories, over its cap of {}",
                    e.len(),
                    e.capacity()
                )));
            }
        }
        Ok(())
    }

    /// Train until the configured epoch count, evaluating after each epoch.
    pub fn run(&mut self) -> Result<&[EpochRow]> {
        self.evaluate_initial()?;
        while self.epoch < self.config.epochs {
            self.train_epoch()?;
        }
        Ok(&self.metrics)
    }
}

/// First epoch at which success reaches `threshold` and stays there for
/// the following `window - 1` rows (or until the run ends).
pub fn first_sustained(rows: &[EpochRow], threshold: f64, window: usize) -> Option<usize> {
    let w = window.max(1);
    (0..rows.len()).find(|&i| rows[i..].iter().take(w).all(|r| r.success_rate >= threshold)).map(|i| rows[i].epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demogen::{generate_demos, DemoProfile};

    fn tiny(algo: Algo, env: &str) -> TrainConfig {
        TrainConfig {
            env: env.parse().unwrap(),
            algo,
            epochs: 2,
            cycles_per_epoch: 2,
            episodes_per_cycle: 3,
            policy_batches_per_cycle: 2,
            policy_batch_size: 16,
            disc_batches_per_cycle: 2,
            disc_batch_size: 16,
            eval_episodes: 5,
            record_events: true,
            ddpg: DdpgConfig {
                hidden_layers: vec![8],
                ..DdpgConfig::default()
            },
            discriminator: DiscriminatorConfig {
                hidden_layers: vec![8],
                ..DiscriminatorConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn demos(env: &str, n: usize) -> Vec<Trajectory> {
        generate_demos(&env.parse().unwrap(), &DemoProfile::optimal(), n, 0).unwrap().trajectories
    }

    #[test]
    fn presets_carry_reference_hyperparameters() {
        let p = TrainConfig::preset(Preset::Paper);
        assert_eq!(
            (p.cycles_per_epoch, p.episodes_per_cycle, p.policy_batches_per_cycle, p.policy_batch_size),
            (50, 40, 40, 5120)
        );
        assert_eq!((p.disc_batches_per_cycle, p.disc_batch_size, p.eval_episodes), (40, 512, 100));
        assert_eq!(p.ddpg.hidden_layers, vec![256; 4]);
        assert_eq!(p.expert_cap_multiplier, 20);
        let d = TrainConfig::preset(Preset::Desk);
        assert_eq!((d.policy_batch_size, d.episodes_per_cycle), (256, 16));
    }

    #[test]
    fn algo_gating() {
        let her = Trainer::new(tiny(Algo::Her, "bitflip4"), 0, None).unwrap();
        assert!(her.discriminator.is_none() && her.expert_buffer.is_none());
        assert!(Trainer::new(tiny(Algo::GoalGail, "bitflip4"), 0, None).is_err());
        let fd = Trainer::new(tiny(Algo::DdpgfdHer, "bitflip4"), 0, Some(demos("bitflip4", 3))).unwrap();
        assert!(fd.discriminator.is_none() && fd.agent.config.bc.is_some());
        let sg = Trainer::new(tiny(Algo::GoalSagail, "bitflip4"), 0, Some(demos("bitflip4", 3))).unwrap();
        assert!(sg.discriminator.is_some());
        assert_eq!(sg.expert_buffer.as_ref().unwrap().capacity(), 60);
    }

    #[test]
    fn zero_epochs_only_evaluates() {
        let mut t = Trainer::new(TrainConfig { epochs: 0, ..tiny(Algo::Her, "bitflip4") }, 1, None).unwrap();
        let rows = t.run().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].epoch, 0);
    }

    #[test]
    fn gail_never_touches_expert_buffer() {
        let mut t = Trainer::new(tiny(Algo::GoalGail, "planarrotate"), 2, Some(demos("planarrotate", 4))).unwrap();
        let before = t.expert_buffer.clone();
        t.run().unwrap();
        assert_eq!(t.expert_buffer, before);
        assert_eq!(t.metrics.len(), 3);
    }

    #[test]
    fn updates_never_see_later_episodes() {
        let mut t = Trainer::new(tiny(Algo::GoalSagail, "planarrotate"), 3, Some(demos("planarrotate", 4))).unwrap();
        t.run().unwrap();
        let mut collected_by_cycle = alloc::collections::BTreeMap::new();
        for e in &t.events {
            if let Event::Collected { cycle, episode } = e {
                collected_by_cycle.insert(*cycle, *episode);
            }
        }
        let mut phase = 0;
        let mut last_cycle = 0;
        for e in &t.events {
            let (cycle, p) = match e {
                Event::Collected { cycle, .. } => (*cycle, 0),
                Event::DiscriminatorStep { cycle } => (*cycle, 1),
                Event::PolicyUpdate { cycle, newest_episode } => {
                    assert!(*newest_episode <= collected_by_cycle[cycle]);
                    (*cycle, 2)
                }
                Event::TargetUpdate { cycle } => (*cycle, 3),
            };
            if cycle != last_cycle {
                assert_eq!(cycle, last_cycle + 1);
                phase = 0;
                last_cycle = cycle;
            }
            assert!(p >= phase, "event order regressed in cycle {cycle}");
            phase = p;
        }
    }

    #[test]
    fn full_run_is_deterministic() {
        let run = || {
            let mut t = Trainer::new(tiny(Algo::GoalSagail, "pointpush2d"), 4, Some(demos("pointpush2d", 3))).unwrap();
            // Debug formatting compares NaN cells as equal.
            alloc::format!("{:?}", t.run().unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sustained_threshold() {
        let row = |epoch, s| EpochRow {
            epoch,
            seed: 0,
            success_rate: s,
            mean_return: 0.0,
            admit_direct: 0,
            admit_better: 0,
            reject: 0,
            disc_loss: f64::NAN,
            delta_gail: 0.0,
            wall_clock: 0.0,
            expert_size: 0,
            expert_goal_distance: f64::NAN,
            mean_critic_loss: f64::NAN,
        };
        let rows: Vec<_> = [0.1, 0.7, 0.5, 0.65, 0.7, 0.9].iter().enumerate().map(|(i, &s)| row(i, s)).collect();
        assert_eq!(first_sustained(&rows, 0.6, 3), Some(3));
        assert_eq!(first_sustained(&rows, 0.6, 1), Some(1));
        assert_eq!(first_sustained(&rows, 0.95, 2), None);
    }
}
