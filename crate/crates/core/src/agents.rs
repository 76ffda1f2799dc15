//! Goal-conditioned DDPG with target networks, shared by every algorithm
//! variant. The optional behaviour-cloning term with a Q-filter turns it
//! into the DDPGfD baseline.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, GoalSpace};
use crate::nn::{Activation, AdamConfig, DenseNet, Matrix, Normalizer, OutputActivation, Trainable};
use crate::replay::{Trajectory, Transition};
use crate::{Error, Result, Rng};

/// Behaviour cloning on expert-flagged samples, applied only where the
/// critic rates the demonstrated action at least as high as the actor's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub weight: f64,
    pub q_filter: bool,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            weight: 1.0,
            q_filter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub hidden_layers: Vec<usize>,
    pub gamma: f64,
    /// Target update rate.
    pub polyak: f64,
    /// Gaussian exploration noise as a fraction of the half action range.
    pub noise_scale: f64,
    /// Probability of replacing the action with a uniform random one.
    pub random_eps: f64,
    /// Coefficient of the squared pre-tanh actor output penalty.
    pub action_l2: f64,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
    /// Scale applied to the final actor layer at initialization.
    pub actor_output_init_scale: f64,
    pub normalize_inputs: bool,
    /// Normalized inputs are clipped to this many standard deviations.
    pub normalizer_clip: f64,
    pub bc: Option<BcConfig>,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![256; 4],
            gamma: 0.98,
            polyak: 0.05,
            noise_scale: 0.2,
            random_eps: 0.3,
            action_l2: 1.0,
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
            actor_output_init_scale: 1e-2,
            normalize_inputs: true,
            normalizer_clip: 5.0,
            bc: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    Off,
    /// Gaussian noise with standard deviation `sigma` (fraction of the half
    /// action range), replaced by a uniform action with probability `random_eps`.
    Gaussian { sigma: f64, random_eps: f64 },
}

/// Anything that maps (state, desired goal) to an action.
pub trait Policy {
    fn action(&self, state: &[f64], goal: &[f64]) -> Vec<f64>;
}

/// Normalizes states and goal features into network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoder {
    goal_space: GoalSpace,
    state_dim: usize,
    pub state_norm: Normalizer,
    pub goal_norm: Normalizer,
    action_center: Vec<f64>,
    action_half: Vec<f64>,
}

impl InputEncoder {
    pub fn new(spec: &EnvSpec, normalize: bool, clip: f64) -> Self {
        let gf = spec.goal_space.feature_dim();
        Self {
            goal_space: spec.goal_space,
            state_dim: spec.state_dim,
            state_norm: Normalizer::new(spec.state_dim, clip, normalize),
            goal_norm: Normalizer::new(gf, clip, normalize),
            action_center: spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| 0.5 * (l + h)).collect(),
            action_half: spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| 0.5 * (h - l)).collect(),
        }
    }

    /// Width of the encoded (state, goal) input.
    pub fn obs_dim(&self) -> usize {
        self.state_dim + self.goal_space.feature_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_center.len()
    }

    pub fn encode_into(&self, state: &[f64], goal: &[f64], out: &mut [f64]) {
        let (s_out, g_out) = out.split_at_mut(self.state_dim);
        self.state_norm.normalize_into(state, s_out);
        let mut feat = [0.0f64; 16];
        let gf = self.goal_space.feature_dim();
        if gf <= feat.len() {
            self.goal_space.features_into(goal, &mut feat[..gf]);
            self.goal_norm.normalize_into(&feat[..gf], &mut g_out[..gf]);
        } else {
            let mut v = vec![0.0; gf];
            self.goal_space.features_into(goal, &mut v);
            self.goal_norm.normalize_into(&v, &mut g_out[..gf]);
        }
    }

    /// Map an environment action into `[-1, 1]` per component.
    pub fn normalize_action(&self, action: &[f64], out: &mut [f64]) {
        for i in 0..action.len() {
            out[i] = (action[i] - self.action_center[i]) / self.action_half[i];
        }
    }

    pub fn denormalize_action(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.action_center.iter().zip(&self.action_half))
            .map(|(u, (c, h))| c + h * u)
            .collect()
    }

    /// Rows of `state ⊕ goal` for every transition, with the goal taken
    /// from `desired_goal` (already relabeled) and the state from `next`
    /// or the current step.
    pub fn encode_obs(&self, transitions: &[Transition], next: bool) -> Matrix {
        let d = self.obs_dim();
        let mut m = Matrix::zeros(transitions.len(), d);
        for (i, tr) in transitions.iter().enumerate() {
            let s = if next { &tr.next_state } else { &tr.state };
            self.encode_into(s, &tr.desired_goal, m.row_mut(i));
        }
        m
    }

    /// Rows of `state ⊕ goal ⊕ action` with the action in unit range.
    pub fn encode_obs_action(&self, transitions: &[Transition]) -> Matrix {
        let d = self.obs_dim();
        let a = self.action_dim();
        let mut m = Matrix::zeros(transitions.len(), d + a);
        for (i, tr) in transitions.iter().enumerate() {
            let row = m.row_mut(i);
            self.encode_into(&tr.state, &tr.desired_goal, &mut row[..d]);
            self.normalize_action(&tr.action, &mut row[d..]);
        }
        m
    }

    /// Accumulate normalizer statistics from an episode: every state, and
    /// the features of both the desired goal and the achieved goals (the
    /// latter stand in for hindsight goals).
    pub fn observe(&mut self, traj: &Trajectory) {
        let gf = self.goal_space.feature_dim();
        let mut feat = vec![0.0; gf];
        self.goal_space.features_into(traj.desired_goal(), &mut feat);
        for t in 0..=traj.horizon() {
            self.state_norm.observe(traj.state(t));
            self.goal_norm.observe(&feat);
        }
        for t in 0..=traj.horizon() {
            self.goal_space.features_into(traj.achieved_goal(t), &mut feat);
            self.goal_norm.observe(&feat);
        }
    }

    pub fn recompute(&mut self) {
        self.state_norm.recompute();
        self.goal_norm.recompute();
    }
}

/// Concatenate two row-aligned matrices.
pub(crate) fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut m = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for i in 0..a.rows() {
        let row = m.row_mut(i);
        row[..a.cols()].copy_from_slice(a.row(i));
        row[a.cols()..].copy_from_slice(b.row(i));
    }
    m
}

/// One policy-update batch. `transitions` carry their (possibly relabeled)
/// goals; `rewards` are the final, possibly mixed, rewards.
#[derive(Debug, Clone, Copy)]
pub struct UpdateBatch<'a> {
    pub transitions: &'a [Transition],
    pub rewards: &'a [f64],
    /// Bounds every critic target is clipped to.
    pub target_bounds: (f64, f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
    pub mean_target: f64,
    /// Fraction of targets that hit a clip bound.
    pub clipped_fraction: f64,
    /// Expert samples that passed the Q-filter, as a fraction of expert samples.
    pub bc_fraction: f64,
}

/// Feasible discounted-return range for per-step rewards in `[r_min, r_max]`.
pub fn return_bounds(r_min: f64, r_max: f64, gamma: f64) -> (f64, f64) {
    (r_min.min(0.0) / (1.0 - gamma), r_max.max(0.0) / (1.0 - gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub config: DdpgConfig,
    pub spec: EnvSpec,
    pub encoder: InputEncoder,
    pub actor: Trainable,
    pub critic: Trainable,
    pub target_actor: DenseNet,
    pub target_critic: DenseNet,
}

impl ActorCritic {
    pub fn new(spec: &EnvSpec, config: DdpgConfig, rng: &mut Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&config.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1)".into()));
        }
        if !(config.polyak >= 0.0 && config.polyak <= 1.0) {
            return Err(Error::Config("polyak rate must lie in [0, 1]".into()));
        }
        let encoder = InputEncoder::new(spec, config.normalize_inputs, config.normalizer_clip);
        let obs = encoder.obs_dim();
        let act = spec.action_dim;
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend_from_slice(&config.hidden_layers);
            v.push(output);
            v
        };
        let mut actor = DenseNet::new(&sizes(obs, act), Activation::Relu, OutputActivation::Tanh, rng)?;
        actor.scale_output_layer(config.actor_output_init_scale);
        let critic = DenseNet::new(&sizes(obs + act, 1), Activation::Relu, OutputActivation::Identity, rng)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor: Trainable::new(actor, config.actor_adam),
            critic: Trainable::new(critic, config.critic_adam),
            encoder,
            spec: spec.clone(),
            config,
        })
    }

    /// Action in environment units, with optional exploration noise.
    pub fn act(&self, state: &[f64], goal: &[f64], exploration: Exploration, rng: &mut Rng) -> Vec<f64> {
        let mut obs = Matrix::zeros(1, self.encoder.obs_dim());
        self.encoder.encode_into(state, goal, obs.row_mut(0));
        let out = self.actor.net.forward(&obs).expect("encoder width matches actor input");
        let mut unit = out.into_vec();
        if let Exploration::Gaussian { sigma, random_eps } = exploration {
            for u in unit.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *u = (*u + sigma * n).clamp(-1.0, 1.0);
            }
            if rng.random::<f64>() < random_eps {
                for u in unit.iter_mut() {
                    *u = rng.random_range(-1.0..=1.0);
                }
            }
        }
        self.encoder.denormalize_action(&unit)
    }

    pub fn default_exploration(&self) -> Exploration {
        Exploration::Gaussian {
            sigma: self.config.noise_scale,
            random_eps: self.config.random_eps,
        }
    }

    /// Clipped one-step targets `r + gamma * Q'(s', pi'(s'))`.
    pub fn critic_targets(&self, batch: &UpdateBatch<'_>) -> Result<(Vec<f64>, usize)> {
        let next_obs = self.encoder.encode_obs(batch.transitions, true);
        let next_act = self.target_actor.forward(&next_obs)?;
        let q_next = self.target_critic.forward(&hstack(&next_obs, &next_act))?;
        let (lo, hi) = batch.target_bounds;
        let mut clipped = 0;
        let y = batch
            .rewards
            .iter()
            .zip(q_next.data())
            .map(|(&r, &q)| {
                let raw = r + self.config.gamma * q;
                let c = raw.clamp(lo, hi);
                if c != raw {
                    clipped += 1;
                }
                c
            })
            .collect();
        Ok((y, clipped))
    }

    /// Mean squared Bellman error and its parameter gradient for fixed targets.
    pub fn critic_loss_and_grad(&self, inputs: &Matrix, targets: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let tape = self.critic.net.forward_tape(inputs)?;
        let q = tape.output().data().to_vec();
        let n = q.len() as f64;
        let mut up = Matrix::zeros(q.len(), 1);
        let mut loss = 0.0;
        for i in 0..q.len() {
            let e = q[i] - targets[i];
            loss += e * e / n;
            up.set(i, 0, 2.0 * e / n);
        }
        let g = self.critic.net.backward_tape(&tape, &up)?;
        Ok((loss, g.params, q))
    }

    /// Actor loss `-mean Q(s, g, pi(s, g)) + l2 * mean(z^2)` plus the
    /// filtered behaviour-cloning term, and its parameter gradient.
    /// `demo_q` holds the critic's value of each batch action.
    pub fn actor_loss_and_grad(&self, transitions: &[Transition], obs: &Matrix, demo_q: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let b = transitions.len();
        let a_dim = self.encoder.action_dim();
        let tape = self.actor.net.forward_tape(obs)?;
        let pi = tape.output().clone();
        let critic_in = hstack(obs, &pi);
        let ctape = self.critic.net.forward_tape(&critic_in)?;
        let q_pi = ctape.output().data().to_vec();
        let n = b as f64;
        let mut loss = -q_pi.iter().sum::<f64>() / n;
        let up_q = Matrix::from_vec(b, 1, vec![-1.0 / n; b])?;
        let cg = self.critic.net.backward_tape(&ctape, &up_q)?;
        let mut upstream = cg.input.columns(obs.cols(), obs.cols() + a_dim);

        let z = tape.pre_activations.last().expect("actor has layers");
        let mut pre = Matrix::zeros(b, a_dim);
        let denom = (b * a_dim) as f64;
        for (p, &zv) in pre.data_mut().iter_mut().zip(z.data()) {
            loss += self.config.action_l2 * zv * zv / denom;
            *p = self.config.action_l2 * 2.0 * zv / denom;
        }

        let mut bc_fraction = 0.0;
        if let Some(bc) = self.config.bc {
            let experts: Vec<usize> = (0..b).filter(|&i| transitions[i].is_expert).collect();
            if !experts.is_empty() {
                let ne = experts.len() as f64;
                let mut used = 0usize;
                let mut demo = vec![0.0; a_dim];
                for &i in &experts {
                    if bc.q_filter && demo_q[i] < q_pi[i] {
                        continue;
                    }
                    used += 1;
                    self.encoder.normalize_action(&transitions[i].action, &mut demo);
                    for j in 0..a_dim {
                        let d = pi.get(i, j) - demo[j];
                        loss += bc.weight * d * d / ne;
                        let g = upstream.get(i, j) + bc.weight * 2.0 * d / ne;
                        upstream.set(i, j, g);
                    }
                }
                bc_fraction = used as f64 / ne;
            }
        }
        let g = self.actor.net.backward_tape_with_pre(&tape, &upstream, Some(&pre))?;
        Ok((loss, g.params, bc_fraction))
    }

    /// One gradient step on the critic and one on the actor.
    pub fn update(&mut self, batch: &UpdateBatch<'_>) -> Result<UpdateStats> {
        let b = batch.transitions.len();
        if b == 0 || batch.rewards.len() != b {
            return Err(Error::dim("update batch rewards", b, batch.rewards.len()));
        }
        let (targets, clipped) = self.critic_targets(batch)?;
        let inputs = self.encoder.encode_obs_action(batch.transitions);
        let (critic_loss, critic_grad, q) = self.critic_loss_and_grad(&inputs, &targets)?;
        if !critic_loss.is_finite() {
            return Err(Error::NonFinite("critic loss"));
        }
        let obs = inputs.columns(0, self.encoder.obs_dim());
        let (actor_loss, actor_grad, bc_fraction) = self.actor_loss_and_grad(batch.transitions, &obs, &q)?;
        if !actor_loss.is_finite() {
            return Err(Error::NonFinite("actor loss"));
        }
        self.critic.apply(&critic_grad)?;
        self.actor.apply(&actor_grad)?;
        let n = b as f64;
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            mean_q: q.iter().sum::<f64>() / n,
            mean_target: targets.iter().sum::<f64>() / n,
            clipped_fraction: clipped as f64 / n,
            bc_fraction,
        })
    }

    /// Move both target networks toward the online networks.
    pub fn soft_update(&mut self) -> Result<()> {
        let tau = self.config.polyak;
        self.target_actor.polyak_from(&self.actor.net, tau)?;
        self.target_critic.polyak_from(&self.critic.net, tau)
    }
}

impl Policy for ActorCritic {
    fn action(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        let mut obs = Matrix::zeros(1, self.encoder.obs_dim());
        self.encoder.encode_into(state, goal, obs.row_mut(0));
        let out = self.actor.net.forward(&obs).expect("encoder width matches actor input");
        self.encoder.denormalize_action(out.data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, MultiGoalEnv};
    use crate::rng_from;

    fn small(spec: &EnvSpec, seed: u64) -> ActorCritic {
        let cfg = DdpgConfig {
            hidden_layers: vec![16, 16],
            ..DdpgConfig::default()
        };
        ActorCritic::new(spec, cfg, &mut rng_from(seed, 0)).unwrap()
    }

    fn spec(id: &str) -> EnvSpec {
        id.parse::<EnvConfig>().unwrap().build().unwrap().spec().clone()
    }

    #[test]
    fn act_is_deterministic_without_noise() {
        let ac = small(&spec("pointpush2d"), 0);
        let s = [0.1, 0.2, -0.3, 0.0];
        let g = [0.4, 0.4];
        let mut r1 = rng_from(1, 0);
        let mut r2 = rng_from(2, 0);
        let a = ac.act(&s, &g, Exploration::Off, &mut r1);
        assert_eq!(a, ac.act(&s, &g, Exploration::Off, &mut r2));
        let z = ac.act(&s, &g, Exploration::Gaussian { sigma: 0.0, random_eps: 0.0 }, &mut r1);
        assert_eq!(a, z);
        assert_eq!(a, ac.action(&s, &g));
    }

    #[test]
    fn myopic_targets_equal_rewards() {
        let sp = spec("planarrotate");
        let mut ac = small(&sp, 3);
        ac.config.gamma = 0.0;
        let tr = Transition {
            state: vec![0.0, 1.0, 0.0],
            action: vec![0.5],
            next_state: vec![0.1, 0.99, 0.1],
            achieved_goal: vec![0.0],
            next_achieved_goal: vec![0.1],
            desired_goal: vec![1.0],
            reward: -1.0,
            is_expert: false,
        };
        let trs = vec![tr.clone(), tr];
        let rewards = [-1.0, -0.25];
        let batch = UpdateBatch {
            transitions: &trs,
            rewards: &rewards,
            target_bounds: (-50.0, 0.0),
        };
        let (y, _) = ac.critic_targets(&batch).unwrap();
        assert_eq!(y, vec![-1.0, -0.25]);
    }

    #[test]
    fn targets_respect_bounds() {
        let sp = spec("planarrotate");
        let mut ac = small(&sp, 4);
        // Push the target critic output far out of range.
        let last = ac.target_critic.params().len() - 1;
        ac.target_critic.params_mut()[last] = 1e4;
        let tr = Transition {
            state: vec![0.0, 1.0, 0.0],
            action: vec![0.5],
            next_state: vec![0.0, 1.0, 0.0],
            achieved_goal: vec![0.0],
            next_achieved_goal: vec![0.0],
            desired_goal: vec![1.0],
            reward: -1.0,
            is_expert: false,
        };
        let trs = vec![tr];
        let batch = UpdateBatch {
            transitions: &trs,
            rewards: &[-1.0],
            target_bounds: return_bounds(-1.0, 0.0, 0.98),
        };
        let (y, clipped) = ac.critic_targets(&batch).unwrap();
        assert_eq!(y, vec![0.0]);
        assert_eq!(clipped, 1);
        let (lo, hi) = return_bounds(-1.0, 0.0, 0.98);
        assert!((lo + 50.0).abs() < 1e-9 && hi == 0.0);
    }

    #[test]
    fn polyak_rates() {
        let mut ac = small(&spec("bitflip4"), 5);
        ac.actor.net.params_mut()[0] += 1.0;
        ac.config.polyak = 0.0;
        let before = ac.target_actor.clone();
        ac.soft_update().unwrap();
        assert_eq!(ac.target_actor, before);
        ac.config.polyak = 1.0;
        ac.soft_update().unwrap();
        assert_eq!(ac.target_actor, ac.actor.net);
    }

    #[test]
    fn fully_random_exploration_stays_in_bounds() {
        let sp = spec("pointpush2d");
        let ac = small(&sp, 6);
        let mut rng = rng_from(7, 0);
        for _ in 0..1000 {
            let a = ac.act(&[0.0; 4], &[0.1, 0.1], Exploration::Gaussian { sigma: 0.2, random_eps: 1.0 }, &mut rng);
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn repeated_updates_are_bitwise_reproducible() {
        let sp = spec("bitflip4");
        let mut env = "bitflip4".parse::<EnvConfig>().unwrap().build().unwrap();
        let r = env.reset(&mut rng_from(0, 0));
        let step = env.step(&[1.0, -1.0, -1.0, -1.0, -1.0]).unwrap();
        let tr = Transition {
            state: r.state.clone(),
            action: vec![1.0, -1.0, -1.0, -1.0, -1.0],
            next_state: step.next_state.clone(),
            achieved_goal: r.achieved_goal.clone(),
            next_achieved_goal: step.achieved_goal.clone(),
            desired_goal: r.desired_goal.clone(),
            reward: step.reward,
            is_expert: false,
        };
        let trs = vec![tr; 4];
        let rewards = vec![step.reward; 4];
        let batch = UpdateBatch {
            transitions: &trs,
            rewards: &rewards,
            target_bounds: return_bounds(-1.0, 0.0, 0.98),
        };
        let mut a = small(&sp, 8);
        let mut b = small(&sp, 8);
        for _ in 0..3 {
            a.update(&batch).unwrap();
            b.update(&batch).unwrap();
        }
        assert_eq!(a, b);
    }
}
