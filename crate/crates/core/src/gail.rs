//! Goal-conditioned discriminator D(s, g, a), its training step, and the
//! mixing of discriminator output into the environment reward.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::InputEncoder;
use crate::her::{relabel, RelabelConfig};
use crate::math;
use crate::nn::{Activation, AdamConfig, DenseNet, Matrix, OutputActivation, Trainable};
use crate::replay::{sample_store, AgentBuffer, ExpertBuffer, TrajectoryStore, Transition};
use crate::{Error, Result, Rng};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-8;

/// How the discriminator output becomes a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Raw,
    Sigmoid,
    LogSigmoid,
}

/// Objective the discriminator is trained on. Both drive D toward 1 on
/// expert data and toward 0 on agent data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `-mean log D(expert) - mean log(1 - D(agent))`, evaluated on logits.
    Logistic,
    /// `mean log D(agent) + mean log(1 - D(expert))` with clamped probabilities.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden_layers: Vec<usize>,
    pub adam: AdamConfig,
    pub loss: LossForm,
    pub output_mode: OutputMode,
    /// Rewards are clipped to `[-reward_clip, reward_clip]` before mixing.
    pub reward_clip: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![256; 4],
            adam: AdamConfig::default(),
            loss: LossForm::Logistic,
            output_mode: OutputMode::Raw,
            reward_clip: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anneal {
    None,
    LinearToZero,
}

/// Weight of the discriminator reward as a function of the epoch index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GailWeightSchedule {
    pub initial: f64,
    pub anneal: Anneal,
    /// Epochs over which the weight falls to zero.
    pub anneal_epochs: usize,
}

impl Default for GailWeightSchedule {
    fn default() -> Self {
        Self {
            initial: 0.5,
            anneal: Anneal::LinearToZero,
            anneal_epochs: 50,
        }
    }
}

impl GailWeightSchedule {
    pub fn weight(&self, epoch: usize) -> f64 {
        let w = match self.anneal {
            Anneal::None => self.initial,
            Anneal::LinearToZero => {
                if self.anneal_epochs == 0 {
                    0.0
                } else {
                    let frac = 1.0 - epoch as f64 / self.anneal_epochs as f64;
                    self.initial * frac.max(0.0)
                }
            }
        };
        w.clamp(0.0, 1.0)
    }
}

/// `(1 - delta) * r_env + delta * d`.
pub fn mix_reward(r_env: f64, d_value: f64, delta: f64) -> f64 {
    (1.0 - delta) * r_env + delta * d_value
}

fn clamp_prob(p: f64) -> (f64, bool) {
    let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (c, c == p)
}

/// `mean log D(agent) + mean log(1 - D(expert))` on probabilities.
pub fn loss_from_probs(agent: &[f64], expert: &[f64]) -> Result<f64> {
    if agent.is_empty() || expert.is_empty() {
        return Err(Error::EmptyBuffer(if agent.is_empty() { "agent" } else { "expert" }));
    }
    let a: f64 = agent.iter().map(|&p| math::ln(clamp_prob(p).0)).sum::<f64>() / agent.len() as f64;
    let e: f64 = expert.iter().map(|&p| math::ln(1.0 - clamp_prob(p).0)).sum::<f64>() / expert.len() as f64;
    Ok(a + e)
}

/// Discriminator loss on raw outputs, read through a sigmoid.
pub fn discriminator_loss(agent_logits: &[f64], expert_logits: &[f64]) -> Result<f64> {
    let a: Vec<f64> = agent_logits.iter().map(|&z| math::sigmoid(z)).collect();
    let e: Vec<f64> = expert_logits.iter().map(|&z| math::sigmoid(z)).collect();
    loss_from_probs(&a, &e)
}

/// Loss and its derivative with respect to every logit. Clamped
/// probabilities contribute zero gradient.
pub fn loss_and_logit_grads(agent_logits: &[f64], expert_logits: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let loss = discriminator_loss(agent_logits, expert_logits)?;
    let na = agent_logits.len() as f64;
    let ne = expert_logits.len() as f64;
    let ga = agent_logits
        .iter()
        .map(|&z| {
            let s = math::sigmoid(z);
            if clamp_prob(s).1 {
                (1.0 - s) / na
            } else {
                0.0
            }
        })
        .collect();
    let ge = expert_logits
        .iter()
        .map(|&z| {
            let s = math::sigmoid(z);
            if clamp_prob(s).1 {
                -s / ne
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, ga, ge))
}

/// Cross-entropy with expert label 1 and its logit gradients.
pub fn logistic_loss_and_logit_grads(agent_logits: &[f64], expert_logits: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if agent_logits.is_empty() || expert_logits.is_empty() {
        return Err(Error::EmptyBuffer(if agent_logits.is_empty() { "agent" } else { "expert" }));
    }
    let na = agent_logits.len() as f64;
    let ne = expert_logits.len() as f64;
    let loss = agent_logits.iter().map(|&z| math::softplus(z)).sum::<f64>() / na
        + expert_logits.iter().map(|&z| math::softplus(-z)).sum::<f64>() / ne;
    let ga = agent_logits.iter().map(|&z| math::sigmoid(z) / na).collect();
    let ge = expert_logits.iter().map(|&z| (math::sigmoid(z) - 1.0) / ne).collect();
    Ok((loss, ga, ge))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub model: Trainable,
    /// Number of reward values that hit the clip so far.
    pub clipped_rewards: u64,
}

impl Discriminator {
    pub fn new(input_dim: usize, config: DiscriminatorConfig, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&config.hidden_layers);
        sizes.push(1);
        let net = DenseNet::new(&sizes, Activation::Relu, OutputActivation::Identity, rng)?;
        Ok(Self {
            model: Trainable::new(net, config.adam),
            config,
            clipped_rewards: 0,
        })
    }

    pub fn logits(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        let out = self.model.net.forward(inputs)?;
        let v = out.into_vec();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("discriminator output"));
        }
        Ok(v)
    }

    /// Interval containing every value [`Discriminator::rewards`] can return.
    pub fn reward_range(&self) -> (f64, f64) {
        let c = self.config.reward_clip;
        match self.config.output_mode {
            OutputMode::Raw => (-c, c),
            OutputMode::Sigmoid => (0.0, 1.0),
            OutputMode::LogSigmoid => (-c, 0.0),
        }
    }

    /// Rewards for RL, mapped by the output mode and clipped.
    pub fn rewards(&mut self, inputs: &Matrix) -> Result<Vec<f64>> {
        let (lo, hi) = self.reward_range();
        let mut out = self.logits(inputs)?;
        for v in out.iter_mut() {
            let r = match self.config.output_mode {
                OutputMode::Raw => *v,
                OutputMode::Sigmoid => math::sigmoid(*v),
                OutputMode::LogSigmoid => math::ln(math::sigmoid(*v).max(PROB_CLAMP)),
            };
            let c = r.clamp(lo, hi);
            if c != r {
                self.clipped_rewards += 1;
            }
            *v = c;
        }
        Ok(out)
    }

    /// One gradient step on encoded agent and expert inputs; returns the loss.
    pub fn train_step(&mut self, agent_inputs: &Matrix, expert_inputs: &Matrix) -> Result<f64> {
        let (loss, grads) = self.loss_and_grad(agent_inputs, expert_inputs)?;
        self.model.apply(&grads)?;
        Ok(loss)
    }

    pub fn loss_and_grad(&self, agent_inputs: &Matrix, expert_inputs: &Matrix) -> Result<(f64, Vec<f64>)> {
        let ta = self.model.net.forward_tape(agent_inputs)?;
        let te = self.model.net.forward_tape(expert_inputs)?;
        let (loss, ga, ge) = match self.config.loss {
            LossForm::Logistic => logistic_loss_and_logit_grads(ta.output().data(), te.output().data())?,
            LossForm::Literal => loss_and_logit_grads(ta.output().data(), te.output().data())?,
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite("discriminator loss"));
        }
        let mut grads = self.model.net.backward_tape(&ta, &Matrix::from_vec(ga.len(), 1, ga)?)?.params;
        let ge = self.model.net.backward_tape(&te, &Matrix::from_vec(ge.len(), 1, ge)?)?.params;
        for (g, e) in grads.iter_mut().zip(ge) {
            *g += e;
        }
        Ok((loss, grads))
    }
}

/// `n_batches` discriminator steps, each on `batch_size` hindsight-relabeled
/// transitions from each buffer. Returns the per-step losses; an empty
/// buffer yields an empty trace and leaves the discriminator untouched.
#[allow(clippy::too_many_arguments)]
pub fn train_discriminator(
    disc: &mut Discriminator,
    agent: &AgentBuffer,
    expert: &ExpertBuffer,
    encoder: &InputEncoder,
    her: &RelabelConfig,
    n_batches: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if agent.is_empty() || expert.is_empty() {
        log::warn!(
            "skipping discriminator training: agent buffer {} trajectories, expert buffer {}",
            agent.len(),
            expert.len()
        );
        return Ok(Vec::new());
    }
    let space = agent.spec().goal_space;
    let mut trace = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let e = sample_store(expert, batch_size, true, rng)?;
        let a = sample_store(agent, batch_size, false, rng)?;
        let e: Vec<Transition> = relabel(&e, her, &space, rng)?.into_iter().map(|r| r.transition).collect();
        let a: Vec<Transition> = relabel(&a, her, &space, rng)?.into_iter().map(|r| r.transition).collect();
        let loss = disc.train_step(&encoder.encode_obs_action(&a), &encoder.encode_obs_action(&e))?;
        trace.push(loss);
    }
    Ok(trace)
}
