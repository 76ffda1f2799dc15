//! Hindsight relabeling with the `future` strategy.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::GoalSpace;
use crate::replay::{Sample, Transition};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelabelConfig {
    /// Relabeled fraction is `replay_k / (replay_k + 1)`.
    pub replay_k: f64,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        Self { replay_k: 4.0 }
    }
}

impl RelabelConfig {
    pub fn relabel_probability(&self) -> f64 {
        self.replay_k / (self.replay_k + 1.0)
    }
}

/// A transition after relabeling, with the provenance of its goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Relabeled {
    pub transition: Transition,
    /// Step of the source episode whose achieved goal replaced `g_d`.
    pub substitute_step: Option<usize>,
    /// Step of the transition within its episode.
    pub step: usize,
}

/// For each sample, with probability `replay_k / (replay_k + 1)` replace
/// the desired goal by the achieved goal of a uniformly chosen later step
/// `t' in (t, T]` of the same episode and recompute the sparse reward.
/// Only the desired goal and the reward ever change.
pub fn relabel(samples: &[Sample<'_>], config: &RelabelConfig, space: &GoalSpace, rng: &mut Rng) -> Result<Vec<Relabeled>> {
    if !(config.replay_k >= 0.0) || !config.replay_k.is_finite() {
        return Err(Error::Config(alloc::format!("replay_k must be >= 0, got {}", config.replay_k)));
    }
    let p = config.relabel_probability();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let mut transition = s.transition();
        let horizon = s.trajectory.horizon();
        let mut substitute_step = None;
        if p > 0.0 && rng.random::<f64>() < p && s.t < horizon {
            let future = rng.random_range(s.t + 1..=horizon);
            let goal = s.trajectory.achieved_goal(future);
            transition.desired_goal.clear();
            transition.desired_goal.extend_from_slice(goal);
            transition.reward = space.reward(&transition.next_achieved_goal, goal);
            substitute_step = Some(future);
        }
        out.push(Relabeled {
            transition,
            substitute_step,
            step: s.t,
        });
    }
    Ok(out)
}
