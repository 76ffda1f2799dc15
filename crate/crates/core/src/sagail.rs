//! Goal-based selection of self-generated trajectories for the expert
//! buffer.
//!
//! A trajectory's difficulty is summarized by its goal pair (initial
//! achieved goal, desired goal). A successful self-generated trajectory is
//! compared against the expert trajectory with the closest goal pair: if
//! even the closest one is further than `c_comb` away the trajectory covers
//! new ground and is admitted directly; otherwise it is admitted only when
//! its episode return is strictly higher than the matched expert's.

use serde::{Deserialize, Serialize};

use crate::env::GoalSpace;
use crate::replay::{ExpertBuffer, GoalPair, Trajectory, TrajectoryStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmissionConfig {
    pub c_comb: f64,
    /// Only trajectories that reach their goal at some step are candidates.
    pub require_success: bool,
}

impl Default for AdmissionConfig {
    fn default() -> Self {
        Self {
            c_comb: 0.25,
            require_success: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AdmitDirect,
    AdmitBetter,
    Reject,
}

impl Decision {
    pub fn admits(self) -> bool {
        !matches!(self, Decision::Reject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionVerdict {
    pub decision: Decision,
    /// Insertion id of the closest expert trajectory, if the buffer was searched.
    pub matched_expert: Option<u64>,
    /// Combined distance to the closest expert; infinite for an empty buffer.
    pub d_min: f64,
    /// False when the trajectory was rejected before any comparison
    /// because it never reached its goal.
    pub candidate: bool,
}

/// Sum of the initial-goal distance and the desired-goal distance.
pub fn combined_distance(a: &GoalPair<'_>, b: &GoalPair<'_>, space: &GoalSpace) -> Result<f64> {
    Ok(space.distance(a.init, b.init)? + space.distance(a.desired, b.desired)?)
}

/// Closest expert trajectory by combined distance, as
/// `(buffer index, insertion id, distance)`. Ties go to the oldest entry.
pub fn find_most_similar(pair: &GoalPair<'_>, expert: &ExpertBuffer, space: &GoalSpace) -> Result<Option<(usize, u64, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..expert.len() {
        let d = combined_distance(pair, &expert.get(i).goal_pair(), space)?;
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    Ok(best.map(|(i, d)| (i, expert.id_at(i), d)))
}

pub fn decide_admission(
    trajectory: &Trajectory,
    expert: &ExpertBuffer,
    space: &GoalSpace,
    config: &AdmissionConfig,
) -> Result<AdmissionVerdict> {
    if !(config.c_comb > 0.0) {
        return Err(Error::Config("c_comb must be positive".into()));
    }
    let found = find_most_similar(&trajectory.goal_pair(), expert, space)?;
    let (matched_expert, d_min) = match found {
        Some((_, id, d)) => (Some(id), d),
        None => (None, f64::INFINITY),
    };
    if config.require_success && !trajectory.is_successful() {
        return Ok(AdmissionVerdict {
            decision: Decision::Reject,
            matched_expert,
            d_min,
            candidate: false,
        });
    }
    let decision = match found {
        None => Decision::AdmitDirect,
        Some(_) if d_min > config.c_comb => Decision::AdmitDirect,
        Some((idx, _, _)) => {
            if trajectory.episode_return() > expert.get(idx).episode_return() {
                Decision::AdmitBetter
            } else {
                Decision::Reject
            }
        }
    };
    Ok(AdmissionVerdict {
        decision,
        matched_expert,
        d_min,
        candidate: true,
    })
}

/// Running tallies of admission decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissionStats {
    pub admit_direct: u64,
    pub admit_better: u64,
    pub reject: u64,
    d_min_sum: f64,
    d_min_count: u64,
}

impl AdmissionStats {
    pub fn record(&mut self, verdict: &AdmissionVerdict) {
        match verdict.decision {
            Decision::AdmitDirect => self.admit_direct += 1,
            Decision::AdmitBetter => self.admit_better += 1,
            Decision::Reject => self.reject += 1,
        }
        if verdict.candidate && verdict.d_min.is_finite() {
            self.d_min_sum += verdict.d_min;
            self.d_min_count += 1;
        }
    }

    /// Mean closest-expert distance over candidates with a finite match.
    pub fn mean_d_min(&self) -> Option<f64> {
        (self.d_min_count > 0).then(|| self.d_min_sum / self.d_min_count as f64)
    }

    pub fn admitted(&self) -> u64 {
        self.admit_direct + self.admit_better
    }
}
