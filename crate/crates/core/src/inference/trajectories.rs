//! Posterior credible bands for the latent trust trajectories.

use serde::{Deserialize, Serialize};

use crate::agent::{trajectory, AgentParams};
use crate::confidence::Condition;
use crate::error::{Error, Result};
use crate::inference::draws::PosteriorDraws;
use crate::inference::model::Dataset;
use crate::stats::{mean, quantile_sorted};

/// Posterior summary of one latent quantity at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Number of feedback events absorbed; step 0 is the state used on trial 1.
    pub step: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBands {
    pub b: Vec<Band>,
    pub w: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTrajectory {
    pub participant_id: String,
    pub condition: Condition,
    pub bands: TrajectoryBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTrajectory {
    pub condition: Condition,
    pub n_participants: usize,
    pub bands: TrajectoryBands,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrajectories {
    pub by_condition: Vec<ConditionTrajectory>,
    pub by_participant: Vec<ParticipantTrajectory>,
}

fn band(step: usize, values: &mut [f64]) -> Band {
    values.sort_by(f64::total_cmp);
    Band { step, mean: mean(values), lower: quantile_sorted(values, 0.025), upper: quantile_sorted(values, 0.975) }
}

fn bands(b: &mut [Vec<f64>], w: &mut [Vec<f64>]) -> TrajectoryBands {
    TrajectoryBands {
        b: b.iter_mut().enumerate().map(|(s, v)| band(s, v)).collect(),
        w: w.iter_mut().enumerate().map(|(s, v)| band(s, v)).collect(),
    }
}

/// Replays every posterior draw through each participant's recorded trials
/// and summarizes the resulting `(b_t, w_t)` paths with means and central 95%
/// intervals. Condition bands summarize, per draw, the mean over that
/// condition's participants (participants with fewer trials drop out of
/// later steps).
pub fn posterior_trajectories(draws: &PosteriorDraws, data: &Dataset) -> Result<PosteriorTrajectories> {
    let n_draws = draws.n_chains * draws.n_iterations;
    if n_draws == 0 {
        return Err(Error::Empty("draws"));
    }
    let conditions = data.conditions();
    let max_len = |c: Condition| {
        data.participants.iter().filter(|p| p.condition == c).map(|p| p.records.len() + 1).max().unwrap_or(0)
    };
    // Per condition: [step][draw] running sums of b and w, and participant counts per step.
    let mut sums: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<usize>)> = conditions
        .iter()
        .map(|&c| {
            let len = max_len(c);
            (vec![vec![0.0; n_draws]; len], vec![vec![0.0; n_draws]; len], vec![0; len])
        })
        .collect();

    let mut by_participant = Vec::with_capacity(data.len());
    for p in &data.participants {
        let columns = AgentParams::NAMES
            .iter()
            .map(|n| {
                let name = format!("{n}[{}]", p.id);
                draws.index_of(&name).ok_or_else(|| Error::Mismatch(format!("no draws for `{name}`")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let len = p.records.len() + 1;
        let mut b = vec![Vec::with_capacity(n_draws); len];
        let mut w = vec![Vec::with_capacity(n_draws); len];
        for d in draws.iter_draws() {
            let params = AgentParams::from_array(std::array::from_fn(|k| d[columns[k]]));
            for (s, state) in trajectory(&params, &p.records)?.iter().enumerate() {
                b[s].push(state.b);
                w[s].push(state.w);
            }
        }
        let slot = conditions.iter().position(|c| *c == p.condition).expect("condition of a participant is present");
        let (sb, sw, counts) = &mut sums[slot];
        for s in 0..len {
            counts[s] += 1;
            for k in 0..n_draws {
                sb[s][k] += b[s][k];
                sw[s][k] += w[s][k];
            }
        }
        by_participant.push(ParticipantTrajectory {
            participant_id: p.id.clone(),
            condition: p.condition,
            bands: bands(&mut b, &mut w),
        });
    }

    let by_condition = conditions
        .iter()
        .zip(sums)
        .map(|(&condition, (mut b, mut w, counts))| {
            for s in 0..counts.len() {
                let n = counts[s] as f64;
                b[s].iter_mut().chain(w[s].iter_mut()).for_each(|v| *v /= n);
            }
            ConditionTrajectory {
                condition,
                n_participants: data.participants.iter().filter(|p| p.condition == condition).count(),
                bands: bands(&mut b, &mut w),
            }
        })
        .collect();
    Ok(PosteriorTrajectories { by_condition, by_participant })
}
