use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::rollout::rollout_cost;
use super::{Control, ControlSequence, CostSource, CostWeights, DynamicsModel, MppiConfig};
use crate::rng::{chunk_rng, SimRng};
use crate::sim::VehicleState;

/// Rollouts per parallel work unit.
const ROLLOUT_CHUNK: usize = 32;

/// Normalized weights `exp(−(S_k − min S) / temperature)`. Infinite costs get
/// weight zero; `None` when every cost is infinite or NaN.
pub fn importance_weights(costs: &[f64], temperature: f64) -> Option<Vec<f64>> {
    let min = costs.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let mut w: Vec<f64> =
        costs.iter().map(|&c| if c.is_finite() { (-(c - min) / temperature).exp() } else { 0.0 }).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Some(w)
}

/// `Σ w_k x_k` for normalized weights.
pub fn weighted_average(samples: &[f64], weights: &[f64]) -> f64 {
    samples.iter().zip(weights).map(|(x, w)| x * w).sum()
}

/// Result of one planning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub sequence: ControlSequence,
    /// Lowest sampled cost.
    pub min_cost: f64,
    /// Rollouts with finite cost.
    pub feasible: usize,
    /// Largest normalized importance weight.
    pub max_weight: f64,
    /// Every rollout was infeasible and the zero sequence was returned.
    pub emergency: bool,
}

impl Plan {
    pub fn first(&self) -> Control {
        self.sequence.controls.first().copied().unwrap_or_default()
    }
}

/// One MPPI iteration around `previous`.
pub fn compute_control<M: DynamicsModel, R: Rng + ?Sized>(
    model: &M,
    state: &VehicleState,
    previous: &ControlSequence,
    config: &MppiConfig,
    weights: &CostWeights,
    source: &CostSource,
    rng: &mut R,
) -> Plan {
    let (k, t) = (config.samples, previous.horizon());
    let base: u64 = rng.random();
    let mut samples = vec![Control::default(); k * t];
    let mut costs = vec![0.0; k];
    samples.par_chunks_mut(ROLLOUT_CHUNK * t).zip(costs.par_chunks_mut(ROLLOUT_CHUNK)).enumerate().for_each(
        |(chunk, (seqs, cs))| {
            let mut crng = chunk_rng(base, 1, chunk as u64);
            for (seq, c) in seqs.chunks_mut(t).zip(cs.iter_mut()) {
                for (u, prev) in seq.iter_mut().zip(&previous.controls) {
                    let ds: f64 = crng.sample(StandardNormal);
                    let dth: f64 = crng.sample(StandardNormal);
                    *u = Control {
                        steering: prev.steering + config.steering_noise * ds,
                        throttle: prev.throttle + config.throttle_noise * dth,
                    }
                    .clamped();
                }
                *c = rollout_cost(model, state, seq, previous.dt, source, weights, |_| {});
            }
        },
    );
    let feasible = costs.iter().filter(|c| c.is_finite()).count();
    let Some(eta) = importance_weights(&costs, config.temperature) else {
        log::warn!("all {k} rollouts infeasible, issuing emergency stop sequence");
        return Plan {
            sequence: ControlSequence::zeros(t, previous.dt),
            min_cost: f64::INFINITY,
            feasible: 0,
            max_weight: 0.0,
            emergency: true,
        };
    };
    let mut out = vec![Control::default(); t];
    for (seq, &w) in samples.chunks(t).zip(&eta) {
        if w == 0.0 {
            continue;
        }
        for (o, u) in out.iter_mut().zip(seq) {
            o.steering += w * u.steering;
            o.throttle += w * u.throttle;
        }
    }
    out.iter_mut().for_each(|u| *u = u.clamped());
    Plan {
        sequence: ControlSequence { dt: previous.dt, controls: out },
        min_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
        feasible,
        max_weight: eta.iter().copied().fold(0.0, f64::max),
        emergency: false,
    }
}

/// Stateful planner keeping the receding-horizon sequence between plans.
pub struct Mppi<M: DynamicsModel> {
    model: M,
    config: MppiConfig,
    weights: CostWeights,
    sequence: ControlSequence,
    rng: SimRng,
}

impl<M: DynamicsModel> Mppi<M> {
    pub fn new(model: M, config: MppiConfig, weights: CostWeights, seed: u64) -> Result<Self, String> {
        config.validate()?;
        weights.validate()?;
        Ok(Self {
            model,
            sequence: ControlSequence::zeros(config.horizon, config.dt),
            config,
            weights,
            rng: SimRng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn sequence(&self) -> &ControlSequence {
        &self.sequence
    }

    /// Advances the stored sequence by `elapsed` seconds of executed control.
    pub fn advance(&mut self, elapsed: f64) {
        let steps = (elapsed / self.config.dt).round() as usize;
        self.sequence.shift(steps);
    }

    pub fn plan(&mut self, state: &VehicleState, source: &CostSource) -> Plan {
        let plan = compute_control(&self.model, state, &self.sequence, &self.config, &self.weights, source, &mut self.rng);
        self.sequence = plan.sequence.clone();
        plan
    }
}
