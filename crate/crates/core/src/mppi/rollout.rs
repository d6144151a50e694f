use super::cost::running_cost;
use super::{Control, CostSource, CostWeights, DynamicsModel};
use crate::sim::VehicleState;

/// A simulated trajectory and its total running cost. Infeasible rollouts
/// (non-finite states) carry `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<VehicleState>,
    pub cost: f64,
}

/// Propagates `controls` from `start` and sums the running cost of every
/// resulting state. There is no terminal cost.
pub fn rollout<M: DynamicsModel + ?Sized>(
    model: &M,
    start: &VehicleState,
    controls: &[Control],
    dt: f64,
    source: &CostSource,
    weights: &CostWeights,
) -> Rollout {
    let mut states = Vec::with_capacity(controls.len());
    let cost = rollout_cost(model, start, controls, dt, source, weights, |s| states.push(*s));
    Rollout { states, cost }
}

#[inline]
pub(crate) fn rollout_cost<M: DynamicsModel + ?Sized>(
    model: &M,
    start: &VehicleState,
    controls: &[Control],
    dt: f64,
    source: &CostSource,
    weights: &CostWeights,
    mut visit: impl FnMut(&VehicleState),
) -> f64 {
    let mut s = *start;
    let mut total = 0.0;
    for (t, u) in controls.iter().enumerate() {
        s = model.propagate(&s, u, dt);
        if !s.is_finite() {
            return f64::INFINITY;
        }
        visit(&s);
        total += running_cost(&s, t, source, weights);
    }
    total
}
