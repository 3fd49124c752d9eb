//! Slow reference implementations used to cross-check the engine.
//!
//! Every state is a plain `Vec<State>` and every event is looked up from
//! the skeleton draw functions directly.

use crate::epidemic::{DiseaseSpec, KnockoutSpec, Model, State};
use crate::knockout::NodeMarginal;
use crate::skeleton::Skeleton;

/// States indexed `[t][agent]`.
pub fn brute_simulate(sk: &Skeleton, disease: DiseaseSpec, initial: usize, knockout: Option<KnockoutSpec>) -> Vec<Vec<State>> {
    let n = sk.node_count();
    let horizon = sk.horizon();
    let removed = |i: usize, t: usize| knockout.is_some_and(|k| k.agent == i && t >= k.time);
    let mut states = Vec::with_capacity(horizon);
    let mut cur = vec![State::S; n];
    cur[initial] = State::I;
    for (i, s) in cur.iter_mut().enumerate() {
        if removed(i, 0) {
            *s = State::Removed;
        }
    }
    states.push(cur.clone());
    for t in 0..horizon.saturating_sub(1) {
        let mut next = cur.clone();
        for j in 0..n {
            if removed(j, t + 1) {
                next[j] = State::Removed;
                continue;
            }
            next[j] = match cur[j] {
                State::S => {
                    let infected = sk.graph().neighbors(j).iter().any(|&i| {
                        let i = i as usize;
                        cur[i] == State::I
                            && sk.is_activated(i, j, t).unwrap()
                            && sk.transmission_draw(i, j, t).unwrap() < disease.beta
                    });
                    if infected {
                        State::I
                    } else {
                        State::S
                    }
                }
                State::I => {
                    if sk.recovery_draw(j, t).unwrap() < disease.recovery_prob {
                        match disease.model {
                            Model::SIR => State::R,
                            Model::SIS => State::S,
                        }
                    } else {
                        State::I
                    }
                }
                other => other,
            };
        }
        states.push(next.clone());
        cur = next;
    }
    states
}

pub fn brute_magnitude(states: &[Vec<State>]) -> u64 {
    states.iter().flatten().filter(|&&s| s == State::I).count() as u64
}

/// Knockout magnitude for every node, agent-major, by full resimulation.
pub fn brute_knockout_magnitudes(sk: &Skeleton, disease: DiseaseSpec, initial: usize) -> Vec<u64> {
    let (n, horizon) = (sk.node_count(), sk.horizon());
    let mut out = Vec::with_capacity(n * horizon);
    for agent in 0..n {
        for time in 0..horizon {
            let states = brute_simulate(sk, disease, initial, Some(KnockoutSpec { agent, time }));
            out.push(brute_magnitude(&states));
        }
    }
    out
}

/// Per-run marginals for every node, agent-major. Infectious nodes use
/// their own resimulation; other nodes take the marginal of the agent's
/// next infectious node, or zero when there is none.
pub fn brute_run_marginals(sk: &Skeleton, disease: DiseaseSpec, initial: usize) -> Vec<NodeMarginal> {
    let (n, horizon) = (sk.node_count(), sk.horizon());
    let base_states = brute_simulate(sk, disease, initial, None);
    let base = brute_magnitude(&base_states);
    let knocked = brute_knockout_magnitudes(sk, disease, initial);
    let mut out = vec![NodeMarginal::default(); n * horizon];
    for a in 0..n {
        for t in 0..horizon {
            if let Some(tau) = (t..horizon).find(|&s| base_states[s][a] == State::I) {
                out[a * horizon + t] = NodeMarginal::from_magnitudes(base, knocked[a * horizon + tau], n, horizon, tau);
            }
        }
    }
    out
}

/// Field averaged over initial agents in ascending order.
pub fn brute_tko_field(sk: &Skeleton, disease: DiseaseSpec) -> Vec<NodeMarginal> {
    let (n, horizon) = (sk.node_count(), sk.horizon());
    let mut sums = vec![(0.0f64, 0.0f64); n * horizon];
    for initial in 0..n {
        for (acc, m) in sums.iter_mut().zip(brute_run_marginals(sk, disease, initial)) {
            acc.0 += m.proportional;
            acc.1 += m.delta_fraction;
        }
    }
    sums.into_iter()
        .map(|(p, d)| NodeMarginal { proportional: p / n as f64, delta_fraction: d / n as f64 })
        .collect()
}
