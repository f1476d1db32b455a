//! Explicit continuous-time Markov chain generators built directly from
//! transition rates. They serve as the reference for the closed-form
//! measures and for the simulators.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use crate::equilibrium::{equilibrium, Policy};
use crate::error::{Error, Result};
use crate::schedule::{enumerate_feasible, NetworkState, Schedule};
use crate::topology::{CsmaParams, NetworkSpec, TrafficSpec};

/// Sparse generator over an indexed state set.
#[derive(Clone, Debug)]
pub struct Generator<S> {
    pub states: Vec<S>,
    pub transitions: Vec<(usize, usize, f64)>,
}

impl<S: Clone + Eq + Hash> Generator<S> {
    pub fn index(&self) -> HashMap<S, usize> {
        self.states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect()
    }

    /// Dense `Q` with rows summing to zero.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.states.len();
        let mut q = DMatrix::zeros(n, n);
        for &(a, b, r) in &self.transitions {
            if a != b {
                q[(a, b)] += r;
                q[(a, a)] -= r;
            }
        }
        q
    }

    /// Solves `pi Q = 0`, `sum pi = 1` by LU on the transposed system with
    /// one balance equation replaced by the normalization.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.states.len();
        if n == 1 {
            return Ok(vec![1.0]);
        }
        let mut a = self.dense().transpose();
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Solver("singular generator (chain not irreducible?)".into()))?;
        Ok(sol.iter().copied().collect())
    }

    /// Distribution at time `t` from `p0`, by uniformization.
    pub fn transient(&self, p0: &[f64], t: f64) -> Vec<f64> {
        let n = self.states.len();
        let mut exit = vec![0.0; n];
        for &(a, b, r) in &self.transitions {
            if a != b {
                exit[a] += r;
            }
        }
        let lambda = exit.iter().copied().fold(0.0, f64::max);
        if t <= 0.0 || lambda == 0.0 {
            return p0.to_vec();
        }
        let lt = lambda * t;
        let n_max = (lt + 12.0 * lt.sqrt() + 30.0).ceil() as usize;
        let mut v = p0.to_vec();
        let mut out = vec![0.0; n];
        let mut mass = 0.0;
        for step in 0..=n_max {
            let w = (-lt + step as f64 * lt.ln() - libm::lgamma(step as f64 + 1.0)).exp();
            mass += w;
            for (o, vi) in out.iter_mut().zip(&v) {
                *o += w * vi;
            }
            if mass > 1.0 - 1e-14 && step as f64 > lt {
                break;
            }
            let mut next: Vec<f64> = v.iter().zip(&exit).map(|(vi, e)| vi * (1.0 - e / lambda)).collect();
            for &(a, b, r) in &self.transitions {
                if a != b {
                    next[b] += v[a] * r / lambda;
                }
            }
            v = next;
        }
        out
    }
}

/// Packet-level schedule process at fixed flow counts, with the rates of
/// the random-access mechanism:
/// idle class-`k` links (or the access point, for aggregated downlink
/// classes) start a packet on channel `j` at rate `nu_k beta_kj` times the
/// number of idle links (or `x_k / sum_{D_i} x`), and active packets end at
/// rate `phi_k`.
pub fn packet_generator(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    state: &NetworkState,
    policy: Policy,
) -> Result<Generator<Schedule>> {
    let states = enumerate_feasible(spec, Some(state))?;
    let index: HashMap<Schedule, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut transitions = Vec::new();
    for (a, y) in states.iter().enumerate() {
        for k in 0..spec.num_classes() {
            for j in 0..spec.num_channels() {
                if y.is_active(k, j) {
                    let b = index[&y.with(k, j, false)];
                    transitions.push((a, b, params.phys_rate()[k]));
                    continue;
                }
                let up = y.with(k, j, true);
                let Some(&b) = index.get(&up) else { continue };
                let nu = params.attempt_rate()[k];
                let beta = params.probe_prob()[k][j];
                let rate = match (policy, spec.downlink_owner(k)) {
                    (Policy::StandardInfra, Some(i)) => {
                        let total: u32 = spec.access_points()[i].downlink.iter().map(|&c| state.get(c)).sum();
                        nu * beta * state.get(k) as f64 / total as f64
                    }
                    _ => nu * beta * (state.get(k) - y.per_class(k)) as f64,
                };
                transitions.push((a, b, rate));
            }
        }
    }
    Ok(Generator { states, transitions })
}

/// All states of the box `0 <= x_k <= max_flows[k]`.
pub fn state_box(max_flows: &[u32]) -> Vec<NetworkState> {
    let mut out = vec![NetworkState::zeros(max_flows.len())];
    for (k, &m) in max_flows.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * (m as usize + 1));
        for s in &out {
            for v in 0..=m {
                let mut f = s.flows().to_vec();
                f[k] = v;
                next.push(NetworkState::new(f));
            }
        }
        out = next;
    }
    out
}

/// Flow-level process under time-scale separation, truncated to a box:
/// arrivals leaving the box are dropped.
pub fn flow_generator(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    policy: Policy,
    max_flows: &[u32],
) -> Result<Generator<NetworkState>> {
    let throughput = |x: &NetworkState| equilibrium(x, params, spec, policy).map(|e| e.throughput);
    flow_generator_with(traffic, max_flows, throughput)
}

/// As [`flow_generator`] with an arbitrary throughput function.
pub fn flow_generator_with(
    traffic: &TrafficSpec<f64>,
    max_flows: &[u32],
    mut throughput: impl FnMut(&NetworkState) -> Result<Vec<f64>>,
) -> Result<Generator<NetworkState>> {
    let states = state_box(max_flows);
    let index: HashMap<NetworkState, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut transitions = Vec::new();
    for (a, x) in states.iter().enumerate() {
        let phi = throughput(x)?;
        for k in 0..x.num_classes() {
            if x.get(k) < max_flows[k] && traffic.arrival_rate()[k] > 0.0 {
                transitions.push((a, index[&x.plus(k)], traffic.arrival_rate()[k]));
            }
            if x.get(k) > 0 && phi[k] > 0.0 {
                transitions.push((a, index[&x.minus(k)], phi[k] / traffic.mean_flow_size()[k]));
            }
        }
    }
    Ok(Generator { states, transitions })
}

/// Joint flow/packet process with scaling parameter `n`, truncated to a
/// box of flow counts.
pub fn joint_generator(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    policy: Policy,
    scaling_n: u32,
    max_flows: &[u32],
) -> Result<Generator<(NetworkState, Schedule)>> {
    let nf = scaling_n as f64;
    let mut states = Vec::new();
    for x in state_box(max_flows) {
        for y in enumerate_feasible(spec, Some(&x))? {
            states.push((x.clone(), y));
        }
    }
    let index: HashMap<(NetworkState, Schedule), usize> =
        states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut transitions = Vec::new();
    for (a, (x, y)) in states.iter().enumerate() {
        for k in 0..spec.num_classes() {
            if x.get(k) < max_flows[k] && traffic.arrival_rate()[k] > 0.0 {
                transitions.push((a, index[&(x.plus(k), y.clone())], traffic.arrival_rate()[k]));
            }
            let sigma = traffic.mean_flow_size()[k];
            let phi = params.phys_rate()[k];
            for j in 0..spec.num_channels() {
                if y.is_active(k, j) {
                    let down = y.with(k, j, false);
                    let keep = nf * phi * (1.0 - 1.0 / (sigma * nf));
                    if keep > 0.0 {
                        transitions.push((a, index[&(x.clone(), down.clone())], keep));
                    }
                    transitions.push((a, index[&(x.minus(k), down)], phi / sigma));
                    continue;
                }
                let up = y.with(k, j, true);
                let Some(&b) = index.get(&(x.clone(), up)) else { continue };
                let nu = params.attempt_rate()[k];
                let beta = params.probe_prob()[k][j];
                let rate = match (policy, spec.downlink_owner(k)) {
                    (Policy::StandardInfra, Some(i)) => {
                        let total: u32 = spec.access_points()[i].downlink.iter().map(|&c| x.get(c)).sum();
                        nu * beta * x.get(k) as f64 / total as f64
                    }
                    _ => nu * beta * (x.get(k) - y.per_class(k)) as f64,
                };
                transitions.push((a, b, nf * rate));
            }
        }
    }
    Ok(Generator { states, transitions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{ChannelGraph, Mode};

    #[test]
    fn two_state_chain() {
        let g = Generator {
            states: vec![0, 1],
            transitions: vec![(0, 1, 2.0), (1, 0, 1.0)],
        };
        let pi = g.stationary().unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-14);
        let p = g.transient(&[1.0, 0.0], 0.7);
        // p1(t) = 2/3 (1 - e^{-3t})
        assert!((p[1] - 2.0 / 3.0 * (1.0 - (-2.1f64).exp())).abs() < 1e-12);
        assert_eq!(g.transient(&[1.0, 0.0], 0.0), vec![1.0, 0.0]);
    }

    #[test]
    fn mm1_truncated_stationary_is_geometric() {
        let spec = NetworkSpec::new(1, vec![ChannelGraph::complete_eligibility(1, [])], Mode::AdHoc).unwrap();
        let params = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        let traffic = TrafficSpec::from_loads(vec![0.5]).unwrap();
        let g = flow_generator_with(&traffic, &[60], |x| Ok(vec![if x.get(0) > 0 { 1.0 } else { 0.0 }])).unwrap();
        let pi = g.stationary().unwrap();
        for n in 0..5 {
            assert!((pi[n] - 0.5f64.powi(n as i32 + 1)).abs() < 1e-12);
        }
        let _ = params;
    }

    #[test]
    fn box_enumeration() {
        let b = state_box(&[1, 2]);
        assert_eq!(b.len(), 6);
        assert!(b.contains(&NetworkState::new(vec![1, 2])));
    }
}
