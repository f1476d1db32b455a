use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, replicate, simulate_joint, SimConfig};
use crate::ctmc::flow_generator;
use crate::equilibrium::Policy;
use crate::error::{Error, Result};
use crate::schedule::NetworkState;
use crate::topology::{CsmaParams, NetworkSpec, TrafficSpec};

#[derive(Clone, Debug)]
pub struct TimescaleConfig {
    pub policy: Policy,
    pub initial_state: NetworkState,
    pub n_values: Vec<u32>,
    pub t_probe: f64,
    pub replications: usize,
    pub seed: u64,
    /// Per-class upper corner of the state window; mass outside it is
    /// lumped into one cell.
    pub window: Vec<u32>,
    pub bootstrap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceRow {
    pub n: u32,
    pub distance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn window_index(x: &NetworkState, window: &[u32]) -> Option<usize> {
    let mut idx = 0usize;
    for (k, &m) in window.iter().enumerate() {
        let v = x.get(k);
        if v > m {
            return None;
        }
        idx = idx * (m as usize + 1) + v as usize;
    }
    Some(idx)
}

fn tv(reference: &[f64], counts: &[u64], total: u64) -> f64 {
    let n = total as f64;
    0.5 * reference.iter().zip(counts).map(|(p, &c)| (p - c as f64 / n).abs()).sum::<f64>()
}

/// Total-variation distance between the law of `X^N(t_probe)` of the joint
/// process, estimated by replication, and the exact law of `X(t_probe)`
/// of the separated process, for every `N`, with percentile bootstrap CIs.
pub fn timescale_convergence(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    cfg: &TimescaleConfig,
) -> Result<Vec<DistanceRow>> {
    let k = spec.num_classes();
    if cfg.window.len() != k || cfg.initial_state.num_classes() != k {
        return Err(Error::InvalidParams("window and initial state must have one entry per class".into()));
    }
    if cfg.replications == 0 || !(cfg.t_probe >= 0.0) {
        return Err(Error::InvalidParams("need replications > 0 and t_probe >= 0".into()));
    }
    if window_index(&cfg.initial_state, &cfg.window).is_none() {
        return Err(Error::InvalidParams("initial state lies outside the window".into()));
    }
    // Exact separated law on the window (the generator drops arrivals
    // leaving it; the window must be wide enough for that to be negligible).
    let gen = flow_generator(spec, params, traffic, cfg.policy, &cfg.window)?;
    let cells = gen.states.len();
    let mut p0 = vec![0.0; cells];
    let start = gen.states.iter().position(|s| *s == cfg.initial_state).expect("initial state in window");
    p0[start] = 1.0;
    let pt = gen.transient(&p0, cfg.t_probe);
    let mut reference = vec![0.0; cells + 1];
    for (s, p) in gen.states.iter().zip(&pt) {
        reference[window_index(s, &cfg.window).expect("window state")] = *p;
    }
    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for (i, &n) in cfg.n_values.iter().enumerate() {
        let mut sim = SimConfig::new(cfg.policy, cfg.initial_state.clone(), cfg.t_probe.max(f64::MIN_POSITIVE), derive_seed(cfg.seed, i as u64))
            .with_scaling(n)
            .with_samples(vec![cfg.t_probe]);
        sim.max_total_flows = u64::MAX;
        let runs = replicate(&sim, cfg.replications, |c| simulate_joint(spec, params, traffic, c))?;
        let cellsof: Vec<usize> = runs
            .iter()
            .map(|t| {
                let x = &t.samples.last().expect("probe sample").state;
                window_index(x, &cfg.window).unwrap_or(cells)
            })
            .collect();
        let mut counts = vec![0u64; cells + 1];
        for &c in &cellsof {
            counts[c] += 1;
        }
        let distance = tv(&reference, &counts, cellsof.len() as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1_000_000 + i as u64));
        let mut boots: Vec<f64> = (0..cfg.bootstrap)
            .map(|_| {
                let mut bc = vec![0u64; cells + 1];
                for _ in 0..cellsof.len() {
                    bc[cellsof[rng.random_range(0..cellsof.len())]] += 1;
                }
                tv(&reference, &bc, cellsof.len() as u64)
            })
            .collect();
        boots.sort_by(f64::total_cmp);
        let (ci_lo, ci_hi) = if boots.is_empty() {
            (distance, distance)
        } else {
            let q = |f: f64| boots[((boots.len() - 1) as f64 * f).round() as usize];
            (q(0.025), q(0.975))
        };
        rows.push(DistanceRow { n, distance, ci_lo, ci_hi });
    }
    Ok(rows)
}

/// CSV with columns `N, distance, ci_lo, ci_hi`.
pub fn distance_csv(rows: &[DistanceRow]) -> String {
    let mut out = String::from("N,distance,ci_lo,ci_hi\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.distance, r.ci_lo, r.ci_hi);
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{ChannelGraph, Mode};

    fn pair() -> (NetworkSpec, CsmaParams<f64>) {
        let spec = NetworkSpec::new(2, vec![ChannelGraph::complete_eligibility(2, [(0, 1)])], Mode::AdHoc).unwrap();
        let p = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        (spec, p)
    }

    fn cfg(t: f64, reps: usize) -> TimescaleConfig {
        TimescaleConfig {
            policy: Policy::AdHoc,
            initial_state: NetworkState::new(vec![1, 1]),
            n_values: vec![1, 16],
            t_probe: t,
            replications: reps,
            seed: 3,
            window: vec![8, 8],
            bootstrap: 50,
        }
    }

    #[test]
    fn zero_probe_time_has_zero_distance() {
        let (spec, p) = pair();
        let traffic = TrafficSpec::from_loads(vec![0.2, 0.2]).unwrap();
        let rows = timescale_convergence(&spec, &p, &traffic, &cfg(0.0, 50)).unwrap();
        for r in rows {
            assert!(r.distance < 1e-12 && r.ci_hi < 1e-12);
        }
    }

    #[test]
    fn both_models_absorb_without_arrivals() {
        let (spec, p) = pair();
        let traffic = TrafficSpec::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let rows = timescale_convergence(&spec, &p, &traffic, &cfg(60.0, 100)).unwrap();
        for r in &rows {
            assert!(r.distance < 1e-6, "{r:?}");
        }
        assert!(distance_csv(&rows).starts_with("N,distance,ci_lo,ci_hi\n1,"));
    }

    #[test]
    fn rejects_bad_window() {
        let (spec, p) = pair();
        let traffic = TrafficSpec::from_loads(vec![0.2, 0.2]).unwrap();
        let mut c = cfg(1.0, 10);
        c.window = vec![0, 0];
        assert!(timescale_convergence(&spec, &p, &traffic, &c).is_err());
    }
}
