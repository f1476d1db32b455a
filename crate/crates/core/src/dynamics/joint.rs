use super::{EventCounts, EventKind, Recorder, SimConfig, Streams, Trajectory};
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::topology::{CsmaParams, NetworkSpec, TrafficSpec};

#[derive(Clone, Copy)]
enum Move {
    Arrival(usize),
    Activate(usize, usize),
    PacketEnd(usize, usize),
    FlowEnd(usize, usize),
}

/// Simulates the joint process `(X^N, Y^N)`: flows arrive at rate
/// `lambda_k`; idle links start packets at `N` times the policy's
/// activation rate; an active packet ends at rate `N phi_k (1 - 1/(sigma_k N))`
/// without and `phi_k / sigma_k` with completion of its flow, which frees
/// the slot.
pub fn simulate_joint(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate(spec)?;
    cfg.policy.check_params(spec, params)?;
    let k = spec.num_classes();
    let jj = spec.num_channels();
    let n = cfg.scaling_n as f64;
    if let Some(c) = (0..k).find(|&c| traffic.mean_flow_size()[c] * n < 1.0 - 1e-12) {
        return Err(Error::InvalidParams(format!(
            "class {}: sigma * N must be at least one packet",
            c + 1
        )));
    }
    let mut x = cfg.initial_state.clone();
    let mut y = cfg.initial_schedule.clone().unwrap_or_else(|| Schedule::empty(k, jj));
    if !y.is_feasible(spec, Some(&x)) {
        return Err(Error::InvalidParams("initial schedule is not feasible for the initial state".into()));
    }
    let mut streams = Streams::new(cfg.seed, k);
    let mut rec = Recorder::new(&cfg.sample_times, k);
    let mut counts = vec![EventCounts::default(); k];
    let mut next_arrival: Vec<f64> = (0..k).map(|c| streams.exp(c, EventKind::Arrival, traffic.arrival_rate()[c])).collect();
    let mut t = 0.0;
    let mut aborted = false;
    loop {
        let mut best = (f64::INFINITY, Move::Arrival(0));
        for c in 0..k {
            if next_arrival[c] < best.0 {
                best = (next_arrival[c], Move::Arrival(c));
            }
        }
        for c in 0..k {
            let phi = params.phys_rate()[c];
            let sigma = traffic.mean_flow_size()[c];
            for j in 0..jj {
                if y.is_active(c, j) {
                    let keep = n * phi * (1.0 - 1.0 / (sigma * n));
                    let d = t + streams.exp(c, EventKind::PacketEnd, keep.max(0.0));
                    if d < best.0 {
                        best = (d, Move::PacketEnd(c, j));
                    }
                    let d = t + streams.exp(c, EventKind::FlowEnd, phi / sigma);
                    if d < best.0 {
                        best = (d, Move::FlowEnd(c, j));
                    }
                } else if y.can_activate(spec, c, j, x.get(c)) {
                    let rate = n * cfg.policy.activation_rate(spec, params, &x, &y, c, j);
                    let d = t + streams.exp(c, EventKind::Activation, rate);
                    if d < best.0 {
                        best = (d, Move::Activate(c, j));
                    }
                }
            }
        }
        let (te, mv) = best;
        if te > cfg.horizon {
            rec.hold(t, cfg.horizon, &x, Some(&y));
            t = cfg.horizon;
            break;
        }
        rec.hold(t, te, &x, Some(&y));
        t = te;
        match mv {
            Move::Arrival(c) => {
                x.increment(c);
                counts[c].arrivals += 1;
                next_arrival[c] = t + streams.exp(c, EventKind::Arrival, traffic.arrival_rate()[c]);
                if x.total() > cfg.max_total_flows {
                    aborted = true;
                    break;
                }
            }
            Move::Activate(c, j) => {
                y.set(c, j, true);
                counts[c].activations += 1;
            }
            Move::PacketEnd(c, j) => {
                // The link releases the channel and contends again.
                y.set(c, j, false);
                counts[c].packets += 1;
            }
            Move::FlowEnd(c, j) => {
                y.set(c, j, false);
                x.decrement(c);
                counts[c].packets += 1;
                counts[c].departures += 1;
            }
        }
        debug_assert!(y.is_feasible(spec, Some(&x)));
    }
    rec.close(t, &x, Some(&y), aborted);
    Ok(rec.finish(counts, aborted, t, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::joint_generator;
    use crate::dynamics::replicate;
    use crate::equilibrium::Policy;
    use crate::library;
    use crate::schedule::NetworkState;
    use crate::topology::{ChannelGraph, Mode};

    #[test]
    fn schedules_stay_feasible() {
        for (spec, policy) in [
            (library::fig3(), Policy::StandardInfra),
            (library::bowtie(), Policy::FlowAware),
            (library::fig1(), Policy::AdHoc),
        ] {
            let k = spec.num_classes();
            let p = CsmaParams::homogeneous(&spec, 1.5).unwrap();
            let traffic = TrafficSpec::from_loads(vec![0.2; k]).unwrap();
            let cfg = SimConfig::new(policy, NetworkState::new(vec![2; k]), 100.0, 9).with_scaling(3).with_uniform_samples(400);
            let tr = simulate_joint(&spec, &p, &traffic, &cfg).unwrap();
            for s in &tr.samples {
                assert!(s.schedule.as_ref().unwrap().is_feasible(&spec, Some(&s.state)));
            }
        }
    }

    #[test]
    fn unit_flows_complete_with_their_packet() {
        let spec = library::fig1();
        let p = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        let traffic = TrafficSpec::new(vec![0.3; 4], vec![1.0; 4]).unwrap();
        let tr = simulate_joint(&spec, &p, &traffic, &SimConfig::new(Policy::AdHoc, NetworkState::zeros(4), 500.0, 2)).unwrap();
        for c in &tr.event_counts {
            assert_eq!(c.packets, c.departures);
        }
    }

    #[test]
    fn packets_per_flow_have_mean_sigma_n() {
        let spec = NetworkSpec::new(1, vec![ChannelGraph::complete_eligibility(1, [])], Mode::AdHoc).unwrap();
        let p = CsmaParams::homogeneous(&spec, 5.0).unwrap();
        let traffic = TrafficSpec::new(vec![0.3], vec![2.0]).unwrap();
        let cfg = SimConfig::new(Policy::AdHoc, NetworkState::zeros(1), 20_000.0, 4).with_scaling(3);
        let tr = simulate_joint(&spec, &p, &traffic, &cfg).unwrap();
        let c = &tr.event_counts[0];
        let ratio = c.packets as f64 / c.departures as f64;
        // Geometric with mean 6; sd of a flow's packet count is sqrt(30).
        let se = 30f64.sqrt() / (c.departures as f64).sqrt();
        assert!((ratio - 6.0).abs() < 4.0 * se, "{ratio} ± {se}");
    }

    #[test]
    fn birth_death_marginals_match_generator() {
        let spec = NetworkSpec::new(1, vec![ChannelGraph::complete_eligibility(1, [])], Mode::AdHoc).unwrap();
        let p = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        let traffic = TrafficSpec::new(vec![0.3], vec![1.0]).unwrap();
        let g = joint_generator(&spec, &p, &traffic, Policy::AdHoc, 1, &[40]).unwrap();
        let pi = g.stationary().unwrap();
        let mut exact = [0.0; 3];
        let mut busy = 0.0;
        for ((x, y), q) in g.states.iter().zip(&pi) {
            if (x.get(0) as usize) < 3 {
                exact[x.get(0) as usize] += q;
            }
            busy += q * y.size() as f64;
        }
        let cfg = SimConfig::new(Policy::AdHoc, NetworkState::zeros(1), 4000.0, 77);
        let runs = replicate(&cfg, 16, |c| simulate_joint(&spec, &p, &traffic, c)).unwrap();
        // Time-average occupancy E[X] against the generator's.
        let ex: f64 = g.states.iter().zip(&pi).map(|((x, _), q)| x.get(0) as f64 * q).sum();
        let means: Vec<f64> = runs.iter().map(|t| t.time_average[0]).collect();
        let m = means.iter().sum::<f64>() / 16.0;
        let se = (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 15.0).sqrt() / 4.0;
        assert!((m - ex).abs() < 4.0 * se + 1e-3, "{m} vs {ex} (se {se})");
        // Activation frequency against the stationary rate nu x 1{y = 0}.
        let act_rate: f64 = g.states.iter().zip(&pi).filter(|((_, y), _)| y.is_empty()).map(|((x, _), q)| q * x.get(0) as f64).sum();
        let acts: Vec<f64> = runs.iter().map(|t| t.event_counts[0].activations as f64 / 4000.0).collect();
        let ma = acts.iter().sum::<f64>() / 16.0;
        let sa = (acts.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / 15.0).sqrt() / 4.0;
        assert!((ma - act_rate).abs() < 4.0 * sa + 1e-3, "{ma} vs {act_rate}");
        assert!(exact[0] > 0.0 && busy > 0.0);
    }

    #[test]
    fn rejects_sub_packet_flows_and_infeasible_start() {
        let spec = library::fig1();
        let p = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        let traffic = TrafficSpec::new(vec![0.1; 4], vec![0.5; 4]).unwrap();
        let cfg = SimConfig::new(Policy::AdHoc, NetworkState::zeros(4), 1.0, 1);
        assert!(simulate_joint(&spec, &p, &traffic, &cfg).is_err());
        let traffic = TrafficSpec::new(vec![0.1; 4], vec![1.0; 4]).unwrap();
        let mut cfg = cfg;
        cfg.initial_schedule = Some(Schedule::from_channel_sets(4, &[&[0], &[]]));
        assert!(simulate_joint(&spec, &p, &traffic, &cfg).is_err());
    }
}
