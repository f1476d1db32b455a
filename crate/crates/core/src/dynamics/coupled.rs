use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::schedule::NetworkState;
use crate::topology::TrafficSpec;

/// Outcome of a coupled pair of flow-level runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    pub steps: u64,
    /// Uniformized steps after which the second state was not below the first.
    pub order_violations: u64,
    pub final_first: NetworkState,
    pub final_second: NetworkState,
    pub time_average_first: Vec<f64>,
    pub time_average_second: Vec<f64>,
}

/// Runs two flow-level processes with the same arrivals and throughput
/// functions `phi_first`, `phi_second` on one uniformized event stream:
/// every step draws a single uniform that selects an arrival or a
/// potential departure of class `k`, and each process accepts the
/// departure when the same uniform falls below its own `phi_k(x) / sigma_k`
/// relative to `service_bound[k]`. If `phi_second` dominates `phi_first`
/// in the monotone sense, the second process stays below the first.
pub fn simulate_coupled(
    traffic: &TrafficSpec<f64>,
    mut phi_first: impl FnMut(&NetworkState) -> Result<Vec<f64>>,
    mut phi_second: impl FnMut(&NetworkState) -> Result<Vec<f64>>,
    service_bound: &[f64],
    initial: &NetworkState,
    horizon: f64,
    seed: u64,
) -> Result<CouplingReport> {
    let k = traffic.num_classes();
    if service_bound.len() != k || initial.num_classes() != k {
        return Err(Error::InvalidParams("coupling inputs must have one entry per class".into()));
    }
    let lambda: f64 = traffic.arrival_rate().iter().sum();
    let total_rate = lambda + service_bound.iter().sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = initial.clone();
    let mut b = initial.clone();
    let mut area_a = vec![0.0; k];
    let mut area_b = vec![0.0; k];
    let mut t = 0.0;
    let mut steps = 0;
    let mut violations = 0;
    loop {
        let dt = if total_rate > 0.0 {
            let e: f64 = rng.sample(Exp1);
            (e / total_rate).min(horizon - t)
        } else {
            horizon - t
        };
        for c in 0..k {
            area_a[c] += a.get(c) as f64 * dt;
            area_b[c] += b.get(c) as f64 * dt;
        }
        t += dt;
        if t >= horizon {
            break;
        }
        let mut u = rng.random::<f64>() * total_rate;
        steps += 1;
        let mut done = false;
        for c in 0..k {
            let l = traffic.arrival_rate()[c];
            if u < l {
                a.increment(c);
                b.increment(c);
                done = true;
                break;
            }
            u -= l;
        }
        if !done {
            let pa = phi_first(&a)?;
            let pb = phi_second(&b)?;
            for c in 0..k {
                let bound = service_bound[c];
                if u < bound {
                    let sigma = traffic.mean_flow_size()[c];
                    let ra = pa[c] / sigma;
                    let rb = pb[c] / sigma;
                    if ra > bound * (1.0 + 1e-12) || rb > bound * (1.0 + 1e-12) {
                        return Err(Error::InvalidParams(format!("class {}: service rate exceeds its bound", c + 1)));
                    }
                    if a.get(c) > 0 && u < ra {
                        a.decrement(c);
                    }
                    if b.get(c) > 0 && u < rb {
                        b.decrement(c);
                    }
                    break;
                }
                u -= bound;
            }
        }
        if !b.le(&a) {
            violations += 1;
        }
    }
    let end = horizon.max(f64::MIN_POSITIVE);
    Ok(CouplingReport {
        steps,
        order_violations: violations,
        final_first: a,
        final_second: b,
        time_average_first: area_a.iter().map(|v| v / end).collect(),
        time_average_second: area_b.iter().map(|v| v / end).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faster_server_stays_below() {
        let traffic = TrafficSpec::from_loads(vec![0.6]).unwrap();
        let slow = |x: &NetworkState| Ok(vec![if x.get(0) > 0 { 0.7 } else { 0.0 }]);
        let fast = |x: &NetworkState| Ok(vec![if x.get(0) > 0 { 1.0 } else { 0.0 }]);
        let r = simulate_coupled(&traffic, slow, fast, &[1.0], &NetworkState::new(vec![5]), 5000.0, 8).unwrap();
        assert_eq!(r.order_violations, 0);
        assert!(r.steps > 1000);
        assert!(r.time_average_second[0] < r.time_average_first[0]);
    }

    #[test]
    fn reversed_order_is_detected() {
        let traffic = TrafficSpec::from_loads(vec![0.6]).unwrap();
        let slow = |x: &NetworkState| Ok(vec![if x.get(0) > 0 { 0.7 } else { 0.0 }]);
        let fast = |x: &NetworkState| Ok(vec![if x.get(0) > 0 { 1.0 } else { 0.0 }]);
        let r = simulate_coupled(&traffic, fast, slow, &[1.0], &NetworkState::new(vec![5]), 5000.0, 8).unwrap();
        assert!(r.order_violations > 0);
    }

    #[test]
    fn bound_is_enforced() {
        let traffic = TrafficSpec::from_loads(vec![0.6]).unwrap();
        let over = |_: &NetworkState| Ok(vec![2.0]);
        assert!(simulate_coupled(&traffic, over, over, &[1.0], &NetworkState::new(vec![5]), 50.0, 1).is_err());
    }
}
