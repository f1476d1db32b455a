//! Stability diagnostics: Lyapunov drift, fluid-slope verdicts from
//! simulated trajectories, the bow-tie instability boundary and the
//! multipartite fluid certificate.

mod bowtie;
mod fluid;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use bowtie::{
    bowtie_boundary, bowtie_coupling_check, bowtie_dominating_model, bowtie_phi3_average, boundary_csv, bowtie_optimal_critical, bowtie_standard_critical,
    homogeneous_fixed_point, mm1_reduction_check, BoundaryRow, Mm1Report,
};
pub use fluid::{lpartite_fluid_bound, w_statistic, FluidBoundReport};

use crate::dynamics::Trajectory;
use crate::equilibrium::{equilibrium, Policy};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schedule::NetworkState;
use crate::topology::{CsmaParams, NetworkSpec, TrafficSpec};

/// Drift of `F(x) = sum_{k : x_k > 0} (x_k sigma_k / phi_k) log(x_k alpha_k)`
/// and its split into the unbounded part `g_part` and the bounded
/// remainder `h_part`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport<T> {
    pub state: NetworkState,
    pub delta_f: T,
    pub g_part: T,
    pub h_part: T,
}

fn lyapunov<T: Scalar>(x: &NetworkState, params: &CsmaParams<T>, traffic: &TrafficSpec<T>) -> T {
    let mut f = T::zero();
    for k in 0..x.num_classes() {
        let xk = x.get(k);
        if xk > 0 {
            let xf = T::of(xk as f64);
            f += xf * traffic.mean_flow_size()[k] / params.phys_rate()[k] * (xf * params.alpha(k)).ln();
        }
    }
    f
}

/// `n log(1 + 1/n)`-type terms with `0 log 0 = 0`.
fn xlogx_ratio<T: Scalar>(coef: T, arg: T) -> T {
    if coef == T::zero() {
        T::zero()
    } else {
        coef * arg.ln()
    }
}

pub fn lyapunov_drift<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    traffic: &TrafficSpec<T>,
    spec: &NetworkSpec,
    policy: Policy,
) -> Result<DriftReport<T>> {
    let k = spec.num_classes();
    if traffic.num_classes() != k || state.num_classes() != k {
        return Err(Error::InvalidParams("state, traffic and network class counts differ".into()));
    }
    let phi = equilibrium(state, params, spec, policy)?.throughput;
    let f0 = lyapunov(state, params, traffic);
    let mut delta_f = T::zero();
    for c in 0..k {
        delta_f += traffic.arrival_rate()[c] * (lyapunov(&state.plus(c), params, traffic) - f0);
        if state.get(c) > 0 {
            delta_f += phi[c] / traffic.mean_flow_size()[c] * (lyapunov(&state.minus(c), params, traffic) - f0);
        }
    }
    let mut g = T::zero();
    let mut h = T::zero();
    for c in 0..k {
        let rho = traffic.load(c) / params.phys_rate()[c];
        let xk = state.get(c);
        if xk == 0 {
            h += rho * params.alpha(c).ln();
            continue;
        }
        let xf = T::of(xk as f64);
        g += (traffic.load(c) - phi[c]) / params.phys_rate()[c] * (xf * params.alpha(c)).ln();
        h += rho * (xf + T::one()) * (T::one() + T::one() / xf).ln();
        h += phi[c] / params.phys_rate()[c] * xlogx_ratio(xf - T::one(), T::one() - T::one() / xf);
    }
    Ok(DriftReport { state: state.clone(), delta_f, g_part: g, h_part: h })
}

/// Explicit bound on `|H(x)|`: `sum_k (rho_k / phi_k) max(2, |log alpha_k|) + K J`,
/// from `(x + 1) log(1 + 1/x) <= 2`, `|(x - 1) log(1 - 1/x)| <= 1` for
/// `x >= 1` and `phi_k(x) <= J phi_k`.
pub fn h_bound<T: Scalar>(params: &CsmaParams<T>, traffic: &TrafficSpec<T>, num_channels: usize) -> T {
    let mut b = T::zero();
    for k in 0..params.num_classes() {
        let rho = traffic.load(k) / params.phys_rate()[k];
        b += rho * T::of(2.0).max(params.alpha(k).ln().abs()) + T::of_usize(num_channels);
    }
    b
}

/// Result of a drift sweep over shells `|x| = s`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSweep {
    /// `(shell, states sampled, max drift, states with drift >= 0)`.
    pub shells: Vec<(u64, usize, f64, usize)>,
    /// Smallest shell from which every sampled state had negative drift;
    /// `None` if the outermost shell still has a nonnegative drift.
    pub threshold: Option<u64>,
    /// Largest `|H(x)|` seen and the explicit bound.
    pub max_abs_h: f64,
    pub h_bound: f64,
    /// Largest `|delta_f - g_part - h_part|`.
    pub max_identity_error: f64,
}

/// Evaluates the drift on the axis states `s e_k`, the balanced state and
/// `per_shell` random compositions of every shell size.
pub fn drift_sweep(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    policy: Policy,
    shells: &[u64],
    per_shell: usize,
    seed: u64,
) -> Result<DriftSweep> {
    let k = spec.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(shells.len());
    let mut max_h = 0.0f64;
    let mut max_err = 0.0f64;
    for &s in shells {
        let mut states = Vec::new();
        for c in 0..k {
            let mut v = vec![0u32; k];
            v[c] = s as u32;
            states.push(NetworkState::new(v));
        }
        let mut even = vec![(s / k as u64) as u32; k];
        for v in even.iter_mut().take((s % k as u64) as usize) {
            *v += 1;
        }
        states.push(NetworkState::new(even));
        for _ in 0..per_shell {
            let mut v = vec![0u32; k];
            for _ in 0..s {
                v[rng.random_range(0..k)] += 1;
            }
            states.push(NetworkState::new(v));
        }
        let mut worst = f64::NEG_INFINITY;
        let mut nonneg = 0;
        for x in &states {
            let d = lyapunov_drift(x, params, traffic, spec, policy)?;
            worst = worst.max(d.delta_f);
            if d.delta_f >= 0.0 {
                nonneg += 1;
            }
            max_h = max_h.max(d.h_part.abs());
            max_err = max_err.max((d.delta_f - d.g_part - d.h_part).abs());
        }
        rows.push((s, states.len(), worst, nonneg));
    }
    let mut threshold = None;
    for (i, row) in rows.iter().enumerate().rev() {
        if row.3 > 0 {
            threshold = rows.get(i + 1).map(|r| r.0);
            break;
        }
        if i == 0 {
            threshold = Some(row.0);
        }
    }
    Ok(DriftSweep {
        shells: rows,
        threshold,
        max_abs_h: max_h,
        h_bound: h_bound(params, traffic, spec.num_channels()),
        max_identity_error: max_err,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evidence {
    Stable,
    Unstable,
    Inconclusive,
}

impl Evidence {
    pub fn name(self) -> &'static str {
        match self {
            Evidence::Stable => "stable-evidence",
            Evidence::Unstable => "unstable-evidence",
            Evidence::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Thresholds for [`fluid_slope`].
#[derive(Clone, Debug)]
pub struct SlopeCriteria {
    pub horizon: f64,
    /// Expected service time of one flow, `max_k sigma_k / phi_k`.
    pub service_time: f64,
    /// Capacity margin of the load (`None` if unknown).
    pub margin: Option<f64>,
    pub initial_total: u64,
    pub min_service_times: f64,
    pub queue_factor: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

impl SlopeCriteria {
    pub fn new(horizon: f64, service_time: f64, margin: Option<f64>) -> Self {
        SlopeCriteria {
            horizon,
            service_time,
            margin,
            initial_total: 0,
            min_service_times: 1e4,
            queue_factor: 50.0,
            bootstrap: 2000,
            seed: 0,
        }
    }

    /// Queue-length scale `K r / (1 - r) + 1 + |x(0)|` with `r = 1 / (1 + margin)`.
    pub fn queue_bound(&self, num_classes: usize) -> f64 {
        match self.margin {
            Some(m) if m > 0.0 => {
                let r = 1.0 / (1.0 + m);
                num_classes as f64 * r / (1.0 - r) + 1.0 + self.initial_total as f64
            }
            _ => f64::NAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityVerdict {
    pub verdict: Evidence,
    /// Mean least-squares slope of `sum_k X_k(t)`, flows per unit time.
    pub slope: f64,
    pub ci: (f64, f64),
    pub per_class_slopes: Vec<f64>,
    pub max_time_average: f64,
    pub queue_bound: f64,
    pub aborted: usize,
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Least-squares growth rate of the total number of flows over the final
/// 60% of each trajectory, averaged over replications with a bootstrap CI.
///
/// Unstable evidence needs the CI strictly above zero. Stable evidence
/// needs a horizon of at least `min_service_times` service times, no
/// aborted run, and every time-averaged total below `queue_factor` times
/// [`SlopeCriteria::queue_bound`]. Anything else is inconclusive.
pub fn fluid_slope(trajectories: &[Trajectory], criteria: &SlopeCriteria) -> Result<StabilityVerdict> {
    if trajectories.len() < 5 {
        return Err(Error::Precondition(format!("need at least 5 replications, got {}", trajectories.len())));
    }
    let k = trajectories[0].final_state.num_classes();
    let mut totals = Vec::with_capacity(trajectories.len());
    let mut per_class = vec![0.0; k];
    for tr in trajectories {
        let end = tr.samples.last().map_or(0.0, |s| s.time);
        let window: Vec<_> = tr.samples.iter().filter(|s| s.time >= 0.4 * end).collect();
        if window.len() < 2 {
            return Err(Error::Precondition("trajectory has fewer than two samples in the fit window".into()));
        }
        totals.push(ls_slope(&window.iter().map(|s| (s.time, s.state.total() as f64)).collect::<Vec<_>>()));
        for (c, pc) in per_class.iter_mut().enumerate() {
            *pc += ls_slope(&window.iter().map(|s| (s.time, s.state.get(c) as f64)).collect::<Vec<_>>());
        }
    }
    let n = trajectories.len();
    for pc in per_class.iter_mut() {
        *pc /= n as f64;
    }
    let slope = totals.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(criteria.seed);
    let mut boots: Vec<f64> = (0..criteria.bootstrap.max(1))
        .map(|_| (0..n).map(|_| totals[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    boots.sort_by(f64::total_cmp);
    let q = |f: f64| boots[((boots.len() - 1) as f64 * f).round() as usize];
    let ci = (q(0.025), q(0.975));
    let aborted = trajectories.iter().filter(|t| t.aborted).count();
    let max_time_average = trajectories.iter().map(Trajectory::total_time_average).fold(0.0, f64::max);
    let queue_bound = criteria.queue_bound(k);
    let long_enough = criteria.horizon >= criteria.min_service_times * criteria.service_time;
    let verdict = if ci.0 > 0.0 {
        Evidence::Unstable
    } else if aborted == 0 && long_enough && max_time_average < criteria.queue_factor * queue_bound {
        Evidence::Stable
    } else {
        Evidence::Inconclusive
    };
    Ok(StabilityVerdict { verdict, slope, ci, per_class_slopes: per_class, max_time_average, queue_bound, aborted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{replicate, simulate_separated, SimConfig, ThroughputModel};
    use crate::library;
    use crate::topology::{ChannelGraph, Mode};

    #[test]
    fn drift_at_origin() {
        let spec = library::fig1();
        let p = CsmaParams::<f64>::homogeneous(&spec, 3.0).unwrap();
        let traffic = TrafficSpec::from_loads(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let d = lyapunov_drift(&NetworkState::zeros(4), &p, &traffic, &spec, Policy::AdHoc).unwrap();
        assert_eq!(d.g_part, 0.0);
        assert!((d.delta_f - 1.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_link_drift_turns_negative() {
        let spec = NetworkSpec::new(1, vec![ChannelGraph::complete_eligibility(1, [])], Mode::AdHoc).unwrap();
        let p = CsmaParams::<f64>::homogeneous(&spec, 1.0).unwrap();
        let traffic = TrafficSpec::from_loads(vec![0.5]).unwrap();
        for x in [50, 200, 1000] {
            let d = lyapunov_drift(&NetworkState::new(vec![x]), &p, &traffic, &spec, Policy::AdHoc).unwrap();
            assert!(d.delta_f < 0.0, "{x}: {}", d.delta_f);
            assert!((d.delta_f - d.g_part - d.h_part).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_and_h_bound_on_sweep() {
        let spec = library::fig1();
        let p = CsmaParams::<f64>::homogeneous(&spec, 2.0).unwrap();
        let traffic = TrafficSpec::from_loads(vec![0.2; 4]).unwrap();
        let s = drift_sweep(&spec, &p, &traffic, Policy::AdHoc, &[0, 1, 2, 5, 20, 60], 4, 1).unwrap();
        assert!(s.max_identity_error < 1e-10);
        assert!(s.max_abs_h <= s.h_bound);
        assert!(s.threshold.is_some());
    }

    #[test]
    fn drift_in_single_precision() {
        let spec = library::fig1();
        let p = CsmaParams::<f32>::homogeneous(&spec, 2.0).unwrap();
        let traffic = TrafficSpec::<f32>::from_loads(vec![0.2; 4]).unwrap();
        let d = lyapunov_drift(&NetworkState::new(vec![3, 0, 2, 1]), &p, &traffic, &spec, Policy::AdHoc).unwrap();
        assert!((d.delta_f - d.g_part - d.h_part).abs() < 1e-4);
    }

    fn mm1_runs(load: f64, horizon: f64) -> Vec<Trajectory> {
        let spec = NetworkSpec::new(1, vec![ChannelGraph::complete_eligibility(1, [])], Mode::AdHoc).unwrap();
        let p = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        let traffic = TrafficSpec::from_loads(vec![load]).unwrap();
        let model = ThroughputModel::Custom(std::sync::Arc::new(|x: &NetworkState| vec![if x.get(0) > 0 { 1.0 } else { 0.0 }]));
        let cfg = SimConfig::new(Policy::AdHoc, NetworkState::zeros(1), horizon, 5).with_uniform_samples(200);
        replicate(&cfg, 6, |c| simulate_separated(&spec, &p, &traffic, c, &model)).unwrap()
    }

    #[test]
    fn slope_verdicts() {
        let runs = mm1_runs(1.5, 2000.0);
        let v = fluid_slope(&runs, &SlopeCriteria::new(2000.0, 1.0, Some(-0.33))).unwrap();
        assert_eq!(v.verdict, Evidence::Unstable);
        assert!((v.slope - 0.5).abs() < 0.1, "{}", v.slope);
        let runs = mm1_runs(0.5, 1e4);
        let v = fluid_slope(&runs, &SlopeCriteria::new(1e4, 1.0, Some(1.0))).unwrap();
        assert_eq!(v.verdict, Evidence::Stable);
        let v = fluid_slope(&runs, &SlopeCriteria::new(1e4, 1.0, None)).unwrap();
        assert_eq!(v.verdict, Evidence::Inconclusive);
        assert!(fluid_slope(&runs[..4], &SlopeCriteria::new(1e4, 1.0, None)).is_err());
    }

    #[test]
    fn no_arrivals_is_stable() {
        let runs = mm1_runs(0.0, 1e4);
        let v = fluid_slope(&runs, &SlopeCriteria::new(1e4, 1.0, Some(f64::INFINITY))).unwrap();
        assert!(v.slope <= 0.0);
        assert_eq!(v.verdict, Evidence::Stable);
    }
}
