//! Packet-level equilibrium: product-form stationary measures of the
//! schedule process, the resulting distributions and per-class throughputs.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};
use crate::schedule::{enumerate_feasible, weight_u, max_weight, NetworkState, Schedule, WeightDomain};
use crate::topology::{CsmaParams, NetworkSpec};

/// Random-access variant run by the transmitters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Every link runs its own CSMA instance.
    AdHoc,
    /// Each access point runs one CSMA instance for all its downlink flows
    /// and picks the flow class in proportion to `x_k`.
    StandardInfra,
    /// Each access point runs one CSMA instance per downlink flow.
    FlowAware,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::AdHoc, Policy::StandardInfra, Policy::FlowAware];

    pub fn name(self) -> &'static str {
        match self {
            Policy::AdHoc => "adhoc",
            Policy::StandardInfra => "standard_infra",
            Policy::FlowAware => "flow_aware",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adhoc" | "ad-hoc" | "ad_hoc" => Ok(Policy::AdHoc),
            "standard_infra" | "standard-infra" | "standard" => Ok(Policy::StandardInfra),
            "flow_aware" | "flow-aware" => Ok(Policy::FlowAware),
            other => Err(Error::Parse(format!("unknown policy {other:?}"))),
        }
    }

    /// Standard CSMA with per-access-point instances needs infrastructure mode.
    pub fn check(self, spec: &NetworkSpec) -> Result<()> {
        if self == Policy::StandardInfra && !spec.is_infrastructure() {
            return Err(Error::Precondition("standard infrastructure CSMA needs access points".into()));
        }
        Ok(())
    }

    /// Checks the policy against the parameters: under standard CSMA the
    /// downlink classes of one access point share the attempt rate.
    pub fn check_params<T: Scalar>(self, spec: &NetworkSpec, params: &CsmaParams<T>) -> Result<()> {
        self.check(spec)?;
        if self == Policy::StandardInfra {
            for (i, ap) in spec.access_points().iter().enumerate() {
                if let Some(&first) = ap.downlink.first() {
                    let nu = params.attempt_rate()[first];
                    if ap.downlink.iter().any(|&k| (params.attempt_rate()[k] - nu).abs() > T::of(1e-12) * nu) {
                        return Err(Error::InvalidParams(format!(
                            "access point {}: downlink classes must share one attempt rate",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether class `k`'s downlink traffic shares one CSMA instance with
    /// the other downlink classes of its access point.
    pub(crate) fn downlink_aggregated(self, spec: &NetworkSpec, k: usize) -> bool {
        self == Policy::StandardInfra && spec.downlink_owner(k).is_some()
    }

    /// Rate of the packet-level transition `y -> y + e_kj`, assuming the
    /// target schedule is feasible.
    pub fn activation_rate<T: Scalar>(
        self,
        spec: &NetworkSpec,
        params: &CsmaParams<T>,
        state: &NetworkState,
        sched: &Schedule,
        k: usize,
        j: usize,
    ) -> T {
        let nu_beta = params.attempt_rate()[k] * params.probe_prob()[k][j];
        if self.downlink_aggregated(spec, k) {
            let i = spec.downlink_owner(k).expect("downlink class");
            let total: u64 = spec.access_points()[i].downlink.iter().map(|&c| state.get(c) as u64).sum();
            nu_beta * T::of(state.get(k) as f64) / T::of(total as f64)
        } else {
            nu_beta * T::of((state.get(k) - sched.per_class(k)) as f64)
        }
    }
}

fn class_log_term<T: Scalar>(params: &CsmaParams<T>, sched: &Schedule, k: usize, xk: u32) -> T {
    let yk = sched.per_class(k);
    let mut acc = T::ln_falling(xk as u64, yk as u64) + T::of(yk as f64) * params.alpha(k).ln();
    for j in 0..sched.num_channels() {
        if sched.is_active(k, j) {
            acc += params.probe_prob()[k][j].ln();
        }
    }
    acc
}

/// Log of the ad-hoc product-form measure
/// `w(x, y) = prod_{k : x_k > 0} x_k!/(x_k - y_k)! alpha_k^{y_k} prod_j beta_kj^{y_kj}`.
///
/// Also the measure of flow-aware CSMA, over its own feasible set.
pub fn stationary_measure_adhoc<T: Scalar>(state: &NetworkState, params: &CsmaParams<T>, sched: &Schedule) -> T {
    let mut acc = T::zero();
    for k in 0..state.num_classes() {
        let xk = state.get(k);
        if xk > 0 {
            acc += class_log_term(params, sched, k, xk);
        }
    }
    acc
}

/// Log of the standard infrastructure measure.
///
/// Uplink (and unattached) classes carry the ad-hoc factor. The downlink
/// classes of access point `i`, with `X_i = sum_{D_i} x`, contribute
/// `X_i! prod_{k in D_i, x_k > 0} (x_k / X_i)^{y_k} alpha_k^{y_k} / x_k! prod_j beta_kj^{y_kj}`.
/// The `(x_k / X_i)^{y_k}` factor is what the class-selection rate
/// `x_k / X_i nu_k beta_kj` requires for local balance; it equals one
/// whenever a single downlink class of the access point has flows.
pub fn stationary_measure_standard_infra<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    sched: &Schedule,
) -> T {
    standard_infra_terms(state, params, spec, sched, true)
}

fn standard_infra_terms<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    sched: &Schedule,
    with_state_factors: bool,
) -> T {
    let mut acc = T::zero();
    for k in 0..state.num_classes() {
        let xk = state.get(k);
        if xk == 0 {
            continue;
        }
        if spec.downlink_owner(k).is_none() {
            acc += class_log_term(params, sched, k, xk);
            continue;
        }
        let yk = sched.per_class(k);
        if yk > 0 {
            let i = spec.downlink_owner(k).expect("downlink class");
            let total: u64 = spec.access_points()[i].downlink.iter().map(|&c| state.get(c) as u64).sum();
            acc += T::of(yk as f64) * (params.alpha(k) * T::of(xk as f64) / T::of(total as f64)).ln();
        }
        for j in 0..sched.num_channels() {
            if sched.is_active(k, j) {
                acc += params.probe_prob()[k][j].ln();
            }
        }
        if with_state_factors {
            acc -= T::ln_factorial(xk as u64);
        }
    }
    if with_state_factors {
        for ap in spec.access_points() {
            let total: u64 = ap.downlink.iter().map(|&k| state.get(k) as u64).sum();
            acc += T::ln_factorial(total);
        }
    }
    acc
}

/// Full log measure of `policy` for one schedule.
pub fn log_measure<T: Scalar>(
    policy: Policy,
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    sched: &Schedule,
) -> T {
    match policy {
        Policy::AdHoc | Policy::FlowAware => stationary_measure_adhoc(state, params, sched),
        Policy::StandardInfra => stationary_measure_standard_infra(state, params, spec, sched),
    }
}

/// Log measure with the factors depending on `x` alone dropped; it
/// normalizes to the same distribution.
pub fn log_measure_reduced<T: Scalar>(
    policy: Policy,
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    sched: &Schedule,
) -> T {
    match policy {
        Policy::AdHoc | Policy::FlowAware => stationary_measure_adhoc(state, params, sched),
        Policy::StandardInfra => standard_infra_terms(state, params, spec, sched, false),
    }
}

/// Stationary schedule distribution and throughputs in one state.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumResult<T> {
    pub schedules: Vec<Schedule>,
    pub probabilities: Vec<T>,
    /// `phi_k(x)`, bit/s.
    pub throughput: Vec<T>,
    /// `ln sum_y w(x, y)` for the full measure.
    pub log_normalizer: T,
}

impl<T: Scalar> EquilibriumResult<T> {
    pub fn probability_of(&self, sched: &Schedule) -> T {
        self.schedules
            .binary_search(sched)
            .map_or(T::zero(), |i| self.probabilities[i])
    }

    /// `schedule,probability` rows with the flattened class-major matrix as id.
    pub fn distribution_csv(&self) -> String {
        let mut out = String::from("schedule,probability\n");
        for (s, p) in self.schedules.iter().zip(&self.probabilities) {
            let _ = writeln!(out, "{},{:e}", s.flat_key(), p.as_f64());
        }
        out
    }

    /// Header `phi_1,...,phi_K` and one row of throughputs.
    pub fn throughput_csv(&self) -> String {
        throughput_row_csv(&self.throughput)
    }
}

/// Header `phi_1,...,phi_K` and one row with the given values.
pub fn throughput_row_csv<T: Scalar>(values: &[T]) -> String {
    let header: Vec<String> = (1..=values.len()).map(|k| format!("phi_{k}")).collect();
    let row: Vec<String> = values.iter().map(|v| v.as_f64().to_string()).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

/// Normalizes the policy's measure over `Y(x)` and computes throughputs
/// `phi_k(x) = phi_k sum_y y_k pi(x, y)`.
pub fn equilibrium<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    policy: Policy,
) -> Result<EquilibriumResult<T>> {
    policy.check_params(spec, params)?;
    let schedules = enumerate_feasible(spec, Some(state))?;
    let reduced: Vec<T> = schedules
        .iter()
        .map(|s| log_measure_reduced(policy, state, params, spec, s))
        .collect();
    let log_z_reduced = log_sum_exp(&reduced);
    let probabilities: Vec<T> = reduced.iter().map(|&w| (w - log_z_reduced).exp()).collect();
    let full: Vec<T> = schedules
        .iter()
        .map(|s| log_measure(policy, state, params, spec, s))
        .collect();
    let log_normalizer = log_sum_exp(&full);
    let mut throughput = vec![T::zero(); spec.num_classes()];
    for (s, &p) in schedules.iter().zip(&probabilities) {
        for (k, t) in throughput.iter_mut().enumerate() {
            let yk = s.per_class(k);
            if yk > 0 {
                *t += T::of(yk as f64) * p;
            }
        }
    }
    for (k, t) in throughput.iter_mut().enumerate() {
        *t *= params.phys_rate()[k];
    }
    Ok(EquilibriumResult {
        schedules,
        probabilities,
        throughput,
        log_normalizer,
    })
}

/// Largest relative residual of the local balance equations
/// `w(y) q(y -> y + e_kj) = w(y + e_kj) phi_k` over all feasible pairs,
/// using the policy's full measure.
pub fn detailed_balance_check<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    policy: Policy,
) -> Result<T> {
    policy.check_params(spec, params)?;
    let schedules = enumerate_feasible(spec, Some(state))?;
    let weights: Vec<T> = schedules
        .iter()
        .map(|s| log_measure(policy, state, params, spec, s))
        .collect();
    Ok(detailed_balance_residual(state, params, spec, policy, &schedules, &weights))
}

/// Local balance residual for arbitrary log weights over `schedules`.
pub fn detailed_balance_residual<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    policy: Policy,
    schedules: &[Schedule],
    log_weights: &[T],
) -> T {
    let index: HashMap<&Schedule, usize> = schedules.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut worst = T::zero();
    for (i, y) in schedules.iter().enumerate() {
        for k in 0..spec.num_classes() {
            for j in 0..spec.num_channels() {
                if !y.can_activate(spec, k, j, state.get(k)) {
                    continue;
                }
                let up = y.with(k, j, true);
                let Some(&u) = index.get(&up) else { continue };
                let lhs = log_weights[i] + policy.activation_rate(spec, params, state, y, k, j).ln();
                let rhs = log_weights[u] + params.phys_rate()[k].ln();
                let r = T::one() - (-(lhs - rhs).abs()).exp();
                if r > worst {
                    worst = r;
                }
            }
        }
    }
    worst
}

/// Both sides of `sum_y pi(x, y) ln u(x, y) >= (1 - eps) ln u(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

pub fn lemma1_check<T: Scalar>(
    state: &NetworkState,
    params: &CsmaParams<T>,
    spec: &NetworkSpec,
    epsilon: T,
    policy: Policy,
) -> Result<Lemma1Report<T>> {
    if policy == Policy::StandardInfra {
        return Err(Error::Precondition("the concentration check applies to ad-hoc and flow-aware CSMA".into()));
    }
    let eq = equilibrium(state, params, spec, policy)?;
    let mut lhs = T::zero();
    for (s, &p) in eq.schedules.iter().zip(&eq.probabilities) {
        lhs += p * weight_u(state, s, params);
    }
    let (log_u, _) = max_weight(spec, state, params, WeightDomain::Restricted)?;
    let rhs = (T::one() - epsilon) * log_u;
    let tol = T::of(1e-12) * T::one().max(rhs.abs());
    Ok(Lemma1Report {
        lhs,
        rhs,
        holds: lhs >= rhs - tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library;
    use crate::topology::{AccessPoint, ChannelGraph, Mode};

    fn one_link(j: usize, alpha: f64) -> (NetworkSpec, CsmaParams<f64>) {
        let spec = NetworkSpec::replicated(1, j, ChannelGraph::complete_eligibility(1, []), Mode::AdHoc).unwrap();
        (spec.clone(), CsmaParams::homogeneous(&spec, alpha).unwrap())
    }

    #[test]
    fn adhoc_measure_examples() {
        let (_, p) = one_link(1, 2.0);
        let x = NetworkState::new(vec![3]);
        assert_eq!(stationary_measure_adhoc(&x, &p, &Schedule::empty(1, 1)), 0.0);
        let w = stationary_measure_adhoc(&x, &p, &Schedule::from_channel_sets(1, &[&[0]])).exp();
        assert!((w - 6.0).abs() < 1e-12);

        let (_, p2) = one_link(2, 1.0);
        let x2 = NetworkState::new(vec![2]);
        for s in [Schedule::from_channel_sets(1, &[&[0], &[]]), Schedule::from_channel_sets(1, &[&[], &[0]])] {
            assert!(stationary_measure_adhoc(&x2, &p2, &s).abs() < 1e-14);
        }
    }

    fn single_ap(alpha: f64) -> (NetworkSpec, CsmaParams<f64>) {
        let spec = NetworkSpec::validated(
            1,
            vec![ChannelGraph::complete_eligibility(1, [])],
            Mode::Infrastructure {
                access_points: vec![AccessPoint::new([], [0])],
            },
        )
        .unwrap();
        (spec.clone(), CsmaParams::homogeneous(&spec, alpha).unwrap())
    }

    #[test]
    fn standard_downlink_ratio_is_alpha_for_any_backlog() {
        let (spec, p) = single_ap(2.5);
        for n in [1u32, 2, 7, 400] {
            let eq = equilibrium(&NetworkState::new(vec![n]), &p, &spec, Policy::StandardInfra).unwrap();
            assert_eq!(eq.schedules.len(), 2);
            assert!((eq.probabilities[1] / eq.probabilities[0] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_state_has_only_the_empty_schedule() {
        let spec = library::bowtie();
        let p = CsmaParams::homogeneous(&spec, 3.0).unwrap();
        for policy in [Policy::StandardInfra, Policy::FlowAware] {
            let eq = equilibrium(&NetworkState::zeros(5), &p, &spec, policy).unwrap();
            assert_eq!(eq.schedules.len(), 1);
            assert_eq!(eq.probabilities, vec![1.0]);
            assert!(eq.throughput.iter().all(|&t| t == 0.0));
        }
    }

    #[test]
    fn single_link_half_activity() {
        let (spec, p) = one_link(1, 1.0);
        let eq = equilibrium(&NetworkState::new(vec![1]), &p, &spec, Policy::AdHoc).unwrap();
        assert!((eq.probabilities[1] - 0.5).abs() < 1e-15);
        assert!((eq.throughput[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reduced_and_full_measures_agree() {
        let spec = library::fig3();
        let p = CsmaParams::homogeneous(&spec, 1.7).unwrap();
        let x = NetworkState::new(vec![3, 1, 2, 0, 4, 5]);
        let sch = enumerate_feasible(&spec, Some(&x)).unwrap();
        let full: Vec<f64> = sch.iter().map(|s| log_measure(Policy::StandardInfra, &x, &p, &spec, s)).collect();
        let z = log_sum_exp(&full);
        let eq = equilibrium(&x, &p, &spec, Policy::StandardInfra).unwrap();
        for (f, q) in full.iter().zip(&eq.probabilities) {
            assert!(((f - z).exp() - q).abs() < 1e-12);
        }
        assert!((eq.log_normalizer - z).abs() < 1e-12);
    }

    #[test]
    fn bowtie_large_alpha_concentrates_on_limit() {
        let spec = library::bowtie();
        let p = CsmaParams::<f64>::homogeneous(&spec, 1e6).unwrap();
        let x = NetworkState::new(vec![1, 1, 1, 1, 1]);
        let eq = equilibrium(&x, &p, &spec, Policy::StandardInfra).unwrap();
        let lim = crate::schedule::alpha_limit_distribution(&spec, &x, &p, Policy::StandardInfra).unwrap();
        let lt: Vec<f64> = lim.throughput(&p);
        for k in 0..5 {
            assert!((eq.throughput[k] - lt[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn policies_coincide_with_at_most_one_flow_per_downlink_class() {
        let spec = library::bowtie();
        let p = CsmaParams::<f64>::homogeneous(&spec, 0.8).unwrap();
        let x = NetworkState::new(vec![1, 0, 1, 1, 1]);
        let a = equilibrium(&x, &p, &spec, Policy::StandardInfra).unwrap();
        let b = equilibrium(&x, &p, &spec, Policy::FlowAware).unwrap();
        assert_eq!(a.schedules, b.schedules);
        for (pa, pb) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((pa - pb).abs() < 1e-15);
        }
    }

    #[test]
    fn balance_holds_and_detects_corruption() {
        let spec = library::fig3();
        let p = CsmaParams::uniform(&spec, vec![1.0, 2.0, 1.0, 1.5, 0.5, 1.5], vec![0.7, 1.3, 0.7, 2.0, 0.4, 2.0]).unwrap();
        let x = NetworkState::new(vec![2, 1, 3, 1, 2, 2]);
        for policy in Policy::ALL {
            let r = detailed_balance_check(&x, &p, &spec, policy).unwrap();
            assert!(r < 1e-10, "{policy:?}: {r}");
        }
        let sch = enumerate_feasible(&spec, Some(&x)).unwrap();
        let mut w: Vec<f64> = sch.iter().map(|s| log_measure(Policy::AdHoc, &x, &p, &spec, s)).collect();
        w[3] += 1.01f64.ln();
        let r = detailed_balance_residual(&x, &p, &spec, Policy::AdHoc, &sch, &w);
        assert!(r >= 5e-3);
    }

    #[test]
    fn standard_infra_rejects_unequal_downlink_attempt_rates() {
        let spec = library::fig3();
        let p = CsmaParams::uniform(&spec, vec![1.0; 6], vec![1.0, 1.0, 2.0, 1.0, 1.0, 1.0]).unwrap();
        let err = equilibrium(&NetworkState::new(vec![1; 6]), &p, &spec, Policy::StandardInfra);
        assert!(matches!(err, Err(Error::InvalidParams(_))));
    }

    #[test]
    fn lemma1_examples() {
        let spec = library::fig1();
        let p = CsmaParams::homogeneous(&spec, 1.0).unwrap();
        let r = lemma1_check(&NetworkState::zeros(4), &p, &spec, 0.1, Policy::AdHoc).unwrap();
        assert_eq!((r.lhs, r.rhs, r.holds), (0.0, 0.0, true));

        let (spec1, p1) = one_link(1, 1.0);
        let r = lemma1_check(&NetworkState::new(vec![1000]), &p1, &spec1, 0.1, Policy::AdHoc).unwrap();
        // pi(active) = 1000/1001, u(x) = 1000.
        assert!((r.lhs - 1000.0 / 1001.0 * 1000f64.ln()).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn single_precision_equilibrium() {
        let spec = library::bowtie();
        let p = CsmaParams::<f32>::homogeneous(&spec, 2.0).unwrap();
        let eq = equilibrium(&NetworkState::new(vec![1, 2, 1, 0, 3]), &p, &spec, Policy::FlowAware).unwrap();
        let total: f32 = eq.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
        let eq64 = equilibrium(&NetworkState::new(vec![1, 2, 1, 0, 3]), &p.cast::<f64>(), &spec, Policy::FlowAware).unwrap();
        for (a, b) in eq.throughput.iter().zip(&eq64.throughput) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }
}
