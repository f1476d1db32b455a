use super::{enumerate_feasible, NetworkState, Schedule};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::topology::{CsmaParams, NetworkSpec};

/// `ln u(x, y) = sum_{k : x_k > 0} y_k ln(x_k alpha_k)`.
pub fn weight_u<T: Scalar>(state: &NetworkState, sched: &Schedule, params: &CsmaParams<T>) -> T {
    let mut acc = T::zero();
    for k in 0..state.num_classes() {
        let xk = state.get(k);
        let yk = sched.per_class(k);
        if xk > 0 && yk > 0 {
            acc += T::of(yk as f64) * (T::of(xk as f64) * params.alpha(k)).ln();
        }
    }
    acc
}

/// Which schedule set the maximum runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightDomain {
    /// `Y(x)`: gives `u(x)`.
    Restricted,
    /// `Y`: gives `v(x)`.
    Unrestricted,
}

/// Maximum of `ln u(x, y)` over the chosen domain. Ties go to the
/// lexicographically largest schedule.
pub fn max_weight<T: Scalar>(
    spec: &NetworkSpec,
    state: &NetworkState,
    params: &CsmaParams<T>,
    over: WeightDomain,
) -> Result<(T, Schedule)> {
    let set = match over {
        WeightDomain::Restricted => enumerate_feasible(spec, Some(state))?,
        WeightDomain::Unrestricted => enumerate_feasible(spec, None)?,
    };
    let mut best: Option<(T, Schedule)> = None;
    for s in set {
        let w = weight_u(state, &s, params);
        // Enumeration is ascending, so `>=` keeps the largest among ties.
        if best.as_ref().is_none_or(|(bw, _)| w >= *bw) {
            best = Some((w, s));
        }
    }
    Ok(best.expect("the empty schedule is always feasible"))
}

/// Constructive bound on `ln v(x) - ln u(x)`, namely `ln(M / m)` where
/// `m <= u(x, y) / v(x, y) <= M` over all `y` in `Y` and all states.
///
/// The ratio only involves classes with `0 < x_k < J`, each contributing
/// `(x_k alpha_k)^{y_k}` with `1 <= x_k <= J - 1` and `y_k <= J`.
pub fn lemma2_log_bound<T: Scalar>(params: &CsmaParams<T>, num_channels: usize) -> T {
    if num_channels <= 1 {
        return T::zero();
    }
    let j = T::of_usize(num_channels);
    let jm1 = T::of_usize(num_channels - 1);
    let mut log_upper = T::zero();
    let mut log_lower = T::zero();
    for k in 0..params.num_classes() {
        let a = params.alpha(k);
        log_upper += j * (jm1 * a).max(T::one()).ln();
        log_lower += j * a.min(T::one()).ln();
    }
    log_upper - log_lower
}

/// `ln v(x) - ln u(x)`.
pub fn log_v_minus_log_u<T: Scalar>(spec: &NetworkSpec, state: &NetworkState, params: &CsmaParams<T>) -> Result<T> {
    let (u, _) = max_weight(spec, state, params, WeightDomain::Restricted)?;
    let (v, _) = max_weight(spec, state, params, WeightDomain::Unrestricted)?;
    Ok(v - u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library;
    use crate::topology::{ChannelGraph, Mode};
    use proptest::prelude::*;

    fn one_class(j: usize, alpha: f64) -> (NetworkSpec, CsmaParams<f64>) {
        let spec = NetworkSpec::replicated(1, j, ChannelGraph::complete_eligibility(1, []), Mode::AdHoc).unwrap();
        let p = CsmaParams::homogeneous(&spec, alpha).unwrap();
        (spec, p)
    }

    #[test]
    fn weight_examples() {
        let (spec, p) = one_class(1, 3.0);
        let x = NetworkState::new(vec![2]);
        assert_eq!(weight_u(&x, &Schedule::empty(1, 1), &p), 0.0);
        let y = Schedule::from_channel_sets(1, &[&[0]]);
        assert!((weight_u(&x, &y, &p) - 6f64.ln()).abs() < 1e-15);

        let spec2 = NetworkSpec::replicated(2, 2, ChannelGraph::complete_eligibility(2, []), Mode::AdHoc).unwrap();
        let p2 = CsmaParams::homogeneous(&spec2, 1.0).unwrap();
        let x2 = NetworkState::new(vec![2, 5]);
        let y2 = Schedule::from_channel_sets(2, &[&[0, 1], &[1]]);
        assert!((weight_u(&x2, &y2, &p2) - 50f64.ln()).abs() < 1e-14);
        let _ = spec;
    }

    #[test]
    fn max_weight_zero_state() {
        let spec = library::bowtie();
        let p = CsmaParams::homogeneous(&spec, 2.0).unwrap();
        let (w, s) = max_weight(&spec, &NetworkState::zeros(5), &p, WeightDomain::Restricted).unwrap();
        assert_eq!(w, 0.0);
        assert!(s.is_empty());
    }

    #[test]
    fn max_weight_tie_break_prefers_first_channel() {
        let (spec, p) = one_class(2, 2.0);
        // One link: both single-channel schedules weigh 2.
        let (w, s) = max_weight(&spec, &NetworkState::new(vec![1]), &p, WeightDomain::Restricted).unwrap();
        assert!((w - 2f64.ln()).abs() < 1e-14);
        assert!(s.is_active(0, 0) && !s.is_active(0, 1));
        // Five links may occupy both channels: u = 10^2.
        let (w, s) = max_weight(&spec, &NetworkState::new(vec![5]), &p, WeightDomain::Restricted).unwrap();
        assert!((w - 2.0 * 10f64.ln()).abs() < 1e-14);
        assert_eq!(s.per_class(0), 2);
    }

    #[test]
    fn u_equals_v_when_every_class_has_j_flows() {
        let spec = library::fig1();
        let p = CsmaParams::homogeneous(&spec, 1.5).unwrap();
        let x = NetworkState::new(vec![2, 3, 7, 2]);
        assert_eq!(log_v_minus_log_u(&spec, &x, &p).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn lemma2_bound_holds(xs in proptest::collection::vec(0u32..6, 4), a in 0.2f64..4.0) {
            let spec = library::fig1();
            let p = CsmaParams::homogeneous(&spec, a).unwrap();
            let gap = log_v_minus_log_u(&spec, &NetworkState::new(xs), &p).unwrap();
            prop_assert!(gap >= -1e-12);
            prop_assert!(gap <= lemma2_log_bound(&p, 2) + 1e-12);
        }

        #[test]
        fn common_alpha_scaling_shifts_by_size(xs in proptest::collection::vec(1u32..6, 4), c in 0.3f64..5.0) {
            let spec = library::fig1();
            let p = CsmaParams::homogeneous(&spec, 1.3).unwrap();
            let q = p.with_alpha(1.3 * c);
            let x = NetworkState::new(xs);
            let set = enumerate_feasible(&spec, Some(&x)).unwrap();
            for s in &set {
                let shift = weight_u(&x, s, &q) - weight_u(&x, s, &p);
                prop_assert!((shift - s.size() as f64 * c.ln()).abs() < 1e-9);
            }
            // Maximizers among schedules of one size do not move.
            for size in 0..=8u32 {
                let group: Vec<&Schedule> = set.iter().filter(|s| s.size() == size).collect();
                if group.is_empty() { continue; }
                let best = |pp: &CsmaParams<f64>| {
                    let m = group.iter().map(|s| weight_u(&x, s, pp)).fold(f64::NEG_INFINITY, f64::max);
                    group.iter().filter(|s| weight_u(&x, s, pp) > m - 1e-9).map(|s| (*s).clone()).collect::<Vec<_>>()
                };
                prop_assert_eq!(best(&p), best(&q));
            }
        }
    }
}
