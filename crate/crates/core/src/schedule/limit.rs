use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{enumerate_feasible, NetworkState, Schedule};
use crate::equilibrium::Policy;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::{CsmaParams, NetworkSpec};

/// Exact schedule distribution in the limit of infinite attempt rates.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaLimit {
    pub schedules: Vec<Schedule>,
    pub probabilities: Vec<BigRational>,
}

impl AlphaLimit {
    /// `E[y_k]` for every class, exactly.
    pub fn marginals(&self) -> Vec<BigRational> {
        let kk = self.schedules.first().map_or(0, Schedule::num_classes);
        let mut m = vec![BigRational::zero(); kk];
        for (s, p) in self.schedules.iter().zip(&self.probabilities) {
            for (k, mk) in m.iter_mut().enumerate() {
                let yk = s.per_class(k);
                if yk > 0 {
                    *mk += p * BigRational::from_integer(BigInt::from(yk));
                }
            }
        }
        m
    }

    pub fn probabilities_f64(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Throughput `phi_k E[y_k]` in floating point.
    pub fn throughput<T: Scalar>(&self, params: &CsmaParams<T>) -> Vec<T> {
        self.marginals()
            .iter()
            .enumerate()
            .map(|(k, m)| params.phys_rate()[k] * T::of(m.to_f64().unwrap_or(f64::NAN)))
            .collect()
    }
}

fn exact(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::InvalidParams(format!("non-finite probe probability {v}")))
}

/// Limit of the stationary schedule distribution as every `alpha_k` grows
/// at a common rate.
///
/// Only schedules of maximal size survive; their masses are proportional
/// to the factors of the stationary measure that do not involve `alpha`
/// (probe probabilities, falling factorials for per-link instances, and
/// the backlog share `x_k / X_i` for aggregated downlink classes). Unequal `alpha_k` are rejected.
pub fn alpha_limit_distribution<T: Scalar>(
    spec: &NetworkSpec,
    state: &NetworkState,
    params: &CsmaParams<T>,
    policy: Policy,
) -> Result<AlphaLimit> {
    policy.check(spec)?;
    let a0 = params.alpha(0);
    if (0..params.num_classes()).any(|k| ((params.alpha(k) - a0) / a0).abs() > T::of(1e-12)) {
        return Err(Error::Precondition(
            "infinite-attempt-rate limit requires equal alpha for all classes".into(),
        ));
    }
    let all = enumerate_feasible(spec, Some(state))?;
    let top = all.iter().map(Schedule::size).max().unwrap_or(0);
    let beta: Vec<Vec<BigRational>> = params
        .probe_prob()
        .iter()
        .map(|row| row.iter().map(|b| exact(b.as_f64())).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut schedules = Vec::new();
    let mut masses = Vec::new();
    for s in all.into_iter().filter(|s| s.size() == top) {
        let mut w = BigRational::one();
        for k in 0..spec.num_classes() {
            let yk = s.per_class(k) as u64;
            if yk == 0 {
                continue;
            }
            let xk = state.get(k) as u64;
            if policy.downlink_aggregated(spec, k) {
                // Class selection in proportion to backlog: (x_k / X_i)^{y_k}.
                let i = spec.downlink_owner(k).expect("downlink class");
                let total: u64 = spec.access_points()[i].downlink.iter().map(|&c| state.get(c) as u64).sum();
                for _ in 0..yk {
                    w *= BigRational::new(BigInt::from(xk), BigInt::from(total));
                }
            } else {
                for i in 0..yk {
                    w *= BigRational::from_integer(BigInt::from(xk - i));
                }
            }
            for (j, bj) in beta[k].iter().enumerate() {
                if s.is_active(k, j) {
                    w *= bj;
                }
            }
        }
        schedules.push(s);
        masses.push(w);
    }
    let total: BigRational = masses.iter().fold(BigRational::zero(), |a, b| a + b);
    let probabilities = masses.into_iter().map(|m| m / &total).collect();
    Ok(AlphaLimit { schedules, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library;
    use crate::topology::{ChannelGraph, Mode};

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn bowtie_four_active_rows() {
        let spec = library::bowtie();
        let p = CsmaParams::<f64>::homogeneous(&spec, 1.0).unwrap();
        let lim = alpha_limit_distribution(&spec, &NetworkState::new(vec![1, 1, 1, 1, 0]), &p, Policy::StandardInfra)
            .unwrap();
        assert_eq!(lim.schedules.len(), 8);
        assert_eq!(lim.marginals(), vec![r(3, 4), r(3, 4), r(1, 2), r(1, 1), r(0, 1)]);

        let lim = alpha_limit_distribution(&spec, &NetworkState::new(vec![4, 2, 0, 7, 1]), &p, Policy::StandardInfra)
            .unwrap();
        assert_eq!(lim.marginals(), vec![r(1, 1), r(1, 1), r(0, 1), r(1, 1), r(1, 1)]);
    }

    #[test]
    fn single_class_point_mass() {
        let spec = NetworkSpec::new(1, vec![ChannelGraph::complete_eligibility(1, [])], Mode::AdHoc).unwrap();
        let p = CsmaParams::<f64>::homogeneous(&spec, 5.0).unwrap();
        let lim = alpha_limit_distribution(&spec, &NetworkState::new(vec![3]), &p, Policy::AdHoc).unwrap();
        assert_eq!(lim.schedules, vec![Schedule::from_channel_sets(1, &[&[0]])]);
        assert_eq!(lim.probabilities, vec![r(1, 1)]);
    }

    #[test]
    fn unequal_alpha_rejected() {
        let spec = library::fig4();
        let p = CsmaParams::<f64>::uniform(&spec, vec![1.0; 3], vec![1.0, 2.0, 1.0]).unwrap();
        let err = alpha_limit_distribution(&spec, &NetworkState::new(vec![1, 1, 1]), &p, Policy::StandardInfra);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn support_does_not_depend_on_probing() {
        let spec = library::bowtie();
        let uniform = CsmaParams::<f64>::homogeneous(&spec, 1.0).unwrap();
        let skewed =
            CsmaParams::new(&spec, vec![1.0; 5], vec![1.0; 5], vec![vec![0.2, 0.8], vec![0.7, 0.3], vec![0.5, 0.5], vec![0.9, 0.1], vec![0.4, 0.6]])
                .unwrap();
        for x in [vec![1, 1, 1, 1, 0], vec![3, 1, 2, 0, 0], vec![1, 1, 1, 1, 1]] {
            let x = NetworkState::new(x);
            for policy in [Policy::StandardInfra, Policy::FlowAware] {
                let a = alpha_limit_distribution(&spec, &x, &uniform, policy).unwrap();
                let b = alpha_limit_distribution(&spec, &x, &skewed, policy).unwrap();
                assert_eq!(a.schedules, b.schedules);
            }
        }
    }
}
