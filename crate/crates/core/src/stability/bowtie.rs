use std::fmt::Write as _;
use std::sync::Arc;

use crate::dynamics::{simulate_coupled, simulate_separated, CouplingReport, SimConfig, ThroughputModel};
use crate::equilibrium::Policy;
use crate::error::Result;
use crate::library;
use crate::schedule::{alpha_limit_distribution, NetworkState};
use crate::topology::{CsmaParams, TrafficSpec};

const EDGES: [usize; 4] = [0, 1, 3, 4];
const CENTRE: usize = 2;

/// Critical centre load of standard CSMA: the network is unstable when
/// `rho3 > rho1^4/3 - 2 rho1^3/3 - 2 rho1^2/3 + 1` (zero for `rho1 >= 1`).
pub fn bowtie_standard_critical(rho1: f64) -> f64 {
    let r = rho1;
    (r.powi(4) / 3.0 - 2.0 * r.powi(3) / 3.0 - 2.0 * r * r / 3.0 + 1.0).max(0.0)
}

/// Boundary of the optimal stability region: `rho3 < min(1, 2 - 2 rho1)`.
pub fn bowtie_optimal_critical(rho1: f64) -> f64 {
    (2.0 - 2.0 * rho1).clamp(0.0, 1.0)
}

/// Homogeneous load at which standard CSMA loses stability: the root of
/// `bowtie_standard_critical(r) = r` in `[0, 1]`, by bisection.
pub fn homogeneous_fixed_point(tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if bowtie_standard_critical(mid) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRow {
    pub rho1: f64,
    pub standard: f64,
    pub optimal: f64,
}

pub fn bowtie_boundary(rho1_grid: &[f64]) -> Vec<BoundaryRow> {
    rho1_grid.iter().map(|&r| BoundaryRow { rho1: r, standard: bowtie_standard_critical(r), optimal: bowtie_optimal_critical(r) }).collect()
}

/// CSV with columns `rho_1, standard_rho_3, optimal_rho_3`.
pub fn boundary_csv(rows: &[BoundaryRow]) -> String {
    let mut out = String::from("rho_1,standard_rho_3,optimal_rho_3\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.rho1, r.standard, r.optimal);
    }
    out
}

/// Infinite-attempt-rate throughputs of standard CSMA on the bow-tie for
/// each busy pattern (bit `k` set when class `k` has flows).
fn pattern_table() -> Result<Vec<Vec<f64>>> {
    let spec = library::bowtie();
    let params = CsmaParams::<f64>::homogeneous(&spec, 1.0)?;
    (0u32..32)
        .map(|mask| {
            let x = NetworkState::new((0..5).map(|k| mask >> k & 1).collect());
            Ok(alpha_limit_distribution(&spec, &x, &params, Policy::StandardInfra)?.throughput(&params))
        })
        .collect()
}

fn pattern(x: &NetworkState) -> usize {
    (0..x.num_classes()).filter(|&k| x.get(k) > 0).map(|k| 1 << k).sum()
}

/// Centre-class throughput with a backlogged centre, averaged over
/// independent edge classes each busy with probability `rho1`, computed
/// from the exact infinite-attempt-rate schedule distribution.
pub fn bowtie_phi3_average(rho1: f64) -> Result<f64> {
    let table = pattern_table()?;
    let mut avg = 0.0;
    for bits in 0u32..16 {
        let mut mask = 1 << CENTRE;
        let mut p = 1.0;
        for (i, &k) in EDGES.iter().enumerate() {
            if bits >> i & 1 == 1 {
                mask |= 1 << k;
                p *= rho1;
            } else {
                p *= 1.0 - rho1;
            }
        }
        avg += p * table[mask][CENTRE];
    }
    Ok(avg)
}

/// Throughputs of the dominating bow-tie system: busy edge classes at full
/// rate, the centre at its infinite-attempt-rate standard-CSMA rate.
pub fn bowtie_dominating_model() -> Result<ThroughputModel> {
    Ok(dominating_model(Arc::new(pattern_table()?)))
}

fn dominating_model(table: Arc<Vec<Vec<f64>>>) -> ThroughputModel {
    ThroughputModel::Custom(Arc::new(move |x: &NetworkState| {
        let mut phi = vec![0.0; 5];
        phi[CENTRE] = table[pattern(x)][CENTRE];
        for k in EDGES {
            phi[k] = if x.get(k) > 0 { 1.0 } else { 0.0 };
        }
        phi
    }))
}

/// Edge-queue statistics of the dominating system in which edge classes
/// are served at full rate whenever busy.
#[derive(Clone, Debug, PartialEq)]
pub struct Mm1Report {
    /// `(P(x_k > 0), 95% half-width)` per edge class, by batch means.
    pub busy: Vec<(f64, f64)>,
    /// Largest `|P(x_k = n) - (1 - rho1) rho1^n|` over edges and `n <= 10`.
    pub max_pmf_error: f64,
    /// Largest absolute Pearson correlation between two edge queues.
    pub max_abs_correlation: f64,
    pub passes: bool,
}

pub const MM1_PMF_TOL: f64 = 0.02;
pub const MM1_CORR_TOL: f64 = 0.05;

/// Simulates the dominating bow-tie system (unit service for busy edge
/// classes, infinite-attempt-rate standard-CSMA service for the centre) and
/// checks that the edge queues are geometric with parameter `rho1` and
/// mutually uncorrelated.
pub fn mm1_reduction_check(rho1: f64, rho3: f64, horizon: f64, seed: u64) -> Result<Mm1Report> {
    let spec = library::bowtie();
    let params = CsmaParams::<f64>::homogeneous(&spec, 1.0)?;
    let traffic = TrafficSpec::from_loads(vec![rho1, rho1, rho3, rho1, rho1])?;
    let model = dominating_model(Arc::new(pattern_table()?));
    let count = horizon.floor() as usize;
    let mut cfg = SimConfig::new(Policy::StandardInfra, NetworkState::zeros(5), horizon, seed).with_uniform_samples(count);
    cfg.max_total_flows = u64::MAX;
    let tr = simulate_separated(&spec, &params, &traffic, &cfg, &model)?;
    let n = tr.samples.len() as f64;
    let series: Vec<Vec<f64>> = EDGES.iter().map(|&k| tr.samples.iter().map(|s| s.state.get(k) as f64).collect()).collect();
    let batches = 20;
    let busy = series
        .iter()
        .map(|v| {
            let size = v.len() / batches;
            let means: Vec<f64> = (0..batches)
                .map(|b| v[b * size..(b + 1) * size].iter().filter(|&&q| q > 0.0).count() as f64 / size as f64)
                .collect();
            let m = means.iter().sum::<f64>() / batches as f64;
            let sd = (means.iter().map(|q| (q - m).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
            (m, 1.96 * sd / (batches as f64).sqrt())
        })
        .collect();
    let mut max_pmf_error = 0.0f64;
    for v in &series {
        for q in 0..=10 {
            let emp = v.iter().filter(|&&x| x == q as f64).count() as f64 / n;
            max_pmf_error = max_pmf_error.max((emp - (1.0 - rho1) * rho1.powi(q)).abs());
        }
    }
    let mut max_abs_correlation = 0.0f64;
    for a in 0..4 {
        for b in a + 1..4 {
            let (va, vb) = (&series[a], &series[b]);
            let ma = va.iter().sum::<f64>() / n;
            let mb = vb.iter().sum::<f64>() / n;
            let cov: f64 = va.iter().zip(vb).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let sa: f64 = va.iter().map(|x| (x - ma).powi(2)).sum();
            let sb: f64 = vb.iter().map(|y| (y - mb).powi(2)).sum();
            if sa > 0.0 && sb > 0.0 {
                max_abs_correlation = max_abs_correlation.max((cov / (sa * sb).sqrt()).abs());
            }
        }
    }
    let passes = max_pmf_error < MM1_PMF_TOL && max_abs_correlation < MM1_CORR_TOL;
    Ok(Mm1Report { busy, max_pmf_error, max_abs_correlation, passes })
}

/// Couples standard CSMA (infinite attempt rate) on the bow-tie with its
/// dominating system on one event stream; the dominating system should
/// never exceed the original.
pub fn bowtie_coupling_check(rho1: f64, rho3: f64, initial: &NetworkState, horizon: f64, seed: u64) -> Result<CouplingReport> {
    let table = Arc::new(pattern_table()?);
    let traffic = TrafficSpec::from_loads(vec![rho1, rho1, rho3, rho1, rho1])?;
    let orig = {
        let table = table.clone();
        move |x: &NetworkState| Ok(table[pattern(x)].clone())
    };
    let ThroughputModel::Custom(dom) = dominating_model(table) else { unreachable!() };
    simulate_coupled(&traffic, orig, move |x: &NetworkState| Ok(dom(x)), &[1.0; 5], initial, horizon, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::alpha_limit_distribution;

    #[test]
    fn boundary_points() {
        assert_eq!(bowtie_standard_critical(0.0), 1.0);
        assert_eq!(bowtie_optimal_critical(0.0), 1.0);
        assert!(bowtie_standard_critical(1.0).abs() < 1e-15);
        assert_eq!(bowtie_standard_critical(1.5), 0.0);
        let r = homogeneous_fixed_point(1e-9);
        assert!((r - 0.63).abs() < 0.005, "{r}");
        assert!((bowtie_standard_critical(r) - r).abs() < 1e-8);
        assert!((bowtie_optimal_critical(2.0 / 3.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn suboptimality_gap() {
        for i in 1..100 {
            let r = i as f64 / 100.0;
            assert!(bowtie_standard_critical(r) < bowtie_optimal_critical(r), "{r}");
        }
    }

    #[test]
    fn polynomial_matches_exact_average() {
        for r in [0.0, 0.2, 0.5, 0.65, 0.9, 1.0] {
            let exact = bowtie_phi3_average(r).unwrap();
            assert!((exact - bowtie_standard_critical(r)).abs() < 1e-12, "{r}: {exact}");
        }
    }

    #[test]
    fn limit_depends_only_on_busy_pattern() {
        let spec = library::bowtie();
        let p = CsmaParams::<f64>::homogeneous(&spec, 1.0).unwrap();
        let a = alpha_limit_distribution(&spec, &NetworkState::new(vec![3, 1, 7, 2, 0]), &p, Policy::StandardInfra).unwrap();
        let b = alpha_limit_distribution(&spec, &NetworkState::new(vec![1, 1, 1, 1, 0]), &p, Policy::StandardInfra).unwrap();
        assert_eq!(a.marginals(), b.marginals());
    }

    #[test]
    fn dominating_edges_are_mm1() {
        let r = mm1_reduction_check(0.5, 0.3, 100_000.0, 17).unwrap();
        assert!(r.passes, "{r:?}");
        for (m, h) in &r.busy {
            assert!((m - 0.5).abs() < h.max(0.01) * 2.0, "{m} ± {h}");
        }
        let r = mm1_reduction_check(0.0, 0.3, 1_000.0, 17).unwrap();
        assert!(r.busy.iter().all(|b| b.0 == 0.0));
    }

    #[test]
    fn coupling_is_monotone() {
        let r = bowtie_coupling_check(0.6, 0.6, &NetworkState::new(vec![3, 0, 5, 1, 2]), 5_000.0, 4).unwrap();
        assert_eq!(r.order_violations, 0);
        assert!(r.steps > 10_000);
    }

    #[test]
    fn boundary_table_csv() {
        let rows = bowtie_boundary(&[0.0, 0.5]);
        assert!(boundary_csv(&rows).starts_with("rho_1,standard_rho_3,optimal_rho_3\n0,1,1\n0.5,"));
    }
}
