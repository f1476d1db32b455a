//! Capacity-region membership by linear programming over the feasible
//! schedules, and closed-form conditions for multipartite and bow-tie
//! networks.

mod simplex;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

pub use simplex::{LpOutcome, StandardLp};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schedule::{enumerate_feasible, Schedule};
use crate::topology::{detect_l_partite, CsmaParams, NetworkSpec};

/// Half-width of the band around `t = 1` reported as [`Status::Boundary`].
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Interior,
    Boundary,
    Exterior,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Interior => "interior",
            Status::Boundary => "boundary",
            Status::Exterior => "exterior",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Status::Interior),
            "boundary" => Ok(Status::Boundary),
            "exterior" => Ok(Status::Exterior),
            other => Err(Error::Parse(format!("unknown capacity status '{other}'"))),
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of a membership query. `margin = t - 1` where `t` is the largest
/// factor with `t rho` still achievable; infinite when `rho = 0`.
#[derive(Clone, Debug)]
pub struct CapacityVerdict<T> {
    pub status: Status,
    pub margin: T,
    pub schedules: Arc<Vec<Schedule>>,
    /// Distribution over `schedules` achieving `(1 + margin) rho`, when
    /// `rho` is achievable.
    pub certificate: Option<Vec<T>>,
}

impl<T: Scalar> CapacityVerdict<T> {
    /// Service rates `phi_k sum_y y_k pi(y)` delivered by a distribution.
    pub fn service_rates(&self, pi: &[T], params: &CsmaParams<T>) -> Vec<T> {
        let mut out = vec![T::zero(); params.num_classes()];
        for (y, &p) in self.schedules.iter().zip(pi) {
            for (k, o) in out.iter_mut().enumerate() {
                *o += params.phys_rate()[k] * T::of_usize(y.per_class(k) as usize) * p;
            }
        }
        out
    }

    /// The certificate mixed with the uniform distribution at weight
    /// `min(margin / 2, 1e-3)`, giving every schedule positive mass while
    /// keeping strict slack. Only for interior verdicts.
    pub fn full_support_certificate(&self) -> Option<Vec<T>> {
        if self.status != Status::Interior {
            return None;
        }
        let pi = self.certificate.as_ref()?;
        let w = (self.margin / T::of(2.0)).min(T::of(1e-3));
        let u = w / T::of_usize(pi.len());
        Some(pi.iter().map(|&p| (T::one() - w) * p + u).collect())
    }
}

/// Reusable membership oracle for one network: the schedule set is
/// enumerated once.
#[derive(Clone, Debug)]
pub struct CapacityRegion<T> {
    schedules: Arc<Vec<Schedule>>,
    params: CsmaParams<T>,
}

impl<T: Scalar> CapacityRegion<T> {
    pub fn new(spec: &NetworkSpec, params: &CsmaParams<T>) -> Result<Self> {
        if params.num_classes() != spec.num_classes() {
            return Err(Error::InvalidParams("parameter and network class counts differ".into()));
        }
        Ok(CapacityRegion { schedules: Arc::new(enumerate_feasible(spec, None)?), params: params.clone() })
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    /// Largest `t` with `t rho` achievable, with the optimal distribution.
    /// `None` when `rho = 0` (every `t` works).
    pub fn max_scaling(&self, rho: &[T]) -> Result<Option<(T, Vec<T>)>> {
        let k = self.params.num_classes();
        if rho.len() != k {
            return Err(Error::InvalidParams(format!("load vector has {} entries, expected {k}", rho.len())));
        }
        if rho.iter().any(|r| !r.is_finite() || *r < T::zero()) {
            return Err(Error::InvalidParams("loads must be finite and non-negative".into()));
        }
        let active: Vec<usize> = (0..k).filter(|&c| rho[c] > T::zero()).collect();
        if active.is_empty() {
            return Ok(None);
        }
        let s = self.schedules.len();
        let n = s + 1 + active.len();
        let mut a = Vec::with_capacity(active.len() + 1);
        let mut row = vec![T::zero(); n];
        for v in row.iter_mut().take(s) {
            *v = T::one();
        }
        a.push(row);
        for (i, &c) in active.iter().enumerate() {
            let mut row = vec![T::zero(); n];
            for (v, y) in row.iter_mut().zip(self.schedules.iter()) {
                *v = -self.params.phys_rate()[c] * T::of_usize(y.per_class(c) as usize);
            }
            row[s] = rho[c];
            row[s + 1 + i] = T::one();
            a.push(row);
        }
        let mut b = vec![T::zero(); active.len() + 1];
        b[0] = T::one();
        let mut cost = vec![T::zero(); n];
        cost[s] = T::one();
        match (StandardLp { a, b, c: cost }).solve()? {
            LpOutcome::Optimal { value, x } => {
                let mut pi = x[..s].to_vec();
                let total = pi.iter().fold(T::zero(), |a, &v| a + v);
                for p in pi.iter_mut() {
                    *p /= total;
                }
                Ok(Some((value, pi)))
            }
            other => Err(Error::Solver(format!("capacity LP returned {other:?}"))),
        }
    }

    pub fn membership(&self, rho: &[T]) -> Result<CapacityVerdict<T>> {
        let band = T::of(BOUNDARY_BAND).max(T::epsilon() * T::of(1e3));
        match self.max_scaling(rho)? {
            None => {
                let u = T::one() / T::of_usize(self.schedules.len());
                Ok(CapacityVerdict {
                    status: Status::Interior,
                    margin: T::infinity(),
                    schedules: self.schedules.clone(),
                    certificate: Some(vec![u; self.schedules.len()]),
                })
            }
            Some((t, pi)) => {
                let margin = t - T::one();
                let status = if margin > band {
                    Status::Interior
                } else if margin >= -band {
                    Status::Boundary
                } else {
                    Status::Exterior
                };
                let certificate = (status != Status::Exterior).then_some(pi);
                Ok(CapacityVerdict { status, margin, schedules: self.schedules.clone(), certificate })
            }
        }
    }

    /// Membership for many load vectors in parallel; results keep input order.
    pub fn sweep(&self, loads: &[Vec<T>]) -> Result<Vec<CapacityVerdict<T>>> {
        loads.par_iter().map(|rho| self.membership(rho)).collect()
    }
}

/// One-off membership query.
pub fn membership<T: Scalar>(rho: &[T], spec: &NetworkSpec, params: &CsmaParams<T>) -> Result<CapacityVerdict<T>> {
    CapacityRegion::new(spec, params)?.membership(rho)
}

/// Closed-form verdict for a complete multipartite network.
#[derive(Clone, Debug, PartialEq)]
pub struct LPartiteVerdict<T> {
    pub interior: bool,
    /// `J - sum_l max_{k in C_l} rho_k / phi_k`.
    pub slack: T,
    /// Equivalent LP margin `J / sum - 1` (infinite when the sum is zero).
    pub margin: T,
}

pub fn lpartite_condition<T: Scalar>(rho: &[T], spec: &NetworkSpec, params: &CsmaParams<T>) -> Result<LPartiteVerdict<T>> {
    let parts = detect_l_partite(spec)?.ok_or_else(|| Error::Precondition("network is not complete multipartite".into()))?;
    if rho.len() != spec.num_classes() {
        return Err(Error::InvalidParams("load vector length differs from class count".into()));
    }
    let sum = parts.iter().fold(T::zero(), |acc, part| {
        acc + part.iter().map(|&k| rho[k] / params.phys_rate()[k]).fold(T::zero(), T::max)
    });
    let j = T::of_usize(spec.num_channels());
    let margin = if sum > T::zero() { j / sum - T::one() } else { T::infinity() };
    Ok(LPartiteVerdict { interior: sum < j, slack: j - sum, margin })
}

/// Optimal-region margin of the bow-tie network with unit rates when the
/// four edge classes carry load `rho1` and the centre class `rho3`:
/// interior iff `rho3 < 1` and `2 rho1 + rho3 < 2`.
pub fn bowtie_optimal_margin<T: Scalar>(rho1: T, rho3: T) -> T {
    let a = if rho3 > T::zero() { T::one() / rho3 } else { T::infinity() };
    let d = T::of(2.0) * rho1 + rho3;
    let b = if d > T::zero() { T::of(2.0) / d } else { T::infinity() };
    a.min(b) - T::one()
}

/// Bow-tie load vector with the edge classes at `rho1` and the centre at `rho3`.
pub fn bowtie_loads<T: Scalar>(rho1: T, rho3: T) -> Vec<T> {
    vec![rho1, rho1, rho3, rho1, rho1]
}

/// `n` evenly spaced points covering `[0, max]`.
pub fn grid_axis(n: usize, max: f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// CSV rows `coords..., status, margin` with the given coordinate names.
pub fn sweep_csv<T: Scalar>(names: &[&str], coords: &[Vec<T>], verdicts: &[CapacityVerdict<T>]) -> String {
    let mut out = names.join(",");
    out.push_str(",status,margin\n");
    for (c, v) in coords.iter().zip(verdicts) {
        for x in c {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{},{}\n", v.status, v.margin));
    }
    out
}
