use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::schedule::NetworkState;
use crate::topology::{CsmaParams, TrafficSpec};

/// `W(x) = sum_l max_{k in C_l} x_k sigma_k / phi_k`.
pub fn w_statistic(x: &NetworkState, partition: &[Vec<usize>], params: &CsmaParams<f64>, traffic: &TrafficSpec<f64>) -> f64 {
    partition
        .iter()
        .map(|part| {
            part.iter()
                .map(|&k| x.get(k) as f64 * traffic.mean_flow_size()[k] / params.phys_rate()[k])
                .fold(0.0, f64::max)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluidBoundReport {
    /// Fluid drain time `1 / (J - sum_l max_{k in C_l} rho_k / phi_k)`.
    pub drain_time: f64,
    /// `(scaled time, mean W / W(0))` at every common sample.
    pub curve: Vec<(f64, f64)>,
    /// Mean scaled `W` at `drain_time * (1 + tolerance)`.
    pub w_at_check: f64,
    /// Largest excess of the mean scaled `W` over `max(0, 1 - t / drain_time)`.
    pub max_excess: f64,
    pub drained: bool,
}

/// Checks that the scaled `W` statistic of `trajectories` (all started
/// from the same state, with samples at common times) falls below
/// `threshold` of its initial value by `drain_time * (1 + tolerance)`
/// scaled time units. Time is scaled by `W(0)`.
pub fn lpartite_fluid_bound(
    trajectories: &[Trajectory],
    partition: &[Vec<usize>],
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    num_channels: usize,
    threshold: f64,
    tolerance: f64,
) -> Result<FluidBoundReport> {
    let first = trajectories.first().ok_or_else(|| Error::Precondition("no trajectories".into()))?;
    let s: f64 = partition
        .iter()
        .map(|part| part.iter().map(|&k| traffic.load(k) / params.phys_rate()[k]).fold(0.0, f64::max))
        .sum();
    let slack = num_channels as f64 - s;
    if slack <= 0.0 {
        return Err(Error::Precondition("load is not inside the capacity region".into()));
    }
    let drain_time = 1.0 / slack;
    let w0 = first.samples.first().map(|smp| w_statistic(&smp.state, partition, params, traffic)).unwrap_or(0.0);
    let len = trajectories.iter().map(|t| t.samples.len()).min().unwrap_or(0);
    let mut curve = Vec::with_capacity(len);
    for i in 0..len {
        let t = first.samples[i].time;
        let mean = trajectories.iter().map(|tr| w_statistic(&tr.samples[i].state, partition, params, traffic)).sum::<f64>()
            / trajectories.len() as f64;
        if w0 > 0.0 {
            curve.push((t / w0, mean / w0));
        } else {
            curve.push((t, mean));
        }
    }
    let check = drain_time * (1.0 + tolerance);
    let w_at_check = curve.iter().find(|p| p.0 >= check - 1e-12).map_or(f64::NAN, |p| p.1);
    let max_excess = curve.iter().map(|&(t, w)| w - (1.0 - t / drain_time).max(0.0)).fold(f64::NEG_INFINITY, f64::max);
    Ok(FluidBoundReport { drain_time, curve, w_at_check, max_excess, drained: w_at_check < threshold })
}
