//! Discrete-event simulation of the flow-level process under time-scale
//! separation and of the joint flow/packet process.

mod coupled;
mod joint;
mod timescale;

use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

pub use coupled::{simulate_coupled, CouplingReport};
pub use joint::simulate_joint;
pub use timescale::{distance_csv, timescale_convergence, DistanceRow, TimescaleConfig};

use crate::equilibrium::{equilibrium, Policy};
use crate::error::{Error, Result};
use crate::schedule::{alpha_limit_distribution, NetworkState, Schedule};
use crate::topology::{CsmaParams, NetworkSpec, TrafficSpec};

pub const DEFAULT_CACHE_SIZE: usize = 100_000;
pub const DEFAULT_FLOW_GUARD: u64 = 100_000;

/// Simulation settings shared by both simulators.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub policy: Policy,
    /// Packet-level speed-up `N` of the joint process.
    pub scaling_n: u32,
    pub horizon: f64,
    pub seed: u64,
    pub sample_times: Vec<f64>,
    /// Abort once the total number of flows exceeds this.
    pub max_total_flows: u64,
    pub initial_state: NetworkState,
    /// Initial schedule of the joint process (empty if `None`).
    pub initial_schedule: Option<Schedule>,
    pub cache_size: usize,
}

impl SimConfig {
    pub fn new(policy: Policy, initial_state: NetworkState, horizon: f64, seed: u64) -> Self {
        SimConfig {
            policy,
            scaling_n: 1,
            horizon,
            seed,
            sample_times: Vec::new(),
            max_total_flows: DEFAULT_FLOW_GUARD,
            initial_state,
            initial_schedule: None,
            cache_size: DEFAULT_CACHE_SIZE,
        }
    }

    /// `count + 1` sample times evenly spaced over `[0, horizon]`.
    pub fn with_uniform_samples(mut self, count: usize) -> Self {
        self.sample_times = (0..=count).map(|i| (self.horizon * i as f64 / count.max(1) as f64).min(self.horizon)).collect();
        self
    }

    pub fn with_samples(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    pub fn with_scaling(mut self, n: u32) -> Self {
        self.scaling_n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParams("horizon must be positive and finite".into()));
        }
        if self.scaling_n == 0 {
            return Err(Error::InvalidParams("scaling N must be positive".into()));
        }
        if self.sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("sample times must be strictly increasing".into()));
        }
        if self.sample_times.iter().any(|&s| !(0.0..=self.horizon).contains(&s)) {
            return Err(Error::InvalidParams("sample times must lie in [0, horizon]".into()));
        }
        if self.initial_state.num_classes() != spec.num_classes() {
            return Err(Error::InvalidParams("initial state has the wrong number of classes".into()));
        }
        if self.cache_size == 0 {
            return Err(Error::InvalidParams("cache size must be positive".into()));
        }
        self.policy.check(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub state: NetworkState,
    pub schedule: Option<Schedule>,
}

/// Per-class event tallies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub arrivals: u64,
    pub departures: u64,
    /// Packet activations (joint process only).
    pub activations: u64,
    /// Completed packets, including those that end a flow (joint process only).
    pub packets: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub event_counts: Vec<EventCounts>,
    pub aborted: bool,
    /// Time the run stopped (the horizon unless aborted).
    pub end_time: f64,
    /// Time average of `x_k` over `[0, end_time]`.
    pub time_average: Vec<f64>,
    pub final_state: NetworkState,
}

impl Trajectory {
    /// CSV with columns `time, x_1..x_K` and, when schedules were recorded,
    /// the flattened activation matrix `y`.
    pub fn to_csv(&self) -> String {
        let k = self.final_state.num_classes();
        let with_y = self.samples.iter().any(|s| s.schedule.is_some());
        let mut out = String::from("time");
        for c in 1..=k {
            let _ = write!(out, ",x_{c}");
        }
        if with_y {
            out.push_str(",y");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.time);
            for v in s.state.flows() {
                let _ = write!(out, ",{v}");
            }
            if let Some(y) = &s.schedule {
                let _ = write!(out, ",{}", y.flat_key());
            }
            out.push('\n');
        }
        out
    }

    pub fn total_time_average(&self) -> f64 {
        self.time_average.iter().sum()
    }
}

/// Event kinds, used to pick the random stream of a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum EventKind {
    Arrival = 0,
    FlowEnd = 1,
    Activation = 2,
    PacketEnd = 3,
}

/// Independent random streams, one per class and event kind, all derived
/// from one seed.
pub(crate) struct Streams {
    rngs: Vec<ChaCha8Rng>,
}

impl Streams {
    pub(crate) fn new(seed: u64, num_classes: usize) -> Self {
        let rngs = (0..num_classes * 4)
            .map(|s| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(s as u64);
                r
            })
            .collect();
        Streams { rngs }
    }

    pub(crate) fn rng(&mut self, k: usize, kind: EventKind) -> &mut ChaCha8Rng {
        &mut self.rngs[k * 4 + kind as usize]
    }

    /// Exponential variate with the given rate (infinite for rate 0).
    pub(crate) fn exp(&mut self, k: usize, kind: EventKind, rate: f64) -> f64 {
        if rate > 0.0 {
            let e: f64 = self.rng(k, kind).sample(Exp1);
            e / rate
        } else {
            f64::INFINITY
        }
    }
}

/// Seed of replication `index` derived from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(index.wrapping_add(1) << 8);
    r.random()
}

/// User-supplied `x -> phi(x)`.
pub type ThroughputFn = Arc<dyn Fn(&NetworkState) -> Vec<f64> + Send + Sync>;

/// How the separated simulator obtains `phi(x)`.
#[derive(Clone)]
pub enum ThroughputModel {
    /// Stationary throughputs of the packet-level process at the given
    /// attempt rates.
    Equilibrium,
    /// Exact limit as the common `alpha` grows without bound.
    AlphaLimit,
    Custom(ThroughputFn),
}

impl std::fmt::Debug for ThroughputModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThroughputModel::Equilibrium => f.write_str("Equilibrium"),
            ThroughputModel::AlphaLimit => f.write_str("AlphaLimit"),
            ThroughputModel::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Memoized `phi(x)` with a bounded LRU cache.
pub struct ThroughputOracle<'a> {
    spec: &'a NetworkSpec,
    params: &'a CsmaParams<f64>,
    policy: Policy,
    model: ThroughputModel,
    cache: LruCache<NetworkState, Arc<Vec<f64>>>,
    misses: u64,
}

impl<'a> ThroughputOracle<'a> {
    pub fn new(spec: &'a NetworkSpec, params: &'a CsmaParams<f64>, policy: Policy, model: ThroughputModel, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("nonzero");
        ThroughputOracle { spec, params, policy, model, cache: LruCache::new(cap), misses: 0 }
    }

    pub fn get(&mut self, x: &NetworkState) -> Result<Arc<Vec<f64>>> {
        if let Some(v) = self.cache.get(x) {
            return Ok(v.clone());
        }
        self.misses += 1;
        let phi = match &self.model {
            ThroughputModel::Equilibrium => equilibrium(x, self.params, self.spec, self.policy)?.throughput,
            ThroughputModel::AlphaLimit => alpha_limit_distribution(self.spec, x, self.params, self.policy)?.throughput(self.params),
            ThroughputModel::Custom(f) => f(x),
        };
        let phi = Arc::new(phi);
        self.cache.put(x.clone(), phi.clone());
        Ok(phi)
    }

    /// Number of evaluations that missed the cache.
    pub fn misses(&self) -> u64 {
        self.misses
    }
}

/// Records samples and time averages as the state evolves.
pub(crate) struct Recorder<'c> {
    times: &'c [f64],
    next: usize,
    samples: Vec<Sample>,
    area: Vec<f64>,
}

impl<'c> Recorder<'c> {
    pub(crate) fn new(times: &'c [f64], num_classes: usize) -> Self {
        Recorder { times, next: 0, samples: Vec::with_capacity(times.len()), area: vec![0.0; num_classes] }
    }

    /// The state `x` (and schedule `y`) held on `[from, to)`.
    pub(crate) fn hold(&mut self, from: f64, to: f64, x: &NetworkState, y: Option<&Schedule>) {
        while self.next < self.times.len() && self.times[self.next] < to {
            self.samples.push(Sample { time: self.times[self.next], state: x.clone(), schedule: y.cloned() });
            self.next += 1;
        }
        for (a, &v) in self.area.iter_mut().zip(x.flows()) {
            *a += v as f64 * (to - from);
        }
    }

    /// Final sample at exactly the horizon, if requested.
    pub(crate) fn close(&mut self, end: f64, x: &NetworkState, y: Option<&Schedule>, aborted: bool) {
        if !aborted {
            while self.next < self.times.len() && self.times[self.next] <= end {
                self.samples.push(Sample { time: self.times[self.next], state: x.clone(), schedule: y.cloned() });
                self.next += 1;
            }
        }
    }

    pub(crate) fn finish(self, counts: Vec<EventCounts>, aborted: bool, end: f64, x: NetworkState) -> Trajectory {
        let time_average = self.area.iter().map(|a| if end > 0.0 { a / end } else { 0.0 }).collect();
        Trajectory { samples: self.samples, event_counts: counts, aborted, end_time: end, time_average, final_state: x }
    }
}

/// Exact simulation of the flow-level process with arrival rates
/// `lambda_k` and departure rates `phi_k(x) / sigma_k`.
pub fn simulate_separated(
    spec: &NetworkSpec,
    params: &CsmaParams<f64>,
    traffic: &TrafficSpec<f64>,
    cfg: &SimConfig,
    model: &ThroughputModel,
) -> Result<Trajectory> {
    cfg.validate(spec)?;
    if traffic.num_classes() != spec.num_classes() {
        return Err(Error::InvalidParams("traffic and network class counts differ".into()));
    }
    let k = spec.num_classes();
    let mut oracle = ThroughputOracle::new(spec, params, cfg.policy, model.clone(), cfg.cache_size);
    let mut streams = Streams::new(cfg.seed, k);
    let mut rec = Recorder::new(&cfg.sample_times, k);
    let mut counts = vec![EventCounts::default(); k];
    let mut x = cfg.initial_state.clone();
    let mut t = 0.0;
    let mut next_arrival: Vec<f64> = (0..k).map(|c| streams.exp(c, EventKind::Arrival, traffic.arrival_rate()[c])).collect();
    let mut aborted = false;
    loop {
        let phi = oracle.get(&x)?;
        let mut best = (f64::INFINITY, usize::MAX, false);
        for c in 0..k {
            if next_arrival[c] < best.0 {
                best = (next_arrival[c], c, true);
            }
        }
        for c in 0..k {
            if x.get(c) > 0 {
                let d = t + streams.exp(c, EventKind::FlowEnd, phi[c] / traffic.mean_flow_size()[c]);
                if d < best.0 {
                    best = (d, c, false);
                }
            }
        }
        let (te, c, arrival) = best;
        if te > cfg.horizon {
            rec.hold(t, cfg.horizon, &x, None);
            t = cfg.horizon;
            break;
        }
        rec.hold(t, te, &x, None);
        t = te;
        if arrival {
            x.increment(c);
            counts[c].arrivals += 1;
            next_arrival[c] = t + streams.exp(c, EventKind::Arrival, traffic.arrival_rate()[c]);
            if x.total() > cfg.max_total_flows {
                aborted = true;
                break;
            }
        } else {
            x.decrement(c);
            counts[c].departures += 1;
        }
    }
    rec.close(t, &x, None, aborted);
    Ok(rec.finish(counts, aborted, t, x))
}

/// Runs `replications` independent copies with seeds derived from
/// `cfg.seed`, in parallel; results are in replication order.
pub fn replicate<F>(cfg: &SimConfig, replications: usize, run: F) -> Result<Vec<Trajectory>>
where
    F: Fn(&SimConfig) -> Result<Trajectory> + Sync,
{
    (0..replications)
        .into_par_iter()
        .map(|r| run(&cfg.clone().with_seed(derive_seed(cfg.seed, r as u64))))
        .collect()
}
