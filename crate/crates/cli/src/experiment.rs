//! Experiment kinds and their result files.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use csma_core::capacity::{grid_axis, sweep_csv, CapacityRegion};
use csma_core::dynamics::{
    derive_seed, distance_csv, replicate, simulate_joint, simulate_separated, SimConfig, ThroughputModel,
    TimescaleConfig, Trajectory,
};
use csma_core::equilibrium::{equilibrium, throughput_row_csv};
use csma_core::scenario::{ExperimentSection, ModeName, Scenario};
use csma_core::schedule::alpha_limit_distribution;
use csma_core::stability::{fluid_slope, SlopeCriteria};
use csma_core::{CsmaParams, NetworkSpec, Policy, TrafficSpec};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Equilibrium,
    CapacitySweep,
    Simulate,
    StabilitySweep,
    Timescale,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Equilibrium => "equilibrium",
            Kind::CapacitySweep => "capacity-sweep",
            Kind::Simulate => "simulate",
            Kind::StabilitySweep => "stability-sweep",
            Kind::Timescale => "timescale",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        Kind::from_str(s, false).map_err(|_| CliError::Schema(format!("unknown experiment kind {s:?}")))
    }
}

/// Loads a bundled scenario by name or a scenario file by path.
pub fn load_scenario(name_or_path: &str) -> CliResult<Scenario> {
    if let Some(s) = Scenario::bundled(name_or_path) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Scenario::parse(&text)?)
}

/// A fully resolved experiment: everything needed to produce its files.
pub struct Prepared {
    pub kind: Kind,
    pub scenario: Scenario,
    pub experiment: ExperimentSection,
    spec: NetworkSpec,
    params: CsmaParams<f64>,
    policy: Policy,
    seed: u64,
}

impl Prepared {
    /// Validates the scenario and the kind-specific settings before any
    /// computation starts.
    pub fn new(kind: Kind, scenario: Scenario, experiment: ExperimentSection) -> CliResult<Self> {
        let spec = scenario.network()?;
        let params = scenario.params(&spec, experiment.alpha)?;
        let policy = match experiment.policy()? {
            Some(p) => p,
            None if scenario.mode == ModeName::Infrastructure => Policy::StandardInfra,
            None => Policy::AdHoc,
        };
        policy.check_params(&spec, &params)?;
        let seed = experiment.seed.unwrap_or(0);
        let p = Prepared { kind, scenario, experiment, spec, params, policy, seed };
        p.check()?;
        Ok(p)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check(&self) -> CliResult<()> {
        let e = &self.experiment;
        let k = self.spec.num_classes();
        if let Some(s) = &e.state {
            if s.len() != k {
                return Err(CliError::Invalid(format!("state has {} entries, expected {k}", s.len())));
            }
        }
        let need_traffic = matches!(self.kind, Kind::Simulate | Kind::StabilitySweep | Kind::Timescale | Kind::CapacitySweep);
        if need_traffic {
            self.scenario.traffic()?;
        }
        if matches!(self.kind, Kind::CapacitySweep | Kind::StabilitySweep) {
            self.axes()?;
        }
        if let Some(h) = e.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(CliError::Invalid("horizon must be positive".into()));
            }
        }
        if e.replications == Some(0) {
            return Err(CliError::Invalid("replications must be positive".into()));
        }
        if e.scaling_n == Some(0) {
            return Err(CliError::Invalid("scaling N must be positive".into()));
        }
        if e.alpha_limit == Some(true) && self.kind == Kind::Timescale {
            return Err(CliError::Invalid("the time-scale study needs a finite alpha".into()));
        }
        Ok(())
    }

    fn axes(&self) -> CliResult<(Vec<usize>, Vec<usize>)> {
        let k = self.spec.num_classes();
        let axes = self.experiment.sweep_axes.as_ref().ok_or_else(|| CliError::Invalid("sweeps need sweep_axes".into()))?;
        if axes.len() != 2 || axes.iter().any(|a| a.is_empty()) {
            return Err(CliError::Invalid("sweep_axes must hold two non-empty class groups".into()));
        }
        let conv = |g: &Vec<usize>| -> CliResult<Vec<usize>> {
            g.iter()
                .map(|&c| if c >= 1 && c <= k { Ok(c - 1) } else { Err(CliError::Invalid(format!("sweep axis class {c} outside 1..={k}"))) })
                .collect()
        };
        Ok((conv(&axes[0])?, conv(&axes[1])?))
    }

    fn state(&self) -> CliResult<csma_core::NetworkState> {
        Ok(self.scenario.state(self.experiment.state.as_deref())?)
    }

    fn model(&self) -> ThroughputModel {
        if self.experiment.alpha_limit == Some(true) {
            ThroughputModel::AlphaLimit
        } else {
            ThroughputModel::Equilibrium
        }
    }

    fn sim_config(&self, horizon: f64, samples: usize, seed: u64) -> CliResult<SimConfig> {
        let mut cfg = SimConfig::new(self.policy, self.state()?, horizon, seed)
            .with_uniform_samples(samples)
            .with_scaling(self.experiment.scaling_n.unwrap_or(1));
        if let Some(m) = self.experiment.max_total_flows {
            cfg.max_total_flows = m;
        }
        if let Some(c) = self.experiment.cache_size {
            cfg.cache_size = c;
        }
        Ok(cfg)
    }

    fn grid_points(&self, default_grid: usize) -> CliResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, [String; 2])> {
        let (a, b) = self.axes()?;
        let axis = grid_axis(self.experiment.grid.unwrap_or(default_grid), self.experiment.grid_max.unwrap_or(1.0));
        let mut coords = Vec::new();
        let mut loads = Vec::new();
        for &u in &axis {
            for &v in &axis {
                let mut rho = vec![0.0; self.spec.num_classes()];
                for &c in &a {
                    rho[c] = u;
                }
                for &c in &b {
                    rho[c] = v;
                }
                coords.push(vec![u, v]);
                loads.push(rho);
            }
        }
        Ok((coords, loads, [format!("rho_{}", a[0] + 1), format!("rho_{}", b[0] + 1)]))
    }

    /// Runs the experiment; returns `(file name, contents)` pairs.
    pub fn execute(&self) -> CliResult<Vec<(String, String)>> {
        match self.kind {
            Kind::Equilibrium => self.run_equilibrium(),
            Kind::CapacitySweep => self.run_capacity_sweep(),
            Kind::Simulate => self.run_simulate(),
            Kind::StabilitySweep => self.run_stability_sweep(),
            Kind::Timescale => self.run_timescale(),
        }
    }

    fn run_equilibrium(&self) -> CliResult<Vec<(String, String)>> {
        let x = self.state()?;
        if self.experiment.alpha_limit == Some(true) {
            let lim = alpha_limit_distribution(&self.spec, &x, &self.params, self.policy)?;
            let mut dist = String::from("schedule,probability,exact\n");
            for ((s, p), f) in lim.schedules.iter().zip(&lim.probabilities).zip(lim.probabilities_f64()) {
                let _ = writeln!(dist, "{},{:e},{}", s.flat_key(), f, p);
            }
            let mut exact = String::from("class,exact\n");
            for (k, m) in lim.marginals().iter().enumerate() {
                let _ = writeln!(exact, "{},{}", k + 1, m);
            }
            return Ok(vec![
                ("throughput.csv".into(), throughput_row_csv(&lim.throughput(&self.params))),
                ("throughput_exact.csv".into(), exact),
                ("distribution.csv".into(), dist),
            ]);
        }
        let eq = equilibrium(&x, &self.params, &self.spec, self.policy)?;
        Ok(vec![("throughput.csv".into(), eq.throughput_csv()), ("distribution.csv".into(), eq.distribution_csv())])
    }

    fn run_capacity_sweep(&self) -> CliResult<Vec<(String, String)>> {
        let (coords, loads, names) = self.grid_points(50)?;
        let region = CapacityRegion::new(&self.spec, &self.params)?;
        let verdicts = region.sweep(&loads)?;
        Ok(vec![("region.csv".into(), sweep_csv(&[&names[0], &names[1]], &coords, &verdicts))])
    }

    fn traffic_with_loads(&self, loads: &[f64]) -> CliResult<TrafficSpec<f64>> {
        let base = self.scenario.traffic()?;
        let lambda = loads.iter().zip(base.mean_flow_size()).map(|(r, s)| r / s).collect();
        Ok(TrafficSpec::new(lambda, base.mean_flow_size().to_vec())?)
    }

    fn simulate_runs(&self, traffic: &TrafficSpec<f64>, cfg: &SimConfig, reps: usize) -> CliResult<Vec<Trajectory>> {
        let model = self.model();
        let joint = self.experiment.scaling_n.is_some();
        Ok(replicate(cfg, reps, |c| {
            if joint {
                simulate_joint(&self.spec, &self.params, traffic, c)
            } else {
                simulate_separated(&self.spec, &self.params, traffic, c, &model)
            }
        })?)
    }

    fn run_simulate(&self) -> CliResult<Vec<(String, String)>> {
        let traffic = self.scenario.traffic()?;
        let e = &self.experiment;
        let cfg = self.sim_config(e.horizon.unwrap_or(1000.0), e.samples.unwrap_or(1000), self.seed)?;
        let runs = self.simulate_runs(&traffic, &cfg, e.replications.unwrap_or(1))?;
        let k = self.spec.num_classes();
        let mut summary = String::from("replication,aborted,end_time");
        for c in 1..=k {
            let _ = write!(summary, ",mean_x_{c}");
        }
        for c in 1..=k {
            let _ = write!(summary, ",arrivals_{c},departures_{c}");
        }
        summary.push('\n');
        let mut files = Vec::new();
        for (r, tr) in runs.iter().enumerate() {
            let _ = write!(summary, "{r},{},{}", tr.aborted, tr.end_time);
            for v in &tr.time_average {
                let _ = write!(summary, ",{v}");
            }
            for c in &tr.event_counts {
                let _ = write!(summary, ",{},{}", c.arrivals, c.departures);
            }
            summary.push('\n');
            files.push((format!("trajectory_{r}.csv"), tr.to_csv()));
        }
        files.push(("summary.csv".into(), summary));
        Ok(files)
    }

    fn run_stability_sweep(&self) -> CliResult<Vec<(String, String)>> {
        let e = &self.experiment;
        let (coords, loads, names) = self.grid_points(5)?;
        let region = CapacityRegion::new(&self.spec, &self.params)?;
        let horizon = e.horizon.unwrap_or(2000.0);
        let reps = e.replications.unwrap_or(5);
        let base = self.scenario.traffic()?;
        let service_time = (0..self.spec.num_classes())
            .map(|k| base.mean_flow_size()[k] / self.params.phys_rate()[k])
            .fold(0.0, f64::max);
        let mut out = format!("{},{},source,verdict,slope,ci_lo,ci_hi,margin\n", names[0], names[1]);
        for (i, (c, rho)) in coords.iter().zip(&loads).enumerate() {
            let traffic = self.traffic_with_loads(rho)?;
            let margin = region.membership(rho)?.margin;
            let cfg = self.sim_config(horizon, e.samples.unwrap_or(200), derive_seed(self.seed, i as u64))?;
            let runs = self.simulate_runs(&traffic, &cfg, reps.max(5))?;
            let mut crit = SlopeCriteria::new(horizon, service_time, Some(margin));
            crit.initial_total = cfg.initial_state.total();
            crit.seed = derive_seed(self.seed, 1 << 32 | i as u64);
            let v = fluid_slope(&runs, &crit)?;
            let _ = writeln!(out, "{},{},simulation,{},{},{},{},{}", c[0], c[1], v.verdict, v.slope, v.ci.0, v.ci.1, margin);
        }
        Ok(vec![("stability_sweep.csv".into(), out)])
    }

    fn run_timescale(&self) -> CliResult<Vec<(String, String)>> {
        let e = &self.experiment;
        let traffic = self.scenario.traffic()?;
        let state = self.state()?;
        let window = match &e.window {
            Some(w) if w.len() == state.num_classes() => w.clone(),
            Some(_) => return Err(CliError::Invalid("window needs one entry per class".into())),
            None => state.flows().iter().map(|v| v + 10).collect(),
        };
        let cfg = TimescaleConfig {
            policy: self.policy,
            initial_state: state,
            n_values: e.n_values.clone().unwrap_or_else(|| vec![1, 4, 16, 64]),
            t_probe: e.t_probe.unwrap_or(1.0),
            replications: e.replications.unwrap_or(2000),
            seed: self.seed,
            window,
            bootstrap: 200,
        };
        let rows = csma_core::dynamics::timescale_convergence(&self.spec, &self.params, &traffic, &cfg)?;
        Ok(vec![("distance.csv".into(), distance_csv(&rows))])
    }
}
