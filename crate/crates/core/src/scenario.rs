//! Scenario files: a TOML document holding the network, CSMA parameters,
//! traffic and an optional experiment block. Classes are numbered from 1
//! in files and from 0 in memory.
//!
//! ```toml
//! name = "bowtie"
//! classes = 5
//! channels = 2
//! mode = "infrastructure"          # or "adhoc"
//! shared_graph = [[1, 2], [1, 3]]  # same graph on every channel ...
//!
//! # ... or one [[channel]] table per channel:
//! # [[channel]]
//! # eligible = [1, 2, 3]           # default: every class
//! # edges = [[1, 2]]
//!
//! [[access_point]]                 # infrastructure mode only
//! uplink = []
//! downlink = [1]
//!
//! [params]
//! phys_rate = 1.0                  # scalar or one value per class
//! alpha = 1.0                      # or attempt_rate = ...
//! # probe = [[0.5, 0.5], ...]      # K x J; default uniform over eligible channels
//!
//! [traffic]
//! load = 0.6                       # or arrival_rate = ...
//! mean_flow_size = 1.0
//!
//! [experiment]
//! kind = "equilibrium"
//! policy = "standard_infra"
//! seed = 1
//! ```

use serde::{Deserialize, Serialize};

use crate::equilibrium::Policy;
use crate::error::{Error, Result};
use crate::schedule::NetworkState;
use crate::topology::{uniform_probe, AccessPoint, ChannelGraph, CsmaParams, Mode, NetworkSpec, TrafficSpec};

/// A value given once for all classes or once per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerClass {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerClass {
    pub fn expand(&self, k: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerClass::Scalar(v) => Ok(vec![*v; k]),
            PerClass::Vector(v) if v.len() == k => Ok(v.clone()),
            PerClass::Vector(v) => Err(Error::InvalidSpec(format!("{what}: expected {k} values, got {}", v.len()))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Adhoc,
    Infrastructure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligible: Option<Vec<usize>>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPointSection {
    #[serde(default)]
    pub uplink: Vec<usize>,
    #[serde(default)]
    pub downlink: Vec<usize>,
}

/// Absent rates and sizes default to 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phys_rate: Option<PerClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt_rate: Option<PerClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PerClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<PerClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_rate: Option<PerClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_flow_size: Option<PerClass>,
}

/// Experiment settings; every field can be overridden on the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Common `alpha`: sets every attempt rate to `alpha * phys_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Use the exact infinite-attempt-rate throughputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_limit: Option<bool>,
    /// Flow counts (equilibrium) or initial state (simulation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<f64>,
    /// Two groups of classes whose loads form the sweep axes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_axes: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling_n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_probe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total_flows: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_size: Option<usize>,
}

impl ExperimentSection {
    /// Field-wise merge: values set in `over` win.
    pub fn overridden_by(&self, over: &ExperimentSection) -> ExperimentSection {
        macro_rules! pick {
            ($($f:ident),*) => { ExperimentSection { $($f: over.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(
            kind, policy, seed, alpha, alpha_limit, state, grid, grid_max, sweep_axes, horizon, replications, scaling_n,
            n_values, t_probe, window, samples, max_total_flows, cache_size
        )
    }

    pub fn policy(&self) -> Result<Option<Policy>> {
        self.policy.as_deref().map(Policy::parse).transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub classes: usize,
    pub channels: usize,
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_graph: Option<Vec<[usize; 2]>>,
    #[serde(default, rename = "channel", skip_serializing_if = "Vec::is_empty")]
    pub channel_graphs: Vec<ChannelSection>,
    #[serde(default, rename = "access_point", skip_serializing_if = "Vec::is_empty")]
    pub access_points: Vec<AccessPointSection>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn zero_based(classes: &[usize], k: usize, what: &str) -> Result<Vec<usize>> {
    classes
        .iter()
        .map(|&c| {
            if c == 0 || c > k {
                Err(Error::InvalidSpec(format!("{what}: class {c} outside 1..={k}")))
            } else {
                Ok(c - 1)
            }
        })
        .collect()
}

fn edges_zero_based(edges: &[[usize; 2]], k: usize, what: &str) -> Result<Vec<(usize, usize)>> {
    edges
        .iter()
        .map(|e| {
            let v = zero_based(e, k, what)?;
            Ok((v[0], v[1]))
        })
        .collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse("empty scenario".into()));
        }
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// A bundled scenario by name (`fig1`, `fig2a`, `fig2b`, `fig2c`,
    /// `fig3`, `fig4`, `bowtie` / `fig5`).
    pub fn bundled(name: &str) -> Option<Self> {
        let text = match name {
            "fig1" => include_str!("../scenarios/fig1.toml"),
            "fig2a" => include_str!("../scenarios/fig2a.toml"),
            "fig2b" => include_str!("../scenarios/fig2b.toml"),
            "fig2c" => include_str!("../scenarios/fig2c.toml"),
            "fig3" => include_str!("../scenarios/fig3.toml"),
            "fig4" => include_str!("../scenarios/fig4.toml"),
            "bowtie" | "fig5" => include_str!("../scenarios/bowtie.toml"),
            _ => return None,
        };
        Some(Self::parse(text).expect("bundled scenarios parse"))
    }

    pub const BUNDLED: [&'static str; 7] = ["fig1", "fig2a", "fig2b", "fig2c", "fig3", "fig4", "bowtie"];

    pub fn network(&self) -> Result<NetworkSpec> {
        let k = self.classes;
        let graphs = match (&self.shared_graph, self.channel_graphs.is_empty()) {
            (Some(_), false) => {
                return Err(Error::InvalidSpec("give either shared_graph or [[channel]] tables, not both".into()))
            }
            (Some(edges), true) => {
                let g = ChannelGraph::complete_eligibility(k, edges_zero_based(edges, k, "shared_graph")?);
                vec![g; self.channels]
            }
            (None, true) => vec![ChannelGraph::complete_eligibility(k, []); self.channels],
            (None, false) => {
                if self.channel_graphs.len() != self.channels {
                    return Err(Error::InvalidSpec(format!(
                        "{} [[channel]] tables for {} channels",
                        self.channel_graphs.len(),
                        self.channels
                    )));
                }
                self.channel_graphs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        let what = format!("channel {}", j + 1);
                        let eligible = match &c.eligible {
                            Some(v) => zero_based(v, k, &what)?,
                            None => (0..k).collect(),
                        };
                        Ok(ChannelGraph::new(eligible, edges_zero_based(&c.edges, k, &what)?))
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mode = match self.mode {
            ModeName::Adhoc => {
                if !self.access_points.is_empty() {
                    return Err(Error::InvalidSpec("access points given in ad-hoc mode".into()));
                }
                Mode::AdHoc
            }
            ModeName::Infrastructure => Mode::Infrastructure {
                access_points: self
                    .access_points
                    .iter()
                    .enumerate()
                    .map(|(i, ap)| {
                        let what = format!("access point {}", i + 1);
                        Ok(AccessPoint::new(zero_based(&ap.uplink, k, &what)?, zero_based(&ap.downlink, k, &what)?))
                    })
                    .collect::<Result<_>>()?,
            },
        };
        NetworkSpec::validated(k, graphs, mode)
    }

    /// CSMA parameters; `alpha_override` replaces the attempt rates by
    /// `alpha * phys_rate`.
    pub fn params(&self, spec: &NetworkSpec, alpha_override: Option<f64>) -> Result<CsmaParams<f64>> {
        let k = self.classes;
        let p = &self.params;
        let phys = p.phys_rate.as_ref().unwrap_or(&PerClass::Scalar(1.0)).expand(k, "phys_rate")?;
        let attempt = if let Some(a) = alpha_override {
            phys.iter().map(|f| a * f).collect()
        } else {
            match (&p.attempt_rate, &p.alpha) {
                (Some(_), Some(_)) => return Err(Error::InvalidParams("give attempt_rate or alpha, not both".into())),
                (Some(nu), None) => nu.expand(k, "attempt_rate")?,
                (None, Some(a)) => a.expand(k, "alpha")?.iter().zip(&phys).map(|(a, f)| a * f).collect(),
                (None, None) => phys.clone(),
            }
        };
        let probe = match &p.probe {
            Some(m) => m.clone(),
            None => uniform_probe(spec)?,
        };
        CsmaParams::new(spec, phys, attempt, probe)
    }

    pub fn traffic(&self) -> Result<TrafficSpec<f64>> {
        let k = self.classes;
        let t = self.traffic.as_ref().ok_or_else(|| Error::InvalidSpec("scenario has no [traffic] section".into()))?;
        let sigma = t.mean_flow_size.as_ref().unwrap_or(&PerClass::Scalar(1.0)).expand(k, "mean_flow_size")?;
        let lambda = match (&t.load, &t.arrival_rate) {
            (Some(_), Some(_)) => return Err(Error::InvalidSpec("give load or arrival_rate, not both".into())),
            (Some(l), None) => l.expand(k, "load")?.iter().zip(&sigma).map(|(l, s)| l / s).collect(),
            (None, Some(a)) => a.expand(k, "arrival_rate")?,
            (None, None) => vec![0.0; k],
        };
        TrafficSpec::new(lambda, sigma)
    }

    pub fn state(&self, state: Option<&[u32]>) -> Result<NetworkState> {
        match state.or(self.experiment.state.as_deref()) {
            Some(v) if v.len() == self.classes => Ok(NetworkState::new(v.to_vec())),
            Some(v) => Err(Error::InvalidSpec(format!("state has {} entries, expected {}", v.len(), self.classes))),
            None => Ok(NetworkState::zeros(self.classes)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library;
    use proptest::prelude::*;

    #[test]
    fn bundled_match_library() {
        let pairs = [
            ("fig1", library::fig1()),
            ("fig2a", library::fig2a()),
            ("fig2b", library::fig2b(1)),
            ("fig2c", library::fig2c()),
            ("fig3", library::fig3()),
            ("fig4", library::fig4()),
            ("bowtie", library::bowtie()),
        ];
        for (name, spec) in pairs {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(s.network().unwrap(), spec, "{name}");
            let p = s.params(&spec, None).unwrap();
            assert_eq!(p, CsmaParams::homogeneous(&spec, 1.0).unwrap());
            s.traffic().unwrap();
        }
        assert!(Scenario::bundled("nope").is_none());
        assert_eq!(Scenario::bundled("fig5"), Scenario::bundled("bowtie"));
    }

    #[test]
    fn empty_and_garbage_fail_to_parse() {
        assert!(matches!(Scenario::parse(""), Err(Error::Parse(_))));
        assert!(matches!(Scenario::parse("classes = \"x\""), Err(Error::Parse(_))));
        assert!(matches!(Scenario::parse("classes = 2\nchannels = 1\nmode = \"adhoc\"\nbogus = 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn validation_errors() {
        let s = Scenario::parse("classes = 2\nchannels = 1\nmode = \"adhoc\"\nshared_graph = [[1, 3]]").unwrap();
        assert!(matches!(s.network(), Err(Error::InvalidSpec(_))));
        let s = Scenario::parse("classes = 2\nchannels = 1\nmode = \"adhoc\"\n[traffic]\nload = [0.1]").unwrap();
        assert!(s.traffic().is_err());
    }

    #[test]
    fn per_channel_tables_and_overrides() {
        let text = r#"
classes = 2
channels = 2
mode = "adhoc"

[[channel]]
eligible = [1, 2]
edges = [[1, 2]]

[[channel]]
eligible = [2]

[params]
phys_rate = [1.0, 2.0]
alpha = 3.0

[traffic]
arrival_rate = [0.1, 0.2]
mean_flow_size = 2.0

[experiment]
kind = "simulate"
seed = 4
horizon = 10.0
"#;
        let s = Scenario::parse(text).unwrap();
        let spec = s.network().unwrap();
        assert!(!spec.channel_graphs()[1].is_eligible(0));
        let p = s.params(&spec, None).unwrap();
        assert_eq!(p.attempt_rate(), &[3.0, 6.0]);
        assert_eq!(p.probe_prob()[0], vec![1.0, 0.0]);
        assert_eq!(s.params(&spec, Some(10.0)).unwrap().attempt_rate(), &[10.0, 20.0]);
        assert!((s.traffic().unwrap().load(1) - 0.4).abs() < 1e-15);
        let over = ExperimentSection { seed: Some(9), ..Default::default() };
        let merged = s.experiment.overridden_by(&over);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.horizon, Some(10.0));
        assert_eq!(merged.kind.as_deref(), Some("simulate"));
    }

    #[test]
    fn bundled_round_trip() {
        for name in Scenario::BUNDLED {
            let s = Scenario::bundled(name).unwrap();
            let again = Scenario::parse(&s.to_toml().unwrap()).unwrap();
            assert_eq!(s, again);
        }
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        (1usize..5, 1usize..3).prop_flat_map(|(k, j)| {
            let edges = proptest::collection::vec((1..=k, 1..=k).prop_map(|(a, b)| [a, b]), 0..4);
            let per = prop_oneof![
                (0.01f64..5.0).prop_map(PerClass::Scalar),
                proptest::collection::vec(0.01f64..5.0, k).prop_map(PerClass::Vector),
            ];
            (
                Just(k),
                Just(j),
                edges,
                per.clone(),
                per,
                proptest::option::of(0u64..(1 << 62)),
                proptest::option::of(proptest::collection::vec(0u32..9, k)),
                proptest::option::of(1e-3f64..1e6),
            )
                .prop_map(|(k, j, edges, phys, load, seed, state, alpha)| Scenario {
                    name: Some(format!("s{k}{j}")),
                    description: None,
                    classes: k,
                    channels: j,
                    mode: ModeName::Adhoc,
                    shared_graph: Some(edges),
                    channel_graphs: vec![],
                    access_points: vec![],
                    params: ParamsSection { phys_rate: Some(phys), attempt_rate: None, alpha: None, probe: None },
                    traffic: Some(TrafficSection { load: Some(load), arrival_rate: None, mean_flow_size: None }),
                    experiment: ExperimentSection { seed, state, alpha, ..Default::default() },
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn toml_round_trip(s in arb_scenario()) {
            let text = s.to_toml().unwrap();
            let again = Scenario::parse(&text).unwrap();
            prop_assert_eq!(&s, &again);
            prop_assert_eq!(again.to_toml().unwrap(), text);
        }
    }
}
