//! Network description: classes, channels, per-channel conflict graphs and
//! the access-point structure of infrastructure mode.
//!
//! Classes and channels are 0-based here. The scenario parser converts from
//! the 1-based numbering used in scenario files.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest number of classes supported; schedules store one bitmask per channel.
pub const MAX_CLASSES: usize = 64;

/// Conflict graph of one channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChannelGraph {
    eligible: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl ChannelGraph {
    /// Builds a graph, storing edges with the smaller endpoint first,
    /// sorted and deduplicated.
    pub fn new(eligible: impl IntoIterator<Item = usize>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let eligible: BTreeSet<usize> = eligible.into_iter().collect();
        let edges: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        Self {
            eligible: eligible.into_iter().collect(),
            edges: edges.into_iter().collect(),
        }
    }

    /// Graph where every one of `num_classes` classes is eligible.
    pub fn complete_eligibility(num_classes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::new(0..num_classes, edges)
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_eligible(&self, k: usize) -> bool {
        self.eligible.binary_search(&k).is_ok()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.edges.binary_search(&key).is_ok()
    }
}

/// Uplink and downlink classes attached to one access point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct AccessPoint {
    pub uplink: Vec<usize>,
    pub downlink: Vec<usize>,
}

impl AccessPoint {
    pub fn new(uplink: impl IntoIterator<Item = usize>, downlink: impl IntoIterator<Item = usize>) -> Self {
        let mut uplink: Vec<usize> = uplink.into_iter().collect();
        let mut downlink: Vec<usize> = downlink.into_iter().collect();
        uplink.sort_unstable();
        uplink.dedup();
        downlink.sort_unstable();
        downlink.dedup();
        Self { uplink, downlink }
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.uplink.iter().chain(self.downlink.iter()).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    AdHoc,
    Infrastructure { access_points: Vec<AccessPoint> },
}

/// Immutable network description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    num_classes: usize,
    channel_graphs: Vec<ChannelGraph>,
    mode: Mode,
    masks: Masks,
}

/// Bitmask views of the spec used by the enumerators and simulators.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Masks {
    /// `eligible[j]`: classes allowed on channel `j`.
    eligible: Vec<u64>,
    /// `neighbors[j][k]`: classes conflicting with `k` on channel `j`.
    neighbors: Vec<Vec<u64>>,
    /// Downlink class set of each access point.
    downlink: Vec<u64>,
    /// Access point whose downlink set contains the class, if any.
    downlink_owner: Vec<Option<usize>>,
}

impl NetworkSpec {
    /// Builds a spec. Structural problems (empty network, out-of-range
    /// indices, too many classes) are errors; semantic invariants are
    /// reported separately by [`validate_spec`].
    pub fn new(num_classes: usize, channel_graphs: Vec<ChannelGraph>, mode: Mode) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidSpec("network needs at least one class".into()));
        }
        if num_classes > MAX_CLASSES {
            return Err(Error::InvalidSpec(format!(
                "{num_classes} classes requested, at most {MAX_CLASSES} supported"
            )));
        }
        if channel_graphs.is_empty() {
            return Err(Error::InvalidSpec("network needs at least one channel".into()));
        }
        for (j, g) in channel_graphs.iter().enumerate() {
            let bad = g
                .eligible
                .iter()
                .copied()
                .chain(g.edges.iter().flat_map(|&(a, b)| [a, b]))
                .find(|&k| k >= num_classes);
            if let Some(k) = bad {
                return Err(Error::InvalidSpec(format!(
                    "channel {j}: class index {k} out of range (K = {num_classes})"
                )));
            }
        }
        let mode = match mode {
            Mode::AdHoc => Mode::AdHoc,
            Mode::Infrastructure { access_points } => {
                for (i, ap) in access_points.iter().enumerate() {
                    if let Some(k) = ap.members().find(|&k| k >= num_classes) {
                        return Err(Error::InvalidSpec(format!(
                            "access point {i}: class index {k} out of range (K = {num_classes})"
                        )));
                    }
                }
                Mode::Infrastructure {
                    access_points: access_points
                        .into_iter()
                        .map(|ap| AccessPoint::new(ap.uplink, ap.downlink))
                        .collect(),
                }
            }
        };
        let masks = Masks::build(num_classes, &channel_graphs, &mode);
        Ok(Self {
            num_classes,
            channel_graphs,
            mode,
            masks,
        })
    }

    /// Same conflict graph replicated on every channel.
    pub fn replicated(num_classes: usize, num_channels: usize, graph: ChannelGraph, mode: Mode) -> Result<Self> {
        Self::new(num_classes, vec![graph; num_channels], mode)
    }

    /// Builds a spec and rejects it if any invariant is violated.
    pub fn validated(num_classes: usize, channel_graphs: Vec<ChannelGraph>, mode: Mode) -> Result<Self> {
        let spec = Self::new(num_classes, channel_graphs, mode)?;
        let violations = validate_spec(&spec);
        if violations.is_empty() {
            Ok(spec)
        } else {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidSpec(msgs.join("; ")))
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_channels(&self) -> usize {
        self.channel_graphs.len()
    }

    pub fn channel_graphs(&self) -> &[ChannelGraph] {
        &self.channel_graphs
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn access_points(&self) -> &[AccessPoint] {
        match &self.mode {
            Mode::AdHoc => &[],
            Mode::Infrastructure { access_points } => access_points,
        }
    }

    pub fn is_infrastructure(&self) -> bool {
        matches!(self.mode, Mode::Infrastructure { .. })
    }

    pub(crate) fn eligible_mask(&self, j: usize) -> u64 {
        self.masks.eligible[j]
    }

    pub(crate) fn neighbor_mask(&self, j: usize, k: usize) -> u64 {
        self.masks.neighbors[j][k]
    }

    pub(crate) fn downlink_masks(&self) -> &[u64] {
        &self.masks.downlink
    }

    /// Access point serving `k` as a downlink class.
    pub fn downlink_owner(&self, k: usize) -> Option<usize> {
        self.masks.downlink_owner[k]
    }
}

impl Masks {
    fn build(num_classes: usize, graphs: &[ChannelGraph], mode: &Mode) -> Self {
        let eligible = graphs
            .iter()
            .map(|g| g.eligible.iter().fold(0u64, |m, &k| m | (1 << k)))
            .collect();
        let neighbors = graphs
            .iter()
            .map(|g| {
                let mut adj = vec![0u64; num_classes];
                for &(a, b) in &g.edges {
                    if a != b {
                        adj[a] |= 1 << b;
                        adj[b] |= 1 << a;
                    }
                }
                adj
            })
            .collect();
        let mut downlink = Vec::new();
        let mut downlink_owner = vec![None; num_classes];
        if let Mode::Infrastructure { access_points } = mode {
            for (i, ap) in access_points.iter().enumerate() {
                let mut m = 0u64;
                for &k in &ap.downlink {
                    m |= 1 << k;
                    downlink_owner[k].get_or_insert(i);
                }
                downlink.push(m);
            }
        }
        Self {
            eligible,
            neighbors,
            downlink,
            downlink_owner,
        }
    }
}

/// A violated structural invariant, with enough context to locate it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    SelfLoop { channel: usize, class: usize },
    EdgeOutsideEligible { channel: usize, a: usize, b: usize },
    ClassInTwoAccessPoints { class: usize, first: usize, second: usize },
    MissingAccessPointConflict { access_point: usize, channel: usize, a: usize, b: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based in messages, matching scenario files.
        match *self {
            Violation::SelfLoop { channel, class } => {
                write!(f, "channel {}: conflict edge joins class {} to itself", channel + 1, class + 1)
            }
            Violation::EdgeOutsideEligible { channel, a, b } => write!(
                f,
                "channel {}: conflict edge ({}, {}) has an endpoint not eligible on the channel",
                channel + 1,
                a + 1,
                b + 1
            ),
            Violation::ClassInTwoAccessPoints { class, first, second } => write!(
                f,
                "class {} is attached to access points {} and {}",
                class + 1,
                first + 1,
                second + 1
            ),
            Violation::MissingAccessPointConflict {
                access_point,
                channel,
                a,
                b,
            } => write!(
                f,
                "access point {}: classes {} and {} share channel {} but do not conflict \
                 (classes of one access point must conflict on every common channel)",
                access_point + 1,
                a + 1,
                b + 1,
                channel + 1
            ),
        }
    }
}

/// Lists every violated invariant of `spec`; an empty list means valid.
pub fn validate_spec(spec: &NetworkSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    for (j, g) in spec.channel_graphs.iter().enumerate() {
        for &(a, b) in &g.edges {
            if a == b {
                out.push(Violation::SelfLoop { channel: j, class: a });
            } else if !g.is_eligible(a) || !g.is_eligible(b) {
                out.push(Violation::EdgeOutsideEligible { channel: j, a, b });
            }
        }
    }
    let aps = spec.access_points();
    let mut owner: Vec<Option<usize>> = vec![None; spec.num_classes];
    for (i, ap) in aps.iter().enumerate() {
        let members: BTreeSet<usize> = ap.members().collect();
        for k in members {
            match owner[k] {
                Some(first) => out.push(Violation::ClassInTwoAccessPoints {
                    class: k,
                    first,
                    second: i,
                }),
                None => owner[k] = Some(i),
            }
        }
    }
    for (i, ap) in aps.iter().enumerate() {
        let members: Vec<usize> = ap.members().collect::<BTreeSet<_>>().into_iter().collect();
        for (j, g) in spec.channel_graphs.iter().enumerate() {
            for (p, &a) in members.iter().enumerate() {
                for &b in &members[p + 1..] {
                    if g.is_eligible(a) && g.is_eligible(b) && !g.has_edge(a, b) {
                        out.push(Violation::MissingAccessPointConflict {
                            access_point: i,
                            channel: j,
                            a,
                            b,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Finds a partition of the classes into blocks such that classes of one
/// block never conflict and classes of different blocks always conflict.
///
/// Requires every channel to carry the same graph with all classes
/// eligible. Blocks are ordered by their smallest member.
pub fn detect_l_partite(spec: &NetworkSpec) -> Result<Option<Vec<Vec<usize>>>> {
    let k_all = spec.num_classes;
    let first = &spec.channel_graphs[0];
    if spec.channel_graphs.iter().any(|g| g != first) {
        return Err(Error::Precondition("channel conflict graphs differ".into()));
    }
    if first.eligible.len() != k_all {
        return Err(Error::Precondition("some class is not eligible on every channel".into()));
    }
    let mut block_of: Vec<Option<usize>> = vec![None; k_all];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for k in 0..k_all {
        if block_of[k].is_some() {
            continue;
        }
        let block: Vec<usize> = (0..k_all).filter(|&m| m == k || !first.has_edge(k, m)).collect();
        for &m in &block {
            if block_of[m].is_some() {
                return Ok(None);
            }
            block_of[m] = Some(blocks.len());
        }
        blocks.push(block);
    }
    for a in 0..k_all {
        for b in a + 1..k_all {
            let same = block_of[a] == block_of[b];
            if same == first.has_edge(a, b) {
                return Ok(None);
            }
        }
    }
    Ok(Some(blocks))
}

/// Per-class CSMA parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CsmaParams<T> {
    phys_rate: Vec<T>,
    attempt_rate: Vec<T>,
    probe_prob: Vec<Vec<T>>,
}

impl<T: Scalar> CsmaParams<T> {
    /// Checks positivity, `sum_j beta_kj = 1`, and `beta_kj > 0` exactly on
    /// the channels class `k` is eligible for.
    pub fn new(spec: &NetworkSpec, phys_rate: Vec<T>, attempt_rate: Vec<T>, probe_prob: Vec<Vec<T>>) -> Result<Self> {
        let kk = spec.num_classes();
        let jj = spec.num_channels();
        if phys_rate.len() != kk || attempt_rate.len() != kk || probe_prob.len() != kk {
            return Err(Error::InvalidParams(format!("expected {kk} per-class entries")));
        }
        for k in 0..kk {
            if !(phys_rate[k] > T::zero()) || !phys_rate[k].is_finite() {
                return Err(Error::InvalidParams(format!("class {}: physical rate must be positive", k + 1)));
            }
            if !(attempt_rate[k] > T::zero()) || !attempt_rate[k].is_finite() {
                return Err(Error::InvalidParams(format!("class {}: attempt rate must be positive", k + 1)));
            }
            let row = &probe_prob[k];
            if row.len() != jj {
                return Err(Error::InvalidParams(format!("class {}: expected {jj} probe probabilities", k + 1)));
            }
            let mut sum = T::zero();
            for (j, &b) in row.iter().enumerate() {
                let eligible = spec.channel_graphs()[j].is_eligible(k);
                if !(b >= T::zero() && b <= T::one()) {
                    return Err(Error::InvalidParams(format!(
                        "class {}: probe probability on channel {} outside [0, 1]",
                        k + 1,
                        j + 1
                    )));
                }
                if eligible != (b > T::zero()) {
                    return Err(Error::InvalidParams(format!(
                        "class {}: probe probability on channel {} must be positive iff the class is eligible",
                        k + 1,
                        j + 1
                    )));
                }
                sum += b;
            }
            if (sum - T::one()).abs() > T::of(1e-6) {
                return Err(Error::InvalidParams(format!("class {}: probe probabilities sum to {sum}", k + 1)));
            }
        }
        Ok(Self {
            phys_rate,
            attempt_rate,
            probe_prob,
        })
    }

    /// Uniform probing over eligible channels with the given rates.
    pub fn uniform(spec: &NetworkSpec, phys_rate: Vec<T>, attempt_rate: Vec<T>) -> Result<Self> {
        let probe = uniform_probe(spec)?;
        Self::new(spec, phys_rate, attempt_rate, probe)
    }

    /// Unit physical rates, `alpha_k = alpha` for all classes, uniform probing.
    pub fn homogeneous(spec: &NetworkSpec, alpha: T) -> Result<Self> {
        let k = spec.num_classes();
        Self::uniform(spec, vec![T::one(); k], vec![alpha; k])
    }

    pub fn num_classes(&self) -> usize {
        self.phys_rate.len()
    }

    pub fn phys_rate(&self) -> &[T] {
        &self.phys_rate
    }

    pub fn attempt_rate(&self) -> &[T] {
        &self.attempt_rate
    }

    pub fn probe_prob(&self) -> &[Vec<T>] {
        &self.probe_prob
    }

    /// `alpha_k = nu_k / phi_k`.
    pub fn alpha(&self, k: usize) -> T {
        self.attempt_rate[k] / self.phys_rate[k]
    }

    pub fn alphas(&self) -> Vec<T> {
        (0..self.num_classes()).map(|k| self.alpha(k)).collect()
    }

    /// Same physical rates and probing, attempt rates rescaled so that
    /// every `alpha_k` equals `alpha`.
    pub fn with_alpha(&self, alpha: T) -> Self {
        Self {
            attempt_rate: self.phys_rate.iter().map(|&p| p * alpha).collect(),
            ..self.clone()
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> CsmaParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        CsmaParams {
            phys_rate: c(&self.phys_rate),
            attempt_rate: c(&self.attempt_rate),
            probe_prob: self.probe_prob.iter().map(|r| c(r)).collect(),
        }
    }
}

/// `beta_kj = 1 / |{j : k in V_j}|` on eligible channels.
pub fn uniform_probe<T: Scalar>(spec: &NetworkSpec) -> Result<Vec<Vec<T>>> {
    (0..spec.num_classes())
        .map(|k| {
            let n = spec.channel_graphs().iter().filter(|g| g.is_eligible(k)).count();
            if n == 0 {
                return Err(Error::InvalidParams(format!("class {} is not eligible on any channel", k + 1)));
            }
            Ok(spec
                .channel_graphs()
                .iter()
                .map(|g| if g.is_eligible(k) { T::one() / T::of_usize(n) } else { T::zero() })
                .collect())
        })
        .collect()
}

/// Flow arrival rates and mean flow sizes per class.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSpec<T> {
    arrival_rate: Vec<T>,
    mean_flow_size: Vec<T>,
}

impl<T: Scalar> TrafficSpec<T> {
    pub fn new(arrival_rate: Vec<T>, mean_flow_size: Vec<T>) -> Result<Self> {
        if arrival_rate.len() != mean_flow_size.len() {
            return Err(Error::InvalidParams("arrival rate and flow size lengths differ".into()));
        }
        for (k, (&l, &s)) in arrival_rate.iter().zip(&mean_flow_size).enumerate() {
            if !(l >= T::zero()) || !l.is_finite() {
                return Err(Error::InvalidParams(format!("class {}: arrival rate must be nonnegative", k + 1)));
            }
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::InvalidParams(format!("class {}: mean flow size must be positive", k + 1)));
            }
        }
        Ok(Self {
            arrival_rate,
            mean_flow_size,
        })
    }

    /// Unit mean flow sizes with the given loads as arrival rates.
    pub fn from_loads(loads: Vec<T>) -> Result<Self> {
        let n = loads.len();
        Self::new(loads, vec![T::one(); n])
    }

    pub fn num_classes(&self) -> usize {
        self.arrival_rate.len()
    }

    pub fn arrival_rate(&self) -> &[T] {
        &self.arrival_rate
    }

    pub fn mean_flow_size(&self) -> &[T] {
        &self.mean_flow_size
    }

    /// `rho_k = lambda_k * sigma_k`, in bit/s.
    pub fn load(&self, k: usize) -> T {
        self.arrival_rate[k] * self.mean_flow_size[k]
    }

    pub fn loads(&self) -> Vec<T> {
        (0..self.num_classes()).map(|k| self.load(k)).collect()
    }

    /// Scales arrival rates by `c`, keeping flow sizes.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            arrival_rate: self.arrival_rate.iter().map(|&l| l * c).collect(),
            mean_flow_size: self.mean_flow_size.clone(),
        }
    }
}
