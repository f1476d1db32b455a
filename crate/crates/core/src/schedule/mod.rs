//! Feasible schedules, their enumeration, and the weights used to compare
//! them.

mod limit;
mod weights;

pub use limit::{alpha_limit_distribution, AlphaLimit};
pub use weights::{lemma2_log_bound, log_v_minus_log_u, max_weight, weight_u, WeightDomain};

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::topology::NetworkSpec;

/// Default upper bound on the number of schedules an exact method will
/// enumerate.
pub const DEFAULT_SCHEDULE_LIMIT: usize = 10_000_000;

/// Number of flows of each class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NetworkState(Vec<u32>);

impl NetworkState {
    pub fn new(flows: Vec<u32>) -> Self {
        Self(flows)
    }

    pub fn zeros(num_classes: usize) -> Self {
        Self(vec![0; num_classes])
    }

    pub fn flows(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, k: usize) -> u32 {
        self.0[k]
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    /// `|x| = sum_k x_k`.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&v| v as u64).sum()
    }

    pub fn increment(&mut self, k: usize) {
        self.0[k] += 1;
    }

    pub fn decrement(&mut self, k: usize) {
        self.0[k] -= 1;
    }

    pub fn plus(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.increment(k);
        s
    }

    pub fn minus(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.decrement(k);
        s
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl From<Vec<u32>> for NetworkState {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// Binary `K x J` activation matrix, stored as one class bitmask per channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Schedule {
    num_classes: usize,
    channels: Vec<u64>,
}

impl Schedule {
    pub fn empty(num_classes: usize, num_channels: usize) -> Self {
        Self {
            num_classes,
            channels: vec![0; num_channels],
        }
    }

    /// Builds from per-channel class sets (0-based).
    pub fn from_channel_sets(num_classes: usize, sets: &[&[usize]]) -> Self {
        let channels = sets
            .iter()
            .map(|s| s.iter().fold(0u64, |m, &k| m | (1 << k)))
            .collect();
        Self { num_classes, channels }
    }

    pub(crate) fn from_masks(num_classes: usize, channels: Vec<u64>) -> Self {
        Self { num_classes, channels }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_mask(&self, j: usize) -> u64 {
        self.channels[j]
    }

    pub fn is_active(&self, k: usize, j: usize) -> bool {
        self.channels[j] >> k & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.channels.iter().all(|&m| m == 0)
    }

    /// `y_k = sum_j y_kj`.
    pub fn per_class(&self, k: usize) -> u32 {
        self.channels.iter().filter(|&&m| m >> k & 1 == 1).count() as u32
    }

    pub fn per_class_counts(&self) -> Vec<u32> {
        (0..self.num_classes).map(|k| self.per_class(k)).collect()
    }

    /// Total number of active (class, channel) pairs.
    pub fn size(&self) -> u32 {
        self.channels.iter().map(|m| m.count_ones()).sum()
    }

    pub fn with(&self, k: usize, j: usize, active: bool) -> Self {
        let mut s = self.clone();
        s.set(k, j, active);
        s
    }

    pub fn set(&mut self, k: usize, j: usize, active: bool) {
        if active {
            self.channels[j] |= 1 << k;
        } else {
            self.channels[j] &= !(1 << k);
        }
    }

    /// Whether activating class `k` on channel `j` keeps the schedule
    /// feasible in `spec` given at most `flows_k` class-`k` links.
    pub fn can_activate(&self, spec: &NetworkSpec, k: usize, j: usize, flows_k: u32) -> bool {
        let m = self.channels[j];
        if m >> k & 1 == 1 || spec.eligible_mask(j) >> k & 1 == 0 {
            return false;
        }
        if m & spec.neighbor_mask(j, k) != 0 {
            return false;
        }
        if self.per_class(k) >= flows_k {
            return false;
        }
        if let Some(i) = spec.downlink_owner(k) {
            let dl = spec.downlink_masks()[i];
            if self.channels.iter().any(|&c| c & dl != 0) {
                return false;
            }
        }
        true
    }

    /// Checks every feasibility constraint against `spec` and, if given,
    /// the flow counts of `state`.
    pub fn is_feasible(&self, spec: &NetworkSpec, state: Option<&NetworkState>) -> bool {
        if self.channels.len() != spec.num_channels() {
            return false;
        }
        for (j, &m) in self.channels.iter().enumerate() {
            if m & !spec.eligible_mask(j) != 0 {
                return false;
            }
            let mut rest = m;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                if m & spec.neighbor_mask(j, k) != 0 {
                    return false;
                }
            }
        }
        if let Some(x) = state {
            if (0..self.num_classes).any(|k| self.per_class(k) > x.get(k)) {
                return false;
            }
        }
        spec.downlink_masks().iter().all(|&dl| {
            let total: u32 = self.channels.iter().map(|c| (c & dl).count_ones()).sum();
            total <= 1
        })
    }

    /// Row-major 0/1 text, one line per class, channels separated by spaces.
    pub fn to_matrix_string(&self) -> String {
        let mut out = String::new();
        for k in 0..self.num_classes {
            let row: Vec<&str> = (0..self.channels.len())
                .map(|j| if self.is_active(k, j) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Flattened matrix (class-major) as a compact 0/1 string.
    pub fn flat_key(&self) -> String {
        let mut s = String::with_capacity(self.num_classes * self.channels.len());
        for k in 0..self.num_classes {
            for j in 0..self.channels.len() {
                s.push(if self.is_active(k, j) { '1' } else { '0' });
            }
        }
        s
    }

    pub fn parse_matrix(text: &str) -> Result<Self> {
        let rows: Vec<Vec<bool>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| match t {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        other => Err(Error::Parse(format!("bad schedule entry {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<_>>()?;
        let jj = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != jj) || jj == 0 {
            return Err(Error::Parse("ragged schedule matrix".into()));
        }
        let mut s = Schedule::empty(rows.len(), jj);
        for (k, r) in rows.iter().enumerate() {
            for (j, &b) in r.iter().enumerate() {
                s.set(k, j, b);
            }
        }
        Ok(s)
    }
}

impl Ord for Schedule {
    /// Lexicographic on the flattened class-major matrix.
    fn cmp(&self, other: &Self) -> Ordering {
        for k in 0..self.num_classes.max(other.num_classes) {
            for j in 0..self.channels.len().max(other.channels.len()) {
                let a = self.channels.get(j).is_some_and(|m| m >> k & 1 == 1);
                let b = other.channels.get(j).is_some_and(|m| m >> k & 1 == 1);
                match a.cmp(&b) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for Schedule {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.flat_key())
    }
}

/// Independent subsets of `allowed` in the conflict graph of channel `j`.
fn independent_sets(spec: &NetworkSpec, j: usize, allowed: u64) -> Vec<u64> {
    fn rec(spec: &NetworkSpec, j: usize, candidates: u64, current: u64, out: &mut Vec<u64>) {
        out.push(current);
        let mut rest = candidates;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            // Only classes above k remain candidates, so each set is produced once.
            rec(spec, j, rest & !spec.neighbor_mask(j, k), current | (1 << k), out);
        }
    }
    let mut out = Vec::new();
    rec(spec, j, allowed & spec.eligible_mask(j), 0, &mut out);
    out
}

/// Enumerates `Y(x)` when `state` is given, else `Y`, sorted
/// lexicographically (the empty schedule first).
pub fn enumerate_feasible(spec: &NetworkSpec, state: Option<&NetworkState>) -> Result<Vec<Schedule>> {
    enumerate_feasible_with_limit(spec, state, DEFAULT_SCHEDULE_LIMIT)
}

pub fn enumerate_feasible_with_limit(
    spec: &NetworkSpec,
    state: Option<&NetworkState>,
    limit: usize,
) -> Result<Vec<Schedule>> {
    let kk = spec.num_classes();
    let jj = spec.num_channels();
    if let Some(x) = state {
        if x.num_classes() != kk {
            return Err(Error::Precondition(format!(
                "state has {} classes, network has {kk}",
                x.num_classes()
            )));
        }
    }
    let cap: Vec<u32> = (0..kk)
        .map(|k| state.map_or(jj as u32, |x| x.get(k).min(jj as u32)))
        .collect();
    let allowed = (0..kk).filter(|&k| cap[k] > 0).fold(0u64, |m, k| m | (1 << k));
    let per_channel: Vec<Vec<u64>> = (0..jj).map(|j| independent_sets(spec, j, allowed)).collect();

    struct Walk<'a> {
        per_channel: &'a [Vec<u64>],
        cap: &'a [u32],
        downlink: &'a [u64],
        used: Vec<u32>,
        current: Vec<u64>,
        out: Vec<Vec<u64>>,
        limit: usize,
    }

    impl Walk<'_> {
        fn go(&mut self, j: usize) -> bool {
            if j == self.per_channel.len() {
                if self.out.len() >= self.limit {
                    return false;
                }
                self.out.push(self.current.clone());
                return true;
            }
            for &set in &self.per_channel[j] {
                let mut rest = set;
                let mut ok = true;
                while rest != 0 {
                    let k = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    if self.used[k] >= self.cap[k] {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                if self.downlink.iter().any(|&dl| {
                    let prior: u32 = self.current[..j].iter().map(|c| (c & dl).count_ones()).sum();
                    prior + (set & dl).count_ones() > 1
                }) {
                    continue;
                }
                let mut rest = set;
                while rest != 0 {
                    let k = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    self.used[k] += 1;
                }
                self.current[j] = set;
                let cont = self.go(j + 1);
                let mut rest = set;
                while rest != 0 {
                    let k = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    self.used[k] -= 1;
                }
                self.current[j] = 0;
                if !cont {
                    return false;
                }
            }
            true
        }
    }

    let mut walk = Walk {
        per_channel: &per_channel,
        cap: &cap,
        downlink: spec.downlink_masks(),
        used: vec![0; kk],
        current: vec![0; jj],
        out: Vec::new(),
        limit,
    };
    if !walk.go(0) {
        return Err(Error::CapacityGuard { limit });
    }
    let mut schedules: Vec<Schedule> = walk.out.into_iter().map(|c| Schedule::from_masks(kk, c)).collect();
    schedules.sort();
    Ok(schedules)
}
