//! Networks used throughout the examples: the 4-class ad-hoc network, the
//! three multipartite graphs, the two- and three-access-point networks and
//! the bow-tie.
//!
//! Class indices here are 0-based; the comments use the 1-based labels of
//! the bundled scenario files.

use crate::topology::{AccessPoint, ChannelGraph, Mode, NetworkSpec};

fn edges(list: &[(usize, usize)]) -> Vec<(usize, usize)> {
    list.iter().map(|&(a, b)| (a - 1, b - 1)).collect()
}

fn build(k: usize, j: usize, e: &[(usize, usize)], mode: Mode) -> NetworkSpec {
    NetworkSpec::validated(k, vec![ChannelGraph::complete_eligibility(k, edges(e)); j], mode)
        .expect("bundled network is valid")
}

fn one_downlink_per_ap(k: usize) -> Mode {
    Mode::Infrastructure {
        access_points: (0..k).map(|c| AccessPoint::new([], [c])).collect(),
    }
}

/// Ad-hoc network with 4 classes, edges {12, 23, 24, 34}, two channels.
pub fn fig1() -> NetworkSpec {
    build(4, 2, &[(1, 2), (2, 3), (2, 4), (3, 4)], Mode::AdHoc)
}

/// Star around class 3: blocks {3} and {1, 2, 4, 5}. One channel.
pub fn fig2a() -> NetworkSpec {
    build(5, 1, &[(1, 3), (2, 3), (3, 4), (3, 5)], Mode::AdHoc)
}

/// Complete bipartite graph between {1, 2, 3} and {4, 5, 6} on `channels` channels.
pub fn fig2b(channels: usize) -> NetworkSpec {
    let mut e = Vec::new();
    for a in 1..=3 {
        for b in 4..=6 {
            e.push((a, b));
        }
    }
    build(6, channels, &e, Mode::AdHoc)
}

/// Complete tripartite graph with blocks {1, 2}, {3, 4}, {5}. One channel.
pub fn fig2c() -> NetworkSpec {
    let blocks: [&[usize]; 3] = [&[1, 2], &[3, 4], &[5]];
    let mut e = Vec::new();
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            for &x in *a {
                for &y in *b {
                    e.push((x, y));
                }
            }
        }
    }
    build(5, 1, &e, Mode::AdHoc)
}

/// Two access points: U1 = {2}, D1 = {1, 3}, U2 = {5}, D2 = {4, 6}; the
/// neighbouring classes 3 and 4 also conflict. One channel.
pub fn fig3() -> NetworkSpec {
    build(
        6,
        1,
        &[(1, 2), (1, 3), (2, 3), (4, 5), (4, 6), (5, 6), (3, 4)],
        Mode::Infrastructure {
            access_points: vec![AccessPoint::new([1], [0, 2]), AccessPoint::new([4], [3, 5])],
        },
    )
}

/// Three access points in a line, one downlink class each, one channel.
pub fn fig4() -> NetworkSpec {
    build(3, 1, &[(1, 2), (2, 3)], one_downlink_per_ap(3))
}

/// Bow-tie: two triangles {1, 2, 3} and {3, 4, 5} sharing class 3, five
/// access points with one downlink class each, two channels.
pub fn bowtie() -> NetworkSpec {
    build(
        5,
        2,
        &[(1, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 5)],
        one_downlink_per_ap(5),
    )
}
