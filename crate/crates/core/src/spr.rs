//! Shortest-path routing over ETX-weighted hub links, with an optional hop
//! limit and a direct-link fallback when no finite route exists.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{LinkGraph, LinkStats};
use crate::trace::{Link, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Unrestricted shortest path.
    Spr,
    /// Shortest path with at most two hops.
    SprHop,
    Cmr,
    Orpl,
    Loadng,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Spr,
        Protocol::SprHop,
        Protocol::Cmr,
        Protocol::Orpl,
        Protocol::Loadng,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Spr => "spr",
            Protocol::SprHop => "spr_hop",
            Protocol::Cmr => "cmr",
            Protocol::Orpl => "orpl",
            Protocol::Loadng => "loadng",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("hop limit must be at least 1")]
    BadHopLimit,
    #[error("no gain observed on link {}->{}", .0.tx, .0.rx)]
    MissingGain(Link),
    #[error("no route from {0} to {1}")]
    NoRoute(NodeId, NodeId),
}

/// A simple path tagged with the protocol that chose it.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub protocol: Protocol,
    pub hops: Vec<NodeId>,
    /// Sum of edge weights along the path; infinite for a fallback over a
    /// dead direct link.
    pub cost: f64,
    /// Set when no finite route existed and the direct link was used anyway.
    pub fallback: bool,
}

impl Route {
    pub fn hop_count(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn source(&self) -> NodeId {
        self.hops[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.hops.last().expect("route has at least two nodes")
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.hops.windows(2).map(|w| Link::new(w[0], w[1]))
    }
}

#[derive(Debug, Clone)]
struct Label {
    cost: f64,
    path: Vec<NodeId>,
}

impl Label {
    // cost, then fewer hops, then lexicographic node sequence
    fn cmp_key(&self, other: &Label) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }

    fn extend(&self, v: NodeId, w: f64) -> Label {
        let mut path = self.path.clone();
        path.push(v);
        Label {
            cost: self.cost + w,
            path,
        }
    }
}

fn offer(slot: &mut Option<Label>, cand: Label) {
    if slot
        .as_ref()
        .is_none_or(|cur| cand.cmp_key(cur) == Ordering::Less)
    {
        *slot = Some(cand);
    }
}

/// Minimum-weight simple path from `s` to `d` using edges whose weight is
/// finite. Ties prefer fewer hops, then the lexicographically smallest node
/// sequence. Costs accumulate from the source outwards.
pub(crate) fn best_path<W>(
    graph: &LinkGraph,
    s: NodeId,
    d: NodeId,
    hop_limit: Option<usize>,
    weight: W,
) -> Option<(Vec<NodeId>, f64)>
where
    W: Fn(&LinkStats) -> f64,
{
    let best = match hop_limit {
        None => dijkstra(graph, s, d, &weight),
        Some(h) => layered(graph, s, d, h, &weight),
    };
    best.map(|l| (l.path, l.cost))
}

fn dijkstra<W: Fn(&LinkStats) -> f64>(
    graph: &LinkGraph,
    s: NodeId,
    d: NodeId,
    weight: &W,
) -> Option<Label> {
    let mut labels: BTreeMap<NodeId, Label> = BTreeMap::new();
    let mut settled = std::collections::BTreeSet::new();
    labels.insert(
        s,
        Label {
            cost: 0.0,
            path: vec![s],
        },
    );
    loop {
        let (u, lab) = labels
            .iter()
            .filter(|(n, _)| !settled.contains(*n))
            .min_by(|a, b| a.1.cmp_key(b.1))
            .map(|(n, l)| (*n, l.clone()))?;
        if u == d {
            return Some(lab);
        }
        settled.insert(u);
        for (v, stats) in graph.neighbors(u) {
            let w = weight(stats);
            if settled.contains(&v) || !w.is_finite() {
                continue;
            }
            let cand = lab.extend(v, w);
            let mut slot = labels.remove(&v);
            offer(&mut slot, cand);
            labels.insert(v, slot.expect("offer always fills an empty slot"));
        }
    }
}

fn layered<W: Fn(&LinkStats) -> f64>(
    graph: &LinkGraph,
    s: NodeId,
    d: NodeId,
    hop_limit: usize,
    weight: &W,
) -> Option<Label> {
    let mut frontier: BTreeMap<NodeId, Label> = BTreeMap::new();
    frontier.insert(
        s,
        Label {
            cost: 0.0,
            path: vec![s],
        },
    );
    let mut best: Option<Label> = None;
    for _ in 0..hop_limit {
        let mut next: BTreeMap<NodeId, Option<Label>> = BTreeMap::new();
        for (u, lab) in &frontier {
            for (v, stats) in graph.neighbors(*u) {
                let w = weight(stats);
                if !w.is_finite() || lab.path.contains(&v) {
                    continue;
                }
                let cand = lab.extend(v, w);
                if v == d {
                    offer(&mut best, cand);
                } else {
                    offer(next.entry(v).or_default(), cand);
                }
            }
        }
        frontier = next
            .into_iter()
            .filter_map(|(n, l)| l.map(|l| (n, l)))
            .collect();
        if frontier.is_empty() {
            break;
        }
    }
    best
}

pub(crate) fn check_endpoints(graph: &LinkGraph, s: NodeId, d: NodeId) -> Result<(), RouteError> {
    for n in [s, d] {
        if !graph.contains(n) {
            return Err(RouteError::UnknownNode(n));
        }
    }
    if s == d {
        return Err(RouteError::SameEndpoints(s));
    }
    Ok(())
}

/// Minimum-ETX route from `s` to `d`. With a hop limit only paths of at most
/// that many hops qualify. When nothing finite qualifies the direct link is
/// returned with `fallback` set.
pub fn shortest_path(
    graph: &LinkGraph,
    s: NodeId,
    d: NodeId,
    hop_limit: Option<usize>,
) -> Result<Route, RouteError> {
    check_endpoints(graph, s, d)?;
    if hop_limit == Some(0) {
        return Err(RouteError::BadHopLimit);
    }
    let protocol = if hop_limit.is_some() {
        Protocol::SprHop
    } else {
        Protocol::Spr
    };
    Ok(match best_path(graph, s, d, hop_limit, |st| st.etx) {
        Some((hops, cost)) => Route {
            protocol,
            hops,
            cost,
            fallback: false,
        },
        None => Route {
            protocol,
            hops: vec![s, d],
            cost: f64::INFINITY,
            fallback: true,
        },
    })
}

/// Bottleneck gain of a multi-hop route: the minimum hop gain.
pub fn spr_combined_gain<G>(route: &Route, gains: G) -> Result<f64, RouteError>
where
    G: Fn(Link) -> Option<f64>,
{
    route
        .links()
        .map(|l| gains(l).ok_or(RouteError::MissingGain(l)))
        .try_fold(f64::INFINITY, |acc, g| g.map(|g| acc.min(g)))
}
