//! Per-window link statistics and the neighbour graph built from them.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::trace::{Link, Network, NodeId, TimestampWindow};

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("no samples for link {}->{}", .0.tx, .0.rx)]
    NoData(Link),
}

/// Outage, ETX and reception statistics of one directed link in one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStats {
    pub outage_prob: f64,
    /// `1 / (1 - outage_prob)`, infinite when every sample is in outage.
    pub etx: f64,
    pub prr: f64,
    pub mean_gain_db: f64,
}

pub fn etx_from_outage(outage_prob: f64) -> f64 {
    if outage_prob >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - outage_prob)
    }
}

impl LinkStats {
    pub fn from_samples(gains_db: &[f64], sensitivity_dbm: f64, tx_power_dbm: f64) -> Option<Self> {
        if gains_db.is_empty() {
            return None;
        }
        let n = gains_db.len() as f64;
        let below = gains_db
            .iter()
            .filter(|&&g| g + tx_power_dbm < sensitivity_dbm)
            .count();
        let outage_prob = below as f64 / n;
        Some(LinkStats {
            outage_prob,
            etx: etx_from_outage(outage_prob),
            prr: 1.0 - outage_prob,
            mean_gain_db: gains_db.iter().sum::<f64>() / n,
        })
    }
}

pub fn estimate_link(
    window: &TimestampWindow<'_>,
    link: Link,
    sensitivity_dbm: f64,
    tx_power_dbm: f64,
) -> Result<LinkStats, LinkError> {
    window
        .samples(link)
        .and_then(|s| LinkStats::from_samples(s, sensitivity_dbm, tx_power_dbm))
        .ok_or(LinkError::NoData(link))
}

/// Directed neighbour graph; an edge exists iff its PRR is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGraph {
    nodes: BTreeSet<NodeId>,
    adj: BTreeMap<NodeId, BTreeMap<NodeId, LinkStats>>,
    pub sensitivity_dbm: f64,
}

impl LinkGraph {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>, sensitivity_dbm: f64) -> Self {
        LinkGraph {
            nodes: nodes.into_iter().collect(),
            adj: BTreeMap::new(),
            sensitivity_dbm,
        }
    }

    /// Inserts `stats` for `link` when its PRR is positive; returns whether
    /// an edge was added. Both endpoints join the node set.
    pub fn insert(&mut self, link: Link, stats: LinkStats) -> bool {
        self.nodes.insert(link.tx);
        self.nodes.insert(link.rx);
        if stats.prr > 0.0 {
            self.adj.entry(link.tx).or_default().insert(link.rx, stats);
            true
        } else {
            false
        }
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn edge(&self, tx: NodeId, rx: NodeId) -> Option<&LinkStats> {
        self.adj.get(&tx).and_then(|m| m.get(&rx))
    }

    /// Outgoing edges of `node` in ascending neighbour order.
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = (NodeId, &LinkStats)> + '_ {
        self.adj
            .get(&node)
            .into_iter()
            .flat_map(|m| m.iter().map(|(n, s)| (*n, s)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (Link, &LinkStats)> + '_ {
        self.adj
            .iter()
            .flat_map(|(tx, m)| m.iter().map(move |(rx, s)| (Link::new(*tx, *rx), s)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeMap::len).sum()
    }

    /// Subgraph induced by `keep`.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> LinkGraph {
        let nodes: BTreeSet<NodeId> = self.nodes.intersection(keep).copied().collect();
        let adj = self
            .adj
            .iter()
            .filter(|(tx, _)| keep.contains(tx))
            .map(|(tx, m)| {
                let kept: BTreeMap<NodeId, LinkStats> = m
                    .iter()
                    .filter(|(rx, _)| keep.contains(rx))
                    .map(|(rx, s)| (*rx, *s))
                    .collect();
                (*tx, kept)
            })
            .filter(|(_, m)| !m.is_empty())
            .collect();
        LinkGraph {
            nodes,
            adj,
            sensitivity_dbm: self.sensitivity_dbm,
        }
    }

    /// The tier-2 mesh: hubs and the links between them.
    pub fn hub_mesh(&self, network: &Network) -> LinkGraph {
        self.induced(&network.hubs().into_iter().collect())
    }
}

/// Builds the neighbour graph of a window using each transmitter's
/// configured power.
pub fn build_graph(
    window: &TimestampWindow<'_>,
    network: &Network,
    sensitivity_dbm: f64,
) -> LinkGraph {
    let mut graph = LinkGraph::new(network.nodes(), sensitivity_dbm);
    for (link, samples) in window.link_samples() {
        if let Some(stats) =
            LinkStats::from_samples(samples, sensitivity_dbm, network.tx_power_dbm(link.tx))
        {
            graph.insert(link, stats);
        }
    }
    graph
}
