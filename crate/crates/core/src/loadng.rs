//! Reactive distance-vector routing with a route hold time.
//!
//! Routes are discovered on demand over an RSSI distance proxy and cached per
//! (source, destination) until they expire, break, or a delivery over them
//! fails.

use std::collections::BTreeMap;

use crate::link::{LinkGraph, LinkStats};
use crate::spr::{best_path, check_endpoints, Protocol, Route, RouteError};
use crate::trace::NodeId;

pub const DEFAULT_RHT_MS: u64 = 500;
pub const DEFAULT_DISTANCE_OFFSET_DB: f64 = 40.0;

/// Edge weight standing in for distance: weaker mean gain means farther.
pub fn distance_proxy(stats: &LinkStats, offset_db: f64) -> f64 {
    (-stats.mean_gain_db - offset_db).max(0.0)
}

pub fn discover_route(
    s: NodeId,
    d: NodeId,
    graph: &LinkGraph,
    offset_db: f64,
) -> Result<Route, RouteError> {
    check_endpoints(graph, s, d)?;
    best_path(graph, s, d, None, |st| distance_proxy(st, offset_db))
        .map(|(hops, cost)| Route {
            protocol: Protocol::Loadng,
            hops,
            cost,
            fallback: false,
        })
        .ok_or(RouteError::NoRoute(s, d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub route: Route,
    pub established_at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ReactiveRouteCache {
    entries: BTreeMap<(NodeId, NodeId), CacheEntry>,
    pub rht_ms: u64,
    pub offset_db: f64,
    pub discoveries: u64,
}

impl ReactiveRouteCache {
    pub fn new(rht_ms: u64, offset_db: f64) -> Self {
        ReactiveRouteCache {
            entries: BTreeMap::new(),
            rht_ms,
            offset_db,
            discoveries: 0,
        }
    }

    pub fn entry(&self, s: NodeId, d: NodeId) -> Option<&CacheEntry> {
        self.entries.get(&(s, d))
    }

    /// Returns the cached route while it is younger than the hold time and
    /// every hop is still a graph edge; otherwise rediscovers and caches.
    pub fn serve_or_repair(
        &mut self,
        s: NodeId,
        d: NodeId,
        now_ms: u64,
        graph: &LinkGraph,
    ) -> Result<Route, RouteError> {
        if let Some(e) = self.entries.get(&(s, d)) {
            let fresh = now_ms.saturating_sub(e.established_at_ms) < self.rht_ms
                && now_ms >= e.established_at_ms;
            let intact = e.route.links().all(|l| graph.edge(l.tx, l.rx).is_some());
            if fresh && intact {
                return Ok(e.route.clone());
            }
        }
        self.entries.remove(&(s, d));
        self.discoveries += 1;
        let route = discover_route(s, d, graph, self.offset_db)?;
        self.entries.insert(
            (s, d),
            CacheEntry {
                route: route.clone(),
                established_at_ms: now_ms,
            },
        );
        Ok(route)
    }

    /// Drops the entry after a failed delivery.
    pub fn invalidate(&mut self, s: NodeId, d: NodeId) {
        self.entries.remove(&(s, d));
    }
}
