//! Opportunistic routing over a DODAG using expected duty cycles (EDC).
//!
//! For a node `i` with forwarder set `S_i`:
//!
//! ```text
//! EDC_i = 1 / Σ p_ij  +  Σ p_ij·EDC_j / Σ p_ij  +  ω        (j ∈ S_i)
//! ```
//!
//! The root has EDC 0. Forwarder sets are grown greedily from the neighbours
//! with the lowest EDC, keeping each addition only while it lowers `EDC_i`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::link::LinkGraph;
use crate::spr::{Protocol, Route, RouteError};
use crate::trace::NodeId;

pub const DEFAULT_OMEGA: f64 = 0.1;
/// Minimum link quality for a forwarding decision.
pub const MIN_FORWARD_PRR: f64 = 0.5;

const EDC_TOLERANCE: f64 = 1e-9;
const MAX_SWEEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct EdcTable {
    pub root: NodeId,
    pub edc: BTreeMap<NodeId, f64>,
    pub forwarder_sets: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub omega: f64,
    /// Sweeps needed to converge.
    pub sweeps: usize,
}

/// EDC of a node forwarding to `set` given `(p_ij, EDC_j)` pairs.
pub fn edc_of_set(set: &[(f64, f64)], omega: f64) -> f64 {
    let p_sum: f64 = set.iter().map(|(p, _)| p).sum();
    if p_sum <= 0.0 {
        return f64::INFINITY;
    }
    let progress: f64 = set.iter().map(|(p, e)| p * e).sum();
    1.0 / p_sum + progress / p_sum + omega
}

/// Greedy forwarder set for `node` under current neighbour EDC values.
fn greedy_set(
    graph: &LinkGraph,
    node: NodeId,
    edc: &BTreeMap<NodeId, f64>,
    omega: f64,
) -> (f64, BTreeSet<NodeId>) {
    let mut cands: Vec<(NodeId, f64, f64)> = graph
        .neighbors(node)
        .filter_map(|(j, st)| {
            let e = edc.get(&j).copied().unwrap_or(f64::INFINITY);
            (e.is_finite() && st.prr > 0.0).then_some((j, st.prr, e))
        })
        .collect();
    cands.sort_by(|a, b| {
        a.2.total_cmp(&b.2)
            .then(b.1.total_cmp(&a.1))
            .then(a.0.cmp(&b.0))
    });
    let mut chosen: Vec<(f64, f64)> = Vec::new();
    let mut set = BTreeSet::new();
    let mut best = f64::INFINITY;
    for (j, p, e) in cands {
        chosen.push((p, e));
        let trial = edc_of_set(&chosen, omega);
        if trial < best {
            best = trial;
            set.insert(j);
        } else {
            chosen.pop();
            break;
        }
    }
    (best, set)
}

/// Converged EDC table rooted at `root`. Nodes with no finite path towards
/// the root keep an infinite EDC and an empty forwarder set.
pub fn compute_edc(graph: &LinkGraph, root: NodeId, omega: f64) -> Result<EdcTable, RouteError> {
    if !graph.contains(root) {
        return Err(RouteError::UnknownNode(root));
    }
    let mut edc: BTreeMap<NodeId, f64> =
        graph.nodes().iter().map(|&n| (n, f64::INFINITY)).collect();
    edc.insert(root, 0.0);
    let mut sets: BTreeMap<NodeId, BTreeSet<NodeId>> = graph
        .nodes()
        .iter()
        .map(|&n| (n, BTreeSet::new()))
        .collect();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for &node in graph.nodes() {
            if node == root {
                continue;
            }
            let (value, set) = greedy_set(graph, node, &edc, omega);
            let old = edc[&node];
            let change = if old.is_infinite() && value.is_infinite() {
                0.0
            } else {
                (old - value).abs()
            };
            max_change = max_change.max(if change.is_nan() {
                f64::INFINITY
            } else {
                change
            });
            edc.insert(node, value);
            sets.insert(node, set);
        }
        if max_change < EDC_TOLERANCE {
            break;
        }
    }
    Ok(EdcTable {
        root,
        edc,
        forwarder_sets: sets,
        omega,
        sweeps,
    })
}

impl EdcTable {
    pub fn edc(&self, node: NodeId) -> f64 {
        self.edc.get(&node).copied().unwrap_or(f64::INFINITY)
    }

    /// Largest deviation from the EDC equation over nodes with a forwarder
    /// set, re-evaluated with the link qualities in `graph`.
    pub fn residual(&self, graph: &LinkGraph) -> f64 {
        self.forwarder_sets
            .iter()
            .filter(|(n, s)| **n != self.root && !s.is_empty())
            .map(|(n, s)| {
                let pairs: Vec<(f64, f64)> = s
                    .iter()
                    .map(|j| (graph.edge(*n, *j).map_or(0.0, |st| st.prr), self.edc(*j)))
                    .collect();
                (edc_of_set(&pairs, self.omega) - self.edc(*n)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Sub-DODAG of every node: itself plus every node whose forwarder
    /// chain reaches it.
    pub fn routing_sets(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (child, parents) in &self.forwarder_sets {
            for p in parents {
                children.entry(*p).or_default().push(*child);
            }
        }
        self.edc
            .keys()
            .map(|&n| {
                let mut seen = BTreeSet::from([n]);
                let mut stack = vec![n];
                while let Some(u) = stack.pop() {
                    for &c in children.get(&u).into_iter().flatten() {
                        if seen.insert(c) {
                            stack.push(c);
                        }
                    }
                }
                (n, seen)
            })
            .collect()
    }
}

/// Default root: the node with the highest mean PRR towards all others.
pub fn select_root(graph: &LinkGraph) -> Option<NodeId> {
    let n = graph.nodes().len();
    graph
        .nodes()
        .iter()
        .map(|&node| {
            let total: f64 = graph.neighbors(node).map(|(_, s)| s.prr).sum();
            (node, if n > 1 { total / (n - 1) as f64 } else { 0.0 })
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(node, _)| node)
}

/// Any-to-any route under the ORPL forwarding rules: climb towards the root
/// until a forwarder's sub-DODAG contains `d`, then descend.
pub fn orpl_route(
    s: NodeId,
    d: NodeId,
    table: &EdcTable,
    graph: &LinkGraph,
) -> Result<Route, RouteError> {
    crate::spr::check_endpoints(graph, s, d)?;
    let sets = table.routing_sets();
    let holds = |node: NodeId| sets.get(&node).is_some_and(|set| set.contains(&d));
    let omega = table.omega;
    let mut path = vec![s];
    let mut cur = s;
    let no_route = || RouteError::NoRoute(s, d);

    while cur != d {
        let e_cur = table.edc(cur);
        let downward = holds(cur);
        let mut admissible: Vec<(NodeId, f64, f64)> = graph
            .neighbors(cur)
            .filter(|(b, st)| st.prr > MIN_FORWARD_PRR && !path.contains(b))
            .filter_map(|(b, st)| {
                let e_b = table.edc(b);
                let ok = if downward {
                    holds(b) && e_cur < e_b + omega
                } else {
                    e_b + omega < e_cur
                };
                ok.then_some((b, e_b, st.prr))
            })
            .collect();
        if !downward && admissible.iter().any(|(b, _, _)| holds(*b)) {
            admissible.retain(|(b, _, _)| holds(*b));
        }
        let next = if let Some(hit) = admissible.iter().find(|(b, _, _)| *b == d) {
            hit.0
        } else {
            admissible
                .iter()
                .min_by(|a, b| {
                    a.1.total_cmp(&b.1)
                        .then(b.2.total_cmp(&a.2))
                        .then(a.0.cmp(&b.0))
                })
                .ok_or_else(no_route)?
                .0
        };
        path.push(next);
        cur = next;
    }
    Ok(Route {
        protocol: Protocol::Orpl,
        hops: path,
        cost: f64::NAN,
        fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrickleConfig {
    pub i_min_ms: u64,
    pub i_max_ms: u64,
    /// Redundancy constant; `u32::MAX` disables suppression.
    pub redundancy_k: u32,
}

impl Default for TrickleConfig {
    fn default() -> Self {
        TrickleConfig {
            i_min_ms: 400,
            i_max_ms: 1000,
            redundancy_k: 4,
        }
    }
}

impl TrickleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.i_min_ms == 0 || self.i_min_ms > self.i_max_ms {
            return Err(format!(
                "trickle bounds must satisfy 0 < i_min ({}) <= i_max ({})",
                self.i_min_ms, self.i_max_ms
            ));
        }
        if self.redundancy_k == 0 {
            return Err("trickle redundancy constant must be at least 1".into());
        }
        Ok(())
    }
}

/// Trickle timer on the window clock.
///
/// Interval bounds are rounded to whole windows (at least one). In each
/// interval the timer fires once, at a window drawn from the second half of
/// the interval, and the EDC table is recomputed then: from its own
/// broadcast, or, when suppressed by `k` consistent broadcasts, from the
/// broadcasts it heard. Intervals double up to the upper bound and an
/// inconsistency resets them to the lower bound.
#[derive(Debug, Clone)]
pub struct Trickle {
    i_min: u64,
    i_max: u64,
    k: u32,
    neighbours: u32,
    rng: ChaCha8Rng,
    interval: u64,
    start: u64,
    fire_at: u64,
    pub transmissions: u64,
    pub suppressions: u64,
}

impl Trickle {
    pub fn new(cfg: TrickleConfig, window_ms: u64, neighbours: u32, seed: u64) -> Self {
        let to_windows = |ms: u64| ((ms as f64 / window_ms as f64).round() as u64).max(1);
        let i_min = to_windows(cfg.i_min_ms);
        let i_max = to_windows(cfg.i_max_ms).max(i_min);
        let mut t = Trickle {
            i_min,
            i_max,
            k: cfg.redundancy_k,
            neighbours,
            rng: ChaCha8Rng::seed_from_u64(seed),
            interval: i_min,
            start: 0,
            fire_at: 0,
            transmissions: 0,
            suppressions: 0,
        };
        t.begin(0, i_min);
        t
    }

    fn begin(&mut self, start: u64, interval: u64) {
        self.start = start;
        self.interval = interval;
        self.fire_at = start + self.rng.random_range(interval / 2..interval);
    }

    /// Advances to `window` (called once per window, in order) and reports
    /// whether the table is recomputed there.
    pub fn tick(&mut self, window: u64) -> bool {
        while window >= self.start + self.interval {
            let next = (self.interval * 2).min(self.i_max);
            self.begin(self.start + self.interval, next);
        }
        if window != self.fire_at {
            return false;
        }
        let heard = (0..self.neighbours)
            .filter(|_| self.rng.random_bool(0.5))
            .count() as u32;
        if heard < self.k {
            self.transmissions += 1;
        } else {
            self.suppressions += 1;
        }
        true
    }

    /// Routing state changed at `window`: restart from the shortest interval
    /// after it.
    pub fn reset(&mut self, window: u64) {
        if self.interval != self.i_min || self.fire_at <= window {
            self.begin(window + 1, self.i_min);
        }
    }
}

/// Refresh decisions for windows `0..=window_index` of an undisturbed timer.
pub fn trickle_schedule(
    n_windows: usize,
    cfg: TrickleConfig,
    window_ms: u64,
    seed: u64,
) -> Vec<bool> {
    let mut t = Trickle::new(cfg, window_ms, 9, seed);
    (0..n_windows as u64).map(|w| t.tick(w)).collect()
}

/// Whether the EDC table is recomputed at `window_index` on the default
/// 500 ms window clock.
pub fn trickle_refresh(window_index: usize, cfg: TrickleConfig, seed: u64) -> bool {
    trickle_schedule(window_index + 1, cfg, crate::trace::DEFAULT_WINDOW_MS, seed)[window_index]
}
