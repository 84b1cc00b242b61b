//! Cooperative multi-path routing.
//!
//! Each route-hop between two hubs combines three branches by selection:
//! the direct hub link and two decode-and-forward branches through the
//! transmitting hub's on-body sensors. A relayed branch is only as good as
//! its weaker link-hop, and a path is only as good as its weakest route-hop.

use serde::Serialize;

use crate::link::LinkGraph;
use crate::spr::{check_endpoints, shortest_path, Protocol, Route, RouteError};
use crate::trace::{Link, Network, NodeId};

/// Maximum number of route-hops per CMR path.
pub const CMR_HOP_LIMIT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteHop {
    pub src_hub: NodeId,
    pub dst_hub: NodeId,
    /// Sensors of the transmitting BAN, used as relays.
    pub relays: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmrPath {
    pub route: Route,
    pub hops: Vec<RouteHop>,
}

impl CmrPath {
    fn from_route(route: Route, network: &Network) -> Self {
        let hops = route
            .links()
            .map(|l| RouteHop {
                src_hub: l.tx,
                dst_hub: l.rx,
                relays: network
                    .ban_of(l.tx)
                    .map(|b| b.sensors.to_vec())
                    .unwrap_or_default(),
            })
            .collect();
        CmrPath { route, hops }
    }

    pub fn route_hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn relay_counts(&self) -> Vec<usize> {
        self.hops.iter().map(|h| h.relays.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmrPlan {
    pub p1: CmrPath,
    pub p2: Option<CmrPath>,
}

/// Selection-combined value of one route-hop. Relay branches with an
/// unobserved link-hop are skipped.
pub fn selection_combine<G>(hop: &RouteHop, gains: G) -> Result<f64, RouteError>
where
    G: Fn(Link) -> Option<f64>,
{
    let direct_link = Link::new(hop.src_hub, hop.dst_hub);
    let direct = gains(direct_link).ok_or(RouteError::MissingGain(direct_link))?;
    let best = hop
        .relays
        .iter()
        .filter_map(|&r| {
            let up = gains(Link::new(hop.src_hub, r))?;
            let down = gains(Link::new(r, hop.dst_hub))?;
            Some(up.min(down))
        })
        .fold(direct, f64::max);
    Ok(best)
}

/// Combined value of a whole path: the weakest route-hop.
pub fn path_combined_gain<G>(hops: &[RouteHop], gains: G) -> Result<f64, RouteError>
where
    G: Fn(Link) -> Option<f64>,
{
    hops.iter().try_fold(f64::INFINITY, |acc, h| {
        Ok(acc.min(selection_combine(h, &gains)?))
    })
}

/// Primary path from hop-limited SPR plus, where one exists, the cheapest
/// finite alternative that avoids the primary's intermediate hub.
pub fn plan_routes(
    s: NodeId,
    d: NodeId,
    graph: &LinkGraph,
    network: &Network,
) -> Result<CmrPlan, RouteError> {
    check_endpoints(graph, s, d)?;
    let mut p1 = shortest_path(graph, s, d, Some(CMR_HOP_LIMIT))?;
    p1.protocol = Protocol::Cmr;
    let avoid = &p1.hops[1..p1.hops.len() - 1];

    let mut candidates: Vec<(f64, Vec<NodeId>)> = Vec::new();
    if p1.hop_count() != 1 {
        if let Some(st) = graph.edge(s, d) {
            candidates.push((st.etx, vec![s, d]));
        }
    }
    for (r, up) in graph.neighbors(s) {
        if r == d || avoid.contains(&r) {
            continue;
        }
        if let Some(down) = graph.edge(r, d) {
            candidates.push((up.etx + down.etx, vec![s, r, d]));
        }
    }
    let p2 = candidates
        .into_iter()
        .filter(|(c, _)| c.is_finite())
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.len().cmp(&b.1.len()))
                .then_with(|| a.1.cmp(&b.1))
        })
        .map(|(cost, hops)| {
            CmrPath::from_route(
                Route {
                    protocol: Protocol::Cmr,
                    hops,
                    cost,
                    fallback: false,
                },
                network,
            )
        });

    Ok(CmrPlan {
        p1: CmrPath::from_route(p1, network),
        p2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    Primary,
    Alternate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmrDelivery {
    pub success: bool,
    /// The last path a copy of the packet was sent over.
    pub last_path: PathChoice,
    pub retransmitted: bool,
    /// Best combined value over all attempts, in the units of the lookup.
    pub combined: f64,
}

/// Delivers one packet over `plan`. `rx_dbm` gives received power per link
/// at the delivery instant. The alternate path is tried only after the
/// primary fails; a single primary retransmission is allowed only when the
/// primary has one route-hop and there is no alternate.
pub fn cmr_deliver<G>(
    plan: &CmrPlan,
    rx_dbm: G,
    sensitivity_dbm: f64,
) -> Result<CmrDelivery, RouteError>
where
    G: Fn(Link) -> Option<f64>,
{
    let c1 = path_combined_gain(&plan.p1.hops, &rx_dbm)?;
    if c1 >= sensitivity_dbm {
        return Ok(CmrDelivery {
            success: true,
            last_path: PathChoice::Primary,
            retransmitted: false,
            combined: c1,
        });
    }
    if let Some(p2) = &plan.p2 {
        let c2 = path_combined_gain(&p2.hops, &rx_dbm)?;
        return Ok(CmrDelivery {
            success: c2 >= sensitivity_dbm,
            last_path: PathChoice::Alternate,
            retransmitted: false,
            combined: c1.max(c2),
        });
    }
    if plan.p1.route_hop_count() == 1 {
        let again = path_combined_gain(&plan.p1.hops, &rx_dbm)?;
        return Ok(CmrDelivery {
            success: again >= sensitivity_dbm,
            last_path: PathChoice::Primary,
            retransmitted: true,
            combined: c1.max(again),
        });
    }
    Ok(CmrDelivery {
        success: false,
        last_path: PathChoice::Primary,
        retransmitted: false,
        combined: c1,
    })
}
