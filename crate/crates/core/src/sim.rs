//! Runs one routing protocol over a windowed trace and records a
//! [`PacketOutcome`] per packet.
//!
//! Routes for window `n` are chosen on the link graph of window `n − 1`
//! (window 0 uses its own graph and is flagged as warm-up); deliveries are
//! judged on the gains at the packet's own sampling slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmr::{cmr_deliver, plan_routes, CmrPlan, PathChoice};
use crate::exec::{try_map_indexed, ExecMode};
use crate::link::{build_graph, LinkGraph};
use crate::loadng::{ReactiveRouteCache, DEFAULT_DISTANCE_OFFSET_DB, DEFAULT_RHT_MS};
use crate::metrics::{
    delay_of, energy_of, DelayParams, EnergyParams, MetricsError, PacketOutcome, RouteKind,
    RouteShape,
};
use crate::orpl::{
    compute_edc, orpl_route, select_root, EdcTable, Trickle, TrickleConfig, DEFAULT_OMEGA,
};
use crate::spr::{shortest_path, spr_combined_gain, Protocol, Route, RouteError};
use crate::trace::{
    window, ChannelTrace, Link, NodeId, TimestampWindow, TraceError, DEFAULT_WINDOW_MS,
    SENTINEL_GAIN_DB,
};

pub const DEFAULT_SENSITIVITY_DBM: f64 = -100.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("flow {0} -> {1} must join two distinct hubs")]
    BadFlow(NodeId, NodeId),
    #[error("invalid simulation parameters: {0}")]
    BadParams(String),
    #[error("trace has no samples")]
    EmptyTrace,
}

/// Which sampling slots of a window carry a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketSchedule {
    /// One packet per flow at every sampling slot.
    #[default]
    EverySlot,
    /// One packet per flow per window, at its first slot.
    FirstSlot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub sensitivity_dbm: f64,
    pub window_ms: u64,
    pub schedule: PacketSchedule,
    pub energy: EnergyParams,
    pub delay: DelayParams,
    /// ORPL root; chosen from the first window when absent.
    pub orpl_root: Option<NodeId>,
    pub omega: f64,
    pub trickle: TrickleConfig,
    pub rht_ms: u64,
    pub distance_offset_db: f64,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            sensitivity_dbm: DEFAULT_SENSITIVITY_DBM,
            window_ms: DEFAULT_WINDOW_MS,
            schedule: PacketSchedule::EverySlot,
            energy: EnergyParams::default(),
            delay: DelayParams::default(),
            orpl_root: None,
            omega: DEFAULT_OMEGA,
            trickle: TrickleConfig::default(),
            rht_ms: DEFAULT_RHT_MS,
            distance_offset_db: DEFAULT_DISTANCE_OFFSET_DB,
            seed: 0,
            exec: ExecMode::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.sensitivity_dbm.is_finite() {
            return Err(SimError::BadParams("sensitivity must be finite".into()));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(SimError::BadParams(
                "omega must be finite and non-negative".into(),
            ));
        }
        if self.rht_ms == 0 {
            return Err(SimError::BadParams(
                "route hold time must be positive".into(),
            ));
        }
        self.energy.validate().map_err(SimError::BadParams)?;
        self.delay.validate().map_err(SimError::BadParams)?;
        self.trickle.validate().map_err(SimError::BadParams)
    }
}

/// All ordered pairs of distinct hubs.
pub fn default_flows(network: &crate::trace::Network) -> Vec<(NodeId, NodeId)> {
    let hubs = network.hubs();
    hubs.iter()
        .flat_map(|&s| hubs.iter().filter(move |&&d| d != s).map(move |&d| (s, d)))
        .collect()
}

struct Ctx<'a> {
    trace: &'a ChannelTrace,
    params: &'a SimParams,
    flows: &'a [(NodeId, NodeId)],
    windows: Vec<TimestampWindow<'a>>,
    graphs: Vec<LinkGraph>,
}

impl<'a> Ctx<'a> {
    /// Graph that routes window `n`.
    fn routing_graph(&self, n: usize) -> &LinkGraph {
        &self.graphs[n.saturating_sub(1)]
    }

    fn packet_slots(&self, n: usize) -> std::ops::Range<usize> {
        let s = self.windows[n].slots();
        match self.params.schedule {
            PacketSchedule::EverySlot => s,
            PacketSchedule::FirstSlot => s.start..s.start + 1,
        }
    }

    /// Received power on `link` at `slot`. Missing hub-to-hub samples read
    /// as the sentinel; links touching a sensor that were never measured
    /// are reported as absent.
    fn rx_dbm(&self, slot: usize) -> impl Fn(Link) -> Option<f64> + '_ {
        let net = self.trace.network();
        move |l: Link| {
            let tx = net.tx_power_dbm(l.tx);
            match self.trace.gain_at(l, slot) {
                Some(g) => Some(g + tx),
                None if net.is_hub(l.tx) && net.is_hub(l.rx) => Some(SENTINEL_GAIN_DB + tx),
                None => None,
            }
        }
    }

    fn base(&self, n: usize, slot: usize, (s, d): (NodeId, NodeId)) -> PacketOutcome {
        PacketOutcome {
            window_index: n as u32,
            time_ms: slot as u64 * self.trace.sampling_period_ms(),
            src: s,
            dst: d,
            success: false,
            combined_gain_db: f64::NAN,
            rx_power_dbm: f64::NAN,
            delay_ms: 0.0,
            energy_mj: 0.0,
            hop_count: 0,
            retransmitted: false,
            route_kind: RouteKind::NoRoute,
            warmup: n == 0,
        }
    }

    /// Delivery over a plain multi-hop route; a failure is followed by one
    /// retransmission on the same slot's gains.
    fn mesh_outcome(
        &self,
        n: usize,
        slot: usize,
        flow: (NodeId, NodeId),
        route: &Route,
    ) -> Result<PacketOutcome, SimError> {
        let net = self.trace.network();
        let rx = spr_combined_gain(route, self.rx_dbm(slot))?;
        let success = rx >= self.params.sensitivity_dbm;
        let retransmitted = !success;
        let shape = RouteShape::of_route(route, net)?;
        let p = self.params;
        Ok(PacketOutcome {
            success,
            combined_gain_db: rx - net.tx_power_dbm(flow.0),
            rx_power_dbm: rx,
            delay_ms: delay_of(&shape, retransmitted, &p.delay, p.energy.t_packet_ms),
            energy_mj: energy_of(&shape, retransmitted, &p.energy, &p.delay),
            hop_count: route.hop_count() as u32,
            retransmitted,
            route_kind: if route.fallback {
                RouteKind::Fallback
            } else {
                RouteKind::Primary
            },
            ..self.base(n, slot, flow)
        })
    }

    fn cmr_outcome(
        &self,
        n: usize,
        slot: usize,
        flow: (NodeId, NodeId),
        plan: &CmrPlan,
    ) -> Result<PacketOutcome, SimError> {
        let net = self.trace.network();
        let p = self.params;
        let out = cmr_deliver(plan, self.rx_dbm(slot), p.sensitivity_dbm)?;
        let p1 = RouteShape::Cooperative(plan.p1.relay_counts());
        let mut delay = delay_of(&p1, out.retransmitted, &p.delay, p.energy.t_packet_ms);
        let mut energy = energy_of(&p1, out.retransmitted, &p.energy, &p.delay);
        let (hops, kind) = match (out.last_path, &plan.p2) {
            (PathChoice::Alternate, Some(p2)) => {
                let shape = RouteShape::Cooperative(p2.relay_counts());
                delay += delay_of(&shape, false, &p.delay, p.energy.t_packet_ms);
                energy += energy_of(&shape, false, &p.energy, &p.delay);
                (p2.route_hop_count(), RouteKind::Alternate)
            }
            _ if plan.p1.route.fallback => (plan.p1.route_hop_count(), RouteKind::Fallback),
            _ => (plan.p1.route_hop_count(), RouteKind::Primary),
        };
        Ok(PacketOutcome {
            success: out.success,
            combined_gain_db: out.combined - net.tx_power_dbm(flow.0),
            rx_power_dbm: out.combined,
            delay_ms: delay,
            energy_mj: energy,
            hop_count: hops as u32,
            retransmitted: out.retransmitted,
            route_kind: kind,
            ..self.base(n, slot, flow)
        })
    }

    /// Stateless protocols: every window is independent given the graphs.
    fn window_outcomes(
        &self,
        protocol: Protocol,
        n: usize,
    ) -> Result<Vec<PacketOutcome>, SimError> {
        let g = self.routing_graph(n);
        let net = self.trace.network();
        let mut out = Vec::with_capacity(self.packet_slots(n).len() * self.flows.len());
        match protocol {
            Protocol::Spr | Protocol::SprHop => {
                let limit = (protocol == Protocol::SprHop).then_some(crate::cmr::CMR_HOP_LIMIT);
                let routes = self
                    .flows
                    .iter()
                    .map(|&(s, d)| {
                        let mut r = shortest_path(g, s, d, limit)?;
                        r.protocol = protocol;
                        Ok(r)
                    })
                    .collect::<Result<Vec<_>, RouteError>>()?;
                for slot in self.packet_slots(n) {
                    for (&flow, route) in self.flows.iter().zip(&routes) {
                        out.push(self.mesh_outcome(n, slot, flow, route)?);
                    }
                }
            }
            Protocol::Cmr => {
                let plans = self
                    .flows
                    .iter()
                    .map(|&(s, d)| plan_routes(s, d, g, net))
                    .collect::<Result<Vec<_>, RouteError>>()?;
                for slot in self.packet_slots(n) {
                    for (&flow, plan) in self.flows.iter().zip(&plans) {
                        out.push(self.cmr_outcome(n, slot, flow, plan)?);
                    }
                }
            }
            Protocol::Orpl | Protocol::Loadng => unreachable!("stateful protocols run in order"),
        }
        Ok(out)
    }

    fn run_orpl(&self) -> Result<Vec<PacketOutcome>, SimError> {
        let net = self.trace.network();
        let root = match self.params.orpl_root {
            Some(r) if net.is_hub(r) => r,
            Some(r) => return Err(SimError::BadParams(format!("ORPL root {r} is not a hub"))),
            None => select_root(&self.graphs[0]).unwrap_or(net.hubs()[0]),
        };
        let neighbours = net.hubs().len().saturating_sub(1) as u32;
        let mut trickle = Trickle::new(
            self.params.trickle,
            self.params.window_ms,
            neighbours,
            self.params.seed,
        );
        let mut table: Option<EdcTable> = None;
        let mut out = Vec::new();
        for n in 0..self.windows.len() {
            let g = self.routing_graph(n);
            let fire = trickle.tick(n as u64);
            if fire || table.is_none() {
                let fresh = compute_edc(g, root, self.params.omega)?;
                if table
                    .as_ref()
                    .is_some_and(|t| t.forwarder_sets != fresh.forwarder_sets)
                {
                    trickle.reset(n as u64);
                }
                table = Some(fresh);
            }
            let table = table.as_ref().expect("table computed above");
            let routes: Vec<Option<Route>> = self
                .flows
                .iter()
                .map(|&(s, d)| match orpl_route(s, d, table, g) {
                    Ok(r) => Ok(Some(r)),
                    Err(RouteError::NoRoute(..)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<_, _>>()?;
            for slot in self.packet_slots(n) {
                for (&flow, route) in self.flows.iter().zip(&routes) {
                    out.push(match route {
                        Some(r) => self.mesh_outcome(n, slot, flow, r)?,
                        None => self.base(n, slot, flow),
                    });
                }
            }
        }
        Ok(out)
    }

    fn run_loadng(&self) -> Result<Vec<PacketOutcome>, SimError> {
        let mut cache = ReactiveRouteCache::new(self.params.rht_ms, self.params.distance_offset_db);
        let period = self.trace.sampling_period_ms();
        let mut out = Vec::new();
        for n in 0..self.windows.len() {
            let g = self.routing_graph(n);
            for slot in self.packet_slots(n) {
                for &(s, d) in self.flows {
                    match cache.serve_or_repair(s, d, slot as u64 * period, g) {
                        Ok(route) => {
                            let o = self.mesh_outcome(n, slot, (s, d), &route)?;
                            if !o.success {
                                cache.invalidate(s, d);
                            }
                            out.push(o);
                        }
                        Err(RouteError::NoRoute(..)) => out.push(self.base(n, slot, (s, d))),
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Simulates `protocol` for every flow over the whole trace. Outcomes are
/// ordered by window, then slot, then flow.
pub fn run_protocol(
    trace: &ChannelTrace,
    protocol: Protocol,
    flows: &[(NodeId, NodeId)],
    params: &SimParams,
) -> Result<Vec<PacketOutcome>, SimError> {
    params.validate()?;
    if trace.n_slots() == 0 {
        return Err(SimError::EmptyTrace);
    }
    let net = trace.network();
    for &(s, d) in flows {
        if s == d || !net.is_hub(s) || !net.is_hub(d) {
            return Err(SimError::BadFlow(s, d));
        }
    }
    let windows = window(trace, params.window_ms)?;
    let graphs = crate::exec::map_indexed(params.exec, windows.len(), |i| {
        build_graph(&windows[i], net, params.sensitivity_dbm).hub_mesh(net)
    });
    let ctx = Ctx {
        trace,
        params,
        flows,
        windows,
        graphs,
    };
    match protocol {
        Protocol::Orpl => ctx.run_orpl(),
        Protocol::Loadng => ctx.run_loadng(),
        _ => {
            let per_window = try_map_indexed(params.exec, ctx.windows.len(), |n| {
                ctx.window_outcomes(protocol, n)
            })?;
            Ok(per_window.into_iter().flatten().collect())
        }
    }
}
