//! Per-packet delay and energy models and the run summaries built from
//! packet outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spr::Route;
use crate::trace::{Link, Network, NodeId, Role};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("hop {}->{} is neither hub-to-hub, hub-to-sensor nor sensor-to-hub", .0.tx, .0.rx)]
    UnclassifiableHop(Link),
    #[error("sensitivity grid is empty")]
    EmptyGrid,
    #[error("no samples to evaluate")]
    Empty,
}

/// Radio power and timing figures for the energy model (ms, mW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub t_packet_ms: f64,
    pub p_tx_hub_mw: f64,
    pub p_rx_hub_mw: f64,
    pub p_tx_sensor_mw: f64,
    pub p_rx_sensor_mw: f64,
    pub p_idle_mw: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            t_packet_ms: 0.6,
            p_tx_hub_mw: 6.0,
            p_rx_hub_mw: 6.0,
            p_tx_sensor_mw: 5.0,
            p_rx_sensor_mw: 5.0,
            p_idle_mw: 1.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.t_packet_ms,
            self.p_tx_hub_mw,
            self.p_rx_hub_mw,
            self.p_tx_sensor_mw,
            self.p_rx_sensor_mw,
            self.p_idle_mw,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err("energy parameters must be finite and strictly positive".into())
        }
    }
}

/// Worst-case queuing waits at intermediate nodes (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    pub queue_wait_hub_ms: f64,
    /// Wait at an intermediate hub of a cooperative path, including the
    /// relayed link-hop transmissions.
    pub queue_wait_cmr_hop_ms: f64,
    pub sampling_period_ms: f64,
    pub t_active_ms: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        DelayParams {
            queue_wait_hub_ms: 49.0,
            queue_wait_cmr_hop_ms: 59.0,
            sampling_period_ms: 50.0,
            t_active_ms: 5.0,
        }
    }
}

impl DelayParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.queue_wait_hub_ms >= 0.0)
            || !(self.queue_wait_cmr_hop_ms >= self.queue_wait_hub_ms)
        {
            return Err("queue waits must satisfy 0 <= hub wait <= cooperative wait".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopRole {
    HubToHub,
    HubToSensor,
    SensorToHub,
}

impl HopRole {
    pub fn classify(network: &Network, link: Link) -> Result<Self, MetricsError> {
        match (network.role(link.tx), network.role(link.rx)) {
            (Some(Role::Hub), Some(Role::Hub)) => Ok(HopRole::HubToHub),
            (Some(Role::Hub), Some(Role::Sensor)) => Ok(HopRole::HubToSensor),
            (Some(Role::Sensor), Some(Role::Hub)) => Ok(HopRole::SensorToHub),
            _ => Err(MetricsError::UnclassifiableHop(link)),
        }
    }

    /// Energy to send one packet over this hop, in mJ.
    pub fn packet_energy_mj(self, p: &EnergyParams) -> f64 {
        let power = match self {
            HopRole::HubToHub => p.p_tx_hub_mw + p.p_rx_hub_mw,
            HopRole::HubToSensor => p.p_tx_hub_mw + p.p_rx_sensor_mw,
            HopRole::SensorToHub => p.p_tx_sensor_mw + p.p_rx_hub_mw,
        };
        p.t_packet_ms * power / 1000.0
    }
}

/// Hop structure of one path, as the delay and energy models see it.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteShape {
    /// Plain multi-hop path; one role per hop.
    Mesh(Vec<HopRole>),
    /// Cooperative path; number of relayed branches per route-hop.
    Cooperative(Vec<usize>),
}

impl RouteShape {
    pub fn of_route(route: &Route, network: &Network) -> Result<Self, MetricsError> {
        route
            .links()
            .map(|l| HopRole::classify(network, l))
            .collect::<Result<_, _>>()
            .map(RouteShape::Mesh)
    }

    pub fn hop_count(&self) -> usize {
        match self {
            RouteShape::Mesh(h) => h.len(),
            RouteShape::Cooperative(r) => r.len(),
        }
    }
}

/// End-to-end delay: transmission time per hop plus the queuing wait at
/// each intermediate node. A retransmission doubles the total.
pub fn delay_of(
    shape: &RouteShape,
    retransmitted: bool,
    params: &DelayParams,
    t_packet_ms: f64,
) -> f64 {
    let hops = shape.hop_count() as f64;
    let wait = match shape {
        RouteShape::Mesh(_) => params.queue_wait_hub_ms,
        RouteShape::Cooperative(_) => params.queue_wait_cmr_hop_ms,
    };
    let once = hops * t_packet_ms + (hops - 1.0).max(0.0) * wait;
    if retransmitted {
        2.0 * once
    } else {
        once
    }
}

/// Energy per packet in mJ: transmission energy over every hop (and every
/// relayed link-hop) plus idle energy at intermediate nodes for their
/// queuing wait. A retransmission repeats the transmission terms only.
pub fn energy_of(
    shape: &RouteShape,
    retransmitted: bool,
    energy: &EnergyParams,
    delay: &DelayParams,
) -> f64 {
    let (packet, idle) = match shape {
        RouteShape::Mesh(roles) => {
            let packet: f64 = roles.iter().map(|r| r.packet_energy_mj(energy)).sum();
            let intermediates = roles.len().saturating_sub(1) as f64;
            (
                packet,
                intermediates * delay.queue_wait_hub_ms * energy.p_idle_mw / 1000.0,
            )
        }
        RouteShape::Cooperative(relays) => {
            let branch = HopRole::HubToSensor.packet_energy_mj(energy)
                + HopRole::SensorToHub.packet_energy_mj(energy);
            let packet: f64 = relays
                .iter()
                .map(|&r| HopRole::HubToHub.packet_energy_mj(energy) + r as f64 * branch)
                .sum();
            let intermediates = relays.len().saturating_sub(1) as f64;
            (
                packet,
                intermediates * delay.queue_wait_cmr_hop_ms * energy.p_idle_mw / 1000.0,
            )
        }
    };
    if retransmitted {
        2.0 * packet + idle
    } else {
        packet + idle
    }
}

/// Fraction of received powers (`gain + tx_power`) strictly below each
/// threshold of `grid`.
pub fn outage_curve(
    gains_db: &[f64],
    tx_power_dbm: f64,
    grid: &[f64],
) -> Result<Vec<OutagePoint>, MetricsError> {
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    if gains_db.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut rx: Vec<f64> = gains_db.iter().map(|g| g + tx_power_dbm).collect();
    rx.sort_by(f64::total_cmp);
    let n = rx.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| OutagePoint {
            sensitivity_dbm: t,
            probability: rx.partition_point(|&v| v < t) as f64 / n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutagePoint {
    pub sensitivity_dbm: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    /// The protocol's first-choice path.
    Primary,
    /// CMR's second path carried the last copy.
    Alternate,
    /// Direct link used because no finite route existed.
    Fallback,
    NoRoute,
}

impl RouteKind {
    pub fn name(self) -> &'static str {
        match self {
            RouteKind::Primary => "primary",
            RouteKind::Alternate => "alternate",
            RouteKind::Fallback => "fallback",
            RouteKind::NoRoute => "no_route",
        }
    }
}

/// Result of one packet delivery attempt. For `NoRoute` outcomes the hop
/// count, delay and energy are zero and the gains are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketOutcome {
    pub window_index: u32,
    pub time_ms: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub success: bool,
    /// Combined received power minus the source's transmit power.
    pub combined_gain_db: f64,
    pub rx_power_dbm: f64,
    pub delay_ms: f64,
    pub energy_mj: f64,
    pub hop_count: u32,
    pub retransmitted: bool,
    pub route_kind: RouteKind,
    /// Routed with the window's own statistics (first window only).
    pub warmup: bool,
}

impl PacketOutcome {
    pub fn is_routed(&self) -> bool {
        self.route_kind != RouteKind::NoRoute
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub n_outcomes: usize,
    pub success_fraction: f64,
    pub outage_curve: Vec<OutagePoint>,
    pub throughput_pps: f64,
    pub delay_avg_ms: Option<f64>,
    pub delay_max_ms: Option<f64>,
    pub energy_avg_mj: Option<f64>,
    pub energy_max_mj: Option<f64>,
    pub hop_histogram: BTreeMap<u32, f64>,
    pub no_route_fraction: f64,
    pub retransmission_fraction: f64,
}

/// Normalisation for throughput: packets per second per flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryContext {
    pub duration_s: f64,
    pub n_flows: usize,
}

pub fn summarize(
    outcomes: &[PacketOutcome],
    grid: &[f64],
    ctx: SummaryContext,
) -> Result<MetricsSummary, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let total = outcomes.len() as f64;
    let routed: Vec<&PacketOutcome> = outcomes.iter().filter(|o| o.is_routed()).collect();
    let rx: Vec<f64> = routed.iter().map(|o| o.rx_power_dbm).collect();
    let outage = if rx.is_empty() {
        grid.iter()
            .map(|&t| OutagePoint {
                sensitivity_dbm: t,
                probability: 1.0,
            })
            .collect()
    } else {
        outage_curve(&rx, 0.0, grid)?
    };
    let successes = outcomes.iter().filter(|o| o.success).count() as f64;
    let stat = |f: fn(&PacketOutcome) -> f64| -> (Option<f64>, Option<f64>) {
        if routed.is_empty() {
            return (None, None);
        }
        let sum: f64 = routed.iter().map(|o| f(o)).sum();
        let max = routed
            .iter()
            .map(|o| f(o))
            .fold(f64::NEG_INFINITY, f64::max);
        (Some(sum / routed.len() as f64), Some(max))
    };
    let (delay_avg_ms, delay_max_ms) = stat(|o| o.delay_ms);
    let (energy_avg_mj, energy_max_mj) = stat(|o| o.energy_mj);
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for o in &routed {
        *counts.entry(o.hop_count).or_default() += 1;
    }
    Ok(MetricsSummary {
        n_outcomes: outcomes.len(),
        success_fraction: successes / total,
        outage_curve: outage,
        throughput_pps: successes / (ctx.duration_s * ctx.n_flows as f64),
        delay_avg_ms,
        delay_max_ms,
        energy_avg_mj,
        energy_max_mj,
        hop_histogram: counts
            .into_iter()
            .map(|(h, c)| (h, c as f64 / total))
            .collect(),
        no_route_fraction: (outcomes.len() - routed.len()) as f64 / total,
        retransmission_fraction: outcomes.iter().filter(|o| o.retransmitted).count() as f64 / total,
    })
}
