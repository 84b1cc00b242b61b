//! Trace-driven simulation of routing between coexisting body-area networks.
//!
//! Channel-gain traces are split into fixed windows; each window's link
//! statistics drive the route choices used for the packets of the next one.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmr;
pub mod exec;
pub mod fit;
pub mod link;
pub mod loadng;
pub mod metrics;
pub mod orpl;
pub mod runner;
pub mod sim;
pub mod special;
pub mod spr;
pub mod trace;

pub use exec::ExecMode;
pub use fit::{fit_gamma, fit_rician, FitFamily, FitParams, FitResult};
pub use link::{build_graph, LinkGraph, LinkStats};
pub use metrics::{summarize, MetricsSummary, PacketOutcome};
pub use sim::{default_flows, run_protocol, SimParams};
pub use spr::{Protocol, Route};
pub use trace::{ChannelTrace, Link, Network, NodeId};
