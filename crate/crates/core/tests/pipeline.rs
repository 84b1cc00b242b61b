use bbn_core::metrics::{summarize, RouteKind, SummaryContext};
use bbn_core::sim::{default_flows, run_protocol, SimParams};
use bbn_core::spr::Protocol;
use bbn_core::trace::{generate_synthetic, read_trace, Network, SynthModel};

fn synthetic() -> bbn_core::ChannelTrace {
    let net = Network::uniform(4, 0.0, 0.0).unwrap();
    generate_synthetic(&net, 10_000, 3, &SynthModel::default()).unwrap()
}

#[test]
fn trace_csv_round_trips_exactly() {
    let trace = synthetic();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let back = read_trace(
        buf.as_slice(),
        trace.network().clone(),
        trace.sampling_period_ms(),
    )
    .unwrap();
    assert_eq!(back, trace);
}

#[test]
fn every_protocol_yields_consistent_summaries() {
    let trace = synthetic();
    let flows = default_flows(trace.network());
    let params = SimParams::default();
    let grid: Vec<f64> = (-110..=-60).map(f64::from).collect();
    for p in Protocol::ALL {
        let out = run_protocol(&trace, p, &flows, &params).unwrap();
        // 20 windows of 10 slots, one packet per flow per slot
        assert_eq!(out.len(), 200 * flows.len(), "{p}");
        assert!(out.iter().all(|o| o.warmup == (o.window_index == 0)), "{p}");
        for o in &out {
            if o.route_kind == RouteKind::NoRoute {
                assert_eq!(o.hop_count, 0);
                assert!(!o.success);
            } else {
                assert!(
                    o.hop_count >= 1 && o.delay_ms > 0.0 && o.energy_mj > 0.0,
                    "{p}: {o:?}"
                );
            }
        }
        let ctx = SummaryContext {
            duration_s: 10.0,
            n_flows: flows.len(),
        };
        let s = summarize(&out, &grid, ctx).unwrap();
        let total: f64 = s.hop_histogram.values().sum::<f64>() + s.no_route_fraction;
        assert!((total - 1.0).abs() < 1e-12, "{p}: {total}");
        let successes = out.iter().filter(|o| o.success).count() as f64;
        let per_flow = successes / 10.0 / flows.len() as f64;
        assert!((s.throughput_pps - per_flow).abs() < 1e-9, "{p}");
    }
}
