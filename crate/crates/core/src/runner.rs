//! Batch entry points behind the command-line tool: configuration, protocol
//! comparison runs, distribution fits and synthetic trace generation.
//!
//! Output files (all floats in shortest round-trip decimal form):
//!
//! | file | columns |
//! |------|---------|
//! | `outcomes_<p>.csv` | window_index, time_ms, src, dst, success, combined_gain_db, rx_power_dbm, delay_ms, energy_mj, hop_count, retransmitted, route_kind, warmup |
//! | `summary_<p>.json` | protocol, n_flows, duration_s, sensitivity_dbm and the [`MetricsSummary`] fields |
//! | `outage_<p>.csv` | sensitivity_dbm, probability |
//! | `hops_<p>.csv` | hop_count, fraction (hop_count 0 is the no-route share) |
//! | `fit_<family>.json` | family, params, loglik, n_samples |
//! | `pdf_empirical.csv` | bin_lo, bin_hi, density, fitted_density |

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{try_map_indexed, ExecMode};
use crate::fit::{
    amplitudes_from_db, empirical_pdf, fit_gamma, fit_rician, gamma_ln_pdf, rician_ln_pdf,
    FitError, FitFamily, FitParams, FitResult,
};
use crate::metrics::{
    summarize, DelayParams, EnergyParams, MetricsError, MetricsSummary, PacketOutcome,
    SummaryContext,
};
use crate::orpl::TrickleConfig;
use crate::sim::{default_flows, run_protocol, PacketSchedule, SimError, SimParams};
use crate::spr::Protocol;
use crate::trace::{
    generate_synthetic, load_trace, Ban, ChannelTrace, Network, NetworkError, NodeId, SynthFamily,
    SynthModel, TraceError,
};

/// Overrides `output_dir` from the config file when set.
pub const OUTPUT_DIR_ENV: &str = "BBN_OUTPUT_DIR";
const PDF_BINS: usize = 50;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Lognormal,
    Rician,
}

/// Flat key-value run configuration. Every key is optional; the defaults
/// reproduce the measurement campaign's settings (10 BANs, 0 dBm, −100 dBm,
/// 50 ms sampling, 500 ms windows, 45 minutes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub protocols: Vec<Protocol>,
    pub exec: ExecMode,

    /// `time_ms,tx,rx,gain_db` CSV; a synthetic trace is generated when absent.
    pub trace_file: Option<PathBuf>,
    pub duration_ms: u64,
    pub sampling_period_ms: u64,
    pub window_ms: u64,

    pub n_bans: u32,
    /// Explicit `[hub, sensor, sensor]` triples, replacing `n_bans`.
    pub bans: Option<Vec<[u32; 3]>>,
    pub hub_tx_dbm: f64,
    pub sensor_tx_dbm: f64,
    /// Node id (as a string key) to transmit power.
    pub tx_power_overrides: BTreeMap<String, f64>,

    pub sensitivity_dbm: f64,
    pub sensitivity_grid: Vec<f64>,
    pub packet_schedule: PacketSchedule,
    /// `[src, dst]` hub pairs; all ordered hub pairs when absent.
    pub flows: Option<Vec<[u32; 2]>>,

    pub t_packet_ms: f64,
    pub p_tx_hub_mw: f64,
    pub p_rx_hub_mw: f64,
    pub p_tx_sensor_mw: f64,
    pub p_rx_sensor_mw: f64,
    pub p_idle_mw: f64,
    pub queue_wait_hub_ms: f64,
    pub queue_wait_cmr_hop_ms: f64,
    pub t_active_ms: f64,

    pub orpl_root: Option<u32>,
    pub orpl_omega: f64,
    pub trickle_i_min_ms: u64,
    pub trickle_i_max_ms: u64,
    pub trickle_k: u32,
    pub loadng_rht_ms: u64,
    pub loadng_distance_offset_db: f64,

    pub synth_family: SynthKind,
    pub synth_k_factor: f64,
    pub synth_mean_hub_hub_db: f64,
    pub synth_mean_on_body_db: f64,
    pub synth_mean_cross_db: f64,
    pub synth_link_spread_db: f64,
    pub synth_autocorr: f64,
    pub synth_innovation_std_db: f64,
    pub synth_reciprocal: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimParams::default();
        let synth = SynthModel::default();
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("out"),
            protocols: Protocol::ALL.to_vec(),
            exec: ExecMode::default(),
            trace_file: None,
            duration_ms: 45 * 60 * 1000,
            sampling_period_ms: synth.sampling_period_ms,
            window_ms: sim.window_ms,
            n_bans: 10,
            bans: None,
            hub_tx_dbm: 0.0,
            sensor_tx_dbm: 0.0,
            tx_power_overrides: BTreeMap::new(),
            sensitivity_dbm: sim.sensitivity_dbm,
            sensitivity_grid: (-110..=-60).map(f64::from).collect(),
            packet_schedule: sim.schedule,
            flows: None,
            t_packet_ms: sim.energy.t_packet_ms,
            p_tx_hub_mw: sim.energy.p_tx_hub_mw,
            p_rx_hub_mw: sim.energy.p_rx_hub_mw,
            p_tx_sensor_mw: sim.energy.p_tx_sensor_mw,
            p_rx_sensor_mw: sim.energy.p_rx_sensor_mw,
            p_idle_mw: sim.energy.p_idle_mw,
            queue_wait_hub_ms: sim.delay.queue_wait_hub_ms,
            queue_wait_cmr_hop_ms: sim.delay.queue_wait_cmr_hop_ms,
            t_active_ms: sim.delay.t_active_ms,
            orpl_root: None,
            orpl_omega: sim.omega,
            trickle_i_min_ms: sim.trickle.i_min_ms,
            trickle_i_max_ms: sim.trickle.i_max_ms,
            trickle_k: sim.trickle.redundancy_k,
            loadng_rht_ms: sim.rht_ms,
            loadng_distance_offset_db: sim.distance_offset_db,
            synth_family: SynthKind::Lognormal,
            synth_k_factor: 3.0,
            synth_mean_hub_hub_db: synth.mean_hub_hub_db,
            synth_mean_on_body_db: synth.mean_on_body_db,
            synth_mean_cross_db: synth.mean_cross_db,
            synth_link_spread_db: synth.link_spread_db,
            synth_autocorr: synth.autocorr,
            synth_innovation_std_db: synth.innovation_std_db,
            synth_reciprocal: synth.reciprocal,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative trace paths are resolved against the config file.
        if let (Some(t), Some(dir)) = (&cfg.trace_file, path.parent()) {
            if t.is_relative() {
                cfg.trace_file = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.protocols.is_empty() {
            return bad("at least one protocol is required".into());
        }
        if self.sensitivity_grid.is_empty() {
            return bad("sensitivity_grid must not be empty".into());
        }
        if !self.sensitivity_grid.iter().all(|v| v.is_finite())
            || !self.sensitivity_grid.windows(2).all(|w| w[0] < w[1])
        {
            return bad("sensitivity_grid must be finite and strictly increasing".into());
        }
        if self.sampling_period_ms == 0 {
            return bad("sampling_period_ms must be positive".into());
        }
        if self.trace_file.is_none() && self.duration_ms < self.sampling_period_ms {
            return bad("duration_ms must cover at least one sampling period".into());
        }
        if self.synth_family == SynthKind::Rician
            && !(self.synth_k_factor >= 0.0 && self.synth_k_factor.is_finite())
        {
            return bad("synth_k_factor must be finite and non-negative".into());
        }
        for key in self.tx_power_overrides.keys() {
            key.parse::<u32>().map_err(|_| {
                RunError::Config(format!("tx_power_overrides key `{key}` is not a node id"))
            })?;
        }
        self.sim_params().validate()?;
        Ok(())
    }

    pub fn network(&self) -> Result<Network, RunError> {
        let bans: Vec<Ban> = match &self.bans {
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, [h, a, b])| Ban {
                    ban_id: i as u32,
                    hub: NodeId(*h),
                    sensors: [NodeId(*a), NodeId(*b)],
                })
                .collect(),
            None => (0..self.n_bans)
                .map(|b| Ban {
                    ban_id: b,
                    hub: NodeId(3 * b),
                    sensors: [NodeId(3 * b + 1), NodeId(3 * b + 2)],
                })
                .collect(),
        };
        let mut powers = BTreeMap::new();
        for ban in &bans {
            powers.insert(ban.hub, self.hub_tx_dbm);
            for s in ban.sensors {
                powers.insert(s, self.sensor_tx_dbm);
            }
        }
        for (key, dbm) in &self.tx_power_overrides {
            let node = NodeId(
                key.parse()
                    .map_err(|_| RunError::Config(format!("bad node id `{key}`")))?,
            );
            if powers.insert(node, *dbm).is_none() {
                return Err(RunError::Config(format!(
                    "tx_power_overrides names unknown node {node}"
                )));
            }
        }
        Ok(Network::new(bans, powers)?)
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            sensitivity_dbm: self.sensitivity_dbm,
            window_ms: self.window_ms,
            schedule: self.packet_schedule,
            energy: EnergyParams {
                t_packet_ms: self.t_packet_ms,
                p_tx_hub_mw: self.p_tx_hub_mw,
                p_rx_hub_mw: self.p_rx_hub_mw,
                p_tx_sensor_mw: self.p_tx_sensor_mw,
                p_rx_sensor_mw: self.p_rx_sensor_mw,
                p_idle_mw: self.p_idle_mw,
            },
            delay: DelayParams {
                queue_wait_hub_ms: self.queue_wait_hub_ms,
                queue_wait_cmr_hop_ms: self.queue_wait_cmr_hop_ms,
                sampling_period_ms: self.sampling_period_ms as f64,
                t_active_ms: self.t_active_ms,
            },
            orpl_root: self.orpl_root.map(NodeId),
            omega: self.orpl_omega,
            trickle: TrickleConfig {
                i_min_ms: self.trickle_i_min_ms,
                i_max_ms: self.trickle_i_max_ms,
                redundancy_k: self.trickle_k,
            },
            rht_ms: self.loadng_rht_ms,
            distance_offset_db: self.loadng_distance_offset_db,
            seed: self.seed,
            exec: self.exec,
        }
    }

    pub fn synth_model(&self) -> SynthModel {
        SynthModel {
            mean_hub_hub_db: self.synth_mean_hub_hub_db,
            mean_on_body_db: self.synth_mean_on_body_db,
            mean_cross_db: self.synth_mean_cross_db,
            link_spread_db: self.synth_link_spread_db,
            autocorr: self.synth_autocorr,
            innovation_std_db: self.synth_innovation_std_db,
            family: match self.synth_family {
                SynthKind::Lognormal => SynthFamily::LogNormal,
                SynthKind::Rician => SynthFamily::Rician {
                    k_factor: self.synth_k_factor,
                },
            },
            reciprocal: self.synth_reciprocal,
            sampling_period_ms: self.sampling_period_ms,
        }
    }

    pub fn flows(&self, network: &Network) -> Vec<(NodeId, NodeId)> {
        match &self.flows {
            Some(list) => list.iter().map(|[s, d]| (NodeId(*s), NodeId(*d))).collect(),
            None => default_flows(network),
        }
    }

    pub fn trace(&self) -> Result<ChannelTrace, RunError> {
        let network = self.network()?;
        Ok(match &self.trace_file {
            Some(path) => load_trace(path, network, self.sampling_period_ms)?,
            None => generate_synthetic(&network, self.duration_ms, self.seed, &self.synth_model())?,
        })
    }

    /// `BBN_OUTPUT_DIR` if set, otherwise `output_dir`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    protocol: Protocol,
    n_flows: usize,
    duration_s: f64,
    sensitivity_dbm: f64,
    #[serde(flatten)]
    summary: &'a MetricsSummary,
}

/// Runs every configured protocol on the trace, writing four files per
/// protocol into `out_dir`. Returns the written paths.
pub fn run_to_dir(
    cfg: &RunConfig,
    trace: &ChannelTrace,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, RunError> {
    let flows = cfg.flows(trace.network());
    let params = cfg.sim_params();
    let results = try_map_indexed(cfg.exec, cfg.protocols.len(), |i| {
        run_protocol(trace, cfg.protocols[i], &flows, &params)
    })?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let ctx = SummaryContext {
        duration_s: trace.duration_ms() as f64 / 1000.0,
        n_flows: flows.len(),
    };
    let mut written = Vec::new();
    for (&protocol, outcomes) in cfg.protocols.iter().zip(&results) {
        let summary = summarize(outcomes, &cfg.sensitivity_grid, ctx)?;
        let name = protocol.name();

        let path = out_dir.join(format!("outcomes_{name}.csv"));
        write_outcomes(&path, outcomes)?;
        written.push(path);

        let path = out_dir.join(format!("summary_{name}.json"));
        let body = RunSummary {
            protocol,
            n_flows: flows.len(),
            duration_s: ctx.duration_s,
            sensitivity_dbm: cfg.sensitivity_dbm,
            summary: &summary,
        };
        let mut text = serde_json::to_string_pretty(&body)?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);

        let path = out_dir.join(format!("outage_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["sensitivity_dbm", "probability"])?;
        for p in &summary.outage_curve {
            w.write_record([p.sensitivity_dbm.to_string(), p.probability.to_string()])?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);

        let path = out_dir.join(format!("hops_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["hop_count", "fraction"])?;
        w.write_record(["0".to_string(), summary.no_route_fraction.to_string()])?;
        for (h, f) in &summary.hop_histogram {
            w.write_record([h.to_string(), f.to_string()])?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn write_outcomes(path: &Path, outcomes: &[PacketOutcome]) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut body = String::from(
        "window_index,time_ms,src,dst,success,combined_gain_db,rx_power_dbm,delay_ms,energy_mj,hop_count,retransmitted,route_kind,warmup\n",
    );
    for o in outcomes {
        use std::fmt::Write as _;
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            o.window_index,
            o.time_ms,
            o.src,
            o.dst,
            o.success,
            o.combined_gain_db,
            o.rx_power_dbm,
            o.delay_ms,
            o.energy_mj,
            o.hop_count,
            o.retransmitted,
            o.route_kind.name(),
            o.warmup
        );
        if body.len() > 1 << 20 {
            w.write_all(body.as_bytes()).map_err(io_err(path))?;
            body.clear();
        }
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

/// `run` subcommand: load or synthesise the trace, then [`run_to_dir`].
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let trace = cfg.trace()?;
    run_to_dir(cfg, &trace, &cfg.resolved_output_dir())
}

/// Reads dB gains from the `combined_gain_db` or `gain_db` column of a CSV
/// file. Empty cells and `NaN` become NaN.
pub fn read_gain_column(path: &Path) -> Result<Vec<f64>, RunError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = ["combined_gain_db", "gain_db"]
        .iter()
        .find_map(|name| headers.iter().position(|h| h.trim() == *name))
        .ok_or_else(|| {
            RunError::Config(format!(
                "{}: no combined_gain_db or gain_db column",
                path.display()
            ))
        })?;
    let mut gains = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("").trim();
        let v = if cell.is_empty() {
            f64::NAN
        } else {
            cell.parse::<f64>().map_err(|_| {
                RunError::Config(format!(
                    "{}: row {}: bad gain `{cell}`",
                    path.display(),
                    i + 2
                ))
            })?
        };
        gains.push(v);
    }
    Ok(gains)
}

/// `fit` subcommand: fits `family` to the gains in `input` (converted to
/// linear amplitude, sentinel samples dropped) and writes
/// `fit_<family>.json` and `pdf_empirical.csv` into `out_dir`.
pub fn cmd_fit(input: &Path, family: FitFamily, out_dir: &Path) -> Result<FitResult, RunError> {
    let gains = read_gain_column(input)?;
    let amps = amplitudes_from_db(&gains);
    let result = match family {
        FitFamily::Gamma => fit_gamma(&amps)?,
        FitFamily::Rician => fit_rician(&amps)?,
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(format!("fit_{}.json", family.name()));
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;

    let hist = empirical_pdf(&amps, PDF_BINS)?;
    let path = out_dir.join("pdf_empirical.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["bin_lo", "bin_hi", "density", "fitted_density"])?;
    for (d, e) in hist.density.iter().zip(hist.edges.windows(2)) {
        let mid = 0.5 * (e[0] + e[1]);
        let fitted = match result.params {
            FitParams::Gamma { shape, scale } => gamma_ln_pdf(mid, shape, scale).exp(),
            FitParams::Rician { nu, sigma } => rician_ln_pdf(mid, nu, sigma).exp(),
        };
        w.write_record([
            e[0].to_string(),
            e[1].to_string(),
            d.to_string(),
            fitted.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(result)
}

/// `synth` subcommand: writes the configured synthetic trace to `out`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<(), RunError> {
    let network = cfg.network()?;
    let trace = generate_synthetic(&network, cfg.duration_ms, cfg.seed, &cfg.synth_model())?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    trace.save(out)?;
    Ok(())
}
