//! Network population, channel-gain traces and timestamp windows.
//!
//! A [`ChannelTrace`] stores one gain series per directed link, one value per
//! sampling slot. Missing or undecodable measurements are replaced by
//! [`SENTINEL_GAIN_DB`] when the trace is built, so every stored value is
//! finite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stand-in gain for lost packets, just below the -100 dBm sensitivity.
pub const SENTINEL_GAIN_DB: f64 = -101.0;

pub const DEFAULT_SAMPLING_PERIOD_MS: u64 = 50;
pub const DEFAULT_WINDOW_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed radio link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub tx: NodeId,
    pub rx: NodeId,
}

impl Link {
    pub fn new(tx: NodeId, rx: NodeId) -> Self {
        Link { tx, rx }
    }

    pub fn reversed(self) -> Self {
        Link {
            tx: self.rx,
            rx: self.tx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Hub,
    Sensor,
}

/// One body-area network: a hub and its two on-body sensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ban {
    pub ban_id: u32,
    pub hub: NodeId,
    pub sensors: [NodeId; 2],
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("node {0} appears more than once in the network")]
    DuplicateNode(NodeId),
    #[error("no transmit power configured for node {0}")]
    MissingTxPower(NodeId),
    #[error("network has no BANs")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    bans: Vec<Ban>,
    tx_power_dbm: BTreeMap<NodeId, f64>,
    roles: BTreeMap<NodeId, (usize, Role)>,
}

impl Network {
    pub fn new(bans: Vec<Ban>, tx_power_dbm: BTreeMap<NodeId, f64>) -> Result<Self, NetworkError> {
        if bans.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut roles = BTreeMap::new();
        for (idx, ban) in bans.iter().enumerate() {
            let members = [
                (ban.hub, Role::Hub),
                (ban.sensors[0], Role::Sensor),
                (ban.sensors[1], Role::Sensor),
            ];
            for (node, role) in members {
                if roles.insert(node, (idx, role)).is_some() {
                    return Err(NetworkError::DuplicateNode(node));
                }
                if !tx_power_dbm.contains_key(&node) {
                    return Err(NetworkError::MissingTxPower(node));
                }
            }
        }
        Ok(Network {
            bans,
            tx_power_dbm,
            roles,
        })
    }

    /// `n_bans` BANs numbered from zero; BAN `b` has hub `3b` and sensors
    /// `3b+1`, `3b+2`.
    pub fn uniform(n_bans: u32, hub_tx_dbm: f64, sensor_tx_dbm: f64) -> Result<Self, NetworkError> {
        let bans: Vec<Ban> = (0..n_bans)
            .map(|b| Ban {
                ban_id: b,
                hub: NodeId(3 * b),
                sensors: [NodeId(3 * b + 1), NodeId(3 * b + 2)],
            })
            .collect();
        Self::with_role_powers(bans, hub_tx_dbm, sensor_tx_dbm)
    }

    pub fn with_role_powers(
        bans: Vec<Ban>,
        hub_tx_dbm: f64,
        sensor_tx_dbm: f64,
    ) -> Result<Self, NetworkError> {
        let mut powers = BTreeMap::new();
        for ban in &bans {
            powers.insert(ban.hub, hub_tx_dbm);
            for s in ban.sensors {
                powers.insert(s, sensor_tx_dbm);
            }
        }
        Self::new(bans, powers)
    }

    pub fn bans(&self) -> &[Ban] {
        &self.bans
    }

    pub fn hubs(&self) -> Vec<NodeId> {
        let mut hubs: Vec<NodeId> = self.bans.iter().map(|b| b.hub).collect();
        hubs.sort();
        hubs
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.roles.keys().copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.roles.contains_key(&node)
    }

    pub fn role(&self, node: NodeId) -> Option<Role> {
        self.roles.get(&node).map(|&(_, r)| r)
    }

    pub fn is_hub(&self, node: NodeId) -> bool {
        self.role(node) == Some(Role::Hub)
    }

    pub fn ban_of(&self, node: NodeId) -> Option<&Ban> {
        self.roles.get(&node).map(|&(i, _)| &self.bans[i])
    }

    /// Transmit power of `node`; panics on nodes outside the network.
    pub fn tx_power_dbm(&self, node: NodeId) -> f64 {
        self.tx_power_dbm[&node]
    }

    pub fn tx_powers(&self) -> &BTreeMap<NodeId, f64> {
        &self.tx_power_dbm
    }

    /// The hub↔hub and hub↔sensor links a synthetic trace covers.
    pub fn measured_links(&self) -> Vec<Link> {
        let hubs = self.hubs();
        let mut links = BTreeSet::new();
        for &h in &hubs {
            for node in self.nodes() {
                if node == h {
                    continue;
                }
                links.insert(Link::new(h, node));
                links.insert(Link::new(node, h));
            }
        }
        links.into_iter().collect()
    }
}

/// One channel-gain measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSample {
    pub time_ms: u64,
    pub tx: NodeId,
    pub rx: NodeId,
    pub gain_db: f64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: node {node} is not part of the network")]
    UnknownNode { line: u64, node: NodeId },
    #[error("sample at {time_ms} ms on link {tx}->{rx} is a self-loop")]
    SelfLoop {
        time_ms: u64,
        tx: NodeId,
        rx: NodeId,
    },
    #[error("sample time {time_ms} ms is not a multiple of the {period_ms} ms sampling period")]
    Misaligned { time_ms: u64, period_ms: u64 },
    #[error("duplicate sample at {time_ms} ms on link {tx}->{rx}")]
    Duplicate {
        time_ms: u64,
        tx: NodeId,
        rx: NodeId,
    },
    #[error("trace contains no samples")]
    Empty,
    #[error("window period {period_ms} ms is not a positive multiple of the {sampling_ms} ms sampling period")]
    BadWindow { period_ms: u64, sampling_ms: u64 },
    #[error("invalid synthetic model: {0}")]
    BadModel(String),
    #[error("sampling period must be positive")]
    BadSamplingPeriod,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Gain series for every measured directed link of a fixed population.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    network: Network,
    sampling_period_ms: u64,
    n_slots: usize,
    links: BTreeMap<Link, Vec<f64>>,
}

fn normalize_gain(raw: f64) -> f64 {
    if raw.is_finite() {
        raw
    } else {
        SENTINEL_GAIN_DB
    }
}

impl ChannelTrace {
    /// Builds a trace from raw samples in any order. Non-finite gains and
    /// slots a link was never heard in become [`SENTINEL_GAIN_DB`].
    pub fn from_samples<I>(
        network: Network,
        sampling_period_ms: u64,
        samples: I,
    ) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = GainSample>,
    {
        if sampling_period_ms == 0 {
            return Err(TraceError::BadSamplingPeriod);
        }
        let mut sparse: BTreeMap<Link, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut max_slot = None;
        for (i, s) in samples.into_iter().enumerate() {
            let line = i as u64 + 1;
            for node in [s.tx, s.rx] {
                if !network.contains(node) {
                    return Err(TraceError::UnknownNode { line, node });
                }
            }
            if s.tx == s.rx {
                return Err(TraceError::SelfLoop {
                    time_ms: s.time_ms,
                    tx: s.tx,
                    rx: s.rx,
                });
            }
            if s.time_ms % sampling_period_ms != 0 {
                return Err(TraceError::Misaligned {
                    time_ms: s.time_ms,
                    period_ms: sampling_period_ms,
                });
            }
            let slot = (s.time_ms / sampling_period_ms) as usize;
            let series = sparse.entry(Link::new(s.tx, s.rx)).or_default();
            if series.insert(slot, normalize_gain(s.gain_db)).is_some() {
                return Err(TraceError::Duplicate {
                    time_ms: s.time_ms,
                    tx: s.tx,
                    rx: s.rx,
                });
            }
            max_slot = max_slot.max(Some(slot));
        }
        let n_slots = max_slot.ok_or(TraceError::Empty)? + 1;
        let links = sparse
            .into_iter()
            .map(|(link, values)| {
                let mut dense = vec![SENTINEL_GAIN_DB; n_slots];
                for (slot, g) in values {
                    dense[slot] = g;
                }
                (link, dense)
            })
            .collect();
        Ok(ChannelTrace {
            network,
            sampling_period_ms,
            n_slots,
            links,
        })
    }

    /// Builds a trace from dense per-link series of equal length.
    pub fn from_series(
        network: Network,
        sampling_period_ms: u64,
        series: BTreeMap<Link, Vec<f64>>,
    ) -> Result<Self, TraceError> {
        if sampling_period_ms == 0 {
            return Err(TraceError::BadSamplingPeriod);
        }
        let n_slots = series.values().map(Vec::len).max().unwrap_or(0);
        if n_slots == 0 {
            return Err(TraceError::Empty);
        }
        let mut links = BTreeMap::new();
        for (link, mut values) in series {
            for node in [link.tx, link.rx] {
                if !network.contains(node) {
                    return Err(TraceError::UnknownNode { line: 0, node });
                }
            }
            if link.tx == link.rx {
                return Err(TraceError::SelfLoop {
                    time_ms: 0,
                    tx: link.tx,
                    rx: link.rx,
                });
            }
            values.iter_mut().for_each(|g| *g = normalize_gain(*g));
            values.resize(n_slots, SENTINEL_GAIN_DB);
            links.insert(link, values);
        }
        Ok(ChannelTrace {
            network,
            sampling_period_ms,
            n_slots,
            links,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn sampling_period_ms(&self) -> u64 {
        self.sampling_period_ms
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn duration_ms(&self) -> u64 {
        self.n_slots as u64 * self.sampling_period_ms
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.links.keys().copied()
    }

    pub fn series(&self, link: Link) -> Option<&[f64]> {
        self.links.get(&link).map(Vec::as_slice)
    }

    pub fn gain_at(&self, link: Link, slot: usize) -> Option<f64> {
        self.links.get(&link).and_then(|s| s.get(slot).copied())
    }

    pub fn sample_count(&self) -> usize {
        self.n_slots * self.links.len()
    }

    /// All samples ordered by time, then by link.
    pub fn samples(&self) -> impl Iterator<Item = GainSample> + '_ {
        (0..self.n_slots).flat_map(move |slot| {
            self.links.iter().map(move |(link, series)| GainSample {
                time_ms: slot as u64 * self.sampling_period_ms,
                tx: link.tx,
                rx: link.rx,
                gain_db: series[slot],
            })
        })
    }

    /// Writes the CSV trace schema. Gains use the shortest representation
    /// that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_ms", "tx", "rx", "gain_db"])?;
        for s in self.samples() {
            w.write_record([
                s.time_ms.to_string(),
                s.tx.to_string(),
                s.rx.to_string(),
                s.gain_db.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Parses a `time_ms,tx,rx,gain_db` CSV trace. `NaN` (any case) or an empty
/// gain field marks a missing sample.
pub fn read_trace<R: Read>(
    reader: R,
    network: Network,
    sampling_period_ms: u64,
) -> Result<ChannelTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["time_ms", "tx", "rx", "gain_db"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(TraceError::Parse {
            line: 1,
            msg: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(TraceError::Parse {
                line,
                msg: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let int = |idx: usize, what: &str| -> Result<u64, TraceError> {
            record[idx].parse::<u64>().map_err(|e| TraceError::Parse {
                line,
                msg: format!("bad {what} `{}`: {e}", &record[idx]),
            })
        };
        let time_ms = int(0, "time_ms")?;
        let tx = NodeId(int(1, "tx")? as u32);
        let rx = NodeId(int(2, "rx")? as u32);
        let raw = &record[3];
        let gain_db = if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
            f64::NAN
        } else {
            raw.parse::<f64>().map_err(|e| TraceError::Parse {
                line,
                msg: format!("bad gain_db `{raw}`: {e}"),
            })?
        };
        for node in [tx, rx] {
            if !network.contains(node) {
                return Err(TraceError::UnknownNode { line, node });
            }
        }
        samples.push(GainSample {
            time_ms,
            tx,
            rx,
            gain_db,
        });
    }
    ChannelTrace::from_samples(network, sampling_period_ms, samples)
}

pub fn load_trace(
    path: impl AsRef<Path>,
    network: Network,
    sampling_period_ms: u64,
) -> Result<ChannelTrace, TraceError> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file), network, sampling_period_ms)
}

/// Stationary amplitude family of a synthetic link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthFamily {
    /// Gaussian in dB (log-normal amplitude), AR(1) in the dB domain.
    LogNormal,
    /// Rician amplitude with the given linear K-factor; in-phase and
    /// quadrature components each follow an AR(1) process.
    Rician { k_factor: f64 },
}

/// Parameters of the synthetic channel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub mean_hub_hub_db: f64,
    /// Hub to its own sensors.
    pub mean_on_body_db: f64,
    /// Sensor of one BAN to the hub of another.
    pub mean_cross_db: f64,
    /// Std-dev of the per-link offset added to the class mean.
    pub link_spread_db: f64,
    pub autocorr: f64,
    pub innovation_std_db: f64,
    pub family: SynthFamily,
    /// Reverse direction of a link reuses the forward series.
    pub reciprocal: bool,
    pub sampling_period_ms: u64,
}

impl Default for SynthModel {
    fn default() -> Self {
        SynthModel {
            mean_hub_hub_db: -80.0,
            mean_on_body_db: -55.0,
            mean_cross_db: -82.0,
            link_spread_db: 5.0,
            autocorr: 0.9,
            innovation_std_db: 3.5,
            family: SynthFamily::LogNormal,
            reciprocal: true,
            sampling_period_ms: DEFAULT_SAMPLING_PERIOD_MS,
        }
    }
}

impl SynthModel {
    fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::BadModel(m.to_string()));
        if !(0.0..1.0).contains(&self.autocorr) {
            return bad("autocorrelation must lie in [0, 1)");
        }
        if !(self.innovation_std_db >= 0.0) || !self.innovation_std_db.is_finite() {
            return bad("innovation std-dev must be finite and non-negative");
        }
        if !(self.link_spread_db >= 0.0) || !self.link_spread_db.is_finite() {
            return bad("link spread must be finite and non-negative");
        }
        if ![
            self.mean_hub_hub_db,
            self.mean_on_body_db,
            self.mean_cross_db,
        ]
        .iter()
        .all(|m| m.is_finite())
        {
            return bad("mean gains must be finite");
        }
        if let SynthFamily::Rician { k_factor } = self.family {
            if !(k_factor >= 0.0) || !k_factor.is_finite() {
                return bad("Rician K-factor must be finite and non-negative");
            }
        }
        if self.sampling_period_ms == 0 {
            return Err(TraceError::BadSamplingPeriod);
        }
        Ok(())
    }

    fn class_mean(&self, network: &Network, link: Link) -> f64 {
        let (a, b) = (link.tx, link.rx);
        if network.is_hub(a) && network.is_hub(b) {
            self.mean_hub_hub_db
        } else if network.ban_of(a).map(|x| x.ban_id) == network.ban_of(b).map(|x| x.ban_id) {
            self.mean_on_body_db
        } else {
            self.mean_cross_db
        }
    }
}

fn link_seed(seed: u64, link: Link) -> u64 {
    // splitmix64 over the seed and both endpoints
    let mut z =
        seed ^ ((link.tx.0 as u64) << 32 | link.rx.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn synth_series(model: &SynthModel, mean_db: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rho = model.autocorr;
    let offset = model.link_spread_db * rng.sample::<f64, _>(StandardNormal);
    let mean = mean_db + offset;
    match model.family {
        SynthFamily::LogNormal => {
            let stationary = model.innovation_std_db / (1.0 - rho * rho).sqrt();
            let mut x = mean + stationary * rng.sample::<f64, _>(StandardNormal);
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                if i > 0 {
                    let eps: f64 = rng.sample(StandardNormal);
                    x = mean + rho * (x - mean) + model.innovation_std_db * eps;
                }
                out.push(x);
            }
            out
        }
        SynthFamily::Rician { k_factor } => {
            // unit mean power: nu^2 + 2 sigma^2 = 1
            let nu = (k_factor / (k_factor + 1.0)).sqrt();
            let sigma = (0.5 / (k_factor + 1.0)).sqrt();
            let innov = (1.0 - rho * rho).sqrt();
            let mut i_c: f64 = rng.sample(StandardNormal);
            let mut q_c: f64 = rng.sample(StandardNormal);
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                if t > 0 {
                    i_c = rho * i_c + innov * rng.sample::<f64, _>(StandardNormal);
                    q_c = rho * q_c + innov * rng.sample::<f64, _>(StandardNormal);
                }
                let amp = ((nu + sigma * i_c).powi(2) + (sigma * q_c).powi(2)).sqrt();
                out.push(mean + 20.0 * amp.max(1e-12).log10());
            }
            out
        }
    }
}

/// Generates a seeded synthetic trace covering every hub↔hub and hub↔sensor
/// link of `network`.
pub fn generate_synthetic(
    network: &Network,
    duration_ms: u64,
    seed: u64,
    model: &SynthModel,
) -> Result<ChannelTrace, TraceError> {
    model.validate()?;
    if duration_ms < model.sampling_period_ms {
        return Err(TraceError::BadModel(format!(
            "duration {duration_ms} ms is shorter than one {} ms sample",
            model.sampling_period_ms
        )));
    }
    let n = duration_ms.div_ceil(model.sampling_period_ms) as usize;
    let mut processes: BTreeMap<Link, Vec<f64>> = BTreeMap::new();
    let mut series = BTreeMap::new();
    for link in network.measured_links() {
        // With reciprocity the lower-numbered endpoint owns the process.
        let key = if model.reciprocal && link.tx > link.rx {
            link.reversed()
        } else {
            link
        };
        let values = processes.entry(key).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(link_seed(seed, key));
            synth_series(model, model.class_mean(network, key), n, &mut rng)
        });
        series.insert(link, values.clone());
    }
    ChannelTrace::from_series(network.clone(), model.sampling_period_ms, series)
}

/// A contiguous run of sampling slots of a trace.
#[derive(Debug, Clone)]
pub struct TimestampWindow<'a> {
    pub index: usize,
    pub start_ms: u64,
    pub period_ms: u64,
    slots: Range<usize>,
    trace: &'a ChannelTrace,
}

impl<'a> TimestampWindow<'a> {
    pub fn slots(&self) -> Range<usize> {
        self.slots.clone()
    }

    pub fn trace(&self) -> &'a ChannelTrace {
        self.trace
    }

    pub fn samples(&self, link: Link) -> Option<&'a [f64]> {
        self.trace.series(link).map(|s| &s[self.slots.clone()])
    }

    pub fn link_samples(&self) -> impl Iterator<Item = (Link, &'a [f64])> + '_ {
        self.trace
            .links
            .iter()
            .map(move |(l, s)| (*l, &s[self.slots.clone()]))
    }

    pub fn sample_count(&self) -> usize {
        self.slots.len() * self.trace.links.len()
    }
}

/// Splits `trace` into consecutive windows of `period_ms`; the last one may
/// be shorter.
pub fn window(
    trace: &ChannelTrace,
    period_ms: u64,
) -> Result<Vec<TimestampWindow<'_>>, TraceError> {
    let sp = trace.sampling_period_ms;
    if period_ms == 0 || !period_ms.is_multiple_of(sp) {
        return Err(TraceError::BadWindow {
            period_ms,
            sampling_ms: sp,
        });
    }
    let per = (period_ms / sp) as usize;
    let count = trace.n_slots.div_ceil(per);
    Ok((0..count)
        .map(|i| {
            let lo = i * per;
            let hi = (lo + per).min(trace.n_slots);
            TimestampWindow {
                index: i,
                start_ms: i as u64 * period_ms,
                period_ms,
                slots: lo..hi,
                trace,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> Network {
        Network::uniform(1, 0.0, 0.0).unwrap()
    }

    #[test]
    fn network_rejects_duplicates_and_missing_power() {
        let ban = |id, h, a, b| Ban {
            ban_id: id,
            hub: NodeId(h),
            sensors: [NodeId(a), NodeId(b)],
        };
        let err = Network::with_role_powers(vec![ban(0, 0, 1, 2), ban(1, 2, 3, 4)], 0.0, 0.0)
            .unwrap_err();
        assert_eq!(err, NetworkError::DuplicateNode(NodeId(2)));
        let mut powers = BTreeMap::new();
        powers.insert(NodeId(0), 0.0);
        powers.insert(NodeId(1), 0.0);
        let err = Network::new(vec![ban(0, 0, 1, 2)], powers).unwrap_err();
        assert_eq!(err, NetworkError::MissingTxPower(NodeId(2)));
    }

    #[test]
    fn row_maps_to_sample() {
        let csv = "time_ms,tx,rx,gain_db\n0,1,2,-75.3\n";
        let t = read_trace(csv.as_bytes(), two_node(), 50).unwrap();
        let s: Vec<_> = t.samples().collect();
        assert_eq!(
            s,
            vec![GainSample {
                time_ms: 0,
                tx: NodeId(1),
                rx: NodeId(2),
                gain_db: -75.3
            }]
        );
    }

    #[test]
    fn nan_and_empty_become_sentinel() {
        let csv = "time_ms,tx,rx,gain_db\n0,1,2,NaN\n50,1,2,\n100,1,2,nan\n150,1,2,-80\n";
        let t = read_trace(csv.as_bytes(), two_node(), 50).unwrap();
        assert_eq!(
            t.series(Link::new(NodeId(1), NodeId(2))).unwrap(),
            &[-101.0, -101.0, -101.0, -80.0]
        );
    }

    #[test]
    fn gaps_are_filled_with_sentinel() {
        let csv = "time_ms,tx,rx,gain_db\n0,1,2,-70\n150,1,2,-71\n";
        let t = read_trace(csv.as_bytes(), two_node(), 50).unwrap();
        assert_eq!(
            t.series(Link::new(NodeId(1), NodeId(2))).unwrap(),
            &[-70.0, -101.0, -101.0, -71.0]
        );
    }

    #[test]
    fn out_of_order_rows_match_sorted() {
        let sorted = "time_ms,tx,rx,gain_db\n0,0,1,-70\n0,1,0,-71\n50,0,1,-72\n50,1,0,-73\n";
        let shuffled = "time_ms,tx,rx,gain_db\n50,1,0,-73\n0,1,0,-71\n50,0,1,-72\n0,0,1,-70\n";
        let a = read_trace(sorted.as_bytes(), two_node(), 50).unwrap();
        let b = read_trace(shuffled.as_bytes(), two_node(), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "time_ms,tx,rx,gain_db\n0,1,2,-70\n50,1,two,-70\n";
        match read_trace(csv.as_bytes(), two_node(), 50) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "time_ms,tx,rx,gain_db\n0,1,2,abc\n";
        assert!(matches!(
            read_trace(csv.as_bytes(), two_node(), 50),
            Err(TraceError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_node_and_empty_file() {
        let csv = "time_ms,tx,rx,gain_db\n0,1,7,-70\n";
        assert!(matches!(
            read_trace(csv.as_bytes(), two_node(), 50),
            Err(TraceError::UnknownNode {
                line: 2,
                node: NodeId(7)
            })
        ));
        let csv = "time_ms,tx,rx,gain_db\n";
        assert!(matches!(
            read_trace(csv.as_bytes(), two_node(), 50),
            Err(TraceError::Empty)
        ));
        assert!(matches!(
            read_trace("".as_bytes(), two_node(), 50),
            Err(TraceError::Parse { .. })
        ));
    }

    #[test]
    fn misaligned_and_self_loop_rejected() {
        let csv = "time_ms,tx,rx,gain_db\n25,1,2,-70\n";
        assert!(matches!(
            read_trace(csv.as_bytes(), two_node(), 50),
            Err(TraceError::Misaligned { .. })
        ));
        let csv = "time_ms,tx,rx,gain_db\n0,1,1,-70\n";
        assert!(matches!(
            read_trace(csv.as_bytes(), two_node(), 50),
            Err(TraceError::SelfLoop { .. })
        ));
    }

    #[test]
    fn raw_values_below_sentinel_are_kept() {
        let csv = "time_ms,tx,rx,gain_db\n0,1,2,-120\n";
        let t = read_trace(csv.as_bytes(), two_node(), 50).unwrap();
        assert_eq!(t.gain_at(Link::new(NodeId(1), NodeId(2)), 0), Some(-120.0));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let net = Network::uniform(3, 0.0, 0.0).unwrap();
        let m = SynthModel::default();
        let a = generate_synthetic(&net, 5_000, 7, &m).unwrap();
        let b = generate_synthetic(&net, 5_000, 7, &m).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&net, 5_000, 8, &m).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_covers_hub_links_only() {
        let net = Network::uniform(3, 0.0, 0.0).unwrap();
        let t = generate_synthetic(&net, 1_000, 1, &SynthModel::default()).unwrap();
        // 3 hubs: 6 hub-hub + each hub to 6 sensors, both directions
        assert_eq!(t.links().count(), 6 + 2 * 3 * 6);
        assert!(t.links().all(|l| net.is_hub(l.tx) || net.is_hub(l.rx)));
        assert_eq!(t.n_slots(), 20);
    }

    #[test]
    fn zero_innovation_is_constant() {
        let net = Network::uniform(2, 0.0, 0.0).unwrap();
        let m = SynthModel {
            mean_hub_hub_db: -70.0,
            mean_on_body_db: -70.0,
            mean_cross_db: -70.0,
            link_spread_db: 0.0,
            innovation_std_db: 0.0,
            ..SynthModel::default()
        };
        let t = generate_synthetic(&net, 2_000, 3, &m).unwrap();
        assert!(t.samples().all(|s| s.gain_db == -70.0));
    }

    #[test]
    fn synthetic_rejects_bad_parameters() {
        let net = Network::uniform(2, 0.0, 0.0).unwrap();
        let m = SynthModel {
            autocorr: 1.0,
            ..SynthModel::default()
        };
        assert!(matches!(
            generate_synthetic(&net, 1_000, 0, &m),
            Err(TraceError::BadModel(_))
        ));
        let m = SynthModel {
            autocorr: -0.1,
            ..SynthModel::default()
        };
        assert!(generate_synthetic(&net, 1_000, 0, &m).is_err());
        assert!(generate_synthetic(&net, 0, 0, &SynthModel::default()).is_err());
    }

    #[test]
    fn window_counts() {
        let net = Network::uniform(1, 0.0, 0.0).unwrap();
        let m = SynthModel::default();
        let t = generate_synthetic(&net, 500, 0, &m).unwrap();
        let w = window(&t, 500).unwrap();
        assert_eq!(w.len(), 1);
        for (_, s) in w[0].link_samples() {
            assert_eq!(s.len(), 10);
        }
        assert!(matches!(window(&t, 120), Err(TraceError::BadWindow { .. })));
        assert!(matches!(window(&t, 0), Err(TraceError::BadWindow { .. })));
    }

    #[test]
    fn window_count_for_long_traces() {
        // 45 minutes and the 5329-timestamp segment; one link is enough
        let net = two_node();
        for (duration_ms, expected) in [
            (45 * 60 * 1000u64, 5400usize),
            (5329 * 500, 5329),
            (1_250, 3),
        ] {
            let n = (duration_ms / 50) as usize;
            let mut series = BTreeMap::new();
            series.insert(Link::new(NodeId(0), NodeId(1)), vec![-70.0; n]);
            let t = ChannelTrace::from_series(net.clone(), 50, series).unwrap();
            let w = window(&t, 500).unwrap();
            assert_eq!(w.len(), expected);
            let total: usize = w.iter().map(|w| w.sample_count()).sum();
            assert_eq!(total, t.sample_count());
        }
    }
}
