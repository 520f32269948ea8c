//! Event-driven simulation of the protocol on a network.
//!
//! Between events every idle node has exponential clocks with rates from
//! [`crate::protocol::transition_rates`]; the next event time is drawn from the
//! total rate and the firing clock chosen in proportion (equivalent to
//! resampling all clocks after each event). Packet ends, ping windows,
//! multiplier updates and the warmup boundary are deterministic events.
//!
//! Internally powers, batteries and multipliers are in normalized units
//! (divided or multiplied by the network's largest cost); results are
//! converted back to watts, joules and 1/W.

mod balance;
mod ping;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use balance::{verify_detailed_balance, verify_detailed_balance_with, BalanceReport};
pub use ping::ping_estimate;

use crate::error::{Error, Result};
use crate::gibbs::Multipliers;
use crate::network::NetworkConfig;
use crate::protocol::{
    transition_rates, transmit_continuation_probability, update_multiplier, IntervalSchedule, ListenerEstimate, NodeRuntime,
    ProtocolVariant,
};
use crate::state_space::{NodeState, StateCode, StateSpace, ThroughputMode};

/// Largest clique for which per-state occupancy may be collected.
pub const OCCUPANCY_MAX_NODES: usize = 8;
const MAX_TRACE_ROWS: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Transmitters know exactly how many nodes received the last packet.
    #[default]
    Perfect,
    /// Recipients ping at random times in a short window; colliding pings are lost.
    PingBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `delta` and `tau` every interval.
    #[default]
    Constant,
    /// `δ_k = 1/((k+1) ln(k+1))`, `τ_k = k·tau`.
    Decreasing,
}

fn d_packet() -> f64 {
    1e-3
}
fn d_delta() -> f64 {
    0.01
}
fn d_tau() -> f64 {
    10.0
}
fn d_ping_interval() -> f64 {
    8e-3
}
fn d_ping_length() -> f64 {
    4e-4
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub network: NetworkConfig,
    pub sigma: f64,
    #[serde(default)]
    pub variant: ProtocolVariant,
    #[serde(default)]
    pub mode: ThroughputMode,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_packet")]
    pub packet_length: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default)]
    pub step_schedule: StepSchedule,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "d_ping_interval")]
    pub ping_interval: f64,
    #[serde(default = "d_ping_length")]
    pub ping_length: f64,
    /// Charge the transmitter's ping window as listen time (otherwise as transmit time).
    #[serde(default = "d_true")]
    pub ping_wait_as_listen: bool,
    /// Hold multipliers fixed at these values (1/W) for the whole run.
    #[serde(default)]
    pub freeze_multipliers: Option<Multipliers>,
    /// Starting multipliers (1/W); zero when absent.
    #[serde(default)]
    pub initial_multipliers: Option<Multipliers>,
    /// Metrics only cover `[warmup, duration]`.
    #[serde(default)]
    pub warmup: f64,
    /// Stop after this many events even if `duration` is not reached.
    #[serde(default)]
    pub max_events: Option<u64>,
    /// Per-node offset of the multiplier update grid, in seconds.
    #[serde(default)]
    pub phase_offsets: Option<Vec<f64>>,
    /// Optional `[floor, ceiling]` for the virtual battery, in joules.
    #[serde(default)]
    pub battery_clamp: Option<(f64, f64)>,
    #[serde(default)]
    pub collect_occupancy: bool,
}

impl SimConfig {
    pub fn new(network: NetworkConfig, sigma: f64, duration: f64) -> Self {
        Self {
            network,
            sigma,
            variant: ProtocolVariant::default(),
            mode: ThroughputMode::default(),
            duration,
            seed: 0,
            packet_length: d_packet(),
            delta: d_delta(),
            tau: d_tau(),
            step_schedule: StepSchedule::default(),
            estimator: Estimator::default(),
            ping_interval: d_ping_interval(),
            ping_length: d_ping_length(),
            ping_wait_as_listen: true,
            freeze_multipliers: None,
            initial_multipliers: None,
            warmup: 0.0,
            max_events: None,
            phase_offsets: None,
            battery_clamp: None,
            collect_occupancy: false,
        }
    }

    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.network.validate() {
            v.push(e.to_string());
        }
        let n = self.network.len();
        let pos = |name: &str, x: f64, v: &mut Vec<String>| {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive and finite, got {x}"));
            }
        };
        pos("sigma", self.sigma, &mut v);
        pos("duration", self.duration, &mut v);
        pos("packet_length", self.packet_length, &mut v);
        pos("tau", self.tau, &mut v);
        pos("ping_interval", self.ping_interval, &mut v);
        pos("ping_length", self.ping_length, &mut v);
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            v.push(format!("delta must be nonnegative and finite, got {}", self.delta));
        }
        if self.ping_length >= self.ping_interval {
            v.push(format!("ping_length ({}) must be less than ping_interval ({})", self.ping_length, self.ping_interval));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.duration) {
            v.push(format!("warmup must be in [0, duration), got {}", self.warmup));
        }
        for (name, m) in [("freeze_multipliers", &self.freeze_multipliers), ("initial_multipliers", &self.initial_multipliers)] {
            if let Some(m) = m {
                if m.eta.len() != n {
                    v.push(format!("{name} has {} entries for {n} nodes", m.eta.len()));
                }
                if m.eta.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
                    v.push(format!("{name} entries must be finite and nonnegative"));
                }
            }
        }
        if let Some(off) = &self.phase_offsets {
            if off.len() != n {
                v.push(format!("phase_offsets has {} entries for {n} nodes", off.len()));
            }
            if off.iter().any(|&o| !(o >= 0.0 && o.is_finite())) {
                v.push("phase_offsets entries must be finite and nonnegative".into());
            }
        }
        if let Some((lo, hi)) = self.battery_clamp {
            if !(lo <= 0.0 && hi >= 0.0 && lo < hi) {
                v.push(format!("battery_clamp must satisfy floor ≤ 0 ≤ ceiling, floor < ceiling, got ({lo}, {hi})"));
            }
        }
        if self.collect_occupancy && (!self.network.topology.is_clique() || n > OCCUPANCY_MAX_NODES) {
            v.push(format!("collect_occupancy requires a clique of at most {OCCUPANCY_MAX_NODES} nodes"));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }

    fn interval_schedule(&self) -> IntervalSchedule {
        match self.step_schedule {
            StepSchedule::Constant => IntervalSchedule::Constant { delta: self.delta, tau: self.tau },
            StepSchedule::Decreasing => IntervalSchedule::Decreasing { tau_unit: self.tau },
        }
    }
}

/// Gap between two bursts at one receiver with at least one sleep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyInterval {
    pub receiver: usize,
    /// End of the earlier burst.
    pub start: f64,
    /// Start of the later burst.
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSample {
    pub time: f64,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub node: usize,
    pub from: NodeState,
    pub to: NodeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub groupput: f64,
    pub anyput: f64,
    pub simulated_time: f64,
    /// Length of the window the metrics cover (after warmup).
    pub measured_time: f64,
    pub events: u64,
    /// Packets per burst, one sample per receiver and uninterrupted run.
    pub burst_lengths: Vec<u64>,
    /// Packets per channel hold that reached at least one listener.
    pub episode_lengths: Vec<u64>,
    /// Seconds, in the same order as `latency_intervals`.
    pub latencies: Vec<f64>,
    pub latency_intervals: Vec<LatencyInterval>,
    pub per_node_energy_rate: Vec<f64>,
    pub per_node_listen_fraction: Vec<f64>,
    pub per_node_transmit_fraction: Vec<f64>,
    pub final_multipliers: Vec<f64>,
    pub final_battery: Vec<f64>,
    pub multiplier_trace: Vec<MultiplierSample>,
    #[serde(default)]
    pub occupancy: Option<Vec<f64>>,
    pub collided_time: f64,
    pub max_simultaneous_transmitters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bucket {
    Idle,
    Listen,
    Transmit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TxPhase {
    Packet,
    Ping,
}

#[derive(Debug, Clone)]
struct Receiver {
    node: usize,
    clean_now: bool,
    run: u64,
    first_clean: Option<f64>,
    last_clean_end: Option<f64>,
}

#[derive(Debug, Clone)]
struct Transmission {
    episode_start: f64,
    phase: TxPhase,
    phase_end: f64,
    packet_start: f64,
    packets: u64,
    last_clean: usize,
    receivers: Vec<Receiver>,
}

#[derive(Debug, Clone)]
struct Node {
    state: NodeState,
    rt: NodeRuntime,
    busy: u32,
    in_packet: u32,
    listen_nb: u32,
    sl: f64,
    lx: f64,
    rate: f64,
    dirty: bool,
    power: f64,
    bucket: Bucket,
    since: f64,
    listen_time: f64,
    transmit_time: f64,
    energy: f64,
    next_update: f64,
    last_burst_end: Option<f64>,
    slept: bool,
    tx: Option<Transmission>,
}

#[derive(Debug, Clone, Copy)]
enum Deterministic {
    Phase(usize),
    Update(usize),
    Snapshot,
    Warmup,
    End,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    p_ref: f64,
    nbrs: Vec<Vec<usize>>,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    t: f64,
    /// Multiplier inverse: packet length in seconds per unit rate.
    unit: f64,
    exp_c: Vec<f64>,
    schedule: IntervalSchedule,
    measuring_from: f64,
    warmup_pending: bool,
    snapshot_every: f64,
    next_snapshot: f64,
    events: u64,
    transmitters: usize,
    max_transmitters: usize,
    groupput: f64,
    anyput: f64,
    collided: f64,
    bursts: Vec<u64>,
    episodes: Vec<u64>,
    latencies: Vec<LatencyInterval>,
    mult_trace: Vec<MultiplierSample>,
    occupancy: Option<(StateSpace, Vec<f64>, StateCode, usize)>,
    trace: Option<Vec<TraceEvent>>,
}

pub fn run_simulation(config: &SimConfig) -> Result<SimMetrics> {
    Ok(Sim::new(config, false)?.run())
}

/// Same as [`run_simulation`] but also returns every node state change.
pub fn run_simulation_traced(config: &SimConfig) -> Result<(SimMetrics, Vec<TraceEvent>)> {
    let mut sim = Sim::new(config, true)?;
    let m = sim.run_inner();
    Ok((m, sim.trace.take().unwrap_or_default()))
}

/// Ping-based estimate for the given set of listeners under `config`'s timing.
pub fn estimate_listeners_ping<R: Rng + ?Sized>(listening_nodes: &[usize], rng: &mut R, config: &SimConfig) -> ListenerEstimate {
    ping_estimate(listening_nodes.len(), config.ping_interval, config.ping_length, rng)
}

/// Event trace as CSV with columns `time,node,old_state,new_state`.
pub fn trace_to_csv(trace: &[TraceEvent]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "node", "old_state", "new_state"]).map_err(|e| Error::Solver(e.to_string()))?;
    for e in trace {
        w.write_record([format!("{}", e.time), e.node.to_string(), e.from.to_string(), e.to.to_string()])
            .map_err(|e| Error::Solver(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Solver(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Solver(e.to_string()))
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, record_trace: bool) -> Result<Self> {
        cfg.validate()?;
        let p_ref = cfg.network.reference_power();
        let norm = cfg.network.normalized();
        let n = norm.len();
        let schedule = cfg.interval_schedule();
        let frozen = cfg.freeze_multipliers.is_some();
        let start_eta = cfg.freeze_multipliers.as_ref().or(cfg.initial_multipliers.as_ref());
        let nodes = (0..n)
            .map(|i| {
                let mut rt = NodeRuntime::new(norm.nodes[i]);
                rt.multiplier = start_eta.map_or(0.0, |m| m.eta[i] * p_ref);
                let offset = cfg.phase_offsets.as_ref().map_or(0.0, |o| o[i]);
                Node {
                    state: NodeState::Sleep,
                    rt,
                    busy: 0,
                    in_packet: 0,
                    listen_nb: 0,
                    sl: 0.0,
                    lx: 0.0,
                    rate: 0.0,
                    dirty: true,
                    power: 0.0,
                    bucket: Bucket::Idle,
                    since: 0.0,
                    listen_time: 0.0,
                    transmit_time: 0.0,
                    energy: 0.0,
                    next_update: if frozen { f64::INFINITY } else { offset + schedule.at(1).1 },
                    last_burst_end: None,
                    slept: false,
                    tx: None,
                }
            })
            .collect();
        let intervals = cfg.duration / cfg.tau;
        let stride = (intervals / MAX_TRACE_ROWS).ceil().max(1.0);
        let occupancy = if cfg.collect_occupancy {
            let space = StateSpace::new(n)?;
            let size = space.len();
            Some((space, vec![0.0; size], StateCode { listen: 0, transmitter: None }, 0))
        } else {
            None
        };
        let mut sim = Sim {
            cfg,
            p_ref,
            nbrs: norm.neighbor_lists(),
            nodes,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            t: 0.0,
            unit: cfg.packet_length,
            exp_c: (0..=n).map(|c| (c as f64 / cfg.sigma).exp()).collect(),
            schedule,
            measuring_from: cfg.warmup,
            warmup_pending: cfg.warmup > 0.0,
            snapshot_every: stride * cfg.tau,
            next_snapshot: 0.0,
            events: 0,
            transmitters: 0,
            max_transmitters: 0,
            groupput: 0.0,
            anyput: 0.0,
            collided: 0.0,
            bursts: Vec::new(),
            episodes: Vec::new(),
            latencies: Vec::new(),
            mult_trace: Vec::new(),
            occupancy,
            trace: record_trace.then(Vec::new),
        };
        for i in 0..n {
            sim.refresh_rate_cache(i);
        }
        Ok(sim)
    }

    fn run(mut self) -> SimMetrics {
        self.run_inner()
    }

    fn refresh_rate_cache(&mut self, i: usize) {
        let node = &mut self.nodes[i];
        let r = transition_rates(&node.rt, self.cfg.sigma, true, ListenerEstimate::exact(0), self.cfg.variant, self.cfg.mode);
        node.sl = r.sleep_to_listen;
        node.lx = r.listen_to_transmit;
        node.dirty = true;
    }

    fn listener_factor(&mut self, c: u32) -> f64 {
        let c = match self.cfg.estimator {
            Estimator::Perfect => c as usize,
            Estimator::PingBased => ping_estimate(c as usize, self.cfg.ping_interval, self.cfg.ping_length, &mut self.rng).count_estimate,
        };
        let c = match self.cfg.mode {
            ThroughputMode::Groupput => c,
            ThroughputMode::Anyput => c.min(1),
        };
        self.exp_c[c]
    }

    fn node_rate(&mut self, i: usize) -> f64 {
        let (state, busy, sl, lx, nb) = {
            let n = &self.nodes[i];
            (n.state, n.busy, n.sl, n.lx, n.listen_nb)
        };
        if busy > 0 {
            return 0.0;
        }
        match state {
            NodeState::Sleep => sl,
            NodeState::Listen => match self.cfg.variant {
                ProtocolVariant::Capture => 1.0 + lx,
                ProtocolVariant::NonCapture => 1.0 + lx * self.listener_factor(nb),
            },
            NodeState::Transmit => 0.0,
        }
    }

    fn total_rate(&mut self) -> f64 {
        let resample_listeners =
            self.cfg.variant == ProtocolVariant::NonCapture && self.cfg.estimator == Estimator::PingBased;
        let mut total = 0.0;
        for i in 0..self.nodes.len() {
            if self.nodes[i].dirty || (resample_listeners && self.nodes[i].state == NodeState::Listen) {
                let r = self.node_rate(i);
                self.nodes[i].rate = r;
                self.nodes[i].dirty = false;
            }
            total += self.nodes[i].rate;
        }
        total
    }

    fn measuring(&self) -> bool {
        !self.warmup_pending
    }

    /// Brings node `i`'s battery and time counters up to the current time.
    fn accrue(&mut self, i: usize) {
        let t = self.t;
        let clamp = self.cfg.battery_clamp.map(|(lo, hi)| (lo / self.p_ref, hi / self.p_ref));
        let measuring = self.measuring();
        let from = self.measuring_from;
        let node = &mut self.nodes[i];
        let dt = t - node.since;
        if dt > 0.0 {
            node.rt.accrue(node.power, dt, clamp);
            if measuring {
                let dm = t - node.since.max(from);
                if dm > 0.0 {
                    node.energy += node.power * dm;
                    match node.bucket {
                        Bucket::Listen => node.listen_time += dm,
                        Bucket::Transmit => node.transmit_time += dm,
                        Bucket::Idle => {}
                    }
                }
            }
        }
        node.since = t;
    }

    fn set_power(&mut self, i: usize, bucket: Bucket) {
        self.accrue(i);
        let p = self.nodes[i].rt.params;
        let node = &mut self.nodes[i];
        node.bucket = bucket;
        node.power = match bucket {
            Bucket::Idle => 0.0,
            Bucket::Listen => p.listen_cost,
            Bucket::Transmit => p.transmit_cost,
        };
    }

    fn advance(&mut self, t: f64) {
        if let Some((_, occ, _, idx)) = &mut self.occupancy {
            if !self.warmup_pending {
                occ[*idx] += t - self.t;
            }
        }
        self.t = t;
    }

    fn set_state(&mut self, i: usize, to: NodeState) {
        let from = self.nodes[i].state;
        self.nodes[i].state = to;
        self.nodes[i].dirty = true;
        if let Some(tr) = &mut self.trace {
            tr.push(TraceEvent { time: self.t, node: i, from, to });
        }
        if let Some((space, _, code, idx)) = &mut self.occupancy {
            let bit = 1u32 << i;
            code.listen &= !bit;
            if code.transmitter == Some(i as u8) {
                code.transmitter = None;
            }
            match to {
                NodeState::Listen => code.listen |= bit,
                NodeState::Transmit => code.transmitter = Some(i as u8),
                NodeState::Sleep => {}
            }
            *idx = space.index_of_code(*code);
        }
        let listen_delta: i32 = i32::from(to == NodeState::Listen) - i32::from(from == NodeState::Listen);
        let busy_delta: i32 = i32::from(to == NodeState::Transmit) - i32::from(from == NodeState::Transmit);
        for k in 0..self.nbrs[i].len() {
            let j = self.nbrs[i][k];
            let nb = &mut self.nodes[j];
            nb.listen_nb = (nb.listen_nb as i32 + listen_delta) as u32;
            nb.busy = (nb.busy as i32 + busy_delta) as u32;
            nb.dirty = true;
        }
    }

    fn run_inner(&mut self) -> SimMetrics {
        let max_events = self.cfg.max_events.unwrap_or(u64::MAX);
        loop {
            if self.events >= max_events {
                break;
            }
            let (t_det, what) = self.next_deterministic();
            let total = self.total_rate();
            let t_stoch = if total > 0.0 {
                let u: f64 = self.rng.gen();
                self.t - (1.0 - u).ln() * self.unit / total
            } else {
                f64::INFINITY
            };
            if t_stoch < t_det {
                self.advance(t_stoch);
                self.fire_stochastic(total);
                self.events += 1;
            } else {
                self.advance(t_det);
                match what {
                    Deterministic::Phase(i) => {
                        self.end_phase(i);
                        self.events += 1;
                    }
                    Deterministic::Update(i) => self.update(i),
                    Deterministic::Snapshot => self.snapshot(),
                    Deterministic::Warmup => self.start_measuring(),
                    Deterministic::End => break,
                }
            }
        }
        self.finish()
    }

    fn next_deterministic(&self) -> (f64, Deterministic) {
        let mut best = (self.cfg.duration, Deterministic::End);
        if self.warmup_pending && self.cfg.warmup <= best.0 {
            best = (self.cfg.warmup, Deterministic::Warmup);
        }
        if self.next_snapshot <= best.0 {
            best = (self.next_snapshot, Deterministic::Snapshot);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.next_update <= best.0 {
                best = (n.next_update, Deterministic::Update(i));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(tx) = &n.tx {
                if tx.phase_end <= best.0 {
                    best = (tx.phase_end, Deterministic::Phase(i));
                }
            }
        }
        best
    }

    fn fire_stochastic(&mut self, total: f64) {
        let target = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.rate > 0.0 {
                chosen = Some(i);
                acc += n.rate;
                if target < acc {
                    break;
                }
            }
        }
        let Some(i) = chosen else { return };
        match self.nodes[i].state {
            NodeState::Sleep => {
                self.set_power(i, Bucket::Listen);
                self.set_state(i, NodeState::Listen);
            }
            NodeState::Listen => {
                let rate = self.nodes[i].rate;
                // Listen leaves at rate 1 to sleep; the rest goes to transmit.
                if self.rng.gen::<f64>() * rate < 1.0 {
                    self.set_power(i, Bucket::Idle);
                    self.set_state(i, NodeState::Sleep);
                    self.nodes[i].slept = true;
                } else {
                    self.start_episode(i);
                }
            }
            NodeState::Transmit => {}
        }
    }

    fn start_episode(&mut self, i: usize) {
        self.set_power(i, Bucket::Transmit);
        self.set_state(i, NodeState::Transmit);
        self.transmitters += 1;
        self.max_transmitters = self.max_transmitters.max(self.transmitters);
        let receivers = self.nbrs[i]
            .iter()
            .filter(|&&j| self.nodes[j].state == NodeState::Listen)
            .map(|&j| Receiver { node: j, clean_now: true, run: 0, first_clean: None, last_clean_end: None })
            .collect();
        self.nodes[i].tx = Some(Transmission {
            episode_start: self.t,
            phase: TxPhase::Packet,
            phase_end: self.t,
            packet_start: self.t,
            packets: 0,
            last_clean: 0,
            receivers,
        });
        self.start_packet(i);
    }

    fn start_packet(&mut self, i: usize) {
        let t = self.t;
        if self.nodes[i].bucket != Bucket::Transmit {
            self.set_power(i, Bucket::Transmit);
        }
        for k in 0..self.nbrs[i].len() {
            let j = self.nbrs[i][k];
            self.nodes[j].in_packet += 1;
        }
        let mut tx = self.nodes[i].tx.take().expect("transmitting node");
        tx.phase = TxPhase::Packet;
        tx.packet_start = t;
        tx.phase_end = t + self.cfg.packet_length;
        for rx in &mut tx.receivers {
            rx.clean_now = self.nodes[rx.node].in_packet == 1;
            if !rx.clean_now {
                // Void every other packet this receiver is hearing right now.
                let r = rx.node;
                for &k in &self.nbrs[r] {
                    if k == i {
                        continue;
                    }
                    if let Some(other) = &mut self.nodes[k].tx {
                        if other.phase == TxPhase::Packet {
                            if let Some(orx) = other.receivers.iter_mut().find(|x| x.node == r) {
                                orx.clean_now = false;
                            }
                        }
                    }
                }
            }
        }
        self.nodes[i].tx = Some(tx);
    }

    fn end_phase(&mut self, i: usize) {
        let phase = self.nodes[i].tx.as_ref().expect("transmitting node").phase;
        match phase {
            TxPhase::Packet => {
                let clean = self.finish_packet(i);
                match (self.cfg.variant, self.cfg.estimator) {
                    (ProtocolVariant::NonCapture, _) => self.end_episode(i),
                    (ProtocolVariant::Capture, Estimator::Perfect) => self.continue_or_release(i, ListenerEstimate::exact(clean)),
                    (ProtocolVariant::Capture, Estimator::PingBased) => {
                        let bucket = if self.cfg.ping_wait_as_listen { Bucket::Listen } else { Bucket::Transmit };
                        self.set_power(i, bucket);
                        let tx = self.nodes[i].tx.as_mut().expect("transmitting node");
                        tx.phase = TxPhase::Ping;
                        tx.phase_end = self.t + self.cfg.ping_interval;
                        tx.last_clean = clean;
                    }
                }
            }
            TxPhase::Ping => {
                let heard = self.nodes[i].tx.as_ref().expect("transmitting node").last_clean;
                let est = ping_estimate(heard, self.cfg.ping_interval, self.cfg.ping_length, &mut self.rng);
                self.continue_or_release(i, est);
            }
        }
    }

    fn continue_or_release(&mut self, i: usize, est: ListenerEstimate) {
        let p = transmit_continuation_probability(est, self.cfg.sigma, self.cfg.mode);
        if self.rng.gen::<f64>() < p {
            self.start_packet(i);
        } else {
            self.end_episode(i);
        }
    }

    /// Credits the packet that just ended and returns how many received it cleanly.
    fn finish_packet(&mut self, i: usize) -> usize {
        let t = self.t;
        for k in 0..self.nbrs[i].len() {
            let j = self.nbrs[i][k];
            self.nodes[j].in_packet -= 1;
        }
        let measuring = self.measuring();
        let from = self.measuring_from;
        let mut tx = self.nodes[i].tx.take().expect("transmitting node");
        let counted = measuring && tx.episode_start >= from;
        let mut clean = 0;
        for rx in &mut tx.receivers {
            if rx.clean_now {
                clean += 1;
                rx.run += 1;
                rx.first_clean.get_or_insert(tx.packet_start);
                rx.last_clean_end = Some(t);
            } else {
                if rx.run > 0 && counted {
                    self.bursts.push(rx.run);
                }
                rx.run = 0;
                if measuring {
                    self.collided += t - tx.packet_start.max(from);
                }
            }
        }
        tx.packets += 1;
        if measuring {
            let credit = t - tx.packet_start.max(from);
            self.groupput += clean as f64 * credit;
            if clean > 0 {
                self.anyput += credit;
            }
        }
        self.nodes[i].tx = Some(tx);
        clean
    }

    fn end_episode(&mut self, i: usize) {
        let tx = self.nodes[i].tx.take().expect("transmitting node");
        self.set_power(i, Bucket::Listen);
        self.set_state(i, NodeState::Listen);
        self.transmitters -= 1;
        let counted = self.measuring() && tx.episode_start >= self.measuring_from;
        if counted && !tx.receivers.is_empty() {
            self.episodes.push(tx.packets);
        }
        for rx in &tx.receivers {
            if rx.run > 0 && counted {
                self.bursts.push(rx.run);
            }
            let (Some(first), Some(last)) = (rx.first_clean, rx.last_clean_end) else { continue };
            let node = &mut self.nodes[rx.node];
            if let Some(prev) = node.last_burst_end {
                if node.slept {
                    self.latencies.push(LatencyInterval { receiver: rx.node, start: prev, end: first });
                }
            }
            node.last_burst_end = Some(last);
            node.slept = false;
        }
    }

    fn update(&mut self, i: usize) {
        self.accrue(i);
        let k = self.nodes[i].rt.interval_index + 1;
        let (delta, tau) = self.schedule.at(k);
        let battery = self.nodes[i].rt.battery;
        update_multiplier(&mut self.nodes[i].rt, delta, tau, battery).expect("tau validated positive");
        self.refresh_rate_cache(i);
        self.nodes[i].next_update = self.t + self.schedule.at(k + 1).1;
    }

    fn snapshot(&mut self) {
        let eta = self.nodes.iter().map(|n| n.rt.multiplier / self.p_ref).collect();
        self.mult_trace.push(MultiplierSample { time: self.t, eta });
        self.next_snapshot += self.snapshot_every;
    }

    fn start_measuring(&mut self) {
        for i in 0..self.nodes.len() {
            self.accrue(i);
            let n = &mut self.nodes[i];
            n.energy = 0.0;
            n.listen_time = 0.0;
            n.transmit_time = 0.0;
            n.last_burst_end = None;
            n.slept = false;
        }
        self.measuring_from = self.t;
        self.warmup_pending = false;
    }

    fn finish(&mut self) -> SimMetrics {
        for i in 0..self.nodes.len() {
            self.accrue(i);
        }
        let t_end = self.t;
        let measured = if self.warmup_pending { 0.0 } else { t_end - self.measuring_from };
        let per = |x: f64| if measured > 0.0 { x / measured } else { 0.0 };
        let occupancy = self.occupancy.as_ref().map(|(_, occ, _, _)| {
            let s: f64 = occ.iter().sum();
            occ.iter().map(|x| if s > 0.0 { x / s } else { 0.0 }).collect()
        });
        SimMetrics {
            groupput: per(self.groupput),
            anyput: per(self.anyput),
            simulated_time: t_end,
            measured_time: measured,
            events: self.events,
            burst_lengths: std::mem::take(&mut self.bursts),
            episode_lengths: std::mem::take(&mut self.episodes),
            latencies: self.latencies.iter().map(|l| l.end - l.start).collect(),
            latency_intervals: std::mem::take(&mut self.latencies),
            per_node_energy_rate: self.nodes.iter().map(|n| per(n.energy) * self.p_ref).collect(),
            per_node_listen_fraction: self.nodes.iter().map(|n| per(n.listen_time)).collect(),
            per_node_transmit_fraction: self.nodes.iter().map(|n| per(n.transmit_time)).collect(),
            final_multipliers: self.nodes.iter().map(|n| n.rt.multiplier / self.p_ref).collect(),
            final_battery: self.nodes.iter().map(|n| n.rt.battery * self.p_ref).collect(),
            multiplier_trace: std::mem::take(&mut self.mult_trace),
            occupancy,
            collided_time: self.collided,
            max_simultaneous_transmitters: self.max_transmitters,
        }
    }
}
