//! Per-node protocol rules: transition rates, multiplier updates, virtual battery.
//!
//! Rates are per unit packet time. A node only needs its own multiplier, its
//! own power levels, the carrier-sense bit and an estimate of how many nodes
//! listen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NodePowerProfile;
use crate::state_space::ThroughputMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    /// The transmitter may keep the channel for a geometric run of packets.
    #[default]
    Capture,
    /// One packet per channel access; listeners bias their entry into transmit instead.
    NonCapture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub sleep_to_listen: f64,
    pub listen_to_sleep: f64,
    pub listen_to_transmit: f64,
    pub transmit_to_listen: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ListenerEstimate {
    pub count_estimate: usize,
    pub any_estimate: bool,
}

impl ListenerEstimate {
    pub fn exact(count: usize) -> Self {
        Self { count_estimate: count, any_estimate: count >= 1 }
    }

    /// The value the rates use: the count for groupput, the indicator for anyput.
    pub fn effective(&self, mode: ThroughputMode) -> f64 {
        match mode {
            ThroughputMode::Groupput => self.count_estimate as f64,
            ThroughputMode::Anyput => f64::from(u8::from(self.any_estimate)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRuntime {
    pub multiplier: f64,
    /// Virtual battery level in joules.
    pub battery: f64,
    pub battery_at_interval_start: f64,
    pub interval_index: u64,
    pub params: NodePowerProfile,
}

impl NodeRuntime {
    pub fn new(params: NodePowerProfile) -> Self {
        Self { multiplier: 0.0, battery: 0.0, battery_at_interval_start: 0.0, interval_index: 0, params }
    }

    /// Harvest `ρ·dt` and spend `power·dt`, optionally clamped to `[lo, hi]`.
    pub fn accrue(&mut self, power: f64, dt: f64, clamp: Option<(f64, f64)>) {
        let b = self.battery + (self.params.rho - power) * dt;
        self.battery = match clamp {
            Some((lo, hi)) => b.clamp(lo, hi),
            None => b,
        };
    }
}

pub fn transition_rates(
    runtime: &NodeRuntime,
    sigma: f64,
    carrier_clear: bool,
    est: ListenerEstimate,
    variant: ProtocolVariant,
    mode: ThroughputMode,
) -> RateSet {
    let a = f64::from(u8::from(carrier_clear));
    let eta = runtime.multiplier;
    let NodePowerProfile { listen_cost: l, transmit_cost: x, .. } = runtime.params;
    let c = est.effective(mode);
    let (lx, xl) = match variant {
        ProtocolVariant::Capture => ((eta * (l - x) / sigma).exp(), (-c / sigma).exp()),
        ProtocolVariant::NonCapture => ((eta * (l - x) / sigma + c / sigma).exp(), 1.0),
    };
    RateSet {
        sleep_to_listen: a * (-eta * l / sigma).exp(),
        listen_to_sleep: a,
        listen_to_transmit: a * lx,
        transmit_to_listen: xl,
    }
}

/// Projected noisy-gradient step on the multiplier from the battery change
/// over the last interval. Advances the interval counter.
pub fn update_multiplier(runtime: &mut NodeRuntime, delta_k: f64, tau_k: f64, battery_end: f64) -> Result<f64> {
    if !(tau_k > 0.0) {
        return Err(Error::Domain(format!("interval length must be positive, got {tau_k}")));
    }
    let eta = (runtime.multiplier - delta_k / tau_k * (battery_end - runtime.battery_at_interval_start)).max(0.0);
    runtime.multiplier = eta;
    runtime.interval_index += 1;
    runtime.battery_at_interval_start = battery_end;
    runtime.battery = battery_end;
    Ok(eta)
}

/// Probability that a capturing transmitter sends another packet.
pub fn transmit_continuation_probability(est: ListenerEstimate, sigma: f64, mode: ThroughputMode) -> f64 {
    1.0 - (-est.effective(mode) / sigma).exp()
}

/// Step size and interval length for update `k` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum IntervalSchedule {
    Constant { delta: f64, tau: f64 },
    /// `δ_k = 1/((k+1)·ln(k+1))`, `τ_k = k·tau_unit`.
    Decreasing { tau_unit: f64 },
}

impl Default for IntervalSchedule {
    fn default() -> Self {
        IntervalSchedule::Constant { delta: 0.01, tau: 10.0 }
    }
}

impl IntervalSchedule {
    pub fn at(&self, k: u64) -> (f64, f64) {
        match *self {
            IntervalSchedule::Constant { delta, tau } => (delta, tau),
            IntervalSchedule::Decreasing { tau_unit } => {
                let kf = k.max(1) as f64;
                (1.0 / ((kf + 1.0) * (kf + 1.0).ln()), kf * tau_unit)
            }
        }
    }
}
