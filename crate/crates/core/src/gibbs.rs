//! Exact solver for the entropy-perturbed throughput problem.
//!
//! For multipliers `η` the optimal state distribution is the Gibbs measure
//! `π_w ∝ exp((T_w − Σ_listen η_i L_i − Σ_transmit η_i X_i)/σ)`. Dual descent on
//! `η` drives every node's average consumption onto its budget.
//!
//! Public multipliers are in 1/W. Descent runs on `η·P` with powers divided
//! by `P` (the largest cost in the network), which leaves the distribution
//! unchanged but makes step sizes independent of the unit scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::state_space::{state_count, StateSpace, ThroughputMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub eta: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize) -> Self {
        Self { eta: vec![0.0; n] }
    }

    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::Domain("multipliers must be finite and nonnegative".into()));
        }
        Ok(Self { eta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    /// Node count of the canonical state space the vectors are indexed by.
    pub nodes: usize,
    pub log_weights: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl StateDistribution {
    pub fn from_log_weights(nodes: usize, log_weights: Vec<f64>) -> Self {
        let lz = log_sum_exp(&log_weights);
        let probabilities = log_weights.iter().map(|&l| (l - lz).exp()).collect();
        Self { nodes, log_weights, probabilities }
    }

    pub fn log_partition(&self) -> f64 {
        log_sum_exp(&self.log_weights)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        let lz = self.log_partition();
        -self
            .probabilities
            .iter()
            .zip(&self.log_weights)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &l)| p * (l - lz))
            .sum::<f64>()
    }

    pub fn check_aligned(&self, config: &NetworkConfig) -> Result<()> {
        let want = state_count(config.len());
        if self.nodes != config.len() || self.probabilities.len() != want || self.log_weights.len() != want {
            return Err(Error::Alignment(format!(
                "distribution over {} states ({} nodes) does not match a {}-node network ({want} states)",
                self.probabilities.len(),
                self.nodes,
                config.len()
            )));
        }
        Ok(())
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")))
    }
}

/// State space plus per-state throughput for one network and mode.
struct Model {
    space: StateSpace,
    throughput: Vec<f64>,
    listen: Vec<f64>,
    transmit: Vec<f64>,
    rho: Vec<f64>,
}

impl Model {
    /// `scale` multiplies every power (use `1/P` for normalized units).
    fn new(config: &NetworkConfig, mode: ThroughputMode, scale: f64) -> Result<Self> {
        config.validate()?;
        config.require_clique("the Gibbs solver")?;
        let space = StateSpace::new(config.len())?;
        let throughput = space.codes().iter().map(|c| c.throughput(mode)).collect();
        Ok(Self {
            space,
            throughput,
            listen: config.nodes.iter().map(|p| p.listen_cost * scale).collect(),
            transmit: config.nodes.iter().map(|p| p.transmit_cost * scale).collect(),
            rho: config.nodes.iter().map(|p| p.rho * scale).collect(),
        })
    }

    fn n(&self) -> usize {
        self.rho.len()
    }

    fn distribution(&self, eta: &[f64], sigma: f64) -> StateDistribution {
        let lc: Vec<f64> = eta.iter().zip(&self.listen).map(|(e, l)| e * l).collect();
        let xc: Vec<f64> = eta.iter().zip(&self.transmit).map(|(e, x)| e * x).collect();
        let lw = self
            .space
            .codes()
            .iter()
            .zip(&self.throughput)
            .map(|(c, &t)| {
                let mut cost = 0.0;
                let mut bits = c.listen;
                while bits != 0 {
                    cost += lc[bits.trailing_zeros() as usize];
                    bits &= bits - 1;
                }
                if let Some(x) = c.transmitter {
                    cost += xc[x as usize];
                }
                (t - cost) / sigma
            })
            .collect();
        StateDistribution::from_log_weights(self.n(), lw)
    }

    fn marginals(&self, dist: &StateDistribution) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        for (c, &p) in self.space.codes().iter().zip(&dist.probabilities) {
            let mut bits = c.listen;
            while bits != 0 {
                a[bits.trailing_zeros() as usize] += p;
                bits &= bits - 1;
            }
            if let Some(x) = c.transmitter {
                b[x as usize] += p;
            }
        }
        (a, b)
    }

    fn throughput(&self, dist: &StateDistribution) -> f64 {
        dist.probabilities.iter().zip(&self.throughput).map(|(p, t)| p * t).sum()
    }

    fn consumption(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| a[i] * self.listen[i] + b[i] * self.transmit[i]).collect()
    }

    fn dual(&self, eta: &[f64], sigma: f64) -> f64 {
        let d = self.distribution(eta, sigma);
        sigma * d.log_partition() + eta.iter().zip(&self.rho).map(|(e, r)| e * r).sum::<f64>()
    }
}

pub fn steady_state_distribution(config: &NetworkConfig, eta: &Multipliers, sigma: f64, mode: ThroughputMode) -> Result<StateDistribution> {
    check_sigma(sigma)?;
    let model = Model::new(config, mode, 1.0)?;
    check_eta(eta, config)?;
    Ok(model.distribution(&eta.eta, sigma))
}

fn check_eta(eta: &Multipliers, config: &NetworkConfig) -> Result<()> {
    if eta.eta.len() != config.len() {
        return Err(Error::Alignment(format!("{} multipliers for {} nodes", eta.eta.len(), config.len())));
    }
    Multipliers::new(eta.eta.clone()).map(|_| ())
}

/// Per-node listen and transmit time fractions under `dist`.
pub fn marginal_fractions(dist: &StateDistribution, config: &NetworkConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    dist.check_aligned(config)?;
    let space = StateSpace::new(config.len())?;
    let n = config.len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    for (c, &p) in space.codes().iter().zip(&dist.probabilities) {
        for (i, ai) in a.iter_mut().enumerate() {
            if c.listen >> i & 1 == 1 {
                *ai += p;
            }
        }
        if let Some(x) = c.transmitter {
            b[x as usize] += p;
        }
    }
    Ok((a, b))
}

/// Expected throughput under `dist`.
pub fn expected_throughput(dist: &StateDistribution, mode: ThroughputMode, config: &NetworkConfig) -> Result<f64> {
    dist.check_aligned(config)?;
    let space = StateSpace::new(config.len())?;
    Ok(space.codes().iter().zip(&dist.probabilities).map(|(c, p)| p * c.throughput(mode)).sum())
}

/// Expected throughput plus `sigma` times entropy (nats).
pub fn p4_objective(dist: &StateDistribution, sigma: f64, mode: ThroughputMode, config: &NetworkConfig) -> Result<f64> {
    let t = expected_throughput(dist, mode, config)?;
    let ent = if sigma == 0.0 { 0.0 } else { sigma * dist.entropy() };
    Ok(t + ent)
}

/// `ρ_i − (α_i L_i + β_i X_i)` in watts for the distribution induced by `eta`.
pub fn dual_gradient(config: &NetworkConfig, eta: &Multipliers, sigma: f64, mode: ThroughputMode) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let model = Model::new(config, mode, 1.0)?;
    check_eta(eta, config)?;
    let d = model.distribution(&eta.eta, sigma);
    let (a, b) = model.marginals(&d);
    let cons = model.consumption(&a, &b);
    Ok(model.rho.iter().zip(cons).map(|(r, c)| r - c).collect())
}

/// Dual function `σ·ln Z(η) + Σ η_i ρ_i`; convex, minimized at the optimal multipliers.
pub fn dual_value(config: &NetworkConfig, eta: &Multipliers, sigma: f64, mode: ThroughputMode) -> Result<f64> {
    check_sigma(sigma)?;
    let model = Model::new(config, mode, 1.0)?;
    check_eta(eta, config)?;
    Ok(model.dual(&eta.eta, sigma))
}

/// Step size schedule for dual descent, in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `δ_k = scale/k`.
    Harmonic { scale: f64 },
    /// `δ_k = scale/((k+1)·ln(k+1))`.
    LogHarmonic { scale: f64 },
    Constant { step: f64 },
    /// Diagonally preconditioned projected gradient with backtracking on the
    /// dual function. Converges to tight tolerances in a few hundred steps.
    Adaptive,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Adaptive
    }
}

impl StepRule {
    fn step(&self, k: usize) -> f64 {
        let kf = k as f64;
        match *self {
            StepRule::Harmonic { scale } => scale / kf,
            StepRule::LogHarmonic { scale } => scale / ((kf + 1.0) * (kf + 1.0).ln()),
            StepRule::Constant { step } => step,
            StepRule::Adaptive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub step_rule: StepRule,
    pub max_iters: usize,
    /// Tolerance on both the normalized constraint violation and the multiplier change.
    pub stop_tol: f64,
    pub record_trace: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { step_rule: StepRule::default(), max_iters: 100_000, stop_tol: 1e-7, record_trace: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub eta: Vec<f64>,
    pub throughput: f64,
    /// `ρ_i − consumption_i` in watts.
    pub power_slack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsResult {
    pub mode: ThroughputMode,
    pub sigma: f64,
    pub multipliers: Multipliers,
    pub distribution: StateDistribution,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub throughput: f64,
    pub entropy: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final projected-gradient violation in normalized units.
    pub max_violation: f64,
    pub trace: Vec<TraceRecord>,
}

pub fn gradient_descent(config: &NetworkConfig, sigma: f64, mode: ThroughputMode, opts: &DescentOptions) -> Result<GibbsResult> {
    check_sigma(sigma)?;
    let p_ref = config.reference_power();
    let model = Model::new(config, mode, 1.0 / p_ref)?;
    let n = model.n();
    let mut eta = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    let mut trace = Vec::new();
    let mut k = 0;
    loop {
        k += 1;
        let dist = model.distribution(&eta, sigma);
        let (a, b) = model.marginals(&dist);
        let cons = model.consumption(&a, &b);
        let grad: Vec<f64> = model.rho.iter().zip(&cons).map(|(r, c)| r - c).collect();
        let violation = (0..n).map(|i| (eta[i] - (eta[i] - grad[i]).max(0.0)).abs()).fold(0.0, f64::max);
        let throughput = model.throughput(&dist);
        if opts.record_trace {
            trace.push(TraceRecord {
                iteration: k,
                eta: eta.iter().map(|e| e / p_ref).collect(),
                throughput,
                power_slack: grad.iter().map(|g| g * p_ref).collect(),
            });
        }
        let converged = violation < opts.stop_tol && last_change < opts.stop_tol;
        if converged || k >= opts.max_iters {
            let entropy = dist.entropy();
            return Ok(GibbsResult {
                mode,
                sigma,
                multipliers: Multipliers { eta: eta.iter().map(|e| e / p_ref).collect() },
                alpha: a,
                beta: b,
                throughput,
                entropy,
                objective: throughput + sigma * entropy,
                distribution: dist,
                converged,
                iterations: k,
                max_violation: violation,
                trace,
            });
        }
        let next = match opts.step_rule {
            StepRule::Adaptive => adaptive_step(&model, &eta, &grad, &a, &b, sigma),
            rule => {
                let d = rule.step(k);
                eta.iter().zip(&grad).map(|(e, g)| (e - d * g).max(0.0)).collect()
            }
        };
        last_change = eta.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        eta = next;
    }
}

fn adaptive_step(model: &Model, eta: &[f64], grad: &[f64], a: &[f64], b: &[f64], sigma: f64) -> Vec<f64> {
    let n = eta.len();
    // Diagonal of the dual Hessian: Var(cost_i)/σ.
    let h: Vec<f64> = (0..n)
        .map(|i| {
            let (l, x) = (model.listen[i], model.transmit[i]);
            let mean = a[i] * l + b[i] * x;
            let var = a[i] * l * l + b[i] * x * x - mean * mean;
            (var / sigma).max(1e-12)
        })
        .collect();
    let d0 = model.dual(eta, sigma);
    let mut t = 1.0;
    for _ in 0..60 {
        let cand: Vec<f64> = (0..n).map(|i| (eta[i] - t * grad[i] / h[i]).max(0.0)).collect();
        let decrease: f64 = (0..n).map(|i| grad[i] * (cand[i] - eta[i])).sum();
        let d1 = model.dual(&cand, sigma);
        if d1 <= d0 + 1e-4 * decrease || decrease.abs() < 1e-300 {
            return cand;
        }
        t *= 0.5;
    }
    eta.to_vec()
}
