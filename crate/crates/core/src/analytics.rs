//! Burst lengths, latency statistics, random heterogeneous networks and
//! oracle-normalized summaries.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{log_sum_exp, GibbsResult, StateDistribution};
use crate::network::{NetworkConfig, NodePowerProfile};
use crate::oracle::OracleSolution;
use crate::simulator::SimMetrics;
use crate::state_space::{StateSpace, ThroughputMode};

const MICRO: f64 = 1e-6;
const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstinessReport {
    pub analytic_mean: f64,
    /// `None` without samples.
    pub empirical_mean: Option<f64>,
    /// `(empirical − analytic) / analytic`.
    pub relative_gap: Option<f64>,
    pub samples: usize,
    pub mode: ThroughputMode,
    pub sigma: f64,
}

/// Mean number of back-to-back packets per channel hold under `dist`.
///
/// Groupput averages `exp(c/σ)` harmonically over states with a transmitter
/// and at least one listener; anyput is `exp(1/σ)` for every network.
pub fn analytic_burst_length(dist: &StateDistribution, sigma: f64, mode: ThroughputMode, config: &NetworkConfig) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if mode == ThroughputMode::Anyput {
        return Ok((1.0 / sigma).exp());
    }
    config.require_clique("analytic burst length")?;
    dist.check_aligned(config)?;
    let space = StateSpace::new(config.len())?;
    let mut held = Vec::new();
    for (code, &lw) in space.codes().iter().zip(&dist.log_weights) {
        let c = code.listeners();
        if code.transmitter.is_some() && c >= 1 && lw > f64::NEG_INFINITY {
            held.push((lw, c));
        }
    }
    let Some(c_min) = held.iter().map(|h| h.1).min() else {
        return Err(Error::UndefinedBurst("no state has both a transmitter and a listener".into()));
    };
    // Factor out exp(c_min/σ) so equal listener counts give exactly that value.
    let num: Vec<f64> = held.iter().map(|h| h.0).collect();
    let den: Vec<f64> = held.iter().map(|&(lw, c)| lw - (c - c_min) as f64 / sigma).collect();
    let spread = (log_sum_exp(&num) - log_sum_exp(&den)).max(0.0);
    Ok((c_min as f64 / sigma).exp() * spread.exp())
}

pub fn burstiness_report(
    dist: &StateDistribution,
    sigma: f64,
    mode: ThroughputMode,
    config: &NetworkConfig,
    samples: &[u64],
) -> Result<BurstinessReport> {
    let analytic_mean = analytic_burst_length(dist, sigma, mode, config)?;
    let empirical_mean = (!samples.is_empty()).then(|| samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64);
    Ok(BurstinessReport {
        analytic_mean,
        empirical_mean,
        relative_gap: empirical_mean.map(|e| (e - analytic_mean) / analytic_mean),
        samples: samples.len(),
        mode,
        sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub mean: f64,
    pub p99: f64,
    pub samples: usize,
    /// Sorted `(latency, fraction of samples ≤ latency)`.
    pub cdf: Vec<(f64, f64)>,
}

/// Nearest-rank percentile of sorted data, `q` in (0, 1].
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn latency_report(metrics: &SimMetrics) -> Result<LatencyReport> {
    latency_report_from(&metrics.latencies)
}

pub fn latency_report_from(latencies: &[f64]) -> Result<LatencyReport> {
    if latencies.is_empty() {
        return Err(Error::EmptyReport("no latency samples".into()));
    }
    let mut v = latencies.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in v.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => cdf.push((x, frac)),
        }
    }
    Ok(LatencyReport { mean: v.iter().sum::<f64>() / n, p99: nearest_rank(&v, 0.99), samples: v.len(), cdf })
}

/// Random clique with costs uniform on `[510−h, 490+h]` µW and budgets
/// `exp(U[ln(100/h), ln h])` µW.
pub fn sample_heterogeneous_network<R: Rng + ?Sized>(h: f64, n: usize, rng: &mut R) -> Result<NetworkConfig> {
    if !(h >= 10.0 && h.is_finite()) {
        return Err(Error::Domain(format!("heterogeneity must be at least 10, got {h}")));
    }
    if n == 0 {
        return Err(Error::Domain("network needs at least one node".into()));
    }
    let uniform = |rng: &mut R, lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    let nodes = (0..n)
        .map(|_| {
            let l = uniform(rng, 510.0 - h, 490.0 + h);
            let x = uniform(rng, 510.0 - h, 490.0 + h);
            let e = uniform(rng, (100.0 / h).ln(), h.ln());
            NodePowerProfile::new(e.exp() * MICRO, l * MICRO, x * MICRO)
        })
        .collect();
    Ok(NetworkConfig::clique(nodes))
}

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: usize,
    /// Fewer than two samples: the interval has zero width by construction.
    pub degenerate: bool,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyReport("no samples to summarize".into()));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Ok(Summary { mean, ci_low: mean, ci_high: mean, count: 1, degenerate: true });
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let half = Z95 * (var / n).sqrt();
        Ok(Summary { mean, ci_low: mean - half, ci_high: mean + half, count: xs.len(), degenerate: false })
    }
}

/// One configuration's oracle, Gibbs and (optionally) simulated results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    /// Rows are formed per distinct group label, e.g. `"h=100 sigma=0.5"`.
    pub group: String,
    pub oracle: OracleSolution,
    pub gibbs: GibbsResult,
    #[serde(default)]
    pub simulated: Option<SimMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub group: String,
    pub mode: ThroughputMode,
    pub sigma: f64,
    pub replicates: usize,
    /// `T^σ / T*`.
    pub gibbs_ratio: Summary,
    /// Simulated throughput over `T*`, when every replicate was simulated.
    pub simulated_ratio: Option<Summary>,
    /// Mean `T^σ / T*` divided by each supplied baseline ratio.
    pub baseline_gain: BTreeMap<String, f64>,
}

pub fn normalized_report(replicates: &[Replicate], baselines: &BTreeMap<String, f64>) -> Result<Vec<NormalizedRow>> {
    if replicates.is_empty() {
        return Err(Error::EmptyReport("no replicates".into()));
    }
    for (name, &b) in baselines {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("baseline {name} must be positive, got {b}")));
        }
    }
    let mut groups: BTreeMap<&str, Vec<&Replicate>> = BTreeMap::new();
    for (k, r) in replicates.iter().enumerate() {
        check_replicate(k, r)?;
        groups.entry(&r.group).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(group, reps)| {
            let first = reps[0];
            if let Some(bad) = reps.iter().find(|r| r.gibbs.mode != first.gibbs.mode || r.gibbs.sigma != first.gibbs.sigma) {
                return Err(Error::Alignment(format!(
                    "group {group} mixes ({}, sigma {}) with ({}, sigma {})",
                    first.gibbs.mode, first.gibbs.sigma, bad.gibbs.mode, bad.gibbs.sigma
                )));
            }
            let ratios: Vec<f64> = reps.iter().map(|r| r.gibbs.throughput / r.oracle.throughput).collect();
            let sim: Option<Vec<f64>> = reps
                .iter()
                .map(|r| {
                    r.simulated.as_ref().map(|m| {
                        let t = match r.gibbs.mode {
                            ThroughputMode::Groupput => m.groupput,
                            ThroughputMode::Anyput => m.anyput,
                        };
                        t / r.oracle.throughput
                    })
                })
                .collect();
            let gibbs_ratio = Summary::of(&ratios)?;
            Ok(NormalizedRow {
                group: group.to_string(),
                mode: first.gibbs.mode,
                sigma: first.gibbs.sigma,
                replicates: reps.len(),
                gibbs_ratio,
                simulated_ratio: sim.map(|s| Summary::of(&s)).transpose()?,
                baseline_gain: baselines.iter().map(|(k, &b)| (k.clone(), gibbs_ratio.mean / b)).collect(),
            })
        })
        .collect()
}

fn check_replicate(k: usize, r: &Replicate) -> Result<()> {
    let n = r.oracle.alpha.len();
    if r.oracle.mode != r.gibbs.mode {
        return Err(Error::Alignment(format!("replicate {k}: oracle is {} but gibbs is {}", r.oracle.mode, r.gibbs.mode)));
    }
    if r.gibbs.alpha.len() != n {
        return Err(Error::Alignment(format!("replicate {k}: oracle has {n} nodes, gibbs has {}", r.gibbs.alpha.len())));
    }
    if let Some(m) = &r.simulated {
        if m.per_node_energy_rate.len() != n {
            return Err(Error::Alignment(format!("replicate {k}: oracle has {n} nodes, simulation has {}", m.per_node_energy_rate.len())));
        }
    }
    if !(r.oracle.throughput > 0.0) {
        return Err(Error::Alignment(format!("replicate {k}: oracle throughput is zero, ratio undefined")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{gradient_descent, steady_state_distribution, Multipliers};
    use crate::oracle::solve_lp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference(n: usize) -> NetworkConfig {
        NetworkConfig::homogeneous(n, NodePowerProfile::new(1e-5, 5e-4, 5e-4))
    }

    #[test]
    fn anyput_burst_is_exp_inverse_sigma() {
        for n in [2, 5] {
            let cfg = reference(n);
            let d = steady_state_distribution(&cfg, &Multipliers::zeros(n), 0.5, ThroughputMode::Anyput).unwrap();
            assert_eq!(analytic_burst_length(&d, 0.5, ThroughputMode::Anyput, &cfg).unwrap(), 2f64.exp());
        }
    }

    #[test]
    fn two_nodes_groupput_collapses_to_single_listener() {
        let cfg = reference(2);
        let d = steady_state_distribution(&cfg, &Multipliers::new(vec![300.0, 900.0]).unwrap(), 0.25, ThroughputMode::Groupput).unwrap();
        let b = analytic_burst_length(&d, 0.25, ThroughputMode::Groupput, &cfg).unwrap();
        assert!((b - 4f64.exp()).abs() < 1e-9 * b);
    }

    #[test]
    fn latency_examples() {
        let r = latency_report_from(&[4.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!((r.mean, r.p99), (2.5, 4.0));
        assert_eq!(r.cdf.last().unwrap().1, 1.0);
        let r = latency_report_from(&[7.5]).unwrap();
        assert_eq!((r.mean, r.p99), (7.5, 7.5));
        let r = latency_report_from(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.cdf.len(), 2);
        assert!(latency_report_from(&[]).is_err());
    }

    #[test]
    fn heterogeneous_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = sample_heterogeneous_network(10.0, 4, &mut rng).unwrap();
        for p in &cfg.nodes {
            assert!((p.listen_cost - 5e-4).abs() < 1e-18 && (p.transmit_cost - 5e-4).abs() < 1e-18);
            assert!((p.rho - 1e-5).abs() < 1e-15);
        }
        let cfg = sample_heterogeneous_network(100.0, 2000, &mut rng).unwrap();
        assert!(cfg.nodes.iter().all(|p| p.rho >= 1e-6 * (1.0 - 1e-12) && p.rho <= 1e-4 * (1.0 + 1e-12)));
        assert!(sample_heterogeneous_network(9.9, 4, &mut rng).is_err());
    }

    #[test]
    fn single_replicate_is_degenerate_and_misaligned_is_rejected() {
        let cfg = reference(3);
        let o = solve_lp(&cfg, ThroughputMode::Groupput).unwrap();
        let g = gradient_descent(&cfg, 0.5, ThroughputMode::Groupput, &Default::default()).unwrap();
        let rep = Replicate { group: "a".into(), oracle: o.clone(), gibbs: g.clone(), simulated: None };
        let rows = normalized_report(&[rep.clone()], &BTreeMap::from([("panda".to_string(), 0.01)])).unwrap();
        assert!(rows[0].gibbs_ratio.degenerate);
        assert_eq!(rows[0].gibbs_ratio.ci_low, rows[0].gibbs_ratio.ci_high);
        assert!((rows[0].baseline_gain["panda"] - rows[0].gibbs_ratio.mean / 0.01).abs() < 1e-12);

        let other = gradient_descent(&reference(4), 0.5, ThroughputMode::Groupput, &Default::default()).unwrap();
        let bad = Replicate { gibbs: other, ..rep };
        assert!(matches!(normalized_report(&[bad], &BTreeMap::new()), Err(Error::Alignment(_))));
    }
}
