use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{steady_state_distribution, Multipliers};
use crate::network::NetworkConfig;
use crate::protocol::{transition_rates, ListenerEstimate, NodeRuntime, ProtocolVariant};
use crate::state_space::{NetworkState, NodeState, StateCode, StateSpace, ThroughputMode};

pub const BALANCE_MAX_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// Largest `|π_w r(w,w′) − π_w′ r(w′,w)| / max(both sides)` over all pairs.
    pub max_violation: f64,
    pub pairs_checked: usize,
    /// The pair that attained `max_violation`, as state strings.
    pub worst_pair: Option<(String, String)>,
}

/// Checks that the stationary law from the Gibbs module balances the
/// protocol's transition rates pair by pair.
pub fn verify_detailed_balance(
    config: &NetworkConfig,
    eta: &Multipliers,
    sigma: f64,
    variant: ProtocolVariant,
    mode: ThroughputMode,
) -> Result<BalanceReport> {
    verify_detailed_balance_with(config, eta, sigma, variant, mode, |_, _, r| r)
}

/// Like [`verify_detailed_balance`], with every rate `r(w, w′)` passed through
/// `adjust(w, w′, r)` first.
pub fn verify_detailed_balance_with<F>(
    config: &NetworkConfig,
    eta: &Multipliers,
    sigma: f64,
    variant: ProtocolVariant,
    mode: ThroughputMode,
    adjust: F,
) -> Result<BalanceReport>
where
    F: Fn(&NetworkState, &NetworkState, f64) -> f64,
{
    config.require_clique("detailed balance check")?;
    let n = config.len();
    if n > BALANCE_MAX_NODES {
        return Err(Error::SizeGuard { n, cap: BALANCE_MAX_NODES });
    }
    let dist = steady_state_distribution(config, eta, sigma, mode)?;
    let log_z = dist.log_partition();
    let space = StateSpace::new(n)?;
    let runtimes: Vec<NodeRuntime> = config
        .nodes
        .iter()
        .zip(&eta.eta)
        .map(|(p, &e)| {
            let mut rt = NodeRuntime::new(*p);
            rt.multiplier = e;
            rt
        })
        .collect();

    let rate = |w: StateCode, i: usize, to: NodeState| -> f64 {
        let others = StateCode { listen: w.listen & !(1 << i), transmitter: w.transmitter.filter(|&t| t as usize != i) };
        let clear = others.transmitter.is_none();
        let est = ListenerEstimate::exact(others.listeners());
        let r = transition_rates(&runtimes[i], sigma, clear, est, variant, mode);
        match (w.node(i), to) {
            (NodeState::Sleep, NodeState::Listen) => r.sleep_to_listen,
            (NodeState::Listen, NodeState::Sleep) => r.listen_to_sleep,
            (NodeState::Listen, NodeState::Transmit) => r.listen_to_transmit,
            (NodeState::Transmit, NodeState::Listen) => r.transmit_to_listen,
            _ => 0.0,
        }
    };

    let mut report = BalanceReport { max_violation: 0.0, pairs_checked: 0, worst_pair: None };
    for (a, &w) in space.codes().iter().enumerate() {
        for i in 0..n {
            let from = w.node(i);
            let targets: &[NodeState] = match from {
                NodeState::Sleep => &[NodeState::Listen],
                NodeState::Listen => &[NodeState::Sleep, NodeState::Transmit],
                NodeState::Transmit => &[NodeState::Listen],
            };
            for &to in targets {
                let Some(v) = with_node(w, i, to) else { continue };
                let b = space.index_of_code(v);
                // Each unordered pair once.
                if b < a {
                    continue;
                }
                let (sw, sv) = (space.state(a), space.state(b));
                let fwd = adjust(&sw, &sv, rate(w, i, to));
                let back = adjust(&sv, &sw, rate(v, i, from));
                if fwd == 0.0 && back == 0.0 {
                    continue;
                }
                report.pairs_checked += 1;
                let viol = if fwd <= 0.0 || back <= 0.0 {
                    1.0
                } else {
                    let lhs = dist.log_weights[a] - log_z + fwd.ln();
                    let rhs = dist.log_weights[b] - log_z + back.ln();
                    -(-(lhs - rhs).abs()).exp_m1()
                };
                if report.worst_pair.is_none() || viol > report.max_violation {
                    report.max_violation = viol;
                    report.worst_pair = Some((sw.to_string(), sv.to_string()));
                }
            }
        }
    }
    Ok(report)
}

fn with_node(w: StateCode, i: usize, to: NodeState) -> Option<StateCode> {
    let bit = 1u32 << i;
    let mut v = StateCode { listen: w.listen & !bit, transmitter: w.transmitter.filter(|&t| t as usize != i) };
    match to {
        NodeState::Sleep => {}
        NodeState::Listen => v.listen |= bit,
        NodeState::Transmit => {
            if v.transmitter.is_some() {
                return None;
            }
            v.transmitter = Some(i as u8);
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NodePowerProfile;

    fn net(n: usize) -> NetworkConfig {
        NetworkConfig::homogeneous(n, NodePowerProfile::new(1e-5, 5e-4, 5e-4))
    }

    #[test]
    fn two_nodes_zero_multipliers() {
        for v in [ProtocolVariant::Capture, ProtocolVariant::NonCapture] {
            let r = verify_detailed_balance(&net(2), &Multipliers::zeros(2), 1.0, v, ThroughputMode::Groupput).unwrap();
            assert!(r.max_violation < 1e-12, "{r:?}");
            assert!(r.pairs_checked > 0);
        }
    }

    #[test]
    fn perturbed_rate_breaks_balance() {
        let eta = Multipliers::new(vec![800.0, 1200.0, 1500.0, 300.0]).unwrap();
        let r = verify_detailed_balance_with(&net(4), &eta, 0.25, ProtocolVariant::NonCapture, ThroughputMode::Groupput, |w, v, r| {
            if w.to_string() == "lsss" && v.to_string() == "xsss" {
                r * 1.01
            } else {
                r
            }
        })
        .unwrap();
        assert!(r.max_violation > 1e-3);
        assert_eq!(r.worst_pair, Some(("lsss".into(), "xsss".into())));
    }

    #[test]
    fn rejects_large_or_non_clique() {
        assert!(verify_detailed_balance(&net(9), &Multipliers::zeros(9), 1.0, ProtocolVariant::Capture, ThroughputMode::Groupput).is_err());
        let grid = NetworkConfig::new(vec![NodePowerProfile::new(1e-5, 5e-4, 5e-4); 4], crate::network::Topology::grid(2, 2)).unwrap();
        assert!(verify_detailed_balance(&grid, &Multipliers::zeros(4), 1.0, ProtocolVariant::Capture, ThroughputMode::Groupput).is_err());
    }
}
