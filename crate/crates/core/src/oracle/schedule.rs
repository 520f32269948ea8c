//! Periodic slot schedule realizing an oracle solution.

use serde::{Deserialize, Serialize};

use super::{OracleSolution, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::state_space::NodeState;

/// Refuse periods whose slot table would not fit comfortably in memory.
pub const MAX_PERIOD: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSchedule {
    pub period: usize,
    pub slot_length: f64,
    /// `assignments[slot][node]`.
    pub assignments: Vec<Vec<NodeState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAudit {
    pub groupput: f64,
    pub listen_slots: Vec<usize>,
    pub transmit_slots: Vec<usize>,
    /// Energy spent per period divided by energy harvested per period.
    pub energy_ratio: Vec<f64>,
}

/// Best rational approximation with denominator ≤ `max_den` (continued fractions).
pub fn rationalize(v: f64, max_den: u64) -> (u64, u64) {
    assert!(v >= 0.0 && max_den >= 1);
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = v;
    loop {
        let a = x.floor();
        if a > u32::MAX as f64 {
            break;
        }
        let a = a as u64;
        let q2 = a.saturating_mul(q1).saturating_add(q0);
        if q2 > max_den {
            // Semiconvergent candidate may beat the last convergent.
            let k = (max_den - q0) / q1.max(1);
            let (ps, qs) = (p0 + k * p1, q0 + k * q1);
            if q1 == 0 || (ps as f64 / qs as f64 - v).abs() < (p1 as f64 / q1 as f64 - v).abs() {
                return (ps, qs);
            }
            break;
        }
        let p2 = a * p1 + p0;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = x - a as f64;
        if frac < 1e-15 || (p1 as f64 / q1 as f64 - v).abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    (p1, q1)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn build_periodic_schedule(solution: &OracleSolution, slot_length: f64, max_denominator: u64) -> Result<PeriodicSchedule> {
    if !(slot_length > 0.0) {
        return Err(Error::Domain("slot length must be positive".into()));
    }
    let n = solution.alpha.len();
    let mut fracs = Vec::with_capacity(2 * n);
    let mut worst = (0.0f64, String::new());
    for (name, vals) in [("alpha", &solution.alpha), ("beta", &solution.beta)] {
        for (i, &v) in vals.iter().enumerate() {
            let (p, q) = rationalize(v.max(0.0), max_denominator);
            let r = (p as f64 / q as f64 - v).abs();
            if r > worst.0 {
                worst = (r, format!("{name}[{i}]"));
            }
            fracs.push((p, q));
        }
    }
    if worst.0 > FEASIBILITY_TOL {
        return Err(Error::Precision { residual: worst.0, field: worst.1 });
    }
    let mut period = 1u64;
    for &(_, q) in &fracs {
        period = period / gcd(period, q) * q;
        if period > MAX_PERIOD {
            return Err(Error::Precision { residual: worst.0, field: format!("period exceeds {MAX_PERIOD} slots") });
        }
    }
    let p = period as usize;
    let count = |(num, den): (u64, u64)| (num * (period / den)) as usize;
    let listen: Vec<usize> = fracs[..n].iter().map(|&f| count(f)).collect();
    let transmit: Vec<usize> = fracs[n..].iter().map(|&f| count(f)).collect();
    if transmit.iter().sum::<usize>() > p {
        return Err(Error::Solver("transmit slots exceed the period".into()));
    }

    let mut slots = vec![vec![NodeState::Sleep; n]; p];
    let mut owner: Vec<Option<usize>> = vec![None; p];
    let mut left = transmit.clone();
    let mut next = 0;
    while left.iter().any(|&k| k > 0) {
        for i in 0..n {
            if left[i] > 0 {
                slots[next][i] = NodeState::Transmit;
                owner[next] = Some(i);
                left[i] -= 1;
                next += 1;
            }
        }
    }
    for i in 0..n {
        let mut need = listen[i];
        for s in 0..p {
            if need == 0 {
                break;
            }
            if matches!(owner[s], Some(j) if j != i) {
                slots[s][i] = NodeState::Listen;
                need -= 1;
            }
        }
        if need > 0 {
            return Err(Error::Solver(format!("node {i} needs {need} more listen slots than others transmit")));
        }
    }
    Ok(PeriodicSchedule { period: p, slot_length, assignments: slots })
}

impl PeriodicSchedule {
    /// Replays one period and checks the schedule invariants against `config`.
    pub fn audit(&self, config: &NetworkConfig) -> Result<ScheduleAudit> {
        let n = config.len();
        let mut listen_slots = vec![0; n];
        let mut transmit_slots = vec![0; n];
        let mut received = 0usize;
        for (s, row) in self.assignments.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Alignment(format!("slot {s} has {} entries for {n} nodes", row.len())));
            }
            let tx: Vec<usize> = (0..n).filter(|&i| row[i] == NodeState::Transmit).collect();
            if tx.len() > 1 {
                return Err(Error::Solver(format!("slot {s} has {} transmitters", tx.len())));
            }
            for i in 0..n {
                match row[i] {
                    NodeState::Listen => {
                        if tx.is_empty() {
                            return Err(Error::Solver(format!("node {i} listens in idle slot {s}")));
                        }
                        listen_slots[i] += 1;
                        received += 1;
                    }
                    NodeState::Transmit => transmit_slots[i] += 1,
                    NodeState::Sleep => {}
                }
            }
        }
        let pf = self.period as f64;
        let energy_ratio: Vec<f64> = config
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (listen_slots[i] as f64 * p.listen_cost + transmit_slots[i] as f64 * p.transmit_cost) / (p.rho * pf))
            .collect();
        if let Some((i, r)) = energy_ratio.iter().enumerate().find(|(_, &r)| r > 1.0 + FEASIBILITY_TOL) {
            return Err(Error::Solver(format!("node {i} spends {r} times its harvested energy")));
        }
        Ok(ScheduleAudit { groupput: received as f64 / pf, listen_slots, transmit_slots, energy_ratio })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_space::ThroughputMode;

    fn sol(alpha: Vec<f64>, beta: Vec<f64>) -> OracleSolution {
        OracleSolution {
            mode: ThroughputMode::Groupput,
            throughput: alpha.iter().sum(),
            alpha,
            beta,
            pair_fractions: None,
            duality_gap: 0.0,
        }
    }

    #[test]
    fn rationalize_known_values() {
        assert_eq!(rationalize(0.25, 10_000), (1, 4));
        assert_eq!(rationalize(1.0 / 3.0, 10_000), (1, 3));
        assert_eq!(rationalize(std::f64::consts::PI, 100), (311, 99));
        assert_eq!(rationalize(0.0, 10), (0, 1));
    }

    #[test]
    fn two_node_quarter_schedule() {
        let s = build_periodic_schedule(&sol(vec![0.25, 0.25], vec![0.25, 0.25]), 1e-3, 10_000).unwrap();
        assert_eq!(s.period, 4);
        use NodeState::*;
        assert_eq!(s.assignments[0], vec![Transmit, Listen]);
        assert_eq!(s.assignments[1], vec![Listen, Transmit]);
        assert_eq!(s.assignments[2], vec![Sleep, Sleep]);
    }

    #[test]
    fn all_zero_is_single_sleep_slot() {
        let s = build_periodic_schedule(&sol(vec![0.0; 3], vec![0.0; 3]), 1.0, 10_000).unwrap();
        assert_eq!(s.period, 1);
        assert!(s.assignments[0].iter().all(|&x| x == NodeState::Sleep));
    }

    #[test]
    fn irrational_fraction_reports_residual() {
        let e = build_periodic_schedule(&sol(vec![std::f64::consts::FRAC_1_SQRT_2 / 10.0], vec![0.0]), 1.0, 100).unwrap_err();
        assert!(matches!(e, Error::Precision { .. }));
    }
}
