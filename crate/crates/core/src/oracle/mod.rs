//! Oracle throughput: the best a centralized scheduler can do.
//!
//! Every LP works on powers divided by the network's largest cost, so the
//! fractions do not depend on whether inputs are in watts or microwatts.
//! The optimum is often degenerate; ties are broken in stages (see
//! [`solve_groupput_lp`]) so results are reproducible and symmetric networks
//! get symmetric answers.

pub mod schedule;
pub mod simplex;

use serde::{Deserialize, Serialize};

pub use crate::network::{NetworkConfig, NodePowerProfile, Topology};
use crate::error::{Error, Result};
use crate::state_space::ThroughputMode;
pub use schedule::{build_periodic_schedule, PeriodicSchedule};
use simplex::{LinearProgram, Relation};

/// Absolute feasibility tolerance on constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
// Slack granted to an earlier stage's objective when optimizing the next one.
const STAGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub mode: ThroughputMode,
    pub throughput: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `pair_fractions[i][j]`: share of time node `j` receives from node `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_fractions: Option<Vec<Vec<f64>>>,
    /// Worst relative duality gap over the LP stages that produced this solution.
    #[serde(default)]
    pub duality_gap: f64,
}

impl OracleSolution {
    fn zeros(n: usize, mode: ThroughputMode) -> Self {
        Self {
            mode,
            throughput: 0.0,
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            pair_fractions: None,
            duality_gap: 0.0,
        }
    }

    pub fn awake(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a + b).collect()
    }

    /// Fraction of awake time spent transmitting; zero for nodes never awake.
    pub fn transmit_share(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| if a + b > 0.0 { b / (a + b) } else { 0.0 })
            .collect()
    }

    /// Checks power, awake-time and channel constraints (clique form) within `tol`.
    pub fn check_feasible(&self, config: &NetworkConfig, tol: f64) -> Result<()> {
        let mut sum_beta = 0.0;
        for (i, p) in config.nodes.iter().enumerate() {
            let (a, b) = (self.alpha[i], self.beta[i]);
            let scale = p.rho.max(a * p.listen_cost + b * p.transmit_cost);
            if a * p.listen_cost + b * p.transmit_cost > p.rho + tol * scale {
                return Err(Error::Solver(format!("node {i} exceeds its power budget")));
            }
            if a + b > 1.0 + tol || a < -tol || b < -tol {
                return Err(Error::Solver(format!("node {i} has invalid time fractions")));
            }
            sum_beta += b;
        }
        if sum_beta > 1.0 + tol {
            return Err(Error::Solver("transmit fractions sum above 1".into()));
        }
        Ok(())
    }
}

/// Runs `stages` in order, pinning each optimum (within a relative tolerance)
/// before the next objective is maximized.
fn solve_staged(mut lp: LinearProgram, stages: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let mut x = vec![0.0; lp.n_vars];
    let mut gap: f64 = 0.0;
    for (k, obj) in stages.iter().enumerate() {
        lp.objective = obj.clone();
        let sol = lp.maximize()?;
        gap = gap.max(sol.duality_gap(&lp));
        x = sol.x;
        if k + 1 < stages.len() {
            let floor = sol.objective - STAGE_TOL * sol.objective.abs();
            lp.add(obj.clone(), Relation::Ge, floor);
        }
    }
    Ok((x, gap))
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Groupput LP with listen constraint `α_i ≤ Σ_{j∈hear[i]} β_j`.
///
/// Variables are `α (n) | β (n) | t`. Stages: maximize Σα, then Σβ, then the
/// smallest ratio `β_i X_i / ρ_i` so transmit time is split evenly relative
/// to each budget.
fn groupput_lp(config: &NetworkConfig, hear: &[Vec<usize>], channel_limit: bool) -> Result<OracleSolution> {
    let n = config.len();
    let norm = config.normalized();
    let (a, b, t) = (0, n, 2 * n);
    let mut lp = LinearProgram::new(2 * n + 1);
    for (i, p) in norm.nodes.iter().enumerate() {
        lp.add_sparse(&[(a + i, p.listen_cost), (b + i, p.transmit_cost)], Relation::Le, p.rho);
        lp.add_sparse(&[(a + i, 1.0), (b + i, 1.0)], Relation::Le, 1.0);
        let mut row = vec![(a + i, 1.0)];
        row.extend(hear[i].iter().map(|&j| (b + j, -1.0)));
        lp.add_sparse(&row, Relation::Le, 0.0);
        lp.add_sparse(&[(b + i, p.transmit_cost), (t, -p.rho)], Relation::Ge, 0.0);
    }
    if channel_limit {
        let row: Vec<_> = (0..n).map(|i| (b + i, 1.0)).collect();
        lp.add_sparse(&row, Relation::Le, 1.0);
    }
    let stage = |range: std::ops::Range<usize>| {
        let mut c = vec![0.0; 2 * n + 1];
        for j in range {
            c[j] = 1.0;
        }
        c
    };
    let (x, gap) = solve_staged(lp, &[stage(a..a + n), stage(b..b + n), stage(t..t + 1)])?;
    let alpha: Vec<f64> = x[a..a + n].iter().copied().map(clip01).collect();
    let beta: Vec<f64> = x[b..b + n].iter().copied().map(clip01).collect();
    Ok(OracleSolution {
        mode: ThroughputMode::Groupput,
        throughput: alpha.iter().sum(),
        alpha,
        beta,
        pair_fractions: None,
        duality_gap: gap,
    })
}

/// Maximum groupput of a clique network.
///
/// Among optimal solutions the one returned also maximizes total transmit
/// time, then equalizes `β_i X_i / ρ_i` as far as possible.
pub fn solve_groupput_lp(config: &NetworkConfig) -> Result<OracleSolution> {
    config.validate()?;
    config.require_clique("solve_groupput_lp (use nonclique_bounds for graphs)")?;
    let n = config.len();
    let hear: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
    groupput_lp(config, &hear, true)
}

/// Maximum anyput of a clique network.
///
/// Variables are `β (n) | χ (n·(n−1)) | t` with listen time eliminated as
/// `α_j = Σ_i χ_ij`. Stages: maximize Σβ, then the even-share ratio.
pub fn solve_anyput_lp(config: &NetworkConfig) -> Result<OracleSolution> {
    config.validate()?;
    config.require_clique("solve_anyput_lp")?;
    let n = config.len();
    let norm = config.normalized();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let b = 0;
    let chi = |k: usize| n + k;
    let t = n + pairs.len();
    let nv = t + 1;
    let mut lp = LinearProgram::new(nv);
    for (j, p) in norm.nodes.iter().enumerate() {
        let into_j: Vec<usize> = pairs.iter().enumerate().filter(|(_, &(_, r))| r == j).map(|(k, _)| k).collect();
        let mut energy: Vec<(usize, f64)> = into_j.iter().map(|&k| (chi(k), p.listen_cost)).collect();
        energy.push((b + j, p.transmit_cost));
        lp.add_sparse(&energy, Relation::Le, p.rho);
        let mut awake: Vec<(usize, f64)> = into_j.iter().map(|&k| (chi(k), 1.0)).collect();
        awake.push((b + j, 1.0));
        lp.add_sparse(&awake, Relation::Le, 1.0);
        let mut heard: Vec<(usize, f64)> =
            pairs.iter().enumerate().filter(|(_, &(s, _))| s == j).map(|(k, _)| (chi(k), -1.0)).collect();
        heard.push((b + j, 1.0));
        lp.add_sparse(&heard, Relation::Le, 0.0);
        lp.add_sparse(&[(b + j, p.transmit_cost), (t, -p.rho)], Relation::Ge, 0.0);
    }
    let row: Vec<_> = (0..n).map(|i| (b + i, 1.0)).collect();
    lp.add_sparse(&row, Relation::Le, 1.0);

    let mut s1 = vec![0.0; nv];
    s1[b..b + n].iter_mut().for_each(|c| *c = 1.0);
    let mut s2 = vec![0.0; nv];
    s2[t] = 1.0;
    let (x, gap) = solve_staged(lp, &[s1, s2])?;

    let beta: Vec<f64> = x[b..b + n].iter().copied().map(clip01).collect();
    let mut pf = vec![vec![0.0; n]; n];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        pf[i][j] = clip01(x[chi(k)]);
    }
    let alpha: Vec<f64> = (0..n).map(|j| clip01((0..n).map(|i| pf[i][j]).sum())).collect();
    Ok(OracleSolution {
        mode: ThroughputMode::Anyput,
        throughput: beta.iter().sum(),
        alpha,
        beta,
        pair_fractions: Some(pf),
        duality_gap: gap,
    })
}

pub fn solve_lp(config: &NetworkConfig, mode: ThroughputMode) -> Result<OracleSolution> {
    match mode {
        ThroughputMode::Groupput => solve_groupput_lp(config),
        ThroughputMode::Anyput => solve_anyput_lp(config),
    }
}

/// Closed-form optimum for `n` identical, energy-constrained nodes.
///
/// Anyput additionally requires `n·β* ≤ 1`, otherwise the channel limit binds
/// and the formula overstates the optimum.
pub fn homogeneous_closed_form(n: usize, profile: NodePowerProfile, mode: ThroughputMode) -> Result<OracleSolution> {
    profile.validate()?;
    if n == 0 {
        return Err(Error::Domain("node count must be at least 1".into()));
    }
    let NodePowerProfile { rho, listen_cost: l, transmit_cost: x } = profile;
    let nf = n as f64;
    let (alpha, beta, total) = match mode {
        ThroughputMode::Groupput => {
            let beta = rho / (x + (nf - 1.0) * l);
            let alpha = (nf - 1.0) * beta;
            if alpha + beta > 1.0 {
                return Err(Error::OutOfRegime(format!("awake fraction {} exceeds 1", alpha + beta)));
            }
            (alpha, beta, nf * alpha)
        }
        ThroughputMode::Anyput => {
            let beta = rho / (x + l);
            if 2.0 * beta > 1.0 {
                return Err(Error::OutOfRegime(format!("awake fraction {} exceeds 1", 2.0 * beta)));
            }
            if nf * beta > 1.0 {
                return Err(Error::OutOfRegime(format!("total transmit fraction {} exceeds 1", nf * beta)));
            }
            (beta, beta, nf * beta)
        }
    };
    Ok(OracleSolution {
        mode,
        throughput: total,
        alpha: vec![alpha; n],
        beta: vec![beta; n],
        pair_fractions: None,
        duality_gap: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: OracleSolution,
    pub upper: OracleSolution,
}

/// Groupput bounds for arbitrary graphs.
///
/// Both bounds only let a node listen to its neighbors. The lower bound keeps
/// the single-channel limit Σβ ≤ 1 (so it is schedulable without spatial
/// reuse); the upper bound drops it.
pub fn nonclique_bounds(config: &NetworkConfig) -> Result<BoundPair> {
    config.validate()?;
    let n = config.len();
    let hear = config.neighbor_lists();
    if hear.iter().all(|h| h.is_empty()) {
        let z = OracleSolution::zeros(n, ThroughputMode::Groupput);
        return Ok(BoundPair { lower: z.clone(), upper: z });
    }
    let lower = groupput_lp(config, &hear, true)?;
    let upper = groupput_lp(config, &hear, false)?;
    Ok(BoundPair { lower, upper })
}
