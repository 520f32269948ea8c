//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the state-space, Gibbs or oracle modules.
#![allow(dead_code)]

use castlab::{NetworkConfig, ThroughputMode};
use nalgebra::{DMatrix, DVector};

/// Node state as a digit: 0 sleep, 1 listen, 2 transmit.
pub type BruteState = Vec<u8>;

/// All of 3^n states with at most one transmitter, in base-3 counting order.
pub fn brute_states(n: usize) -> Vec<BruteState> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let d = (k % 3) as u8;
                    k /= 3;
                    d
                })
                .collect::<Vec<u8>>()
        })
        .filter(|s| s.iter().filter(|&&d| d == 2).count() <= 1)
        .collect()
}

pub fn brute_string(s: &BruteState) -> String {
    s.iter().map(|d| ['s', 'l', 'x'][*d as usize]).collect()
}

pub fn brute_throughput(s: &BruteState, mode: ThroughputMode) -> f64 {
    if !s.contains(&2) {
        return 0.0;
    }
    let c = s.iter().filter(|&&d| d == 1).count() as f64;
    match mode {
        ThroughputMode::Groupput => c,
        ThroughputMode::Anyput => c.min(1.0),
    }
}

/// Power drawn by node `i` in state `s`, in watts.
pub fn brute_power(net: &NetworkConfig, s: &BruteState, i: usize) -> f64 {
    match s[i] {
        1 => net.nodes[i].listen_cost,
        2 => net.nodes[i].transmit_cost,
        _ => 0.0,
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Maximizes `Σ π_w T_w + σ H(π)` over the simplex subject to every node's
/// average power staying within its budget. Primal log-barrier method with
/// Newton centering steps; the barrier weight ends at 1e-13, which bounds the
/// duality gap by `n·1e-13`. Returns `(objective, π)`.
pub fn entropy_program_by_barrier(net: &NetworkConfig, sigma: f64, mode: ThroughputMode) -> (f64, Vec<f64>) {
    let states = brute_states(net.len());
    let m = states.len();
    let n = net.len();
    let t: Vec<f64> = states.iter().map(|s| brute_throughput(s, mode)).collect();
    // Budget rows a_i·π ≤ 1, relative to each node's budget.
    let a: Vec<Vec<f64>> = (0..n).map(|i| states.iter().map(|s| brute_power(net, s, i) / net.nodes[i].rho).collect()).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();

    // Start near all-asleep (state 0), strictly inside every budget.
    let a_max = a.iter().flatten().cloned().fold(0.0, f64::max);
    let eps = 0.5f64.min(0.5 / a_max);
    let mut p = vec![eps / (m - 1) as f64; m];
    p[0] = 1.0 - eps;

    let value = |p: &[f64], kappa: f64| -> f64 {
        if p.iter().any(|&x| x <= 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut f = dot(&t, p) + sigma * entropy(p);
        for row in &a {
            let slack = 1.0 - dot(row, p);
            if slack <= 0.0 {
                return f64::NEG_INFINITY;
            }
            f += kappa * slack.ln();
        }
        f
    };

    let mut kappa = 1e-2;
    while kappa >= 1e-13 {
        for _ in 0..500 {
            let slack: Vec<f64> = a.iter().map(|row| 1.0 - dot(row, &p)).collect();
            let g: Vec<f64> = (0..m)
                .map(|w| t[w] - sigma * (p[w].ln() + 1.0) - kappa * (0..n).map(|i| a[i][w] / slack[i]).sum::<f64>())
                .collect();
            // Negative Hessian is D + U Uᵀ with D = diag(σ/π) and
            // U[:, i] = √κ a_i / slack_i. Solve with Woodbury.
            let dinv: Vec<f64> = p.iter().map(|x| x / sigma).collect();
            let u = DMatrix::from_fn(m, n, |w, i| kappa.sqrt() * a[i][w] / slack[i]);
            let cap = DMatrix::identity(n, n) + u.transpose() * DMatrix::from_diagonal(&DVector::from_vec(dinv.clone())) * &u;
            let chol = cap.cholesky().expect("capacitance matrix is positive definite");
            let solve = |r: &DVector<f64>| -> DVector<f64> {
                let dr = r.component_mul(&DVector::from_vec(dinv.clone()));
                let corr = &u * chol.solve(&(u.transpose() * &dr));
                &dr - corr.component_mul(&DVector::from_vec(dinv.clone()))
            };
            let hg = solve(&DVector::from_vec(g.clone()));
            let h1 = solve(&DVector::from_element(m, 1.0));
            let nu = -hg.sum() / h1.sum();
            let dp: Vec<f64> = (0..m).map(|w| hg[w] + nu * h1[w]).collect();
            let decrement = dot(&g, &dp);
            if decrement < 1e-24 {
                break;
            }
            // Longest step keeping π and the budget slacks positive.
            let mut step: f64 = 1.0;
            for w in 0..m {
                if dp[w] < 0.0 {
                    step = step.min(-0.99 * p[w] / dp[w]);
                }
            }
            for i in 0..n {
                let rate = dot(&a[i], &dp);
                if rate > 0.0 {
                    step = step.min(0.99 * slack[i] / rate);
                }
            }
            let f0 = value(&p, kappa);
            let mut moved = false;
            while step > 1e-16 {
                let q: Vec<f64> = p.iter().zip(&dp).map(|(x, d)| x + step * d).collect();
                if value(&q, kappa) >= f0 + 0.25 * step * decrement {
                    p = q;
                    moved = true;
                    break;
                }
                step /= 2.0;
            }
            if !moved {
                break;
            }
        }
        kappa /= 10.0;
    }
    (dot(&t, &p) + sigma * entropy(&p), p)
}
