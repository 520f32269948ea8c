//! Dense two-phase primal simplex with Bland's rule.
//!
//! Maximizes `c·x` over `x ≥ 0` subject to rows `a·x {≤,≥,=} b`. The problems
//! here have a few hundred variables at most, so a full tableau is fine.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per constraint, in the original row orientation.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    /// |primal − dual| / max(1, |primal|).
    pub fn duality_gap(&self, lp: &LinearProgram) -> f64 {
        let dual: f64 = lp.constraints.iter().zip(&self.duals).map(|(c, y)| c.rhs * y).sum();
        (self.objective - dual).abs() / self.objective.abs().max(1.0)
    }
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, objective: vec![0.0; n_vars], constraints: Vec::new() }
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.n_vars);
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Adds a row given as sparse `(index, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.n_vars];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add(coeffs, relation, rhs);
    }

    pub fn maximize(&self) -> Result<LpSolution> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    m: usize,
    n_orig: usize,
    /// Column index where artificials start; they never re-enter in phase two.
    first_art: usize,
    cols: usize,
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Column that held the identity entry of each row at the start.
    unit_col: Vec<usize>,
    flipped: Vec<bool>,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n = lp.n_vars;
        let mut rel = Vec::with_capacity(m);
        let mut flipped = Vec::with_capacity(m);
        for c in &lp.constraints {
            let flip = c.rhs < 0.0;
            flipped.push(flip);
            rel.push(match (c.relation, flip) {
                (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
                (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
                (Relation::Eq, _) => Relation::Eq,
            });
        }
        let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
        let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
        let first_art = n + n_slack;
        let cols = first_art + n_art;
        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut basis = vec![0; m];
        let mut unit_col = vec![0; m];
        let (mut s, mut a) = (n, first_art);
        for (i, c) in lp.constraints.iter().enumerate() {
            let sign = if flipped[i] { -1.0 } else { 1.0 };
            for (j, &v) in c.coeffs.iter().enumerate() {
                t[i][j] = sign * v;
            }
            t[i][cols] = sign * c.rhs;
            match rel[i] {
                Relation::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    unit_col[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    unit_col[i] = a;
                    a += 1;
                }
                Relation::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    unit_col[i] = a;
                    a += 1;
                }
            }
        }
        Self { m, n_orig: n, first_art, cols, t, basis, unit_col, flipped, pivots: 0 }
    }

    fn pivot(&mut self, row: usize, col: usize, zrow: &mut [f64]) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let prow = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        let f = zrow[col];
        if f != 0.0 {
            for (v, pv) in zrow.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            zrow[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Reduced-cost row `c_B·B⁻¹A − c` (plus objective value in the last slot).
    fn zrow(&self, cost: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..=self.cols).map(|j| if j < self.cols { -cost[j] } else { 0.0 }).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (zj, tj) in z.iter_mut().zip(&self.t[i]) {
                    *zj += cb * tj;
                }
            }
        }
        z
    }

    fn run(&mut self, cost: &[f64], allow_artificial: bool) -> Result<Vec<f64>> {
        let mut z = self.zrow(cost);
        let limit = if allow_artificial { self.cols } else { self.first_art };
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Solver("simplex pivot limit reached".into()));
            }
            // Bland: lowest-index improving column.
            let Some(col) = (0..limit).find(|&j| z[j] < -COST_EPS) else {
                return Ok(z);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][self.cols] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-13 || (ratio <= br + 1e-13 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                return Err(Error::Solver("linear program is unbounded".into()));
            };
            self.pivot(row, col, &mut z);
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        if self.first_art < self.cols {
            let mut phase1 = vec![0.0; self.cols];
            for c in phase1.iter_mut().skip(self.first_art) {
                *c = -1.0;
            }
            let z = self.run(&phase1, true)?;
            let infeas = -z[self.cols];
            if infeas > 1e-9 {
                return Err(Error::Solver(format!("linear program is infeasible (phase one residual {infeas:e})")));
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..self.m {
                if self.basis[i] >= self.first_art {
                    if let Some(j) = (0..self.first_art).find(|&j| self.t[i][j].abs() > PIVOT_EPS) {
                        let mut dummy = vec![0.0; self.cols + 1];
                        self.pivot(i, j, &mut dummy);
                    }
                }
            }
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.n_orig].copy_from_slice(&lp.objective);
        let z = self.run(&cost, false)?;

        let mut x = vec![0.0; self.n_orig];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_orig {
                x[b] = self.t[i][self.cols];
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        // Column of the initial identity holds B⁻¹ e_i, so y_i = c_B·B⁻¹ e_i,
        // which is the reduced cost of that column plus its own cost.
        let duals = (0..self.m)
            .map(|i| {
                let j = self.unit_col[i];
                let y = z[j] + cost[j];
                if self.flipped[i] {
                    -y
                } else {
                    y
                }
            })
            .collect();
        Ok(LpSolution { x, objective, duals, pivots: self.pivots })
    }
}
