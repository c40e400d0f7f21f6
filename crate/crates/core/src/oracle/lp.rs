//! Dense two-phase simplex with Bland's rule for small equality-form LPs.
//!
//! ```text
//! minimize c.x  subject to  A x = b,  x >= 0
//! ```
//!
//! Every optimum carries a [`Certificate`]: the optimal basis, the vertex and
//! a dual vector. [`Certificate::verify`] re-checks primal feasibility, dual
//! feasibility and the duality gap against the original problem data, so an
//! optimum can be trusted without trusting the pivoting code.

use serde::Serialize;
use thiserror::Error;

/// Residual allowed on `A x = b` and on `x >= 0`.
pub const FEASIBILITY_TOL: f64 = 1e-10;
/// Reduced costs above `-DUAL_TOL` count as non-negative.
pub const DUAL_TOL: f64 = 1e-9;
/// Largest accepted gap between primal and dual objective.
pub const GAP_TOL: f64 = 1e-12;

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-12;
const RATIO_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("infeasible: phase-one residual {0}")]
    Infeasible(f64),
    #[error("unbounded objective")]
    Unbounded,
    #[error("pivot limit reached")]
    IterationLimit,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("dimension mismatch")]
    Dimension,
    #[error("vertex component {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("constraint {row} residual {residual}")]
    Residual { row: usize, residual: f64 },
    #[error("non-basic variable {index} is nonzero")]
    OffBasis { index: usize },
    #[error("reduced cost of variable {index} is {value}")]
    DualInfeasible { index: usize, value: f64 },
    #[error("duality gap {0}")]
    Gap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `optimize c.x s.t. A x = b, x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub sense: Sense,
}

/// Proof of optimality: basis, vertex and duals of the minimization form
/// (`-c` for a maximization).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub sense: Sense,
    pub basis: Vec<usize>,
    pub vertex: Vec<f64>,
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpResult {
    pub optimum: f64,
    pub certificate: Certificate,
}

impl Certificate {
    /// Re-verify against the problem and return the certified optimum.
    pub fn verify(&self, problem: &Problem) -> Result<f64, CertificateError> {
        let n = problem.c.len();
        let m = problem.b.len();
        if self.vertex.len() != n
            || self.duals.len() != m
            || problem.a.len() != m
            || problem.a.iter().any(|r| r.len() != n)
        {
            return Err(CertificateError::Dimension);
        }
        for (index, &value) in self.vertex.iter().enumerate() {
            if value < -FEASIBILITY_TOL {
                return Err(CertificateError::Negative { index, value });
            }
            if value != 0.0 && !self.basis.contains(&index) {
                return Err(CertificateError::OffBasis { index });
            }
        }
        for (row, (ai, bi)) in problem.a.iter().zip(&problem.b).enumerate() {
            let lhs: f64 = ai.iter().zip(&self.vertex).map(|(a, x)| a * x).sum();
            let residual = lhs - bi;
            if residual.abs() > FEASIBILITY_TOL {
                return Err(CertificateError::Residual { row, residual });
            }
        }
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for j in 0..n {
            let col: f64 = (0..m).map(|i| self.duals[i] * problem.a[i][j]).sum();
            let reduced = sign * problem.c[j] - col;
            if reduced < -DUAL_TOL {
                return Err(CertificateError::DualInfeasible {
                    index: j,
                    value: reduced,
                });
            }
        }
        let primal: f64 = problem.c.iter().zip(&self.vertex).map(|(c, x)| c * x).sum();
        let dual: f64 = self.duals.iter().zip(&problem.b).map(|(y, b)| y * b).sum();
        let gap = sign * primal - dual;
        if gap.abs() > GAP_TOL {
            return Err(CertificateError::Gap(gap));
        }
        Ok(primal)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// reduced-cost row; last entry is minus the objective value
    cost: Vec<f64>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width - 1]
    }

    fn price(&mut self, c: &[f64]) {
        let mut cost = vec![0.0; self.width];
        cost[..c.len()].copy_from_slice(c);
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = if bv < c.len() { c[bv] } else { 0.0 };
            if cb != 0.0 {
                for (k, v) in cost.iter_mut().enumerate() {
                    *v -= cb * self.rows[r][k];
                }
            }
        }
        self.cost = cost;
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rows[r][e] = 1.0;
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[e];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                    row[e] = 0.0;
                }
            }
        }
        let f = self.cost[e];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            self.cost[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Bland's rule: lowest-index improving column, lowest-index leaving
    /// variable among minimum-ratio ties.
    fn run(&mut self, enter_limit: usize) -> Result<(), LpError> {
        for _ in 0..10_000 {
            let Some(e) = (0..enter_limit).find(|&j| self.cost[j] < -COST_TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][e];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((br, best)) => {
                            if ratio < best - RATIO_TOL
                                || (ratio <= best + RATIO_TOL && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, e);
        }
        Err(LpError::IterationLimit)
    }
}

/// Solve with phase one on artificial variables, then phase two.
pub fn solve(problem: &Problem) -> Result<LpResult, LpError> {
    let m = problem.b.len();
    let n = problem.c.len();
    let width = n + m + 1;
    let mut flipped = vec![false; m];
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; width];
        let s = if problem.b[i] < 0.0 {
            flipped[i] = true;
            -1.0
        } else {
            1.0
        };
        for j in 0..n {
            row[j] = s * problem.a[i][j];
        }
        row[n + i] = 1.0;
        row[width - 1] = s * problem.b[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        cost: Vec::new(),
        width,
    };

    let mut phase_one = vec![0.0; n + m];
    phase_one[n..].iter_mut().for_each(|v| *v = 1.0);
    t.price(&phase_one);
    t.run(n + m)?;
    let residual = -t.cost[width - 1];
    if residual > FEASIBILITY_TOL {
        return Err(LpError::Infeasible(residual));
    }

    // drive artificials out of the basis; rows with no structural entry are redundant
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| t.rows[r][j].abs() > 1e-9) {
                Some(j) => {
                    t.pivot(r, j);
                    r += 1;
                }
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let c_min: Vec<f64> = problem.c.iter().map(|c| sign * c).collect();
    t.price(&c_min);
    t.run(n)?;

    let mut vertex = vec![0.0; n];
    for (r, &bv) in t.basis.iter().enumerate() {
        vertex[bv] = t.rhs(r);
    }
    let duals: Vec<f64> = (0..m)
        .map(|i| {
            let y = -t.cost[n + i];
            if flipped[i] {
                -y
            } else {
                y
            }
        })
        .collect();
    let optimum = problem.c.iter().zip(&vertex).map(|(c, x)| c * x).sum();
    let mut basis = t.basis.clone();
    basis.sort_unstable();
    Ok(LpResult {
        optimum,
        certificate: Certificate {
            sense: problem.sense,
            basis,
            vertex,
            duals,
        },
    })
}
