//! Box-constrained linear least squares and the primal active-set box QP
//! underneath it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::QpError;

/// Ridge weight added to ‖x‖² so that, among minimizers, the least-norm one wins.
pub const LEAST_NORM_RIDGE: f64 = 1e-8;

const PROXIMAL_PASSES: usize = 2;

/// min ½‖A x − b‖² subject to lb ≤ x ≤ ub.
#[derive(Debug, Clone)]
pub struct BoundedLsqProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundFlag {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct BoundedLsqSolution {
    pub x: DVector<f64>,
    /// ‖A x − b‖.
    pub residual: f64,
    pub active: Vec<BoundFlag>,
    /// Number of active-set changes.
    pub changes: usize,
}

impl BoundedLsqProblem {
    pub fn check(&self) -> Result<(), QpError> {
        let n = self.a.ncols();
        if self.b.len() != self.a.nrows() || self.lb.len() != n || self.ub.len() != n {
            return Err(QpError::Dimension);
        }
        check_bounds(&self.lb, &self.ub)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared()
    }
}

fn check_bounds(lb: &DVector<f64>, ub: &DVector<f64>) -> Result<(), QpError> {
    for i in 0..lb.len() {
        if !(lb[i] <= ub[i]) || lb[i].is_nan() || ub[i].is_nan() {
            return Err(QpError::InconsistentBounds(i));
        }
    }
    Ok(())
}

pub fn solve_bounded_lsq(p: &BoundedLsqProblem) -> Result<BoundedLsqSolution, QpError> {
    solve_bounded_lsq_warm(p, None)
}

/// As [`solve_bounded_lsq`], starting the active-set search from `x0`.
pub fn solve_bounded_lsq_warm(p: &BoundedLsqProblem, x0: Option<&DVector<f64>>) -> Result<BoundedLsqSolution, QpError> {
    p.check()?;
    let mut h = p.a.tr_mul(&p.a);
    for i in 0..h.nrows() {
        h[(i, i)] += LEAST_NORM_RIDGE;
    }
    let atb = p.a.tr_mul(&p.b);
    let mut sol = solve_box_qp(&h, &(-&atb), &p.lb, &p.ub, x0)?;
    // The ridge biases the fit by about ε/σ². Re-centring it on the previous
    // solution (a proximal step) removes the bias while keeping the
    // near-least-norm choice among exact minimizers.
    for _ in 0..PROXIMAL_PASSES {
        let g = -(&atb + LEAST_NORM_RIDGE * &sol.x);
        let next = solve_box_qp(&h, &g, &p.lb, &p.ub, Some(&sol.x))?;
        let moved = (&next.x - &sol.x).amax();
        let changes = sol.changes + next.changes;
        sol = BoxQpSolution { changes, ..next };
        if moved <= 1e-15 {
            break;
        }
    }
    let residual = (&p.a * &sol.x - &p.b).norm();
    Ok(BoundedLsqSolution { x: sol.x, residual, active: sol.active, changes: sol.changes })
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub active: Vec<BoundFlag>,
    pub changes: usize,
}

/// min ½ xᵀH x + gᵀx subject to lb ≤ x ≤ ub, with H symmetric positive definite.
///
/// Primal active-set method: each iteration takes a Newton step on the free
/// variables, stops at the first blocking bound, and releases the bound with
/// the most negative multiplier once the current face is optimal.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    x0: Option<&DVector<f64>>,
) -> Result<BoxQpSolution, QpError> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lb.len() != n || ub.len() != n {
        return Err(QpError::Dimension);
    }
    check_bounds(lb, ub)?;
    if x0.is_some_and(|x| x.len() != n) {
        return Err(QpError::Dimension);
    }
    let max_changes = 10 * n.max(1);

    let mut x = DVector::from_fn(n, |i, _| {
        let v = x0.map_or(0.0, |x| x[i]);
        if v.is_finite() {
            v.clamp(lb[i], ub[i])
        } else {
            0.0_f64.clamp(lb[i], ub[i])
        }
    });
    let mut grad = h * &x + g;
    let mut active: Vec<BoundFlag> = (0..n)
        .map(|i| {
            if lb[i] == ub[i] || (x[i] == lb[i] && grad[i] >= 0.0) {
                BoundFlag::Lower
            } else if x[i] == ub[i] && grad[i] <= 0.0 {
                BoundFlag::Upper
            } else {
                BoundFlag::Free
            }
        })
        .collect();

    let scale =
        1.0 + g.amax() + h.amax() * x.amax().max(lb.iter().chain(ub.iter()).fold(0.0, |m, v| m.max(v.abs().min(1e6))));
    let tol = 1e-13 * scale;
    let mut changes = 0;
    let mut free: Vec<usize> = (0..n).filter(|&i| active[i] == BoundFlag::Free).collect();
    let mut factor = FreeFactor::new(h, &free)?;

    loop {
        let nf = free.len();
        if nf > 0 {
            let rhs = DVector::from_fn(nf, |r, _| -grad[free[r]]);
            let step = factor.solve(h, &free, &rhs)?;
            if step.iter().any(|v| !v.is_finite()) {
                return Err(QpError::NumericFail { changes });
            }

            let mut alpha = 1.0;
            let mut blocking: Option<(usize, BoundFlag)> = None;
            for (r, &i) in free.iter().enumerate() {
                let s = step[r];
                if s < 0.0 && x[i] + s < lb[i] {
                    let t = (lb[i] - x[i]) / s;
                    if t < alpha {
                        alpha = t;
                        blocking = Some((i, BoundFlag::Lower));
                    }
                } else if s > 0.0 && x[i] + s > ub[i] {
                    let t = (ub[i] - x[i]) / s;
                    if t < alpha {
                        alpha = t;
                        blocking = Some((i, BoundFlag::Upper));
                    }
                }
            }
            let alpha = alpha.max(0.0);
            for (r, &i) in free.iter().enumerate() {
                x[i] = (x[i] + alpha * step[r]).clamp(lb[i], ub[i]);
            }
            if let Some((i, flag)) = blocking {
                x[i] = if flag == BoundFlag::Lower { lb[i] } else { ub[i] };
                active[i] = flag;
                let pos = free.binary_search(&i).expect("blocking index is free");
                free.remove(pos);
                factor.remove(h, &free, pos)?;
                changes += 1;
                if changes > max_changes {
                    return Err(QpError::NumericFail { changes });
                }
                grad = h * &x + g;
                continue;
            }
            grad = h * &x + g;
        }

        // Current face is optimal; look for a bound worth releasing.
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            if lb[i] == ub[i] {
                continue;
            }
            let violation = match active[i] {
                BoundFlag::Lower => -grad[i],
                BoundFlag::Upper => grad[i],
                BoundFlag::Free => continue,
            };
            if violation > tol && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        match worst {
            None => return Ok(BoxQpSolution { x, active, changes }),
            Some((i, _)) => {
                active[i] = BoundFlag::Free;
                let pos = free.binary_search(&i).unwrap_err();
                free.insert(pos, i);
                factor.insert(h, &free, pos)?;
                changes += 1;
                if changes > max_changes {
                    return Err(QpError::NumericFail { changes });
                }
            }
        }
    }
}

/// Cholesky factor of H restricted to the free set, kept current with
/// rank-one column updates and refreshed from scratch now and then.
struct FreeFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    updates: usize,
}

const REFACTOR_EVERY: usize = 32;

impl FreeFactor {
    fn new(h: &DMatrix<f64>, free: &[usize]) -> Result<Self, QpError> {
        let mut f = Self { chol: None, updates: 0 };
        f.refactor(h, free)?;
        Ok(f)
    }

    fn refactor(&mut self, h: &DMatrix<f64>, free: &[usize]) -> Result<(), QpError> {
        self.updates = 0;
        if free.is_empty() {
            self.chol = None;
            return Ok(());
        }
        let nf = free.len();
        let hff = DMatrix::from_fn(nf, nf, |r, c| h[(free[r], free[c])]);
        self.chol = Some(hff.cholesky().ok_or(QpError::NotPositiveDefinite)?);
        Ok(())
    }

    fn healthy(&self) -> bool {
        self.chol.as_ref().is_none_or(|c| c.l_dirty().iter().all(|v| v.is_finite()))
    }

    /// `free` already has the new index at `pos`.
    fn insert(&mut self, h: &DMatrix<f64>, free: &[usize], pos: usize) -> Result<(), QpError> {
        self.updates += 1;
        match self.chol.take() {
            Some(c) if self.updates < REFACTOR_EVERY => {
                let j = free[pos];
                let col = DVector::from_fn(free.len(), |r, _| h[(free[r], j)]);
                self.chol = Some(c.insert_column(pos, col));
                if !self.healthy() {
                    self.refactor(h, free)?;
                }
                Ok(())
            }
            _ => self.refactor(h, free),
        }
    }

    /// `free` no longer holds the index that sat at `pos`.
    fn remove(&mut self, h: &DMatrix<f64>, free: &[usize], pos: usize) -> Result<(), QpError> {
        self.updates += 1;
        match self.chol.take() {
            Some(c) if self.updates < REFACTOR_EVERY && !free.is_empty() => {
                self.chol = Some(c.remove_column(pos));
                if !self.healthy() {
                    self.refactor(h, free)?;
                }
                Ok(())
            }
            _ => self.refactor(h, free),
        }
    }

    fn solve(&mut self, h: &DMatrix<f64>, free: &[usize], rhs: &DVector<f64>) -> Result<DVector<f64>, QpError> {
        if self.chol.is_none() {
            self.refactor(h, free)?;
        }
        let c = self.chol.as_ref().ok_or(QpError::NotPositiveDefinite)?;
        Ok(c.solve(rhs))
    }
}
