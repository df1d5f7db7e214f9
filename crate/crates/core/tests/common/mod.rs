//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiltrotor_core::optim::lsq::{BoundedLsqProblem, LEAST_NORM_RIDGE};

/// Ridge-regularized objective that the solver minimizes.
pub fn ridge_objective(p: &BoundedLsqProblem, x: &DVector<f64>) -> f64 {
    0.5 * (&p.a * x - &p.b).norm_squared() + 0.5 * LEAST_NORM_RIDGE * x.norm_squared()
}

/// Global minimum by enumerating every free/lower/upper pattern.
///
/// For each pattern the free block is solved by SVD; candidates that respect
/// the bounds are kept and the best objective wins. The problem is strictly
/// convex, so the optimum is one of the candidates.
pub fn enumeration_oracle(p: &BoundedLsqProblem) -> (DVector<f64>, f64) {
    let n = p.a.ncols();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let patterns = 3usize.pow(n as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut x = DVector::zeros(n);
        let mut free = Vec::new();
        for i in 0..n {
            match c % 3 {
                0 => free.push(i),
                1 => x[i] = p.lb[i],
                _ => x[i] = p.ub[i],
            }
            c /= 3;
        }
        if !free.is_empty() {
            let af = DMatrix::from_fn(p.a.nrows(), free.len(), |r, k| p.a[(r, free[k])]);
            let rhs = &p.b - &p.a * &x;
            let mut h = af.transpose() * &af;
            for k in 0..free.len() {
                h[(k, k)] += LEAST_NORM_RIDGE;
            }
            let svd = h.svd(true, true);
            let xf = svd.solve(&(af.transpose() * rhs), 1e-300).expect("svd solve");
            let mut ok = true;
            for (k, &i) in free.iter().enumerate() {
                if xf[k] < p.lb[i] - 1e-12 || xf[k] > p.ub[i] + 1e-12 {
                    ok = false;
                    break;
                }
                x[i] = xf[k].clamp(p.lb[i], p.ub[i]);
            }
            if !ok {
                continue;
            }
        }
        let f = ridge_objective(p, &x);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((x, f));
        }
    }
    best.expect("the all-bounds pattern is always feasible")
}

/// Projected gradient descent with a fixed 1/L step; slow but simple.
pub fn projected_gradient_oracle(p: &BoundedLsqProblem, iterations: usize) -> DVector<f64> {
    let mut h = p.a.transpose() * &p.a;
    for i in 0..h.nrows() {
        h[(i, i)] += LEAST_NORM_RIDGE;
    }
    let g = -(p.a.transpose() * &p.b);
    let lipschitz = h.symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;
    let mut x = DVector::from_fn(p.a.ncols(), |i, _| 0.0f64.clamp(p.lb[i], p.ub[i]));
    for _ in 0..iterations {
        let grad = &h * &x + &g;
        x -= step * grad;
        for i in 0..x.len() {
            x[i] = x[i].clamp(p.lb[i], p.ub[i]);
        }
    }
    x
}

/// Random allocation-sized problem: 6×8, bounds straddling zero.
pub fn random_problem(rng: &mut ChaCha8Rng) -> BoundedLsqProblem {
    let a = DMatrix::from_fn(6, 8, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
    let lb = DVector::from_fn(8, |_, _| rng.random_range(-1.0..0.0));
    let ub = DVector::from_fn(8, |_, _| rng.random_range(0.0..1.0));
    BoundedLsqProblem { a, b, lb, ub }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
