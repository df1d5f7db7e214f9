//! Gauss-Newton SQP on a multiple-shooting transcription.
//!
//! The cost is a sum of squared residuals. Each iteration linearizes the
//! dynamics around the shooting nodes, condenses the state increments away
//! (Δs_{k+1} = A_k Δs_k + B_k Δu_k + d_k) and solves the resulting box QP in
//! the inputs with the active-set solver. A line search on an ℓ1 merit
//! function globalizes the step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::lsq::solve_box_qp;

/// Discrete-time optimal control model with least-squares stage costs.
pub trait OcpModel {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn stage_residual_dim(&self) -> usize;
    fn terminal_residual_dim(&self) -> usize;

    fn dynamics(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]);
    /// Residuals of stage `k`; the stage cost is their squared norm.
    fn stage_residuals(&self, k: usize, x: &[f64], u: &[f64], r: &mut [f64]);
    fn terminal_residuals(&self, x: &[f64], r: &mut [f64]);

    /// Jacobians of `dynamics`; central differences unless overridden.
    fn dynamics_jacobian(&self, x: &[f64], u: &[f64], dt: f64, jx: &mut DMatrix<f64>, ju: &mut DMatrix<f64>) {
        central_difference(|x, u, out| self.dynamics(x, u, dt, out), x, u, jx, ju);
    }

    fn stage_jacobian(&self, k: usize, x: &[f64], u: &[f64], jx: &mut DMatrix<f64>, ju: &mut DMatrix<f64>) {
        central_difference(|x, u, out| self.stage_residuals(k, x, u, out), x, u, jx, ju);
    }

    fn terminal_jacobian(&self, x: &[f64], jx: &mut DMatrix<f64>) {
        let mut ju = DMatrix::zeros(jx.nrows(), 0);
        central_difference(|x, _, out| self.terminal_residuals(x, out), x, &[], jx, &mut ju);
    }
}

/// Central-difference Jacobian of `f(x, u)` with respect to both arguments.
pub fn central_difference(
    f: impl Fn(&[f64], &[f64], &mut [f64]),
    x: &[f64],
    u: &[f64],
    jx: &mut DMatrix<f64>,
    ju: &mut DMatrix<f64>,
) {
    let m = jx.nrows();
    let mut xp = x.to_vec();
    let mut up = u.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        f(&xp, u, &mut fp);
        xp[j] = x[j] - h;
        f(&xp, u, &mut fm);
        xp[j] = x[j];
        for i in 0..m {
            jx[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    for j in 0..u.len() {
        let h = 1e-6 * u[j].abs().max(1.0);
        up[j] = u[j] + h;
        f(x, &up, &mut fp);
        up[j] = u[j] - h;
        f(x, &up, &mut fm);
        up[j] = u[j];
        for i in 0..m {
            ju[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
}

pub struct NlpProblem<'a> {
    pub model: &'a dyn OcpModel,
    pub horizon: usize,
    pub dt: f64,
    pub x0: DVector<f64>,
    /// Hard input box.
    pub input_lb: DVector<f64>,
    pub input_ub: DVector<f64>,
    /// Soft state box, penalized quadratically with `state_penalty`; infinite entries are ignored.
    pub state_lb: DVector<f64>,
    pub state_ub: DVector<f64>,
    pub state_penalty: f64,
    /// Input used for every stage on a cold start.
    pub input_guess: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
    NumericFail,
}

impl SolveStatus {
    /// Whether the returned inputs are usable by a controller.
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Converged | SolveStatus::MaxIter)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericFail => "numeric_fail",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub inputs: Vec<DVector<f64>>,
    /// Shooting nodes s_0..s_N.
    pub states: Vec<DVector<f64>>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Σ‖r‖² at the returned iterate.
    pub cost: f64,
    /// Largest dynamics defect ‖f(s_k, u_k) − s_{k+1}‖∞.
    pub max_defect: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NlpOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub infeasible_tol: f64,
    pub qp_ridge: f64,
    pub max_backtracks: usize,
    /// Shift the warm start by one stage. Turn off when re-solving the same
    /// problem, where the previous solution is already aligned.
    pub shift_warm: bool,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-4, max_iter: 30, infeasible_tol: 1e-2, qp_ridge: 1e-8, max_backtracks: 10, shift_warm: true }
    }
}

/// One line of the iteration trace.
#[derive(Debug, Clone, Serialize)]
pub struct SqpIterate {
    pub iteration: usize,
    pub cost: f64,
    pub merit: f64,
    pub kkt: f64,
    pub max_defect: f64,
    pub step_norm: f64,
    pub alpha: f64,
    pub qp_changes: usize,
    pub penalty: f64,
    pub first_input: Vec<f64>,
}

pub fn solve_nlp(p: &NlpProblem, warm: Option<&NlpSolution>) -> NlpSolution {
    solve_nlp_with(p, warm, &NlpOptions::default(), None)
}

struct Stage {
    r: DVector<f64>,
    rx: DMatrix<f64>,
    ru: DMatrix<f64>,
}

struct Linearization {
    next: Vec<DVector<f64>>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    stages: Vec<Stage>,
    terminal: Stage,
}

impl<'a> NlpProblem<'a> {
    fn nx(&self) -> usize {
        self.model.state_dim()
    }

    fn nu(&self) -> usize {
        self.model.input_dim()
    }

    fn dims_ok(&self) -> bool {
        let (nx, nu) = (self.nx(), self.nu());
        self.horizon >= 1
            && self.dt > 0.0
            && self.x0.len() == nx
            && self.input_lb.len() == nu
            && self.input_ub.len() == nu
            && self.state_lb.len() == nx
            && self.state_ub.len() == nx
            && self.input_guess.len() == nu
            && (0..nu).all(|i| self.input_lb[i] <= self.input_ub[i])
            && (0..nx).all(|i| !(self.state_lb[i] > self.state_ub[i]))
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nx());
        self.model.dynamics(x.as_slice(), u.as_slice(), self.dt, out.as_mut_slice());
        out
    }

    fn clamp_input(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.input_lb[i], self.input_ub[i]);
        }
    }

    fn violation(&self, x: &DVector<f64>, i: usize) -> f64 {
        if x[i] > self.state_ub[i] {
            x[i] - self.state_ub[i]
        } else if x[i] < self.state_lb[i] {
            x[i] - self.state_lb[i]
        } else {
            0.0
        }
    }

    fn penalty_cost(&self, x: &DVector<f64>) -> f64 {
        (0..x.len()).map(|i| self.violation(x, i).powi(2)).sum::<f64>() * self.state_penalty
    }

    /// Σ‖r‖² and Σ‖d‖₁ at (S, U).
    fn evaluate(&self, s: &[DVector<f64>], u: &[DVector<f64>]) -> (f64, f64, f64) {
        let m = self.model;
        let mut r = vec![0.0; m.stage_residual_dim()];
        let mut cost = 0.0;
        let mut defect_l1 = 0.0;
        let mut defect_inf: f64 = 0.0;
        for k in 0..self.horizon {
            m.stage_residuals(k, s[k].as_slice(), u[k].as_slice(), &mut r);
            cost += r.iter().map(|v| v * v).sum::<f64>();
            if k > 0 {
                cost += self.penalty_cost(&s[k]);
            }
            let d = self.step(&s[k], &u[k]) - &s[k + 1];
            defect_l1 += d.lp_norm(1);
            defect_inf = defect_inf.max(d.amax());
        }
        let mut rt = vec![0.0; m.terminal_residual_dim()];
        m.terminal_residuals(s[self.horizon].as_slice(), &mut rt);
        cost += rt.iter().map(|v| v * v).sum::<f64>();
        cost += self.penalty_cost(&s[self.horizon]);
        (cost, defect_l1, defect_inf)
    }

    fn stage(&self, k: usize, x: &DVector<f64>, u: Option<&DVector<f64>>) -> Stage {
        let m = self.model;
        let (nx, nu) = (self.nx(), self.nu());
        let (mut r, mut rx, mut ru) = match u {
            Some(u) => {
                let ns = m.stage_residual_dim();
                let mut r = DVector::zeros(ns);
                let mut rx = DMatrix::zeros(ns, nx);
                let mut ru = DMatrix::zeros(ns, nu);
                m.stage_residuals(k, x.as_slice(), u.as_slice(), r.as_mut_slice());
                m.stage_jacobian(k, x.as_slice(), u.as_slice(), &mut rx, &mut ru);
                (r, rx, ru)
            }
            None => {
                let nt = m.terminal_residual_dim();
                let mut r = DVector::zeros(nt);
                let mut rx = DMatrix::zeros(nt, nx);
                m.terminal_residuals(x.as_slice(), r.as_mut_slice());
                m.terminal_jacobian(x.as_slice(), &mut rx);
                (r, rx, DMatrix::zeros(nt, nu))
            }
        };
        if k > 0 {
            let w = self.state_penalty.sqrt();
            let active: Vec<usize> = (0..nx).filter(|&i| self.violation(x, i) != 0.0).collect();
            if !active.is_empty() {
                let base = r.len();
                r = r.resize_vertically(base + active.len(), 0.0);
                rx = rx.resize_vertically(base + active.len(), 0.0);
                ru = ru.resize_vertically(base + active.len(), 0.0);
                for (j, &i) in active.iter().enumerate() {
                    r[base + j] = w * self.violation(x, i);
                    rx[(base + j, i)] = w;
                }
            }
        }
        Stage { r, rx, ru }
    }

    fn linearize(&self, s: &[DVector<f64>], u: &[DVector<f64>]) -> Linearization {
        let (nx, nu, n) = (self.nx(), self.nu(), self.horizon);
        let mut next = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut stages = Vec::with_capacity(n);
        for k in 0..n {
            next.push(self.step(&s[k], &u[k]));
            let mut ak = DMatrix::zeros(nx, nx);
            let mut bk = DMatrix::zeros(nx, nu);
            self.model.dynamics_jacobian(s[k].as_slice(), u[k].as_slice(), self.dt, &mut ak, &mut bk);
            a.push(ak);
            b.push(bk);
            stages.push(self.stage(k, &s[k], Some(&u[k])));
        }
        let terminal = self.stage(n, &s[n], None);
        Linearization { next, a, b, stages, terminal }
    }
}

fn all_finite<'v>(mut vs: impl Iterator<Item = &'v DVector<f64>>) -> bool {
    vs.all(|v| v.iter().all(|x| x.is_finite()))
}

/// Solve with explicit options and an optional per-iteration trace callback.
pub fn solve_nlp_with(
    p: &NlpProblem,
    warm: Option<&NlpSolution>,
    opts: &NlpOptions,
    mut trace: Option<&mut dyn FnMut(&SqpIterate)>,
) -> NlpSolution {
    let (nx, nu, n) = (p.nx(), p.nu(), p.horizon);
    if !p.dims_ok() {
        return NlpSolution {
            inputs: vec![DVector::zeros(nu); n.max(1)],
            states: vec![DVector::zeros(nx); n.max(1) + 1],
            status: SolveStatus::NumericFail,
            kkt_residual: f64::INFINITY,
            iterations: 0,
            cost: f64::INFINITY,
            max_defect: f64::INFINITY,
        };
    }
    let nv = n * nu;

    // Initial iterate: shifted warm start or a rollout of the guess.
    let warm = warm.filter(|w| {
        w.inputs.len() == n
            && w.states.len() == n + 1
            && w.inputs.iter().all(|u| u.len() == nu)
            && w.states.iter().all(|x| x.len() == nx)
            && all_finite(w.inputs.iter().chain(w.states.iter()))
    });
    let (mut u, mut s): (Vec<DVector<f64>>, Vec<DVector<f64>>) = match warm {
        Some(w) if !opts.shift_warm => {
            let mut s = w.states.clone();
            s[0] = p.x0.clone();
            (w.inputs.clone(), s)
        }
        Some(w) => {
            let mut u: Vec<_> = w.inputs[1..].to_vec();
            u.push(w.inputs[n - 1].clone());
            let mut s: Vec<_> = w.states[1..].to_vec();
            s.push(p.step(&w.states[n], &w.inputs[n - 1]));
            s[0] = p.x0.clone();
            (u, s)
        }
        None => {
            let mut g = p.input_guess.clone();
            p.clamp_input(&mut g);
            let u = vec![g; n];
            let mut s = vec![p.x0.clone()];
            for k in 0..n {
                let nxt = p.step(&s[k], &u[k]);
                s.push(nxt);
            }
            (u, s)
        }
    };
    for uk in u.iter_mut() {
        p.clamp_input(uk);
    }

    let mut mu: f64 = 1.0;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;
    let mut status;

    let lb_all = DVector::from_fn(nv, |i, _| p.input_lb[i % nu]);
    let ub_all = DVector::from_fn(nv, |i, _| p.input_ub[i % nu]);

    loop {
        if !all_finite(u.iter().chain(s.iter())) {
            status = SolveStatus::NumericFail;
            break;
        }
        let lin = p.linearize(&s, &u);
        if !all_finite(lin.next.iter())
            || !all_finite(lin.stages.iter().map(|st| &st.r))
            || !all_finite(std::iter::once(&lin.terminal.r))
            || lin.a.iter().chain(lin.b.iter()).any(|m| m.iter().any(|v| !v.is_finite()))
        {
            status = SolveStatus::NumericFail;
            break;
        }
        let d: Vec<DVector<f64>> = (0..n).map(|k| &lin.next[k] - &s[k + 1]).collect();
        let defect_inf = d.iter().fold(0.0_f64, |m, v| m.max(v.amax()));

        // Condense: Δs_k = c_k + G_k ΔU, with G_k nonzero only in its first k blocks.
        let mut c = vec![DVector::zeros(nx); n + 1];
        let mut gmat = vec![DMatrix::zeros(nx, nv); n + 1];
        for k in 0..n {
            c[k + 1] = &lin.a[k] * &c[k] + &d[k];
            let cols = k * nu;
            let mut gk1 = DMatrix::zeros(nx, nv);
            if cols > 0 {
                let prod = &lin.a[k] * gmat[k].columns(0, cols);
                gk1.columns_mut(0, cols).copy_from(&prod);
            }
            gk1.columns_mut(cols, nu).copy_from(&lin.b[k]);
            gmat[k + 1] = gk1;
        }

        // Residuals at ΔU = 0 and the gradient by a backward adjoint sweep.
        let stage_of = |k: usize| if k < n { &lin.stages[k] } else { &lin.terminal };
        let rho: Vec<DVector<f64>> = (0..=n)
            .map(|k| if k > 0 { &stage_of(k).r + &stage_of(k).rx * &c[k] } else { stage_of(k).r.clone() })
            .collect();
        let mut g = DVector::zeros(nv);
        let mut lam = lin.terminal.rx.transpose() * &rho[n];
        for k in (0..n).rev() {
            let st = &lin.stages[k];
            let gk = st.ru.transpose() * &rho[k] + lin.b[k].transpose() * &lam;
            g.rows_mut(k * nu, nu).copy_from(&gk);
            if k > 0 {
                lam = st.rx.transpose() * &rho[k] + lin.a[k].transpose() * &lam;
            }
        }

        let u_flat = DVector::from_fn(nv, |i, _| u[i / nu][i % nu]);
        let proj = DVector::from_fn(nv, |i, _| u_flat[i] - (u_flat[i] - g[i]).clamp(lb_all[i], ub_all[i]));
        kkt = proj.amax().max(defect_inf);
        if !kkt.is_finite() {
            status = SolveStatus::NumericFail;
            break;
        }
        if kkt <= opts.kkt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= opts.max_iter {
            status = SolveStatus::MaxIter;
            break;
        }

        // Gauss-Newton Hessian of the condensed problem. W is the curvature
        // of everything downstream of a state.
        let mut h = DMatrix::zeros(nv, nv);
        let mut w = lin.terminal.rx.transpose() * &lin.terminal.rx;
        for i in (0..n).rev() {
            let st = &lin.stages[i];
            let wb = &w * &lin.b[i];
            let diag = st.ru.transpose() * &st.ru + lin.b[i].transpose() * &wb;
            h.view_mut((i * nu, i * nu), (nu, nu)).copy_from(&diag);
            if i > 0 {
                let m = st.ru.transpose() * &st.rx + wb.transpose() * &lin.a[i];
                let row = &m * gmat[i].columns(0, i * nu);
                h.view_mut((i * nu, 0), (nu, i * nu)).copy_from(&row);
                h.view_mut((0, i * nu), (i * nu, nu)).copy_from(&row.transpose());
                w = st.rx.transpose() * &st.rx + lin.a[i].transpose() * &w * &lin.a[i];
            }
        }

        let ridge = opts.qp_ridge * (1.0 + (0..nv).fold(0.0_f64, |m, i| m.max(h[(i, i)])));
        for i in 0..nv {
            h[(i, i)] += ridge;
        }
        let dlb = &lb_all - &u_flat;
        let dub = &ub_all - &u_flat;
        let qp = match solve_box_qp(&h, &g, &dlb, &dub, None) {
            Ok(q) => q,
            Err(_) => {
                status = SolveStatus::NumericFail;
                break;
            }
        };
        let du = qp.x;

        let ds: Vec<DVector<f64>> = (0..=n).map(|k| &c[k] + &gmat[k] * &du).collect();
        let lin_r: Vec<DVector<f64>> = (0..=n)
            .map(|k| {
                let st = stage_of(k);
                let mut r = rho[k].clone();
                if k > 0 {
                    r += &st.rx * (&ds[k] - &c[k]);
                }
                if k < n {
                    r += &st.ru * du.rows(k * nu, nu);
                }
                r
            })
            .collect();

        // Multiplier estimate for the defect constraints sets the merit penalty.
        let mut lam = DVector::zeros(nx);
        let mut lam_max: f64 = 0.0;
        for k in (1..=n).rev() {
            let mut next_lam = stage_of(k).rx.transpose() * &lin_r[k];
            if k < n {
                next_lam += lin.a[k].transpose() * &lam;
            }
            lam = next_lam;
            lam_max = lam_max.max(lam.amax());
        }
        mu = mu.max(2.0 * lam_max);

        let cost0 = lin.stages.iter().map(|st| st.r.norm_squared()).sum::<f64>() + lin.terminal.r.norm_squared();
        let defect_l1: f64 = d.iter().map(|v| v.lp_norm(1)).sum();
        let merit0 = 0.5 * cost0 + mu * defect_l1;
        let model_cost: f64 = lin_r.iter().map(|r| r.norm_squared()).sum();
        let pred = merit0 - 0.5 * model_cost;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let ut: Vec<DVector<f64>> = (0..n)
                .map(|k| {
                    let mut v = &u[k] + du.rows(k * nu, nu) * alpha;
                    p.clamp_input(&mut v);
                    v
                })
                .collect();
            let st: Vec<DVector<f64>> = (0..=n).map(|k| &s[k] + &ds[k] * alpha).collect();
            let (cost, dl1, _) = p.evaluate(&st, &ut);
            let merit = 0.5 * cost + mu * dl1;
            if merit.is_finite() && (pred <= 0.0 || merit <= merit0 - 1e-4 * alpha * pred) {
                accepted = Some((ut, st, merit, cost));
                break;
            }
            accepted = Some((ut, st, merit, cost));
            alpha *= 0.5;
        }
        let (ut, st, merit, cost) = accepted.expect("at least one trial step");
        iterations += 1;
        if let Some(cb) = trace.as_deref_mut() {
            cb(&SqpIterate {
                iteration: iterations,
                cost,
                merit,
                kkt,
                max_defect: defect_inf,
                step_norm: du.amax() * alpha,
                alpha,
                qp_changes: qp.changes,
                penalty: mu,
                first_input: ut[0].iter().copied().collect(),
            });
        }
        u = ut;
        s = st;
        s[0] = p.x0.clone();
    }

    let (cost, _, max_defect) =
        if all_finite(u.iter().chain(s.iter())) { p.evaluate(&s, &u) } else { (f64::NAN, f64::NAN, f64::NAN) };
    if !cost.is_finite() || !max_defect.is_finite() {
        status = SolveStatus::NumericFail;
    } else if status != SolveStatus::NumericFail && max_defect > opts.infeasible_tol {
        status = SolveStatus::Infeasible;
    }
    NlpSolution { inputs: u, states: s, status, kkt_residual: kkt, iterations, cost, max_defect }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// x⁺ = x + u with stage cost x² + u² and terminal cost x².
    struct Integrator;

    impl OcpModel for Integrator {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn stage_residual_dim(&self) -> usize {
            2
        }
        fn terminal_residual_dim(&self) -> usize {
            1
        }
        fn dynamics(&self, x: &[f64], u: &[f64], _dt: f64, next: &mut [f64]) {
            next[0] = x[0] + u[0];
        }
        fn stage_residuals(&self, _k: usize, x: &[f64], u: &[f64], r: &mut [f64]) {
            r[0] = x[0];
            r[1] = u[0];
        }
        fn terminal_residuals(&self, x: &[f64], r: &mut [f64]) {
            r[0] = x[0];
        }
    }

    fn problem(model: &dyn OcpModel, n: usize, x0: f64, ub: f64) -> NlpProblem<'_> {
        NlpProblem {
            model,
            horizon: n,
            dt: 1.0,
            x0: DVector::from_element(1, x0),
            input_lb: DVector::from_element(1, -ub),
            input_ub: DVector::from_element(1, ub),
            state_lb: DVector::from_element(1, f64::NEG_INFINITY),
            state_ub: DVector::from_element(1, f64::INFINITY),
            state_penalty: 1e3,
            input_guess: DVector::zeros(1),
        }
    }

    /// Backward Riccati recursion for the scalar integrator.
    fn riccati_inputs(n: usize, x0: f64) -> Vec<f64> {
        let mut p = 1.0;
        let mut gains = vec![0.0; n];
        for k in (0..n).rev() {
            gains[k] = p / (1.0 + p);
            p = 1.0 + p - p * p / (1.0 + p);
        }
        let mut x = x0;
        gains
            .iter()
            .map(|k| {
                let u = -k * x;
                x += u;
                u
            })
            .collect()
    }

    #[test]
    fn matches_riccati() {
        let m = Integrator;
        let p = problem(&m, 5, 3.0, 1e6);
        let sol = solve_nlp(&p, None);
        assert_eq!(sol.status, SolveStatus::Converged);
        for (u, r) in sol.inputs.iter().zip(riccati_inputs(5, 3.0)) {
            assert_relative_eq!(u[0], r, epsilon = 1e-6);
        }
    }

    struct Scalar;

    impl OcpModel for Scalar {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn stage_residual_dim(&self) -> usize {
            1
        }
        fn terminal_residual_dim(&self) -> usize {
            0
        }
        fn dynamics(&self, x: &[f64], _u: &[f64], _dt: f64, next: &mut [f64]) {
            next[0] = x[0];
        }
        fn stage_residuals(&self, _k: usize, _x: &[f64], u: &[f64], r: &mut [f64]) {
            r[0] = u[0] - 2.0;
        }
        fn terminal_residuals(&self, _x: &[f64], _r: &mut [f64]) {}
    }

    #[test]
    fn input_bound_clips() {
        let m = Scalar;
        let p = problem(&m, 1, 0.0, 1.0);
        let sol = solve_nlp(&p, None);
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.inputs[0][0], 1.0);
    }

    /// Pendulum-like nonlinear toy: x⁺ = x + dt·(v), v⁺ = v + dt·(u − sin x).
    struct Pendulum;

    impl OcpModel for Pendulum {
        fn state_dim(&self) -> usize {
            2
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn stage_residual_dim(&self) -> usize {
            3
        }
        fn terminal_residual_dim(&self) -> usize {
            2
        }
        fn dynamics(&self, x: &[f64], u: &[f64], dt: f64, next: &mut [f64]) {
            next[0] = x[0] + dt * x[1];
            next[1] = x[1] + dt * (u[0] - x[0].sin());
        }
        fn stage_residuals(&self, _k: usize, x: &[f64], u: &[f64], r: &mut [f64]) {
            r[0] = 3.0 * (x[0] - 1.0);
            r[1] = x[1];
            r[2] = 0.3 * u[0];
        }
        fn terminal_residuals(&self, x: &[f64], r: &mut [f64]) {
            r[0] = 5.0 * (x[0] - 1.0);
            r[1] = x[1];
        }
    }

    fn pendulum_problem(m: &Pendulum, x0: [f64; 2]) -> NlpProblem<'_> {
        NlpProblem {
            model: m,
            horizon: 20,
            dt: 0.1,
            x0: DVector::from_row_slice(&x0),
            input_lb: DVector::from_element(1, -2.0),
            input_ub: DVector::from_element(1, 2.0),
            state_lb: DVector::from_row_slice(&[f64::NEG_INFINITY, -0.8]),
            state_ub: DVector::from_row_slice(&[f64::INFINITY, 0.8]),
            state_penalty: 1e3,
            input_guess: DVector::zeros(1),
        }
    }

    #[test]
    fn nonlinear_converges_within_bounds() {
        let m = Pendulum;
        let p = pendulum_problem(&m, [0.0, 0.0]);
        let sol = solve_nlp(&p, None);
        assert_eq!(sol.status, SolveStatus::Converged, "kkt {}", sol.kkt_residual);
        assert!(sol.kkt_residual <= 1e-4);
        assert!(sol.max_defect <= 1e-4);
        for u in &sol.inputs {
            assert!(u[0] >= -2.0 && u[0] <= 2.0);
        }
    }

    #[test]
    fn shifted_warm_start_converges_quickly() {
        let m = Pendulum;
        let p = pendulum_problem(&m, [0.0, 0.0]);
        let sol = solve_nlp(&p, None);
        // Advance one step along the optimal trajectory and re-solve.
        let p2 = pendulum_problem(&m, [sol.states[1][0], sol.states[1][1]]);
        let warm = solve_nlp(&p2, Some(&sol));
        assert_eq!(warm.status, SolveStatus::Converged);
        assert!(warm.iterations <= 2, "iterations {}", warm.iterations);
    }

    #[test]
    fn trace_reports_each_iteration() {
        let m = Pendulum;
        let p = pendulum_problem(&m, [0.0, 0.0]);
        let mut lines = Vec::new();
        let mut cb = |it: &SqpIterate| lines.push(serde_json::to_string(it).unwrap());
        let sol = solve_nlp_with(&p, None, &NlpOptions::default(), Some(&mut cb));
        assert_eq!(lines.len(), sol.iterations);
        assert!(lines[0].contains("\"iteration\":1"));
    }

    #[test]
    fn bad_dimensions_fail_cleanly() {
        let m = Integrator;
        let mut p = problem(&m, 3, 1.0, 1.0);
        p.x0 = DVector::zeros(2);
        assert_eq!(solve_nlp(&p, None).status, SolveStatus::NumericFail);
    }
}
