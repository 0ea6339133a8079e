//! Path-following barrier method for problems with affine rows, exponential
//! rows and linear matrix inequalities.
//!
//! Problems are stated as maximisation of a linear objective. LMI blocks share
//! a small set of basis matrices so the Hessian is assembled at basis level and
//! then scattered to variables.

mod start;

pub use start::strictly_feasible_start;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IpmError {
    #[error("starting point is not strictly feasible")]
    NotInterior,
    #[error("problem appears infeasible (phase I optimum {0:e})")]
    Infeasible(f64),
    #[error("line search could not keep the iterate interior")]
    LineSearch { last: Vec<f64> },
    #[error("iteration limit reached")]
    IterationLimit { last: Vec<f64> },
    #[error("degenerate limits: {0}")]
    Degenerate(String),
}

/// `Σ coeffs · x ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `exp(x[arg]) ≤ Σ bound · x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpRow {
    pub arg: usize,
    pub bound: Vec<(usize, f64)>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiTerm {
    pub var: usize,
    pub basis: usize,
    pub coef: f64,
}

/// `constant + Σ coef · x[var] · bases[basis] ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub constant: DMatrix<f64>,
    pub bases: Vec<DMatrix<f64>>,
    pub terms: Vec<LmiTerm>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        LmiBlock {
            constant: DMatrix::zeros(dim, dim),
            bases: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn add_basis(&mut self, m: DMatrix<f64>) -> usize {
        self.bases.push(m);
        self.bases.len() - 1
    }

    pub fn add_term(&mut self, var: usize, basis: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push(LmiTerm { var, basis, coef });
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for t in &self.terms {
            let w = t.coef * x[t.var];
            if w != 0.0 {
                f += &self.bases[t.basis] * w;
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub num_vars: usize,
    /// Maximise `objective · x + objective_offset`.
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub linear: Vec<LinearRow>,
    pub exp_rows: Vec<ExpRow>,
    pub lmis: Vec<LmiBlock>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        ConicProblem {
            num_vars,
            objective: vec![0.0; num_vars],
            objective_offset: 0.0,
            linear: Vec::new(),
            exp_rows: Vec::new(),
            lmis: Vec::new(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Barrier parameter ν: one per scalar row plus each block order.
    pub fn barrier_degree(&self) -> f64 {
        (self.linear.len() + self.exp_rows.len() + self.lmis.iter().map(|b| b.dim()).sum::<usize>()) as f64
    }

    pub fn linear_slack(&self, row: &LinearRow, x: &[f64]) -> f64 {
        row.rhs - row.coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    pub fn exp_slack(&self, row: &ExpRow, x: &[f64]) -> f64 {
        row.offset + row.bound.iter().map(|&(j, b)| b * x[j]).sum::<f64>() - x[row.arg].exp()
    }

    /// Smallest scalar slack and smallest LMI eigenvalue.
    pub fn min_slack(&self, x: &[f64]) -> (f64, f64) {
        let scalar = self
            .linear
            .iter()
            .map(|r| self.linear_slack(r, x))
            .chain(self.exp_rows.iter().map(|r| self.exp_slack(r, x)))
            .fold(f64::INFINITY, f64::min);
        let lmi = self
            .lmis
            .iter()
            .map(|b| crate::linalg::min_eigenvalue(&b.eval(x)))
            .fold(f64::INFINITY, f64::min);
        (scalar, lmi)
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.barrier_value(x).is_some()
    }

    /// Barrier φ(x), or None outside the interior.
    pub fn barrier_value(&self, x: &[f64]) -> Option<f64> {
        let mut phi = 0.0;
        for r in &self.linear {
            let s = self.linear_slack(r, x);
            if !(s > 0.0) {
                return None;
            }
            phi -= s.ln();
        }
        for r in &self.exp_rows {
            let s = self.exp_slack(r, x);
            if !(s > 0.0) {
                return None;
            }
            phi -= s.ln();
        }
        for b in &self.lmis {
            let chol = Cholesky::new(b.eval(x))?;
            let l = chol.l_dirty();
            let mut logdet = 0.0;
            for i in 0..b.dim() {
                let d = l[(i, i)];
                if !(d > 0.0) {
                    return None;
                }
                logdet += 2.0 * d.ln();
            }
            phi -= logdet;
        }
        phi.is_finite().then_some(phi)
    }

    /// Gradient and Hessian of the barrier at an interior point.
    fn barrier_derivatives(&self, x: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.num_vars;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for r in &self.linear {
            let s = self.linear_slack(r, x);
            for &(i, a) in &r.coeffs {
                g[i] += a / s;
                for &(j, b) in &r.coeffs {
                    h[(i, j)] += a * b / (s * s);
                }
            }
        }
        for r in &self.exp_rows {
            let s = self.exp_slack(r, x);
            let e = x[r.arg].exp();
            // ∇s = bound - e·e_arg
            g[r.arg] += e / s;
            h[(r.arg, r.arg)] += e / s;
            let mut grad_s: Vec<(usize, f64)> = r.bound.clone();
            grad_s.push((r.arg, -e));
            for &(i, a) in &grad_s {
                if i != r.arg || a != -e {
                    g[i] -= a / s;
                }
                for &(j, b) in &grad_s {
                    h[(i, j)] += a * b / (s * s);
                }
            }
        }
        for b in &self.lmis {
            let chol = Cholesky::new(b.eval(x))?;
            let l = chol.l();
            let m: Vec<DMatrix<f64>> = b
                .bases
                .iter()
                .map(|bb| {
                    let y = l.solve_lower_triangular(bb)?;
                    l.solve_lower_triangular(&y.transpose())
                })
                .collect::<Option<_>>()?;
            let traces: Vec<f64> = m.iter().map(|mm| mm.trace()).collect();
            let nb = m.len();
            let mut inner = DMatrix::zeros(nb, nb);
            for p in 0..nb {
                for q in p..nb {
                    let v = m[p].dot(&m[q]);
                    inner[(p, q)] = v;
                    inner[(q, p)] = v;
                }
            }
            for t in &b.terms {
                g[t.var] -= t.coef * traces[t.basis];
                for u in &b.terms {
                    h[(t.var, u.var)] += t.coef * u.coef * inner[(t.basis, u.basis)];
                }
            }
        }
        Some((g, h))
    }

    /// Step bound keeping affine rows interior.
    fn max_linear_step(&self, x: &[f64], dx: &DVector<f64>) -> f64 {
        let mut s_max = f64::INFINITY;
        for r in &self.linear {
            let rate: f64 = r.coeffs.iter().map(|&(j, a)| a * dx[j]).sum();
            if rate > 0.0 {
                s_max = s_max.min(self.linear_slack(r, x) / rate);
            }
        }
        s_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub barrier_increase: f64,
    pub initial_mu: f64,
    pub newton_tol: f64,
    pub duality_gap_tol: f64,
    pub max_newton: usize,
    pub max_path_steps: usize,
    pub line_search_slope: f64,
    pub line_search_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            barrier_increase: 10.0,
            initial_mu: 1.0,
            newton_tol: 1e-9,
            duality_gap_tol: 1e-7,
            max_newton: 100,
            max_path_steps: 60,
            line_search_slope: 0.01,
            line_search_shrink: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.barrier_increase > 1.0
            && self.initial_mu > 0.0
            && self.newton_tol > 0.0
            && self.duality_gap_tol > 0.0
            && self.line_search_slope > 0.0
            && self.line_search_slope < 0.5
            && self.line_search_shrink > 0.0
            && self.line_search_shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(format!("invalid solver config {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// ν / t at return; bounds the distance to the optimum.
    pub gap: f64,
    pub barrier_weight: f64,
    pub newton_steps: usize,
    pub path_steps: usize,
    pub linear_slacks: Vec<f64>,
    pub exp_slacks: Vec<f64>,
    pub linear_duals: Vec<f64>,
    pub exp_duals: Vec<f64>,
    pub lmi_duals: Vec<DMatrix<f64>>,
}

fn solve_newton_system(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = h[(i, i)];
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * d[i] * d[j]);
    let b = DVector::from_fn(n, |i, _| rhs[i] * d[i]);
    let mut reg = 0.0;
    for _ in 0..8 {
        if let Some(ch) = Cholesky::<f64, Dyn>::new(scaled.clone()) {
            let y = ch.solve(&b);
            if y.iter().all(|v| v.is_finite()) {
                return Some(DVector::from_fn(n, |i, _| y[i] * d[i]));
            }
        }
        let next = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
        for i in 0..n {
            scaled[(i, i)] += next - reg;
        }
        reg = next;
    }
    None
}

struct Centering {
    newton_steps: usize,
}

/// Minimises `-w·obj(x) + φ(x)` from an interior `x`, stopping early when
/// `stop(x)` holds.
fn center(
    p: &ConicProblem,
    x: &mut Vec<f64>,
    w: f64,
    cfg: &SolverConfig,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Result<Centering, IpmError> {
    let c = DVector::from_column_slice(&p.objective);
    let f = |x: &[f64]| p.barrier_value(x).map(|phi| phi - w * p.objective_value(x));
    let mut fx = f(x).ok_or(IpmError::NotInterior)?;
    let mut previous_decrement = f64::INFINITY;
    for step in 0..cfg.max_newton {
        if stop(x) {
            return Ok(Centering { newton_steps: step });
        }
        let (gb, h) = p.barrier_derivatives(x).ok_or(IpmError::NotInterior)?;
        let g = gb - &c * w;
        let dx = solve_newton_system(&h, &(-&g)).ok_or_else(|| IpmError::LineSearch { last: x.clone() })?;
        let slope = g.dot(&dx);
        let decrement = -slope;
        if decrement / 2.0 <= cfg.newton_tol {
            log::trace!("centered at w={w:.3e} dec={decrement:.3e}");
            return Ok(Centering { newton_steps: step });
        }
        if decrement < 1e-6 && decrement > 0.5 * previous_decrement {
            // quadratic convergence has stopped: this is the roundoff floor
            log::trace!("centering floor at w={w:.3e} dec={decrement:.3e}");
            return Ok(Centering { newton_steps: step });
        }
        previous_decrement = decrement;
        let s_max = 1.0f64.min(0.99 * p.max_linear_step(x, &dx));
        if decrement.sqrt() < 0.25 {
            // quadratic region: f is too large to resolve the decrease, so
            // only interiority is checked
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + s_max * b).collect();
            if let Some(ft) = f(&trial) {
                log::trace!("newton w={w:.3e} full step {s_max:.3e} dec={decrement:.3e}");
                *x = trial;
                fx = ft;
                continue;
            }
        }
        let mut s = s_max;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + s * b).collect();
            if let Some(ft) = f(&trial) {
                if ft <= fx + cfg.line_search_slope * s * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            s *= cfg.line_search_shrink;
        }
        match accepted {
            Some((trial, ft)) => {
                log::trace!(
                    "newton w={w:.3e} obj={:.10e} step={s:.3e} dec={decrement:.3e}",
                    p.objective_value(&trial)
                );
                if fx - ft <= 1e-15 * fx.abs().max(1.0) && decrement < 1e-6 {
                    // no representable progress left
                    *x = trial;
                    return Ok(Centering { newton_steps: step + 1 });
                }
                *x = trial;
                fx = ft;
            }
            None => {
                if decrement < 1e-6 {
                    return Ok(Centering { newton_steps: step });
                }
                return Err(IpmError::LineSearch { last: x.clone() });
            }
        }
    }
    Err(IpmError::IterationLimit { last: x.clone() })
}

/// Solves from a strictly feasible `x0` with barrier weight `cfg.initial_mu`.
pub fn solve_from(p: &ConicProblem, x0: &[f64], cfg: &SolverConfig) -> Result<SubproblemSolution, IpmError> {
    if !p.is_strictly_feasible(x0) {
        return Err(IpmError::NotInterior);
    }
    let nu = p.barrier_degree();
    let mut x = x0.to_vec();
    let mut w = cfg.initial_mu;
    let mut newton = 0;
    let never = |_: &[f64]| false;
    for path in 0..cfg.max_path_steps {
        newton += center(p, &mut x, w, cfg, &never)?.newton_steps;
        log::debug!("path step {path}: w={w:.3e} obj={:.10e}", p.objective_value(&x));
        if nu / w <= cfg.duality_gap_tol || nu == 0.0 {
            return Ok(finish(p, x, w, newton, path + 1));
        }
        w *= cfg.barrier_increase;
    }
    Err(IpmError::IterationLimit { last: x })
}

/// Solves from `x0`, running a phase I search first when `x0` is not interior.
pub fn solve(p: &ConicProblem, x0: &[f64], cfg: &SolverConfig) -> Result<SubproblemSolution, IpmError> {
    cfg.validate().map_err(IpmError::Degenerate)?;
    let start = if p.is_strictly_feasible(x0) { x0.to_vec() } else { phase_one(p, x0, cfg)? };
    solve_from(p, &start, cfg)
}

fn finish(p: &ConicProblem, x: Vec<f64>, w: f64, newton_steps: usize, path_steps: usize) -> SubproblemSolution {
    let linear_slacks: Vec<f64> = p.linear.iter().map(|r| p.linear_slack(r, &x)).collect();
    let exp_slacks: Vec<f64> = p.exp_rows.iter().map(|r| p.exp_slack(r, &x)).collect();
    // duals from one more Newton step: first-order corrections for the
    // residual centering error
    let dx = p.barrier_derivatives(&x).and_then(|(g, h)| {
        let rhs = DVector::from_column_slice(&p.objective) * w - g;
        solve_newton_system(&h, &rhs)
    });
    let dx = dx.unwrap_or_else(|| DVector::zeros(p.num_vars));
    let linear_duals = p
        .linear
        .iter()
        .zip(&linear_slacks)
        .map(|(r, &s)| {
            let ds: f64 = -r.coeffs.iter().map(|&(j, a)| a * dx[j]).sum::<f64>();
            (1.0 - ds / s) / (w * s)
        })
        .collect();
    let exp_duals = p
        .exp_rows
        .iter()
        .zip(&exp_slacks)
        .map(|(r, &s)| {
            let ds = r.bound.iter().map(|&(j, b)| b * dx[j]).sum::<f64>() - x[r.arg].exp() * dx[r.arg];
            (1.0 - ds / s) / (w * s)
        })
        .collect();
    let lmi_duals = p
        .lmis
        .iter()
        .map(|b| {
            let Some(g) = Cholesky::new(b.eval(&x)).map(|c| c.inverse()) else {
                return DMatrix::zeros(b.dim(), b.dim());
            };
            let mut df = DMatrix::zeros(b.dim(), b.dim());
            for t in &b.terms {
                df += &b.bases[t.basis] * (t.coef * dx[t.var]);
            }
            let z = (&g - &g * df * &g) / w;
            (&z + z.transpose()) * 0.5
        })
        .collect();
    SubproblemSolution {
        objective: p.objective_value(&x),
        gap: p.barrier_degree() / w,
        barrier_weight: w,
        newton_steps,
        path_steps,
        linear_duals,
        exp_duals,
        linear_slacks,
        exp_slacks,
        lmi_duals,
        x,
    }
}

/// Finds a strictly feasible point by maximising -s over the problem with
/// every constraint relaxed by s.
pub fn phase_one(p: &ConicProblem, x0: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>, IpmError> {
    let n = p.num_vars;
    let s = n;
    let mut aug = ConicProblem::new(n + 1);
    aug.objective[s] = -1.0;
    for r in &p.linear {
        let mut coeffs = r.coeffs.clone();
        coeffs.push((s, -1.0));
        aug.linear.push(LinearRow { coeffs, rhs: r.rhs });
    }
    aug.linear.push(LinearRow {
        coeffs: vec![(s, -1.0)],
        rhs: 1.0,
    });
    for r in &p.exp_rows {
        let mut bound = r.bound.clone();
        bound.push((s, 1.0));
        aug.exp_rows.push(ExpRow {
            arg: r.arg,
            bound,
            offset: r.offset,
        });
    }
    for b in &p.lmis {
        let mut blk = b.clone();
        let id = blk.add_basis(DMatrix::identity(b.dim(), b.dim()));
        blk.add_term(s, id, 1.0);
        aug.lmis.push(blk);
    }
    let (scalar, lmi) = p.min_slack(x0);
    let violation = (-scalar).max(-lmi).max(0.0);
    let mut x: Vec<f64> = x0.to_vec();
    x.push(violation + 1.0);
    if !aug.is_strictly_feasible(&x) {
        return Err(IpmError::NotInterior);
    }
    let done = |z: &[f64]| z[s] < 0.0;
    let mut w = cfg.initial_mu;
    for _ in 0..cfg.max_path_steps {
        center(&aug, &mut x, w, cfg, &done)?;
        if x[s] < 0.0 {
            x.pop();
            return Ok(x);
        }
        if aug.barrier_degree() / w <= cfg.duality_gap_tol {
            return Err(IpmError::Infeasible(x[s]));
        }
        w *= cfg.barrier_increase;
    }
    Err(IpmError::Infeasible(x[s]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    /// max(1, ‖objective‖∞).
    pub scale: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }

    pub fn accepted(&self, rel_tol: f64) -> bool {
        self.max_residual() <= rel_tol * self.scale
    }
}

/// Residuals of the optimality conditions for the stored primal-dual pair.
pub fn kkt_residuals(p: &ConicProblem, sol: &SubproblemSolution) -> KktReport {
    let x = &sol.x;
    let mut grad = DVector::from_column_slice(&p.objective);
    let mut primal = 0.0f64;
    let mut comp = 0.0;
    for (r, &lam) in p.linear.iter().zip(&sol.linear_duals) {
        let s = p.linear_slack(r, x);
        primal = primal.max(-s);
        comp += lam * s;
        for &(j, a) in &r.coeffs {
            grad[j] -= lam * a;
        }
    }
    for (r, &lam) in p.exp_rows.iter().zip(&sol.exp_duals) {
        let s = p.exp_slack(r, x);
        primal = primal.max(-s);
        comp += lam * s;
        for &(j, b) in &r.bound {
            grad[j] += lam * b;
        }
        grad[r.arg] -= lam * x[r.arg].exp();
    }
    for (b, z) in p.lmis.iter().zip(&sol.lmi_duals) {
        let f = b.eval(x);
        primal = primal.max(-crate::linalg::min_eigenvalue(&f));
        comp += z.dot(&f);
        for t in &b.terms {
            grad[t.var] += t.coef * z.dot(&b.bases[t.basis]);
        }
    }
    let scale = p.objective.iter().fold(1.0f64, |a, &c| a.max(c.abs()));
    KktReport {
        stationarity: grad.amax(),
        primal: primal.max(0.0),
        complementarity: comp.abs(),
        scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// max t s.t. tI ⪯ diag(3, 1).
    fn eigen_sdp() -> ConicProblem {
        let mut p = ConicProblem::new(1);
        p.objective[0] = 1.0;
        let mut blk = LmiBlock::new(2);
        blk.constant = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let id = blk.add_basis(DMatrix::identity(2, 2));
        blk.add_term(0, id, -1.0);
        p.lmis.push(blk);
        p
    }

    #[test]
    fn smallest_eigenvalue_sdp() {
        let p = eigen_sdp();
        let sol = solve(&p, &[0.0], &SolverConfig::default()).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-7);
        assert!(sol.gap <= 1e-7);
        let kkt = kkt_residuals(&p, &sol);
        assert!(kkt.stationarity <= 1e-7, "{kkt:?}");
        assert!(kkt.accepted(1e-6));
    }

    #[test]
    fn kkt_detects_perturbation_and_infeasibility() {
        let p = eigen_sdp();
        let sol = solve(&p, &[0.0], &SolverConfig::default()).unwrap();
        let base = kkt_residuals(&p, &sol).max_residual();
        let mut moved = sol.clone();
        moved.x[0] += 1e-2;
        let bumped = kkt_residuals(&p, &moved);
        assert!(bumped.max_residual() - base >= 1e-3);
        assert!(bumped.primal > 0.0);
        let mut down = sol.clone();
        down.x[0] -= 1e-2;
        assert!(kkt_residuals(&p, &down).max_residual() - base >= 1e-3);
    }

    #[test]
    fn linear_program() {
        let mut p = ConicProblem::new(1);
        p.objective[0] = 1.0;
        p.linear.push(LinearRow { coeffs: vec![(0, 1.0)], rhs: 2.0 });
        p.linear.push(LinearRow { coeffs: vec![(0, 1.0)], rhs: 5.0 });
        let sol = solve(&p, &[0.0], &SolverConfig::default()).unwrap();
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-7);
        assert!(kkt_residuals(&p, &sol).accepted(1e-6));
    }

    #[test]
    fn exponential_row() {
        let mut p = ConicProblem::new(1);
        p.objective[0] = 1.0;
        p.exp_rows.push(ExpRow { arg: 0, bound: vec![], offset: 7.0 });
        let sol = solve(&p, &[0.0], &SolverConfig::default()).unwrap();
        assert_relative_eq!(sol.x[0], 7f64.ln(), epsilon = 1e-7);
        assert!(kkt_residuals(&p, &sol).accepted(1e-6));
    }

    #[test]
    fn exponential_row_with_variable_bound() {
        // max x - p s.t. exp(x) ≤ p: optimum at x = 0, p = 1
        let mut p = ConicProblem::new(2);
        p.objective = vec![1.0, -1.0];
        p.exp_rows.push(ExpRow { arg: 0, bound: vec![(1, 1.0)], offset: 0.0 });
        let sol = solve(&p, &[-1.0, 2.0], &SolverConfig::default()).unwrap();
        assert_relative_eq!(sol.x[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(sol.objective, -1.0, epsilon = 1e-7);
        assert!(kkt_residuals(&p, &sol).accepted(1e-6));
    }

    #[test]
    fn phase_one_recovers_interior() {
        let p = eigen_sdp();
        // t = 5 violates the LMI
        let sol = solve(&p, &[5.0], &SolverConfig::default()).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn infeasible_problem_reported() {
        let mut p = ConicProblem::new(1);
        p.linear.push(LinearRow { coeffs: vec![(0, 1.0)], rhs: -1.0 });
        p.linear.push(LinearRow { coeffs: vec![(0, -1.0)], rhs: -1.0 });
        assert!(matches!(solve(&p, &[0.0], &SolverConfig::default()), Err(IpmError::Infeasible(_))));
    }

    #[test]
    fn central_path_objective_increases() {
        let p = eigen_sdp();
        let cfg = SolverConfig::default();
        let mut x = vec![0.0];
        let mut last = f64::NEG_INFINITY;
        let mut w = 1.0;
        for _ in 0..8 {
            center(&p, &mut x, w, &cfg, &|_| false).unwrap();
            assert!(p.objective_value(&x) >= last);
            last = p.objective_value(&x);
            w *= 10.0;
        }
    }

    #[test]
    fn deterministic() {
        let p = eigen_sdp();
        let a = solve(&p, &[0.0], &SolverConfig::default()).unwrap();
        let b = solve(&p, &[0.0], &SolverConfig::default()).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut p = eigen_sdp();
        p.num_vars = 2;
        p.objective.push(0.0);
        let mut blk = LmiBlock::new(2);
        blk.constant = DMatrix::identity(2, 2) * 2.0;
        let b0 = blk.add_basis(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.0]));
        let b1 = blk.add_basis(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        blk.add_term(0, b0, 0.3);
        blk.add_term(1, b1, -0.7);
        blk.add_term(1, b0, 0.2);
        p.lmis.push(blk);
        p.exp_rows.push(ExpRow { arg: 1, bound: vec![(0, 1.0)], offset: 3.0 });
        p.linear.push(LinearRow { coeffs: vec![(0, 1.0), (1, 2.0)], rhs: 4.0 });
        let x = [0.2, -0.3];
        let (g, h) = p.barrier_derivatives(&x).unwrap();
        let e = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            xp[i] += e;
            let mut xm = x;
            xm[i] -= e;
            let fd = (p.barrier_value(&xp).unwrap() - p.barrier_value(&xm).unwrap()) / (2.0 * e);
            assert_relative_eq!(g[i], fd, epsilon = 1e-6);
            let (gp, _) = p.barrier_derivatives(&xp).unwrap();
            let (gm, _) = p.barrier_derivatives(&xm).unwrap();
            for j in 0..2 {
                assert_relative_eq!(h[(j, i)], (gp[j] - gm[j]) / (2.0 * e), epsilon = 1e-5);
            }
        }
    }
}
