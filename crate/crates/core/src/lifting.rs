//! Assembly of the convex CCCP subproblem over lifted beam matrices.
//!
//! Everything inside a subproblem is normalised: noise power is 1 and beam
//! matrices are measured in units of the squared per-LED swing limit.

use crate::ipm::{ConicProblem, ExpRow, LinearRow, LmiBlock};
use crate::linalg::{dominant_eigen, pack_symmetric, packed_index, packed_len, unpack_symmetric};
use crate::rates::Quadratic;
use crate::scene::ChannelEstimate;
use crate::sigdist::SignalDistribution;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LiftError {
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rsma,
    Sdma,
}

impl Scheme {
    pub fn has_common(self) -> bool {
        self == Scheme::Rsma
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rsma => "rsma",
            Scheme::Sdma => "sdma",
        }
    }
}

/// Normalised problem data shared by every subproblem of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub scheme: Scheme,
    pub h_hat: Vec<DVector<f64>>,
    pub v: Vec<f64>,
    pub tau: Vec<f64>,
    pub eps: Vec<f64>,
    pub amp: Vec<f64>,
    pub power_budget: f64,
    pub optical_limit_sq: f64,
    /// Physical beam matrix = normalised matrix · power_scale.
    pub power_scale: f64,
    pub noise: f64,
    pub multiplier_cap: f64,
}

impl Instance {
    pub fn new(
        scheme: Scheme,
        estimates: &[ChannelEstimate],
        dists: &[SignalDistribution],
        noise: f64,
        total_power: f64,
        optical_limit: f64,
    ) -> Result<Self, LiftError> {
        let k = estimates.len();
        if k == 0 || dists.len() != k + 1 {
            return Err(LiftError::Inconsistent(format!("{k} users with {} distributions", dists.len())));
        }
        let n = estimates[0].dim();
        if estimates.iter().any(|e| e.dim() != n) {
            return Err(LiftError::Inconsistent("channel dimensions differ".into()));
        }
        if !(noise > 0.0 && total_power > 0.0 && optical_limit > 0.0) {
            return Err(LiftError::Inconsistent(format!(
                "noise {noise}, power {total_power}, optical limit {optical_limit} must be positive"
            )));
        }
        // the tighter budget sets the unit, so traces stay O(1)
        let power_scale = (optical_limit * optical_limit).min(total_power);
        let gain = (power_scale / noise).sqrt();
        let tau: Vec<f64> = dists.iter().map(|d| d.tau).collect();
        let eps: Vec<f64> = dists.iter().map(|d| d.variance).collect();
        let power_budget = total_power / power_scale;
        let eps_min = eps.iter().cloned().fold(f64::INFINITY, f64::min);
        let tau_max = tau.iter().cloned().fold(0.0, f64::max);
        let h_hat: Vec<DVector<f64>> = estimates.iter().map(|e| &e.h_hat * gain).collect();
        let h_max = h_hat.iter().map(|h| h.norm_squared()).fold(0.0, f64::max);
        let amp: Vec<f64> = dists.iter().map(|d| d.amplitude).collect();
        let a_min = amp.iter().cloned().fold(f64::INFINITY, f64::min);
        // bound on ‖Φ‖ from either power row
        let trace_bound = (power_budget / eps_min).min(n as f64 / (a_min * a_min));
        Ok(Instance {
            scheme,
            v: estimates.iter().map(|e| e.v * gain * gain).collect(),
            h_hat,
            tau,
            eps,
            amp,
            power_budget,
            optical_limit_sq: optical_limit * optical_limit / power_scale,
            power_scale,
            noise,
            multiplier_cap: 1e7 * (1.0 + tau_max * trace_bound * h_max),
        })
    }

    pub fn num_users(&self) -> usize {
        self.h_hat.len()
    }

    pub fn num_leds(&self) -> usize {
        self.h_hat[0].len()
    }

    /// Streams carrying a beam matrix.
    pub fn streams(&self) -> std::ops::RangeInclusive<usize> {
        let first = if self.scheme.has_common() { 0 } else { 1 };
        first..=self.num_users()
    }

    /// Electric and optical row usage of `p` (normalised).
    pub fn power_usage(&self, p: &[DMatrix<f64>]) -> (f64, Vec<f64>) {
        let electric = self.streams().map(|i| self.eps[i] * p[i].trace()).sum();
        let optical = (0..self.num_leds())
            .map(|n| self.streams().map(|i| self.amp[i].powi(2) * p[i][(n, n)]).sum())
            .collect();
        (electric, optical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub phi: DMatrix<f64>,
    pub phi_bar: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_bar: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
}

/// Weighted sums of the beam matrices seen by user `user` (0-based).
pub fn aggregate_matrices(
    p: &[DMatrix<f64>],
    tau: &[f64],
    eps: &[f64],
    user: usize,
) -> Result<Aggregates, LiftError> {
    if p.len() < 2 || tau.len() != p.len() || eps.len() != p.len() || user + 1 >= p.len() {
        return Err(LiftError::Inconsistent(format!(
            "{} matrices, {} taus, {} variances, user {user}",
            p.len(),
            tau.len(),
            eps.len()
        )));
    }
    let n = p[0].nrows();
    if p.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(LiftError::Inconsistent("matrix sizes differ".into()));
    }
    let mut phi = &p[0] * tau[0];
    let mut phi_bar = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    let mut q_bar = DMatrix::zeros(n, n);
    for j in 1..p.len() {
        phi += &p[j] * tau[j];
        q += &p[j] * tau[j];
        phi_bar += &p[j] * (2.0 * PI * eps[j]);
        if j != user + 1 {
            q_bar += &p[j] * (2.0 * PI * eps[j]);
        }
    }
    let r = &q + &p[0] * tau[0];
    let r_bar = &q_bar + &p[0] * (2.0 * PI * eps[0]);
    Ok(Aggregates {
        phi,
        phi_bar,
        q,
        q_bar,
        r,
        r_bar,
    })
}

/// Numerator and denominator quadratics (in Δh) of one rate bound.
#[derive(Debug, Clone)]
pub struct RateForms {
    pub num: Quadratic,
    pub den: Quadratic,
}

fn quadratic(m: &DMatrix<f64>, around: &DMatrix<f64>, h: &DVector<f64>, noise: f64) -> Quadratic {
    let g = around * h;
    Quadratic {
        m: m.clone(),
        c: 2.0 * PI * noise + h.dot(&g),
        g,
    }
}

impl Aggregates {
    pub fn common_forms(&self, h: &DVector<f64>, noise: f64) -> RateForms {
        RateForms {
            num: quadratic(&self.phi, &self.phi, h, noise),
            den: quadratic(&self.phi_bar, &self.phi_bar, h, noise),
        }
    }

    pub fn private_forms(&self, h: &DVector<f64>, noise: f64) -> RateForms {
        RateForms {
            num: quadratic(&self.r, &self.q, h, noise),
            den: quadratic(&self.r_bar, &self.q_bar, h, noise),
        }
    }
}

/// Rate forms of user `user` at normalised matrices `p`: common (RSMA only) and private.
pub fn user_forms(inst: &Instance, p: &[DMatrix<f64>], user: usize) -> Result<(Option<RateForms>, RateForms), LiftError> {
    let agg = aggregate_matrices(p, &inst.tau, &inst.eps, user)?;
    let h = &inst.h_hat[user];
    let common = inst.scheme.has_common().then(|| agg.common_forms(h, 1.0));
    Ok((common, agg.private_forms(h, 1.0)))
}

/// `[uI + M, g; gᵀ, c - u v - p]`.
pub fn lower_bound_lmi(form: &Quadratic, v: f64, multiplier: f64, slack: f64) -> DMatrix<f64> {
    let n = form.g.len();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(&(&form.m + DMatrix::identity(n, n) * multiplier));
    out.view_mut((0, n), (n, 1)).copy_from(&form.g);
    out.view_mut((n, 0), (1, n)).copy_from(&form.g.transpose());
    out[(n, n)] = form.c - multiplier * v - slack;
    out
}

/// `[λI - M, -g; -gᵀ, -c - λ v + q]`.
pub fn upper_bound_lmi(form: &Quadratic, v: f64, multiplier: f64, slack: f64) -> DMatrix<f64> {
    let n = form.g.len();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * multiplier - &form.m));
    out.view_mut((0, n), (n, 1)).copy_from(&(-&form.g));
    out.view_mut((n, 0), (1, n)).copy_from(&(-form.g.transpose()));
    out[(n, n)] = -form.c - multiplier * v + slack;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupValues {
    pub x: f64,
    pub y: f64,
    pub p: f64,
    pub q: f64,
    pub u: f64,
    pub lambda: f64,
}

/// The four certificate blocks of one user, common pair first.
pub fn build_lmis(
    agg: &Aggregates,
    h_hat: &DVector<f64>,
    v: f64,
    noise: f64,
    common: &GroupValues,
    private: &GroupValues,
) -> [DMatrix<f64>; 4] {
    let c = agg.common_forms(h_hat, noise);
    let p = agg.private_forms(h_hat, noise);
    [
        lower_bound_lmi(&c.num, v, common.u, common.p),
        upper_bound_lmi(&c.den, v, common.lambda, common.q),
        lower_bound_lmi(&p.num, v, private.u, private.p),
        upper_bound_lmi(&p.den, v, private.lambda, private.q),
    ]
}

/// Tangent line of exp at `y_prev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentLine {
    pub anchor: f64,
    pub slope: f64,
}

impl TangentLine {
    pub fn eval(&self, y: f64) -> f64 {
        self.slope * (1.0 + y - self.anchor)
    }
}

pub fn linearize_exp_lower(y_prev: f64) -> TangentLine {
    TangentLine {
        anchor: y_prev,
        slope: y_prev.exp(),
    }
}

/// Tr(P) - σ₁(P).
pub fn rank_one_gap(p: &DMatrix<f64>) -> f64 {
    if p.nrows() == 0 {
        return 0.0;
    }
    (p.trace() - dominant_eigen(p).0).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub y_c: Vec<f64>,
    pub y_p: Vec<f64>,
    /// One unit vector per stream, common first.
    pub u_max: Vec<DVector<f64>>,
    pub rho: f64,
}

impl LinearizationPoint {
    pub fn validate(&self) -> Result<(), LiftError> {
        if !(self.rho < 0.0) {
            return Err(LiftError::Inconsistent(format!("rho must be negative, got {}", self.rho)));
        }
        if self.u_max.iter().any(|u| (u.norm() - 1.0).abs() > 1e-9) {
            return Err(LiftError::Inconsistent("u_max vectors must be unit".into()));
        }
        Ok(())
    }
}

/// Linearised penalty ρ Σ (Tr P_i - uᵢᵀ P_i uᵢ) over the given streams.
pub fn penalty_terms(p: &[DMatrix<f64>], point: &LinearizationPoint) -> f64 {
    point.rho
        * p.iter()
            .zip(&point.u_max)
            .map(|(m, u)| m.trace() - (u.transpose() * m * u)[0])
            .sum::<f64>()
}

/// Unit dominant eigenvector, with e₁ for a zero matrix.
pub fn dominant_direction(p: &DMatrix<f64>) -> DVector<f64> {
    let (val, vec) = dominant_eigen(p);
    if val > 0.0 {
        vec
    } else {
        let mut e = DVector::zeros(p.nrows());
        e[0] = 1.0;
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupVars {
    pub x: usize,
    pub y: usize,
    pub p: usize,
    pub q: usize,
    pub u: usize,
    pub lambda: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub leds: usize,
    /// Offset of each stream's packed matrix; None for an absent common stream.
    pub matrix: Vec<Option<usize>>,
    pub t: usize,
    pub c: Vec<usize>,
    pub common: Vec<GroupVars>,
    pub private: Vec<GroupVars>,
    pub total: usize,
}

impl VarLayout {
    fn new(scheme: Scheme, users: usize, leds: usize) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let at = next;
            next += n;
            at
        };
        let block = packed_len(leds);
        let matrix = (0..=users)
            .map(|i| (i > 0 || scheme.has_common()).then(|| take(block)))
            .collect();
        let t = take(1);
        let group = |take: &mut dyn FnMut(usize) -> usize| GroupVars {
            x: take(1),
            y: take(1),
            p: take(1),
            q: take(1),
            u: take(1),
            lambda: take(1),
        };
        let (c, common) = if scheme.has_common() {
            let c = (0..users).map(|_| take(1)).collect();
            let g = (0..users).map(|_| group(&mut take)).collect();
            (c, g)
        } else {
            (Vec::new(), Vec::new())
        };
        let private = (0..users).map(|_| group(&mut take)).collect();
        VarLayout {
            leds,
            matrix,
            t,
            c,
            common,
            private,
            total: next,
        }
    }

    pub fn entry(&self, stream: usize, a: usize, b: usize) -> Option<usize> {
        self.matrix[stream].map(|o| o + packed_index(self.leds, a, b))
    }
}

/// Values of every subproblem variable.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    /// One normalised matrix per stream; zero for an absent common stream.
    pub p: Vec<DMatrix<f64>>,
    pub t: f64,
    pub c: Vec<f64>,
    pub common: Vec<GroupValues>,
    pub private: Vec<GroupValues>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConstraintCounts {
    pub lmis: usize,
    pub psd: usize,
    pub exp_rows: usize,
    pub taylor: usize,
    pub link: usize,
    pub sign: usize,
    pub share_nonneg: usize,
    pub electric: usize,
    pub optical: usize,
    pub multiplier_nonneg: usize,
    pub multiplier_cap: usize,
}

impl ConstraintCounts {
    pub fn linear_rows(&self) -> usize {
        self.taylor + self.link + self.sign + self.share_nonneg + self.electric + self.optical + self.multiplier_nonneg
            + self.multiplier_cap
    }
}

#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub problem: ConicProblem,
    pub layout: VarLayout,
    pub instance: Instance,
    pub point: LinearizationPoint,
    pub counts: ConstraintCounts,
}

/// Symmetric unit matrix for packed entry (a, b).
fn entry_basis(n: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(a, b)] = 1.0;
    m[(b, a)] = 1.0;
    m
}

/// Per-user certificate block plus its basis bookkeeping.
struct CertBlock {
    blk: LmiBlock,
    congruence: Vec<usize>,
    padded: Vec<usize>,
    corner: usize,
    multiplier: usize,
}

impl CertBlock {
    fn new(h: &DVector<f64>, v: f64) -> Self {
        let n = h.len();
        let mut t = DMatrix::zeros(n, n + 1);
        t.view_mut((0, 0), (n, n)).fill_with_identity();
        t.set_column(n, h);
        let mut blk = LmiBlock::new(n + 1);
        let mut congruence = Vec::with_capacity(packed_len(n));
        let mut padded = Vec::with_capacity(packed_len(n));
        for a in 0..n {
            for b in a..n {
                let e = entry_basis(n, a, b);
                congruence.push(blk.add_basis(t.transpose() * &e * &t));
                let mut pad = DMatrix::zeros(n + 1, n + 1);
                pad.view_mut((0, 0), (n, n)).copy_from(&e);
                padded.push(blk.add_basis(pad));
            }
        }
        let mut corner_m = DMatrix::zeros(n + 1, n + 1);
        corner_m[(n, n)] = 1.0;
        let mut dv = DMatrix::identity(n + 1, n + 1);
        dv[(n, n)] = -v;
        let corner = blk.add_basis(corner_m);
        let multiplier = blk.add_basis(dv);
        CertBlock {
            blk,
            congruence,
            padded,
            corner,
            multiplier,
        }
    }

    fn add_matrix(&mut self, layout: &VarLayout, stream: usize, coef: f64, padded: bool) {
        let n = layout.leds;
        let Some(off) = layout.matrix[stream] else { return };
        for a in 0..n {
            for b in a..n {
                let idx = packed_index(n, a, b);
                let basis = if padded { self.padded[idx] } else { self.congruence[idx] };
                self.blk.add_term(off + idx, basis, coef);
            }
        }
    }

    fn finish(mut self) -> LmiBlock {
        // drop bases no term refers to
        let mut used = vec![false; self.blk.bases.len()];
        for t in &self.blk.terms {
            used[t.basis] = true;
        }
        let mut remap = vec![usize::MAX; used.len()];
        let mut bases = Vec::new();
        for (i, b) in self.blk.bases.drain(..).enumerate() {
            if used[i] {
                remap[i] = bases.len();
                bases.push(b);
            }
        }
        self.blk.bases = bases;
        for t in &mut self.blk.terms {
            t.basis = remap[t.basis];
        }
        self.blk
    }
}

pub fn assemble(inst: &Instance, point: &LinearizationPoint) -> Result<ConvexSubproblem, LiftError> {
    point.validate()?;
    let k = inst.num_users();
    let n = inst.num_leds();
    if point.y_p.len() != k || point.u_max.len() != k + 1 || (inst.scheme.has_common() && point.y_c.len() != k) {
        return Err(LiftError::Inconsistent("linearization point does not match the instance".into()));
    }
    if point.u_max.iter().any(|u| u.len() != n) {
        return Err(LiftError::Inconsistent("u_max dimension".into()));
    }
    let layout = VarLayout::new(inst.scheme, k, n);
    let mut prob = ConicProblem::new(layout.total);
    let mut counts = ConstraintCounts::default();
    let rsma = inst.scheme.has_common();
    let link = 1.0 / (2.0 * LN_2);
    let two_pi = 2.0 * PI;

    // objective t + ρ Σ (Tr P - uᵀPu)
    prob.objective[layout.t] = 1.0;
    for i in inst.streams() {
        let u = &point.u_max[i];
        for a in 0..n {
            for b in a..n {
                let trace = if a == b { 1.0 } else { 0.0 };
                let quad = if a == b { u[a] * u[a] } else { 2.0 * u[a] * u[b] };
                prob.objective[layout.entry(i, a, b).unwrap()] = point.rho * (trace - quad);
            }
        }
    }

    let row = |prob: &mut ConicProblem, coeffs: Vec<(usize, f64)>, rhs: f64| {
        prob.linear.push(LinearRow { coeffs, rhs });
    };

    for user in 0..k {
        let h = &inst.h_hat[user];
        let v = inst.v[user];
        let groups: Vec<(GroupVars, f64, bool)> = if rsma {
            vec![(layout.common[user], point.y_c[user], true), (layout.private[user], point.y_p[user], false)]
        } else {
            vec![(layout.private[user], point.y_p[user], false)]
        };
        for (g, y_bar, is_common) in groups {
            // rate linking
            let mut coeffs = vec![(g.x, -link), (g.y, link)];
            if is_common {
                coeffs.extend(layout.c.iter().map(|&c| (c, 1.0)));
            } else {
                coeffs.push((layout.t, 1.0));
                if rsma {
                    coeffs.push((layout.c[user], -1.0));
                }
            }
            row(&mut prob, coeffs, 0.0);
            counts.link += 1;
            // exp(x) ≤ p
            prob.exp_rows.push(ExpRow {
                arg: g.x,
                bound: vec![(g.p, 1.0)],
                offset: 0.0,
            });
            counts.exp_rows += 1;
            // q ≤ e^ȳ (1 + y - ȳ)
            let tl = linearize_exp_lower(y_bar);
            row(&mut prob, vec![(g.q, 1.0), (g.y, -tl.slope)], tl.slope * (1.0 - y_bar));
            counts.taylor += 1;
            row(&mut prob, vec![(g.y, 1.0), (g.x, -1.0)], 0.0);
            counts.sign += 1;
            for var in [g.u, g.lambda] {
                row(&mut prob, vec![(var, -1.0)], 0.0);
                counts.multiplier_nonneg += 1;
                row(&mut prob, vec![(var, 1.0)], inst.multiplier_cap);
                counts.multiplier_cap += 1;
            }

            // lower-bound certificate on the numerator
            let mut num = CertBlock::new(h, v);
            num.blk.constant[(n, n)] = two_pi;
            num.blk.add_term(g.u, num.multiplier, 1.0);
            num.blk.add_term(g.p, num.corner, -1.0);
            // upper-bound certificate on the denominator
            let mut den = CertBlock::new(h, v);
            den.blk.constant[(n, n)] = -two_pi;
            den.blk.add_term(g.lambda, den.multiplier, 1.0);
            den.blk.add_term(g.q, den.corner, 1.0);
            if is_common {
                for i in inst.streams() {
                    num.add_matrix(&layout, i, inst.tau[i], false);
                    if i > 0 {
                        den.add_matrix(&layout, i, -two_pi * inst.eps[i], false);
                    }
                }
            } else {
                for i in inst.streams() {
                    if i == 0 {
                        num.add_matrix(&layout, 0, inst.tau[0], true);
                        den.add_matrix(&layout, 0, -two_pi * inst.eps[0], true);
                    } else {
                        num.add_matrix(&layout, i, inst.tau[i], false);
                        if i != user + 1 {
                            den.add_matrix(&layout, i, -two_pi * inst.eps[i], false);
                        }
                    }
                }
            }
            prob.lmis.push(num.finish());
            prob.lmis.push(den.finish());
            counts.lmis += 2;
        }
        if rsma {
            row(&mut prob, vec![(layout.c[user], -1.0)], 0.0);
            counts.share_nonneg += 1;
        }
    }

    // electric row
    let mut electric = Vec::new();
    for i in inst.streams() {
        for a in 0..n {
            electric.push((layout.entry(i, a, a).unwrap(), inst.eps[i]));
        }
    }
    row(&mut prob, electric, inst.power_budget);
    counts.electric = 1;
    for led in 0..n {
        let coeffs = inst
            .streams()
            .map(|i| (layout.entry(i, led, led).unwrap(), inst.amp[i].powi(2)))
            .collect();
        row(&mut prob, coeffs, inst.optical_limit_sq);
        counts.optical += 1;
    }

    for i in inst.streams() {
        let mut blk = LmiBlock::new(n);
        for a in 0..n {
            for b in a..n {
                let basis = blk.add_basis(entry_basis(n, a, b));
                blk.add_term(layout.entry(i, a, b).unwrap(), basis, 1.0);
            }
        }
        prob.lmis.push(blk);
        counts.psd += 1;
    }

    Ok(ConvexSubproblem {
        problem: prob,
        layout,
        instance: inst.clone(),
        point: point.clone(),
        counts,
    })
}

impl ConvexSubproblem {
    pub fn pack(&self, s: &IterateState) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; l.total];
        for (i, off) in l.matrix.iter().enumerate() {
            if let Some(o) = off {
                let packed = pack_symmetric(&s.p[i]);
                x[*o..*o + packed.len()].copy_from_slice(&packed);
            }
        }
        x[l.t] = s.t;
        for (j, &c) in l.c.iter().enumerate() {
            x[c] = s.c[j];
        }
        let put = |x: &mut Vec<f64>, g: &GroupVars, v: &GroupValues| {
            x[g.x] = v.x;
            x[g.y] = v.y;
            x[g.p] = v.p;
            x[g.q] = v.q;
            x[g.u] = v.u;
            x[g.lambda] = v.lambda;
        };
        for (g, v) in l.common.iter().zip(&s.common) {
            put(&mut x, g, v);
        }
        for (g, v) in l.private.iter().zip(&s.private) {
            put(&mut x, g, v);
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> IterateState {
        let l = &self.layout;
        let n = l.leds;
        let p = l
            .matrix
            .iter()
            .map(|off| match off {
                Some(o) => unpack_symmetric(n, &x[*o..*o + packed_len(n)]),
                None => DMatrix::zeros(n, n),
            })
            .collect();
        let get = |g: &GroupVars| GroupValues {
            x: x[g.x],
            y: x[g.y],
            p: x[g.p],
            q: x[g.q],
            u: x[g.u],
            lambda: x[g.lambda],
        };
        IterateState {
            p,
            t: x[l.t],
            c: l.c.iter().map(|&c| x[c]).collect(),
            common: l.common.iter().map(get).collect(),
            private: l.private.iter().map(get).collect(),
        }
    }

    /// Penalised objective t + ρ Σ (Tr - σ₁) with the exact gap.
    pub fn exact_objective(&self, s: &IterateState) -> f64 {
        s.t + self.point.rho * self.instance.streams().map(|i| rank_one_gap(&s.p[i])).sum::<f64>()
    }
}
