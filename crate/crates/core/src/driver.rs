//! Penalised CCCP outer loop, beam extraction, the SDMA baseline and a grid
//! oracle for tiny instances.

use crate::ipm::{kkt_residuals, solve_from, strictly_feasible_start, IpmError, SolverConfig, SubproblemSolution};
use crate::lifting::{
    assemble, dominant_direction, rank_one_gap, user_forms, Instance, IterateState, LiftError, LinearizationPoint,
};
use crate::rates::{allocate_common, certified_rates, BeamformingSolution, Diagnostics, IterationRecord};
use crate::scene::{ChannelEstimate, SceneError, Scenario};
use crate::sigdist::{solve_distribution, DistError, SignalDistribution};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use thiserror::Error;

pub use crate::lifting::Scheme;

/// Streams below this share of the total trace count as switched off when
/// their rank gap is measured.
const INACTIVE_SHARE: f64 = 1e-3;
/// Relative KKT tolerance for an accepted subproblem solve.
const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverConfig {
    pub zeta: f64,
    pub rho_init: f64,
    pub rho_growth: f64,
    pub rho_patience: usize,
    pub rho_floor: f64,
    pub rank_tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    #[serde(skip)]
    pub solver: SolverConfig,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            zeta: 1e-4,
            rho_init: -0.01,
            rho_growth: 2.0,
            rho_patience: 5,
            rho_floor: -16.0,
            rank_tol: 1e-6,
            max_outer: 200,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |m: String| Err(DriverError::Config(m));
        if !(self.zeta > 0.0) {
            return bad(format!("zeta must be positive, got {}", self.zeta));
        }
        if !(-0.1..=-0.01).contains(&self.rho_init) {
            return bad(format!("rho_init must lie in [-0.1, -0.01], got {}", self.rho_init));
        }
        if !(self.rho_growth > 1.0) {
            return bad(format!("rho_growth must exceed 1, got {}", self.rho_growth));
        }
        if !(self.rho_floor <= self.rho_init) {
            return bad(format!("rho_floor {} is above rho_init {}", self.rho_floor, self.rho_init));
        }
        if !(self.rank_tol > 0.0) {
            return bad(format!("rank_tol must be positive, got {}", self.rank_tol));
        }
        if self.max_outer == 0 || self.rho_patience == 0 {
            return bad("max_outer and rho_patience must be at least 1".into());
        }
        self.solver.validate().map_err(DriverError::Config)
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Lifting(#[from] LiftError),
    #[error("no strictly feasible start: {0}")]
    Initialization(String),
    #[error("subproblem {iteration} failed: {source}")]
    Solver { iteration: usize, source: IpmError },
    #[error("stream {stream} has relative rank gap {gap:e}")]
    RankGap { stream: usize, gap: f64 },
    #[error("oracle: {0}")]
    Oracle(String),
}

/// Normalised instance plus the physical data needed to certify results.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub instance: Instance,
    pub estimates: Vec<ChannelEstimate>,
    pub dists: Vec<SignalDistribution>,
}

pub fn prepare(scenario: &Scenario, scheme: Scheme) -> Result<Prepared, DriverError> {
    scenario.validate()?;
    let params = &scenario.params;
    let estimates = scenario.estimates()?;
    let dist = solve_distribution(params.amplitude, params.variance)?;
    let dists = vec![dist; scenario.num_users() + 1];
    let instance = Instance::new(
        scheme,
        &estimates,
        &dists,
        params.noise_power,
        scenario.total_power,
        params.optical_limit(),
    )?;
    Ok(Prepared {
        instance,
        estimates,
        dists,
    })
}

/// Beam matrices and expansion point of the first subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct StartPoint {
    /// Normalised matrices, one per stream.
    pub p: Vec<DMatrix<f64>>,
    pub point: LinearizationPoint,
}

/// Scales `p` so both power rows use `fill` of their budget.
fn scale_to_budget(inst: &Instance, p: &mut [DMatrix<f64>], fill: f64) {
    let (electric, optical) = inst.power_usage(p);
    let worst = optical
        .iter()
        .map(|o| o / inst.optical_limit_sq)
        .fold(electric / inst.power_budget, f64::max);
    if worst > 0.0 {
        for m in p.iter_mut() {
            *m *= fill / worst;
        }
    }
}

/// Worst-case log-ratio of every rate group and the certified max-min value.
fn start_quality(inst: &Instance, p: &[DMatrix<f64>]) -> Option<(f64, f64)> {
    let mut margin = f64::INFINITY;
    let mut common = f64::INFINITY;
    let mut private = Vec::with_capacity(inst.num_users());
    for user in 0..inst.num_users() {
        let (c, pr) = user_forms(inst, p, user).ok()?;
        let v = inst.v[user];
        if let Some(c) = c {
            let r = (c.num.min_over_ball(v) / c.den.max_over_ball(v)).ln();
            margin = margin.min(r);
            common = common.min(r / (2.0 * LN_2));
        }
        let r = (pr.num.min_over_ball(v) / pr.den.max_over_ball(v)).ln();
        margin = margin.min(r);
        private.push(r / (2.0 * LN_2));
    }
    let t = if inst.scheme.has_common() {
        allocate_common(common, &private).1
    } else {
        private.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    (margin.is_finite()).then_some((t, margin))
}

/// Expansion point at `p`: y from the exact worst-case denominators.
pub fn expansion_point(inst: &Instance, p: &[DMatrix<f64>], rho: f64) -> Result<LinearizationPoint, DriverError> {
    let mut y_c = Vec::new();
    let mut y_p = Vec::new();
    for user in 0..inst.num_users() {
        let (c, pr) = user_forms(inst, p, user)?;
        let v = inst.v[user];
        if let Some(c) = c {
            y_c.push(c.den.max_over_ball(v).ln());
        }
        y_p.push(pr.den.max_over_ball(v).ln());
    }
    Ok(LinearizationPoint {
        y_c,
        y_p,
        u_max: p.iter().map(dominant_direction).collect(),
        rho,
    })
}

fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}

fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        DVector::from_element(v.len(), 1.0 / (v.len() as f64).sqrt())
    }
}

/// Regularised zero-forcing directions, one per user.
fn rzf_directions(h: &[DVector<f64>], reg: f64) -> Vec<DVector<f64>> {
    let n = h[0].len();
    let k = h.len();
    let hm = DMatrix::from_fn(n, k, |i, j| h[j][i]);
    let gram = hm.transpose() * &hm;
    let load = reg * gram.trace() / k as f64;
    let inv = (gram + DMatrix::identity(k, k) * load)
        .cholesky()
        .map_or_else(|| DMatrix::identity(k, k), |c| c.inverse());
    let w = hm * inv;
    (0..k).map(|j| unit(w.column(j).into_owned())).collect()
}

/// Private powers (summing to one) balancing the worst-case private bounds
/// for fixed directions. With gains bounded per beam over each user's ball,
/// user k's bound is positive when
/// `τ_k own_min > Σ_j (2π ε_j inter_max - τ_j inter_min)`; the ratio of the
/// two sides is balanced by power iteration.
fn balanced_powers(inst: &Instance, dirs: &[DVector<f64>]) -> Vec<f64> {
    let k = inst.num_users();
    let gain = |a: usize, b: usize| {
        let x = inst.h_hat[a].dot(&dirs[b]).abs();
        let r = inst.v[a].sqrt();
        let low = (x - r).max(0.0).powi(2);
        if a == b {
            inst.tau[b + 1] * low
        } else {
            2.0 * PI * inst.eps[b + 1] * (x + r).powi(2) - inst.tau[b + 1] * low
        }
    };
    let mut q = vec![1.0 / k as f64; k];
    if (0..k).any(|a| gain(a, a) <= 0.0) {
        return q;
    }
    for _ in 0..200 {
        let next: Vec<f64> = (0..k)
            .map(|a| (0..k).filter(|&b| b != a).map(|b| gain(a, b) * q[b]).sum::<f64>() / gain(a, a))
            .collect();
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            break;
        }
        q = next.iter().map(|v| v / total).collect();
    }
    q
}

/// Adds `share` of the mean diagonal to every active stream.
fn add_ridge(inst: &Instance, p: &mut [DMatrix<f64>], share: f64) {
    let n = inst.num_leds();
    let total: f64 = inst.streams().map(|i| p[i].trace()).sum();
    let ridge = share * total.max(1e-12) / (n * inst.streams().count()) as f64;
    for i in inst.streams() {
        p[i] += DMatrix::identity(n, n) * ridge;
    }
}

/// Channel-matched starting matrices. Several splits of power between the
/// common and private streams are tried; the certified best one is kept.
pub fn initialize(inst: &Instance, rho: f64) -> Result<StartPoint, DriverError> {
    let k = inst.num_users();
    let n = inst.num_leds();
    let avg = unit(inst.h_hat.iter().fold(DVector::zeros(n), |a, h| a + h));
    let mrt: Vec<DVector<f64>> = inst.h_hat.iter().map(|h| unit(h.clone())).collect();
    let mut candidates: Vec<Vec<DMatrix<f64>>> = Vec::new();
    // equal-weight matched start
    candidates.push(vec![outer(&avg); k + 1]);
    let common_shares: &[f64] = if inst.scheme.has_common() { &[0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.8] } else { &[0.0] };
    let mut direction_sets = vec![mrt];
    // regularisation from near zero-forcing to near matched filtering
    direction_sets.extend((-12..=4).map(|e| rzf_directions(&inst.h_hat, 10f64.powf(0.5 * e as f64))));
    for dirs in direction_sets {
        let equal = vec![1.0 / k as f64; k];
        for weights in [equal, balanced_powers(inst, &dirs)] {
            for &w0 in common_shares {
                let mut p = vec![outer(&avg) * w0];
                p.extend(dirs.iter().zip(&weights).map(|(d, w)| outer(d) * ((1.0 - w0) * w)));
                candidates.push(p);
            }
        }
    }
    if inst.scheme.has_common() {
        let mut p = vec![outer(&avg)];
        p.extend((0..k).map(|_| DMatrix::zeros(n, n)));
        candidates.push(p);
    }

    let mut best: Option<(f64, Vec<DMatrix<f64>>)> = None;
    for mut p in candidates {
        if !inst.scheme.has_common() {
            p[0].fill(0.0);
        }
        add_ridge(inst, &mut p, 1e-5);
        scale_to_budget(inst, &mut p, 0.5);
        if let Some((t, margin)) = start_quality(inst, &p) {
            log::trace!("start candidate t {t:.4e} margin {margin:.3e}");
            if margin > 0.0 && best.as_ref().map_or(true, |(bt, _)| t > *bt) {
                best = Some((t, p));
            }
        }
    }
    let (_, p) = best.ok_or_else(|| {
        DriverError::Initialization("every candidate start has a nonpositive worst-case rate".into())
    })?;
    let point = expansion_point(inst, &p, rho)?;
    Ok(StartPoint { p, point })
}

/// Start built from physical beams, e.g. the solution of a neighbouring scenario.
pub fn initialize_from_beams(inst: &Instance, beams: &[DVector<f64>], rho: f64) -> Result<StartPoint, DriverError> {
    let k = inst.num_users();
    let n = inst.num_leds();
    if beams.len() != k + 1 || beams.iter().any(|b| b.len() != n) {
        return Err(DriverError::Initialization("hint beams do not match the scenario".into()));
    }
    let unscale = 1.0 / inst.power_scale.sqrt();
    let mut p: Vec<DMatrix<f64>> = beams.iter().map(|b| outer(&(b * unscale))).collect();
    if !inst.scheme.has_common() {
        p[0].fill(0.0);
    }
    add_ridge(inst, &mut p, 1e-4);
    scale_to_budget(inst, &mut p, 0.95);
    match start_quality(inst, &p) {
        Some((_, margin)) if margin > 0.0 => Ok(StartPoint {
            point: expansion_point(inst, &p, rho)?,
            p,
        }),
        _ => Err(DriverError::Initialization("hint beams have a nonpositive worst-case rate".into())),
    }
}

/// Rank gap of each stream relative to its trace; nearly switched-off streams
/// are measured against a fixed share of the total trace instead.
pub fn relative_rank_gaps(inst: &Instance, p: &[DMatrix<f64>]) -> Vec<f64> {
    let total: f64 = inst.streams().map(|i| p[i].trace()).sum();
    (0..p.len())
        .map(|i| {
            if !inst.streams().contains(&i) {
                return 0.0;
            }
            let gap = rank_one_gap(&p[i]);
            let reference = p[i].trace().max(INACTIVE_SHARE * total);
            if reference > 0.0 {
                gap / reference
            } else {
                0.0
            }
        })
        .collect()
}

/// Dominant-eigenvector beams, sign-normalised and scaled by one global
/// factor until the absolute-value optical row and the electric row hold.
/// Returns physical beams and the applied scale.
pub fn extract_beamformers(
    inst: &Instance,
    p: &[DMatrix<f64>],
    rank_tol: f64,
) -> Result<(Vec<DVector<f64>>, f64), DriverError> {
    for (stream, &gap) in relative_rank_gaps(inst, p).iter().enumerate() {
        if gap > rank_tol {
            return Err(DriverError::RankGap { stream, gap });
        }
    }
    let n = inst.num_leds();
    let mut beams: Vec<DVector<f64>> = p
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if !inst.streams().contains(&i) {
                return DVector::zeros(n);
            }
            let (val, vec) = crate::linalg::dominant_eigen(m);
            if val <= 0.0 {
                return DVector::zeros(n);
            }
            let lead = vec.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            vec * (val.sqrt() * lead.signum())
        })
        .collect();
    let electric: f64 = beams.iter().zip(&inst.eps).map(|(b, e)| e * b.norm_squared()).sum();
    let optical = (0..n)
        .map(|led| beams.iter().zip(&inst.amp).map(|(b, a)| a * b[led].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut scale = 1.0f64;
    if optical > inst.optical_limit_sq.sqrt() {
        scale = scale.min(inst.optical_limit_sq.sqrt() / optical);
    }
    if electric > inst.power_budget {
        scale = scale.min((inst.power_budget / electric).sqrt());
    }
    let physical = scale * inst.power_scale.sqrt();
    for b in &mut beams {
        *b *= physical;
    }
    Ok((beams, scale))
}

/// Certified solution at physical `beams`.
pub fn certify(prep: &Prepared, beams: Vec<DVector<f64>>, diagnostics: Diagnostics) -> BeamformingSolution {
    let noise = prep.instance.noise;
    let rates = certified_rates(&prep.estimates, &beams, &prep.dists, noise);
    let rc = rates.common.iter().cloned().fold(f64::INFINITY, f64::min);
    let (shares, t, common_bound) = if prep.instance.scheme.has_common() {
        let (shares, t) = allocate_common(rc, &rates.private);
        (shares, t, rc)
    } else {
        let t = rates.private.iter().cloned().fold(f64::INFINITY, f64::min);
        (vec![0.0; rates.private.len()], t, 0.0)
    };
    let mut beams = beams.into_iter();
    BeamformingSolution {
        common_beam: beams.next().unwrap(),
        private_beams: beams.collect(),
        common_shares: shares,
        mmf_value: t,
        per_user_private: rates.private,
        common_bound,
        diagnostics,
    }
}

/// Reference matrices for the analytic start of the next subproblem: a
/// slightly shrunk copy of `p` with a ridge proportional to each trace.
fn shrink_toward_interior(inst: &Instance, p: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = inst.num_leds();
    let total: f64 = inst.streams().map(|i| p[i].trace()).sum();
    p.iter()
        .enumerate()
        .map(|(i, m)| {
            if inst.streams().contains(&i) {
                let ridge = (1e-4 * m.trace() + 1e-9 * total) / n as f64;
                m * 0.98 + DMatrix::identity(n, n) * ridge
            } else {
                m.clone()
            }
        })
        .collect()
}

fn solve_subproblem(
    sub: &crate::lifting::ConvexSubproblem,
    reference: &[DMatrix<f64>],
    previous: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<SubproblemSolution, IpmError> {
    let analytic = strictly_feasible_start(sub, reference);
    let first = match &analytic {
        Ok(x) => solve_from(&sub.problem, x, cfg),
        Err(e) => Err(e.clone()),
    };
    match (first, previous) {
        (Ok(sol), _) => Ok(sol),
        (Err(e), Some(prev)) => {
            log::debug!("analytic start failed ({e}); restarting from the previous iterate");
            let patient = SolverConfig {
                max_newton: cfg.max_newton * 10,
                ..cfg.clone()
            };
            solve_from(&sub.problem, prev, &patient)
        }
        (Err(e), None) => Err(e),
    }
}

pub fn run_mmf(scenario: &Scenario, config: &DriverConfig) -> Result<BeamformingSolution, DriverError> {
    run_scheme(scenario, config, Scheme::Rsma, None)
}

pub fn run_sdma(scenario: &Scenario, config: &DriverConfig) -> Result<BeamformingSolution, DriverError> {
    run_scheme(scenario, config, Scheme::Sdma, None)
}

/// Full pipeline for `scheme`. `hint` (physical beams, common first) replaces
/// the built-in initialisation when given.
pub fn run_scheme(
    scenario: &Scenario,
    config: &DriverConfig,
    scheme: Scheme,
    hint: Option<&[DVector<f64>]>,
) -> Result<BeamformingSolution, DriverError> {
    config.validate()?;
    let prep = prepare(scenario, scheme)?;
    let inst = &prep.instance;
    let start = match hint {
        Some(beams) => initialize_from_beams(inst, beams, config.rho_init)?,
        None => initialize(inst, config.rho_init)?,
    };
    let (p, diag) = cccp(inst, start, config)?;
    let tol = if diag.warning.is_some() { f64::INFINITY } else { config.rank_tol };
    let (beams, scale) = extract_beamformers(inst, &p, tol)?;
    Ok(certify(&prep, beams, Diagnostics { scale, ..diag }))
}

/// Outer loop. Returns the final normalised matrices and diagnostics.
pub fn cccp(
    inst: &Instance,
    start: StartPoint,
    config: &DriverConfig,
) -> Result<(Vec<DMatrix<f64>>, Diagnostics), DriverError> {
    let mut point = start.point;
    let mut reference = start.p;
    let mut rho = config.rho_init;
    let mut previous: Option<(Vec<f64>, IterateState)> = None;
    let mut diag = Diagnostics::default();
    let mut since_escalation = 0;
    let mut converged = false;
    let mut last_state: Option<IterateState> = None;

    for iteration in 0..config.max_outer {
        point.rho = rho;
        let sub = assemble(inst, &point)?;
        let sol = solve_subproblem(&sub, &reference, previous.as_ref().map(|(x, _)| x.as_slice()), &config.solver)
            .map_err(|source| DriverError::Solver { iteration, source })?;
        let kkt = kkt_residuals(&sub.problem, &sol);
        let rel = kkt.max_residual() / kkt.scale;
        diag.kkt_residual = diag.kkt_residual.max(rel);
        if !kkt.accepted(KKT_TOL) {
            log::warn!("subproblem {iteration}: relative KKT residual {rel:e} ({kkt:?})");
        }
        diag.newton_steps += sol.newton_steps;

        let mut x = sol.x;
        let mut state = sub.unpack(&x);
        let mut objective = sub.exact_objective(&state);
        let previous_objective = match &previous {
            Some((px, ps)) => {
                let before = sub.exact_objective(ps);
                if objective < before {
                    // the solve landed below the feasible previous iterate; keep it
                    log::debug!("subproblem {iteration}: objective {objective} below previous {before}");
                    x = px.clone();
                    state = ps.clone();
                    objective = before;
                }
                Some(before)
            }
            None => None,
        };
        let gaps = relative_rank_gaps(inst, &state.p);
        let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
        let penalty = rho * inst.streams().map(|i| rank_one_gap(&state.p[i])).sum::<f64>();
        diag.trace.push(IterationRecord {
            iteration,
            t: state.t,
            penalty,
            objective,
            previous_objective,
            max_rank_gap: max_gap,
            rho,
            newton_steps: sol.newton_steps,
        });
        log::info!(
            "iter {iteration}: t {:.6} penalty {penalty:.3e} gap {max_gap:.3e} rho {rho} newton {}",
            state.t,
            sol.newton_steps
        );

        let stalled = previous_objective.is_some_and(|b| (objective - b).abs() < config.zeta);
        let rank_ok = max_gap <= config.rank_tol;
        if stalled && rank_ok {
            converged = true;
            last_state = Some(state);
            break;
        }
        since_escalation += 1;
        if !rank_ok && (stalled || since_escalation >= config.rho_patience) {
            if stalled && rho <= config.rho_floor {
                diag.warning = Some(format!("rank gap {max_gap:e} remains at the penalty floor"));
                last_state = Some(state);
                break;
            }
            rho = (rho * config.rho_growth).max(config.rho_floor);
            since_escalation = 0;
        }

        point = LinearizationPoint {
            y_c: state.common.iter().map(|g| g.y).collect(),
            y_p: state.private.iter().map(|g| g.y).collect(),
            u_max: state.p.iter().map(dominant_direction).collect(),
            rho,
        };
        reference = shrink_toward_interior(inst, &state.p);
        last_state = Some(state.clone());
        previous = Some((x, state));
    }

    let state = last_state.expect("max_outer is at least 1");
    if !converged && diag.warning.is_none() {
        diag.warning = Some(format!("stopped after {} outer iterations", config.max_outer));
    }
    diag.outer_iterations = diag.trace.len();
    diag.rank_gaps = relative_rank_gaps(inst, &state.p);
    diag.penalty = diag.trace.last().map_or(0.0, |r| r.penalty);
    diag.relaxed_value = state.t;
    Ok((state.p, diag))
}

/// Half-log2 rate bounds for K = 1 and exact CSIT written out directly.
fn single_user_rate(gains: (f64, f64), dist: &SignalDistribution, noise: f64) -> f64 {
    let (g0, g1) = (gains.0 * gains.0, gains.1 * gains.1);
    let s = 2.0 * PI * noise;
    let common = 0.5 * ((s + dist.tau * (g0 + g1)) / (s + 2.0 * PI * dist.variance * g1)).log2();
    let private = 0.5 * ((s + dist.tau * g1) / s).log2();
    common.max(0.0) + private.max(0.0)
}

fn grid(max: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| max * i as f64 / (points - 1) as f64)
}

/// Exhaustive search over beam directions and magnitudes for one user and at
/// most two LEDs with exact CSIT, under the absolute-value optical row and the
/// electric row.
pub fn brute_force_oracle(scenario: &Scenario, scheme: Scheme, grid_points: usize) -> Result<f64, DriverError> {
    let n = scenario.num_leds();
    if n == 0 || n > 2 || scenario.num_users() != 1 {
        return Err(DriverError::Oracle(format!("needs 1 user and at most 2 LEDs, got {} and {n}", scenario.num_users())));
    }
    if scenario.user_radius != 0.0 {
        return Err(DriverError::Oracle("needs exact CSIT (radius 0)".into()));
    }
    if grid_points < 2 {
        return Err(DriverError::Oracle("grid needs at least 2 points".into()));
    }
    let params = &scenario.params;
    params.validate()?;
    let h = scenario.channel(&scenario.user_centers[0])?;
    let dist = solve_distribution(params.amplitude, params.variance)?;
    let limit = params.optical_limit();
    let amp = params.amplitude;
    let budget = (scenario.total_power.max(0.0) / params.variance).sqrt();

    let angles: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..grid_points).map(|i| PI * i as f64 / grid_points as f64).collect()
    };
    let dir = |a: f64| -> Vec<f64> {
        if n == 1 {
            vec![1.0]
        } else {
            vec![a.cos(), a.sin()]
        }
    };
    let reach = |d: &[f64], used: &[f64], radius_used: f64| -> f64 {
        let mut r = (budget * budget - radius_used * radius_used).max(0.0).sqrt();
        for led in 0..n {
            if d[led].abs() > 0.0 {
                r = r.min(((limit - used[led]) / (amp * d[led].abs())).max(0.0));
            }
        }
        r
    };
    let common_angles: Vec<f64> = if scheme == Scheme::Rsma { angles.clone() } else { vec![0.0] };
    let mut best = 0.0f64;
    for &a0 in &common_angles {
        let d0 = dir(a0);
        let r0_max = if scheme == Scheme::Rsma { reach(&d0, &[0.0; 2], 0.0) } else { 0.0 };
        let g0_unit: f64 = d0.iter().zip(h.iter()).map(|(d, h)| d * h).sum();
        let r0_points = if scheme == Scheme::Rsma { grid_points } else { 1 };
        for r0 in grid(r0_max, r0_points.max(2)).take(r0_points) {
            let used: Vec<f64> = d0.iter().map(|d| amp * r0 * d.abs()).collect();
            for &a1 in &angles {
                let d1 = dir(a1);
                let r1_max = reach(&d1, &used, r0);
                let g1_unit: f64 = d1.iter().zip(h.iter()).map(|(d, h)| d * h).sum();
                for r1 in grid(r1_max, grid_points) {
                    best = best.max(single_user_rate((r0 * g0_unit, r1 * g1_unit), &dist, params.noise_power));
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{LedParams, Point3};

    fn tiny(leds: usize, power: f64) -> Scenario {
        let mut params = LedParams::default();
        params.current_min = 15.0;
        params.current_max = 20.0;
        params.dc_bias = 17.5;
        Scenario {
            led_positions: [Point3::new(1.0, 1.0, 4.5), Point3::new(2.0, 1.5, 4.5)][..leds].to_vec(),
            user_centers: vec![Point3::new(1.3, 1.2, 1.7)],
            user_radius: 0.0,
            params,
            total_power: power,
        }
    }

    #[test]
    fn config_validation() {
        assert!(DriverConfig::default().validate().is_ok());
        for cfg in [
            DriverConfig { zeta: 0.0, ..Default::default() },
            DriverConfig { rho_init: -0.5, ..Default::default() },
            DriverConfig { rho_growth: 1.0, ..Default::default() },
            DriverConfig { rank_tol: 0.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn extraction_recovers_rank_one() {
        let s = tiny(2, 1.0);
        let prep = prepare(&s, Scheme::Rsma).unwrap();
        let inst = &prep.instance;
        let p0 = DVector::from_vec(vec![-0.2, 0.1]);
        let p1 = DVector::from_vec(vec![0.05, 0.15]);
        let (beams, scale) = extract_beamformers(inst, &[outer(&p0), outer(&p1)], 1e-6).unwrap();
        assert_eq!(scale, 1.0);
        let l = inst.power_scale.sqrt();
        assert!((&beams[0] + &p0 * l).amax() <= 1e-12 * l);
        assert!((&beams[1] - &p1 * l).amax() <= 1e-12 * l);
        // a full-rank matrix is rejected
        assert!(matches!(
            extract_beamformers(inst, &[DMatrix::identity(2, 2) * 0.01, outer(&p1)], 1e-6),
            Err(DriverError::RankGap { stream: 0, .. })
        ));
    }

    #[test]
    fn extraction_enforces_absolute_optical_row() {
        let s = tiny(2, 1e6);
        let prep = prepare(&s, Scheme::Rsma).unwrap();
        let inst = &prep.instance;
        // each beam alone meets the quadratic row, together they break the absolute row
        let a = inst.amp[0];
        let p0 = DVector::from_vec(vec![0.7 / a, 0.0]);
        let p1 = DVector::from_vec(vec![0.7 / a, 0.0]);
        let (beams, scale) = extract_beamformers(inst, &[outer(&p0), outer(&p1)], 1e-6).unwrap();
        assert!((scale - 1.0 / 1.4).abs() < 1e-12);
        let limit = s.params.optical_limit();
        let used: f64 = beams.iter().map(|b| s.params.amplitude * b[0].abs()).sum();
        assert!(used <= limit * (1.0 + 1e-12));
    }

    #[test]
    fn initialize_respects_budget_with_headroom() {
        let s = tiny(2, 1e-2);
        for scheme in [Scheme::Rsma, Scheme::Sdma] {
            let prep = prepare(&s, scheme).unwrap();
            let inst = &prep.instance;
            let start = initialize(inst, -0.01).unwrap();
            let (e, o) = inst.power_usage(&start.p);
            assert!(inst.power_budget / e >= 1.9 && o.iter().all(|&o| inst.optical_limit_sq / o >= 1.9));
            for i in inst.streams() {
                assert!(crate::linalg::min_eigenvalue(&start.p[i]) > 0.0);
            }
        }
    }

    #[test]
    fn oracle_zero_budget_and_refinement() {
        let mut s = tiny(2, 0.0);
        assert_eq!(brute_force_oracle(&s, Scheme::Rsma, 8).unwrap(), 0.0);
        s.total_power = 1e-3;
        let coarse = brute_force_oracle(&s, Scheme::Rsma, 24).unwrap();
        let fine = brute_force_oracle(&s, Scheme::Rsma, 48).unwrap();
        assert!(fine >= coarse * (1.0 - 1e-12));
        assert!((fine - coarse) / fine < 5e-3, "{coarse} {fine}");
        assert!(brute_force_oracle(&tiny(2, 1.0), Scheme::Rsma, 1).is_err());
    }

    #[test]
    fn oracle_single_led_matches_scan() {
        let s = tiny(1, 3e-4);
        let params = &s.params;
        let h = s.channel(&s.user_centers[0]).unwrap()[0];
        let d = solve_distribution(params.amplitude, params.variance).unwrap();
        let r_max = (params.optical_limit() / params.amplitude).min((s.total_power / params.variance).sqrt());
        // with one LED both beams share one magnitude budget
        let mut scan = 0.0f64;
        for i in 0..=4000 {
            let r0 = r_max * i as f64 / 4000.0;
            let r1 = (r_max - r0).min((s.total_power / params.variance - r0 * r0).max(0.0).sqrt());
            scan = scan.max(single_user_rate((r0 * h, r1 * h), &d, params.noise_power));
        }
        let oracle = brute_force_oracle(&s, Scheme::Rsma, 64).unwrap();
        assert!((oracle - scan).abs() / scan < 1e-2, "{oracle} {scan}");
    }
}
