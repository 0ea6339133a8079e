//! Analytic strictly feasible points for the CCCP subproblems.

use super::IpmError;
use crate::lifting::{user_forms, ConvexSubproblem, GroupValues, IterateState, RateForms};
use crate::linalg::{min_eigenvalue, sorted_eigen, trust_region_min};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::LN_2;

/// `gᵀ (shift·I + sign·M)⁻¹ g` by eigendecomposition.
fn shifted_inverse_form(m: &DMatrix<f64>, g: &DVector<f64>, shift: f64, sign: f64) -> f64 {
    let (vals, vecs) = sorted_eigen(m);
    vals.iter()
        .enumerate()
        .map(|(i, &l)| {
            let proj = vecs.column(i).dot(g);
            proj * proj / (shift + sign * l)
        })
        .sum()
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sorted_eigen(m).0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Multiplier just above the optimal one, clamped below `cap`.
fn pick_multiplier(optimal: f64, floor: f64, cap: f64) -> f64 {
    let base = if optimal.is_finite() { optimal.max(floor) } else { 0.5 * cap };
    let scale = 1.0 + base.abs();
    (base * (1.0 + 1e-6) + 1e-9 * scale).min(0.5 * cap).max(floor + 1e-9 * scale)
}

/// Slack values of one rate group certified at the chosen multipliers.
fn group_start(forms: &RateForms, v: f64, y_bar: f64, cap: f64) -> Result<GroupValues, IpmError> {
    let num = &forms.num;
    let den = &forms.den;
    let lo = trust_region_min(&num.m, &num.g, v);
    let u = pick_multiplier(lo.multiplier, 0.0, cap);
    let num_bound = num.c - u * v - shifted_inverse_form(&num.m, &num.g, u, 1.0);

    let neg_m = -&den.m;
    let neg_g = -&den.g;
    let hi = trust_region_min(&neg_m, &neg_g, v);
    let lambda = pick_multiplier(hi.multiplier, largest_eigenvalue(&den.m).max(0.0), cap);
    let den_bound = den.c + lambda * v + shifted_inverse_form(&den.m, &den.g, lambda, -1.0);

    if !(num_bound > 0.0 && den_bound > 0.0 && num_bound > den_bound) {
        log::debug!("start rejected: numerator bound {num_bound}, denominator bound {den_bound}");
        return Err(IpmError::NotInterior);
    }
    let ratio = (num_bound / den_bound).ln();
    let delta = (ratio / 8.0).min(1e-2);
    let q = den_bound * (1.0 + delta);
    let p_max = num_bound * (1.0 - delta);
    // smallest y allowed by the tangent row
    let a = y_bar - 1.0 + q * (-y_bar).exp();
    let b = p_max.ln();
    if !(a < b) {
        log::debug!("start rejected: tangent row needs y > {a}, numerator allows {b}");
        return Err(IpmError::NotInterior);
    }
    let w = b - a;
    Ok(GroupValues {
        x: a + 0.5 * w,
        y: a + 0.25 * w,
        p: (a + 0.75 * w).exp(),
        q,
        u,
        lambda,
    })
}

/// Builds a strictly feasible point of `sub` whose beam matrices are `p_ref`
/// (normalised, one per stream). Slacks and multipliers come from the exact
/// worst-case bounds at `p_ref`.
pub fn strictly_feasible_start(sub: &ConvexSubproblem, p_ref: &[DMatrix<f64>]) -> Result<Vec<f64>, IpmError> {
    let inst = &sub.instance;
    let k = inst.num_users();
    if p_ref.len() != k + 1 {
        return Err(IpmError::Degenerate(format!("{} reference matrices for {k} users", p_ref.len())));
    }
    let mut p: Vec<DMatrix<f64>> = p_ref.to_vec();
    if !inst.scheme.has_common() {
        p[0].fill(0.0);
    }
    for i in inst.streams() {
        if min_eigenvalue(&p[i]) <= 0.0 {
            return Err(IpmError::NotInterior);
        }
    }
    let (electric, optical) = inst.power_usage(&p);
    if electric >= inst.power_budget || optical.iter().any(|&o| o >= inst.optical_limit_sq) {
        return Err(IpmError::NotInterior);
    }

    let cap = inst.multiplier_cap;
    let mut common = Vec::new();
    let mut private = Vec::with_capacity(k);
    for user in 0..k {
        let (c_forms, p_forms) = user_forms(inst, &p, user).map_err(|e| IpmError::Degenerate(e.to_string()))?;
        if let Some(f) = c_forms {
            common.push(group_start(&f, inst.v[user], sub.point.y_c[user], cap)?);
        }
        private.push(group_start(&p_forms, inst.v[user], sub.point.y_p[user], cap)?);
    }
    let link = |g: &GroupValues| (g.x - g.y) / (2.0 * LN_2);
    let c = if inst.scheme.has_common() {
        let rc = common.iter().map(link).fold(f64::INFINITY, f64::min);
        vec![rc / (2.0 * k as f64); k]
    } else {
        Vec::new()
    };
    let share = |j: usize| c.get(j).copied().unwrap_or(0.0);
    let t_max = (0..k).map(|j| share(j) + link(&private[j])).fold(f64::INFINITY, f64::min);
    let t_margin = private.iter().map(link).fold(f64::INFINITY, f64::min);
    let state = IterateState {
        p,
        t: t_max - 0.5 * t_margin,
        c,
        common,
        private,
    };
    let x = sub.pack(&state);
    if sub.problem.is_strictly_feasible(&x) {
        Ok(x)
    } else {
        Err(IpmError::NotInterior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipm::{solve_from, SolverConfig};
    use crate::lifting::{assemble, dominant_direction, Instance, LinearizationPoint, Scheme};
    use crate::scene::ChannelEstimate;
    use crate::sigdist::solve_distribution;

    fn instance(scheme: Scheme, v: f64) -> Instance {
        let d = solve_distribution(2.0, 1.0).unwrap();
        let est = vec![
            ChannelEstimate {
                v,
                ..ChannelEstimate::exact(DVector::from_vec(vec![3e-6, 1e-6]))
            },
            ChannelEstimate {
                v,
                ..ChannelEstimate::exact(DVector::from_vec(vec![1e-6, 3e-6]))
            },
        ];
        Instance::new(scheme, &est, &vec![d; 3], 1e-12, 1.0, 1.0).unwrap()
    }

    fn reference(inst: &Instance) -> Vec<DMatrix<f64>> {
        let scale = 0.5 * inst.power_budget.min(1.0 / 4.0) / 3.0;
        vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]) * scale,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.05]) * scale,
            DMatrix::from_row_slice(2, 2, &[0.05, 0.1, 0.1, 1.0]) * scale,
        ]
    }

    fn point_for(inst: &Instance, p: &[DMatrix<f64>]) -> LinearizationPoint {
        let mut y_c = Vec::new();
        let mut y_p = Vec::new();
        for user in 0..inst.num_users() {
            let (c, pr) = user_forms(inst, p, user).unwrap();
            if let Some(c) = c {
                y_c.push(c.den.max_over_ball(inst.v[user]).ln());
            }
            y_p.push(pr.den.max_over_ball(inst.v[user]).ln());
        }
        LinearizationPoint {
            y_c,
            y_p,
            u_max: p.iter().map(dominant_direction).collect(),
            rho: -1e-3,
        }
    }

    #[test]
    fn start_is_interior_and_solvable() {
        for scheme in [Scheme::Rsma, Scheme::Sdma] {
            for v in [0.0, 1e-14] {
                let inst = instance(scheme, v);
                let p = reference(&inst);
                let sub = assemble(&inst, &point_for(&inst, &p)).unwrap();
                let x = strictly_feasible_start(&sub, &p).unwrap();
                assert!(sub.problem.is_strictly_feasible(&x));
                let sol = solve_from(&sub.problem, &x, &SolverConfig::default()).unwrap();
                assert!(sol.objective >= sub.problem.objective_value(&x) - 1e-9, "{scheme:?} v={v}");
            }
        }
    }

    #[test]
    fn rejects_singular_reference() {
        let inst = instance(Scheme::Rsma, 0.0);
        let mut p = reference(&inst);
        let sub = assemble(&inst, &point_for(&inst, &p)).unwrap();
        p[1] = DMatrix::zeros(2, 2);
        assert_eq!(strictly_feasible_start(&sub, &p), Err(IpmError::NotInterior));
    }
}
