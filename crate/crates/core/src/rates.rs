//! Closed-form rate lower bounds, their worst case over the CSIT ball, and a
//! Monte-Carlo robustness validator.

use crate::linalg::trust_region_min;
use crate::scene::ChannelEstimate;
use crate::sigdist::SignalDistribution;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// One outer CCCP iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub t: f64,
    pub penalty: f64,
    /// Penalised objective of this iterate.
    pub objective: f64,
    /// Penalised objective of the previous iterate under the same ρ; none on the first pass.
    pub previous_objective: Option<f64>,
    pub max_rank_gap: f64,
    pub rho: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub trace: Vec<IterationRecord>,
    /// Relative rank gap of each P_i, common first.
    pub rank_gaps: Vec<f64>,
    pub penalty: f64,
    /// t of the final relaxed subproblem, before extraction.
    pub relaxed_value: f64,
    /// Global scale applied during extraction.
    pub scale: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Largest relative KKT residual over all subproblem solves.
    pub kkt_residual: f64,
    pub warning: Option<String>,
}

impl Diagnostics {
    pub fn max_rank_gap(&self) -> f64 {
        self.rank_gaps.iter().fold(0.0, |a, &b| a.max(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSolution {
    pub common_beam: DVector<f64>,
    pub private_beams: Vec<DVector<f64>>,
    pub common_shares: Vec<f64>,
    pub mmf_value: f64,
    pub per_user_private: Vec<f64>,
    pub common_bound: f64,
    pub diagnostics: Diagnostics,
}

impl BeamformingSolution {
    /// All beams with the common one first.
    pub fn beams(&self) -> Vec<DVector<f64>> {
        std::iter::once(self.common_beam.clone())
            .chain(self.private_beams.iter().cloned())
            .collect()
    }

    pub fn num_users(&self) -> usize {
        self.private_beams.len()
    }
}

/// `ΔᵀMΔ + 2gᵀΔ + c`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub m: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, d: &DVector<f64>) -> f64 {
        (d.transpose() * &self.m * d)[0] + 2.0 * self.g.dot(d) + self.c
    }

    pub fn min_over_ball(&self, v: f64) -> f64 {
        self.c + trust_region_min(&self.m, &self.g, v).value
    }

    pub fn max_over_ball(&self, v: f64) -> f64 {
        self.c - trust_region_min(&-&self.m, &-&self.g, v).value
    }
}

fn outer_sum<'a>(terms: impl Iterator<Item = (f64, &'a DVector<f64>)>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (w, p) in terms {
        m.ger(w, p, p, 1.0);
    }
    m
}

fn form(h_hat: &DVector<f64>, around: &DMatrix<f64>, sic: &DMatrix<f64>, constant: f64) -> Quadratic {
    let g = around * h_hat;
    Quadratic {
        m: around + sic,
        c: constant + h_hat.dot(&g),
        g,
    }
}

/// Numerator and denominator of the common bound as quadratics in Δh.
pub fn common_forms(
    h_hat: &DVector<f64>,
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> (Quadratic, Quadratic) {
    let n = h_hat.len();
    let zero = DMatrix::zeros(n, n);
    let phi = outer_sum(beams.iter().zip(dists).map(|(p, d)| (d.tau, p)), n);
    let phi_bar = outer_sum(beams.iter().zip(dists).skip(1).map(|(p, d)| (2.0 * PI * d.variance, p)), n);
    let c = 2.0 * PI * noise;
    (form(h_hat, &phi, &zero, c), form(h_hat, &phi_bar, &zero, c))
}

/// Numerator and denominator of user `k`'s private bound as quadratics in Δh.
pub fn private_forms(
    h_hat: &DVector<f64>,
    user: usize,
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> (Quadratic, Quadratic) {
    let n = h_hat.len();
    let q = outer_sum(beams.iter().zip(dists).skip(1).map(|(p, d)| (d.tau, p)), n);
    let q_bar = outer_sum(
        beams
            .iter()
            .zip(dists)
            .enumerate()
            .skip(1)
            .filter(|(i, _)| *i != user + 1)
            .map(|(_, (p, d))| (2.0 * PI * d.variance, p)),
        n,
    );
    let p0 = &beams[0];
    let num_sic = p0 * p0.transpose() * dists[0].tau;
    let den_sic = p0 * p0.transpose() * (2.0 * PI * dists[0].variance);
    let c = 2.0 * PI * noise;
    (form(h_hat, &q, &num_sic, c), form(h_hat, &q_bar, &den_sic, c))
}

fn half_log2_ratio(num: f64, den: f64) -> f64 {
    0.5 * (num / den).ln() / LN_2
}

/// Common-stream bound at h = ĥ + Δh, unclamped.
pub fn common_rate_lb_raw(
    h_hat: &DVector<f64>,
    delta_h: &DVector<f64>,
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> f64 {
    let h = h_hat + delta_h;
    let mut num = 2.0 * PI * noise;
    let mut den = 2.0 * PI * noise;
    for (i, (p, d)) in beams.iter().zip(dists).enumerate() {
        let a = h.dot(p).powi(2);
        num += a * d.tau;
        if i > 0 {
            den += 2.0 * PI * a * d.variance;
        }
    }
    half_log2_ratio(num, den)
}

pub fn common_rate_lb(
    h_hat: &DVector<f64>,
    delta_h: &DVector<f64>,
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> f64 {
    common_rate_lb_raw(h_hat, delta_h, beams, dists, noise).max(0.0)
}

/// Private bound of `user` (0-based) at h = ĥ + Δh, unclamped.
pub fn private_rate_lb_raw(
    h_hat: &DVector<f64>,
    delta_h: &DVector<f64>,
    user: usize,
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> f64 {
    let h = h_hat + delta_h;
    let residual = delta_h.dot(&beams[0]).powi(2);
    let mut num = 2.0 * PI * noise + residual * dists[0].tau;
    let mut den = noise + residual * dists[0].variance;
    for (i, (p, d)) in beams.iter().zip(dists).enumerate().skip(1) {
        let a = h.dot(p).powi(2);
        num += a * d.tau;
        if i != user + 1 {
            den += a * d.variance;
        }
    }
    half_log2_ratio(num, 2.0 * PI * den)
}

pub fn private_rate_lb(
    h_hat: &DVector<f64>,
    delta_h: &DVector<f64>,
    user: usize,
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> f64 {
    private_rate_lb_raw(h_hat, delta_h, user, beams, dists, noise).max(0.0)
}

/// Rates guaranteed for every Δh in the ball, with numerator and denominator
/// bounded separately exactly as the S-lemma certificates do.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedRates {
    pub common: Vec<f64>,
    pub private: Vec<f64>,
}

pub fn certified_rates(
    estimates: &[ChannelEstimate],
    beams: &[DVector<f64>],
    dists: &[SignalDistribution],
    noise: f64,
) -> CertifiedRates {
    let mut common = Vec::with_capacity(estimates.len());
    let mut private = Vec::with_capacity(estimates.len());
    for (k, e) in estimates.iter().enumerate() {
        let (num, den) = common_forms(&e.h_hat, beams, dists, noise);
        common.push(half_log2_ratio(num.min_over_ball(e.v), den.max_over_ball(e.v)).max(0.0));
        let (num, den) = private_forms(&e.h_hat, k, beams, dists, noise);
        private.push(half_log2_ratio(num.min_over_ball(e.v), den.max_over_ball(e.v)).max(0.0));
    }
    CertifiedRates { common, private }
}

/// Splits `common_rate` into shares maximising min_k (c_k + private_k).
/// Returns the shares and the resulting max-min value.
pub fn allocate_common(common_rate: f64, private: &[f64]) -> (Vec<f64>, f64) {
    let mut sorted = private.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut budget = common_rate.max(0.0);
    let mut t = sorted[0];
    for i in 0..sorted.len() {
        let next = sorted.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let width = (i + 1) as f64;
        let need = (next - t) * width;
        if need >= budget {
            t += budget / width;
            break;
        }
        budget -= need;
        t = next;
    }
    let shares: Vec<f64> = private.iter().map(|&r| (t - r).max(0.0)).collect();
    // keep Σc within the budget after rounding
    let total: f64 = shares.iter().sum();
    let shares = if total > common_rate && total > 0.0 {
        shares.iter().map(|c| c * common_rate.max(0.0) / total).collect()
    } else {
        shares
    };
    let value = private
        .iter()
        .zip(&shares)
        .map(|(r, c)| r + c)
        .fold(f64::INFINITY, f64::min);
    (shares, value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// min over samples and users of c_k + R_k,p − t.
    pub private_margin: f64,
    /// min over samples and users of R_k,c − Σc.
    pub common_margin: f64,
    pub samples: usize,
}

impl MarginReport {
    pub fn worst(&self) -> f64 {
        self.private_margin.min(self.common_margin)
    }
}

/// Uniform draw in the Euclidean ball of squared radius `v`.
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, v: f64) -> DVector<f64> {
    if v <= 0.0 {
        return DVector::zeros(dim);
    }
    let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let radius = v.sqrt() * rng.gen::<f64>().powf(1.0 / dim as f64);
    dir.normalize() * radius
}

const CHUNK: usize = 64;

pub fn worst_case_validate(
    estimates: &[ChannelEstimate],
    solution: &BeamformingSolution,
    dists: &[SignalDistribution],
    noise: f64,
    samples: usize,
    seed: u64,
) -> Result<MarginReport, RateError> {
    if samples == 0 {
        return Err(RateError::NoSamples);
    }
    let k = solution.num_users();
    if estimates.len() != k || dists.len() != k + 1 || solution.common_shares.len() != k {
        return Err(RateError::Dimension(format!(
            "{} estimates, {} users, {} distributions",
            estimates.len(),
            k,
            dists.len()
        )));
    }
    let beams = solution.beams();
    let shares_total: f64 = solution.common_shares.iter().sum();
    let t = solution.mmf_value;
    let samples = if estimates.iter().all(|e| e.v == 0.0) { 1 } else { samples };
    let chunks = samples.div_ceil(CHUNK);

    let per_chunk: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let (mut pm, mut cm) = (f64::INFINITY, f64::INFINITY);
            for _ in 0..count {
                for (user, e) in estimates.iter().enumerate() {
                    let d = sample_ball(&mut rng, e.dim(), e.v);
                    let rc = common_rate_lb(&e.h_hat, &d, &beams, dists, noise);
                    let rp = private_rate_lb(&e.h_hat, &d, user, &beams, dists, noise);
                    pm = pm.min(solution.common_shares[user] + rp - t);
                    cm = cm.min(rc - shares_total);
                }
            }
            (pm, cm)
        })
        .collect();
    let (private_margin, common_margin) = per_chunk
        .iter()
        .fold((f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)));
    Ok(MarginReport {
        private_margin,
        common_margin,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigdist::solve_distribution;
    use approx::assert_relative_eq;

    fn dists(k: usize) -> Vec<SignalDistribution> {
        vec![solve_distribution(2.0, 1.0).unwrap(); k + 1]
    }

    fn vecs(rows: &[&[f64]]) -> Vec<DVector<f64>> {
        rows.iter().map(|r| DVector::from_row_slice(r)).collect()
    }

    #[test]
    fn zero_beams_give_zero() {
        let h = DVector::from_vec(vec![1.0, 0.5]);
        let z = DVector::zeros(2);
        let beams = vecs(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let d = dists(1);
        assert_eq!(common_rate_lb(&h, &z, &beams, &d, 0.1), 0.0);
        assert_eq!(private_rate_lb(&h, &z, 0, &beams, &d, 0.1), 0.0);
    }

    #[test]
    fn common_only() {
        let h = DVector::from_vec(vec![1.0, 0.5]);
        let z = DVector::zeros(2);
        let d = dists(1);
        let noise = 0.1;
        let p0 = [0.3, 0.2];
        let beams = vecs(&[&p0, &[0.0, 0.0]]);
        let a = 1.0 * 0.3 + 0.5 * 0.2;
        let expected = 0.5 * (1.0 + a * a * d[0].tau / (2.0 * PI * noise)).log2();
        assert_relative_eq!(common_rate_lb(&h, &z, &beams, &d, noise), expected, epsilon = 1e-14);
        assert!(expected > 0.0);
        let at = |s: f64| {
            let b = vecs(&[&[0.3 * s, 0.2 * s], &[0.0, 0.0]]);
            common_rate_lb(&h, &z, &b, &d, noise)
        };
        assert!(at(1.0) < at(2.0) && at(2.0) < at(4.0));
    }

    #[test]
    fn private_perfect_csit_single_user() {
        let h = DVector::from_vec(vec![1.0, 0.5]);
        let z = DVector::zeros(2);
        let d = dists(1);
        let noise = 0.2;
        let beams = vecs(&[&[0.7, -0.1], &[0.4, 0.3]]);
        let a = 0.4 + 0.15;
        let expected = 0.5 * ((2.0 * PI * noise + a * a * d[1].tau) / (2.0 * PI * noise)).log2();
        assert_relative_eq!(private_rate_lb(&h, &z, 0, &beams, &d, noise), expected, epsilon = 1e-14);
    }

    #[test]
    fn residual_common_hurts_private() {
        let h = DVector::from_vec(vec![1.0, 0.5, 0.2]);
        let d = dists(2);
        let beams = vecs(&[&[0.5, 0.5, 0.5], &[0.4, 0.1, 0.0], &[0.0, 0.2, 0.6]]);
        let dh = DVector::from_vec(vec![0.05, -0.02, 0.03]);
        // same aligned signal terms: only the residual common terms differ
        let with_error = private_rate_lb_raw(&(&h - &dh), &dh, 0, &beams, &d, 0.05);
        let without = private_rate_lb_raw(&h, &DVector::zeros(3), 0, &beams, &d, 0.05);
        assert!(with_error < without);
    }

    #[test]
    fn sign_flip_and_noise_monotone() {
        let h = DVector::from_vec(vec![1.0, 0.5, 0.2]);
        let dh = DVector::from_vec(vec![0.01, 0.0, -0.02]);
        let d = dists(2);
        let beams = vecs(&[&[0.5, 0.5, 0.5], &[0.4, 0.1, 0.0], &[0.0, 0.2, 0.6]]);
        let mut flipped = beams.clone();
        flipped[1] = -&flipped[1];
        assert_relative_eq!(
            common_rate_lb(&h, &dh, &beams, &d, 0.1),
            common_rate_lb(&h, &dh, &flipped, &d, 0.1),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            private_rate_lb(&h, &dh, 1, &beams, &d, 0.1),
            private_rate_lb(&h, &dh, 1, &flipped, &d, 0.1),
            epsilon = 1e-15
        );
        let c: Vec<f64> = [0.01, 0.1, 1.0].iter().map(|&s| common_rate_lb(&h, &dh, &beams, &d, s)).collect();
        let p: Vec<f64> = [0.01, 0.1, 1.0].iter().map(|&s| private_rate_lb(&h, &dh, 0, &beams, &d, s)).collect();
        assert!(c[0] >= c[1] && c[1] >= c[2]);
        assert!(p[0] >= p[1] && p[1] >= p[2]);
    }

    #[test]
    fn forms_match_direct_evaluation() {
        let h = DVector::from_vec(vec![1.0, 0.5, 0.2]);
        let dh = DVector::from_vec(vec![0.03, -0.01, 0.02]);
        let d = dists(2);
        let beams = vecs(&[&[0.5, 0.5, 0.5], &[0.4, 0.1, 0.0], &[0.0, 0.2, 0.6]]);
        let (n, m) = common_forms(&h, &beams, &d, 0.1);
        assert_relative_eq!(
            half_log2_ratio(n.eval(&dh), m.eval(&dh)),
            common_rate_lb_raw(&h, &dh, &beams, &d, 0.1),
            epsilon = 1e-13
        );
        let (n, m) = private_forms(&h, 1, &beams, &d, 0.1);
        assert_relative_eq!(
            half_log2_ratio(n.eval(&dh), m.eval(&dh)),
            private_rate_lb_raw(&h, &dh, 1, &beams, &d, 0.1),
            epsilon = 1e-13
        );
    }

    #[test]
    fn allocation_water_fills() {
        let (c, t) = allocate_common(1.0, &[0.5, 1.0, 3.0]);
        assert_relative_eq!(t, 1.25, epsilon = 1e-14);
        assert_relative_eq!(c[0], 0.75, epsilon = 1e-14);
        assert_relative_eq!(c[1], 0.25, epsilon = 1e-14);
        assert_eq!(c[2], 0.0);
        let (c, t) = allocate_common(0.0, &[0.5, 1.0]);
        assert_eq!(t, 0.5);
        assert_eq!(c, vec![0.0, 0.0]);
    }

    fn toy_solution() -> (Vec<ChannelEstimate>, BeamformingSolution, Vec<SignalDistribution>) {
        let est = vec![
            ChannelEstimate::from_bounds(DVector::from_vec(vec![0.9, 0.3]), DVector::from_vec(vec![1.0, 0.35])),
            ChannelEstimate::from_bounds(DVector::from_vec(vec![0.2, 0.8]), DVector::from_vec(vec![0.25, 0.9])),
        ];
        let d = dists(2);
        let beams = vecs(&[&[0.4, 0.4], &[0.3, -0.1], &[-0.1, 0.3]]);
        let cert = certified_rates(&est, &beams, &d, 0.01);
        let rc = cert.common.iter().cloned().fold(f64::INFINITY, f64::min);
        let (shares, t) = allocate_common(rc, &cert.private);
        let sol = BeamformingSolution {
            common_beam: beams[0].clone(),
            private_beams: beams[1..].to_vec(),
            common_shares: shares,
            mmf_value: t,
            per_user_private: cert.private.clone(),
            common_bound: rc,
            diagnostics: Diagnostics::default(),
        };
        (est, sol, d)
    }

    #[test]
    fn certified_solution_passes_validation() {
        let (est, sol, d) = toy_solution();
        assert!(sol.mmf_value > 0.0);
        let r = worst_case_validate(&est, &sol, &d, 0.01, 1000, 9).unwrap();
        assert!(r.worst() >= -1e-12, "{r:?}");
        let again = worst_case_validate(&est, &sol, &d, 0.01, 1000, 9).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn inflated_value_is_detected() {
        let (est, mut sol, d) = toy_solution();
        sol.mmf_value += 0.1;
        let r = worst_case_validate(&est, &sol, &d, 0.01, 200, 1).unwrap();
        assert!(r.private_margin < 0.0);
        assert!(worst_case_validate(&est, &sol, &d, 0.01, 0, 1).is_err());
    }

    #[test]
    fn zero_radius_uses_one_sample() {
        let (est, sol, d) = toy_solution();
        let exact: Vec<ChannelEstimate> = est.iter().map(|e| ChannelEstimate::exact(e.h_hat.clone())).collect();
        let r = worst_case_validate(&exact, &sol, &d, 0.01, 1000, 1).unwrap();
        assert_eq!(r.samples, 1);
    }

    #[test]
    fn ball_samples_are_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let s = sample_ball(&mut rng, 4, 0.25);
            assert!(s.norm_squared() <= 0.25);
        }
    }
}
