//! Maximum-entropy amplitude- and variance-constrained input distribution.
//!
//! The density is `exp(-1 - α - βs - γs²)` on `[-A, A]`. With zero mean the
//! linear coefficient vanishes and γ is fixed by the variance.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LOG2_E, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("amplitude must be positive, got {0}")]
    Amplitude(f64),
    #[error("variance {variance} outside (0, {max})")]
    Variance { variance: f64, max: f64 },
    #[error("root finder did not converge (residual {0:e})")]
    NoConvergence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalDistribution {
    pub amplitude: f64,
    pub variance: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Entropy-power constant e^{1+2(α+γε)}.
    pub tau: f64,
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
        // the second test stops refinement once the estimate is pure roundoff
        if whole.1 <= tol || whole.1 <= 64.0 * f64::EPSILON * whole.0.abs() || depth == 0 {
            return whole.0;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
    }
    // start from 8 panels so narrow features near the ends are resolved
    let panels = 8;
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = if i + 1 == panels { b } else { lo + w };
            rec(f, lo, hi, gk15(f, lo, hi), tol / panels as f64, 40)
        })
        .sum()
}

/// Scaled weight e^{-γ(s² - m)} with m chosen so the weight is ≤ 1.
struct Moments {
    /// ∫ e^{-γ s²} ds expressed as `scaled * e^{-γ m}`.
    scaled_mass: f64,
    second: f64,
    shift: f64,
}

fn moments(amplitude: f64, gamma: f64) -> Moments {
    let shift = if gamma < 0.0 { amplitude * amplitude } else { 0.0 };
    let w = move |s: f64| (-gamma * (s * s - shift)).exp();
    let tol = 1e-15;
    let mass = integrate(&w, -amplitude, amplitude, tol * amplitude);
    let second = integrate(&|s| s * s * w(s), -amplitude, amplitude, tol * amplitude.powi(3));
    Moments {
        scaled_mass: mass,
        second,
        shift,
    }
}

fn variance_at(amplitude: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        return amplitude * amplitude / 3.0;
    }
    let m = moments(amplitude, gamma);
    m.second / m.scaled_mass
}

pub fn solve_distribution(amplitude: f64, variance: f64) -> Result<SignalDistribution, DistError> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(DistError::Amplitude(amplitude));
    }
    let a2 = amplitude * amplitude;
    if !(variance > 0.0 && variance < a2) {
        return Err(DistError::Variance { variance, max: a2 });
    }
    let tol = 1e-12 * a2.max(1.0);
    let residual = |g: f64| variance_at(amplitude, g) - variance;

    let gamma = if residual(0.0).abs() <= 1e-15 * a2 {
        0.0
    } else {
        // variance decreases in γ
        let dir = if residual(0.0) > 0.0 { 1.0 } else { -1.0 };
        let mut lo = 0.0;
        let mut hi = dir / a2;
        let mut grow = 0;
        while residual(hi) * dir > 0.0 {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 200 {
                return Err(DistError::NoConvergence(residual(hi)));
            }
        }
        let mut best = hi;
        let mut converged = false;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let r = residual(mid);
            best = mid;
            if r.abs() <= tol {
                converged = true;
                break;
            }
            if mid == lo || mid == hi {
                converged = r.abs() <= 10.0 * tol;
                break;
            }
            if r * dir > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !converged {
            return Err(DistError::NoConvergence(residual(best)));
        }
        best
    };

    let alpha = if gamma == 0.0 {
        (2.0 * amplitude).ln() - 1.0
    } else {
        let m = moments(amplitude, gamma);
        m.scaled_mass.ln() - gamma * m.shift - 1.0
    };
    Ok(SignalDistribution {
        amplitude,
        variance,
        alpha,
        beta: 0.0,
        gamma,
        tau: (1.0 + 2.0 * (alpha + gamma * variance)).exp(),
    })
}

impl SignalDistribution {
    pub fn density(&self, s: f64) -> f64 {
        if s.abs() > self.amplitude {
            return 0.0;
        }
        (-1.0 - self.alpha - self.beta * s - self.gamma * s * s).exp()
    }

    /// Differential entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        (1.0 + self.alpha + self.gamma * self.variance) * LOG2_E
    }

    /// ∫ sᵏ f(s) ds by quadrature.
    pub fn moment(&self, k: i32) -> f64 {
        integrate(&|s| s.powi(k) * self.density(s), -self.amplitude, self.amplitude, 1e-15)
    }

    /// Residuals of the three moment conditions in their closed forms
    /// (normalisation, mean, variance) for general β.
    pub fn moment_equation_residuals(&self) -> [f64; 3] {
        let (a, b, g, e) = (self.amplitude, self.beta, self.gamma, self.variance);
        let z = (1.0 + self.alpha).exp();
        let mass = integrate(&|s| (-b * s - g * s * s).exp(), -a, a, 1e-15);
        let first = (-b * a - g * a * a).exp() - (b * a - g * a * a).exp() + b * mass;
        let third = (a * (b - g * a)).exp() * ((b - 2.0 * g * a) * (-2.0 * a * b).exp() - b - 2.0 * g * a)
            - (4.0 * g * g * e - b * b - 2.0 * g) * z;
        [mass / z - 1.0, first / z, third / z]
    }
}

/// e^{1+α} from the erf closed form, defined for γ > 0 and β = 0.
pub fn closed_form_normalizer(amplitude: f64, gamma: f64) -> Option<f64> {
    if gamma <= 0.0 {
        return None;
    }
    let r = gamma.sqrt();
    Some(PI.sqrt() * statrs::function::erf::erf(amplitude * r) / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_case_is_exact() {
        let d = solve_distribution(2.0, 4.0 / 3.0).unwrap();
        assert_eq!(d.gamma, 0.0);
        assert_relative_eq!((1.0 + d.alpha).exp(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(d.tau, 16.0 / std::f64::consts::E, epsilon = 1e-10);
        assert_relative_eq!(d.density(0.0), 0.25, epsilon = 1e-14);
        assert_relative_eq!(d.entropy_bits(), 2.0, epsilon = 1e-12);
    }

    // bisection on the variance with an independent trapezoid oracle
    fn trapezoid_variance(a: f64, g: f64) -> f64 {
        let n = 200_000;
        let h = 2.0 * a / n as f64;
        let (mut m0, mut m2) = (0.0, 0.0);
        for i in 0..=n {
            let s = -a + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let f = (-g * s * s).exp();
            m0 += w * f;
            m2 += w * s * s * f;
        }
        m2 / m0
    }

    #[test]
    fn unit_variance_matches_oracle() {
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if trapezoid_variance(2.0, mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = solve_distribution(2.0, 1.0).unwrap();
        assert!(d.gamma > 0.0);
        assert_relative_eq!(d.gamma, 0.5 * (lo + hi), epsilon = 1e-7);
        assert_relative_eq!(d.gamma, 0.26335, epsilon = 1e-5);
        assert_relative_eq!(d.alpha, 0.08092, epsilon = 1e-5);
        assert_relative_eq!(d.tau, 5.41158, epsilon = 1e-5);
        assert!((variance_at(2.0, d.gamma) - 1.0).abs() <= 1e-10);
    }

    // rejection sampling from the uniform envelope; E[-log2 f(S)]
    #[test]
    fn entropy_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for eps in [0.3, 1.0, 2.5] {
            let d = solve_distribution(2.0, eps).unwrap();
            let peak = d.density(0.0).max(d.density(2.0));
            let (mut n, mut acc) = (0usize, 0.0);
            while n < 200_000 {
                let s = rng.gen_range(-2.0..=2.0);
                if rng.gen::<f64>() * peak <= d.density(s) {
                    acc -= d.density(s).log2();
                    n += 1;
                }
            }
            let estimate = acc / n as f64;
            assert!((estimate - d.entropy_bits()).abs() <= 1e-2, "{eps}: {estimate} vs {}", d.entropy_bits());
        }
    }

    #[test]
    fn moments_reproduced() {
        for eps in [0.1, 0.5, 1.0, 2.0, 3.5] {
            let d = solve_distribution(2.0, eps).unwrap();
            assert!((d.moment(0) - 1.0).abs() <= 1e-8, "mass {eps}");
            assert!(d.moment(1).abs() <= 1e-8, "mean {eps}");
            assert!((d.moment(2) - eps).abs() <= 1e-8, "var {eps}");
            for r in d.moment_equation_residuals() {
                assert!(r.abs() <= 1e-8, "{eps}: {r}");
            }
        }
    }

    #[test]
    fn erf_closed_form_agrees() {
        let d = solve_distribution(2.0, 1.0).unwrap();
        let z = closed_form_normalizer(2.0, d.gamma).unwrap();
        // limited by the accuracy of the erf implementation
        assert_relative_eq!(z, (1.0 + d.alpha).exp(), max_relative = 1e-10);
        assert!(closed_form_normalizer(2.0, -0.1).is_none());
    }

    #[test]
    fn edge_heavy_branch() {
        let d = solve_distribution(2.0, 2.0).unwrap();
        assert!(d.gamma < 0.0);
        assert_relative_eq!(d.tau, 4.4107, epsilon = 1e-4);
        assert_relative_eq!(solve_distribution(2.0, 0.5).unwrap().tau, 3.109, epsilon = 1e-3);
    }

    #[test]
    fn support_and_symmetry() {
        let d = solve_distribution(2.0, 1.0).unwrap();
        assert_eq!(d.density(2.1), 0.0);
        for s in [0.1, 0.7, 1.3, 1.99] {
            assert_eq!(d.density(s), d.density(-s));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_distribution(0.0, 1.0).is_err());
        assert!(solve_distribution(2.0, 4.0).is_err());
        assert!(solve_distribution(2.0, 0.0).is_err());
    }

    #[test]
    fn tau_identity_and_gaussian_bound() {
        for eps in [0.05, 0.3, 1.0, 4.0 / 3.0, 2.5, 3.9] {
            let d = solve_distribution(2.0, eps).unwrap();
            let via_h = 2f64.powf(2.0 * d.entropy_bits()) / std::f64::consts::E;
            assert_relative_eq!(via_h, d.tau, max_relative = 1e-8);
            assert!(d.tau <= 2.0 * PI * eps * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tau_peaks_at_uniform_variance() {
        // increasing up to A²/3, where the density is uniform, decreasing after
        let grid: Vec<f64> = (1..40).map(|i| 0.1 * i as f64).collect();
        let taus: Vec<f64> = grid.iter().map(|&e| solve_distribution(2.0, e).unwrap().tau).collect();
        let uniform = solve_distribution(2.0, 4.0 / 3.0).unwrap().tau;
        for (w, e) in taus.windows(2).zip(grid.windows(2)) {
            if e[1] <= 4.0 / 3.0 {
                assert!(w[1] > w[0], "{e:?}");
            } else if e[0] >= 4.0 / 3.0 {
                assert!(w[1] < w[0], "{e:?}");
            }
            assert!(w[0] <= uniform && w[1] <= uniform);
        }
    }

    #[test]
    fn edge_heavy_case_terminates() {
        // once stalled the quadrature at its roundoff floor
        let (a, eps) = (3.073382236278394, 8.68034660416029);
        let d = solve_distribution(a, eps).unwrap();
        assert!((d.moment(2) - eps).abs() <= 1e-8 * a * a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solved_variance_hits_target(a in 0.5..5.0f64, frac in 0.02..0.98f64) {
            let eps = frac * a * a;
            let d = solve_distribution(a, eps).unwrap();
            prop_assert!((d.moment(2) - eps).abs() <= 1e-8 * a * a);
            prop_assert!(d.tau <= 2.0 * PI * eps * (1.0 + 1e-12));
        }
    }
}
