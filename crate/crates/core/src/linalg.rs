//! Dense symmetric helpers shared by the solver and the rate certificates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues ascending with matching eigenvector columns.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in idx.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sorted_eigen(m).0[0]
}

/// Largest eigenvalue and a unit eigenvector for it.
pub fn dominant_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (vals, vecs) = sorted_eigen(m);
    let n = vals.len();
    (vals[n - 1], vecs.column(n - 1).into_owned())
}

/// Number of entries of the packed upper triangle of an `n x n` matrix.
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed position of entry (a, b), a ≤ b, row-major over the upper triangle.
pub fn packed_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + b
}

pub fn unpack_symmetric(n: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = packed[packed_index(n, a, b)];
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

pub fn pack_symmetric(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; packed_len(n)];
    for a in 0..n {
        for b in a..n {
            out[packed_index(n, a, b)] = 0.5 * (m[(a, b)] + m[(b, a)]);
        }
    }
    out
}

/// Minimum of `zᵀ M z + 2 gᵀ z` over `‖z‖² ≤ radius_sq`.
#[derive(Debug, Clone)]
pub struct TrustRegion {
    pub value: f64,
    pub z: DVector<f64>,
    /// Lagrange multiplier of the ball constraint; infinite when the radius is 0.
    pub multiplier: f64,
}

pub fn trust_region_min(m: &DMatrix<f64>, g: &DVector<f64>, radius_sq: f64) -> TrustRegion {
    let n = g.len();
    if radius_sq <= 0.0 {
        return TrustRegion {
            value: 0.0,
            z: DVector::zeros(n),
            multiplier: f64::INFINITY,
        };
    }
    let (lam, q) = sorted_eigen(m);
    let gq = q.transpose() * g;
    let scale = lam.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(g.norm()).max(f64::MIN_POSITIVE);
    let tiny = 1e-14 * scale;
    let lam_min = lam[0];

    let z_of = |mu: f64| -> DVector<f64> {
        DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let d = lam[i] + mu;
                if d.abs() <= tiny {
                    0.0
                } else {
                    -gq[i] / d
                }
            }),
        )
    };
    let finish = |zq: DVector<f64>, mu: f64| -> TrustRegion {
        let value = (0..n).map(|i| lam[i] * zq[i] * zq[i] + 2.0 * gq[i] * zq[i]).sum();
        TrustRegion {
            value,
            z: &q * zq,
            multiplier: mu,
        }
    };

    // interior minimiser when M is PSD
    if lam_min >= -tiny {
        let zq = z_of(0.0);
        let consistent = (0..n).all(|i| lam[i].abs() > tiny || gq[i].abs() <= tiny);
        if consistent && zq.norm_squared() <= radius_sq {
            return finish(zq, 0.0);
        }
    }

    let mu_lo = (-lam_min).max(0.0);
    let hard = (0..n).all(|i| (lam[i] - lam_min).abs() > tiny || gq[i].abs() <= tiny);
    if hard {
        let zq = z_of(mu_lo);
        let rest = radius_sq - zq.norm_squared();
        if rest >= 0.0 {
            let mut zq = zq;
            zq[0] += rest.sqrt();
            return finish(zq, mu_lo);
        }
    }

    // secular equation ‖z(μ)‖² = radius² on (mu_lo, mu_hi]
    let norm_sq = |mu: f64| -> f64 {
        (0..n).map(|i| (gq[i] / (lam[i] + mu)).powi(2)).sum()
    };
    let mut lo = mu_lo;
    let mut hi = mu_lo + g.norm() / radius_sq.sqrt() + tiny;
    while norm_sq(hi) > radius_sq {
        hi = mu_lo + 2.0 * (hi - mu_lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_sq(mid) > radius_sq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zq = DVector::from_iterator(n, (0..n).map(|i| -gq[i] / (lam[i] + hi)));
    finish(zq, hi)
}
