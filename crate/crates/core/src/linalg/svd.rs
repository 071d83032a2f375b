use alloc::vec::Vec;

use num_traits::Float;

use super::Matrix;

/// Thin singular value decomposition `A = U diag(s) V^T`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    /// Numerical rank with the relative threshold `sigma > rtol * sigma_max`.
    pub fn rank(&self, rtol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&x| x > rtol * smax && x > 0.0).count()
    }
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * x - s * y;
                    w[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<(f64, usize)> = (0..n)
        .map(|j| ((0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt(), j))
        .collect();
    sv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
    let mut u = Matrix::zeros(m, n);
    let mut vv = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in sv.iter().enumerate() {
        s.push(sigma);
        for i in 0..n {
            vv[(i, k)] = v[(i, j)];
        }
        if sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[(i, j)] / sigma;
            }
        }
    }
    complete_orthonormal_columns(&mut u, &s);
    Svd { u, s, v: vv }
}

/// Fills the columns of `u` belonging to zero singular values with an
/// orthonormal completion so that `u` always has orthonormal columns.
fn complete_orthonormal_columns(u: &mut Matrix, s: &[f64]) {
    let (m, n) = u.shape();
    for k in 0..n {
        if s[k] > 0.0 {
            continue;
        }
        for e in 0..m {
            let mut cand: Vec<f64> = (0..m).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
            for j in 0..n {
                if j == k || (s[j] == 0.0 && j > k) {
                    continue;
                }
                let dot: f64 = (0..m).map(|i| cand[i] * u[(i, j)]).sum();
                for i in 0..m {
                    cand[i] -= dot * u[(i, j)];
                }
            }
            let nrm: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-8 {
                for i in 0..m {
                    u[(i, k)] = cand[i] / nrm;
                }
                break;
            }
        }
    }
}
