use alloc::vec::Vec;

use num_traits::Float;

use super::Matrix;

/// Householder QR, `A = Q R` with `Q` square orthogonal and `R` the same shape as `A`.
pub fn householder_qr(a: &Matrix) -> (Matrix, Matrix) {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut q = Matrix::identity(m);
    for k in 0..n.min(m.saturating_sub(1)) {
        let norm: f64 = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- (I - 2 v v^T / v^T v) R
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i - k];
            }
        }
        // Q <- Q (I - 2 v v^T / v^T v)
        for i in 0..m {
            let dot: f64 = (k..m).map(|l| q[(i, l)] * v[l - k]).sum();
            let f = 2.0 * dot / vnorm2;
            for l in k..m {
                q[(i, l)] -= f * v[l - k];
            }
        }
        for i in k + 1..m {
            r[(i, k)] = 0.0;
        }
    }
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs_and_is_orthogonal() {
        let a = Matrix::from_rows(&[&[2.0, -1.0], &[1.0, 3.0], &[0.5, 0.0], &[-2.0, 1.0]]);
        let (q, r) = householder_qr(&a);
        assert!((&(&q * &r) - &a).max_abs() < 1e-14);
        assert!((&(&q.transpose() * &q) - &Matrix::identity(4)).max_abs() < 1e-14);
        for i in 1..4 {
            for j in 0..i.min(2) {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }
}
