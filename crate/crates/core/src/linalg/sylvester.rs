//! Bartels-Stewart solvers: reduce to real Schur form, then back-substitute
//! over the 1x1/2x2 diagonal blocks.

use super::schur::{quasi_triangular_blocks, real_schur};
use super::{LinalgError, Matrix};

/// Solves `A X + X B = C` where `A` (m x m) and `B` (n x n) are both upper
/// quasi-triangular.
pub fn solve_sylvester_quasi_triangular(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
) -> Result<Matrix, LinalgError> {
    let m = a.nrows();
    let n = b.nrows();
    assert_eq!(c.shape(), (m, n), "rhs shape");
    let a_blocks = quasi_triangular_blocks(a);
    let b_blocks = quasi_triangular_blocks(b);
    let mut x = Matrix::zeros(m, n);
    for &(j0, qj) in &b_blocks {
        // rhs_j = C[:, j] - X[:, :j0] B[:j0, j]
        let mut rhs = c.block(0, m, j0, j0 + qj);
        for l in 0..j0 {
            for jj in 0..qj {
                let bl = b[(l, j0 + jj)];
                if bl == 0.0 {
                    continue;
                }
                for i in 0..m {
                    rhs[(i, jj)] -= x[(i, l)] * bl;
                }
            }
        }
        let bjj = b.block(j0, j0 + qj, j0, j0 + qj);
        for &(i0, pi) in a_blocks.iter().rev() {
            let mut r = rhs.block(i0, i0 + pi, 0, qj);
            for ii in 0..pi {
                for l in i0 + pi..m {
                    let al = a[(i0 + ii, l)];
                    if al == 0.0 {
                        continue;
                    }
                    for jj in 0..qj {
                        r[(ii, jj)] -= al * x[(l, j0 + jj)];
                    }
                }
            }
            let aii = a.block(i0, i0 + pi, i0, i0 + pi);
            let y = small_sylvester_plus(&aii, &bjj, &r)?;
            x.set_block(i0, j0, &y);
        }
    }
    Ok(x)
}

/// `A X + X B = R` for blocks of order at most two.
fn small_sylvester_plus(a: &Matrix, b: &Matrix, r: &Matrix) -> Result<Matrix, LinalgError> {
    let p = a.nrows();
    let q = b.nrows();
    if p == 1 && q == 1 {
        let d = a[(0, 0)] + b[(0, 0)];
        if d == 0.0 {
            return Err(LinalgError::CommonEigenvalue);
        }
        return Ok(Matrix::from_rows(&[&[r[(0, 0)] / d]]));
    }
    let dim = p * q;
    let mut k = Matrix::zeros(dim, dim);
    for j in 0..q {
        for i in 0..p {
            let row = i + p * j;
            for l in 0..p {
                k[(row, l + p * j)] += a[(i, l)];
            }
            for l in 0..q {
                k[(row, i + p * l)] += b[(l, j)];
            }
        }
    }
    let mut rhs = Matrix::zeros(dim, 1);
    for j in 0..q {
        for i in 0..p {
            rhs[(i + p * j, 0)] = r[(i, j)];
        }
    }
    let sol = super::lu::solve(&k, &rhs).map_err(|_| LinalgError::CommonEigenvalue)?;
    Ok(Matrix::from_fn(p, q, |i, j| sol[(i + p * j, 0)]))
}

fn flip(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i + j + 1 == n { 1.0 } else { 0.0 })
}

/// General Sylvester equation `A X + X B = C`.
pub fn sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix, LinalgError> {
    let sa = real_schur(a)?;
    let sb = real_schur(b)?;
    let ct = &(&sa.u.transpose() * c) * &sb.u;
    let y = solve_sylvester_quasi_triangular(&sa.t, &sb.t, &ct)?;
    Ok(&(&sa.u * &y) * &sb.u.transpose())
}

/// Continuous Lyapunov equation `A X + X A^T + Q = 0`.
pub fn lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.nrows();
    let s = real_schur(a)?;
    let j = flip(n);
    // T Y + Y T^T = -U^T Q U; with Z = Y J the right operand J T^T J is upper quasi-triangular.
    let rhs = -&(&(&s.u.transpose() * q) * &s.u);
    let bt = &(&j * &s.t.transpose()) * &j;
    let z = solve_sylvester_quasi_triangular(&s.t, &bt, &(&rhs * &j))?;
    let y = &z * &j;
    let x = &(&s.u * &y) * &s.u.transpose();
    Ok(x.symmetrize())
}
