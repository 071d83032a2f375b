use alloc::vec::Vec;

use super::mat::{Mat, Scalar};
use super::LinalgError;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T: Scalar> {
    lu: Mat<T>,
    perm: Vec<usize>,
    even: bool,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &Mat<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare);
        }
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut even = true;
        let scale = a.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].modulus();
            for i in k + 1..n {
                let v = lu[(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || best <= scale * 1e-300 {
                return Err(LinalgError::Singular);
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                perm.swap(k, p);
                even = !even;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm, even })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "rhs row count mismatch");
        let mut out = Mat::zeros(n, b.ncols());
        for j in 0..b.ncols() {
            let x = self.solve_vec(&b.col_vec(j));
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// Solves `X A = B`, i.e. `A^T X^T = B^T` without conjugation.
    pub fn solve_right(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.dim();
        assert_eq!(b.ncols(), n, "rhs column count mismatch");
        // Work with A^T = U^T L^T P.
        let mut out = Mat::zeros(b.nrows(), n);
        for r in 0..b.nrows() {
            let mut y: Vec<T> = b.row(r).to_vec();
            // U^T z = y
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..i {
                    acc -= self.lu[(j, i)] * y[j];
                }
                y[i] = acc / self.lu[(i, i)];
            }
            // L^T w = z
            for i in (0..n).rev() {
                let mut acc = y[i];
                for j in i + 1..n {
                    acc -= self.lu[(j, i)] * y[j];
                }
                y[i] = acc;
            }
            // x^T = w^T P
            for i in 0..n {
                out[(r, self.perm[i])] = y[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Mat<T> {
        self.solve(&Mat::identity(self.dim()))
    }

    pub fn det(&self) -> T {
        let mut d = if self.even { T::one() } else { -T::one() };
        for i in 0..self.dim() {
            d = d * self.lu[(i, i)];
        }
        d
    }
}

/// 1-norm condition number `||A||_1 ||A^{-1}||_1`, infinite when singular.
pub fn cond_1<T: Scalar>(a: &Mat<T>) -> f64 {
    match Lu::new(a) {
        Ok(lu) => {
            let inv = lu.inverse();
            let c = a.norm_1() * inv.norm_1();
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

pub fn solve<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    Ok(Lu::new(a)?.solve(b))
}

pub fn inverse<T: Scalar>(a: &Mat<T>) -> Result<Mat<T>, LinalgError> {
    Ok(Lu::new(a)?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMatrix, Matrix};
    use num_complex::Complex64;

    #[test]
    fn solves_real_system() {
        let a = Matrix::from_rows(&[&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.0], &[3.0, 0.0, 1.0]]);
        let x = Matrix::column(&[1.0, -2.0, 0.5]);
        let b = &a * &x;
        let sol = solve(&a, &b).unwrap();
        assert!((&sol - &x).max_abs() < 1e-14);
        let lu = Lu::new(&a).unwrap();
        let inv = lu.inverse();
        assert!((&(&a * &inv) - &Matrix::identity(3)).max_abs() < 1e-14);
        let xt = lu.solve_right(&x.transpose());
        assert!((&(&xt * &a) - &x.transpose()).max_abs() < 1e-14);
        assert!((lu.det() - (-5.0)).abs() < 1e-13);
    }

    #[test]
    fn solves_complex_system() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = CMatrix::from_rows(&[&[i, one], &[one, -i * 2.0]]);
        let b = CMatrix::column(&[one, i]);
        let x = solve(&a, &b).unwrap();
        assert!((&(&a * &x) - &b).max_abs() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(Lu::new(&a).unwrap_err(), LinalgError::Singular);
        assert!(cond_1(&a).is_infinite());
    }
}
