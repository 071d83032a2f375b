//! Real Schur decomposition `A = U T U^T` by Householder reduction to upper
//! Hessenberg form followed by Francis double-shift QR iteration, plus
//! block reordering by direct swapping of adjacent diagonal blocks.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use super::qr::householder_qr;
use super::{LinalgError, Matrix};

#[derive(Debug, Clone)]
pub struct RealSchur {
    /// Orthogonal Schur vectors.
    pub u: Matrix,
    /// Upper quasi-triangular factor; 2x2 diagonal blocks carry complex pairs.
    pub t: Matrix,
}

impl RealSchur {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        quasi_triangular_eigenvalues(&self.t)
    }
}

fn hessenberg(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut v = Matrix::identity(n);
    if n < 3 {
        return (h, v);
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }
    for m in (1..high).rev() {
        if h[(m, m - 1)] != 0.0 {
            for i in m + 1..=high {
                ort[i] = h[(i, m - 1)];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * v[(i, j)];
                }
                g = (g / ort[m]) / h[(m, m - 1)];
                for i in m..=high {
                    v[(i, j)] += g * ort[i];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = 0.0;
        }
    }
    (h, v)
}

/// Real Schur form of a square matrix.
pub fn real_schur(a: &Matrix) -> Result<RealSchur, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare);
    }
    let nn = a.nrows();
    if nn == 0 {
        return Ok(RealSchur { u: Matrix::zeros(0, 0), t: Matrix::zeros(0, 0) });
    }
    let (mut h, mut v) = hessenberg(a);
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let max_total = 100 * nn.max(10);
    while n >= 0 {
        let nu = n as usize;
        let mut l = nu;
        while l > 0 {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < eps * s {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[(nu, nu)] += exshift;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in 0..nn {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
                h[(nu, nu - 1)] = 0.0;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if total_iter > max_total {
                return Err(LinalgError::NoConvergence);
            }

            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in 0..nn {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }
    for i in 0..nn {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = 0.0;
        }
    }
    clean_subdiagonal(&mut h);
    Ok(RealSchur { u: v, t: h })
}

/// Zeroes subdiagonal entries that would otherwise chain two 2x2 blocks.
fn clean_subdiagonal(t: &mut Matrix) {
    let n = t.nrows();
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] != 0.0 {
            if i + 2 < n {
                t[(i + 2, i + 1)] = 0.0;
            }
            i += 2;
        } else {
            i += 1;
        }
    }
}

/// `(start, size)` of each diagonal block of an upper quasi-triangular matrix.
pub fn quasi_triangular_blocks(t: &Matrix) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

fn block_eigenvalues(t: &Matrix, start: usize, size: usize) -> [Complex64; 2] {
    if size == 1 {
        let v = Complex64::new(t[(start, start)], 0.0);
        return [v, v];
    }
    let (a, b, c, d) = (t[(start, start)], t[(start, start + 1)], t[(start + 1, start)], t[(start + 1, start + 1)]);
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    let mid = 0.5 * (a + d);
    if disc >= 0.0 {
        let sq = disc.sqrt();
        [Complex64::new(mid + sq, 0.0), Complex64::new(mid - sq, 0.0)]
    } else {
        let sq = (-disc).sqrt();
        [Complex64::new(mid, sq), Complex64::new(mid, -sq)]
    }
}

fn quasi_triangular_eigenvalues(t: &Matrix) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(t.nrows());
    for (start, size) in quasi_triangular_blocks(t) {
        let ev = block_eigenvalues(t, start, size);
        out.extend_from_slice(&ev[..size]);
    }
    out
}

/// Diagonal similarity scaling (powers of two) that equalizes row and column norms.
/// Returns the balanced matrix and the scaling vector `d` with `B = D^{-1} A D`.
pub fn balance(a: &Matrix) -> (Matrix, Vec<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![1.0; n];
    const RADIX: f64 = 2.0;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut g = r / RADIX;
            let mut f = 1.0;
            let s = c + r;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                }
                for j in 0..n {
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}

/// Eigenvalues of a general real matrix (balanced, then real Schur).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    let (b, _) = balance(a);
    Ok(real_schur(&b)?.eigenvalues())
}

/// Solves the small Sylvester equation `A11 X - X A22 = rhs` by Kronecker expansion.
fn small_sylvester(a11: &Matrix, a22: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    let p = a11.nrows();
    let q = a22.nrows();
    let dim = p * q;
    // vec(X) column-major: index = i + p*j
    let mut k = Matrix::zeros(dim, dim);
    for j in 0..q {
        for i in 0..p {
            let row = i + p * j;
            for l in 0..p {
                k[(row, l + p * j)] += a11[(i, l)];
            }
            for l in 0..q {
                k[(row, i + p * l)] -= a22[(l, j)];
            }
        }
    }
    let mut b = Matrix::zeros(dim, 1);
    for j in 0..q {
        for i in 0..p {
            b[(i + p * j, 0)] = rhs[(i, j)];
        }
    }
    let x = super::lu::solve(&k, &b).map_err(|_| LinalgError::CommonEigenvalue)?;
    Ok(Matrix::from_fn(p, q, |i, j| x[(i + p * j, 0)]))
}

/// Swaps the adjacent diagonal blocks of sizes `p` (at `k`) and `q` (at `k + p`).
fn swap_blocks(s: &mut RealSchur, k: usize, p: usize, q: usize) -> Result<(), LinalgError> {
    let n = s.t.nrows();
    let m = p + q;
    let a11 = s.t.block(k, k + p, k, k + p);
    let a22 = s.t.block(k + p, k + m, k + p, k + m);
    let a12 = s.t.block(k, k + p, k + p, k + m);
    let x = small_sylvester(&a11, &a22, &a12)?;
    let mut basis = Matrix::zeros(m, q);
    for i in 0..p {
        for j in 0..q {
            basis[(i, j)] = -x[(i, j)];
        }
    }
    for j in 0..q {
        basis[(p + j, j)] = 1.0;
    }
    let (qm, _) = householder_qr(&basis);
    let local_norm = s.t.block(k, k + m, k, k + m).max_abs();

    // T <- Q^T T Q on the affected rows/columns.
    let rows = s.t.block(k, k + m, 0, n);
    let new_rows = &qm.transpose() * &rows;
    s.t.set_block(k, 0, &new_rows);
    let cols = s.t.block(0, n, k, k + m);
    let new_cols = &cols * &qm;
    s.t.set_block(0, k, &new_cols);
    let ucols = s.u.block(0, n, k, k + m);
    let new_u = &ucols * &qm;
    s.u.set_block(0, k, &new_u);

    // The block below the new leading q x q block must vanish.
    let mut resid: f64 = 0.0;
    for i in k + q..k + m {
        for j in k..k + q {
            resid = resid.max(s.t[(i, j)].abs());
            s.t[(i, j)] = 0.0;
        }
    }
    if resid > 1e-10 * local_norm.max(f64::MIN_POSITIVE) {
        return Err(LinalgError::SwapRejected);
    }
    for i in k..k + m {
        for j in 0..i.saturating_sub(1) {
            s.t[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Reorders a real Schur form so that every block whose eigenvalue satisfies
/// `select` comes first. Returns the number of leading selected rows.
pub fn reorder_schur(
    s: &mut RealSchur,
    mut select: impl FnMut(Complex64) -> bool,
) -> Result<usize, LinalgError> {
    let n = s.t.nrows();
    let mut ks = 0;
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && s.t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        let ev = block_eigenvalues(&s.t, i, size)[0];
        if select(ev) {
            let mut pos = i;
            while pos > ks {
                let prev = if pos >= 2 && s.t[(pos - 1, pos - 2)] != 0.0 { 2 } else { 1 };
                swap_blocks(s, pos - prev, prev, size)?;
                pos -= prev;
            }
            ks += size;
        }
        i += size;
    }
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_schur(a: &Matrix, s: &RealSchur) {
        let n = a.nrows();
        let recon = &(&s.u * &s.t) * &s.u.transpose();
        assert!((&recon - a).max_abs() < 1e-12 * a.max_abs().max(1.0), "reconstruction");
        assert!((&(&s.u.transpose() * &s.u) - &Matrix::identity(n)).max_abs() < 1e-12);
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                assert_eq!(s.t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn schur_of_rotation_and_decay() {
        let a = Matrix::from_rows(&[
            &[0.0, 1.0, 0.0, 2.0],
            &[-4.0, -0.5, 1.0, 0.0],
            &[0.0, 0.0, -3.0, 1.0],
            &[1.0, 0.0, 0.0, -1.0],
        ]);
        let s = real_schur(&a).unwrap();
        check_schur(&a, &s);
        let mut ev = s.eigenvalues();
        let trace: f64 = ev.iter().map(|z| z.re).sum();
        assert!((trace - a.trace()).abs() < 1e-12);
        ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert_eq!(ev.len(), 4);
    }

    #[test]
    fn diagonal_eigenvalues() {
        let a = Matrix::diag(&[-1.0, -2.0, 3.0]);
        let mut ev: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(ev, vec![-2.0, -1.0, 3.0]);
    }

    #[test]
    fn reorder_moves_selected_first() {
        let a = Matrix::from_rows(&[
            &[0.0, 1.0, 0.3, 0.0, 0.1],
            &[-9.0, -0.2, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 1e-3, 0.5, 0.2],
            &[0.5, 0.0, 0.0, -2.0, 1.0],
            &[0.0, 0.3, 0.0, 0.0, -5.0],
        ]);
        let mut s = real_schur(&a).unwrap();
        let before: Vec<Complex64> = s.eigenvalues();
        let ks = reorder_schur(&mut s, |z| z.re < -0.05).unwrap();
        check_schur(&a, &s);
        let after = s.eigenvalues();
        let stable = before.iter().filter(|z| z.re < -0.05).count();
        assert_eq!(ks, stable);
        for (i, z) in after.iter().enumerate() {
            assert_eq!(i < ks, z.re < -0.05, "eigenvalue {z} at {i}");
        }
    }
}
