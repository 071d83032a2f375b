//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3..13.

use num_traits::Float;

use super::lu::Lu;
use super::{LinalgError, Matrix};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn add_scaled(acc: &mut Matrix, m: &Matrix, k: f64) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(m.as_slice()) {
        *a += k * *b;
    }
}

fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u_inner = Matrix::identity(n).scale(b[1]);
    let mut v = Matrix::identity(n).scale(b[0]);
    let mut pow = Matrix::identity(n);
    let mut k = 2;
    while k < b.len() {
        pow = &pow * &a2;
        add_scaled(&mut v, &pow, b[k]);
        if k + 1 < b.len() {
            add_scaled(&mut u_inner, &pow, b[k + 1]);
        }
        k += 2;
    }
    (a * &u_inner, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let id = Matrix::identity(n);

    let mut t = a6.scale(b[13]);
    add_scaled(&mut t, &a4, b[11]);
    add_scaled(&mut t, &a2, b[9]);
    let mut u_inner = &a6 * &t;
    add_scaled(&mut u_inner, &a6, b[7]);
    add_scaled(&mut u_inner, &a4, b[5]);
    add_scaled(&mut u_inner, &a2, b[3]);
    add_scaled(&mut u_inner, &id, b[1]);
    let u = a * &u_inner;

    let mut t = a6.scale(b[12]);
    add_scaled(&mut t, &a4, b[10]);
    add_scaled(&mut t, &a2, b[8]);
    let mut v = &a6 * &t;
    add_scaled(&mut v, &a6, b[6]);
    add_scaled(&mut v, &a4, b[4]);
    add_scaled(&mut v, &a2, b[2]);
    add_scaled(&mut v, &id, b[0]);
    (u, v)
}

pub fn expm(a: &Matrix) -> Result<Matrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare);
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let norm = a.norm_1();
    let solve = |u: &Matrix, v: &Matrix| -> Result<Matrix, LinalgError> {
        let p = v + u;
        let q = v - u;
        Ok(Lu::new(&q)?.solve(&p))
    };
    for &(m, theta) in &THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, b);
            return solve(&u, &v);
        }
    }
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(s));
    let (u, v) = pade13(&scaled);
    let mut r = solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_rotation() {
        let e = expm(&Matrix::from_rows(&[&[-1.0]])).unwrap();
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        let w = 3.0f64;
        let a = Matrix::from_rows(&[&[0.0, w], &[-w, 0.0]]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - w.cos()).abs() < 1e-13);
        assert!((e[(0, 1)] - w.sin()).abs() < 1e-13);
        assert!((e[(1, 0)] + w.sin()).abs() < 1e-13);
    }

    #[test]
    fn nilpotent_is_exact() {
        let a = Matrix::from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]);
        let e = expm(&a.scale(20.0)).unwrap();
        assert!((e[(0, 1)] - 20.0).abs() < 1e-10);
        assert!((e[(0, 2)] - 200.0).abs() < 1e-9);
        assert!((e[(2, 2)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn small_norm_branch() {
        let a = Matrix::from_rows(&[&[0.001, 0.002], &[-0.003, 0.0]]);
        let e = expm(&a).unwrap();
        // second order Taylor suffices at this scale
        let approx = &(&Matrix::identity(2) + &a) + &(&a * &a).scale(0.5);
        assert!((&e - &approx).max_abs() < 1e-8);
    }
}
