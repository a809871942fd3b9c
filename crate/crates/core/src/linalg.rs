//! Closed-form pointwise algebra for the 1x1 and 2x2 Hermitian matrices that
//! appear at every grid point (metric, mixed Hessians and their combinations).
//! The packed layout is [h11] for n = 1 and [h11, h22, Re h12, Im h12] for
//! n = 2; Hermiticity is structural.

use num_complex::Complex64;

/// Matrix entry (i, j) of a packed Hermitian block.
pub fn entry(n: usize, v: &[f64], i: usize, j: usize) -> Complex64 {
    if n == 1 {
        return Complex64::new(v[0], 0.0);
    }
    match (i, j) {
        (0, 0) => Complex64::new(v[0], 0.0),
        (1, 1) => Complex64::new(v[1], 0.0),
        (0, 1) => Complex64::new(v[2], v[3]),
        (1, 0) => Complex64::new(v[2], -v[3]),
        _ => unreachable!("matrix dimension is at most 2"),
    }
}

pub fn det(n: usize, v: &[f64]) -> f64 {
    if n == 1 {
        v[0]
    } else {
        v[0] * v[1] - (v[2] * v[2] + v[3] * v[3])
    }
}

pub fn trace(n: usize, v: &[f64]) -> f64 {
    if n == 1 {
        v[0]
    } else {
        v[0] + v[1]
    }
}

pub fn min_eig(n: usize, v: &[f64]) -> f64 {
    if n == 1 {
        v[0]
    } else {
        let half_tr = 0.5 * (v[0] + v[1]);
        let half_diff = 0.5 * (v[0] - v[1]);
        half_tr - (half_diff * half_diff + v[2] * v[2] + v[3] * v[3]).sqrt()
    }
}

pub fn max_eig(n: usize, v: &[f64]) -> f64 {
    if n == 1 {
        v[0]
    } else {
        let half_tr = 0.5 * (v[0] + v[1]);
        let half_diff = 0.5 * (v[0] - v[1]);
        half_tr + (half_diff * half_diff + v[2] * v[2] + v[3] * v[3]).sqrt()
    }
}

/// Inverse of a packed Hermitian block, written into `out`.
pub fn invert(n: usize, v: &[f64], out: &mut [f64]) {
    if n == 1 {
        out[0] = 1.0 / v[0];
    } else {
        let d = det(2, v);
        out[0] = v[1] / d;
        out[1] = v[0] / d;
        out[2] = -v[2] / d;
        out[3] = -v[3] / d;
    }
}

/// tr(A^{ -1} H) for packed Hermitian blocks A (positive) and H; the result
/// is real by Hermiticity.
pub fn trace_inv_pair(n: usize, a: &[f64], h: &[f64]) -> f64 {
    if n == 1 {
        h[0] / a[0]
    } else {
        let d = det(2, a);
        (a[1] * h[0] + a[0] * h[1] - 2.0 * (a[2] * h[2] + a[3] * h[3])) / d
    }
}

/// Hermitian quadratic form sum_{ij} M[i][j] w_i conj(w_j) of a packed block.
pub fn quadratic_form(n: usize, m: &[f64], w: &[Complex64]) -> f64 {
    if n == 1 {
        m[0] * w[0].norm_sqr()
    } else {
        let m12 = Complex64::new(m[2], m[3]);
        m[0] * w[0].norm_sqr() + m[1] * w[1].norm_sqr() + 2.0 * (m12 * w[0] * w[1].conj()).re
    }
}
