//! Dense symmetric (and Hermitian) positive-definite helpers on row-major
//! `n x n` slices.

use num_complex::Complex64;

/// Lower Cholesky factor `L` with `A = L Lᵀ`, or `None` if `A` is not
/// numerically positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `ln det A` from its Cholesky factor.
pub fn logdet_from_cholesky(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// `A⁻¹` given the Cholesky factor of `A`.
pub fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = cholesky_solve(l, n, &e);
        for r in 0..n {
            inv[r * n + c] = col[r];
        }
    }
    inv
}

/// Lower Cholesky factor `L` with `A = L Lᴴ` for Hermitian `A`.
pub fn cholesky_hermitian(a: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k].conj();
            }
            if i == j {
                let d = sum.re;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = Complex64::new(d.sqrt(), 0.0);
            } else {
                l[i * n + j] = sum / l[j * n + j].re;
            }
        }
    }
    Some(l)
}

/// `ln det A` from the factor returned by [`cholesky_hermitian`].
pub fn logdet_hermitian(l: &[Complex64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].re.ln()).sum::<f64>()
}

/// `A⁻¹` given the factor returned by [`cholesky_hermitian`].
pub fn hermitian_inverse(l: &[Complex64], n: usize) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut inv = vec![zero; n * n];
    let mut y = vec![zero; n];
    let mut x = vec![zero; n];
    for c in 0..n {
        for i in 0..n {
            let mut s = if i == c { Complex64::new(1.0, 0.0) } else { zero };
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i].re;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i].conj() * x[k];
            }
            x[i] = s / l[i * n + i].re;
        }
        for r in 0..n {
            inv[r * n + c] = x[r];
        }
    }
    inv
}
