use num_complex::Complex64;

use crate::error::{usage, Result};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return usage(format!(
                "complex matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                entries.len()
            ));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return usage("complex matrix entries must be finite");
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Assembles a matrix from separate real and imaginary planes (row-major).
    pub fn from_planes(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != rows * cols || im.len() != rows * cols {
            return usage("real/imaginary planes do not match the matrix size");
        }
        let entries = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: Complex64) {
        self.entries[r * self.cols + c] = value;
    }

    pub fn real_plane(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.re).collect()
    }

    pub fn imag_plane(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.im).collect()
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn column_norm_sqr(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self.get(r, c).norm_sqr()).sum()
    }

    /// Matrix-vector product `A x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return usage(format!(
                "matrix has {} columns but vector has length {}",
                self.cols,
                x.len()
            ));
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = &self.entries[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    /// Matrix-vector product with a real vector.
    pub fn mul_real_vec(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.mul_vec(&xc)
    }

    /// Product `A B`.
    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return usage("inner dimensions do not agree");
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.entries[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    /// Real representation `[[Re, -Im], [Im, Re]]` of size 2r x 2c, row-major.
    ///
    /// For Hermitian positive definite `A`, `det(real_rep(A)) = det(A)^2`.
    pub fn real_rep(&self) -> Vec<f64> {
        let (r, c) = (self.rows, self.cols);
        let width = 2 * c;
        let mut out = vec![0.0; 4 * r * c];
        for i in 0..r {
            for j in 0..c {
                let z = self.get(i, j);
                out[i * width + j] = z.re;
                out[i * width + c + j] = -z.im;
                out[(r + i) * width + j] = z.im;
                out[(r + i) * width + c + j] = z.re;
            }
        }
        out
    }
}
