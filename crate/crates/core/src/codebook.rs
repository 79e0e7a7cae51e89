//! Shared codebooks: the trainable tanh parameterization, fixed orthogonal
//! and Gaussian baselines, and observation-to-codeword assignments.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{usage, Result};
use crate::mathkit::{ComplexMatrix, RealTensor, Tape, Var};

/// Slack allowed by [`power_check`].
pub const POWER_TOLERANCE: f64 = 1e-9;

/// Largest `|tanh|` used when mapping a codeword back to pre-parameters.
pub const ATANH_CLIP: f64 = 1.0 - 1e-6;

/// Unconstrained pre-parameters of a learned codebook.
///
/// Entry `(r, m)` of the codebook is `a·tanh(re[r, m]) + i·a·tanh(im[r, m])`
/// with `a = √(E/(2N))`, so every complex entry has `|c|² < E/N` and every
/// column satisfies `‖c_m‖² < E`.
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookParams {
    rows: usize,
    cols: usize,
    energy: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CodebookParams {
    pub fn new(rows: usize, cols: usize, energy: f64, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return usage("codebook needs at least one row and one column");
        }
        if !(energy > 0.0) || !energy.is_finite() {
            return usage(format!("energy budget must be positive, got {energy}"));
        }
        if re.len() != rows * cols || im.len() != rows * cols {
            return usage("pre-parameter planes do not match the codebook size");
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return usage("codebook pre-parameters must be finite");
        }
        Ok(Self {
            rows,
            cols,
            energy,
            re,
            im,
        })
    }

    /// Pre-parameters i.i.d. uniform on `[−1, 1]`, real plane first.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, energy: f64, rng: &mut R) -> Result<Self> {
        let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let re = (0..rows * cols).map(|_| u.sample(rng)).collect();
        let im = (0..rows * cols).map(|_| u.sample(rng)).collect();
        Self::new(rows, cols, energy, re, im)
    }

    pub fn zeros(rows: usize, cols: usize, energy: f64) -> Result<Self> {
        Self::new(rows, cols, energy, vec![0.0; rows * cols], vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Per-component amplitude `√(E/(2N))`.
    pub fn scale(&self) -> f64 {
        (self.energy / (2.0 * self.rows as f64)).sqrt()
    }

    pub fn materialize(&self) -> Codebook {
        let a = self.scale();
        let entries = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&x, &y)| Complex64::new(a * x.tanh(), a * y.tanh()))
            .collect();
        let matrix = ComplexMatrix::new(self.rows, self.cols, entries).expect("finite by construction");
        Codebook {
            matrix,
            energy: self.energy,
        }
    }

    /// Pre-parameters reproducing `codebook` through component-wise
    /// `atanh(c / a)`, with `|c / a|` clipped to [`ATANH_CLIP`].
    pub fn from_codebook(codebook: &Codebook) -> Result<Self> {
        let (rows, cols) = (codebook.rows(), codebook.cols());
        let a = (codebook.energy / (2.0 * rows as f64)).sqrt();
        let inv = |v: f64| (v / a).clamp(-ATANH_CLIP, ATANH_CLIP).atanh();
        let re = codebook.matrix.entries().iter().map(|z| inv(z.re)).collect();
        let im = codebook.matrix.entries().iter().map(|z| inv(z.im)).collect();
        Self::new(rows, cols, codebook.energy, re, im)
    }

    /// Records the materialization on `tape`.
    pub fn record(&self, tape: &mut Tape) -> Result<CodebookVars> {
        let shape = vec![self.rows, self.cols];
        let pre_re = tape.leaf(RealTensor::new(shape.clone(), self.re.clone())?)?;
        let pre_im = tape.leaf(RealTensor::new(shape, self.im.clone())?)?;
        let a = self.scale();
        let t_re = tape.tanh(pre_re)?;
        let t_im = tape.tanh(pre_im)?;
        let re = tape.scale(t_re, a)?;
        let im = tape.scale(t_im, a)?;
        Ok(CodebookVars { pre_re, pre_im, re, im })
    }
}

/// Tape handles for a recorded codebook: trainable leaves and the
/// materialized planes.
#[derive(Clone, Copy, Debug)]
pub struct CodebookVars {
    pub pre_re: Var,
    pub pre_im: Var,
    pub re: Var,
    pub im: Var,
}

/// Free function form of [`CodebookParams::materialize`].
pub fn materialize_codebook(params: &CodebookParams) -> Codebook {
    params.materialize()
}

/// Complex `N x M` codebook whose columns respect `‖c_m‖² ≤ E`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    matrix: ComplexMatrix,
    energy: f64,
}

impl Codebook {
    pub fn new(matrix: ComplexMatrix, energy: f64) -> Result<Self> {
        if !(energy > 0.0) || !energy.is_finite() {
            return usage(format!("energy budget must be positive, got {energy}"));
        }
        if !power_check(&matrix, energy) {
            return usage("a codeword exceeds the energy budget");
        }
        Ok(Self { matrix, energy })
    }

    /// Columns `√E·e_m`; needs `N ≥ M`.
    pub fn orthogonal(cols: usize, rows: usize, energy: f64) -> Result<Self> {
        if rows < cols {
            return usage(format!("orthogonal codebook needs N ≥ M, got N = {rows}, M = {cols}"));
        }
        let mut matrix = ComplexMatrix::zeros(rows, cols);
        for m in 0..cols {
            matrix.set(m, m, Complex64::new(energy.sqrt(), 0.0));
        }
        Self::new(matrix, energy)
    }

    /// Entries i.i.d. `CN(0, E/N)`, then any column above the budget is
    /// rescaled onto it.
    pub fn gaussian<R: Rng + ?Sized>(cols: usize, rows: usize, energy: f64, rng: &mut R) -> Result<Self> {
        let mut matrix = gaussian_entries(cols, rows, energy, rng)?;
        for m in 0..cols {
            let norm = matrix.column_norm_sqr(m);
            if norm > energy {
                let k = (energy / norm).sqrt();
                for r in 0..rows {
                    let v = matrix.get(r, m) * k;
                    matrix.set(r, m, v);
                }
            }
        }
        Self::new(matrix, energy)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn column(&self, m: usize) -> Vec<Complex64> {
        self.matrix.column(m)
    }
}

/// Raw `CN(0, E/N)` entries, column budget not enforced.
pub fn gaussian_entries<R: Rng + ?Sized>(cols: usize, rows: usize, energy: f64, rng: &mut R) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 {
        return usage("codebook needs at least one row and one column");
    }
    let sd = (energy / (2.0 * rows as f64)).sqrt();
    let entries = (0..rows * cols)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(sd * re, sd * im)
        })
        .collect();
    ComplexMatrix::new(rows, cols, entries)
}

/// Whether every column satisfies `‖c_m‖² ≤ E` (with [`POWER_TOLERANCE`]).
pub fn power_check(codebook: &ComplexMatrix, energy: f64) -> bool {
    (0..codebook.cols()).all(|m| codebook.column_norm_sqr(m) <= energy + POWER_TOLERANCE)
}

/// Map from observation values to codeword indices, `a: {0..M−1} → {0..M′−1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodewordAssignment {
    map: Vec<usize>,
    codewords: usize,
}

impl CodewordAssignment {
    pub fn new(map: Vec<usize>, codewords: usize) -> Result<Self> {
        if map.is_empty() {
            return usage("assignment must cover at least one observation value");
        }
        if codewords == 0 || codewords > map.len() {
            return usage(format!("{codewords} codewords for {} observation values", map.len()));
        }
        if let Some(bad) = map.iter().find(|&&c| c >= codewords) {
            return usage(format!("codeword index {bad} out of range 0..{codewords}"));
        }
        Ok(Self { map, codewords })
    }

    pub fn identity(alphabet: usize) -> Self {
        Self::new((0..alphabet).collect(), alphabet).expect("identity is valid")
    }

    /// Adjacent binning `a(m) = ⌊m·M′/M⌋`.
    pub fn binned(alphabet: usize, codewords: usize) -> Result<Self> {
        if codewords == 0 || codewords > alphabet {
            return usage(format!("cannot bin {alphabet} values into {codewords} codewords"));
        }
        Self::new((0..alphabet).map(|m| m * codewords / alphabet).collect(), codewords)
    }

    pub fn alphabet(&self) -> usize {
        self.map.len()
    }

    pub fn codewords(&self) -> usize {
        self.codewords
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.codewords == self.map.len() && self.map.iter().enumerate().all(|(i, &c)| i == c)
    }

    pub fn apply(&self, m: usize) -> Result<usize> {
        match self.map.get(m) {
            Some(&c) => Ok(c),
            None => usage(format!("observation {m} outside alphabet of size {}", self.map.len())),
        }
    }

    /// Effective channel over codewords: sums `h_w` entries that share a codeword.
    pub fn compress(&self, h_w: &[Complex64]) -> Result<Vec<Complex64>> {
        if h_w.len() != self.map.len() {
            return usage(format!("{} effective gains for alphabet {}", h_w.len(), self.map.len()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.codewords];
        for (&c, v) in self.map.iter().zip(h_w) {
            out[c] += v;
        }
        Ok(out)
    }

    /// Type vector over codewords.
    pub fn compress_counts(&self, t: &[usize]) -> Result<Vec<f64>> {
        if t.len() != self.map.len() {
            return usage(format!("{} counts for alphabet {}", t.len(), self.map.len()));
        }
        let mut out = vec![0.0; self.codewords];
        for (&c, &n) in self.map.iter().zip(t) {
            out[c] += n as f64;
        }
        Ok(out)
    }
}

/// Codeword index and vector sent for observation `m`.
pub fn apply_assignment(
    assignment: &CodewordAssignment,
    codebook: &Codebook,
    m: usize,
) -> Result<(usize, Vec<Complex64>)> {
    if codebook.cols() != assignment.codewords() {
        return usage(format!(
            "codebook has {} columns, assignment expects {}",
            codebook.cols(),
            assignment.codewords()
        ));
    }
    let c = assignment.apply(m)?;
    Ok((c, codebook.column(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::rng::{stream, streams};
    use proptest::prelude::*;

    #[test]
    fn zero_pre_parameters_give_zero_codebook() {
        let c = CodebookParams::zeros(3, 4, 1.0).unwrap().materialize();
        assert!(c.matrix().entries().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn saturation_reaches_the_budget() {
        let (n, m, e) = (5, 3, 2.0);
        let p = CodebookParams::new(n, m, e, vec![1e3; n * m], vec![1e3; n * m]).unwrap();
        let c = p.materialize();
        for col in 0..m {
            assert!((c.matrix().column_norm_sqr(col) - e).abs() < 1e-12);
        }
        assert!(power_check(c.matrix(), e));
    }

    #[test]
    fn orthogonal_columns() {
        let c = Codebook::orthogonal(2, 2, 1.0).unwrap();
        assert_eq!(c.column(0), vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        assert_eq!(c.column(1), vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);
        let c4 = Codebook::orthogonal(3, 5, 4.0).unwrap();
        let gram = c4.matrix().adjoint().matmul(c4.matrix()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 4.0 } else { 0.0 };
                assert_eq!(gram.get(i, j), Complex64::new(want, 0.0));
            }
        }
        assert!(Codebook::orthogonal(3, 2, 1.0).is_err());
    }

    #[test]
    fn gaussian_codebook_variance_budget_and_determinism() {
        let (n, e) = (4, 2.0);
        let raw = gaussian_entries(250_000, n, e, &mut stream(1, streams::CODEBOOK)).unwrap();
        let var = raw.entries().iter().map(|z| z.norm_sqr()).sum::<f64>() / raw.entries().len() as f64;
        assert!((var / (e / n as f64) - 1.0).abs() < 0.01, "var {var}");

        let a = Codebook::gaussian(20, 5, 1.0, &mut stream(2, streams::CODEBOOK)).unwrap();
        let b = Codebook::gaussian(20, 5, 1.0, &mut stream(2, streams::CODEBOOK)).unwrap();
        assert_eq!(a, b);
        assert!(power_check(a.matrix(), 1.0));
    }

    #[test]
    fn power_check_cases() {
        assert!(power_check(&ComplexMatrix::zeros(3, 3), 1.0));
        let mut m = ComplexMatrix::zeros(2, 2);
        m.set(0, 1, Complex64::new(2f64.sqrt(), 0.0));
        assert!(!power_check(&m, 1.0));
    }

    #[test]
    fn assignments() {
        let id = CodewordAssignment::identity(5);
        assert_eq!(id.apply(3).unwrap(), 3);
        let one = CodewordAssignment::new(vec![0; 5], 1).unwrap();
        assert!((0..5).all(|m| one.apply(m).unwrap() == 0));
        let bins = CodewordAssignment::binned(20, 2).unwrap();
        assert_eq!(bins.apply(7).unwrap(), 0);
        assert_eq!(bins.apply(10).unwrap(), 1);
        assert!(bins.apply(20).is_err());
        assert!(CodewordAssignment::new(vec![0, 2], 2).is_err());

        let cb = CodebookParams::random(3, 2, 1.0, &mut stream(3, streams::INIT))
            .unwrap()
            .materialize();
        let (c, v) = apply_assignment(&bins, &cb, 15).unwrap();
        assert_eq!((c, v), (1, cb.column(1)));
    }

    #[test]
    fn identity_compression_is_bit_identical() {
        let mut rng = stream(4, streams::TRAIN);
        let h: Vec<Complex64> = crate::mathkit::sample_standard_complex_gaussian(&mut rng, 7);
        assert_eq!(CodewordAssignment::identity(7).compress(&h).unwrap(), h);
    }

    #[test]
    fn norm_gradient_matches_finite_differences() {
        let p = CodebookParams::random(2, 3, 1.5, &mut stream(5, streams::INIT)).unwrap();
        let norm =
            |p: &CodebookParams| -> f64 { p.materialize().matrix().entries().iter().map(|z| z.norm_sqr()).sum() };
        let mut tape = Tape::new();
        let vars = p.record(&mut tape).unwrap();
        let sr = tape.square(vars.re).unwrap();
        let si = tape.square(vars.im).unwrap();
        let a = tape.sum(sr).unwrap();
        let b = tape.sum(si).unwrap();
        let total = tape.add(a, b).unwrap();
        assert!((tape.scalar(total).unwrap() - norm(&p)).abs() < 1e-12);
        let g = tape.backward(total).unwrap();
        let (gre, gim) = (g.wrt(vars.pre_re, 6).unwrap(), g.wrt(vars.pre_im, 6).unwrap());
        let h = 1e-4;
        for i in 0..6 {
            for (plane, grad) in [(0, &gre), (1, &gim)] {
                let mut up = p.clone();
                let mut down = p.clone();
                if plane == 0 {
                    up.re[i] += h;
                    down.re[i] -= h;
                } else {
                    up.im[i] += h;
                    down.im[i] -= h;
                }
                let fd = (norm(&up) - norm(&down)) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 + 1e-4 * fd.abs().max(grad[i].abs()));
            }
        }
    }

    #[test]
    fn round_trip_through_pre_parameters() {
        let p = CodebookParams::random(4, 6, 1.0, &mut stream(6, streams::INIT)).unwrap();
        let c = p.materialize();
        let back = CodebookParams::from_codebook(&c).unwrap().materialize();
        for (a, b) in c.matrix().entries().iter().zip(back.matrix().entries()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn materialized_codebooks_respect_the_budget(
            re in proptest::collection::vec(-50.0f64..50.0, 12),
            im in proptest::collection::vec(-50.0f64..50.0, 12),
            energy in 0.01f64..10.0,
        ) {
            let p = CodebookParams::new(3, 4, energy, re, im).unwrap();
            prop_assert!(power_check(p.materialize().matrix(), energy));
        }

        #[test]
        fn materialization_is_monotone_per_entry(v in -5.0f64..5.0, dv in 1e-3f64..3.0) {
            let lo = CodebookParams::new(1, 1, 1.0, vec![v], vec![v]).unwrap().materialize();
            let hi = CodebookParams::new(1, 1, 1.0, vec![v + dv], vec![v + dv]).unwrap().materialize();
            let (a, b) = (lo.matrix().get(0, 0), hi.matrix().get(0, 0));
            prop_assert!(b.re >= a.re && b.im >= a.im);
        }
    }
}
