//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! Operations evaluate eagerly while they are recorded, so building the graph
//! is the forward pass. Nodes are appended in evaluation order, which makes
//! the node list a topological order; [`Tape::backward`] walks it once in
//! reverse. Complex quantities never appear on the tape: callers keep real
//! and imaginary planes as separate real nodes.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;

use super::linalg;
use super::tensor::RealTensor;
use crate::error::{usage, Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Batched closed-form KL divergence `KL[CN(μ_b, Σ_b) ‖ CN(0, I)]` for
/// received signals `y = C h + z` whose effective channel has per-entry
/// mean `μ₀·t_b` and covariance `σ_h²·diag(t_b)`, with noise `CN(0, σ_z² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKlSpec {
    /// Per-sample counts `t_b`, row-major `batch x columns`.
    pub counts: Vec<f64>,
    pub batch: usize,
    /// `|μ₀|²`; 1 for unit gains and the all-ones Rician mean.
    pub mean_gain_sqr: f64,
    /// Scattering variance `σ_h²` (0 for unit gains).
    pub fading_var: f64,
    /// Noise variance `σ_z²`.
    pub noise_var: f64,
}

#[derive(Debug)]
struct KlCache {
    spec: GaussianKlSpec,
    /// `σ_h²(I − Σ_b⁻¹)` per sample, each complex `N x N`; empty without fading.
    curvature: Vec<Vec<Complex64>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    AddColumnBias(usize, usize),
    ConcatRows(usize, usize),
    Relu(usize),
    Tanh(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    SoftmaxCrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
        clamped: Vec<bool>,
    },
    GaussianKl {
        re: usize,
        im: usize,
        cache: Box<KlCache>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::AddColumnBias(..) => "add_column_bias",
            Op::ConcatRows(..) => "concat_rows",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::GaussianKl { .. } => "gaussian_kl",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: RealTensor,
}

/// Recorded computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    /// Drops every node. Handles issued before the reset become stale.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return usage(format!("variable {} is stale or from another tape", v.index));
        }
        Ok(v.index)
    }

    fn push(&mut self, op: Op, value: RealTensor) -> Result<Var> {
        let index = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                node: index,
                op: op.name(),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(Var { tape: self.id, index })
    }

    fn val(&self, i: usize) -> &RealTensor {
        &self.nodes[i].value
    }

    /// Trainable input. Gradients are reported for leaves.
    pub fn leaf(&mut self, value: RealTensor) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: RealTensor) -> Result<Var> {
        self.push(Op::Constant, value)
    }

    pub fn value(&self, v: Var) -> Result<&RealTensor> {
        let i = self.check(v)?;
        Ok(self.val(i))
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v)?
            .item()
            .ok_or_else(|| Error::Usage("node is not a scalar".into()))
    }

    /// Samples whose probability fell below the log floor in a
    /// cross-entropy node.
    pub fn clamped_samples(&self, v: Var) -> Result<usize> {
        let i = self.check(v)?;
        match &self.nodes[i].op {
            Op::SoftmaxCrossEntropy { clamped, .. } => Ok(clamped.iter().filter(|c| **c).count()),
            _ => usage("node is not a cross-entropy node"),
        }
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.val(ia), self.val(ib));
        if ta.shape() != tb.shape() {
            return usage(format!(
                "elementwise shapes differ: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = RealTensor::from_parts(ta.shape().to_vec(), data);
        self.push(op(ia, ib), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.val(a.index);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = RealTensor::from_parts(t.shape().to_vec(), data);
        self.push(op, value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let i = self.check(a)?;
        self.unary(a, |x| c * x, Op::Scale(i, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(i))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        self.unary(a, f64::tanh, Op::Tanh(i))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        self.unary(a, |x| x * x, Op::Square(i))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let s = self.val(i).data().iter().sum();
        self.push(Op::Sum(i), RealTensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let t = self.val(i);
        if t.is_empty() {
            return usage("mean of an empty tensor");
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(i), RealTensor::scalar(m))
    }

    /// Matrix product of `m x k` and `k x n` tensors (vectors are columns).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.val(ia), self.val(ib));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return usage(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            ));
        }
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        self.push(Op::MatMul(ia, ib), RealTensor::from_parts(vec![m, n], out))
    }

    /// `x + bias 1ᵀ` for `x` of shape `m x n` and `bias` of length `m`.
    pub fn add_column_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.check(x)?, self.check(bias)?);
        let (tx, tb) = (self.val(ix), self.val(ib));
        let (m, n) = (tx.rows(), tx.cols());
        if tb.len() != m {
            return usage(format!("bias length {} does not match {m} rows", tb.len()));
        }
        let mut out = tx.data().to_vec();
        for r in 0..m {
            let b = tb.data()[r];
            out[r * n..(r + 1) * n].iter_mut().for_each(|v| *v += b);
        }
        self.push(Op::AddColumnBias(ix, ib), RealTensor::from_parts(vec![m, n], out))
    }

    /// Stacks `a` on top of `b` (equal column counts).
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (ta, tb) = (self.val(ia), self.val(ib));
        if ta.cols() != tb.cols() {
            return usage("concat_rows needs equal column counts");
        }
        let mut out = ta.data().to_vec();
        out.extend_from_slice(tb.data());
        let shape = vec![ta.rows() + tb.rows(), ta.cols()];
        self.push(Op::ConcatRows(ia, ib), RealTensor::from_parts(shape, out))
    }

    /// Mean negative log-softmax of `logits` (classes x batch) at `labels`.
    ///
    /// Probabilities below `floor` are clamped to it; a clamped sample
    /// contributes `−ln floor` and no gradient.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], floor: f64) -> Result<Var> {
        let il = self.check(logits)?;
        let t = self.val(il);
        let (classes, batch) = (t.rows(), t.cols());
        if labels.len() != batch || batch == 0 {
            return usage(format!("{} labels for a batch of {batch}", labels.len()));
        }
        if labels.iter().any(|&l| l >= classes) {
            return usage("label out of range");
        }
        let log_floor = floor.ln();
        let mut probs = vec![0.0; classes * batch];
        let mut clamped = vec![false; batch];
        let mut total = 0.0;
        for (b, &label) in labels.iter().enumerate() {
            let col = |c: usize| t.data()[c * batch + b];
            let max = (0..classes).map(col).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + (0..classes).map(|c| (col(c) - max).exp()).sum::<f64>().ln();
            for c in 0..classes {
                probs[c * batch + b] = (col(c) - lse).exp();
            }
            let log_q = col(label) - lse;
            if log_q < log_floor {
                clamped[b] = true;
                total -= log_floor;
            } else {
                total -= log_q;
            }
        }
        let op = Op::SoftmaxCrossEntropy {
            logits: il,
            labels: labels.to_vec(),
            probs,
            clamped,
        };
        self.push(op, RealTensor::scalar(total / batch as f64))
    }

    /// Batch mean of the closed-form complex-Gaussian KL to `CN(0, I_N)` for a
    /// codebook given by real and imaginary planes `re`, `im` (N x M').
    pub fn gaussian_kl(&mut self, re: Var, im: Var, spec: GaussianKlSpec) -> Result<Var> {
        let (ir, ii) = (self.check(re)?, self.check(im)?);
        let (tr, ti) = (self.val(ir), self.val(ii));
        if tr.shape() != ti.shape() {
            return usage("real and imaginary codebook planes differ in shape");
        }
        let (n, m) = (tr.rows(), tr.cols());
        if spec.batch == 0 || spec.counts.len() != spec.batch * m {
            return usage(format!(
                "{} counts for batch {} with {m} codewords",
                spec.counts.len(),
                spec.batch
            ));
        }
        if spec.noise_var <= 0.0 || spec.fading_var < 0.0 {
            return usage("noise variance must be positive and fading variance nonnegative");
        }
        let (cre, cim) = (tr.data(), ti.data());
        let mut total = 0.0;
        let mut curvature = Vec::new();
        let fixed = n as f64 * (spec.noise_var - 1.0 - spec.noise_var.ln());
        let cols: Vec<Complex64> = (0..n * m).map(|i| Complex64::new(cre[i], cim[i])).collect();
        let mut cov = vec![Complex64::new(0.0, 0.0); n * n];
        for b in 0..spec.batch {
            let t = &spec.counts[b * m..(b + 1) * m];
            let mut mean_sqr = 0.0;
            for r in 0..n {
                let (mut mr, mut mi) = (0.0, 0.0);
                for j in 0..m {
                    mr += cre[r * m + j] * t[j];
                    mi += cim[r * m + j] * t[j];
                }
                mean_sqr += mr * mr + mi * mi;
            }
            let mut kl = spec.mean_gain_sqr * mean_sqr;
            if spec.fading_var > 0.0 {
                hermitian_covariance(&cols, n, m, t, spec.fading_var, spec.noise_var, &mut cov);
                let l = linalg::cholesky_hermitian(&cov, n).ok_or(Error::NotPositiveDefinite { index: b })?;
                let trace: f64 = (0..n).map(|i| cov[i * n + i].re).sum();
                kl += trace - n as f64 - linalg::logdet_hermitian(&l, n);
                let mut g = linalg::hermitian_inverse(&l, n);
                for (idx, v) in g.iter_mut().enumerate() {
                    let eye = if idx / n == idx % n { 1.0 } else { 0.0 };
                    *v = (Complex64::new(eye, 0.0) - *v) * spec.fading_var;
                }
                curvature.push(g);
            } else {
                kl += fixed;
            }
            total += kl;
        }
        let value = RealTensor::scalar(total / spec.batch as f64);
        let cache = Box::new(KlCache { spec, curvature });
        self.push(Op::GaussianKl { re: ir, im: ii, cache }, value)
    }

    /// Gradients of the scalar `root` with respect to every node it depends on.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return usage("backward on an empty tape");
        }
        let r = self.check(root)?;
        if self.val(r).len() != 1 {
            return usage("backward root must be a scalar");
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; r + 1];
        grads[r] = Some(vec![1.0]);
        for i in (0..=r).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.iter().copied());
                accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.iter().copied());
                accumulate(grads, *b, g.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(*a).data(), self.val(*b).data());
                accumulate(grads, *a, g.iter().zip(vb).map(|(x, y)| x * y));
                accumulate(grads, *b, g.iter().zip(va).map(|(x, y)| x * y));
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.iter().map(|v| c * v)),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                // dA = G Bᵀ, dB = Aᵀ G
                let mut da = vec![0.0; m * k];
                for r in 0..m {
                    for c in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[r * n + j] * tb.data()[c * n + j];
                        }
                        da[r * k + c] = s;
                    }
                }
                let mut db = vec![0.0; k * n];
                for r in 0..m {
                    for c in 0..k {
                        let x = ta.data()[r * k + c];
                        let row = &g[r * n..(r + 1) * n];
                        for (d, gv) in db[c * n..(c + 1) * n].iter_mut().zip(row) {
                            *d += x * gv;
                        }
                    }
                }
                accumulate(grads, *a, da.into_iter());
                accumulate(grads, *b, db.into_iter());
            }
            Op::AddColumnBias(x, bias) => {
                let n = node.value.cols();
                accumulate(grads, *x, g.iter().copied());
                accumulate(grads, *bias, g.chunks(n).map(|row| row.iter().sum::<f64>()));
            }
            Op::ConcatRows(a, b) => {
                let split = self.val(*a).len();
                accumulate(grads, *a, g[..split].iter().copied());
                accumulate(grads, *b, g[split..].iter().copied());
            }
            Op::Relu(a) => {
                let x = self.val(*a).data();
                accumulate(
                    grads,
                    *a,
                    g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }),
                );
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                accumulate(grads, *a, g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)));
            }
            Op::Square(a) => {
                let x = self.val(*a).data();
                accumulate(grads, *a, g.iter().zip(x).map(|(gv, xv)| 2.0 * xv * gv));
            }
            Op::Sum(a) => {
                let len = self.val(*a).len();
                accumulate(grads, *a, std::iter::repeat_n(g[0], len));
            }
            Op::Mean(a) => {
                let len = self.val(*a).len();
                accumulate(grads, *a, std::iter::repeat_n(g[0] / len as f64, len));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
                clamped,
            } => {
                let batch = labels.len();
                let scale = g[0] / batch as f64;
                let mut d = probs.clone();
                for (c, v) in d.iter_mut().enumerate() {
                    let b = c % batch;
                    if clamped[b] {
                        *v = 0.0;
                    } else {
                        if c / batch == labels[b] {
                            *v -= 1.0;
                        }
                        *v *= scale;
                    }
                }
                accumulate(grads, *logits, d.into_iter());
            }
            Op::GaussianKl { re, im, cache } => {
                let (dre, dim_) = self.kl_backward(*re, *im, cache, g[0]);
                accumulate(grads, *re, dre.into_iter());
                accumulate(grads, *im, dim_.into_iter());
            }
        }
    }

    fn kl_backward(&self, re: usize, im: usize, cache: &KlCache, upstream: f64) -> (Vec<f64>, Vec<f64>) {
        let (tr, ti) = (self.val(re), self.val(im));
        let (n, m) = (tr.rows(), tr.cols());
        let (cre, cim) = (tr.data(), ti.data());
        let spec = &cache.spec;
        let w = upstream / spec.batch as f64;
        let mut dre = vec![0.0; n * m];
        let mut dim_ = vec![0.0; n * m];
        for b in 0..spec.batch {
            let t = &spec.counts[b * m..(b + 1) * m];
            // ‖C t‖² term
            for r in 0..n {
                let (mut mr, mut mi) = (0.0, 0.0);
                for j in 0..m {
                    mr += cre[r * m + j] * t[j];
                    mi += cim[r * m + j] * t[j];
                }
                let k = 2.0 * spec.mean_gain_sqr * w;
                for j in 0..m {
                    dre[r * m + j] += k * mr * t[j];
                    dim_[r * m + j] += k * mi * t[j];
                }
            }
            // tr Σ − ln det Σ term: ∂/∂C_re + i ∂/∂C_im = 2 σ_h²(I − Σ⁻¹) C diag(t)
            if let Some(gm) = cache.curvature.get(b) {
                for j in 0..m {
                    if t[j] == 0.0 {
                        continue;
                    }
                    let k = 2.0 * w * t[j];
                    for r in 0..n {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for c in 0..n {
                            acc += gm[r * n + c] * Complex64::new(cre[c * m + j], cim[c * m + j]);
                        }
                        dre[r * m + j] += k * acc.re;
                        dim_[r * m + j] += k * acc.im;
                    }
                }
            }
        }
        (dre, dim_)
    }
}

/// Writes `σ_h² C diag(t) Cᴴ + σ_z² I` into `out` (`n x n`); `cols` holds
/// `C` row-major.
fn hermitian_covariance(
    cols: &[Complex64],
    n: usize,
    m: usize,
    t: &[f64],
    fading_var: f64,
    noise_var: f64,
    out: &mut [Complex64],
) {
    for r in 0..n {
        for c in 0..=r {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..m {
                if t[j] != 0.0 {
                    acc += cols[r * m + j] * cols[c * m + j].conj() * t[j];
                }
            }
            acc *= fading_var;
            if r == c {
                out[r * n + c] = Complex64::new(acc.re + noise_var, 0.0);
            } else {
                out[r * n + c] = acc;
                out[c * n + r] = acc.conj();
            }
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let x = a[r * k + c];
            if x == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[c * n..(c + 1) * n]) {
                *o += x * bv;
            }
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Vec<f64>>], target: usize, g: impl Iterator<Item = f64>) {
    match &mut grads[target] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g.collect()),
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, zero-filled if `v` does not influence
    /// the root. `len` is the size of `v`'s value.
    pub fn wrt(&self, v: Var, len: usize) -> Result<Vec<f64>> {
        if v.tape != self.tape {
            return usage("gradient requested for a variable of another tape");
        }
        Ok(self
            .grads
            .get(v.index)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; len]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(t: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> Var {
        t.leaf(RealTensor::new(shape, data).unwrap()).unwrap()
    }

    #[test]
    fn constant_graph() {
        let mut t = Tape::new();
        let c = t.constant(RealTensor::scalar(3.0)).unwrap();
        let s = t.sum(c).unwrap();
        assert_eq!(t.scalar(s).unwrap(), 3.0);
    }

    #[test]
    fn square_and_product() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![], vec![2.0]);
        let y = t.square(x).unwrap();
        assert_eq!(t.scalar(y).unwrap(), 4.0);
        assert_eq!(t.backward(y).unwrap().wrt(x, 1).unwrap(), vec![4.0]);

        let mut t = Tape::new();
        let x = leaf(&mut t, vec![], vec![3.0]);
        let y = leaf(&mut t, vec![], vec![5.0]);
        let p = t.mul(x, y).unwrap();
        let g = t.backward(p).unwrap();
        assert_eq!(g.wrt(x, 1).unwrap(), vec![5.0]);
        assert_eq!(g.wrt(y, 1).unwrap(), vec![3.0]);
    }

    #[test]
    fn stale_and_empty_tapes_are_usage_errors() {
        let t = Tape::new();
        let mut other = Tape::new();
        let v = other.leaf(RealTensor::scalar(1.0)).unwrap();
        assert!(matches!(t.backward(v), Err(Error::Usage(_))));
        other.reset();
        assert!(matches!(other.backward(v), Err(Error::Usage(_))));
        let w = other.leaf(RealTensor::scalar(1.0)).unwrap();
        assert!(matches!(other.value(v), Err(Error::Usage(_))));
        assert!(other.backward(w).is_ok());
    }

    #[test]
    fn overflow_reports_node() {
        let mut t = Tape::new();
        let x = leaf(&mut t, vec![], vec![1e200]);
        let y = t.square(x).unwrap_err();
        assert_eq!(y, Error::NonFinite { node: 1, op: "square" });
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut t = Tape::new();
        let z = leaf(&mut t, vec![9, 3], vec![0.0; 27]);
        let l = t.softmax_cross_entropy(z, &[0, 4, 8], 1e-30).unwrap();
        assert!((t.scalar(l).unwrap() - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_clamps_tiny_probabilities() {
        let mut t = Tape::new();
        let z = leaf(&mut t, vec![2, 1], vec![0.0, 200.0]);
        let l = t.softmax_cross_entropy(z, &[0], 1e-30).unwrap();
        assert!((t.scalar(l).unwrap() - 1e-30f64.ln().abs()).abs() < 1e-9);
        assert_eq!(t.clamped_samples(l).unwrap(), 1);
        let g = t.backward(l).unwrap().wrt(z, 2).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }
}
