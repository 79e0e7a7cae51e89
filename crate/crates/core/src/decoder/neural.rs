use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{usage, Error, Result};
use crate::mathkit::{RealTensor, Tape, Var};

/// Hidden width of the estimator.
pub const HIDDEN_UNITS: usize = 16;

/// Weights of the two-layer perceptron `q(s|y, θ)`.
///
/// The input is `[Re(y); Im(y)]` (length `2N`), followed by a ReLU hidden
/// layer and a softmax over the target support. Matrices are row-major,
/// `w1` is `hidden x 2N` and `w2` is `|S| x hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    inputs: usize,
    hidden: usize,
    outputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Tape handles for the decoder weights.
#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl DecoderParams {
    pub fn new(
        channel_uses: usize,
        hidden: usize,
        outputs: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let inputs = 2 * channel_uses;
        if channel_uses == 0 || hidden == 0 || outputs == 0 {
            return usage("decoder dimensions must be positive");
        }
        if w1.len() != hidden * inputs || b1.len() != hidden || w2.len() != outputs * hidden || b2.len() != outputs {
            return usage("decoder weight sizes do not match the architecture");
        }
        if w1.iter().chain(&b1).chain(&w2).chain(&b2).any(|v| !v.is_finite()) {
            return usage("decoder weights must be finite");
        }
        Ok(Self {
            inputs,
            hidden,
            outputs,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn zeros(channel_uses: usize, outputs: usize) -> Result<Self> {
        let (i, h) = (2 * channel_uses, HIDDEN_UNITS);
        Self::new(
            channel_uses,
            h,
            outputs,
            vec![0.0; h * i],
            vec![0.0; h],
            vec![0.0; outputs * h],
            vec![0.0; outputs],
        )
    }

    /// He initialization: weights `N(0, 2/fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(channel_uses: usize, outputs: usize, rng: &mut R) -> Result<Self> {
        let (i, h) = (2 * channel_uses, HIDDEN_UNITS);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let sd = (2.0 / fan_in as f64).sqrt();
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                })
                .collect()
        };
        let w1 = draw(h * i, i);
        let w2 = draw(outputs * h, h);
        Self::new(channel_uses, h, outputs, w1, vec![0.0; h], w2, vec![0.0; outputs])
    }

    pub fn channel_uses(&self) -> usize {
        self.inputs / 2
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Log-probabilities `ln q(·|y, θ)`.
    pub fn log_probs(&self, y: &[Complex64]) -> Result<Vec<f64>> {
        let n = self.channel_uses();
        if y.len() != n {
            return usage(format!("decoder expects {n} received symbols, got {}", y.len()));
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numeric("received signal is not finite".into()));
        }
        let x: Vec<f64> = y.iter().map(|v| v.re).chain(y.iter().map(|v| v.im)).collect();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
                let a = row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
                a.max(0.0)
            })
            .collect();
        let logits: Vec<f64> = (0..self.outputs)
            .map(|c| {
                let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + self.b2[c]
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let out: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("decoder produced a non-finite log-probability".into()));
        }
        Ok(out)
    }

    /// `q(·|y, θ)`.
    pub fn forward(&self, y: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.log_probs(y)?.into_iter().map(f64::exp).collect())
    }

    pub fn record(&self, tape: &mut Tape) -> Result<DecoderVars> {
        Ok(DecoderVars {
            w1: tape.leaf(RealTensor::matrix(self.hidden, self.inputs, self.w1.clone())?)?,
            b1: tape.leaf(RealTensor::vector(self.b1.clone())?)?,
            w2: tape.leaf(RealTensor::matrix(self.outputs, self.hidden, self.w2.clone())?)?,
            b2: tape.leaf(RealTensor::vector(self.b2.clone())?)?,
        })
    }
}

/// Recorded forward pass on a `2N x B` input; returns the hidden
/// pre-activations and the `|S| x B` logits.
pub fn record_logits(tape: &mut Tape, vars: &DecoderVars, input: Var) -> Result<(Var, Var)> {
    let z1 = tape.matmul(vars.w1, input)?;
    let pre = tape.add_column_bias(z1, vars.b1)?;
    let h = tape.relu(pre)?;
    let z2 = tape.matmul(vars.w2, h)?;
    let logits = tape.add_column_bias(z2, vars.b2)?;
    Ok((pre, logits))
}

/// Free function form of [`DecoderParams::forward`].
pub fn decoder_forward(params: &DecoderParams, y: &[Complex64]) -> Result<Vec<f64>> {
    params.forward(y)
}

/// Support value with the largest score; exact ties go to the smallest value.
pub fn hard_estimate(scores: &[f64], support: &[f64]) -> f64 {
    let mut best = 0;
    for i in 1..scores.len().min(support.len()) {
        if scores[i] > scores[best] || (scores[i] == scores[best] && support[i] < support[best]) {
            best = i;
        }
    }
    support[best]
}
