use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{usage, Error, Result};
use crate::mathkit::linalg::{cholesky, cholesky_solve, logdet_from_cholesky};
use crate::mathkit::ComplexMatrix;
use crate::system_model::{rx_conditional_moments, ChannelModel, Fading, ObservationModel, TargetPrior};

/// Largest number of observation vectors the brute-force oracle will enumerate.
pub const ORACLE_LIMIT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecisionRule {
    /// Prior-blind maximum likelihood.
    MaximumLikelihood,
    /// Maximum a posteriori.
    MaximumAPosteriori,
}

/// `ln CN(y; mean, σ² I)`.
pub fn isotropic_log_density(y: &[Complex64], mean: &[Complex64], noise_var: f64) -> f64 {
    let dist: f64 = y.iter().zip(mean).map(|(a, b)| (a - b).norm_sqr()).sum();
    -(y.len() as f64) * (PI * noise_var).ln() - dist / noise_var
}

/// `ln CN(y; mean, cov)` for a Hermitian positive definite `cov`,
/// evaluated through the real representation.
pub fn complex_gaussian_log_density(y: &[Complex64], mean: &[Complex64], cov: &ComplexMatrix) -> Result<f64> {
    let n = y.len();
    if mean.len() != n || cov.rows() != n || cov.cols() != n {
        return usage("dimension mismatch in complex Gaussian density");
    }
    let rep = cov.real_rep();
    let l = cholesky(&rep, 2 * n).ok_or(Error::NotPositiveDefinite { index: 0 })?;
    let d: Vec<f64> = y
        .iter()
        .zip(mean)
        .map(|(a, b)| (a - b).re)
        .chain(y.iter().zip(mean).map(|(a, b)| (a - b).im))
        .collect();
    let sol = cholesky_solve(&l, 2 * n, &d);
    let quad: f64 = d.iter().zip(&sol).map(|(a, b)| a * b).sum();
    Ok(-(n as f64) * PI.ln() - 0.5 * logdet_from_cholesky(&l, 2 * n) - quad)
}

fn ln_factorials(k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k + 1];
    for i in 1..=k {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

// n ln p with the convention 0 ln 0 = 0.
fn xlogy(n: f64, p: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * p.ln()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact likelihood decoder for binary observations over a unit-gain
/// channel. The `K + 1` mixture means `C [K−n, n]ᵀ` and the per-target
/// binomial weights are tabulated once, so decoding costs `O(K N + K |S|)`.
#[derive(Clone, Debug)]
pub struct BinaryMlDecoder {
    means: Vec<Vec<Complex64>>,
    // log_weights[s][n] = ln Binom(n; K, p1(s)) (+ ln p(s) under MAP)
    log_weights: Vec<Vec<f64>>,
    support: Vec<f64>,
    noise_var: f64,
}

impl BinaryMlDecoder {
    pub fn new(
        codebook: &ComplexMatrix,
        sensors: usize,
        prior: &TargetPrior,
        obs: &ObservationModel,
        channel: &ChannelModel,
        rule: DecisionRule,
    ) -> Result<Self> {
        if obs.alphabet() != 2 || codebook.cols() != 2 {
            return Err(Error::Unsupported(format!(
                "the exact likelihood decoder needs M = 2, got M = {}",
                obs.alphabet()
            )));
        }
        if channel.fading != Fading::UnitGain {
            return Err(Error::Unsupported(
                "the exact likelihood decoder needs a unit-gain channel".into(),
            ));
        }
        if sensors == 0 {
            return usage("need at least one sensor");
        }
        if prior.support() != obs.support() {
            return usage("prior and observation model supports differ");
        }
        let k = sensors;
        let means = (0..=k)
            .map(|n| codebook.mul_real_vec(&[(k - n) as f64, n as f64]))
            .collect::<Result<Vec<_>>>()?;
        let lf = ln_factorials(k);
        let log_weights = (0..prior.len())
            .map(|i| {
                let row = obs.row(i);
                let base = match rule {
                    DecisionRule::MaximumLikelihood => 0.0,
                    DecisionRule::MaximumAPosteriori => prior.probs()[i].ln(),
                };
                (0..=k)
                    .map(|n| {
                        let (n1, n0) = (n as f64, (k - n) as f64);
                        base + lf[k] - lf[n] - lf[k - n] + xlogy(n1, row[1]) + xlogy(n0, row[0])
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            means,
            log_weights,
            support: prior.support().to_vec(),
            noise_var: channel.noise_var,
        })
    }

    /// Unnormalized log scores, one per support value.
    pub fn log_scores(&self, y: &[Complex64]) -> Result<Vec<f64>> {
        if y.len() != self.means[0].len() {
            return usage("received vector length does not match the codebook");
        }
        let dens: Vec<f64> = self
            .means
            .iter()
            .map(|m| isotropic_log_density(y, m, self.noise_var))
            .collect();
        let mut buf = vec![0.0; dens.len()];
        let scores: Vec<f64> = self
            .log_weights
            .iter()
            .map(|w| {
                for (b, (a, d)) in buf.iter_mut().zip(w.iter().zip(&dens)) {
                    *b = a + d;
                }
                log_sum_exp(&buf)
            })
            .collect();
        if scores.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("likelihood score is NaN".into()));
        }
        Ok(scores)
    }

    pub fn decode(&self, y: &[Complex64]) -> Result<f64> {
        let scores = self.log_scores(y)?;
        Ok(super::hard_estimate(&scores, &self.support))
    }
}

pub fn ml_binary_log_scores(
    y: &[Complex64],
    codebook: &ComplexMatrix,
    sensors: usize,
    prior: &TargetPrior,
    obs: &ObservationModel,
    channel: &ChannelModel,
    rule: DecisionRule,
) -> Result<Vec<f64>> {
    BinaryMlDecoder::new(codebook, sensors, prior, obs, channel, rule)?.log_scores(y)
}

pub fn ml_decode_binary(
    y: &[Complex64],
    codebook: &ComplexMatrix,
    sensors: usize,
    prior: &TargetPrior,
    obs: &ObservationModel,
    channel: &ChannelModel,
    rule: DecisionRule,
) -> Result<f64> {
    BinaryMlDecoder::new(codebook, sensors, prior, obs, channel, rule)?.decode(y)
}

/// Posterior `p(s|y)` by enumerating every observation vector.
pub fn exact_map_oracle(
    y: &[Complex64],
    codebook: &ComplexMatrix,
    sensors: usize,
    prior: &TargetPrior,
    obs: &ObservationModel,
    channel: &ChannelModel,
) -> Result<Vec<f64>> {
    let m = obs.alphabet();
    if codebook.cols() != m || codebook.rows() != y.len() {
        return usage("codebook shape does not match the observation alphabet or received vector");
    }
    if prior.support() != obs.support() {
        return usage("prior and observation model supports differ");
    }
    let total = u32::try_from(sensors)
        .ok()
        .and_then(|k| (m as u64).checked_pow(k))
        .filter(|&n| n <= ORACLE_LIMIT)
        .ok_or_else(|| Error::Usage(format!("{m}^{sensors} observation vectors exceed the oracle limit")))?;

    let log_probs: Vec<Vec<f64>> = (0..prior.len())
        .map(|i| obs.row(i).iter().map(|p| p.ln()).collect())
        .collect();
    let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(total as usize); prior.len()];
    let mut w = vec![0usize; sensors];
    for _ in 0..total {
        let mut t = vec![0.0; m];
        for &v in &w {
            t[v] += 1.0;
        }
        let (mean, cov) = rx_conditional_moments(codebook, &t, channel)?;
        let dens = complex_gaussian_log_density(y, &mean, &cov)?;
        for (i, lp) in log_probs.iter().enumerate() {
            let lik: f64 = w.iter().map(|&v| lp[v]).sum();
            terms[i].push(prior.probs()[i].ln() + lik + dens);
        }
        for digit in w.iter_mut() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }
    let joint: Vec<f64> = terms.iter().map(|t| log_sum_exp(t)).collect();
    let norm = log_sum_exp(&joint);
    if !norm.is_finite() {
        return Err(Error::Numeric("posterior normalizer is not finite".into()));
    }
    Ok(joint.iter().map(|j| (j - norm).exp()).collect())
}
