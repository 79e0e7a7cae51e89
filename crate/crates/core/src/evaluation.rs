//! Monte-Carlo mean squared error of an estimator.

use num_complex::Complex64;
use rand::Rng;

use crate::codebook::CodewordAssignment;
use crate::decoder::{BinaryMlDecoder, DecisionRule};
use crate::error::{usage, Result};
use crate::mathkit::ComplexMatrix;
use crate::system_model::{synthesize_rx, Scenario, TargetPrior};
use crate::training::TrainedSystem;

/// Smallest sample count accepted by [`evaluate_mse`].
pub const MIN_EVAL_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseEstimate {
    pub mse: f64,
    /// Standard error of `mse`.
    pub stderr: f64,
    pub samples: usize,
}

impl MseEstimate {
    /// Mean and standard error of squared errors.
    pub fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = if errors.len() > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mse: mean,
            stderr: (var / n).sqrt(),
            samples: errors.len(),
        }
    }
}

/// Squared errors of `estimator` over `samples` fresh rounds. Each round
/// draws target, observations, fading and noise, in that order.
pub fn squared_errors<R, F>(
    scenario: &Scenario,
    assignment: &CodewordAssignment,
    codebook: &ComplexMatrix,
    samples: usize,
    rng: &mut R,
    mut estimator: F,
) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&[Complex64]) -> Result<f64>,
{
    if codebook.cols() != assignment.codewords() {
        return usage("codebook width does not match the assignment");
    }
    let noise_std = scenario.channel.noise_std();
    (0..samples)
        .map(|_| {
            let r = scenario.draw(rng)?;
            let g = assignment.compress(&r.effective)?;
            let y = synthesize_rx(codebook, &g, noise_std, rng)?;
            let s_hat = estimator(&y)?;
            Ok((s_hat - r.value).powi(2))
        })
        .collect()
}

pub fn evaluate_estimator<R, F>(
    scenario: &Scenario,
    assignment: &CodewordAssignment,
    codebook: &ComplexMatrix,
    samples: usize,
    rng: &mut R,
    estimator: F,
) -> Result<MseEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&[Complex64]) -> Result<f64>,
{
    if samples == 0 {
        return usage("need at least one evaluation sample");
    }
    let errors = squared_errors(scenario, assignment, codebook, samples, rng, estimator)?;
    Ok(MseEstimate::from_errors(&errors))
}

/// MSE of a trained system's hard estimate.
pub fn evaluate_mse<R: Rng + ?Sized>(
    system: &TrainedSystem,
    scenario: &Scenario,
    samples: usize,
    rng: &mut R,
) -> Result<MseEstimate> {
    if samples < MIN_EVAL_SAMPLES {
        return usage(format!(
            "evaluation needs at least {MIN_EVAL_SAMPLES} samples, got {samples}"
        ));
    }
    if system.support != scenario.support() {
        return usage("system and scenario disagree on the target support");
    }
    let codebook = system.codebook();
    evaluate_estimator(scenario, &system.assignment, codebook.matrix(), samples, rng, |y| {
        system.estimate(y)
    })
}

/// MSE of the exact likelihood decoder (binary observations, unit gains).
pub fn evaluate_ml<R: Rng + ?Sized>(
    codebook: &ComplexMatrix,
    scenario: &Scenario,
    rule: DecisionRule,
    samples: usize,
    rng: &mut R,
) -> Result<MseEstimate> {
    let decoder = BinaryMlDecoder::new(
        codebook,
        scenario.sensors,
        &scenario.prior,
        &scenario.observations,
        &scenario.channel,
        rule,
    )?;
    let identity = CodewordAssignment::identity(scenario.alphabet());
    evaluate_estimator(scenario, &identity, codebook, samples, rng, |y| decoder.decode(y))
}

/// Exact MSE of always answering `value`.
pub fn constant_predictor_mse(prior: &TargetPrior, value: f64) -> f64 {
    prior
        .support()
        .iter()
        .zip(prior.probs())
        .map(|(s, p)| p * (s - value).powi(2))
        .sum()
}
