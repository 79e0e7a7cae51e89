use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, CodebookParams, CodewordAssignment};
use crate::decoder::{hard_estimate, DecoderParams};
use crate::error::{usage, Result};
use crate::mathkit::rng::{stream, streams};
use crate::mathkit::AdamConfig;
use crate::system_model::Scenario;

/// Step-decay learning-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    /// Epochs between decays.
    pub interval: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-3,
            decay: 0.1,
            interval: 10,
        }
    }
}

impl LrSchedule {
    pub fn rate_at(&self, epoch: usize) -> f64 {
        match self.interval {
            0 => self.initial,
            i => self.initial * self.decay.powi((epoch / i) as i32),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the rate term, in nats.
    pub beta: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    /// Adam moments; the learning rate is overridden by `schedule`.
    pub adam: AdamConfig,
    pub seed: u64,
    pub freeze_codebook: bool,
    /// Evaluate the rate for the trace even when `beta == 0`.
    pub track_rate: bool,
    pub log_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            epochs: 100,
            batches_per_epoch: 100,
            batch_size: 256,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
            freeze_codebook: false,
            track_rate: false,
            log_floor: 1e-30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return usage(format!("beta must be nonnegative, got {}", self.beta));
        }
        if self.batch_size == 0 || self.batches_per_epoch == 0 {
            return usage("batch size and batches per epoch must be positive");
        }
        if !(self.schedule.initial > 0.0) || !(self.schedule.decay > 0.0) {
            return usage("learning rate and decay factor must be positive");
        }
        if !(self.log_floor > 0.0 && self.log_floor < 1.0) {
            return usage("log floor must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn computes_rate(&self) -> bool {
        self.beta > 0.0 || self.track_rate
    }
}

/// Transmit side of a system.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    /// Trainable tanh parameterization.
    Learned(CodebookParams),
    /// Fixed baseline codebook; never updated.
    Fixed(Codebook),
}

impl Encoder {
    pub fn codebook(&self) -> Codebook {
        match self {
            Encoder::Learned(p) => p.materialize(),
            Encoder::Fixed(c) => c.clone(),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Encoder::Learned(p) => p.rows(),
            Encoder::Fixed(c) => c.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Encoder::Learned(p) => p.cols(),
            Encoder::Fixed(c) => c.cols(),
        }
    }

    pub fn energy(&self) -> f64 {
        match self {
            Encoder::Learned(p) => p.energy(),
            Encoder::Fixed(c) => c.energy(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Encoder::Learned(_))
    }
}

/// How the codebook of a fresh system is built.
#[derive(Clone, Debug, PartialEq)]
pub enum CodebookInit {
    /// Learned, pre-parameters uniform on `[−1, 1]`.
    Random,
    /// Learned, starting from the given pre-parameters.
    Given(CodebookParams),
    /// Fixed `√E·e_m`.
    Orthogonal,
    /// Fixed i.i.d. `CN(0, E/N)` draws.
    Gaussian,
}

/// Per-epoch averages of the training losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub distortion: f64,
    /// Standard error of `distortion` across the epoch's batches.
    pub distortion_stderr: f64,
    pub rate: f64,
    pub total: f64,
    /// Samples whose decoder probability hit the log floor.
    pub clamped: usize,
}

/// Codebook, assignment and decoder, plus the loss trace that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedSystem {
    pub encoder: Encoder,
    pub assignment: CodewordAssignment,
    pub decoder: DecoderParams,
    pub support: Vec<f64>,
    pub trace: Vec<EpochRecord>,
}

impl TrainedSystem {
    /// Fresh system for `scenario` with `channel_uses` symbols per round.
    ///
    /// The learned codebook and the decoder draw from the initialization
    /// stream of `seed` (codebook first); the Gaussian baseline codebook
    /// draws from its own stream.
    pub fn initialize(
        scenario: &Scenario,
        channel_uses: usize,
        energy: f64,
        assignment: CodewordAssignment,
        init: CodebookInit,
        seed: u64,
    ) -> Result<Self> {
        if assignment.alphabet() != scenario.alphabet() {
            return usage(format!(
                "assignment covers {} observations, the scenario has {}",
                assignment.alphabet(),
                scenario.alphabet()
            ));
        }
        let cols = assignment.codewords();
        let mut rng = stream(seed, streams::INIT);
        let encoder = match init {
            CodebookInit::Random => Encoder::Learned(CodebookParams::random(channel_uses, cols, energy, &mut rng)?),
            CodebookInit::Given(p) => {
                if p.rows() != channel_uses || p.cols() != cols || p.energy() != energy {
                    return usage("given codebook does not match the system dimensions");
                }
                Encoder::Learned(p)
            }
            CodebookInit::Orthogonal => Encoder::Fixed(Codebook::orthogonal(cols, channel_uses, energy)?),
            CodebookInit::Gaussian => {
                let mut crng = stream(seed, streams::CODEBOOK);
                Encoder::Fixed(Codebook::gaussian(cols, channel_uses, energy, &mut crng)?)
            }
        };
        let decoder = DecoderParams::init(channel_uses, scenario.support().len(), &mut rng)?;
        Ok(Self {
            encoder,
            assignment,
            decoder,
            support: scenario.support().to_vec(),
            trace: Vec::new(),
        })
    }

    /// Codebook over the `M′` transmitted codewords.
    pub fn codebook(&self) -> Codebook {
        self.encoder.codebook()
    }

    pub fn channel_uses(&self) -> usize {
        self.encoder.rows()
    }

    pub fn estimate(&self, y: &[Complex64]) -> Result<f64> {
        let q = self.decoder.forward(y)?;
        Ok(hard_estimate(&q, &self.support))
    }
}
