//! Sources, sensors and the shared multiple-access channel.

mod channel;
mod source;

pub use channel::{
    effective_channel, rx_conditional_moments, sample_channel, snr_db_to_noise_var, synthesize_rx, ChannelModel,
    Fading, RicianMean,
};
pub use source::{
    binomial_pmf, obs_pmf, sample_observations, sample_target, tenths, type_vector, ObservationModel, TargetPrior,
};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{usage, Result};

/// Everything needed to simulate one sensing round: prior, observation
/// model, number of sensors and channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub prior: TargetPrior,
    pub observations: ObservationModel,
    pub sensors: usize,
    pub channel: ChannelModel,
}

/// One simulated round before encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub target: usize,
    pub value: f64,
    pub observations: Vec<usize>,
    pub gains: Vec<Complex64>,
    /// `h_w` over the full observation alphabet.
    pub effective: Vec<Complex64>,
}

impl Scenario {
    pub fn new(
        prior: TargetPrior,
        observations: ObservationModel,
        sensors: usize,
        channel: ChannelModel,
    ) -> Result<Self> {
        if prior.support() != observations.support() {
            return usage("prior and observation model disagree on the target support");
        }
        if sensors == 0 {
            return usage("at least one sensor is required");
        }
        Ok(Self {
            prior,
            observations,
            sensors,
            channel,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.observations.alphabet()
    }

    pub fn support(&self) -> &[f64] {
        self.prior.support()
    }

    /// Draws `s`, then `w`, then `h`, in that order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Realization> {
        let target = self.prior.sample_index(rng);
        let observations = self.observations.sample_by_index(target, self.sensors, rng);
        let gains = sample_channel(&self.channel, self.sensors, rng)?;
        let effective = effective_channel(&observations, &gains, self.alphabet())?;
        Ok(Realization {
            target,
            value: self.prior.support()[target],
            observations,
            gains,
            effective,
        })
    }
}

/// Targets, observations and types for a batch of rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationBatch {
    pub targets: Vec<usize>,
    pub values: Vec<f64>,
    /// Row-major `batch x sensors`.
    pub observations: Vec<usize>,
    /// Row-major `batch x alphabet`.
    pub types: Vec<usize>,
    pub sensors: usize,
    pub alphabet: usize,
}

impl ObservationBatch {
    pub fn sample<R: Rng + ?Sized>(scenario: &Scenario, batch: usize, rng: &mut R) -> Self {
        let (k, m) = (scenario.sensors, scenario.alphabet());
        let mut out = Self {
            targets: Vec::with_capacity(batch),
            values: Vec::with_capacity(batch),
            observations: vec![0; batch * k],
            types: vec![0; batch * m],
            sensors: k,
            alphabet: m,
        };
        for b in 0..batch {
            let idx = scenario.prior.sample_index(rng);
            out.targets.push(idx);
            out.values.push(scenario.support()[idx]);
            let w = &mut out.observations[b * k..(b + 1) * k];
            scenario.observations.sample_into(idx, w, rng);
            for &v in w.iter() {
                out.types[b * m + v] += 1;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn observations_of(&self, b: usize) -> &[usize] {
        &self.observations[b * self.sensors..(b + 1) * self.sensors]
    }

    pub fn type_of(&self, b: usize) -> &[usize] {
        &self.types[b * self.alphabet..(b + 1) * self.alphabet]
    }
}
