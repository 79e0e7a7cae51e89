use rand::Rng;

use crate::codebook::CodewordAssignment;
use crate::error::{usage, Result};
use crate::mathkit::rng::standard_complex_gaussian;
use crate::system_model::Scenario;

/// One batch of reparameterized channel randomness.
///
/// Everything that does not depend on trainable parameters is drawn here:
/// targets, observations, fading and noise. The received signal of sample
/// `b` is then `y_b = C g_b + z_b`, with `g_b` the effective channel over
/// the `M′` codewords.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch {
    pub labels: Vec<usize>,
    pub values: Vec<f64>,
    /// Codeword counts, row-major `batch x M′`.
    pub counts: Vec<f64>,
    /// Effective channel planes, row-major `M′ x batch`.
    pub gain_re: Vec<f64>,
    pub gain_im: Vec<f64>,
    /// Noise planes, row-major `N x batch`.
    pub noise_re: Vec<f64>,
    pub noise_im: Vec<f64>,
    pub batch: usize,
    pub codewords: usize,
    pub channel_uses: usize,
}

impl TrainingBatch {
    /// Draws `batch` samples. Per sample the order is target, observations,
    /// fading, noise.
    pub fn sample<R: Rng + ?Sized>(
        scenario: &Scenario,
        assignment: &CodewordAssignment,
        channel_uses: usize,
        batch: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if batch == 0 || channel_uses == 0 {
            return usage("batch size and channel uses must be positive");
        }
        if assignment.alphabet() != scenario.alphabet() {
            return usage("assignment alphabet does not match the scenario");
        }
        let m = assignment.codewords();
        let n = channel_uses;
        let noise_std = scenario.channel.noise_std();
        let mut out = Self {
            labels: Vec::with_capacity(batch),
            values: Vec::with_capacity(batch),
            counts: vec![0.0; batch * m],
            gain_re: vec![0.0; m * batch],
            gain_im: vec![0.0; m * batch],
            noise_re: vec![0.0; n * batch],
            noise_im: vec![0.0; n * batch],
            batch,
            codewords: m,
            channel_uses: n,
        };
        for b in 0..batch {
            let r = scenario.draw(rng)?;
            out.labels.push(r.target);
            out.values.push(r.value);
            for &w in &r.observations {
                out.counts[b * m + assignment.map()[w]] += 1.0;
            }
            let g = assignment.compress(&r.effective)?;
            for (j, v) in g.iter().enumerate() {
                out.gain_re[j * batch + b] = v.re;
                out.gain_im[j * batch + b] = v.im;
            }
            for i in 0..n {
                let z = standard_complex_gaussian(rng) * noise_std;
                out.noise_re[i * batch + b] = z.re;
                out.noise_im[i * batch + b] = z.im;
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }
}
