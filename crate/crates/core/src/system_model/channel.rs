use num_complex::Complex64;
use rand::Rng;

use crate::error::{usage, Error, Result};
use crate::mathkit::rng::standard_complex_gaussian;
use crate::mathkit::ComplexMatrix;

/// Line-of-sight component of a Rician channel.
#[derive(Clone, Debug, PartialEq)]
pub enum RicianMean {
    /// Same mean for every sensor.
    Uniform(Complex64),
    /// One mean per sensor; the length must match the sensor count.
    PerSensor(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Fading {
    /// `h_k = 1` for every sensor.
    UnitGain,
    /// `h ~ CN(μ, σ_h² I)`.
    Rician { mean: RicianMean, scatter_var: f64 },
}

/// Fading law plus receiver noise variance `σ_z²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    pub fading: Fading,
    pub noise_var: f64,
}

impl ChannelModel {
    pub fn new(fading: Fading, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return usage(format!("noise variance must be positive, got {noise_var}"));
        }
        if let Fading::Rician { scatter_var, .. } = &fading {
            if !(*scatter_var >= 0.0) || !scatter_var.is_finite() {
                return usage(format!("scattering variance must be nonnegative, got {scatter_var}"));
            }
        }
        Ok(Self { fading, noise_var })
    }

    pub fn unit_gain(noise_var: f64) -> Result<Self> {
        Self::new(Fading::UnitGain, noise_var)
    }

    /// Rician fading with all-ones mean.
    pub fn rician(scatter_var: f64, noise_var: f64) -> Result<Self> {
        Self::new(
            Fading::Rician {
                mean: RicianMean::Uniform(Complex64::new(1.0, 0.0)),
                scatter_var,
            },
            noise_var,
        )
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_var.sqrt()
    }

    /// `(|μ₀|², σ_h²)` when the effective channel has closed-form moments.
    pub fn moment_params(&self) -> Result<(Complex64, f64)> {
        match &self.fading {
            Fading::UnitGain => Ok((Complex64::new(1.0, 0.0), 0.0)),
            Fading::Rician {
                mean: RicianMean::Uniform(mu),
                scatter_var,
            } => Ok((*mu, *scatter_var)),
            Fading::Rician {
                mean: RicianMean::PerSensor(means),
                scatter_var,
            } => match means.split_first() {
                Some((first, rest)) if rest.iter().all(|m| m == first) => Ok((*first, *scatter_var)),
                _ => Err(Error::Unsupported(
                    "conditional moments need equal Rician means across sensors".into(),
                )),
            },
        }
    }

    /// Fills `out` with one channel realization per sensor.
    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [Complex64], rng: &mut R) -> Result<()> {
        match &self.fading {
            Fading::UnitGain => out.iter_mut().for_each(|h| *h = Complex64::new(1.0, 0.0)),
            Fading::Rician { mean, scatter_var } => {
                let sigma = scatter_var.sqrt();
                match mean {
                    RicianMean::Uniform(mu) => {
                        for h in out.iter_mut() {
                            *h = mu + standard_complex_gaussian(rng) * sigma;
                        }
                    }
                    RicianMean::PerSensor(mus) => {
                        if mus.len() != out.len() {
                            return usage(format!("{} Rician means for {} sensors", mus.len(), out.len()));
                        }
                        for (h, mu) in out.iter_mut().zip(mus) {
                            *h = mu + standard_complex_gaussian(rng) * sigma;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Noise variance for a signal-to-noise ratio `E/σ_z²` given in dB.
pub fn snr_db_to_noise_var(energy: f64, snr_db: f64) -> f64 {
    energy / 10f64.powf(snr_db / 10.0)
}

/// `K` channel gains.
pub fn sample_channel<R: Rng + ?Sized>(channel: &ChannelModel, sensors: usize, rng: &mut R) -> Result<Vec<Complex64>> {
    let mut h = vec![Complex64::new(0.0, 0.0); sensors];
    channel.sample_into(&mut h, rng)?;
    Ok(h)
}

/// `h_w = U h`: entry `m` sums the gains of the sensors that observed `m`.
pub fn effective_channel(w: &[usize], h: &[Complex64], alphabet: usize) -> Result<Vec<Complex64>> {
    if w.len() != h.len() {
        return usage(format!("{} observations but {} channel gains", w.len(), h.len()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); alphabet];
    for (&m, g) in w.iter().zip(h) {
        match out.get_mut(m) {
            Some(slot) => *slot += g,
            None => return usage(format!("observation {m} outside alphabet of size {alphabet}")),
        }
    }
    Ok(out)
}

/// `y = C h_w + z` with `z ~ CN(0, σ_z² I)`.
pub fn synthesize_rx<R: Rng + ?Sized>(
    codebook: &ComplexMatrix,
    h_w: &[Complex64],
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let mut y = codebook.mul_vec(h_w)?;
    for v in y.iter_mut() {
        *v += standard_complex_gaussian(rng) * noise_std;
    }
    Ok(y)
}

/// Mean and covariance of `y` given the type vector `t`:
/// `(μ₀ C t, σ_h² C diag(t) Cᴴ + σ_z² I)`.
pub fn rx_conditional_moments(
    codebook: &ComplexMatrix,
    t: &[f64],
    channel: &ChannelModel,
) -> Result<(Vec<Complex64>, ComplexMatrix)> {
    let (mu, scatter) = channel.moment_params()?;
    let n = codebook.rows();
    let mean: Vec<Complex64> = codebook.mul_real_vec(t)?.into_iter().map(|v| v * mu).collect();
    let mut cov = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            if scatter > 0.0 {
                for (m, &tm) in t.iter().enumerate() {
                    acc += codebook.get(r, m) * codebook.get(c, m).conj() * tm;
                }
                acc *= scatter;
            }
            if r == c {
                acc += channel.noise_var;
            }
            cov.set(r, c, acc);
        }
    }
    Ok((mean, cov))
}
