use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{usage, Result};

const SUM_TOLERANCE: f64 = 1e-12;

/// Discrete prior `p(s)` over an ordered support.
#[derive(Clone, Debug)]
pub struct TargetPrior {
    support: Vec<f64>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl PartialEq for TargetPrior {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support && self.probs == other.probs
    }
}

impl TargetPrior {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        validate_support(&support)?;
        if probs.len() != support.len() {
            return usage(format!(
                "{} probabilities for {} support values",
                probs.len(),
                support.len()
            ));
        }
        validate_pmf(&probs, "prior")?;
        let sampler = weighted(&probs)?;
        Ok(Self {
            support,
            probs,
            sampler,
        })
    }

    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        let n = support.len().max(1);
        Self::new(support, vec![1.0 / n as f64; n])
    }

    /// The bell-shaped prior over `{0.1, …, 0.9}` used for the fixed-codebook
    /// comparison.
    pub fn bell_over_tenths() -> Self {
        let support = tenths();
        let probs = vec![0.05, 0.07, 0.12, 0.16, 0.2, 0.16, 0.12, 0.07, 0.05];
        Self::new(support, probs).expect("static prior is valid")
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn index_of(&self, s: f64) -> Option<usize> {
        index_in(&self.support, s)
    }

    /// Index into the support of a draw `s ~ p(s)`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.support[self.sample_index(rng)]
    }

    /// Whether every support value has the same probability.
    pub fn is_uniform(&self) -> bool {
        self.probs.iter().all(|p| (p - self.probs[0]).abs() <= SUM_TOLERANCE)
    }
}

/// `{0.1, 0.2, …, 0.9}`.
pub fn tenths() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Free function form of [`TargetPrior::sample`].
pub fn sample_target<R: Rng + ?Sized>(prior: &TargetPrior, rng: &mut R) -> f64 {
    prior.sample(rng)
}

/// Conditional pmf `p(w|s)` over observation values `{0, …, M−1}`.
#[derive(Clone, Debug)]
pub struct ObservationModel {
    support: Vec<f64>,
    alphabet: usize,
    table: Vec<Vec<f64>>,
    samplers: Vec<WeightedIndex<f64>>,
}

impl PartialEq for ObservationModel {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support && self.table == other.table
    }
}

impl ObservationModel {
    /// Explicit table: one row per support value, `M` columns.
    pub fn tabular(support: Vec<f64>, table: Vec<Vec<f64>>) -> Result<Self> {
        validate_support(&support)?;
        if table.len() != support.len() {
            return usage(format!(
                "{} table rows for {} support values",
                table.len(),
                support.len()
            ));
        }
        let alphabet = table.first().map_or(0, Vec::len);
        if alphabet == 0 {
            return usage("observation alphabet must be non-empty");
        }
        for (i, row) in table.iter().enumerate() {
            if row.len() != alphabet {
                return usage(format!("table row {i} has {} entries, expected {alphabet}", row.len()));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return usage(format!("table row {i} has entries outside [0, 1]"));
            }
            validate_pmf(row, &format!("table row {i}"))?;
        }
        let samplers = table.iter().map(|r| weighted(r)).collect::<Result<_>>()?;
        Ok(Self {
            support,
            alphabet,
            table,
            samplers,
        })
    }

    /// Binary observations, `p(w = 1 | s) = s`.
    pub fn bernoulli(support: Vec<f64>) -> Result<Self> {
        if support.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return usage("Bernoulli support values must lie in [0, 1]");
        }
        let table = support.iter().map(|&s| vec![1.0 - s, s]).collect();
        Self::tabular(support, table)
    }

    /// Half uninformative, half binomial: `M = 2(trials + 1)`; every even
    /// value has probability `1/M` regardless of `s`, and odd value `2i + 1`
    /// has probability `½·Binom(i; trials, s)`. The even values carry total
    /// mass `½`, which fixes the binomial rescale at `½`.
    pub fn mixed_binomial(support: Vec<f64>, trials: usize) -> Result<Self> {
        if support.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return usage("binomial support values must lie in [0, 1]");
        }
        let alphabet = 2 * (trials + 1);
        let table = support
            .iter()
            .map(|&s| {
                let mut row = vec![1.0 / alphabet as f64; alphabet];
                for i in 0..=trials {
                    row[2 * i + 1] = 0.5 * binomial_pmf(i, trials, s);
                }
                row
            })
            .collect();
        Self::tabular(support, table)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    /// Row of the table for support index `idx`.
    pub fn row(&self, idx: usize) -> &[f64] {
        &self.table[idx]
    }

    /// `p(·|s)`.
    pub fn pmf(&self, s: f64) -> Result<&[f64]> {
        match index_in(&self.support, s) {
            Some(i) => Ok(&self.table[i]),
            None => usage(format!("{s} is not in the target support")),
        }
    }

    /// `K` conditionally independent observations given support index `idx`.
    pub fn sample_by_index<R: Rng + ?Sized>(&self, idx: usize, sensors: usize, rng: &mut R) -> Vec<usize> {
        let d = &self.samplers[idx];
        (0..sensors).map(|_| d.sample(rng)).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, idx: usize, out: &mut [usize], rng: &mut R) {
        let d = &self.samplers[idx];
        out.iter_mut().for_each(|w| *w = d.sample(rng));
    }
}

/// `p(·|s)` as a free function.
pub fn obs_pmf(model: &ObservationModel, s: f64) -> Result<&[f64]> {
    model.pmf(s)
}

/// `K` i.i.d. observations from `p(·|s)`.
pub fn sample_observations<R: Rng + ?Sized>(
    model: &ObservationModel,
    s: f64,
    sensors: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if sensors == 0 {
        return usage("at least one sensor is required");
    }
    match index_in(&model.support, s) {
        Some(i) => Ok(model.sample_by_index(i, sensors, rng)),
        None => usage(format!("{s} is not in the target support")),
    }
}

/// Histogram of observations: `t[m] = |{k : w_k = m}|`.
pub fn type_vector(w: &[usize], alphabet: usize) -> Result<Vec<usize>> {
    let mut t = vec![0; alphabet];
    for &v in w {
        match t.get_mut(v) {
            Some(c) => *c += 1,
            None => return usage(format!("observation {v} outside alphabet of size {alphabet}")),
        }
    }
    Ok(t)
}

pub fn binomial_pmf(k: usize, n: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut coeff = 1.0;
    for i in 0..k {
        coeff *= (n - i) as f64 / (i + 1) as f64;
    }
    coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

fn index_in(support: &[f64], s: f64) -> Option<usize> {
    support.iter().position(|&v| (v - s).abs() <= 1e-12)
}

fn validate_support(support: &[f64]) -> Result<()> {
    if support.is_empty() {
        return usage("target support must be non-empty");
    }
    if support.iter().any(|v| !v.is_finite()) {
        return usage("target support values must be finite");
    }
    for (i, a) in support.iter().enumerate() {
        if support[i + 1..].iter().any(|b| (a - b).abs() <= 1e-12) {
            return usage(format!("target support value {a} is repeated"));
        }
    }
    Ok(())
}

fn validate_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return usage(format!("{what} has negative or non-finite entries"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return usage(format!("{what} sums to {total}, not 1"));
    }
    Ok(())
}

fn weighted(p: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(p.iter().copied()).map_err(|e| crate::Error::Usage(format!("invalid weights: {e}")))
}
