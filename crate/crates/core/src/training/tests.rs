use num_complex::Complex64;
use rand::Rng;

use super::*;
use crate::codebook::{Codebook, CodebookParams, CodewordAssignment};
use crate::decoder::{complex_gaussian_log_density, DecoderParams};
use crate::error::Error;
use crate::mathkit::rng::{stream, streams};
use crate::mathkit::ComplexMatrix;
use crate::system_model::{rx_conditional_moments, tenths, ChannelModel, ObservationModel, Scenario, TargetPrior};

fn fig2_scenario(sensors: usize) -> Scenario {
    Scenario::new(
        TargetPrior::uniform(tenths()).unwrap(),
        ObservationModel::bernoulli(tenths()).unwrap(),
        sensors,
        ChannelModel::unit_gain(1.0).unwrap(),
    )
    .unwrap()
}

fn small_scenario(rng: &mut impl Rng, rician: bool) -> Scenario {
    let support = vec![0.25, 0.5, 0.75];
    let m = rng.random_range(2..=4);
    let table = support
        .iter()
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let head: f64 = row[..m - 1].iter().sum();
            row[m - 1] = 1.0 - head;
            row
        })
        .collect();
    let noise = rng.random_range(0.2..2.0);
    let channel = if rician {
        ChannelModel::rician(rng.random_range(0.1..1.5), noise).unwrap()
    } else {
        ChannelModel::unit_gain(noise).unwrap()
    };
    Scenario::new(
        TargetPrior::uniform(support.clone()).unwrap(),
        ObservationModel::tabular(support, table).unwrap(),
        rng.random_range(1..=3),
        channel,
    )
    .unwrap()
}

fn fresh(scenario: &Scenario, n: usize, seed: u64) -> TrainedSystem {
    let a = CodewordAssignment::identity(scenario.alphabet());
    TrainedSystem::initialize(scenario, n, 1.0, a, CodebookInit::Random, seed).unwrap()
}

#[test]
fn distortion_matches_straight_line_recomputation() {
    let mut rng = stream(21, streams::TRAIN);
    for rician in [false, true] {
        let scenario = small_scenario(&mut rng, rician);
        let system = fresh(&scenario, 3, 4);
        let batch = TrainingBatch::sample(&scenario, &system.assignment, 3, 8, &mut rng).unwrap();
        let c = system.codebook();
        let mut total = 0.0;
        for b in 0..batch.batch {
            let g: Vec<Complex64> = (0..batch.codewords)
                .map(|j| Complex64::new(batch.gain_re[j * batch.batch + b], batch.gain_im[j * batch.batch + b]))
                .collect();
            let y: Vec<Complex64> = c
                .matrix()
                .mul_vec(&g)
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v + Complex64::new(batch.noise_re[i * batch.batch + b], batch.noise_im[i * batch.batch + b])
                })
                .collect();
            let q = system.decoder.forward(&y).unwrap();
            total -= q[batch.labels[b]].ln();
        }
        let oracle = total / batch.batch as f64;
        let d = distortion_estimate(&batch, &system, 1e-30).unwrap();
        assert!((d - oracle).abs() < 1e-10, "{d} vs {oracle}");
        let v = ib_objective(&batch, &system, &scenario.channel, 0.0, 1e-30).unwrap();
        assert_eq!(v.total, d);
        assert_eq!(v.rate, None);
    }
}

#[test]
fn uniform_decoder_costs_ln_support_size() {
    let scenario = fig2_scenario(4);
    let mut system = TrainedSystem::initialize(
        &scenario,
        2,
        1.0,
        CodewordAssignment::identity(2),
        CodebookInit::Orthogonal,
        0,
    )
    .unwrap();
    system.decoder = DecoderParams::zeros(2, 9).unwrap();
    let batch = TrainingBatch::sample(&scenario, &system.assignment, 2, 256, &mut stream(1, streams::TRAIN)).unwrap();
    let d = distortion_estimate(&batch, &system, 1e-30).unwrap();
    assert!((d - 9f64.ln()).abs() < 1e-9);
}

#[test]
fn single_valued_target_has_zero_distortion() {
    let scenario = Scenario::new(
        TargetPrior::uniform(vec![0.5]).unwrap(),
        ObservationModel::tabular(vec![0.5], vec![vec![0.5, 0.5]]).unwrap(),
        3,
        ChannelModel::unit_gain(1.0).unwrap(),
    )
    .unwrap();
    let system = fresh(&scenario, 2, 0);
    let batch = TrainingBatch::sample(&scenario, &system.assignment, 2, 16, &mut stream(0, streams::TRAIN)).unwrap();
    assert_eq!(distortion_estimate(&batch, &system, 1e-30).unwrap(), 0.0);
}

fn fixed_batch(counts: Vec<f64>, n: usize, m: usize) -> TrainingBatch {
    let batch = counts.len() / m;
    TrainingBatch {
        labels: vec![0; batch],
        values: vec![0.0; batch],
        counts,
        gain_re: vec![0.0; m * batch],
        gain_im: vec![0.0; m * batch],
        noise_re: vec![0.0; n * batch],
        noise_im: vec![0.0; n * batch],
        batch,
        codewords: m,
        channel_uses: n,
    }
}

#[test]
fn rate_anchors() {
    let zero = Codebook::new(ComplexMatrix::zeros(2, 2), 1.0).unwrap();
    let batch = fixed_batch(vec![3.0, 1.0, 0.0, 4.0], 2, 2);
    let unit = ChannelModel::unit_gain(1.0).unwrap();
    assert!(rate_estimate(&batch, &zero, &unit).unwrap().abs() < 1e-15);

    // ‖C t‖² = 1 with t = [1, 0].
    let half = 0.5f64.sqrt();
    let c = ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(half, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, half),
            Complex64::new(0.0, 0.0),
        ],
    )
    .unwrap();
    let c = Codebook::new(c, 1.0).unwrap();
    let batch = fixed_batch(vec![1.0, 0.0], 2, 2);
    let ch = ChannelModel::unit_gain(0.5).unwrap();
    let r = rate_estimate(&batch, &c, &ch).unwrap();
    let expected = 2.0 * (0.5 - 1.0 - 0.5f64.ln()) + 1.0;
    assert!((r - expected).abs() < 1e-12);
    assert!((r - 1.3863).abs() < 5e-5);
    let degenerate = ChannelModel::rician(0.0, 0.5).unwrap();
    assert_eq!(rate_estimate(&batch, &c, &degenerate).unwrap(), r);
}

#[test]
fn objective_is_linear_in_beta() {
    let mut rng = stream(8, streams::TRAIN);
    let scenario = small_scenario(&mut rng, true);
    let system = fresh(&scenario, 2, 1);
    let batch = TrainingBatch::sample(&scenario, &system.assignment, 2, 4, &mut rng).unwrap();
    let d = distortion_estimate(&batch, &system, 1e-30).unwrap();
    let r = rate_estimate(&batch, &system.codebook(), &scenario.channel).unwrap();
    let v = ib_objective(&batch, &system, &scenario.channel, 1.0, 1e-30).unwrap();
    assert_eq!(v.total, d + r);
    let v = ib_objective(&batch, &system, &scenario.channel, 0.0009, 1e-30).unwrap();
    assert!((v.total - d - 0.0009 * r).abs() < 1e-14);
}

/// Central differences of the objective in every trainable scalar.
fn check_gradients(seed: u64) -> (usize, usize) {
    let mut rng = stream(seed, streams::TRAIN);
    let scenario = small_scenario(&mut rng, seed % 2 == 1);
    let n = rng.random_range(1..=3);
    let beta = rng.random_range(0.0..1.0);
    let mut system = fresh(&scenario, n, seed);
    system
        .decoder
        .b1
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-0.5..0.5));
    let batch = TrainingBatch::sample(&scenario, &system.assignment, n, rng.random_range(1..=4), &mut rng).unwrap();
    let ch = &scenario.channel;
    let (_, g) = objective_gradients(&batch, &system, ch, beta, 1e-30).unwrap();
    let base = hidden_activity(&batch, &system).unwrap();
    let h = 1e-4;
    let (mut checked, mut skipped) = (0, 0);
    let mut probe = |grad: &[f64], get: &dyn Fn(&mut TrainedSystem) -> &mut Vec<f64>| {
        for (i, &ad) in grad.iter().enumerate() {
            let mut up = system.clone();
            get(&mut up)[i] += h;
            let mut down = system.clone();
            get(&mut down)[i] -= h;
            if hidden_activity(&batch, &up).unwrap() != base || hidden_activity(&batch, &down).unwrap() != base {
                skipped += 1;
                continue;
            }
            let fu = ib_objective(&batch, &up, ch, beta, 1e-30).unwrap().total;
            let fd_ = ib_objective(&batch, &down, ch, beta, 1e-30).unwrap().total;
            let fd = (fu - fd_) / (2.0 * h);
            let scale = fd.abs().max(ad.abs());
            assert!(
                (fd - ad).abs() <= 1e-6 + 1e-4 * scale,
                "seed {seed}, entry {i}: fd {fd}, ad {ad}"
            );
            checked += 1;
        }
    };
    fn re(s: &mut TrainedSystem) -> &mut Vec<f64> {
        match &mut s.encoder {
            Encoder::Learned(p) => &mut p.re,
            _ => unreachable!(),
        }
    }
    fn im(s: &mut TrainedSystem) -> &mut Vec<f64> {
        match &mut s.encoder {
            Encoder::Learned(p) => &mut p.im,
            _ => unreachable!(),
        }
    }
    probe(g.codebook_re.as_ref().unwrap(), &re);
    probe(g.codebook_im.as_ref().unwrap(), &im);
    probe(&g.w1, &|s| &mut s.decoder.w1);
    probe(&g.b1, &|s| &mut s.decoder.b1);
    probe(&g.w2, &|s| &mut s.decoder.w2);
    probe(&g.b2, &|s| &mut s.decoder.b2);
    (checked, skipped)
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..20 {
        let (c, s) = check_gradients(seed);
        checked += c;
        skipped += s;
    }
    assert!(skipped * 50 < checked, "{skipped} kink crossings out of {checked}");
}

/// Sampling estimate of `E[ln p(y|w) − ln r(y)]` with its standard error.
fn sampled_kl(c: &ComplexMatrix, t: &[usize], channel: &ChannelModel, draws: usize, rng: &mut impl Rng) -> (f64, f64) {
    let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
    let (mean, cov) = rx_conditional_moments(c, &tf, channel).unwrap();
    let n = c.rows();
    let sensors: usize = t.iter().sum();
    let w: Vec<usize> = t
        .iter()
        .enumerate()
        .flat_map(|(m, &k)| std::iter::repeat_n(m, k))
        .collect();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let h = crate::system_model::sample_channel(channel, sensors, rng).unwrap();
        let hw = crate::system_model::effective_channel(&w, &h, t.len()).unwrap();
        let y = crate::system_model::synthesize_rx(c, &hw, channel.noise_std(), rng).unwrap();
        let lp = complex_gaussian_log_density(&y, &mean, &cov).unwrap();
        let lr = -(n as f64) * std::f64::consts::PI.ln() - y.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let v = lp - lr;
        s += v;
        s2 += v * v;
    }
    let k = draws as f64;
    let m = s / k;
    (m, ((s2 / k - m * m) / (k - 1.0)).sqrt())
}

#[test]
fn closed_form_rate_matches_sampling_estimate() {
    let mut rng = stream(31, streams::EVAL);
    for (i, channel) in [
        ChannelModel::unit_gain(0.7).unwrap(),
        ChannelModel::rician(1.0, 0.4).unwrap(),
    ]
    .into_iter()
    .enumerate()
    {
        let c = Codebook::gaussian(3, 2, 1.0, &mut rng).unwrap().matrix().clone();
        let t = [2usize, 0, 1];
        let (est, se) = sampled_kl(&c, &t, &channel, 20_000, &mut rng);
        let batch = fixed_batch(t.iter().map(|&v| v as f64).collect(), 2, 3);
        let closed = rate_estimate(&batch, &Codebook::new(c, 1.0).unwrap(), &channel).unwrap();
        assert!(
            (est - closed).abs() < 3.0 * se,
            "case {i}: sampled {est} ± {se}, closed {closed}"
        );
    }
}

fn quick_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batches_per_epoch: 10,
        batch_size: 64,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_return_the_initial_system() {
    let scenario = fig2_scenario(4);
    let system = fresh(&scenario, 2, 3);
    let out = train(&scenario, system.clone(), &quick_config(0, 1)).unwrap();
    assert_eq!(out, system);
}

#[test]
fn frozen_codebooks_stay_bit_identical() {
    let scenario = fig2_scenario(4);
    let ortho = TrainedSystem::initialize(
        &scenario,
        2,
        1.0,
        CodewordAssignment::identity(2),
        CodebookInit::Orthogonal,
        0,
    )
    .unwrap();
    let out = train(&scenario, ortho.clone(), &quick_config(3, 1)).unwrap();
    assert_eq!(out.encoder, ortho.encoder);
    assert_ne!(out.decoder, ortho.decoder);

    let learned = fresh(&scenario, 2, 0);
    let mut cfg = quick_config(3, 1);
    freeze_codebook(&mut cfg, true);
    let out = train(&scenario, learned.clone(), &cfg).unwrap();
    assert_eq!(out.encoder, learned.encoder);
    freeze_codebook(&mut cfg, false);
    let out = train(&scenario, learned.clone(), &cfg).unwrap();
    assert_ne!(out.encoder, learned.encoder);
    assert!(crate::codebook::power_check(out.codebook().matrix(), 1.0));
}

#[test]
fn training_is_deterministic_and_beats_the_uniform_decoder() {
    let scenario = fig2_scenario(8);
    let init = TrainedSystem::initialize(
        &scenario,
        2,
        1.0,
        CodewordAssignment::identity(2),
        CodebookInit::Orthogonal,
        5,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        batches_per_epoch: 50,
        batch_size: 128,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&scenario, init.clone(), &cfg).unwrap();
    let b = train(&scenario, init, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trace.len(), 5);
    assert!(a.trace.last().unwrap().distortion < 9f64.ln());
    assert!(a.trace.iter().all(|r| r.rate == 0.0));
}

#[test]
fn rate_is_traced_only_when_asked() {
    let scenario = fig2_scenario(4);
    let init = fresh(&scenario, 2, 0);
    let plain = train(&scenario, init.clone(), &quick_config(2, 3)).unwrap();
    let mut cfg = quick_config(2, 3);
    cfg.track_rate = true;
    let tracked = train(&scenario, init, &cfg).unwrap();
    // The rate node never feeds the loss at β = 0.
    assert_eq!(plain.encoder, tracked.encoder);
    assert_eq!(plain.decoder, tracked.decoder);
    for (p, t) in plain.trace.iter().zip(&tracked.trace) {
        assert_eq!(p.distortion, t.distortion);
        assert!(t.rate > 0.0);
    }
}

#[test]
fn learning_rate_follows_the_step_schedule() {
    let s = LrSchedule::default();
    assert_eq!(s.rate_at(0), 1e-3);
    assert_eq!(s.rate_at(9), 1e-3);
    assert!((s.rate_at(10) - 1e-4).abs() < 1e-18);
    assert!((s.rate_at(95) - 1e-12).abs() < 1e-25);
}

#[test]
fn overflow_aborts_as_divergence() {
    let scenario = fig2_scenario(4);
    let mut system = fresh(&scenario, 2, 0);
    system.decoder.w1.iter_mut().for_each(|w| *w = 1e300);
    system.decoder.w2.iter_mut().for_each(|w| *w = 1e300);
    match train(&scenario, system, &quick_config(2, 0)) {
        Err(Error::Diverged {
            epoch: 0,
            batch: 0,
            trace,
            ..
        }) => assert!(trace.is_empty()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn warm_start_parameters_round_trip() {
    let scenario = fig2_scenario(2);
    let p = CodebookParams::random(2, 2, 1.0, &mut stream(0, streams::INIT)).unwrap();
    let sys = TrainedSystem::initialize(
        &scenario,
        2,
        1.0,
        CodewordAssignment::identity(2),
        CodebookInit::Given(p.clone()),
        0,
    )
    .unwrap();
    assert_eq!(sys.encoder, Encoder::Learned(p));
}
