use super::batch::TrainingBatch;
use super::objective::{build_graph, codebook_planes, read_gradients, read_value};
use super::system::{Encoder, EpochRecord, TrainConfig, TrainedSystem};
use crate::error::{Error, Result};
use crate::mathkit::rng::{stream, streams};
use crate::mathkit::{AdamState, Tape};
use crate::system_model::Scenario;

/// Sets the codebook-freeze flag. A frozen codebook gets no updates; the
/// decoder still trains. Fixed baseline codebooks are always frozen.
pub fn freeze_codebook(config: &mut TrainConfig, frozen: bool) {
    config.freeze_codebook = frozen;
}

struct Optimizer {
    codebook: Option<(AdamState, AdamState)>,
    decoder: [AdamState; 4],
}

/// Runs `epochs x batches_per_epoch` Adam steps starting from `system`,
/// drawing every batch fresh from the training stream of `config.seed`.
///
/// The returned system carries the per-epoch trace, appended to any trace
/// already present. A non-finite loss aborts with [`Error::Diverged`].
pub fn train(scenario: &Scenario, system: TrainedSystem, config: &TrainConfig) -> Result<TrainedSystem> {
    config.validate()?;
    let mut system = system;
    let mut rng = stream(config.seed, streams::TRAIN);
    let n = system.channel_uses();
    let adam = config.adam;
    let trainable = system.encoder.is_trainable() && !config.freeze_codebook;
    let frozen = (!trainable).then(|| codebook_planes(&system.codebook()));
    let d = &system.decoder;
    let mut opt = Optimizer {
        codebook: match &system.encoder {
            Encoder::Learned(p) if trainable => {
                Some((AdamState::new(p.re.len(), adam), AdamState::new(p.im.len(), adam)))
            }
            _ => None,
        },
        decoder: [
            AdamState::new(d.w1.len(), adam),
            AdamState::new(d.b1.len(), adam),
            AdamState::new(d.w2.len(), adam),
            AdamState::new(d.b2.len(), adam),
        ],
    };
    let first_epoch = system.trace.len();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut tape = Tape::new();
    for epoch in 0..config.epochs {
        let lr = config.schedule.rate_at(epoch);
        if let Some((a, b)) = &mut opt.codebook {
            a.set_learning_rate(lr);
            b.set_learning_rate(lr);
        }
        opt.decoder.iter_mut().for_each(|s| s.set_learning_rate(lr));

        let (mut d_sum, mut d_sqr, mut r_sum, mut t_sum, mut clamped) = (0.0, 0.0, 0.0, 0.0, 0);
        for b in 0..config.batches_per_epoch {
            let diverged = |cause: String, trace: &[EpochRecord]| Error::Diverged {
                epoch,
                batch: b,
                cause,
                trace: trace.to_vec(),
            };
            let batch = TrainingBatch::sample(scenario, &system.assignment, n, config.batch_size, &mut rng)?;
            tape.reset();
            let step = build_graph(
                &mut tape,
                &system.encoder,
                frozen.as_ref(),
                &system.decoder,
                &batch,
                &scenario.channel,
                config.beta,
                config.track_rate,
                config.log_floor,
            )
            .and_then(|g| Ok((read_value(&tape, &g)?, read_gradients(&tape, &g, &system)?)));
            let (value, grads) = match step {
                Ok(v) => v,
                Err(e @ (Error::NonFinite { .. } | Error::Numeric(_))) => return Err(diverged(e.to_string(), &trace)),
                Err(e) => return Err(e),
            };
            if !value.total.is_finite() {
                return Err(diverged("loss is not finite".into(), &trace));
            }
            d_sum += value.distortion;
            d_sqr += value.distortion * value.distortion;
            r_sum += value.rate.unwrap_or(0.0);
            t_sum += value.total;
            clamped += value.clamped;

            if let (Some((sr, si)), Encoder::Learned(p)) = (&mut opt.codebook, &mut system.encoder) {
                sr.update(&mut p.re, grads.codebook_re.as_deref().unwrap_or_default())?;
                si.update(&mut p.im, grads.codebook_im.as_deref().unwrap_or_default())?;
            }
            let dec = &mut system.decoder;
            let [s1, s2, s3, s4] = &mut opt.decoder;
            s1.update(&mut dec.w1, &grads.w1)?;
            s2.update(&mut dec.b1, &grads.b1)?;
            s3.update(&mut dec.w2, &grads.w2)?;
            s4.update(&mut dec.b2, &grads.b2)?;
        }
        let k = config.batches_per_epoch as f64;
        let mean = d_sum / k;
        let var = if k > 1.0 {
            ((d_sqr - k * mean * mean) / (k - 1.0)).max(0.0)
        } else {
            0.0
        };
        trace.push(EpochRecord {
            epoch: first_epoch + epoch,
            learning_rate: lr,
            distortion: mean,
            distortion_stderr: (var / k).sqrt(),
            rate: r_sum / k,
            total: t_sum / k,
            clamped,
        });
    }
    system.trace.extend(trace);
    Ok(system)
}
