use super::batch::TrainingBatch;
use super::system::{Encoder, TrainedSystem};
use crate::codebook::Codebook;
use crate::decoder::{record_logits, DecoderParams, DecoderVars};
use crate::error::{usage, Result};
use crate::mathkit::tape::GaussianKlSpec;
use crate::mathkit::{RealTensor, Tape, Var};
use crate::system_model::ChannelModel;

/// Loss values of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub distortion: f64,
    /// `None` when the rate was not evaluated (`β = 0`).
    pub rate: Option<f64>,
    pub total: f64,
    pub clamped: usize,
}

/// Gradients of the objective. Codebook gradients are with respect to the
/// tanh pre-parameters and are `None` for fixed or frozen codebooks.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemGradients {
    pub codebook_re: Option<Vec<f64>>,
    pub codebook_im: Option<Vec<f64>>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<RealTensor> {
    RealTensor::matrix(rows, cols, data)
}

/// Records the batch cross-entropy `−(1/B) Σ ln q(s_b | y_b)` for the
/// codebook planes `re`, `im` (`N x M′`). Returns the loss node and the
/// hidden-layer pre-activations.
pub fn record_distortion(
    tape: &mut Tape,
    re: Var,
    im: Var,
    decoder: &DecoderVars,
    batch: &TrainingBatch,
    log_floor: f64,
) -> Result<(Var, Var)> {
    let (m, n, b) = (batch.codewords, batch.channel_uses, batch.batch);
    let g_re = tape.constant(matrix(m, b, batch.gain_re.clone())?)?;
    let z_re = tape.constant(matrix(n, b, batch.noise_re.clone())?)?;
    let z_im = tape.constant(matrix(n, b, batch.noise_im.clone())?)?;
    let (y_re, y_im) = if batch.gain_im.iter().all(|v| *v == 0.0) {
        let a = tape.matmul(re, g_re)?;
        let c = tape.matmul(im, g_re)?;
        (tape.add(a, z_re)?, tape.add(c, z_im)?)
    } else {
        let g_im = tape.constant(matrix(m, b, batch.gain_im.clone())?)?;
        let rr = tape.matmul(re, g_re)?;
        let ii = tape.matmul(im, g_im)?;
        let ri = tape.matmul(re, g_im)?;
        let ir = tape.matmul(im, g_re)?;
        let a = tape.sub(rr, ii)?;
        let c = tape.add(ri, ir)?;
        (tape.add(a, z_re)?, tape.add(c, z_im)?)
    };
    let x = tape.concat_rows(y_re, y_im)?;
    let (pre, logits) = record_logits(tape, decoder, x)?;
    let loss = tape.softmax_cross_entropy(logits, &batch.labels, log_floor)?;
    Ok((loss, pre))
}

/// Records the batch mean of `KL[p(y|w_b) ‖ CN(0, I_N)]`.
pub fn record_rate(tape: &mut Tape, re: Var, im: Var, batch: &TrainingBatch, channel: &ChannelModel) -> Result<Var> {
    let (mu, fading_var) = channel.moment_params()?;
    let spec = GaussianKlSpec {
        counts: batch.counts.clone(),
        batch: batch.batch,
        mean_gain_sqr: mu.norm_sqr(),
        fading_var,
        noise_var: channel.noise_var,
    };
    tape.gaussian_kl(re, im, spec)
}

pub(super) struct Graph {
    pub loss: Var,
    pub distortion: Var,
    pub rate: Option<Var>,
    pub codebook: Option<(Var, Var)>,
    pub decoder: DecoderVars,
}

pub(super) fn codebook_planes(codebook: &Codebook) -> (Vec<f64>, Vec<f64>) {
    (codebook.matrix().real_plane(), codebook.matrix().imag_plane())
}

/// Builds the full objective. `frozen` holds precomputed planes of a
/// codebook that takes no gradient.
#[allow(clippy::too_many_arguments)]
pub(super) fn build_graph(
    tape: &mut Tape,
    encoder: &Encoder,
    frozen: Option<&(Vec<f64>, Vec<f64>)>,
    decoder: &DecoderParams,
    batch: &TrainingBatch,
    channel: &ChannelModel,
    beta: f64,
    with_rate: bool,
    log_floor: f64,
) -> Result<Graph> {
    if batch.channel_uses != encoder.rows() || batch.codewords != encoder.cols() {
        return usage("batch dimensions do not match the encoder");
    }
    if decoder.channel_uses() != encoder.rows() {
        return usage("decoder input width does not match the codebook");
    }
    let (rows, cols) = (encoder.rows(), encoder.cols());
    let (re, im, leaves) = match (encoder, frozen) {
        (Encoder::Learned(p), None) => {
            let v = p.record(tape)?;
            (v.re, v.im, Some((v.pre_re, v.pre_im)))
        }
        (_, Some((pr, pi))) => {
            let re = tape.constant(matrix(rows, cols, pr.clone())?)?;
            let im = tape.constant(matrix(rows, cols, pi.clone())?)?;
            (re, im, None)
        }
        (Encoder::Fixed(c), None) => {
            let (pr, pi) = codebook_planes(c);
            let re = tape.constant(matrix(rows, cols, pr)?)?;
            let im = tape.constant(matrix(rows, cols, pi)?)?;
            (re, im, None)
        }
    };
    let dec = decoder.record(tape)?;
    let (distortion, _) = record_distortion(tape, re, im, &dec, batch, log_floor)?;
    let rate = if with_rate || beta > 0.0 {
        Some(record_rate(tape, re, im, batch, channel)?)
    } else {
        None
    };
    let loss = match rate {
        Some(r) if beta > 0.0 => {
            let weighted = tape.scale(r, beta)?;
            tape.add(distortion, weighted)?
        }
        _ => distortion,
    };
    Ok(Graph {
        loss,
        distortion,
        rate,
        codebook: leaves,
        decoder: dec,
    })
}

pub(super) fn read_value(tape: &Tape, g: &Graph) -> Result<ObjectiveValue> {
    Ok(ObjectiveValue {
        distortion: tape.scalar(g.distortion)?,
        rate: g.rate.map(|r| tape.scalar(r)).transpose()?,
        total: tape.scalar(g.loss)?,
        clamped: tape.clamped_samples(g.distortion)?,
    })
}

pub(super) fn read_gradients(tape: &Tape, g: &Graph, system: &TrainedSystem) -> Result<SystemGradients> {
    let grads = tape.backward(g.loss)?;
    let d = &system.decoder;
    let size = system.encoder.rows() * system.encoder.cols();
    let (codebook_re, codebook_im) = match g.codebook {
        Some((r, i)) => (Some(grads.wrt(r, size)?), Some(grads.wrt(i, size)?)),
        None => (None, None),
    };
    Ok(SystemGradients {
        codebook_re,
        codebook_im,
        w1: grads.wrt(g.decoder.w1, d.w1.len())?,
        b1: grads.wrt(g.decoder.b1, d.b1.len())?,
        w2: grads.wrt(g.decoder.w2, d.w2.len())?,
        b2: grads.wrt(g.decoder.b2, d.b2.len())?,
    })
}

/// Mean cross-entropy of the system's decoder on `batch`, in nats.
pub fn distortion_estimate(batch: &TrainingBatch, system: &TrainedSystem, log_floor: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let planes = codebook_planes(&system.codebook());
    let (rows, cols) = (system.encoder.rows(), system.encoder.cols());
    let re = tape.constant(matrix(rows, cols, planes.0)?)?;
    let im = tape.constant(matrix(rows, cols, planes.1)?)?;
    let dec = system.decoder.record(&mut tape)?;
    let (loss, _) = record_distortion(&mut tape, re, im, &dec, batch, log_floor)?;
    tape.scalar(loss)
}

/// Mean closed-form KL to `CN(0, I_N)` over the batch types, in nats.
pub fn rate_estimate(batch: &TrainingBatch, codebook: &Codebook, channel: &ChannelModel) -> Result<f64> {
    if batch.codewords != codebook.cols() {
        return usage("batch counts do not match the codebook width");
    }
    let mut tape = Tape::new();
    let (pr, pi) = codebook_planes(codebook);
    let re = tape.constant(matrix(codebook.rows(), codebook.cols(), pr)?)?;
    let im = tape.constant(matrix(codebook.rows(), codebook.cols(), pi)?)?;
    let r = record_rate(&mut tape, re, im, batch, channel)?;
    tape.scalar(r)
}

/// `D + β·R` on `batch`. The rate is only evaluated when `β > 0`.
pub fn ib_objective(
    batch: &TrainingBatch,
    system: &TrainedSystem,
    channel: &ChannelModel,
    beta: f64,
    log_floor: f64,
) -> Result<ObjectiveValue> {
    if !(beta >= 0.0) {
        return usage("beta must be nonnegative");
    }
    let mut tape = Tape::new();
    let g = build_graph(
        &mut tape,
        &system.encoder,
        None,
        &system.decoder,
        batch,
        channel,
        beta,
        false,
        log_floor,
    )?;
    read_value(&tape, &g)
}

/// Objective value and its gradient with respect to every trainable scalar.
pub fn objective_gradients(
    batch: &TrainingBatch,
    system: &TrainedSystem,
    channel: &ChannelModel,
    beta: f64,
    log_floor: f64,
) -> Result<(ObjectiveValue, SystemGradients)> {
    let mut tape = Tape::new();
    let g = build_graph(
        &mut tape,
        &system.encoder,
        None,
        &system.decoder,
        batch,
        channel,
        beta,
        false,
        log_floor,
    )?;
    Ok((read_value(&tape, &g)?, read_gradients(&tape, &g, system)?))
}

/// Sign pattern of the hidden pre-activations (`hidden x batch`), used to
/// detect finite-difference stencils that straddle a ReLU kink.
pub fn hidden_activity(batch: &TrainingBatch, system: &TrainedSystem) -> Result<Vec<bool>> {
    let mut tape = Tape::new();
    let planes = codebook_planes(&system.codebook());
    let (rows, cols) = (system.encoder.rows(), system.encoder.cols());
    let re = tape.constant(matrix(rows, cols, planes.0)?)?;
    let im = tape.constant(matrix(rows, cols, planes.1)?)?;
    let dec = system.decoder.record(&mut tape)?;
    let (_, pre) = record_distortion(&mut tape, re, im, &dec, batch, 1e-30)?;
    Ok(tape.value(pre)?.data().iter().map(|v| *v > 0.0).collect())
}
