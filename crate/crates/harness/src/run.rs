//! One method at one grid point, and the artifacts it leaves on disk.

use std::path::Path;

use serde::Serialize;
use tbma_core::codebook::Codebook;
use tbma_core::decoder::DecisionRule;
use tbma_core::evaluation::{evaluate_ml, evaluate_mse, MseEstimate};
use tbma_core::mathkit::rng::{stream, streams, SimRng};
use tbma_core::protocols::{run_protocol, ProtocolOutcome};
use tbma_core::system_model::Scenario;
use tbma_core::training::{EpochRecord, TrainedSystem};

use crate::config::{ExperimentConfig, GridPoint, Method};
use crate::{persist, HarnessError, Result};

/// Evaluation draws for a seed; shared by every method at that seed.
pub fn eval_rng(seed: u64) -> SimRng {
    stream(seed, streams::EVAL)
}

#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: Method,
    pub mse: MseEstimate,
    /// Codewords in use; `None` for the likelihood baselines.
    pub m_prime: Option<usize>,
    pub outcome: Option<ProtocolOutcome>,
}

/// Trains (if needed) and evaluates `method`. `fc_bins` overrides the
/// configured bin count for FC-IB-TBMA.
pub fn run_method(
    config: &ExperimentConfig,
    point: &GridPoint,
    method: Method,
    fc_bins: Option<usize>,
) -> Result<MethodRun> {
    let scenario = config.scenario(point)?;
    let mut rng = eval_rng(point.seed);
    match method.protocol() {
        Some(kind) => {
            let bins = fc_bins.or(config.fc_bins);
            let spec = config.protocol_spec(kind, point.seed, bins);
            let outcome = run_protocol(&spec, &scenario)?;
            let mse = evaluate_mse(&outcome.system, &scenario, config.eval_samples, &mut rng)?;
            Ok(MethodRun {
                method,
                mse,
                m_prime: Some(outcome.codewords()),
                outcome: Some(outcome),
            })
        }
        None => {
            let rule = match method {
                Method::Ml => DecisionRule::MaximumLikelihood,
                _ => DecisionRule::MaximumAPosteriori,
            };
            let codebook = likelihood_codebook(config, &scenario)?;
            let mse = evaluate_ml(codebook.matrix(), &scenario, rule, config.eval_samples, &mut rng)?;
            Ok(MethodRun {
                method,
                mse,
                m_prime: None,
                outcome: None,
            })
        }
    }
}

/// The likelihood baselines use the orthogonal codebook of the fixed-codebook
/// decoder.
pub fn likelihood_codebook(config: &ExperimentConfig, scenario: &Scenario) -> Result<Codebook> {
    Ok(Codebook::orthogonal(
        scenario.alphabet(),
        config.channel_uses,
        config.energy,
    )?)
}

#[derive(Serialize)]
struct RunRecord<'a> {
    method: &'a str,
    point: &'a GridPoint,
    mse: f64,
    stderr: f64,
    eval_samples: usize,
    m_prime: Option<usize>,
    clustering: Option<ClusteringRecord>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct ClusteringRecord {
    gamma: f64,
    clusters: Vec<Vec<usize>>,
    candidates: Vec<CandidateRecord>,
}

#[derive(Serialize)]
struct CandidateRecord {
    gamma: f64,
    codewords: usize,
    validation_mse: Option<f64>,
    duplicate_of: Option<usize>,
}

/// Writes `model.tbma`, `run.json` and `trace.csv` (and for CIB-TBMA also
/// `phase1.tbma`, `phase1_trace.csv` and `clusters.csv`) into `dir`.
pub fn write_run_dir(dir: &Path, config: &ExperimentConfig, point: &GridPoint, run: &MethodRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cib = run.outcome.as_ref().and_then(|o| o.cib.as_ref());
    if let Some(outcome) = &run.outcome {
        persist::save(&outcome.system, &dir.join("model.tbma"))?;
        write_trace(&outcome.system.trace, &dir.join("trace.csv"))?;
    }
    if let Some(cib) = cib {
        persist::save(&cib.phase_one, &dir.join("phase1.tbma"))?;
        write_trace(&cib.phase_one.trace, &dir.join("phase1_trace.csv"))?;
        write_clusters(cib.partition.labels().as_slice(), &dir.join("clusters.csv"))?;
    }
    let record = RunRecord {
        method: run.method.name(),
        point,
        mse: run.mse.mse,
        stderr: run.mse.stderr,
        eval_samples: run.mse.samples,
        m_prime: run.m_prime,
        clustering: cib.map(|c| ClusteringRecord {
            gamma: c.gamma,
            clusters: c.partition.clusters().to_vec(),
            candidates: c
                .candidates
                .iter()
                .map(|k| CandidateRecord {
                    gamma: k.gamma,
                    codewords: k.codewords,
                    validation_mse: k.validation_mse.is_finite().then_some(k.validation_mse),
                    duplicate_of: k.duplicate_of,
                })
                .collect(),
        }),
        config,
    };
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&record)?;
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
}

pub fn write_trace(trace: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "distortion", "rate", "total", "learning_rate"])?;
    for r in trace {
        w.write_record([
            r.epoch.to_string(),
            r.distortion.to_string(),
            r.rate.to_string(),
            r.total.to_string(),
            r.learning_rate.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_clusters(labels: &[usize], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["observation", "cluster"])?;
    for (m, c) in labels.iter().enumerate() {
        w.write_record([m.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Evaluates a loaded system on the scenario of `point`.
pub fn evaluate_loaded(config: &ExperimentConfig, point: &GridPoint, system: &TrainedSystem) -> Result<MseEstimate> {
    let scenario = config.scenario(point)?;
    Ok(evaluate_mse(
        system,
        &scenario,
        config.eval_samples,
        &mut eval_rng(point.seed),
    )?)
}
