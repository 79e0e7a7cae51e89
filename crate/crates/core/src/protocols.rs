//! End-to-end pipelines: IB-TBMA, CIB-TBMA, FC-IB-TBMA and the
//! fixed-codebook baselines.

use serde::{Deserialize, Serialize};

use crate::clustering::{
    assignment_from_clusters, decile_thresholds, distance_matrix, partition_graph, threshold_graph, ClusterPartition,
};
use crate::codebook::CodewordAssignment;
use crate::decoder::DecoderParams;
use crate::error::{usage, Result};
use crate::evaluation::evaluate_mse;
use crate::mathkit::rng::{derive, stream, streams};
use crate::system_model::Scenario;
use crate::training::{train, CodebookInit, Encoder, TrainConfig, TrainedSystem};

/// Seed labels for the sub-stages of a protocol run.
mod labels {
    pub const PHASE_TWO: u64 = 2;
    pub const COLD_DECODER: u64 = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Learned codebook and decoder, `β = 0`.
    IbTbma,
    /// Two phases with codeword clustering in between.
    CibTbma,
    /// Learned codebook over fixed adjacent bins.
    FcIbTbma,
    /// Fixed Gaussian codebook, trained decoder.
    GaussAnn,
    /// Fixed orthogonal codebook, trained decoder.
    OrthoAnn,
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::IbTbma => "ib_tbma",
            ProtocolKind::CibTbma => "cib_tbma",
            ProtocolKind::FcIbTbma => "fc_ib_tbma",
            ProtocolKind::GaussAnn => "gauss_ann",
            ProtocolKind::OrthoAnn => "ortho_ann",
        }
    }
}

/// Threshold used by the clustering step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    Fixed(f64),
    /// Try the deciles of the Phase-I distances and keep the one with the
    /// lowest validation MSE.
    DecileSweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringSettings {
    pub gamma: GammaChoice,
    /// Validation rounds per candidate threshold.
    pub validation_samples: usize,
    /// Start Phase II from the Phase-I decoder instead of a fresh one.
    pub warm_start_decoder: bool,
    /// Phase-II epochs for candidates during the sweep; the selected
    /// candidate is then retrained with the full schedule. `None` trains
    /// every candidate with the full schedule.
    pub screening_epochs: Option<usize>,
}

impl Default for ClusteringSettings {
    fn default() -> Self {
        Self {
            gamma: GammaChoice::DecileSweep,
            validation_samples: 10_000,
            warm_start_decoder: true,
            screening_epochs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub train: TrainConfig,
    pub channel_uses: usize,
    pub energy: f64,
    pub clustering: ClusteringSettings,
    /// Number of bins for FC-IB-TBMA.
    pub bins: Option<usize>,
}

/// One candidate threshold of the CIB-TBMA sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaCandidate {
    pub gamma: f64,
    pub codewords: usize,
    pub validation_mse: f64,
    /// Index of an earlier candidate with the same partition, if any.
    pub duplicate_of: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CibOutcome {
    pub system: TrainedSystem,
    pub phase_one: TrainedSystem,
    pub partition: ClusterPartition,
    pub gamma: f64,
    pub candidates: Vec<GammaCandidate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome {
    pub kind: ProtocolKind,
    pub system: TrainedSystem,
    pub cib: Option<CibOutcome>,
}

impl ProtocolOutcome {
    pub fn codewords(&self) -> usize {
        self.system.assignment.codewords()
    }
}

fn with_beta(config: &TrainConfig, beta: f64) -> TrainConfig {
    TrainConfig { beta, ..*config }
}

fn check_kind(spec: &ProtocolSpec, kind: ProtocolKind) -> Result<()> {
    if spec.kind != kind {
        return usage(format!("spec is for {}, not {}", spec.kind.name(), kind.name()));
    }
    Ok(())
}

fn single_phase(
    spec: &ProtocolSpec,
    scenario: &Scenario,
    assignment: CodewordAssignment,
    init: CodebookInit,
    frozen: bool,
) -> Result<TrainedSystem> {
    let system = TrainedSystem::initialize(
        scenario,
        spec.channel_uses,
        spec.energy,
        assignment,
        init,
        spec.train.seed,
    )?;
    let config = TrainConfig {
        freeze_codebook: frozen,
        ..with_beta(&spec.train, 0.0)
    };
    train(scenario, system, &config)
}

/// Joint training of codebook and decoder with `β = 0`.
pub fn run_ib_tbma(spec: &ProtocolSpec, scenario: &Scenario) -> Result<TrainedSystem> {
    check_kind(spec, ProtocolKind::IbTbma)?;
    let identity = CodewordAssignment::identity(scenario.alphabet());
    single_phase(spec, scenario, identity, CodebookInit::Random, false)
}

/// Joint training over `M′` codewords with adjacent-bin assignment
/// `a(m) = ⌊m M′ / M⌋`.
pub fn run_fc_ib_tbma(spec: &ProtocolSpec, scenario: &Scenario) -> Result<TrainedSystem> {
    check_kind(spec, ProtocolKind::FcIbTbma)?;
    let bins = spec
        .bins
        .ok_or_else(|| crate::Error::Usage("FC-IB-TBMA needs the number of bins".into()))?;
    let assignment = CodewordAssignment::binned(scenario.alphabet(), bins)?;
    single_phase(spec, scenario, assignment, CodebookInit::Random, false)
}

/// Decoder trained on a frozen random Gaussian codebook.
pub fn run_gauss_ann(spec: &ProtocolSpec, scenario: &Scenario) -> Result<TrainedSystem> {
    check_kind(spec, ProtocolKind::GaussAnn)?;
    let identity = CodewordAssignment::identity(scenario.alphabet());
    single_phase(spec, scenario, identity, CodebookInit::Gaussian, true)
}

/// Decoder trained on the frozen orthogonal codebook.
pub fn run_ortho_ann(spec: &ProtocolSpec, scenario: &Scenario) -> Result<TrainedSystem> {
    check_kind(spec, ProtocolKind::OrthoAnn)?;
    let identity = CodewordAssignment::identity(scenario.alphabet());
    single_phase(spec, scenario, identity, CodebookInit::Orthogonal, true)
}

/// Phase II from a Phase-I system and a partition of its codewords.
fn phase_two(
    spec: &ProtocolSpec,
    scenario: &Scenario,
    phase_one: &TrainedSystem,
    partition: &ClusterPartition,
    epochs: usize,
) -> Result<TrainedSystem> {
    let (assignment, params) = assignment_from_clusters(partition, &phase_one.codebook())?;
    let decoder = if spec.clustering.warm_start_decoder {
        phase_one.decoder.clone()
    } else {
        let seed = derive(spec.train.seed, labels::COLD_DECODER);
        DecoderParams::init(
            spec.channel_uses,
            scenario.support().len(),
            &mut stream(seed, streams::INIT),
        )?
    };
    let system = TrainedSystem {
        encoder: Encoder::Learned(params),
        assignment,
        decoder,
        support: phase_one.support.clone(),
        trace: Vec::new(),
    };
    let config = TrainConfig {
        epochs,
        seed: derive(spec.train.seed, labels::PHASE_TWO),
        ..with_beta(&spec.train, 0.0)
    };
    train(scenario, system, &config)
}

/// Phase I with `β > 0`, clustering of the learned codewords, and Phase II
/// with `β = 0` over the compressed assignment.
pub fn run_cib_tbma(spec: &ProtocolSpec, scenario: &Scenario) -> Result<CibOutcome> {
    check_kind(spec, ProtocolKind::CibTbma)?;
    if !(spec.train.beta > 0.0) {
        return usage("CIB-TBMA Phase I needs beta > 0");
    }
    let identity = CodewordAssignment::identity(scenario.alphabet());
    let init = TrainedSystem::initialize(
        scenario,
        spec.channel_uses,
        spec.energy,
        identity,
        CodebookInit::Random,
        spec.train.seed,
    )?;
    let phase_one = train(scenario, init, &spec.train)?;
    let distances = distance_matrix(phase_one.codebook().matrix());

    let gammas = match spec.clustering.gamma {
        GammaChoice::Fixed(g) => vec![g],
        GammaChoice::DecileSweep => decile_thresholds(&distances),
    };
    if gammas.is_empty() {
        return usage("no clustering threshold to try");
    }
    let single = gammas.len() == 1;
    let screening = spec.clustering.screening_epochs.filter(|_| !single);
    let phase_epochs = screening.unwrap_or(spec.train.epochs);

    let mut candidates: Vec<GammaCandidate> = Vec::new();
    let mut partitions: Vec<ClusterPartition> = Vec::new();
    let mut systems: Vec<Option<TrainedSystem>> = Vec::new();
    for &gamma in &gammas {
        let partition = partition_graph(&threshold_graph(&distances, gamma)?);
        if let Some(prev) = partitions.iter().position(|p| *p == partition) {
            candidates.push(GammaCandidate {
                gamma,
                codewords: partition.len(),
                validation_mse: candidates[prev].validation_mse,
                duplicate_of: Some(prev),
            });
            partitions.push(partition);
            systems.push(None);
            continue;
        }
        let system = phase_two(spec, scenario, &phase_one, &partition, phase_epochs)?;
        let validation_mse = if single {
            f64::NAN
        } else {
            let mut rng = stream(spec.train.seed, streams::VALIDATION);
            evaluate_mse(&system, scenario, spec.clustering.validation_samples, &mut rng)?.mse
        };
        candidates.push(GammaCandidate {
            gamma,
            codewords: partition.len(),
            validation_mse,
            duplicate_of: None,
        });
        partitions.push(partition);
        systems.push(Some(system));
    }
    // Lowest validation MSE; ties keep the smaller threshold.
    let best = (0..candidates.len())
        .filter(|&i| candidates[i].duplicate_of.is_none())
        .fold(None, |acc: Option<usize>, i| match acc {
            Some(j) if !(candidates[i].validation_mse < candidates[j].validation_mse) => Some(j),
            _ => Some(i),
        })
        .expect("at least one candidate");
    let partition = partitions[best].clone();
    let system = match screening {
        Some(_) => phase_two(spec, scenario, &phase_one, &partition, spec.train.epochs)?,
        None => systems[best].take().expect("trained candidate"),
    };
    Ok(CibOutcome {
        system,
        phase_one,
        partition,
        gamma: gammas[best],
        candidates,
    })
}

/// Dispatches on `spec.kind`.
pub fn run_protocol(spec: &ProtocolSpec, scenario: &Scenario) -> Result<ProtocolOutcome> {
    let (system, cib) = match spec.kind {
        ProtocolKind::IbTbma => (run_ib_tbma(spec, scenario)?, None),
        ProtocolKind::CibTbma => {
            let out = run_cib_tbma(spec, scenario)?;
            (out.system.clone(), Some(out))
        }
        ProtocolKind::FcIbTbma => (run_fc_ib_tbma(spec, scenario)?, None),
        ProtocolKind::GaussAnn => (run_gauss_ann(spec, scenario)?, None),
        ProtocolKind::OrthoAnn => (run_ortho_ann(spec, scenario)?, None),
    };
    Ok(ProtocolOutcome {
        kind: spec.kind,
        system,
        cib,
    })
}
