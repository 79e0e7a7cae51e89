//! JSON experiment configuration.
//!
//! See `configs/` for complete examples. Unknown fields are rejected and
//! every error names the offending field path.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use tbma_core::protocols::{ClusteringSettings, ProtocolKind, ProtocolSpec};
use tbma_core::system_model::{
    snr_db_to_noise_var, ChannelModel, Fading, ObservationModel, RicianMean, Scenario, TargetPrior,
};
use tbma_core::training::TrainConfig;

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "TBMA_OUT_DIR";

/// Anything that yields one MSE row: a trained protocol or a likelihood
/// baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IbTbma,
    CibTbma,
    FcIbTbma,
    GaussAnn,
    OrthoAnn,
    /// Exact likelihood decoder, prior-blind.
    Ml,
    /// Exact likelihood decoder with the prior.
    Map,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::IbTbma => "ib_tbma",
            Method::CibTbma => "cib_tbma",
            Method::FcIbTbma => "fc_ib_tbma",
            Method::GaussAnn => "gauss_ann",
            Method::OrthoAnn => "ortho_ann",
            Method::Ml => "ml",
            Method::Map => "map",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        ALL_METHODS.iter().copied().find(|m| m.name() == name)
    }

    pub fn protocol(&self) -> Option<ProtocolKind> {
        match self {
            Method::IbTbma => Some(ProtocolKind::IbTbma),
            Method::CibTbma => Some(ProtocolKind::CibTbma),
            Method::FcIbTbma => Some(ProtocolKind::FcIbTbma),
            Method::GaussAnn => Some(ProtocolKind::GaussAnn),
            Method::OrthoAnn => Some(ProtocolKind::OrthoAnn),
            Method::Ml | Method::Map => None,
        }
    }
}

pub const ALL_METHODS: [Method; 7] = [
    Method::IbTbma,
    Method::CibTbma,
    Method::FcIbTbma,
    Method::GaussAnn,
    Method::OrthoAnn,
    Method::Ml,
    Method::Map,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationConfig {
    /// Binary observation with `p(w = 1 | s) = s`.
    Bernoulli,
    /// `M = 2(trials + 1)`; even values uniform, odd values binomial in `s`.
    MixedBinomial { trials: usize },
    /// One row of `p(w|s)` per support value.
    Tabular { table: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub support: Vec<f64>,
    /// Target probabilities; uniform when absent.
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    pub observations: ObservationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    /// Unit gains.
    Gaussian,
    /// `h ~ CN(μ·1, σ_h² I)`.
    Rician {
        #[serde(default = "one")]
        scatter_var: f64,
        #[serde(default = "unit_mean")]
        mean: [f64; 2],
    },
}

impl ChannelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelConfig::Gaussian => "gaussian",
            ChannelConfig::Rician { .. } => "rician",
        }
    }

    pub fn model(&self, energy: f64, snr_db: f64) -> Result<ChannelModel, HarnessError> {
        let noise = snr_db_to_noise_var(energy, snr_db);
        let fading = match self {
            ChannelConfig::Gaussian => Fading::UnitGain,
            ChannelConfig::Rician { scatter_var, mean } => Fading::Rician {
                mean: RicianMean::Uniform(Complex64::new(mean[0], mean[1])),
                scatter_var: *scatter_var,
            },
        };
        Ok(ChannelModel::new(fading, noise)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub sensors: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub channels: Vec<ChannelConfig>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Prefix of output files; the config file stem when empty.
    #[serde(default)]
    pub name: String,
    pub source: SourceConfig,
    pub channel_uses: usize,
    #[serde(default = "one")]
    pub energy: f64,
    pub protocols: Vec<Method>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub clustering: ClusteringSettings,
    /// Bins for FC-IB-TBMA; when absent, the M′ found by CIB-TBMA at the
    /// same grid point and seed.
    #[serde(default)]
    pub fc_bins: Option<usize>,
    pub sweep: SweepAxes,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn unit_mean() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_eval_samples() -> usize {
    100_000
}

/// One point of the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub channel: ChannelConfig,
    pub sensors: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config and fills in `name` from the file stem if needed.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if config.name.is_empty() {
            config.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let schema = |path: &str, message: String| HarnessError::Schema {
            path: path.into(),
            message,
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.protocols.is_empty() {
            return Err(schema("protocols", "at least one protocol is required".into()));
        }
        let axes = &self.sweep;
        if axes.sensors.is_empty() || axes.snr_db.is_empty() || axes.channels.is_empty() || axes.seeds.is_empty() {
            return Err(schema("sweep", "every sweep axis needs at least one value".into()));
        }
        if self.eval_samples < tbma_core::evaluation::MIN_EVAL_SAMPLES {
            return Err(schema(
                "eval_samples",
                format!("must be at least {}", tbma_core::evaluation::MIN_EVAL_SAMPLES),
            ));
        }
        if self.channel_uses == 0 {
            return Err(schema("channel_uses", "must be positive".into()));
        }
        if self.protocols.contains(&Method::FcIbTbma)
            && self.fc_bins.is_none()
            && !self.protocols.contains(&Method::CibTbma)
        {
            return Err(schema(
                "fc_bins",
                "fc_ib_tbma needs fc_bins or a cib_tbma run to take M' from".into(),
            ));
        }
        self.train.validate().map_err(|e| schema("train", e.to_string()))?;
        self.prior().map_err(|e| schema("source.prior", e.to_string()))?;
        self.observation_model()
            .map_err(|e| schema("source.observations", e.to_string()))?;
        if let Some(bins) = self.fc_bins {
            let m = self.observation_model()?.alphabet();
            if bins == 0 || bins > m {
                return Err(schema("fc_bins", format!("must lie in 1..={m}")));
            }
        }
        for (i, ch) in axes.channels.iter().enumerate() {
            ch.model(self.energy, 0.0)
                .map_err(|e| schema(&format!("sweep.channels[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<TargetPrior, HarnessError> {
        let support = self.source.support.clone();
        Ok(match &self.source.prior {
            None => TargetPrior::uniform(support)?,
            Some(p) => TargetPrior::new(support, p.clone())?,
        })
    }

    pub fn observation_model(&self) -> Result<ObservationModel, HarnessError> {
        let support = self.source.support.clone();
        Ok(match &self.source.observations {
            ObservationConfig::Bernoulli => ObservationModel::bernoulli(support)?,
            ObservationConfig::MixedBinomial { trials } => ObservationModel::mixed_binomial(support, *trials)?,
            ObservationConfig::Tabular { table } => ObservationModel::tabular(support, table.clone())?,
        })
    }

    pub fn scenario(&self, point: &GridPoint) -> Result<Scenario, HarnessError> {
        Ok(Scenario::new(
            self.prior()?,
            self.observation_model()?,
            point.sensors,
            point.channel.model(self.energy, point.snr_db)?,
        )?)
    }

    /// Protocol spec for `kind` at `seed`; `bins` is used by FC-IB-TBMA.
    pub fn protocol_spec(&self, kind: ProtocolKind, seed: u64, bins: Option<usize>) -> ProtocolSpec {
        ProtocolSpec {
            kind,
            train: TrainConfig { seed, ..self.train },
            channel_uses: self.channel_uses,
            energy: self.energy,
            clustering: self.clustering.clone(),
            bins,
        }
    }

    /// Grid in deterministic order: channel, sensors, SNR, seed.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for channel in &self.sweep.channels {
            for &sensors in &self.sweep.sensors {
                for &snr_db in &self.sweep.snr_db {
                    for &seed in &self.sweep.seeds {
                        out.push(GridPoint {
                            channel: channel.clone(),
                            sensors,
                            snr_db,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }

    /// Output directory: `explicit`, else `$TBMA_OUT_DIR`, else the
    /// configured directory, else `out`.
    pub fn output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Overrides used by single-run commands; unset fields take the first
/// value of the corresponding sweep axis.
#[derive(Clone, Debug, Default)]
pub struct PointSelection {
    pub channel: Option<String>,
    pub sensors: Option<usize>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn select_point(&self, sel: &PointSelection) -> Result<GridPoint, HarnessError> {
        let channel = match &sel.channel {
            None => self.sweep.channels[0].clone(),
            Some(name) => self
                .sweep
                .channels
                .iter()
                .find(|c| c.name() == name)
                .cloned()
                .ok_or_else(|| HarnessError::Schema {
                    path: "sweep.channels".into(),
                    message: format!("no channel of kind `{name}` in the config"),
                })?,
        };
        Ok(GridPoint {
            channel,
            sensors: sel.sensors.unwrap_or(self.sweep.sensors[0]),
            snr_db: sel.snr_db.unwrap_or(self.sweep.snr_db[0]),
            seed: sel.seed.unwrap_or(self.sweep.seeds[0]),
        })
    }
}
