//! Grid sweeps: one job per grid point, run on the rayon pool, merged by
//! grid index into the results and summary tables.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GridPoint, Method, ALL_METHODS};
use crate::run::{run_method, write_run_dir, MethodRun};
use crate::{HarnessError, Result};

pub const RESULTS_HEADER: [&str; 8] = ["protocol", "channel", "K", "snr_db", "seed", "mse", "stderr", "m_prime"];

/// One row of `<name>_results.csv`. Failed runs carry `NaN` MSE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub protocol: String,
    pub channel: String,
    #[serde(rename = "K")]
    pub sensors: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub mse: f64,
    pub stderr: f64,
    /// Filled for the compressed protocols only.
    pub m_prime: Option<usize>,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        !self.mse.is_finite()
    }
}

/// One row of `<name>_summary.csv`: mean and standard error across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: String,
    pub channel: String,
    #[serde(rename = "K")]
    pub sensors: usize,
    pub snr_db: f64,
    pub runs: usize,
    pub failed: usize,
    pub mse_mean: f64,
    pub mse_se: f64,
    pub m_prime_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub protocol: String,
    pub channel: String,
    #[serde(rename = "K")]
    pub sensors: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Persist every trained system under `runs/<name>/`.
    pub save_models: bool,
}

#[derive(Debug)]
pub struct SweepReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
}

fn compressed(method: Method) -> bool {
    matches!(method, Method::CibTbma | Method::FcIbTbma)
}

fn row(point: &GridPoint, method: Method, run: &Result<MethodRun>) -> ResultRow {
    let (mse, stderr, m_prime) = match run {
        Ok(r) => (r.mse.mse, r.mse.stderr, r.m_prime.filter(|_| compressed(method))),
        Err(_) => (f64::NAN, f64::NAN, None),
    };
    ResultRow {
        protocol: method.name().into(),
        channel: point.channel.name().into(),
        sensors: point.sensors,
        snr_db: point.snr_db,
        seed: point.seed,
        mse,
        stderr,
        m_prime,
    }
}

/// Directory for the artifacts of one method at one grid point.
pub fn run_dir(out: &Path, name: &str, point: &GridPoint, method: Method) -> PathBuf {
    out.join("runs")
        .join(name)
        .join(format!(
            "{}_K{}_snr{}_seed{}",
            point.channel.name(),
            point.sensors,
            point.snr_db,
            point.seed
        ))
        .join(method.name())
}

/// All configured methods at one grid point, rows in config order.
/// CIB-TBMA runs before FC-IB-TBMA so the latter can take its `M′`.
pub fn run_job(
    config: &ExperimentConfig,
    point: &GridPoint,
    out: &Path,
    options: &SweepOptions,
) -> (Vec<ResultRow>, Vec<Failure>) {
    let order: Vec<Method> = ALL_METHODS
        .iter()
        .copied()
        .filter(|m| config.protocols.contains(m))
        .collect();
    let mut runs: Vec<(Method, Result<MethodRun>)> = Vec::new();
    for method in order {
        let bins = if method == Method::FcIbTbma && config.fc_bins.is_none() {
            match runs.iter().find(|(m, _)| *m == Method::CibTbma) {
                Some((_, Ok(cib))) => cib.m_prime,
                _ => None,
            }
        } else {
            None
        };
        let result = if method == Method::FcIbTbma && config.fc_bins.is_none() && bins.is_none() {
            Err(HarnessError::Schema {
                path: "fc_bins".into(),
                message: "CIB-TBMA failed at this grid point, so there is no M' to bin with".into(),
            })
        } else {
            run_method(config, point, method, bins)
        };
        let result = match result {
            Ok(r) if options.save_models => {
                write_run_dir(&run_dir(out, &config.name, point, method), config, point, &r).map(|_| r)
            }
            other => other,
        };
        runs.push((method, result));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &method in &config.protocols {
        let (_, result) = runs.iter().find(|(m, _)| *m == method).expect("method was run");
        rows.push(row(point, method, result));
        if let Err(e) = result {
            failures.push(Failure {
                protocol: method.name().into(),
                channel: point.channel.name().into(),
                sensors: point.sensors,
                snr_db: point.snr_db,
                seed: point.seed,
                error: e.to_string(),
            });
        }
    }
    (rows, failures)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(RESULTS_HEADER)?;
        return w.flush().map_err(|e| HarnessError::io(path, e));
    }
    write_csv(path, rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != RESULTS_HEADER {
        return Err(HarnessError::Schema {
            path: path.display().to_string(),
            message: format!("unexpected results header {header:?}"),
        });
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Mean and standard error across seeds for every protocol and grid
/// point, in order of first appearance. Failed runs are counted but not
/// averaged.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<(SummaryRow, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in rows {
        let idx = out.iter().position(|(s, _, _)| {
            s.protocol == r.protocol && s.channel == r.channel && s.sensors == r.sensors && s.snr_db == r.snr_db
        });
        let idx = idx.unwrap_or_else(|| {
            out.push((
                SummaryRow {
                    protocol: r.protocol.clone(),
                    channel: r.channel.clone(),
                    sensors: r.sensors,
                    snr_db: r.snr_db,
                    runs: 0,
                    failed: 0,
                    mse_mean: f64::NAN,
                    mse_se: f64::NAN,
                    m_prime_mean: None,
                },
                Vec::new(),
                Vec::new(),
            ));
            out.len() - 1
        });
        let (s, mses, mps) = &mut out[idx];
        s.runs += 1;
        if r.failed() {
            s.failed += 1;
        } else {
            mses.push(r.mse);
            if let Some(m) = r.m_prime {
                mps.push(m as f64);
            }
        }
    }
    out.into_iter()
        .map(|(mut s, mses, mps)| {
            if !mses.is_empty() {
                let n = mses.len() as f64;
                let mean = mses.iter().sum::<f64>() / n;
                s.mse_mean = mean;
                s.mse_se = if mses.len() > 1 {
                    let var = mses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                } else {
                    0.0
                };
            }
            if !mps.is_empty() {
                s.m_prime_mean = Some(mps.iter().sum::<f64>() / mps.len() as f64);
            }
            s
        })
        .collect()
}

/// Runs the whole grid. Each job writes a staging file; the staging files
/// are merged in grid order so the output does not depend on scheduling.
pub fn sweep(config: &ExperimentConfig, out: &Path, options: &SweepOptions) -> Result<SweepReport> {
    let staging = out.join("staging").join(&config.name);
    std::fs::create_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;
    let grid = config.grid();
    grid.par_iter()
        .enumerate()
        .map(|(i, point)| {
            let (rows, failures) = run_job(config, point, out, options);
            write_results(&staging.join(format!("job_{i:05}.csv")), &rows)?;
            if !failures.is_empty() {
                write_csv(&staging.join(format!("job_{i:05}_failures.csv")), &failures)?;
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for i in 0..grid.len() {
        rows.extend(read_results(&staging.join(format!("job_{i:05}.csv")))?);
        let fpath = staging.join(format!("job_{i:05}_failures.csv"));
        if fpath.exists() {
            let mut r = csv::Reader::from_path(&fpath)?;
            for f in r.deserialize() {
                failures.push(f?);
            }
        }
    }
    std::fs::remove_dir_all(&staging).map_err(|e| HarnessError::io(&staging, e))?;
    let parent = out.join("staging");
    if std::fs::read_dir(&parent)
        .map(|mut d| d.next().is_none())
        .unwrap_or(false)
    {
        let _ = std::fs::remove_dir(&parent);
    }

    let results_path = out.join(format!("{}_results.csv", config.name));
    write_results(&results_path, &rows)?;
    let summary = summarize(&rows);
    let summary_path = out.join(format!("{}_summary.csv", config.name));
    write_csv(&summary_path, &summary)?;
    let failures_path = out.join(format!("{}_failures.csv", config.name));
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| HarnessError::io(&failures_path, e))?;
        }
    } else {
        write_csv(&failures_path, &failures)?;
    }
    Ok(SweepReport {
        rows,
        summary,
        failures,
        results_path,
        summary_path,
    })
}
