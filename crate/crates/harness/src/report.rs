//! Clustering report for a persisted Phase-I system.

use std::fmt::Write as _;

use serde::Serialize;
use tbma_core::clustering::{decile_thresholds, distance_matrix, partition_graph, threshold_graph};
use tbma_core::training::TrainedSystem;

use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterReportEntry {
    pub gamma: f64,
    pub codewords: usize,
    pub clusters: Vec<Vec<usize>>,
    /// Disjoint cover of the codewords by cliques of the threshold graph.
    pub valid: bool,
}

/// Clusters the system's codewords at each threshold, or at the deciles of
/// the pairwise distances when `gammas` is empty.
pub fn cluster_report(system: &TrainedSystem, gammas: &[f64]) -> Result<Vec<ClusterReportEntry>> {
    let distances = distance_matrix(system.codebook().matrix());
    let gammas = if gammas.is_empty() {
        decile_thresholds(&distances)
    } else {
        gammas.to_vec()
    };
    gammas
        .into_iter()
        .map(|gamma| {
            let graph = threshold_graph(&distances, gamma)?;
            let partition = partition_graph(&graph);
            Ok(ClusterReportEntry {
                gamma,
                codewords: partition.len(),
                valid: partition.is_valid_for(&graph),
                clusters: partition.clusters().to_vec(),
            })
        })
        .collect()
}

pub fn format_report(entries: &[ClusterReportEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let clusters: Vec<String> = e
            .clusters
            .iter()
            .map(|c| format!("{{{}}}", c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        let _ = writeln!(
            s,
            "gamma={:.6} M'={} valid={} clusters={}",
            e.gamma,
            e.codewords,
            e.valid,
            clusters.join(" ")
        );
    }
    s
}
