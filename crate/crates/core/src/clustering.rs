//! Codeword clustering: pairwise distances, threshold graph and repeated
//! extraction of maximum cliques.

use crate::codebook::{Codebook, CodebookParams, CodewordAssignment, ATANH_CLIP};
use crate::error::{usage, Result};
use crate::mathkit::ComplexMatrix;

/// Largest vertex count supported by the bitset clique search.
pub const MAX_VERTICES: usize = 64;

/// Symmetric matrix of Euclidean distances between codewords.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(size: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != size * size {
            return usage("distance matrix must be square");
        }
        for i in 0..size {
            if entries[i * size + i] != 0.0 {
                return usage("distance matrix diagonal must be zero");
            }
            for j in 0..size {
                let d = entries[i * size + j];
                if !(d >= 0.0) || !d.is_finite() || d != entries[j * size + i] {
                    return usage("distances must be finite, nonnegative and symmetric");
                }
            }
        }
        Ok(Self { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    /// Distances above the diagonal, row by row.
    pub fn off_diagonal(&self) -> Vec<f64> {
        (0..self.size)
            .flat_map(|i| (i + 1..self.size).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }
}

/// `d_ij = ‖c_i − c_j‖₂` over the columns of `codebook`.
pub fn distance_matrix(codebook: &ComplexMatrix) -> DistanceMatrix {
    let m = codebook.cols();
    let mut entries = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = (0..codebook.rows())
                .map(|r| (codebook.get(r, i) - codebook.get(r, j)).norm_sqr())
                .sum::<f64>()
                .sqrt();
            entries[i * m + j] = d;
            entries[j * m + i] = d;
        }
    }
    DistanceMatrix { size: m, entries }
}

/// Undirected graph with an edge wherever `d_ij ≤ γ`, stored as bitsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdGraph {
    vertices: usize,
    adjacency: Vec<u64>,
}

impl ThresholdGraph {
    /// Graph from explicit edges.
    pub fn from_edges(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertices > MAX_VERTICES {
            return usage(format!("at most {MAX_VERTICES} vertices are supported"));
        }
        let mut adjacency = vec![0u64; vertices];
        for &(i, j) in edges {
            if i >= vertices || j >= vertices || i == j {
                return usage(format!("invalid edge ({i}, {j})"));
            }
            adjacency[i] |= 1 << j;
            adjacency[j] |= 1 << i;
        }
        Ok(Self { vertices, adjacency })
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i] >> j & 1 == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.count_ones() as usize).sum::<usize>() / 2
    }

    pub fn is_clique(&self, set: &[usize]) -> bool {
        set.iter()
            .enumerate()
            .all(|(a, &i)| set[a + 1..].iter().all(|&j| self.has_edge(i, j)))
    }
}

pub fn threshold_graph(distances: &DistanceMatrix, gamma: f64) -> Result<ThresholdGraph> {
    if !(gamma >= 0.0) {
        return usage(format!("threshold must be nonnegative, got {gamma}"));
    }
    let m = distances.size();
    if m > MAX_VERTICES {
        return usage(format!("at most {MAX_VERTICES} codewords are supported"));
    }
    let mut adjacency = vec![0u64; m];
    for (i, row) in adjacency.iter_mut().enumerate() {
        for j in 0..m {
            if i != j && distances.get(i, j) <= gamma {
                *row |= 1 << j;
            }
        }
    }
    Ok(ThresholdGraph { vertices: m, adjacency })
}

/// Upper bound on the clique number of `candidates` by greedy coloring.
fn color_bound(adjacency: &[u64], candidates: u64) -> usize {
    let mut uncolored = candidates;
    let mut colors = 0;
    while uncolored != 0 {
        colors += 1;
        let mut available = uncolored;
        while available != 0 {
            let v = available.trailing_zeros() as usize;
            available &= !(1 << v) & !adjacency[v];
            uncolored &= !(1 << v);
        }
    }
    colors
}

struct Search<'a> {
    adjacency: &'a [u64],
    best: Vec<usize>,
}

impl Search<'_> {
    // Vertices are added in increasing order, so the first clique found at
    // each size is the lexicographically smallest of that size; replacing
    // only on strict improvement keeps it.
    fn expand(&mut self, current: &mut Vec<usize>, candidates: u64) {
        if candidates == 0 {
            if current.len() > self.best.len() {
                self.best = current.clone();
            }
            return;
        }
        if current.len() + color_bound(self.adjacency, candidates) <= self.best.len() {
            return;
        }
        let mut rest = candidates;
        while rest != 0 {
            if current.len() + rest.count_ones() as usize <= self.best.len() {
                return;
            }
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            current.push(v);
            self.expand(current, rest & self.adjacency[v]);
            current.pop();
        }
    }
}

fn max_clique_within(adjacency: &[u64], active: u64) -> Vec<usize> {
    if active == 0 {
        return Vec::new();
    }
    let mut search = Search {
        adjacency,
        best: Vec::new(),
    };
    search.expand(&mut Vec::new(), active);
    search.best
}

/// A maximum clique; among those, the lexicographically smallest sorted
/// vertex list.
pub fn max_clique(graph: &ThresholdGraph) -> Vec<usize> {
    let all = if graph.vertices == 64 {
        u64::MAX
    } else {
        (1u64 << graph.vertices) - 1
    };
    max_clique_within(&graph.adjacency, all)
}

/// Clusters in extraction order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPartition {
    clusters: Vec<Vec<usize>>,
    vertices: usize,
}

impl ClusterPartition {
    pub fn new(vertices: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; vertices];
        for c in &clusters {
            if c.is_empty() {
                return usage("clusters must be non-empty");
            }
            for &v in c {
                if v >= vertices || seen[v] {
                    return usage(format!("vertex {v} is out of range or repeated"));
                }
                seen[v] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return usage("clusters do not cover every vertex");
        }
        Ok(Self { clusters, vertices })
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    /// Cluster index of every vertex.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.vertices];
        for (k, c) in self.clusters.iter().enumerate() {
            for &v in c {
                out[v] = k;
            }
        }
        out
    }

    /// Disjoint cover whose clusters are cliques of `graph`.
    pub fn is_valid_for(&self, graph: &ThresholdGraph) -> bool {
        self.vertices == graph.vertices() && self.clusters.iter().all(|c| graph.is_clique(c))
    }
}

/// Removes maximum cliques from `graph` until no vertex is left.
pub fn partition_graph(graph: &ThresholdGraph) -> ClusterPartition {
    let mut active = if graph.vertices == 64 {
        u64::MAX
    } else {
        (1u64 << graph.vertices) - 1
    };
    let mut clusters = Vec::new();
    while active != 0 {
        let clique = max_clique_within(&graph.adjacency, active);
        for &v in &clique {
            active &= !(1 << v);
        }
        clusters.push(clique);
    }
    ClusterPartition {
        clusters,
        vertices: graph.vertices,
    }
}

pub fn cluster_codewords(codebook: &ComplexMatrix, gamma: f64) -> Result<ClusterPartition> {
    let graph = threshold_graph(&distance_matrix(codebook), gamma)?;
    Ok(partition_graph(&graph))
}

/// Assignment `a(m) = cluster of m`, plus pre-parameters whose codewords
/// are the cluster means of `codebook`.
pub fn assignment_from_clusters(
    partition: &ClusterPartition,
    codebook: &Codebook,
) -> Result<(CodewordAssignment, CodebookParams)> {
    if partition.vertices() != codebook.cols() {
        return usage("partition and codebook sizes differ");
    }
    let assignment = CodewordAssignment::new(partition.labels(), partition.len())?;
    let rows = codebook.rows();
    let k = partition.len();
    let a = (codebook.energy() / (2.0 * rows as f64)).sqrt();
    let inv = |v: f64| (v / a).clamp(-ATANH_CLIP, ATANH_CLIP).atanh();
    let mut re = vec![0.0; rows * k];
    let mut im = vec![0.0; rows * k];
    for (c, members) in partition.clusters().iter().enumerate() {
        for r in 0..rows {
            let mean = members
                .iter()
                .map(|&m| codebook.matrix().get(r, m))
                .sum::<num_complex::Complex64>()
                / members.len() as f64;
            re[r * k + c] = inv(mean.re);
            im[r * k + c] = inv(mean.im);
        }
    }
    Ok((assignment, CodebookParams::new(rows, k, codebook.energy(), re, im)?))
}

/// Candidate thresholds: the 10%, 20%, ..., 90% quantiles of the
/// off-diagonal distances (linear interpolation between order statistics).
pub fn decile_thresholds(distances: &DistanceMatrix) -> Vec<f64> {
    let mut d = distances.off_diagonal();
    if d.is_empty() {
        return Vec::new();
    }
    d.sort_by(f64::total_cmp);
    (1..10)
        .map(|q| {
            let pos = q as f64 / 10.0 * (d.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::rng::{stream, streams};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn clique_number_by_enumeration(graph: &ThresholdGraph) -> usize {
        let m = graph.vertices();
        (0u32..1 << m)
            .filter(|&mask| {
                let set: Vec<usize> = (0..m).filter(|v| mask >> v & 1 == 1).collect();
                graph.is_clique(&set)
            })
            .map(|mask| mask.count_ones() as usize)
            .max()
            .unwrap_or(0)
    }

    fn random_graph(rng: &mut impl Rng, m: usize) -> ThresholdGraph {
        let p = rng.random_range(0.1..0.9);
        let edges: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .filter(|_| rng.random_bool(p))
            .collect();
        ThresholdGraph::from_edges(m, &edges).unwrap()
    }

    #[test]
    fn distances_of_simple_columns() {
        let cb = ComplexMatrix::new(
            2,
            3,
            vec![
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(1.0, 0.0),
                c(0.0, 0.0),
            ],
        )
        .unwrap();
        let d = distance_matrix(&cb);
        assert_eq!(d.get(0, 2), 0.0);
        assert!((d.get(0, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.get(1, 0), d.get(0, 1));
    }

    #[test]
    fn distances_match_entrywise_recomputation() {
        let mut rng = stream(2, streams::CODEBOOK);
        let cb = crate::codebook::gaussian_entries(6, 3, 1.0, &mut rng).unwrap();
        let d = distance_matrix(&cb);
        for i in 0..6 {
            for j in 0..6 {
                let mut s = 0.0;
                for r in 0..3 {
                    let (a, b) = (cb.entries()[r * 6 + i], cb.entries()[r * 6 + j]);
                    s += (a.re - b.re).powi(2) + (a.im - b.im).powi(2);
                }
                assert_eq!(d.get(i, j), s.sqrt());
            }
        }
    }

    #[test]
    fn threshold_boundaries() {
        let d = DistanceMatrix::new(3, vec![0.0, 0.5, 1.0, 0.5, 0.0, 2.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(threshold_graph(&d, 0.4).unwrap().edge_count(), 0);
        assert_eq!(threshold_graph(&d, 2.0).unwrap().edge_count(), 3);
        let g = threshold_graph(&d, 0.5).unwrap();
        assert!(g.has_edge(0, 1) && !g.has_edge(0, 2));
        assert!(threshold_graph(&d, -1.0).is_err());
    }

    #[test]
    fn clique_examples() {
        assert_eq!(max_clique(&ThresholdGraph::from_edges(3, &[]).unwrap()), vec![0]);
        let g = ThresholdGraph::from_edges(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        assert_eq!(max_clique(&g), vec![0, 1, 2]);
        let cycle = ThresholdGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        assert_eq!(max_clique(&cycle), vec![0, 1]);
        let late = ThresholdGraph::from_edges(5, &[(0, 1), (2, 3), (3, 4), (2, 4)]).unwrap();
        assert_eq!(max_clique(&late), vec![2, 3, 4]);
    }

    #[test]
    fn clique_number_matches_enumeration() {
        let mut rng = stream(17, streams::EVAL);
        for _ in 0..500 {
            let m = rng.random_range(1..=12);
            let g = random_graph(&mut rng, m);
            let k = max_clique(&g);
            assert!(g.is_clique(&k));
            assert_eq!(k.len(), clique_number_by_enumeration(&g));
        }
    }

    #[test]
    fn lexicographic_tie_break_matches_enumeration() {
        let mut rng = stream(18, streams::EVAL);
        for _ in 0..200 {
            let m = rng.random_range(1..=10);
            let g = random_graph(&mut rng, m);
            let size = clique_number_by_enumeration(&g);
            let smallest = (0u32..1 << m)
                .map(|mask| (0..m).filter(|v| mask >> v & 1 == 1).collect::<Vec<_>>())
                .filter(|s| s.len() == size && g.is_clique(s))
                .min()
                .unwrap();
            assert_eq!(max_clique(&g), smallest);
        }
    }

    #[test]
    fn cluster_examples() {
        let same = ComplexMatrix::new(2, 4, vec![c(0.3, 0.1); 8]).unwrap();
        let p = cluster_codewords(&same, 0.1).unwrap();
        assert_eq!(p.clusters(), &[vec![0, 1, 2, 3]]);

        let mut rng = stream(3, streams::CODEBOOK);
        let distinct = crate::codebook::gaussian_entries(5, 2, 1.0, &mut rng).unwrap();
        let p = cluster_codewords(&distinct, 0.0).unwrap();
        assert_eq!(p.len(), 5);

        // Columns 0..2 within 0.1 of each other, 3 and 4 far away.
        let cb = ComplexMatrix::new(
            1,
            5,
            vec![c(0.0, 0.0), c(0.05, 0.0), c(0.025, 0.0866), c(3.0, 0.0), c(-3.0, 0.0)],
        )
        .unwrap();
        let p = cluster_codewords(&cb, 0.5).unwrap();
        assert_eq!(p.clusters(), &[vec![0, 1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn assignment_examples() {
        let mut rng = stream(4, streams::INIT);
        let params = CodebookParams::random(3, 4, 1.0, &mut rng).unwrap();
        let cb = params.materialize();
        let singletons = ClusterPartition::new(4, vec![vec![0], vec![1], vec![2], vec![3]]).unwrap();
        let (a, p) = assignment_from_clusters(&singletons, &cb).unwrap();
        assert!(a.is_identity());
        for (x, y) in p.materialize().matrix().entries().iter().zip(cb.matrix().entries()) {
            assert!((x - y).norm() < 1e-9);
        }

        let col = [c(0.2, -0.1), c(0.3, 0.25)];
        let twin = Codebook::new(
            ComplexMatrix::new(2, 2, vec![col[0], col[0], col[1], col[1]]).unwrap(),
            1.0,
        )
        .unwrap();
        let one = ClusterPartition::new(2, vec![vec![0, 1]]).unwrap();
        let (a, p) = assignment_from_clusters(&one, &twin).unwrap();
        assert_eq!(a.map(), &[0, 0]);
        let merged = p.materialize();
        assert!((merged.matrix().get(0, 0) - col[0]).norm() < 1e-9);
        assert!((merged.matrix().get(1, 0) - col[1]).norm() < 1e-9);

        let opposite = Codebook::new(
            ComplexMatrix::new(2, 2, vec![col[0], -col[0], col[1], -col[1]]).unwrap(),
            1.0,
        )
        .unwrap();
        let (_, p) = assignment_from_clusters(&one, &opposite).unwrap();
        assert!(p.materialize().matrix().entries().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn deciles_of_a_uniform_grid() {
        // Off-diagonal distances of points 0..=4 on a line: 1,2,3,4,1,2,3,1,2,1.
        let pts: Vec<Complex64> = (0..5).map(|i| c(i as f64, 0.0)).collect();
        let d = distance_matrix(&ComplexMatrix::new(1, 5, pts).unwrap());
        let q = decile_thresholds(&d);
        assert_eq!(q.len(), 9);
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        // Sorted: 1,1,1,1,2,2,2,3,3,4, so the median is 2.
        assert!((q[4] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn partitions_are_exact_and_ordered(seed in 0u64..10_000, m in 1usize..16, gamma in 0.0f64..3.0) {
            let mut rng = stream(seed, streams::CODEBOOK);
            let cb = crate::codebook::gaussian_entries(m, 2, 1.0, &mut rng).unwrap();
            let graph = threshold_graph(&distance_matrix(&cb), gamma).unwrap();
            let p = partition_graph(&graph);
            prop_assert!(ClusterPartition::new(m, p.clusters().to_vec()).is_ok());
            prop_assert!(p.is_valid_for(&graph));
            prop_assert!(p.clusters().windows(2).all(|w| w[0].len() >= w[1].len()));
            prop_assert_eq!(p, cluster_codewords(&cb, gamma).unwrap());
        }
    }
}
