//! Two-phase Louvain modularity optimisation.
//!
//! Phase one repeatedly moves single nodes to the neighbouring community with
//! the largest modularity gain; phase two collapses every community into a
//! weighted super-node. Levels repeat until a level makes no move. Node visit
//! order comes from a seeded shuffle, so the result depends only on the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::MlnLayer;
use super::{MlnError, Result};

/// Minimum modularity gain for a node move to be applied.
pub const EPSILON: f64 = 1e-7;

/// Assignment of every layer node to a community. Ids are contiguous from 0
/// and numbered in order of each community's first node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    community_of: Vec<usize>,
    num_communities: usize,
}

impl Partition {
    /// Normalises arbitrary labels (one per node index) into contiguous ids.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let community_of = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            community_of,
            num_communities: remap.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn all_in_one(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    /// Community of node index `i`.
    pub fn community(&self, i: usize) -> usize {
        self.community_of[i]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.community_of
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn len(&self) -> usize {
        self.community_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.community_of.is_empty()
    }

    /// Members of each community, by node index.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_communities];
        for (i, &c) in self.community_of.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// Newman modularity with resolution 1:
/// `Q = sum_c [ in_c / 2m - (tot_c / 2m)^2 ]`.
pub fn modularity(layer: &MlnLayer, part: &Partition) -> Result<f64> {
    if part.len() != layer.node_count() {
        return Err(MlnError::PartitionSize {
            expected: layer.node_count(),
            got: part.len(),
        });
    }
    let m = layer.edge_count();
    if m == 0 {
        return Err(MlnError::NoEdges);
    }
    let two_m = 2.0 * m as f64;
    let mut inside = vec![0.0; part.num_communities()];
    let mut total = vec![0.0; part.num_communities()];
    for i in 0..layer.node_count() {
        total[part.community(i)] += layer.degree(i) as f64;
    }
    for (u, v) in layer.edges() {
        if part.community(u) == part.community(v) {
            inside[part.community(u)] += 2.0;
        }
    }
    Ok(inside
        .iter()
        .zip(&total)
        .map(|(i, t)| i / two_m - (t / two_m).powi(2))
        .sum())
}

/// Statistics reported after each Louvain level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    /// Modularity of the original layer under the partition reached so far.
    pub modularity: f64,
    pub communities: usize,
    pub moves: usize,
}

/// Runs Louvain with the given seed.
pub fn louvain(layer: &MlnLayer, seed: u64) -> Result<Partition> {
    louvain_with_observer(layer, seed, |_| {})
}

/// Like [`louvain`], calling `observer` after every level that moved nodes.
pub fn louvain_with_observer(
    layer: &MlnLayer,
    seed: u64,
    mut observer: impl FnMut(&LevelStats),
) -> Result<Partition> {
    if layer.node_count() == 0 {
        return Err(MlnError::EmptyLayer);
    }
    let n = layer.node_count();
    if layer.edge_count() == 0 {
        return Ok(Partition::singletons(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = WeightedGraph::from_layer(layer);
    // Community of each original node, in terms of the current graph's nodes.
    let mut membership: Vec<usize> = (0..n).collect();
    for level in 0.. {
        let (labels, moves) = graph.local_moves(&mut rng);
        if moves == 0 {
            break;
        }
        let (next, dense) = graph.aggregate(&labels);
        for m in membership.iter_mut() {
            *m = dense[*m];
        }
        graph = next;
        let part = Partition::from_labels(&membership);
        observer(&LevelStats {
            level,
            modularity: modularity(layer, &part)?,
            communities: part.num_communities(),
            moves,
        });
        if graph.len() == 1 {
            break;
        }
    }
    Ok(Partition::from_labels(&membership))
}

struct WeightedGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    /// Weighted degree; self-loops count twice.
    degree: Vec<f64>,
    two_m: f64,
}

impl WeightedGraph {
    fn from_layer(layer: &MlnLayer) -> Self {
        let adjacency: Vec<Vec<(usize, f64)>> = (0..layer.node_count())
            .map(|i| layer.neighbors(i).iter().map(|&j| (j, 1.0)).collect())
            .collect();
        Self::new(adjacency, vec![0.0; layer.node_count()])
    }

    fn new(adjacency: Vec<Vec<(usize, f64)>>, self_loops: Vec<f64>) -> Self {
        let degree: Vec<f64> = adjacency
            .iter()
            .zip(&self_loops)
            .map(|(adj, s)| adj.iter().map(|e| e.1).sum::<f64>() + 2.0 * s)
            .collect();
        let two_m = degree.iter().sum();
        Self {
            adjacency,
            self_loops,
            degree,
            two_m,
        }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    /// Phase one. Returns the community label of each node and the number of
    /// moves applied.
    fn local_moves(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
        let n = self.len();
        let m = self.two_m / 2.0;
        let mut community: Vec<usize> = (0..n).collect();
        let mut total: Vec<f64> = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut weight_to = vec![0.0; n];
        let mut is_touched = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moves = 0;
        loop {
            let mut moved = false;
            for &i in &order {
                let own = community[i];
                let k_i = self.degree[i];
                touched.clear();
                for &(j, w) in &self.adjacency[i] {
                    let c = community[j];
                    if !is_touched[c] {
                        is_touched[c] = true;
                        touched.push(c);
                    }
                    weight_to[c] += w;
                }
                total[own] -= k_i;
                // Gain of inserting i into c, up to the common factor 1/m.
                let gain = |c: usize, w: f64| w - total[c] * k_i / self.two_m;
                let own_gain = gain(own, weight_to[own]);
                let mut best = own;
                let mut best_gain = own_gain;
                touched.sort_unstable();
                for &c in &touched {
                    let g = gain(c, weight_to[c]);
                    if g > best_gain || (g == best_gain && c < best) {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != own && (best_gain - own_gain) / m <= EPSILON {
                    best = own;
                }
                total[best] += k_i;
                if best != own {
                    community[i] = best;
                    moved = true;
                    moves += 1;
                }
                for &c in &touched {
                    weight_to[c] = 0.0;
                    is_touched[c] = false;
                }
            }
            if !moved {
                break;
            }
        }
        (community, moves)
    }

    /// Phase two. Collapses communities into super-nodes; also returns the
    /// map from this graph's nodes to the new super-node ids.
    fn aggregate(&self, labels: &[usize]) -> (WeightedGraph, Vec<usize>) {
        let part = Partition::from_labels(labels);
        let k = part.num_communities();
        let dense = part.assignments().to_vec();
        let mut edges: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        let mut self_loops = vec![0.0; k];
        for (u, adj) in self.adjacency.iter().enumerate() {
            let cu = dense[u];
            self_loops[cu] += self.self_loops[u];
            for &(v, w) in adj {
                let cv = dense[v];
                if cu == cv {
                    // Each internal edge is seen from both ends.
                    self_loops[cu] += w / 2.0;
                } else {
                    *edges[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        let adjacency = edges.into_iter().map(|m| m.into_iter().collect()).collect();
        (WeightedGraph::new(adjacency, self_loops), dense)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::collections::BTreeMap;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize)]) -> MlnLayer {
        MlnLayer::from_edges(
            "g",
            (0..n).map(|i| format!("{i:05}")),
            edges
                .iter()
                .map(|(u, v)| (format!("{u:05}"), format!("{v:05}"))),
            BTreeMap::new(),
        )
        .unwrap()
    }

    /// Every set partition of `n` nodes as restricted growth strings.
    pub(crate) fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if i == n {
                out.push(cur.clone());
                return;
            }
            for c in 0..=max + 1 {
                cur.push(c);
                rec(i + 1, n, max.max(c), cur, out);
                cur.pop();
            }
        }
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        let mut cur = vec![0];
        rec(1, n, 0, &mut cur, &mut out);
        out
    }

    /// Modularity from the pairwise definition
    /// `Q = 1/2m * sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j)`.
    pub(crate) fn pairwise_modularity(layer: &MlnLayer, labels: &[usize]) -> f64 {
        let n = layer.node_count();
        let two_m = 2.0 * layer.edge_count() as f64;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] != labels[j] {
                    continue;
                }
                let a = if layer.neighbors(i).contains(&j) { 1.0 } else { 0.0 };
                q += a - layer.degree(i) as f64 * layer.degree(j) as f64 / two_m;
            }
        }
        q / two_m
    }

    pub(crate) fn brute_force_best(layer: &MlnLayer) -> (f64, Vec<usize>) {
        all_partitions(layer.node_count())
            .into_iter()
            .map(|p| (pairwise_modularity(layer, &p), p))
            .fold((f64::NEG_INFINITY, vec![]), |best, cand| {
                if cand.0 > best.0 + 1e-12 { cand } else { best }
            })
    }

    fn triangles() -> MlnLayer {
        graph(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    }

    #[test]
    fn partition_enumeration_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203, 877];
        for (n, b) in bell.iter().enumerate() {
            assert_eq!(all_partitions(n).len(), *b);
        }
    }

    #[test]
    fn modularity_spot_values() {
        let edge = graph(2, &[(0, 1)]);
        assert_eq!(modularity(&edge, &Partition::all_in_one(2)).unwrap(), 0.0);
        assert_eq!(modularity(&edge, &Partition::singletons(2)).unwrap(), -0.5);
        let tri = triangles();
        let q = modularity(&tri, &Partition::from_labels(&[0, 0, 0, 1, 1, 1])).unwrap();
        assert!((q - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modularity_agrees_with_pairwise_definition() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        for p in all_partitions(5) {
            let a = modularity(&g, &Partition::from_labels(&p)).unwrap();
            let b = pairwise_modularity(&g, &p);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn modularity_errors() {
        let isolated = graph(2, &[]);
        assert!(matches!(
            modularity(&isolated, &Partition::singletons(2)),
            Err(MlnError::NoEdges)
        ));
        let edge = graph(2, &[(0, 1)]);
        assert!(modularity(&edge, &Partition::singletons(3)).is_err());
    }

    #[test]
    fn two_triangles() {
        let tri = triangles();
        let (best_q, best) = brute_force_best(&tri);
        assert!((best_q - 0.5).abs() < 1e-12);
        for seed in 0..10 {
            let p = louvain(&tri, seed).unwrap();
            assert_eq!(p, Partition::from_labels(&best), "seed {seed}");
        }
    }

    #[test]
    fn single_edge_merges() {
        let p = louvain(&graph(2, &[(0, 1)]), 7).unwrap();
        assert_eq!(p.num_communities(), 1);
    }

    #[test]
    fn two_k4_and_an_isolated_node() {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((base + i, base + j));
                }
            }
        }
        let g = graph(9, &edges);
        let (best_q, best) = brute_force_best(&g);
        let p = louvain(&g, 3).unwrap();
        assert_eq!(p.num_communities(), 3);
        // The isolated node may join any community without changing Q, so
        // the oracle only pins down the grouping of the two K4s.
        assert_eq!(&p.assignments()[..8], &Partition::from_labels(&best[..8]).assignments()[..]);
        assert!((modularity(&g, &p).unwrap() - best_q).abs() < 1e-12);
    }

    #[test]
    fn edgeless_layer_gives_singletons_and_empty_layer_errors() {
        assert_eq!(louvain(&graph(3, &[]), 1).unwrap(), Partition::singletons(3));
        assert!(matches!(louvain(&graph(0, &[]), 1), Err(MlnError::EmptyLayer)));
    }

    #[test]
    fn same_seed_same_result() {
        let g = graph(8, &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 4), (4, 5), (5, 6), (6, 7), (7, 4)]);
        assert_eq!(louvain(&g, 11).unwrap(), louvain(&g, 11).unwrap());
    }

    #[test]
    fn observer_sees_non_decreasing_modularity() {
        // Ring of 6 triangles joined by single edges needs more than one level.
        let mut edges = Vec::new();
        for t in 0..6 {
            let b = 3 * t;
            edges.extend([(b, b + 1), (b + 1, b + 2), (b, b + 2)]);
            edges.push((b + 2, (b + 3) % 18));
        }
        let g = graph(18, &edges);
        for seed in 0..5 {
            let mut trace = Vec::new();
            let p = louvain_with_observer(&g, seed, |s| trace.push(s.modularity)).unwrap();
            assert!(!trace.is_empty());
            assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{trace:?}");
            assert!((trace.last().unwrap() - modularity(&g, &p).unwrap()).abs() < 1e-12);
        }
    }
}
