use std::collections::{BTreeMap, BTreeSet};

use super::band::{assign_band, Band};
use super::{MlnError, Result};

/// One simple undirected graph over counties.
///
/// Nodes are kept in sorted order and referred to by index internally;
/// adjacency lists are sorted and free of self-loops and parallel edges.
#[derive(Debug, Clone, PartialEq)]
pub struct MlnLayer {
    name: String,
    nodes: Vec<String>,
    adjacency: Vec<Vec<usize>>,
    band_of: BTreeMap<String, Band>,
    edge_count: usize,
}

impl MlnLayer {
    /// Builds a layer from an explicit edge list. `band_of` may be empty for
    /// layers that are not built from percentage changes.
    pub fn from_edges(
        name: impl Into<String>,
        nodes: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = (String, String)>,
        band_of: BTreeMap<String, Band>,
    ) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = |n: &str| {
            nodes
                .binary_search_by(|x| x.as_str().cmp(n))
                .map_err(|_| MlnError::UnknownNode(n.to_string()))
        };
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut edge_count = 0;
        for (u, v) in edges {
            let (iu, iv) = (index(&u)?, index(&v)?);
            if iu == iv {
                return Err(MlnError::SelfLoop(u));
            }
            if adjacency[iu].contains(&iv) {
                return Err(MlnError::ParallelEdge(u, v));
            }
            adjacency[iu].push(iv);
            adjacency[iv].push(iu);
            edge_count += 1;
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        for fips in band_of.keys() {
            index(fips)?;
        }
        Ok(Self {
            name: name.into(),
            nodes,
            adjacency,
            band_of,
            edge_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn index_of(&self, node: &str) -> Option<usize> {
        self.nodes.binary_search_by(|x| x.as_str().cmp(node)).ok()
    }

    /// Sorted neighbour indices of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn band_of(&self, node: &str) -> Option<Band> {
        self.band_of.get(node).copied()
    }

    pub fn bands(&self) -> &BTreeMap<String, Band> {
        &self.band_of
    }

    /// Edges as index pairs `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Connected components as sorted lists of node indices, ordered by
    /// their smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Pairs of nodes linked across two layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterlayerLinks {
    pub from_layer: usize,
    pub to_layer: usize,
    pub links: Vec<(String, String)>,
}

/// A multilayer network: a set of layers plus bipartite links between them.
///
/// The dashboard only analyses homogeneous layers individually; the links are
/// carried so the model stays complete.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mln {
    pub layers: Vec<MlnLayer>,
    pub interlayer_links: Vec<InterlayerLinks>,
}

impl Mln {
    pub fn new(layers: Vec<MlnLayer>, interlayer_links: Vec<InterlayerLinks>) -> Result<Self> {
        for layer in &layers {
            if let Some(bad) = layer
                .nodes()
                .iter()
                .find(|n| !crate::ingestion::RegionId::is_fips(n))
            {
                return Err(MlnError::NotACounty(bad.clone()));
            }
        }
        for set in &interlayer_links {
            let (Some(from), Some(to)) = (layers.get(set.from_layer), layers.get(set.to_layer)) else {
                return Err(MlnError::UnknownLayer(set.from_layer.max(set.to_layer)));
            };
            for (u, v) in &set.links {
                from.index_of(u).ok_or_else(|| MlnError::UnknownNode(u.clone()))?;
                to.index_of(v).ok_or_else(|| MlnError::UnknownNode(v.clone()))?;
            }
        }
        Ok(Self {
            layers,
            interlayer_links,
        })
    }

    /// A homogeneous MLN without inter-layer links.
    pub fn homogeneous(layers: Vec<MlnLayer>) -> Result<Self> {
        Self::new(layers, Vec::new())
    }
}

/// Builds a layer in which two counties are adjacent exactly when their
/// percentage changes fall in the same band, giving one clique per band.
pub fn build_layer(changes: &BTreeMap<String, f64>, name: &str) -> Result<MlnLayer> {
    if changes.is_empty() {
        return Err(MlnError::EmptyLayer);
    }
    let mut band_of = BTreeMap::new();
    for (fips, &p) in changes {
        band_of.insert(fips.clone(), assign_band(p)?);
    }
    let nodes: Vec<String> = changes.keys().cloned().collect();
    let mut members: BTreeMap<Band, Vec<usize>> = BTreeMap::new();
    for (i, fips) in nodes.iter().enumerate() {
        members.entry(band_of[fips]).or_default().push(i);
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    let mut edge_count = 0;
    for group in members.values() {
        let k = group.len();
        edge_count += k * (k - 1) / 2;
        for &u in group {
            adjacency[u] = group.iter().copied().filter(|&v| v != u).collect();
        }
    }
    Ok(MlnLayer {
        name: name.to_string(),
        nodes,
        adjacency,
        band_of,
        edge_count,
    })
}
