//! Transitive closure of pairwise matches into site clusters.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairing::{LabeledPair, PairKey};

/// Disjoint sets with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Returns false when `a` and `b` were already connected.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteCluster {
    /// Smallest member uri.
    pub cluster_id: String,
    /// Sorted member uris.
    pub members: Vec<String>,
}

/// Connected components of the graph whose nodes are `records` and whose
/// edges are the pairs labeled 1. Unmatched records become singletons.
/// Output is sorted by `cluster_id`.
pub fn cluster_matches(records: &[String], matches: &[LabeledPair]) -> Result<Vec<SiteCluster>> {
    let index: HashMap<&str, usize> = records.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let lookup = |uri: &str| index.get(uri).copied().ok_or_else(|| Error::UnknownUri(uri.to_owned()));
    let mut uf = UnionFind::new(records.len());
    for p in matches.iter().filter(|p| p.label) {
        uf.union(lookup(p.key.uri_1())?, lookup(p.key.uri_2())?);
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, uri) in records.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(uri.clone());
    }
    let mut clusters: Vec<SiteCluster> = groups
        .into_values()
        .map(|mut members| {
            members.sort();
            members.dedup();
            SiteCluster { cluster_id: members[0].clone(), members }
        })
        .collect();
    clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    Ok(clusters)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClusterReport {
    pub clusters: usize,
    pub singletons: usize,
    pub largest: usize,
    /// Clusters with more members than the configured limit.
    pub oversized: Vec<String>,
    /// Pairs predicted non-match that transitivity placed in one cluster.
    pub contradictions: Vec<PairKey>,
}

pub fn cluster_report(clusters: &[SiteCluster], predictions: &[LabeledPair], max_size: usize) -> ClusterReport {
    let cluster_of: HashMap<&str, &str> =
        clusters.iter().flat_map(|c| c.members.iter().map(move |m| (m.as_str(), c.cluster_id.as_str()))).collect();
    let mut contradictions: Vec<PairKey> = predictions
        .iter()
        .filter(|p| !p.label)
        .filter(|p| {
            let a = cluster_of.get(p.key.uri_1());
            a.is_some() && a == cluster_of.get(p.key.uri_2())
        })
        .map(|p| p.key.clone())
        .collect();
    contradictions.sort();
    ClusterReport {
        clusters: clusters.len(),
        singletons: clusters.iter().filter(|c| c.members.len() == 1).count(),
        largest: clusters.iter().map(|c| c.members.len()).max().unwrap_or(0),
        oversized: clusters.iter().filter(|c| c.members.len() > max_size).map(|c| c.cluster_id.clone()).collect(),
        contradictions,
    }
}

pub fn write_clusters_jsonl<W: Write>(clusters: &[SiteCluster], mut w: W) -> Result<()> {
    for c in clusters {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n").map_err(|e| Error::io("<clusters>", e))?;
    }
    Ok(())
}
