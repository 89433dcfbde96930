use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::DuplicatePair;
use crate::corpus::{DocId, Registry};
use crate::error::Result;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Components as sorted member lists, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
        for x in 0..self.len() {
            let r = self.find(x);
            by_root.entry(r).or_default().push(x);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
        comps.sort_unstable_by_key(|c| c[0]);
        comps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub cluster_id: usize,
    pub kept_doc_id: DocId,
    /// Sorted by doc id.
    pub members: Vec<DocId>,
}

impl DuplicateCluster {
    pub fn removed(&self) -> impl Iterator<Item = &DocId> {
        self.members.iter().filter(move |m| **m != self.kept_doc_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    pub clusters: Vec<DuplicateCluster>,
    pub removed: BTreeSet<DocId>,
}

impl Clustering {
    /// Documents outside every cluster are kept.
    pub fn is_kept(&self, id: &DocId) -> bool {
        !self.removed.contains(id)
    }
}

/// Connected components of the pair graph. Each cluster keeps the member
/// from the dataset with the best retention rank, the smallest doc id among
/// equals; every other member is removed.
pub fn cluster_and_retain(pairs: &[DuplicatePair], registry: &Registry) -> Result<Clustering> {
    let mut ids: Vec<&DocId> = pairs.iter().flat_map(|p| [&p.doc_a, &p.doc_b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rank = Vec::with_capacity(ids.len());
    for id in &ids {
        rank.push(registry.require(&id.dataset)?.retention_rank);
    }
    let index: HashMap<&DocId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut uf = UnionFind::new(ids.len());
    for p in pairs {
        uf.union(index[&p.doc_a], index[&p.doc_b]);
    }

    let mut out = Clustering::default();
    for members in uf.components() {
        if members.len() < 2 {
            continue;
        }
        // ids are sorted, so index order is doc-id order
        let kept = *members
            .iter()
            .min_by_key(|&&m| (rank[m], m))
            .expect("non-empty component");
        for &m in &members {
            if m != kept {
                out.removed.insert(ids[m].clone());
            }
        }
        out.clusters.push(DuplicateCluster {
            cluster_id: out.clusters.len(),
            kept_doc_id: ids[kept].clone(),
            members: members.iter().map(|&m| ids[m].clone()).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    use proptest::prelude::*;

    fn pair(a: &DocId, b: &DocId) -> DuplicatePair {
        DuplicatePair {
            doc_a: a.clone(),
            doc_b: b.clone(),
            band: 0,
        }
    }

    #[test]
    fn higher_ranked_dataset_kept() {
        let r = Registry::reference();
        let a1 = DocId::new("starcoder", 0, 0);
        let b1 = DocId::new("slimpajama", 0, 0);
        let c = cluster_and_retain(&[pair(&b1, &a1)], &r).unwrap();
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].kept_doc_id, a1);
        assert!(c.removed.contains(&b1) && c.is_kept(&a1));
    }

    #[test]
    fn chain_in_one_dataset_keeps_smallest_id() {
        let r = Registry::reference();
        let x = DocId::new("c4-en", 0, 3);
        let y = DocId::new("c4-en", 0, 1);
        let z = DocId::new("c4-en", 1, 0);
        let c = cluster_and_retain(&[pair(&x, &y), pair(&y, &z)], &r).unwrap();
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].members, vec![y.clone(), x.clone(), z.clone()]);
        assert_eq!(c.clusters[0].kept_doc_id, y);
        assert_eq!(c.removed.len(), 2);
        assert!(c.is_kept(&DocId::new("c4-en", 9, 9)));
    }

    #[test]
    fn unknown_dataset_is_error() {
        let r = Registry::reference();
        let p = pair(&DocId::new("nope", 0, 0), &DocId::new("c4-en", 0, 0));
        assert!(cluster_and_retain(&[p], &r).is_err());
    }

    fn bfs_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        q.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    proptest! {
        #[test]
        fn union_find_matches_bfs(n in 1usize..200, raw in proptest::collection::vec((0usize..200, 0usize..200), 0..300)) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let mut uf = UnionFind::new(n);
            for &(a, b) in &edges {
                uf.union(a, b);
            }
            prop_assert_eq!(uf.components(), bfs_components(n, &edges));
        }
    }
}
