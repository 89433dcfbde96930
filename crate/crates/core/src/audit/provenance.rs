use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::Registry;
use crate::lsh::DuplicateCluster;

/// For each dataset D, where the duplicates of D's documents come from.
///
/// Every document in a cluster of `c` members contributes one count per
/// co-member (`c - 1` in total), keyed by the co-member's dataset; rows are
/// those counts normalized to sum to one.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProvenanceMatrix {
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
}

pub fn provenance_matrix(clusters: &[DuplicateCluster]) -> ProvenanceMatrix {
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for c in clusters {
        let mut per_dataset: BTreeMap<&str, u64> = BTreeMap::new();
        for m in &c.members {
            *per_dataset.entry(m.dataset.as_str()).or_default() += 1;
        }
        for (&d, &nd) in &per_dataset {
            let row = counts.entry(d.to_string()).or_default();
            for (&x, &nx) in &per_dataset {
                let co = if x == d { nx - 1 } else { nx };
                if co > 0 {
                    *row.entry(x.to_string()).or_default() += nd * co;
                }
            }
        }
    }
    let rows = counts
        .iter()
        .filter_map(|(d, row)| {
            let total: u64 = row.values().sum();
            (total > 0).then(|| {
                let norm = row
                    .iter()
                    .map(|(x, &n)| (x.clone(), n as f64 / total as f64))
                    .collect();
                (d.clone(), norm)
            })
        })
        .collect();
    ProvenanceMatrix { counts, rows }
}

impl ProvenanceMatrix {
    pub fn share(&self, dataset: &str, source: &str) -> f64 {
        self.rows
            .get(dataset)
            .and_then(|r| r.get(source))
            .copied()
            .unwrap_or(0.0)
    }

    /// Percentage table with datasets in registry insertion order.
    pub fn render_text(&self, registry: &Registry) -> String {
        let names: Vec<&str> = registry
            .by_insertion_order()
            .iter()
            .map(|d| d.name.as_str())
            .collect();
        let mut out = format!("{:<22}", "dataset \\ source");
        for n in &names {
            let _ = write!(out, " {:>10.10}", n);
        }
        out.push('\n');
        for d in &names {
            if !self.rows.contains_key(*d) {
                continue;
            }
            let _ = write!(out, "{:<22}", d);
            for x in &names {
                let _ = write!(out, " {:>9.1}%", 100.0 * self.share(d, x));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocId;

    fn cluster(members: &[(&str, u64)]) -> DuplicateCluster {
        let mut members: Vec<DocId> = members.iter().map(|(d, o)| DocId::new(*d, 0, *o)).collect();
        members.sort();
        DuplicateCluster {
            cluster_id: 0,
            kept_doc_id: members[0].clone(),
            members,
        }
    }

    #[test]
    fn same_dataset_pair() {
        let m = provenance_matrix(&[cluster(&[("A", 1), ("A", 2)])]);
        assert_eq!(m.share("A", "A"), 1.0);
    }

    #[test]
    fn cross_dataset_pair() {
        let m = provenance_matrix(&[cluster(&[("A", 1), ("B", 1)])]);
        assert_eq!(m.share("A", "B"), 1.0);
        assert_eq!(m.share("B", "A"), 1.0);
        assert_eq!(m.share("A", "A"), 0.0);
    }

    #[test]
    fn three_cluster_fixture() {
        // c1 {A1, A2, B1}: A1 sees A,B; A2 sees A,B; B1 sees A,A
        // c2 {A3, C1}:     A3 sees C;   C1 sees A
        // c3 {B2, C2, C3}: B2 sees C,C; C2 sees B,C; C3 sees B,C
        // row A: A=2 B=2 C=1 -> 2/5 2/5 1/5
        // row B: A=2 C=2     -> 1/2 1/2
        // row C: A=1 B=2 C=2 -> 1/5 2/5 2/5
        let m = provenance_matrix(&[
            cluster(&[("A", 1), ("A", 2), ("B", 1)]),
            cluster(&[("A", 3), ("C", 1)]),
            cluster(&[("B", 2), ("C", 2), ("C", 3)]),
        ]);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(m.share("A", "A"), 0.4));
        assert!(close(m.share("A", "B"), 0.4));
        assert!(close(m.share("A", "C"), 0.2));
        assert!(close(m.share("B", "A"), 0.5));
        assert!(close(m.share("B", "C"), 0.5));
        assert!(close(m.share("C", "A"), 0.2));
        assert!(close(m.share("C", "B"), 0.4));
        assert!(close(m.share("C", "C"), 0.4));
        for row in m.rows.values() {
            assert!((row.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_input() {
        assert_eq!(provenance_matrix(&[]), ProvenanceMatrix::default());
    }
}
