use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::FilterVerdict;

/// Removal counts for one dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRemovals {
    pub initial: u64,
    pub removed: u64,
    pub by_filter: BTreeMap<String, u64>,
}

impl DatasetRemovals {
    pub fn percent_removed(&self) -> f64 {
        if self.initial == 0 {
            0.0
        } else {
            100.0 * self.removed as f64 / self.initial as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReportRow {
    pub dataset: String,
    pub filter_id: String,
    pub removed_count: u64,
}

/// Per-dataset, per-filter removal table. Partial tables from different
/// shards combine with [`FilterReport::merge`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub datasets: BTreeMap<String, DatasetRemovals>,
}

impl FilterReport {
    pub fn from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a FilterVerdict>) -> Self {
        let mut report = FilterReport::default();
        for v in verdicts {
            report.record(v);
        }
        report
    }

    pub fn record(&mut self, v: &FilterVerdict) {
        let entry = self.datasets.entry(v.doc_id.dataset.clone()).or_default();
        entry.initial += 1;
        if let Some(f) = &v.removed_by {
            entry.removed += 1;
            *entry.by_filter.entry(f.clone()).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &FilterReport) {
        for (name, theirs) in &other.datasets {
            let ours = self.datasets.entry(name.clone()).or_default();
            ours.initial += theirs.initial;
            ours.removed += theirs.removed;
            for (f, n) in &theirs.by_filter {
                *ours.by_filter.entry(f.clone()).or_default() += n;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn removed(&self, dataset: &str, filter_id: &str) -> u64 {
        self.datasets
            .get(dataset)
            .and_then(|d| d.by_filter.get(filter_id))
            .copied()
            .unwrap_or(0)
    }

    /// (dataset, filter, count) rows; within a dataset, largest count first.
    pub fn rows(&self) -> Vec<FilterReportRow> {
        let mut rows = Vec::new();
        for (dataset, d) in &self.datasets {
            let mut filters: Vec<_> = d.by_filter.iter().collect();
            filters.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
            rows.extend(filters.into_iter().map(|(f, &n)| FilterReportRow {
                dataset: dataset.clone(),
                filter_id: f.clone(),
                removed_count: n,
            }));
        }
        rows
    }

    pub fn totals(&self) -> DatasetRemovals {
        let mut total = DatasetRemovals::default();
        for d in self.datasets.values() {
            total.initial += d.initial;
            total.removed += d.removed;
            for (f, n) in &d.by_filter {
                *total.by_filter.entry(f.clone()).or_default() += n;
            }
        }
        total
    }

    /// Tab-separated `dataset, filter_id, removed_count` table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dataset\tfilter_id\tremoved_count\n");
        for r in self.rows() {
            let _ = writeln!(out, "{}\t{}\t{}", r.dataset, r.filter_id, r.removed_count);
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>12} {:>12} {:>10}",
            "dataset", "initial", "removed", "filtered"
        );
        for (name, d) in &self.datasets {
            let _ = writeln!(
                out,
                "{:<24} {:>12} {:>12} {:>9.2}%",
                name,
                d.initial,
                d.removed,
                d.percent_removed()
            );
        }
        let t = self.totals();
        let _ = writeln!(
            out,
            "{:<24} {:>12} {:>12} {:>9.2}%",
            "TOTAL",
            t.initial,
            t.removed,
            t.percent_removed()
        );
        for (name, d) in &self.datasets {
            if d.by_filter.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n{name}");
            for r in self.rows().into_iter().filter(|r| &r.dataset == name) {
                let _ = writeln!(out, "  {:<44} {:>10}", r.filter_id, r.removed_count);
            }
        }
        out
    }
}
