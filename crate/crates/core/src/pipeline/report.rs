use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::manifest::{Counts, RunManifest};
use super::Stage;
use crate::corpus::Registry;
use crate::filters::FilterReport;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub initial_docs: u64,
    pub filtered_docs: u64,
    pub filtered_percent: f64,
    pub filter_breakdown: BTreeMap<String, u64>,
    pub dedup_removed_docs: u64,
    pub final_docs: u64,
    pub initial_tokens: u64,
    pub filtered_tokens: u64,
    pub final_tokens: u64,
}

impl DatasetSummary {
    fn accumulate(&mut self, other: &DatasetSummary) {
        self.initial_docs += other.initial_docs;
        self.filtered_docs += other.filtered_docs;
        for (f, n) in &other.filter_breakdown {
            *self.filter_breakdown.entry(f.clone()).or_default() += n;
        }
        self.dedup_removed_docs += other.dedup_removed_docs;
        self.final_docs += other.final_docs;
        self.initial_tokens += other.initial_tokens;
        self.filtered_tokens += other.filtered_tokens;
        self.final_tokens += other.final_tokens;
    }
}

fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Consolidated per-dataset view of a run: filtering removals, dedup
/// removals and token counts before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub complete: bool,
    pub missing_stages: Vec<Stage>,
    pub token_counter: String,
    /// Run parameters that determine the outputs (echoed for reproducibility).
    pub parameters: BTreeMap<String, String>,
    pub datasets: Vec<DatasetSummary>,
    pub totals: DatasetSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<serde_json::Value>,
}

pub fn final_report(
    manifest: &RunManifest,
    registry: &Registry,
    filter_report: Option<&FilterReport>,
    audit: Option<serde_json::Value>,
    token_counter: &str,
    parameters: BTreeMap<String, String>,
) -> FinalReport {
    let required = [
        Stage::Ingest,
        Stage::Sanitize,
        Stage::Filter,
        Stage::Sign,
        Stage::Dedup,
        Stage::Cluster,
    ];
    let missing_stages: Vec<Stage> = required
        .into_iter()
        .filter(|s| !manifest.stages.contains_key(s))
        .collect();
    let per = |stage: Stage, name: &str| -> Option<Counts> {
        manifest
            .stages
            .get(&stage)
            .and_then(|r| r.per_dataset.get(name).copied())
    };

    let mut datasets = Vec::new();
    for d in registry.by_insertion_order() {
        let ingest = per(Stage::Ingest, &d.name);
        let filter = per(Stage::Filter, &d.name);
        let cluster = per(Stage::Cluster, &d.name);
        if ingest.is_none() && filter.is_none() && cluster.is_none() {
            continue;
        }
        let ingest = ingest.unwrap_or_default();
        let filter = filter.unwrap_or_default();
        let cluster = cluster.unwrap_or_default();
        let filtered_docs = filter.docs_in - filter.docs_out;
        datasets.push(DatasetSummary {
            dataset: d.name.clone(),
            initial_docs: ingest.docs_out,
            filtered_docs,
            filtered_percent: percent(filtered_docs, filter.docs_in),
            filter_breakdown: filter_report
                .and_then(|r| r.datasets.get(&d.name))
                .map(|x| x.by_filter.clone())
                .unwrap_or_default(),
            dedup_removed_docs: cluster.docs_in - cluster.docs_out,
            final_docs: cluster.docs_out,
            initial_tokens: ingest.tokens_out,
            filtered_tokens: filter.tokens_out,
            final_tokens: cluster.tokens_out,
        });
    }
    let mut totals = DatasetSummary {
        dataset: "TOTAL".into(),
        ..DatasetSummary::default()
    };
    for d in &datasets {
        totals.accumulate(d);
    }
    totals.filtered_percent = percent(totals.filtered_docs, totals.initial_docs);

    FinalReport {
        complete: missing_stages.is_empty(),
        missing_stages,
        token_counter: token_counter.to_string(),
        parameters,
        datasets,
        totals,
        audit,
    }
}

impl FinalReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if !self.complete {
            let missing: Vec<String> = self.missing_stages.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(
                out,
                "PARTIAL REPORT: stages not completed: {}\n",
                missing.join(", ")
            );
        }
        let _ = writeln!(out, "token counter: {}", self.token_counter);
        for (k, v) in &self.parameters {
            let _ = writeln!(out, "{k}: {v}");
        }
        let _ = writeln!(
            out,
            "\n{:<22} {:>10} {:>10} {:>9} {:>10} {:>10} {:>14} {:>14} {:>10}",
            "dataset",
            "docs",
            "filtered",
            "filt %",
            "dedup rm",
            "final",
            "tokens in",
            "tokens out",
            "kept %"
        );
        for d in self.datasets.iter().chain(std::iter::once(&self.totals)) {
            let _ = writeln!(
                out,
                "{:<22} {:>10} {:>10} {:>8.2}% {:>10} {:>10} {:>14} {:>14} {:>9.2}%",
                d.dataset,
                d.initial_docs,
                d.filtered_docs,
                d.filtered_percent,
                d.dedup_removed_docs,
                d.final_docs,
                d.initial_tokens,
                d.final_tokens,
                percent(d.final_tokens, d.initial_tokens),
            );
        }
        let with_filters: Vec<_> = self
            .datasets
            .iter()
            .filter(|d| !d.filter_breakdown.is_empty())
            .collect();
        if !with_filters.is_empty() {
            let _ = writeln!(out, "\nper-filter removals");
            for d in with_filters {
                let _ = writeln!(out, "  {}", d.dataset);
                let mut rows: Vec<_> = d.filter_breakdown.iter().collect();
                rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
                for (f, n) in rows {
                    let _ = writeln!(out, "    {f:<44} {n:>10}");
                }
            }
        }
        if let Some(a) = &self.audit {
            let _ = writeln!(out, "\ndedup audit");
            for key in [
                "threshold",
                "theoretical_fp",
                "theoretical_fn",
                "empirical_fp_jaccard",
                "empirical_fp_edit",
                "sample_size",
                "population",
                "seed",
            ] {
                if let Some(v) = a.get(key) {
                    let _ = writeln!(out, "  {key:<22} {v}");
                }
            }
        }
        out
    }
}
