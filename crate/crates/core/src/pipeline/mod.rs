//! Checkpointed stage pipeline.
//!
//! Each stage reads the committed outputs of earlier stages from the output
//! root, writes its own outputs into `<stage>.tmp/` and renames that
//! directory to `<stage>/` once complete. The run manifest records content
//! digests of every stage's inputs and outputs plus per-dataset document and
//! token counts; a stage refuses to run when the outputs it depends on are
//! missing or no longer match their recorded digests.
//!
//! Shard partitioning is preserved from ingest onward: output shard `i` of a
//! stage holds the surviving documents of input shard `i`.

mod config;
mod manifest;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::audit::{
    cumulative_fp_by_length, dump_clusters, exact_jaccard, provenance_matrix, sample_and_audit,
    AuditConfig,
};
use crate::corpus::{
    self, read_stage_shard, write_stage_shard, DocId, DocumentRecord, Registry, SHARD_EXTENSION,
};
use crate::error::{Error, Result};
use crate::exec::{with_workers, Execution};
use crate::filters::{self, FilterEngine, FilterReport, FilterVerdict, WordListSource};
use crate::lsh::{cluster_and_retain, emit_pairs, DuplicateCluster, DuplicatePair, LshParams};
use crate::sanitize::Sanitizer;
use crate::shingle::{MinHashSignature, Signer};

pub use config::{AuditSettings, LshSetting, Overrides, PipelineConfig};
pub use manifest::{
    digest_tree, sha256_bytes, sha256_file, Counts, FileDigest, RunManifest, StageRecord,
    MANIFEST_FILE,
};
pub use report::{final_report, DatasetSummary, FinalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Sanitize,
    Filter,
    Sign,
    Dedup,
    Cluster,
    Audit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Sanitize,
        Stage::Filter,
        Stage::Sign,
        Stage::Dedup,
        Stage::Cluster,
        Stage::Audit,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Sanitize => "sanitize",
            Stage::Filter => "filter",
            Stage::Sign => "sign",
            Stage::Dedup => "dedup",
            Stage::Cluster => "cluster",
            Stage::Audit => "audit",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Sanitize => &[Stage::Ingest],
            Stage::Filter => &[Stage::Sanitize],
            Stage::Sign => &[Stage::Filter],
            Stage::Dedup => &[Stage::Filter, Stage::Sign],
            Stage::Cluster => &[Stage::Filter, Stage::Dedup],
            Stage::Audit => &[Stage::Filter, Stage::Dedup, Stage::Cluster],
            Stage::Report => &[
                Stage::Ingest,
                Stage::Sanitize,
                Stage::Filter,
                Stage::Cluster,
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: Stage,
    pub counts: Counts,
    /// True when `--resume` found valid outputs and did not re-run.
    pub skipped: bool,
    pub notes: Vec<String>,
}

/// One signature-file line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub doc_id: DocId,
    pub k: usize,
    pub seed: u64,
    pub minima: Vec<u64>,
}

/// A fully validated pipeline: every referenced file has been read and
/// parsed, so configuration errors surface before any stage runs.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    config_digest: String,
    registry: Registry,
    sanitizer: Sanitizer,
    filters: FilterEngine,
    signer: Signer,
    lsh: LshParams,
    exec: Execution,
}

struct StageOutput {
    counts: Counts,
    per_dataset: BTreeMap<String, Counts>,
    notes: Vec<String>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let registry = match &config.registry {
            Some(p) => Registry::load(p)?,
            None => Registry::reference(),
        };
        let sanitizer = match &config.sanitize_rules {
            Some(p) => Sanitizer::load(p)?,
            None => Sanitizer::default(),
        };
        let battery = match &config.filters {
            Some(p) => filters::load_battery(p)?,
            None => filters::default_battery(),
        };
        let source = match &config.wordlist_dir {
            Some(d) => WordListSource::Dir(d.clone()),
            None => WordListSource::Placeholder,
        };
        let filters = FilterEngine::new(battery, &source)?;
        let signer = Signer::new(config.shingle_width, config.num_perm, config.seed)?;
        let lsh = config.lsh.params(config.num_perm)?;
        if config.audit.edit_length_cap == 0 {
            return Err(Error::config("audit.edit_length_cap must be positive"));
        }
        let config_digest = Self::digest_config(&config, &registry, &sanitizer, &filters)?;
        Ok(Pipeline {
            config,
            config_digest,
            registry,
            sanitizer,
            filters,
            signer,
            lsh,
            exec: Execution::Parallel,
        })
    }

    pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Self> {
        let mut cfg = PipelineConfig::load(config_path)?;
        cfg.apply(overrides);
        Pipeline::new(cfg)
    }

    /// Use sequential execution regardless of the `parallel` feature.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn lsh_params(&self) -> &LshParams {
        &self.lsh
    }

    pub fn root(&self) -> &Path {
        &self.config.output
    }

    /// Digest of everything that determines stage outputs. Worker count and
    /// filesystem locations are excluded.
    fn digest_config(
        cfg: &PipelineConfig,
        registry: &Registry,
        sanitizer: &Sanitizer,
        filters: &FilterEngine,
    ) -> Result<String> {
        let wordlists: BTreeMap<&str, usize> = filters
            .filters()
            .iter()
            .filter_map(|f| f.wordlist.as_deref())
            .filter_map(|n| filters.wordlist(n).map(|l| (n, l.len())))
            .collect();
        let mut wordlist_digest = String::new();
        if let Some(dir) = &cfg.wordlist_dir {
            for name in wordlists.keys() {
                wordlist_digest.push_str(&sha256_file(&dir.join(format!("{name}.json")))?.sha256);
            }
        }
        let snapshot = serde_json::json!({
            "registry": registry.datasets(),
            "sanitize_rules": sanitizer.specs(),
            "filters": filters.filters(),
            "wordlists": wordlists,
            "wordlist_digest": wordlist_digest,
            "shingle_width": cfg.shingle_width,
            "num_perm": cfg.num_perm,
            "seed": cfg.seed,
            "lsh": self_lsh_json(cfg)?,
            "bucket_cap": cfg.bucket_cap,
            "verify_pairs": cfg.verify_pairs,
            "token_counter": cfg.token_counter.name(),
            "audit": cfg.audit,
        });
        Ok(sha256_bytes(snapshot.to_string().as_bytes()))
    }

    /// Parameters echoed in every report.
    pub fn report_parameters(&self) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        p.insert("lsh".into(), self.config.lsh.label());
        p.insert(
            "lsh_params".into(),
            format!(
                "bands={} rows={} threshold={}",
                self.lsh.bands, self.lsh.rows, self.lsh.threshold
            ),
        );
        p.insert(
            "shingle_width".into(),
            self.config.shingle_width.to_string(),
        );
        p.insert("num_perm".into(), self.config.num_perm.to_string());
        p.insert("hash_seed".into(), self.config.seed.to_string());
        p.insert("audit_seed".into(), self.config.audit.seed.to_string());
        p.insert("config_digest".into(), self.config_digest.clone());
        p
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root().join(stage.name())
    }

    fn tmp_dir(&self, stage: Stage) -> PathBuf {
        self.root().join(format!("{}.tmp", stage.name()))
    }

    /// Runs one stage after checking its prerequisites. With `resume`, the
    /// stage is skipped when its recorded outputs still verify against
    /// unchanged inputs and configuration.
    pub fn run_stage(&self, stage: Stage, resume: bool) -> Result<StageSummary> {
        with_workers(self.config.workers, || self.run_stage_inner(stage, resume))
    }

    /// Runs every stage in order. With `resume`, stages whose recorded
    /// outputs still verify against unchanged inputs are skipped.
    pub fn run_all(&self, resume: bool) -> Result<Vec<StageSummary>> {
        with_workers(self.config.workers, || {
            Stage::ALL
                .into_iter()
                .map(|s| self.run_stage_inner(s, resume))
                .collect()
        })
    }

    fn current_inputs(&self, stage: Stage, manifest: &RunManifest) -> Result<Vec<FileDigest>> {
        if stage == Stage::Ingest {
            return corpus::list_shards(&self.config.input)?
                .iter()
                .map(|p| sha256_file(p))
                .collect();
        }
        let mut inputs = Vec::new();
        for &pre in stage.prerequisites() {
            inputs.extend(
                manifest
                    .verify_outputs(self.root(), pre)?
                    .outputs
                    .iter()
                    .cloned(),
            );
        }
        Ok(inputs)
    }

    fn run_stage_inner(&self, stage: Stage, resume: bool) -> Result<StageSummary> {
        let root = self.root().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io("creating", &root, e))?;
        let mut manifest = RunManifest::load_or_default(&root)?;
        let inputs = self.current_inputs(stage, &manifest)?;

        if resume {
            if let Some(rec) = manifest.stages.get(&stage) {
                let valid = rec.config_digest == self.config_digest
                    && rec.inputs == inputs
                    && manifest.verify_outputs(&root, stage).is_ok();
                if valid {
                    return Ok(StageSummary {
                        stage,
                        counts: rec.counts,
                        skipped: true,
                        notes: vec![],
                    });
                }
            }
        }

        let tmp = self.tmp_dir(stage);
        if tmp.exists() {
            // leftovers of a crashed run
            fs::remove_dir_all(&tmp).map_err(|e| Error::io("removing", &tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io("creating", &tmp, e))?;

        let out = match stage {
            Stage::Ingest => self.ingest(&tmp),
            Stage::Sanitize => self.sanitize(&tmp),
            Stage::Filter => self.filter(&tmp),
            Stage::Sign => self.sign(&tmp),
            Stage::Dedup => self.dedup(&tmp),
            Stage::Cluster => self.cluster(&tmp),
            Stage::Audit => self.audit(&tmp, &manifest),
            Stage::Report => self.report(&tmp, &manifest),
        };
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                let _ = fs::remove_dir_all(&tmp);
                return Err(e);
            }
        };

        let dir = self.stage_dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io("removing", &dir, e))?;
        }
        fs::rename(&tmp, &dir).map_err(|e| Error::io("renaming", &tmp, e))?;

        let outputs = digest_tree(&root, &dir)?;
        manifest.config =
            serde_json::to_value(&self.config).map_err(|e| Error::data(e.to_string()))?;
        manifest.stages.insert(
            stage,
            StageRecord {
                config_digest: self.config_digest.clone(),
                inputs,
                outputs,
                counts: out.counts,
                per_dataset: out.per_dataset,
                completed_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            },
        );
        manifest.save(&root)?;
        Ok(StageSummary {
            stage,
            counts: out.counts,
            skipped: false,
            notes: out.notes,
        })
    }

    // ---- shard helpers ----

    fn shard_name(index: u32) -> String {
        format!("shard-{index:05}.{SHARD_EXTENSION}")
    }

    /// Shards of a committed stage, in index order.
    fn read_shards(&self, stage: Stage) -> Result<Vec<(u32, Vec<DocumentRecord>)>> {
        let dir = self.stage_dir(stage);
        let mut paths: Vec<(u32, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io("listing", &dir, e))? {
            let p = entry.map_err(|e| Error::io("listing", &dir, e))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(idx) = name
                .strip_prefix("shard-")
                .and_then(|r| r.strip_suffix(&format!(".{SHARD_EXTENSION}")))
                .and_then(|n| n.parse().ok())
            {
                paths.push((idx, p));
            }
        }
        paths.sort();
        self.exec
            .try_map(&paths, |(i, p)| Ok((*i, read_stage_shard(p)?)))
    }

    fn write_shards(&self, dir: &Path, shards: &[(u32, Vec<DocumentRecord>)]) -> Result<()> {
        self.exec.try_map(shards, |(i, recs)| {
            write_stage_shard(&dir.join(Self::shard_name(*i)), recs)
        })?;
        Ok(())
    }

    fn corpus_map(&self, stage: Stage) -> Result<HashMap<DocId, DocumentRecord>> {
        Ok(self
            .read_shards(stage)?
            .into_iter()
            .flat_map(|(_, recs)| recs)
            .map(|r| (r.id().clone(), r))
            .collect())
    }

    fn tally(
        &self,
        before: &[(u32, Vec<DocumentRecord>)],
        after: &[(u32, Vec<DocumentRecord>)],
    ) -> (Counts, BTreeMap<String, Counts>) {
        let counter = self.config.token_counter;
        let mut per: BTreeMap<String, Counts> = BTreeMap::new();
        for r in before.iter().flat_map(|(_, v)| v) {
            let c = per.entry(r.source().to_string()).or_default();
            c.docs_in += 1;
            c.tokens_in += counter.count(r.text());
        }
        for r in after.iter().flat_map(|(_, v)| v) {
            let c = per.entry(r.source().to_string()).or_default();
            c.docs_out += 1;
            c.tokens_out += counter.count(r.text());
        }
        let mut total = Counts::default();
        for c in per.values() {
            total.add(c);
        }
        (total, per)
    }

    /// Stage output identical in documents to its input.
    fn passthrough(
        &self,
        shards: &[(u32, Vec<DocumentRecord>)],
        notes: Vec<String>,
    ) -> StageOutput {
        let (counts, per_dataset) = self.tally(shards, shards);
        StageOutput {
            counts,
            per_dataset,
            notes,
        }
    }

    // ---- stages ----

    fn ingest(&self, out: &Path) -> Result<StageOutput> {
        let shards = corpus::ingest(&self.config.input, &self.registry, self.exec)?;
        let mut errors = String::new();
        let mut n_errors = 0u64;
        for s in &shards {
            for e in &s.errors {
                n_errors += 1;
                let shard = s
                    .path
                    .file_name()
                    .map(|n| n.to_string_lossy())
                    .unwrap_or_default();
                let line =
                    serde_json::json!({"shard": shard, "line": e.line, "message": e.message});
                errors.push_str(&line.to_string());
                errors.push('\n');
            }
        }
        let shards: Vec<(u32, Vec<DocumentRecord>)> =
            shards.into_iter().map(|s| (s.index, s.records)).collect();
        self.write_shards(out, &shards)?;
        write_file(&out.join("errors.jsonl"), errors.as_bytes())?;

        let (mut counts, per_dataset) = self.tally(&shards, &shards);
        // malformed lines have no dataset, so they only show up in the totals
        counts.docs_in += n_errors;
        let mut notes = vec![format!("{} shards", shards.len())];
        if n_errors > 0 {
            notes.push(format!(
                "{n_errors} malformed records skipped (see ingest/errors.jsonl)"
            ));
        }
        Ok(StageOutput {
            counts,
            per_dataset,
            notes,
        })
    }

    fn sanitize(&self, out: &Path) -> Result<StageOutput> {
        let input = self.read_shards(Stage::Ingest)?;
        let n_rules = self.sanitizer.rules().len();
        let results: Vec<(u32, Vec<DocumentRecord>, Vec<u64>)> =
            self.exec.map(&input, |(i, recs)| {
                let mut totals = vec![0u64; n_rules];
                let cleaned = self.exec.map(recs, |r| self.sanitizer.sanitize(r.text()));
                let docs = recs
                    .iter()
                    .zip(cleaned)
                    .map(|(r, s)| {
                        for (t, c) in totals.iter_mut().zip(&s.counts) {
                            *t += c;
                        }
                        r.clone().with_text(s.text)
                    })
                    .collect();
                (*i, docs, totals)
            });
        let mut rule_counts: BTreeMap<String, u64> = BTreeMap::new();
        for rule in self.sanitizer.rules() {
            rule_counts.insert(rule.id().to_string(), 0);
        }
        for (_, _, totals) in &results {
            for (rule, n) in self.sanitizer.rules().iter().zip(totals) {
                *rule_counts.entry(rule.id().to_string()).or_default() += n;
            }
        }
        let shards: Vec<(u32, Vec<DocumentRecord>)> =
            results.into_iter().map(|(i, d, _)| (i, d)).collect();
        self.write_shards(out, &shards)?;
        write_json(&out.join("rule_counts.json"), &rule_counts)?;
        let fired: u64 = rule_counts.values().sum();
        let (counts, per_dataset) = self.tally(&input, &shards);
        Ok(StageOutput {
            counts,
            per_dataset,
            notes: vec![format!("{fired} replacements")],
        })
    }

    fn filter(&self, out: &Path) -> Result<StageOutput> {
        let input = self.read_shards(Stage::Sanitize)?;
        let verdicts: Vec<Vec<FilterVerdict>> = self.exec.try_map(&input, |(_, recs)| {
            self.exec
                .try_map(recs, |r| self.filters.apply(r, &self.registry))
        })?;
        let mut report = FilterReport::default();
        let mut verdict_lines = String::new();
        let mut kept = Vec::with_capacity(input.len());
        for ((i, recs), vs) in input.iter().zip(&verdicts) {
            report.merge(&FilterReport::from_verdicts(vs));
            for v in vs {
                verdict_lines
                    .push_str(&serde_json::to_string(v).map_err(|e| Error::data(e.to_string()))?);
                verdict_lines.push('\n');
            }
            let survivors = recs
                .iter()
                .zip(vs)
                .filter(|(_, v)| v.kept)
                .map(|(r, _)| r.clone())
                .collect();
            kept.push((*i, survivors));
        }
        self.write_shards(out, &kept)?;
        write_file(&out.join("verdicts.jsonl"), verdict_lines.as_bytes())?;
        write_json(&out.join("report.json"), &report)?;
        write_file(&out.join("report.txt"), report.render_text().as_bytes())?;
        write_file(&out.join("report.tsv"), report.to_tsv().as_bytes())?;
        let (counts, per_dataset) = self.tally(&input, &kept);
        Ok(StageOutput {
            counts,
            per_dataset,
            notes: vec![format!(
                "removed {} of {}",
                counts.docs_in - counts.docs_out,
                counts.docs_in
            )],
        })
    }

    fn sign(&self, out: &Path) -> Result<StageOutput> {
        let input = self.read_shards(Stage::Filter)?;
        let mut unshingleable = 0usize;
        let mut signed = 0usize;
        let per_shard: Vec<Vec<Option<MinHashSignature>>> = self.exec.map(&input, |(_, recs)| {
            self.exec.map(recs, |r| self.signer.sign(r.text()))
        });
        for ((i, recs), sigs) in input.iter().zip(per_shard) {
            let mut lines = String::new();
            for (r, sig) in recs.iter().zip(sigs) {
                let Some(sig) = sig else {
                    unshingleable += 1;
                    continue;
                };
                signed += 1;
                let rec = SignatureRecord {
                    doc_id: r.id().clone(),
                    k: sig.k(),
                    seed: sig.seed,
                    minima: sig.minima,
                };
                lines.push_str(
                    &serde_json::to_string(&rec).map_err(|e| Error::data(e.to_string()))?,
                );
                lines.push('\n');
            }
            write_file(
                &out.join(format!("signatures-{i:05}.jsonl")),
                lines.as_bytes(),
            )?;
        }
        write_json(
            &out.join("summary.json"),
            &serde_json::json!({
                "signed": signed,
                "unshingleable": unshingleable,
                "shingle_width": self.signer.width(),
                "num_perm": self.config.num_perm,
                "seed": self.config.seed,
            }),
        )?;
        Ok(self.passthrough(
            &input,
            vec![format!(
                "{signed} signed, {unshingleable} below {} words bypass dedup",
                self.signer.width()
            )],
        ))
    }

    fn read_signatures(&self) -> Result<Vec<(DocId, MinHashSignature)>> {
        let dir = self.stage_dir(Stage::Sign);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io("listing", &dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("signatures-"))
            })
            .collect();
        files.sort();
        let per_file = self.exec.try_map(&files, |p| {
            let f = File::open(p).map_err(|e| Error::io("opening", p, e))?;
            let mut sigs = Vec::new();
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io("reading", p, e))?;
                let rec: SignatureRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::data(format!("{}:{}: {e}", p.display(), n + 1)))?;
                if rec.k != rec.minima.len() || rec.seed != self.config.seed {
                    return Err(Error::data(format!(
                        "{}:{}: signature does not match configured k/seed",
                        p.display(),
                        n + 1
                    )));
                }
                sigs.push((
                    rec.doc_id,
                    MinHashSignature {
                        seed: rec.seed,
                        minima: rec.minima,
                    },
                ));
            }
            Ok(sigs)
        })?;
        Ok(per_file.into_iter().flatten().collect())
    }

    fn dedup(&self, out: &Path) -> Result<StageOutput> {
        let sigs = self.read_signatures()?;
        let emission = emit_pairs(
            &sigs,
            &self.registry,
            &self.lsh,
            self.config.bucket_cap,
            self.exec,
        )?;
        let candidates = emission.pairs.len();
        let mut pairs = emission.pairs;
        let mut rejected = 0usize;
        if self.config.verify_pairs {
            let corpus = self.corpus_map(Stage::Filter)?;
            let keep = self.exec.try_map(&pairs, |p| {
                let text = |id: &DocId| {
                    corpus
                        .get(id)
                        .map(|d| d.text())
                        .ok_or_else(|| Error::data(format!("pair member {id} not in corpus")))
                };
                let j = exact_jaccard(
                    &self.signer.shingles(text(&p.doc_a)?),
                    &self.signer.shingles(text(&p.doc_b)?),
                )?;
                Ok(j >= self.lsh.threshold)
            })?;
            let before = pairs.len();
            pairs = pairs
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(p, _)| p)
                .collect();
            rejected = before - pairs.len();
        }
        write_pairs(&out.join("pairs.tsv"), &pairs)?;
        write_json(
            &out.join("summary.json"),
            &serde_json::json!({
                "inserted": emission.inserted,
                "candidate_pairs": candidates,
                "pairs": pairs.len(),
                "truncated": emission.truncated,
                "verified": self.config.verify_pairs,
                "rejected_by_verification": rejected,
                "lsh": self.config.lsh.label(),
                "bands": self.lsh.bands,
                "rows": self.lsh.rows,
                "threshold": self.lsh.threshold,
            }),
        )?;
        let docs = self.read_shards(Stage::Filter)?;
        let mut notes = vec![format!(
            "{} pairs from {} indexed documents",
            pairs.len(),
            emission.inserted
        )];
        if emission.truncated > 0 {
            notes.push(format!(
                "{} bucket occupants skipped by bucket_cap",
                emission.truncated
            ));
        }
        Ok(self.passthrough(&docs, notes))
    }

    fn cluster(&self, out: &Path) -> Result<StageOutput> {
        let pairs = read_pairs(&self.stage_dir(Stage::Dedup).join("pairs.tsv"))?;
        let clustering = cluster_and_retain(&pairs, &self.registry)?;
        let input = self.read_shards(Stage::Filter)?;
        let kept: Vec<(u32, Vec<DocumentRecord>)> = input
            .iter()
            .map(|(i, recs)| {
                let survivors = recs
                    .iter()
                    .filter(|r| clustering.is_kept(r.id()))
                    .cloned()
                    .collect();
                (*i, survivors)
            })
            .collect();
        let mut lines = String::new();
        for c in &clustering.clusters {
            lines.push_str(&serde_json::to_string(c).map_err(|e| Error::data(e.to_string()))?);
            lines.push('\n');
        }
        write_file(&out.join("clusters.jsonl"), lines.as_bytes())?;
        self.write_shards(out, &kept)?;
        let (counts, per_dataset) = self.tally(&input, &kept);
        let removed_by_dataset: BTreeMap<&str, u64> = per_dataset
            .iter()
            .map(|(d, c)| (d.as_str(), c.docs_in - c.docs_out))
            .collect();
        write_json(
            &out.join("summary.json"),
            &serde_json::json!({
                "clusters": clustering.clusters.len(),
                "removed": clustering.removed.len(),
                "removed_by_dataset": removed_by_dataset,
            }),
        )?;
        Ok(StageOutput {
            counts,
            per_dataset,
            notes: vec![format!(
                "{} clusters, {} documents removed",
                clustering.clusters.len(),
                clustering.removed.len()
            )],
        })
    }

    fn audit(&self, out: &Path, _manifest: &RunManifest) -> Result<StageOutput> {
        let pairs = read_pairs(&self.stage_dir(Stage::Dedup).join("pairs.tsv"))?;
        let clusters = read_clusters(&self.stage_dir(Stage::Cluster).join("clusters.jsonl"))?;
        let corpus = self.corpus_map(Stage::Filter)?;
        let settings = &self.config.audit;
        let cfg = AuditConfig {
            sample_size: settings.sample_size,
            threshold: self.lsh.threshold,
            seed: settings.seed,
            edit_length_cap: settings.edit_length_cap,
        };
        let sample = sample_and_audit(&pairs, &corpus, &self.signer, &cfg, self.exec)?;
        let rates = self.lsh.theoretical_rates();
        let curve = cumulative_fp_by_length(&sample.audits, cfg.threshold);
        let provenance = provenance_matrix(&clusters);

        let summary = serde_json::json!({
            "threshold": cfg.threshold,
            "bands": self.lsh.bands,
            "rows": self.lsh.rows,
            "theoretical_fp": rates.false_positive,
            "theoretical_fn": rates.false_negative,
            "empirical_fp_jaccard": sample.empirical_fp_jaccard,
            "empirical_fp_edit": sample.empirical_fp_edit,
            "sample_size": sample.audits.len(),
            "requested_sample_size": settings.sample_size,
            "population": sample.population,
            "full_population": sample.full_population,
            "seed": settings.seed,
            "edit_length_cap": settings.edit_length_cap,
            "capped_pairs": sample.capped_pairs,
            "mass_at_or_above_threshold_jaccard": sample.histogram_jaccard.mass_at_or_above(cfg.threshold),
            "mass_at_or_above_threshold_edit": sample.histogram_edit.mass_at_or_above(cfg.threshold),
        });
        write_json(&out.join("audit.json"), &summary)?;

        let mut hist =
            String::from("bin_low\tbin_high\tjaccard_count\tjaccard_mass\tedit_count\tedit_mass\n");
        let (mj, me) = (
            sample.histogram_jaccard.mass(),
            sample.histogram_edit.mass(),
        );
        for b in 0..sample.histogram_jaccard.counts.len() {
            let w = sample.histogram_jaccard.bin_width;
            hist.push_str(&format!(
                "{:.2}\t{:.2}\t{}\t{:.6}\t{}\t{:.6}\n",
                b as f64 * w,
                (b + 1) as f64 * w,
                sample.histogram_jaccard.counts[b],
                mj[b],
                sample.histogram_edit.counts[b],
                me[b]
            ));
        }
        write_file(&out.join("histograms.tsv"), hist.as_bytes())?;

        let mut curve_tsv = String::from("length_words\tpairs\tfp_jaccard\tfp_edit\n");
        for p in &curve {
            curve_tsv.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\n",
                p.length_words, p.pairs, p.fp_jaccard, p.fp_edit
            ));
        }
        write_file(&out.join("cumulative_fp.tsv"), curve_tsv.as_bytes())?;

        let mut audits = String::new();
        for a in &sample.audits {
            audits.push_str(&serde_json::to_string(a).map_err(|e| Error::data(e.to_string()))?);
            audits.push('\n');
        }
        write_file(&out.join("pair_audits.jsonl"), audits.as_bytes())?;
        write_json(&out.join("provenance.json"), &provenance)?;
        write_file(
            &out.join("provenance.txt"),
            provenance.render_text(&self.registry).as_bytes(),
        )?;

        let mut text = format!(
            "LSH {} (bands={}, rows={}, threshold={})\n",
            self.config.lsh.label(),
            self.lsh.bands,
            self.lsh.rows,
            cfg.threshold
        );
        text.push_str(&format!(
            "theoretical FP {:.4}  FN {:.4}\n",
            rates.false_positive, rates.false_negative
        ));
        text.push_str(&format!(
            "audited {} of {} pairs (seed {}){}\n",
            sample.audits.len(),
            sample.population,
            settings.seed,
            if sample.full_population && sample.population > 0 {
                "; requested sample covers the whole population"
            } else {
                ""
            }
        ));
        text.push_str(&format!(
            "empirical FP (jaccard) {:.4}\nempirical FP (edit)    {:.4}\n",
            sample.empirical_fp_jaccard, sample.empirical_fp_edit
        ));
        if sample.capped_pairs > 0 {
            text.push_str(&format!(
                "{} pairs compared on the first {} characters\n",
                sample.capped_pairs, settings.edit_length_cap
            ));
        }
        write_file(&out.join("audit.txt"), text.as_bytes())?;

        if settings.dump_clusters > 0 {
            let dump = dump_clusters(
                &clusters,
                &corpus,
                settings.dump_clusters,
                settings.seed,
                2000,
            );
            write_file(&out.join("cluster_samples.txt"), dump.as_bytes())?;
        }

        let docs = self.read_shards(Stage::Cluster)?;
        Ok(self.passthrough(
            &docs,
            vec![format!(
                "empirical FP jaccard {:.4}, edit {:.4} over {} pairs",
                sample.empirical_fp_jaccard,
                sample.empirical_fp_edit,
                sample.audits.len()
            )],
        ))
    }

    fn report(&self, out: &Path, manifest: &RunManifest) -> Result<StageOutput> {
        let report = self.build_report(manifest)?;
        write_json(&out.join("report.json"), &report)?;
        write_file(&out.join("report.txt"), report.render_text().as_bytes())?;
        let docs = self.read_shards(Stage::Cluster)?;
        Ok(self.passthrough(&docs, vec![]))
    }

    /// Consolidated report from the manifest and committed stage outputs;
    /// labeled partial when stages are missing.
    pub fn build_report(&self, manifest: &RunManifest) -> Result<FinalReport> {
        let filter_report: Option<FilterReport> = if manifest.stages.contains_key(&Stage::Filter) {
            Some(read_json(
                &self.stage_dir(Stage::Filter).join("report.json"),
            )?)
        } else {
            None
        };
        let audit_path = self.stage_dir(Stage::Audit).join("audit.json");
        let audit = if manifest.stages.contains_key(&Stage::Audit) && audit_path.exists() {
            Some(read_json(&audit_path)?)
        } else {
            None
        };
        Ok(final_report(
            manifest,
            &self.registry,
            filter_report.as_ref(),
            audit,
            self.config.token_counter.name(),
            self.report_parameters(),
        ))
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        RunManifest::load_or_default(self.root())
    }
}

fn self_lsh_json(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let p = cfg.lsh.params(cfg.num_perm)?;
    Ok(serde_json::json!({"bands": p.bands, "rows": p.rows, "threshold": p.threshold}))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io("writing", path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io("reading", path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Pair file: header line, then `doc_a<TAB>doc_b<TAB>band` per pair.
pub fn write_pairs(path: &Path, pairs: &[DuplicatePair]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io("creating", path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io("writing", path, e);
    writeln!(w, "doc_a\tdoc_b\tband").map_err(io)?;
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.doc_a, p.doc_b, p.band).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_pairs(path: &Path) -> Result<Vec<DuplicatePair>> {
    let f = File::open(path).map_err(|e| Error::io("opening", path, e))?;
    let mut pairs = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate().skip(1) {
        let line = line.map_err(|e| Error::io("reading", path, e))?;
        let bad = || Error::data(format!("{}:{}: malformed pair", path.display(), n + 1));
        let mut cols = line.split('\t');
        let (Some(a), Some(b), Some(band), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(bad());
        };
        pairs.push(DuplicatePair {
            doc_a: a.parse()?,
            doc_b: b.parse()?,
            band: band.parse().map_err(|_| bad())?,
        });
    }
    Ok(pairs)
}

pub fn read_clusters(path: &Path) -> Result<Vec<DuplicateCluster>> {
    let f = File::open(path).map_err(|e| Error::io("opening", path, e))?;
    BufReader::new(f)
        .lines()
        .enumerate()
        .map(|(n, line)| {
            let line = line.map_err(|e| Error::io("reading", path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Writes the shipped defaults (registry, sanitizer rules, filter battery,
/// placeholder word lists) and a config referencing them into `dir`.
pub fn write_defaults(dir: &Path) -> Result<()> {
    let wl = dir.join("wordlists");
    fs::create_dir_all(&wl).map_err(|e| Error::io("creating", &wl, e))?;
    write_json(
        &dir.join("registry.json"),
        &Registry::reference().datasets(),
    )?;
    write_json(
        &dir.join("sanitize_rules.json"),
        &crate::sanitize::default_rules(),
    )?;
    write_json(&dir.join("filters.json"), &filters::default_battery())?;
    for name in filters::WORDLIST_NAMES {
        let raw = filters::placeholder_wordlist(name).unwrap_or("[]");
        write_file(&wl.join(format!("{name}.json")), raw.as_bytes())?;
    }
    let cfg = PipelineConfig {
        registry: Some("registry.json".into()),
        sanitize_rules: Some("sanitize_rules.json".into()),
        filters: Some("filters.json".into()),
        wordlist_dir: Some("wordlists".into()),
        ..PipelineConfig::default()
    };
    write_json(&dir.join("pipeline.json"), &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn pair_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.tsv");
        let pairs = vec![DuplicatePair {
            doc_a: DocId::new("c4-en", 0, 1),
            doc_b: DocId::new("pes2o", 2, 3),
            band: 7,
        }];
        write_pairs(&p, &pairs).unwrap();
        assert_eq!(read_pairs(&p).unwrap(), pairs);
        fs::write(&p, "doc_a\tdoc_b\tband\nx\ty\n").unwrap();
        assert!(read_pairs(&p).is_err());
    }

    #[test]
    fn defaults_round_trip_into_a_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        write_defaults(dir.path()).unwrap();
        let p = Pipeline::load(&dir.path().join("pipeline.json"), &Overrides::default()).unwrap();
        assert_eq!(p.filters.filters().len(), filters::default_battery().len());
        assert_eq!(p.registry, Registry::reference());
        assert_eq!(p.lsh.bands, 32);
    }

    #[test]
    fn missing_prerequisite_is_resume_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            input: dir.path().join("in"),
            output: dir.path().join("out"),
            ..PipelineConfig::default()
        };
        let err = Pipeline::new(cfg)
            .unwrap()
            .run_stage(Stage::Filter, false)
            .unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
