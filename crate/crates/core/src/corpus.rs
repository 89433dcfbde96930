//! Document records, the dataset registry, shard IO and token counting.
//!
//! A shard is a newline-delimited file of JSON objects, one document per
//! line, with required `"text"` and `"source"` keys and an optional `"meta"`
//! object. Shards written by pipeline stages additionally carry the `"id"`
//! assigned at ingest.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Extension of record shard files.
pub const SHARD_EXTENSION: &str = "jsonl";

/// Provenance-encoding document identity: dataset, shard index, line ordinal.
///
/// Ordering is by dataset name, then shard, then ordinal; this is the
/// "smallest doc_id" order used for tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocId {
    pub dataset: String,
    pub shard: u32,
    pub ordinal: u64,
}

impl DocId {
    pub fn new(dataset: impl Into<String>, shard: u32, ordinal: u64) -> Self {
        DocId {
            dataset: dataset.into(),
            shard,
            ordinal,
        }
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:05}/{:09}", self.dataset, self.shard, self.ordinal)
    }
}

impl FromStr for DocId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::data(format!("malformed doc id {s:?}"));
        let mut parts = s.rsplitn(3, '/');
        let ordinal = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let shard = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let dataset = parts.next().filter(|d| !d.is_empty()).ok_or_else(bad)?;
        Ok(DocId::new(dataset, shard, ordinal))
    }
}

impl Serialize for DocId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DocId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Number of whitespace-delimited words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One document. Length fields are derived from the text and kept in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRecord {
    id: DocId,
    text: String,
    meta: Option<Value>,
    char_length: usize,
    word_count: usize,
}

impl DocumentRecord {
    pub fn new(id: DocId, text: impl Into<String>, meta: Option<Value>) -> Self {
        let text = text.into();
        DocumentRecord {
            char_length: text.chars().count(),
            word_count: word_count(&text),
            id,
            text,
            meta,
        }
    }

    pub fn id(&self) -> &DocId {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Dataset the document came from.
    pub fn source(&self) -> &str {
        &self.id.dataset
    }

    pub fn meta(&self) -> Option<&Value> {
        self.meta.as_ref()
    }

    pub fn char_length(&self) -> usize {
        self.char_length
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    /// Replaces the text, recomputing the length fields.
    pub fn with_text(self, text: String) -> Self {
        DocumentRecord::new(self.id, text, self.meta)
    }
}

/// A source dataset: its retention priority and LSH insertion position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    /// 1 is kept first when a duplicate cluster spans datasets.
    pub retention_rank: u32,
    pub insertion_order: u32,
    #[serde(default)]
    pub filter_exempt: bool,
}

/// Validated set of datasets with unique names, ranks and insertion orders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    datasets: Vec<DatasetDescriptor>,
    by_name: HashMap<String, usize>,
}

impl Registry {
    pub fn new(datasets: Vec<DatasetDescriptor>) -> Result<Self> {
        if datasets.is_empty() {
            return Err(Error::config("registry has no datasets"));
        }
        let mut by_name = HashMap::new();
        let mut ranks = HashMap::new();
        let mut orders = HashMap::new();
        for (i, d) in datasets.iter().enumerate() {
            if d.name.is_empty() || d.name.contains('/') {
                return Err(Error::config(format!("invalid dataset name {:?}", d.name)));
            }
            if by_name.insert(d.name.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate dataset {:?}", d.name)));
            }
            if let Some(prev) = ranks.insert(d.retention_rank, &d.name) {
                return Err(Error::config(format!(
                    "retention_rank {} shared by {prev:?} and {:?}",
                    d.retention_rank, d.name
                )));
            }
            if let Some(prev) = orders.insert(d.insertion_order, &d.name) {
                return Err(Error::config(format!(
                    "insertion_order {} shared by {prev:?} and {:?}",
                    d.insertion_order, d.name
                )));
            }
        }
        Ok(Registry { datasets, by_name })
    }

    /// The seven-source registry: retention ranks and LSH insertion order of
    /// the reference curation run.
    pub fn reference() -> Self {
        let entry =
            |name: &str, retention_rank, insertion_order, filter_exempt| DatasetDescriptor {
                name: name.to_string(),
                retention_rank,
                insertion_order,
                filter_exempt,
            };
        Registry::new(vec![
            entry("pile-uncopyrighted", 6, 0, false),
            entry("c4-en", 5, 1, false),
            entry("pes2o", 3, 2, false),
            entry("arxiv_s2orc_parsed", 4, 3, false),
            entry("refinedweb", 2, 4, false),
            entry("slimpajama", 7, 5, false),
            entry("starcoder", 1, 6, true),
        ])
        .expect("reference registry is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io("reading registry", path, e))?;
        let datasets: Vec<DatasetDescriptor> = serde_json::from_str(&raw)
            .map_err(|e| Error::config(format!("registry {}: {e}", path.display())))?;
        Registry::new(datasets)
    }

    pub fn get(&self, name: &str) -> Option<&DatasetDescriptor> {
        self.by_name.get(name).map(|&i| &self.datasets[i])
    }

    pub fn require(&self, name: &str) -> Result<&DatasetDescriptor> {
        self.get(name)
            .ok_or_else(|| Error::config(format!("dataset {name:?} is not in the registry")))
    }

    pub fn datasets(&self) -> &[DatasetDescriptor] {
        &self.datasets
    }

    /// Datasets sorted by LSH insertion order.
    pub fn by_insertion_order(&self) -> Vec<&DatasetDescriptor> {
        let mut v: Vec<_> = self.datasets.iter().collect();
        v.sort_by_key(|d| d.insertion_order);
        v
    }

    /// Datasets sorted by retention rank (best first).
    pub fn by_retention_rank(&self) -> Vec<&DatasetDescriptor> {
        let mut v: Vec<_> = self.datasets.iter().collect();
        v.sort_by_key(|d| d.retention_rank);
        v
    }
}

/// Token counting rule used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCounter {
    /// Whitespace-delimited words; a proxy, not a subword tokenizer.
    #[default]
    WhitespaceWords,
    /// Unicode scalar values.
    Chars,
}

impl TokenCounter {
    pub fn name(self) -> &'static str {
        match self {
            TokenCounter::WhitespaceWords => "whitespace_words",
            TokenCounter::Chars => "chars",
        }
    }

    pub fn count(self, text: &str) -> u64 {
        match self {
            TokenCounter::WhitespaceWords => word_count(text) as u64,
            TokenCounter::Chars => text.chars().count() as u64,
        }
    }
}

impl FromStr for TokenCounter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace_words" => Ok(TokenCounter::WhitespaceWords),
            "chars" => Ok(TokenCounter::Chars),
            other => Err(Error::config(format!("unknown token counter {other:?}"))),
        }
    }
}

pub fn count_tokens(doc: &DocumentRecord, counter: TokenCounter) -> u64 {
    counter.count(doc.text())
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<DocId>,
    text: String,
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
}

/// A line that could not be parsed; ingest continues past it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub shard: PathBuf,
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}",
            self.shard.display(),
            self.line,
            self.message
        )
    }
}

/// Records of one shard, in line order.
#[derive(Debug, Clone)]
pub struct Shard {
    pub index: u32,
    pub path: PathBuf,
    pub records: Vec<DocumentRecord>,
    pub errors: Vec<RecordError>,
}

/// Shard files under `path` (or `path` itself if it is a file), sorted by name.
pub fn list_shards(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io("reading", path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut shards = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io("listing", path, e))? {
        let entry = entry.map_err(|e| Error::io("listing", path, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == SHARD_EXTENSION) {
            shards.push(p);
        }
    }
    shards.sort();
    Ok(shards)
}

fn parse_line(line: &str) -> std::result::Result<WireRecord, String> {
    let rec: WireRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if let Some(meta) = &rec.meta {
        if !meta.is_object() {
            return Err("\"meta\" must be an object".into());
        }
    }
    Ok(rec)
}

/// Reads one raw input shard, assigning ids from shard index and line ordinal.
pub fn read_input_shard(path: &Path, index: u32, registry: &Registry) -> Result<Shard> {
    let file = File::open(path).map_err(|e| Error::io("opening", path, e))?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (ordinal, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading", path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(rec) => {
                registry.require(&rec.source)?;
                let id = DocId::new(rec.source, index, ordinal as u64);
                records.push(DocumentRecord::new(id, rec.text, rec.meta));
            }
            Err(message) => errors.push(RecordError {
                shard: path.to_path_buf(),
                line: ordinal + 1,
                message,
            }),
        }
    }
    Ok(Shard {
        index,
        path: path.to_path_buf(),
        records,
        errors,
    })
}

/// Reads every shard under `path`. Shards are read concurrently; the result
/// is in shard-then-ordinal order regardless.
pub fn ingest(path: &Path, registry: &Registry, exec: Execution) -> Result<Vec<Shard>> {
    let paths = list_shards(path)?;
    let indexed: Vec<(u32, PathBuf)> = paths
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as u32, p))
        .collect();
    exec.try_map(&indexed, |(i, p)| read_input_shard(p, *i, registry))
}

/// Reads a shard written by a pipeline stage; every line must carry an id.
pub fn read_stage_shard(path: &Path) -> Result<Vec<DocumentRecord>> {
    let file = File::open(path).map_err(|e| Error::io("opening", path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading", path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_line(&line)
            .map_err(|m| Error::data(format!("{}:{}: {m}", path.display(), i + 1)))?;
        let id = rec
            .id
            .ok_or_else(|| Error::data(format!("{}:{}: missing \"id\"", path.display(), i + 1)))?;
        if id.dataset != rec.source {
            return Err(Error::data(format!(
                "{}:{}: id {id} does not match source {:?}",
                path.display(),
                i + 1,
                rec.source
            )));
        }
        out.push(DocumentRecord::new(id, rec.text, rec.meta));
    }
    Ok(out)
}

/// Serializes records in stage-shard form (with ids).
pub fn write_records<W: Write>(mut w: W, records: &[DocumentRecord]) -> Result<()> {
    for r in records {
        let wire = WireRecord {
            id: Some(r.id.clone()),
            text: r.text.clone(),
            source: r.id.dataset.clone(),
            meta: r.meta.clone(),
        };
        serde_json::to_writer(&mut w, &wire).map_err(|e| Error::data(e.to_string()))?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("writing", "<records>", e))?;
    }
    Ok(())
}

pub fn write_stage_shard(path: &Path, records: &[DocumentRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io("creating", path, e))?;
    let mut w = BufWriter::new(file);
    write_records(&mut w, records)?;
    w.flush().map_err(|e| Error::io("writing", path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Registry {
        Registry::new(vec![
            DatasetDescriptor {
                name: "a".into(),
                retention_rank: 1,
                insertion_order: 0,
                filter_exempt: false,
            },
            DatasetDescriptor {
                name: "b".into(),
                retention_rank: 2,
                insertion_order: 1,
                filter_exempt: false,
            },
        ])
        .unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_good_lines_get_ordinals() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.jsonl",
            "{\"text\":\"x\",\"source\":\"a\"}\n{\"text\":\"y z\",\"source\":\"b\"}\n{\"text\":\"\",\"source\":\"a\",\"meta\":{\"k\":1}}\n",
        );
        let shard = read_input_shard(&p, 4, &registry()).unwrap();
        assert!(shard.errors.is_empty());
        let ords: Vec<u64> = shard.records.iter().map(|r| r.id().ordinal).collect();
        assert_eq!(ords, vec![0, 1, 2]);
        assert_eq!(shard.records[1].id().to_string(), "b/00004/000000001");
        assert_eq!(shard.records[1].word_count(), 2);
    }

    #[test]
    fn empty_shard() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.jsonl", "");
        let shard = read_input_shard(&p, 0, &registry()).unwrap();
        assert!(shard.records.is_empty() && shard.errors.is_empty());
    }

    #[test]
    fn malformed_line_is_counted_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.jsonl",
            "{\"text\":\"x\",\"source\":\"a\"}\n{\"text\": 5,\n{\"text\":\"y\",\"source\":\"a\"}\n",
        );
        let shard = read_input_shard(&p, 0, &registry()).unwrap();
        assert_eq!(shard.records.len(), 2);
        assert_eq!(shard.errors.len(), 1);
        assert_eq!(shard.errors[0].line, 2);
    }

    #[test]
    fn non_object_meta_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.jsonl",
            "{\"text\":\"x\",\"source\":\"a\",\"meta\":3}\n",
        );
        let shard = read_input_shard(&p, 0, &registry()).unwrap();
        assert_eq!(shard.errors.len(), 1);
    }

    #[test]
    fn unknown_source_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s.jsonl",
            "{\"text\":\"x\",\"source\":\"zzz\"}\n",
        );
        let err = read_input_shard(&p, 0, &registry()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn doc_id_round_trip_and_order() {
        let id = DocId::new("c4-en", 3, 17);
        assert_eq!(id.to_string().parse::<DocId>().unwrap(), id);
        assert!(DocId::new("a", 2, 0) < DocId::new("a", 10, 0));
        assert!(DocId::new("a", 0, 9) < DocId::new("b", 0, 0));
        assert!("nope".parse::<DocId>().is_err());
    }

    #[test]
    fn registry_rejects_duplicate_ranks() {
        let mut ds = registry().datasets().to_vec();
        ds[1].retention_rank = 1;
        assert!(Registry::new(ds).is_err());
        let mut ds = registry().datasets().to_vec();
        ds[1].insertion_order = 0;
        assert!(Registry::new(ds).is_err());
    }

    #[test]
    fn reference_registry_orders() {
        let r = Registry::reference();
        let keep: Vec<&str> = r
            .by_retention_rank()
            .iter()
            .map(|d| d.name.as_str())
            .collect();
        assert_eq!(
            keep,
            [
                "starcoder",
                "refinedweb",
                "pes2o",
                "arxiv_s2orc_parsed",
                "c4-en",
                "pile-uncopyrighted",
                "slimpajama"
            ]
        );
        let ins: Vec<&str> = r
            .by_insertion_order()
            .iter()
            .map(|d| d.name.as_str())
            .collect();
        assert_eq!(
            ins,
            [
                "pile-uncopyrighted",
                "c4-en",
                "pes2o",
                "arxiv_s2orc_parsed",
                "refinedweb",
                "slimpajama",
                "starcoder"
            ]
        );
        assert!(r.get("starcoder").unwrap().filter_exempt);
    }

    #[test]
    fn token_counts() {
        let c = TokenCounter::default();
        assert_eq!(c.count("a b c"), 3);
        assert_eq!(c.count(""), 0);
        let text: String = (0..1024)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" \n");
        // oracle: count word starts by scanning characters
        let mut words = 0;
        let mut in_word = false;
        for ch in text.chars() {
            if ch.is_whitespace() {
                in_word = false;
            } else if !in_word {
                in_word = true;
                words += 1;
            }
        }
        assert_eq!(words, 1024);
        assert_eq!(c.count(&text), 1024);
    }

    #[test]
    fn stage_shard_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            DocumentRecord::new(DocId::new("a", 0, 0), "hello there", None),
            DocumentRecord::new(
                DocId::new("b", 0, 5),
                "x",
                Some(serde_json::json!({"u": "v"})),
            ),
        ];
        let p = dir.path().join("o.jsonl");
        write_stage_shard(&p, &recs).unwrap();
        assert_eq!(read_stage_shard(&p).unwrap(), recs);
    }
}
