use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::DEFAULT_EDIT_LENGTH_CAP;
use crate::corpus::TokenCounter;
use crate::error::{Error, Result};
use crate::lsh::{LshParams, Preset};
use crate::shingle::{DEFAULT_NUM_PERM, DEFAULT_SHINGLE_WIDTH};

/// Either a named preset or explicit banding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LshSetting {
    Preset(Preset),
    Explicit {
        bands: usize,
        rows: usize,
        threshold: f64,
    },
}

impl Default for LshSetting {
    fn default() -> Self {
        LshSetting::Preset(Preset::Lsh40)
    }
}

impl LshSetting {
    pub fn params(&self, num_perm: usize) -> Result<LshParams> {
        match *self {
            LshSetting::Preset(p) => {
                let params = p.params();
                if params.num_perm != num_perm {
                    return Err(Error::config(format!(
                        "preset {p} needs num_perm = {}, config has {num_perm}",
                        params.num_perm
                    )));
                }
                Ok(params)
            }
            LshSetting::Explicit {
                bands,
                rows,
                threshold,
            } => LshParams::new(threshold, bands, rows, num_perm),
        }
    }

    pub fn label(&self) -> String {
        match self {
            LshSetting::Preset(p) => p.name().to_string(),
            LshSetting::Explicit {
                bands,
                rows,
                threshold,
            } => {
                format!("b={bands},r={rows},t={threshold}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub sample_size: usize,
    pub seed: u64,
    pub edit_length_cap: usize,
    /// Number of random clusters written as text for manual inspection.
    pub dump_clusters: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            sample_size: 10_000,
            seed: 0,
            edit_length_cap: DEFAULT_EDIT_LENGTH_CAP,
            dump_clusters: 0,
        }
    }
}

/// Pipeline configuration file. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory (or single file) of input shards.
    pub input: PathBuf,
    pub output: PathBuf,
    /// Dataset registry; the built-in seven-source registry when absent.
    pub registry: Option<PathBuf>,
    /// Sanitizer rule file; shipped defaults when absent.
    pub sanitize_rules: Option<PathBuf>,
    /// Filter battery; shipped defaults when absent.
    pub filters: Option<PathBuf>,
    /// Directory of `<name>.json` word lists; placeholders when absent.
    pub wordlist_dir: Option<PathBuf>,
    pub shingle_width: usize,
    pub num_perm: usize,
    /// Seed of the shingle hash and MinHash family.
    pub seed: u64,
    pub lsh: LshSetting,
    /// Maximum earlier bucket occupants paired with each insertion.
    pub bucket_cap: Option<usize>,
    /// Drop candidate pairs whose exact Jaccard is below the threshold.
    pub verify_pairs: bool,
    pub token_counter: TokenCounter,
    /// Worker threads; 0 picks the number of CPUs.
    pub workers: usize,
    pub audit: AuditSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::from("input"),
            output: PathBuf::from("output"),
            registry: None,
            sanitize_rules: None,
            filters: None,
            wordlist_dir: None,
            shingle_width: DEFAULT_SHINGLE_WIDTH,
            num_perm: DEFAULT_NUM_PERM,
            seed: 0,
            lsh: LshSetting::default(),
            bucket_cap: None,
            verify_pairs: false,
            token_counter: TokenCounter::default(),
            workers: 0,
            audit: AuditSettings::default(),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&raw)
            .map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output);
        for p in [
            &mut self.registry,
            &mut self.sanitize_rules,
            &mut self.filters,
            &mut self.wordlist_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.preset {
            self.lsh = LshSetting::Preset(p);
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_explicit_lsh() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"input":"in","lsh":{"bands":8,"rows":16,"threshold":0.7}}"#)
                .unwrap();
        assert_eq!(cfg.num_perm, 128);
        assert_eq!(cfg.lsh.params(128).unwrap().bands, 8);
        let cfg: PipelineConfig = serde_json::from_str(r#"{"lsh":"lsh80"}"#).unwrap();
        assert_eq!(cfg.lsh, LshSetting::Preset(Preset::Lsh80));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_banding() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus":1}"#).is_err());
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"lsh":{"bands":20,"rows":8,"threshold":0.5}}"#).unwrap();
        assert!(cfg.lsh.params(128).is_err());
        assert!(LshSetting::Preset(Preset::Lsh40).params(64).is_err());
    }

    #[test]
    fn overrides_and_relative_paths() {
        let mut cfg = PipelineConfig {
            filters: Some("f.json".into()),
            ..PipelineConfig::default()
        };
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.filters.as_deref(), Some(Path::new("/base/f.json")));
        assert_eq!(cfg.input, Path::new("/base/input"));
        cfg.apply(&Overrides {
            preset: Some(Preset::Lsh80),
            workers: Some(3),
            seed: Some(9),
            output: Some("/elsewhere".into()),
        });
        assert_eq!((cfg.workers, cfg.seed), (3, 9));
        assert_eq!(cfg.output, Path::new("/elsewhere"));
        assert_eq!(cfg.lsh.label(), "lsh80");
    }
}
