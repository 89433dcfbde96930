mod common;

use std::fs;
use std::path::Path;

use curate_core::pipeline::{Overrides, Pipeline, PipelineConfig, RunManifest, Stage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{fixture_dir, synthetic_corpus, write_corpus};

fn fixture(out: &Path) -> Pipeline {
    let overrides = Overrides {
        output: Some(out.to_path_buf()),
        ..Overrides::default()
    };
    Pipeline::load(&fixture_dir().join("pipeline.json"), &overrides).unwrap()
}

fn digests(root: &Path, stage: Stage) -> Vec<(String, String)> {
    RunManifest::load_or_default(root).unwrap().stages[&stage]
        .outputs
        .iter()
        .map(|f| (f.path.clone(), f.sha256.clone()))
        .collect()
}

#[test]
fn resume_skips_completed_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    assert!(p.run_all(true).unwrap().iter().all(|s| !s.skipped));
    let before = fs::read(tmp.path().join("report/report.json")).unwrap();
    assert!(p.run_all(true).unwrap().iter().all(|s| s.skipped));
    assert_eq!(
        fs::read(tmp.path().join("report/report.json")).unwrap(),
        before
    );
}

#[test]
fn tampered_output_blocks_next_stage_and_resume_repairs_it() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    p.run_all(false).unwrap();
    let original = digests(tmp.path(), Stage::Filter);

    let shard = tmp.path().join("filter/shard-00000.jsonl");
    let mut bytes = fs::read(&shard).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&shard, bytes).unwrap();
    let err = p.run_stage(Stage::Sign, false).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("re-run stage filter"), "{err}");

    let summaries = p.run_all(true).unwrap();
    let rerun: Vec<Stage> = summaries
        .iter()
        .filter(|s| !s.skipped)
        .map(|s| s.stage)
        .collect();
    assert_eq!(rerun, vec![Stage::Filter]);
    assert_eq!(digests(tmp.path(), Stage::Filter), original);
}

#[test]
fn missing_stage_output_is_a_resume_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    p.run_stage(Stage::Ingest, false).unwrap();
    fs::remove_file(tmp.path().join("ingest/shard-00001.jsonl")).unwrap();
    assert_eq!(
        p.run_stage(Stage::Sanitize, false).unwrap_err().exit_code(),
        3
    );
}

#[test]
fn rerunning_filter_reproduces_its_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    for s in [Stage::Ingest, Stage::Sanitize, Stage::Filter] {
        p.run_stage(s, false).unwrap();
    }
    let first = digests(tmp.path(), Stage::Filter);
    let again = p.run_stage(Stage::Filter, false).unwrap();
    assert!(!again.skipped);
    assert_eq!(digests(tmp.path(), Stage::Filter), first);
}

#[test]
fn leftovers_of_a_crashed_stage_are_discarded() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    p.run_stage(Stage::Ingest, false).unwrap();
    let tmp_dir = tmp.path().join("sanitize.tmp");
    fs::create_dir_all(&tmp_dir).unwrap();
    fs::write(tmp_dir.join("shard-00009.jsonl"), "half a record").unwrap();
    p.run_stage(Stage::Sanitize, false).unwrap();
    assert!(!tmp_dir.exists());
    assert!(!tmp.path().join("sanitize/shard-00009.jsonl").exists());
}

#[test]
fn counts_telescope_across_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    let s = p.run_all(false).unwrap();
    for w in s.windows(2) {
        assert_eq!(
            w[0].counts.docs_out, w[1].counts.docs_in,
            "{} -> {}",
            w[0].stage, w[1].stage
        );
        assert_eq!(
            w[0].counts.tokens_out, w[1].counts.tokens_in,
            "{} -> {}",
            w[0].stage, w[1].stage
        );
    }
    assert_eq!(s[0].counts.docs_in, 50);
}

#[test]
fn report_totals_are_row_sums() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    p.run_all(false).unwrap();
    let r = p.build_report(&p.manifest().unwrap()).unwrap();
    assert!(r.complete);
    let sum = |f: fn(&curate_core::pipeline::DatasetSummary) -> u64| {
        r.datasets.iter().map(f).sum::<u64>()
    };
    assert_eq!(r.totals.initial_docs, sum(|d| d.initial_docs));
    assert_eq!(r.totals.filtered_docs, sum(|d| d.filtered_docs));
    assert_eq!(r.totals.dedup_removed_docs, sum(|d| d.dedup_removed_docs));
    assert_eq!(r.totals.final_docs, sum(|d| d.final_docs));
    assert_eq!(r.totals.final_tokens, sum(|d| d.final_tokens));
    let text = fs::read_to_string(tmp.path().join("report/report.txt")).unwrap();
    let c4 = text.lines().find(|l| l.starts_with("c4-en ")).unwrap();
    assert!(c4.contains("30.00%"), "{c4}");
    let pile = text
        .lines()
        .find(|l| l.starts_with("pile-uncopyrighted "))
        .unwrap();
    assert!(pile.contains("0.00%"), "{pile}");
    assert!(text.contains("hash_seed: 42"));
}

#[test]
fn report_on_incomplete_run_is_labeled_partial() {
    let tmp = tempfile::tempdir().unwrap();
    let p = fixture(tmp.path());
    p.run_stage(Stage::Ingest, false).unwrap();
    let r = p.build_report(&p.manifest().unwrap()).unwrap();
    assert!(!r.complete);
    assert!(r.render_text().starts_with("PARTIAL REPORT"));
    assert_eq!(
        p.run_stage(Stage::Report, false).unwrap_err().exit_code(),
        3
    );
}

#[test]
fn seed_change_invalidates_outputs_but_worker_count_does_not() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path()).run_all(false).unwrap();
    let overrides = Overrides {
        output: Some(tmp.path().to_path_buf()),
        seed: Some(43),
        workers: Some(3),
        ..Overrides::default()
    };
    let p = Pipeline::load(&fixture_dir().join("pipeline.json"), &overrides).unwrap();
    let rerun: Vec<Stage> = p
        .run_all(true)
        .unwrap()
        .into_iter()
        .filter(|s| !s.skipped)
        .map(|s| s.stage)
        .collect();
    // the hash seed is part of every stage's config digest
    assert_eq!(rerun.len(), 8);

    let same = Overrides {
        output: Some(tmp.path().to_path_buf()),
        seed: Some(43),
        workers: Some(1),
        ..Overrides::default()
    };
    let p = Pipeline::load(&fixture_dir().join("pipeline.json"), &same).unwrap();
    assert!(
        p.run_all(true).unwrap().iter().all(|s| s.skipped),
        "worker count must not invalidate outputs"
    );
}

#[test]
fn malformed_lines_are_counted_and_unknown_sources_are_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir_all(&input).unwrap();
    fs::write(
        input.join("a.jsonl"),
        "{\"text\":\"one two\",\"source\":\"c4-en\"}\nnot json\n\n{\"text\":\"three\",\"source\":\"pes2o\"}\n",
    )
    .unwrap();
    let cfg = PipelineConfig {
        input: input.clone(),
        output: tmp.path().join("out"),
        ..PipelineConfig::default()
    };
    let s = Pipeline::new(cfg.clone())
        .unwrap()
        .run_stage(Stage::Ingest, false)
        .unwrap();
    assert_eq!((s.counts.docs_in, s.counts.docs_out), (3, 2));
    let errors = fs::read_to_string(tmp.path().join("out/ingest/errors.jsonl")).unwrap();
    assert!(errors.contains("\"line\":2"), "{errors}");

    fs::write(
        input.join("b.jsonl"),
        "{\"text\":\"x\",\"source\":\"mystery\"}\n",
    )
    .unwrap();
    let err = Pipeline::new(cfg)
        .unwrap()
        .run_stage(Stage::Ingest, false)
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn bad_config_files_fail_at_startup() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        filters: Some(tmp.path().join("missing.json")),
        ..PipelineConfig::default()
    };
    assert!(Pipeline::new(cfg).is_err());
    let bad = tmp.path().join("pipeline.json");
    fs::write(
        &bad,
        r#"{"lsh": {"bands": 64, "rows": 4, "threshold": 0.5}}"#,
    )
    .unwrap();
    assert_eq!(
        Pipeline::load(&bad, &Overrides::default())
            .unwrap_err()
            .exit_code(),
        1
    );
}

#[test]
fn verification_drops_low_similarity_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let input = tmp.path().join("in");
    write_corpus(&input, &synthetic_corpus(&mut rng, 600, 200, 2));
    let run = |verify: bool| {
        let out = tmp.path().join(format!("out-{verify}"));
        let p = Pipeline::new(PipelineConfig {
            input: input.clone(),
            output: out.clone(),
            verify_pairs: verify,
            ..PipelineConfig::default()
        })
        .unwrap();
        p.run_all(false).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("dedup/summary.json")).unwrap())
                .unwrap();
        let audit: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("audit/audit.json")).unwrap())
                .unwrap();
        (summary, audit)
    };
    let (plain, _) = run(false);
    let (verified, audit) = run(true);
    assert_eq!(plain["candidate_pairs"], verified["candidate_pairs"]);
    let kept = verified["pairs"].as_u64().unwrap();
    let rejected = verified["rejected_by_verification"].as_u64().unwrap();
    assert_eq!(kept + rejected, plain["pairs"].as_u64().unwrap());
    assert_eq!(audit["empirical_fp_jaccard"].as_f64().unwrap(), 0.0);
}
