use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curate_core::lsh::Preset;
use curate_core::pipeline::{self, Overrides, Pipeline, Stage, StageSummary};
use curate_core::Error;

/// Filter and deduplicate sharded text corpora.
#[derive(Debug, Parser)]
#[command(name = "curate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read input shards and assign document ids.
    Ingest(RunArgs),
    /// Collapse runs of repeated special characters.
    Sanitize(RunArgs),
    /// Apply the quality filter battery.
    Filter(RunArgs),
    /// Compute MinHash signatures.
    Sign(RunArgs),
    /// Emit candidate duplicate pairs from the banded index.
    Dedup(RunArgs),
    /// Group pairs into clusters and keep one member each.
    Cluster(RunArgs),
    /// Sample pairs and measure empirical false-positive rates.
    Audit(RunArgs),
    /// Write the consolidated per-dataset report.
    Report(RunArgs),
    /// Run every stage in order.
    RunAll(RunArgs),
    /// Write the shipped registry, rules, filters, word lists and a config.
    WriteDefaults {
        /// Target directory.
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Pipeline configuration (JSON).
    #[arg(long, default_value = "pipeline.json")]
    config: PathBuf,
    /// LSH preset, overriding the config.
    #[arg(long)]
    preset: Option<Preset>,
    /// Worker threads (0 = all CPUs).
    #[arg(long)]
    workers: Option<usize>,
    /// Hash-family seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Skip stages whose recorded outputs are still valid.
    #[arg(long)]
    resume: bool,
}

impl RunArgs {
    fn pipeline(&self) -> Result<Pipeline, Error> {
        let overrides = Overrides {
            preset: self.preset,
            workers: self.workers,
            seed: self.seed,
            output: self.output.clone(),
        };
        Pipeline::load(&self.config, &overrides)
    }
}

fn print_summary(s: &StageSummary) {
    let c = &s.counts;
    let state = if s.skipped {
        "skipped (up to date)"
    } else {
        "done"
    };
    println!(
        "{:<9} {state}: docs {} -> {}, tokens {} -> {}",
        s.stage, c.docs_in, c.docs_out, c.tokens_in, c.tokens_out
    );
    for n in &s.notes {
        println!("          {n}");
    }
}

fn run_one(args: &RunArgs, stage: Stage) -> Result<(), Error> {
    let p = args.pipeline()?;
    let summary = p.run_stage(stage, args.resume)?;
    print_summary(&summary);
    if stage == Stage::Report {
        let report = p.build_report(&p.manifest()?)?;
        print!("{}", report.render_text());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let (args, stage) = match cli.command {
        Command::Ingest(a) => (a, Stage::Ingest),
        Command::Sanitize(a) => (a, Stage::Sanitize),
        Command::Filter(a) => (a, Stage::Filter),
        Command::Sign(a) => (a, Stage::Sign),
        Command::Dedup(a) => (a, Stage::Dedup),
        Command::Cluster(a) => (a, Stage::Cluster),
        Command::Audit(a) => (a, Stage::Audit),
        Command::Report(a) => (a, Stage::Report),
        Command::RunAll(a) => {
            let p = a.pipeline()?;
            for s in p.run_all(a.resume)? {
                print_summary(&s);
            }
            print!("{}", p.build_report(&p.manifest()?)?.render_text());
            return Ok(());
        }
        Command::WriteDefaults { dir } => {
            pipeline::write_defaults(&dir)?;
            println!("wrote defaults to {}", dir.display());
            return Ok(());
        }
    };
    run_one(&args, stage)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
