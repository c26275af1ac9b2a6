//! psplat: open-vocabulary 3D panoptic segmentation pipeline.
//!
//! `psplat <stage> --config <json>` runs one stage against the artifacts in
//! the configured output directory; stages are resumable and communicate
//! only through files. PSPLAT_LOG (error|info|debug) controls logging.

use clap::{Parser, Subcommand};
use psplat::pipeline::{self, ColorBy, EvalGates, PipelineConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "psplat", version, about = "open-vocabulary 3D panoptic segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// pipeline configuration JSON; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory override
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// seed override
    #[arg(long)]
    seed: Option<u64>,
    /// worker thread cap (0 = library default)
    #[arg(long)]
    threads: Option<usize>,
    /// byte-reproducible stage reports (omit wall time)
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn load(&self) -> psplat::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        cfg.validate()?;
        pipeline::init_threads(cfg.threads);
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene (cloud, cameras, rasters, GT, queries)
    Simulate(Common),
    /// Back-project multi-view features into the fused feature cloud
    Fuse(Common),
    /// Distill the fused cloud into the tri-plane field + decoder
    Distill {
        #[command(flatten)]
        common: Common,
        /// JSON file overriding the optimizer settings for this run
        #[arg(long)]
        distill_config: Option<PathBuf>,
    },
    /// Group primitives into super-primitives with language-guided cuts
    Supersegment {
        #[command(flatten)]
        common: Common,
        /// ablation: ignore language features in the merge predicate
        #[arg(long)]
        no_language: bool,
    },
    /// Cluster super-primitives into instances via mask-label affinity
    Cluster(Common),
    /// Classify, vote, and assemble the panoptic labeling
    Label(Common),
    /// Score the labeling against ground truth
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        min_miou: Option<f64>,
        #[arg(long)]
        min_macc: Option<f64>,
        #[arg(long)]
        min_prq_thing: Option<f64>,
        #[arg(long)]
        min_prq_stuff: Option<f64>,
    },
    /// Export a colorized PLY of the labeling
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "instance")]
        color_by: ColorByArg,
    },
    /// Check a file's format and invariants
    Validate {
        /// path of the artifact to inspect
        path: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ColorByArg {
    Instance,
    Class,
    Confidence,
}

impl From<ColorByArg> for ColorBy {
    fn from(c: ColorByArg) -> Self {
        match c {
            ColorByArg::Instance => ColorBy::Instance,
            ColorByArg::Class => ColorBy::Class,
            ColorByArg::Confidence => ColorBy::Confidence,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PSPLAT_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}

fn run(cli: Cli) -> psplat::Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            print_report(&pipeline::run_simulate(&cfg)?);
        }
        Command::Fuse(common) => {
            let cfg = common.load()?;
            print_report(&pipeline::run_fuse(&cfg)?);
        }
        Command::Distill {
            common,
            distill_config,
        } => {
            let mut cfg = common.load()?;
            if let Some(path) = distill_config {
                let bytes = std::fs::read(&path)
                    .map_err(|e| psplat::Error::io(&path, e))?;
                cfg.distill = serde_json::from_slice(&bytes).map_err(|e| {
                    psplat::Error::format(&path, e.column() as u64, format!("bad distill JSON: {e}"))
                })?;
                cfg.distill.validate()?;
            }
            print_report(&pipeline::run_distill(&cfg)?);
        }
        Command::Supersegment { common, no_language } => {
            let mut cfg = common.load()?;
            if no_language {
                cfg.cut.use_language = false;
            }
            print_report(&pipeline::run_supersegment(&cfg)?);
        }
        Command::Cluster(common) => {
            let cfg = common.load()?;
            print_report(&pipeline::run_cluster(&cfg)?);
        }
        Command::Label(common) => {
            let cfg = common.load()?;
            print_report(&pipeline::run_label(&cfg)?);
        }
        Command::Eval {
            common,
            min_miou,
            min_macc,
            min_prq_thing,
            min_prq_stuff,
        } => {
            let cfg = common.load()?;
            let gates = EvalGates {
                min_miou,
                min_macc,
                min_prq_thing,
                min_prq_stuff,
            };
            let report = pipeline::run_eval(&cfg, &gates)?;
            print_report(&report);
            let txt = cfg.artifact("eval.txt");
            if let Ok(text) = std::fs::read_to_string(&txt) {
                println!("{text}");
            }
        }
        Command::Export { common, color_by } => {
            let cfg = common.load()?;
            print_report(&pipeline::run_export(&cfg, color_by.into())?);
        }
        Command::Validate { path } => {
            let report = psplat::io::validate::validate_file(&path)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            if !report.is_clean() {
                return Err(psplat::Error::format(
                    &path,
                    0,
                    format!("{} violation(s)", report.violations.len()),
                ));
            }
        }
    }
    Ok(())
}

fn print_report(report: &pipeline::StageReport) {
    println!(
        "{}",
        serde_json::to_string_pretty(report).expect("report serializes")
    );
}
