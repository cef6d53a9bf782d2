//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Result;
use crate::experiment::{run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, Params};
use crate::runner::resolve_jobs;
use crate::suite::{load_manifest, run_suite};

#[derive(Debug, Parser)]
#[command(name = "covertime-lab", version, about = "Monte Carlo cover times of random walks on trees and tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cover time of the b-ary tree of depth k, over n_k k^2.
    TreeCover(RunArgs),
    /// Cover time of the n x n torus, over (n ln n)^2.
    TorusCover(RunArgs),
    /// Most visited site of the planar walk after `steps` steps, over (ln steps)^2.
    ThickPoints(RunArgs),
    /// Time until every eps-disc of the unit torus is hit, over (ln eps)^2.
    EpsCover(RunArgs),
    /// Root to level-ell excursions completed by T_lambda.
    Excursions(RunArgs),
    /// Fraction of special vertices at the shallowest classified level.
    SpecialVertices(RunArgs),
    /// Galton-Watson survival to generation `steps`.
    GwSurvival(RunArgs),
    /// Raw cover time on a small graph, compared with the exact expectation.
    OracleCheck(RunArgs),
    /// Run every experiment in a JSON manifest.
    Suite(SuiteArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub b: Option<u32>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub ell: Option<u32>,
    /// Offspring law for gw-survival, e.g. `0:0.25,2:0.75`.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub replicas: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Worker threads; COVERTIME_LAB_JOBS takes precedence.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write replica 0's step codes here (lattice and torus experiments).
    #[arg(long)]
    pub dump_trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for result files, trends.json and suite-errors.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    pub fn into_config(self, experiment: ExperimentKind) -> (ExperimentConfig, Option<usize>) {
        let cfg = ExperimentConfig {
            experiment,
            params: Params {
                b: self.b,
                k: self.k,
                n: self.n,
                steps: self.steps,
                eps: self.eps,
                lambda: self.lambda,
                r: self.r,
                ell: self.ell,
                law: self.law,
            },
            replicas: self.replicas,
            seed: self.seed,
            out: self.out,
            format: match self.format {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            },
            dump_trajectory: self.dump_trajectory,
        };
        (cfg, self.jobs)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let (kind, args) = match cli.command {
        Command::Suite(s) => {
            let manifest = load_manifest(&s.manifest)?;
            let report = run_suite(&manifest, &s.out, resolve_jobs(s.jobs)?)?;
            for t in &report.trends {
                let verdict = t.report.as_ref().map_or("n/a", |r| r.verdict.as_str());
                println!("{} {} {}", t.experiment.name(), t.key, verdict);
            }
            return Ok(());
        }
        Command::TreeCover(a) => (ExperimentKind::TreeCover, a),
        Command::TorusCover(a) => (ExperimentKind::TorusCover, a),
        Command::ThickPoints(a) => (ExperimentKind::ThickPoints, a),
        Command::EpsCover(a) => (ExperimentKind::EpsCover, a),
        Command::Excursions(a) => (ExperimentKind::Excursions, a),
        Command::SpecialVertices(a) => (ExperimentKind::SpecialVertices, a),
        Command::GwSurvival(a) => (ExperimentKind::GwSurvival, a),
        Command::OracleCheck(a) => (ExperimentKind::OracleCheck, a),
    };
    let (cfg, jobs) = args.into_config(kind);
    cfg.validate()?;
    let outcome = run_experiment(&cfg, resolve_jobs(jobs)?)?;
    if let Some(mean) = outcome.summary.mean {
        println!("{} mean={} ok={}/{}", kind.name(), mean, outcome.summary.ok_replicas, cfg.replicas);
    }
    Ok(())
}
