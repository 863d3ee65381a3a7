use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod config;
mod eval;
mod fsutil;
mod synth;
mod train;

/// Bad input, arguments or configuration. Maps to exit code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "reliqa", version, about = "Relational image quality assessment: synthesis, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a triplet dataset.
    Synth(synth::SynthArgs),
    /// Build ordinal quality tiers from base images.
    Tiers(synth::TiersArgs),
    /// Train the pairwise distortion-map predictor.
    TrainPredictor(train::TrainPredictorArgs),
    /// Train the relational scorer on a tier set.
    TrainScorer(train::TrainScorerArgs),
    /// Measure the anti-symmetry residual of a predictor.
    EvalAntisym(eval::EvalAntisymArgs),
    /// Evaluate tier ordering of a scorer.
    EvalRank(eval::EvalRankArgs),
    /// Run the finite-difference gradient suites.
    VerifyGradients(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Module {
    Objectives,
    Predictor,
    Scorer,
    All,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Module::All)]
    module: Module,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Marks a run that completed but whose checks failed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn verify_gradients(args: &VerifyArgs) -> anyhow::Result<()> {
    use reliqa::verify::{objectives_suite, predictor_suite, scorer_suite};
    let mut checks = Vec::new();
    if matches!(args.module, Module::Objectives | Module::All) {
        checks.extend(objectives_suite(args.seed)?);
    }
    if matches!(args.module, Module::Predictor | Module::All) {
        checks.extend(predictor_suite(args.seed)?);
    }
    if matches!(args.module, Module::Scorer | Module::All) {
        checks.extend(scorer_suite(args.seed)?);
    }
    println!("finite-difference suites at seed {}", args.seed);
    println!("{:<24} {:>12} {:>10}  status", "kernel", "max rel err", "tolerance");
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.passed();
        println!(
            "{:<24} {:>12.3e} {:>10.0e}  {}",
            c.kernel,
            c.max_rel_error,
            c.tolerance,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(c.kernel.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CheckFailed(format!("gradient check failed for {}", failed.join(", "))).into())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use reliqa::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidArgument(_)
                | E::DimMismatch(_)
                | E::NonPartition(_)
                | E::SingletonTier { .. }
                | E::OutOfRange(_)
                | E::DoubleSwap
                | E::Json { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth::run_synth(a),
        Command::Tiers(a) => synth::run_tiers(a),
        Command::TrainPredictor(a) => train::run_train_predictor(a),
        Command::TrainScorer(a) => train::run_train_scorer(a),
        Command::EvalAntisym(a) => eval::run_eval_antisym(a),
        Command::EvalRank(a) => eval::run_eval_rank(a),
        Command::VerifyGradients(a) => verify_gradients(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Shared `--config` flag.
#[derive(clap::Args, Clone)]
pub struct ConfigArg {
    /// JSON configuration file. Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
