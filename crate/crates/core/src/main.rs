use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pitchchain::metrics::{Criterion, DEFAULT_MAX_LAG};
use pitchchain::pipeline::{self, EvaluateConfig, ExportConfig, GenerateConfig, TrainConfig};
use pitchchain::Result;

#[derive(Parser)]
#[command(name = "pitchchain", version, about = "Train, sample and score pitch-sequence models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one registry model (M1..M15) to a MIDI-CSV piece.
    Train(TrainArgs),
    /// Sample a batch of pieces from a saved model.
    Generate(GenerateArgs),
    /// Score a generated batch against the training piece.
    Evaluate(EvaluateArgs),
    /// Order evaluation reports by one criterion.
    Rank(RankArgs),
    /// Write the best pieces of a batch as MIDI-CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "M1")]
    model: String,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = pitchchain::hmm::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = pitchchain::hmm::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Defaults to $PITCHCHAIN_OUT/<model>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// model.json written by `train`, or the directory holding it.
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_BATCH)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write each piece as MIDI-CSV.
    #[arg(long)]
    midi_csv: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Training piece (MIDI-CSV).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    batch: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LAG)]
    max_lag: usize,
    /// Defaults to the batch directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// report.json files or the directories holding them.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long, default_value = "entropy-rmse")]
    criterion: Criterion,
}

#[derive(Args)]
struct ExportArgs {
    /// report.json of an evaluated batch, or its directory.
    #[arg(long)]
    report: PathBuf,
    #[arg(long = "criterion", value_delimiter = ',', default_value = "entropy-rmse")]
    criteria: Vec<Criterion>,
    #[arg(long, default_value_t = pipeline::DEFAULT_TOP)]
    top: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn model_path(p: PathBuf) -> PathBuf {
    if p.is_dir() {
        p.join(pipeline::MODEL_FILE)
    } else {
        p
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => {
            let out = a
                .out
                .unwrap_or_else(|| pipeline::default_out_root().join(a.model.to_ascii_uppercase()));
            let cfg = TrainConfig {
                input: a.input,
                model: a.model,
                states: a.states,
                order: a.order,
                layers: a.layers,
                dmax: a.dmax,
                seed: a.seed,
                tol: a.tol,
                max_iter: a.max_iter,
                restarts: a.restarts,
                out,
            };
            let m = pipeline::cmd_train(&cfg)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            match m.final_log_likelihood {
                Some(ll) => println!("{} trained: log-likelihood {ll:.6}, model at {}", m.spec.label(), m.model_path.display()),
                None => println!("{} trained: model at {}", m.spec.label(), m.model_path.display()),
            }
        }
        Command::Generate(a) => {
            let model_path = model_path(a.model_file);
            let out = a.out.unwrap_or_else(|| {
                model_path.parent().map(|d| d.join("batch")).unwrap_or_else(|| pipeline::default_out_root().join("batch"))
            });
            let cfg = GenerateConfig {
                model_path,
                n: a.n,
                seed: a.seed,
                out,
                midi_csv: a.midi_csv,
            };
            let m = pipeline::cmd_generate(&cfg)?;
            println!("{} pieces from {} in {} ({:.2}s)", m.pieces.len(), m.model, cfg.out.display(), m.seconds);
        }
        Command::Evaluate(a) => {
            let out = a.out.unwrap_or_else(|| a.batch.clone());
            let cfg = EvaluateConfig {
                input: a.input,
                batch: a.batch,
                out,
                max_lag: a.max_lag,
            };
            let r = pipeline::cmd_evaluate(&cfg)?;
            println!("{}: {} of {} pieces scored", r.model, r.report.n_evaluated, r.report.n_evaluated + r.report.skipped.len());
            for (name, v) in r.report.summary_rows() {
                println!("  {name:<24} {v:.6}");
            }
        }
        Command::Rank(a) => {
            let rows = pipeline::cmd_rank(&a.reports, a.criterion)?;
            println!("rank,model,{},report", a.criterion);
            for r in rows {
                println!("{},{},{},{}", r.rank, r.model, r.value, r.source.display());
            }
        }
        Command::Export(a) => {
            let out = a.out.unwrap_or_else(|| {
                let dir = if a.report.is_dir() { a.report.clone() } else { a.report.parent().map(PathBuf::from).unwrap_or_default() };
                dir.join("export")
            });
            let cfg = ExportConfig {
                report: a.report,
                criteria: a.criteria,
                top: a.top,
                out,
            };
            let m = pipeline::cmd_export(&cfg)?;
            for p in &m.selected {
                println!("{} {} -> {}", p.criterion, p.source.display(), p.midi_csv.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
