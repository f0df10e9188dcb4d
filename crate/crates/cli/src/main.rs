mod commands;
mod fail;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::fail::{Failure, Kind};
use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "histoxai", version, about = "Synthetic histology classification, Grad-CAM and survey statistics")]
struct Cli {
    /// Key = value config file with [section] headers. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; every random component derives a named sub-stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Nothing is written anywhere else.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a two-class image set with lesion masks.
    Generate(GenerateArgs),
    /// Train a model on a generated set and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on its held-out split and write a metrics table.
    Evaluate(EvaluateArgs),
    /// Grad-CAM overlays and sidecars for every image of a directory.
    Explain(ExplainArgs),
    /// Reliability, correlation, regression and group tests on a survey CSV.
    Stats(StatsArgs),
    /// Consistency check of published summary statistics.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of images, split evenly between the classes.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// plain-cnn | mini-resnet | mini-vgg
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated conv widths.
    #[arg(long)]
    widths: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    /// 0 saves the freshly initialised network.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Weight-init seed; defaults to the run seed.
    #[arg(long)]
    model_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// test | all
    #[arg(long)]
    split: Option<String>,
    /// history.txt from `train`, for the training-time column.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// A generated set (healthy/, diseased/, masks/) or a flat PNG directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// predicted | healthy | diseased | class index
    #[arg(long)]
    target: Option<String>,
    /// Heatmap weight in the overlay, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Conv layer index; defaults to the last conv layer.
    #[arg(long)]
    layer: Option<usize>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    survey: Option<PathBuf>,
    /// pooled | welch
    #[arg(long)]
    ttest: Option<String>,
    /// Respondents with experience_years <= cut form the first group.
    #[arg(long)]
    experience_cut: Option<f64>,
    /// Comma-separated item ids to reverse-score.
    #[arg(long)]
    reverse: Option<String>,
    #[arg(long)]
    scale_min: Option<f64>,
    #[arg(long)]
    scale_max: Option<f64>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    records: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Explain(_) => "explain",
            Command::Stats(_) => "stats",
            Command::Audit(_) => "audit",
        }
    }

    fn apply(&self, s: &mut Settings) {
        match self {
            Command::Generate(a) => s.set_opt("data.n", a.n),
            Command::Train(a) => {
                s.set_opt("data.dir", a.data.as_ref().map(|p| p.display()));
                s.set_opt("model.family", a.family.as_ref());
                s.set_opt("model.widths", a.widths.as_ref());
                s.set_opt("model.seed", a.model_seed);
                s.set_opt("train.lr", a.lr);
                s.set_opt("train.epochs", a.epochs);
                s.set_opt("train.batch_size", a.batch_size);
                s.set_opt("data.train_fraction", a.train_fraction);
            }
            Command::Evaluate(a) => {
                s.set_opt("data.dir", a.data.as_ref().map(|p| p.display()));
                s.set_opt("model.checkpoint", a.checkpoint.as_ref().map(|p| p.display()));
                s.set_opt("evaluate.split", a.split.as_ref());
                s.set_opt("evaluate.history", a.history.as_ref().map(|p| p.display()));
            }
            Command::Explain(a) => {
                s.set_opt("model.checkpoint", a.checkpoint.as_ref().map(|p| p.display()));
                s.set_opt("explain.input", a.input.as_ref().map(|p| p.display()));
                s.set_opt("explain.target", a.target.as_ref());
                s.set_opt("explain.alpha", a.alpha);
                s.set_opt("explain.layer", a.layer);
            }
            Command::Stats(a) => {
                s.set_opt("stats.survey", a.survey.as_ref().map(|p| p.display()));
                s.set_opt("stats.ttest", a.ttest.as_ref());
                s.set_opt("stats.experience_cut", a.experience_cut);
                s.set_opt("stats.reverse", a.reverse.as_ref());
                s.set_opt("stats.scale_min", a.scale_min);
                s.set_opt("stats.scale_max", a.scale_max);
            }
            Command::Audit(a) => s.set_opt("audit.records", a.records.as_ref().map(|p| p.display())),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut settings = Settings::defaults();
    if let Some(path) = &cli.config {
        settings.load_file(path)?;
    }
    settings.set_opt("run.seed", cli.seed);
    cli.command.apply(&mut settings);
    let out = cli
        .out
        .ok_or_else(|| Failure::new(Kind::Usage, "--out is required"))?;
    commands::dispatch(cli.command.name(), &settings, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("histoxai: {}", Failure::new(Kind::Usage, msg).line());
            return ExitCode::from(Kind::Usage.code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("histoxai: {}", f.line());
            ExitCode::from(f.kind.code() as u8)
        }
    }
}
