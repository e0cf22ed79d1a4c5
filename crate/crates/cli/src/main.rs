mod commands;
mod manifest;

use std::fmt;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use unetcast::grid::{MonthRange, MonthStamp};
use unetcast::model::Arch;
use unetcast::stacking::TemporalCase;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<unetcast::Error> for CliError {
    fn from(e: unetcast::Error) -> Self {
        let code = match &e {
            unetcast::Error::Config(_) => EXIT_USAGE,
            e if e.is_data_error() => EXIT_DATA,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "unetcast", version, about = "Monthly temperature forecasting with circular-padded UNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic temperature series, elevation field and region masks.
    Synth(SynthArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Continue training a checkpoint on new data.
    Finetune(FinetuneArgs),
    /// Forecast a range of months with a checkpoint.
    Predict(PredictArgs),
    /// Score a checkpoint or stored prediction against truth.
    Evaluate(EvaluateArgs),
    /// Rank the 14 temporal cases from their evaluation reports.
    Rank(RankArgs),
    /// Score a reference forecast.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Render a stored field as a PGM image.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 24)]
    pub lat: usize,
    #[arg(long, default_value_t = 48)]
    pub lon: usize,
    #[arg(long, default_value_t = 80)]
    pub years: usize,
    #[arg(long, default_value = "1942-01")]
    pub start: MonthStamp,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Equatorial base temperature, °C.
    #[arg(long, default_value_t = 27.0)]
    pub base_equator: f64,
    /// Warming per decade, °C.
    #[arg(long, default_value_t = 0.2)]
    pub trend: f64,
    /// Standard deviation of the cell noise, °C.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Epochs between learning-rate decays.
    #[arg(long, default_value_t = 10)]
    pub step_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr_factor: f64,
    /// Epochs without validation improvement before stopping [default: 5, at most --epochs].
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub no_early_stop: bool,
    #[arg(long)]
    pub no_shuffle: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Target months used for training; defaults to everything before the validation range.
    #[arg(long)]
    pub train_range: Option<MonthRange>,
    /// Target months used for validation; defaults to the last 60 months.
    #[arg(long)]
    pub val_range: Option<MonthRange>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training series; repeat for several ensemble members.
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub case: TemporalCase,
    #[arg(long, default_value = "unetpp")]
    pub arch: Arch,
    /// Elevation CGT file; adds the elevation channel.
    #[arg(long)]
    pub elevation: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Defaults to the checkpoint's case.
    #[arg(long)]
    pub case: Option<TemporalCase>,
    #[arg(long)]
    pub elevation: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// History series the inputs are stacked from.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub elevation: Option<PathBuf>,
    /// Months to forecast, `YYYY-MM:YYYY-MM`.
    #[arg(long)]
    pub range: MonthRange,
    /// Output CGT file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScoringFlags {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub range: MonthRange,
    /// Region mask CGT files; the file stem names the region.
    #[arg(long, num_args = 1..)]
    pub mask: Vec<PathBuf>,
    /// Add the four built-in continent boxes.
    #[arg(long)]
    pub continents: bool,
    /// Climatology base range for anomaly bins; defaults to the evaluation range.
    #[arg(long)]
    pub clim_base: Option<MonthRange>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, conflicts_with = "prediction", required_unless_present = "prediction")]
    pub checkpoint: Option<PathBuf>,
    /// Stored forecast series to score instead of a checkpoint.
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    /// History for the model inputs; defaults to the truth series.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub elevation: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringFlags,
}

#[derive(Args)]
pub struct RankArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum BaselineCommand {
    /// Previous month's field as the forecast.
    Persistence(ScoringFlags),
    /// Mean of several member series as the forecast.
    Ensemble {
        #[arg(long, required = true, num_args = 1..)]
        members: Vec<PathBuf>,
        #[command(flatten)]
        scoring: ScoringFlags,
    },
}

#[derive(Args)]
pub struct HeatmapArgs {
    /// Evaluation report whose error field is drawn.
    #[arg(long, conflicts_with = "cgt", required_unless_present = "cgt")]
    pub report: Option<PathBuf>,
    /// Baseline name inside the report instead of the main system.
    #[arg(long, requires = "report")]
    pub system: Option<String>,
    /// CGT file to draw instead of a report.
    #[arg(long)]
    pub cgt: Option<PathBuf>,
    /// Month of a series file to draw.
    #[arg(long, requires = "cgt")]
    pub month: Option<MonthStamp>,
    #[arg(long, requires = "max")]
    pub min: Option<f64>,
    #[arg(long, requires = "min")]
    pub max: Option<f64>,
    /// Output PGM path.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::Rank(a) => commands::rank(a),
        Command::Baseline(b) => commands::baseline(b),
        Command::Heatmap(a) => commands::heatmap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
