use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dchi::mechanism::Mode;
use dchi::probe::Privatization;
use dchi::{Candidates, TableFormat};

mod commands;
mod output;

#[derive(Parser)]
#[command(name = "dchi", version, about = "Token privatization under metric local differential privacy")]
struct Cli {
    /// Worker threads (defaults to one per core). Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Privatize a corpus (one document per line) into JSONL.
    Privatize(PrivatizeArgs),
    /// Privacy reports written as JSON plus CSV plot data.
    #[command(subcommand)]
    Report(Report),
    /// Generate privatized masked-LM pretraining examples as JSONL.
    GenPretrain(PretrainArgs),
    /// Train and evaluate a linear probe over an (eta x mode x seed) grid.
    Probe(ProbeArgs),
}

#[derive(Subcommand)]
enum Report {
    Geometry(GeometryArgs),
    Deniability(DeniabilityArgs),
    Inversion(InversionArgs),
    Examples(ExamplesArgs),
}

#[derive(Args, Serialize)]
pub struct TableArgs {
    /// Embedding table file.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    pub format: TableFormat,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nearest-neighbor candidates: `regular` or `all`.
    #[arg(long, default_value = "regular", value_parser = parse_candidates)]
    pub candidates: Candidates,
}

#[derive(Args, Serialize)]
pub struct PrivatizeArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, value_parser = positive_f64)]
    pub eta: f64,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub max_len: usize,
}

#[derive(Args, Serialize)]
pub struct GeometryArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, required = true, value_parser = positive_f64)]
    pub eta: Vec<f64>,
    /// Neighbor ranks to average.
    #[arg(long, default_values_t = [1, 5, 10, 20])]
    pub k: Vec<usize>,
    /// Monte Carlo noise draws per eta; 0 reports the closed form.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    /// Evaluate an evenly spaced sample of this many tokens.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct DeniabilityArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, required = true, value_parser = positive_f64)]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: u32,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct InversionArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, required = true, value_parser = positive_f64)]
    pub eta: Vec<f64>,
    /// Corpus, one document per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ExamplesArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, required = true, value_parser = positive_f64)]
    pub eta: Vec<f64>,
    /// Sentence to privatize.
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: u32,
    /// Most frequent outputs kept per position.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, default_value_t = 512)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, value_parser = positive_f64)]
    pub eta: f64,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    pub mask_rate: f64,
    /// Cap on masked positions per sequence; 0 disables the cap.
    #[arg(long, default_value_t = 20)]
    pub max_predictions: usize,
    /// Privatized draws per masked position for the prob target.
    #[arg(long, default_value_t = 10)]
    pub prob_draws: u32,
    /// How unmasked context is privatized: `text` or `representation`.
    #[arg(long, default_value = "text", value_parser = parse_mode)]
    pub mode: Mode,
    /// Generation trial; a new trial redraws every perturbation.
    #[arg(long, default_value_t = 0)]
    pub trial: u64,
    #[arg(long, default_value_t = 128)]
    pub max_len: usize,
}

#[derive(Args, Serialize)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, required = true, value_parser = positive_f64)]
    pub eta: Vec<f64>,
    /// Privatization modes to train and evaluate under.
    #[arg(long = "mode", default_values = ["representation", "text"], value_parser = parse_privatization)]
    pub modes: Vec<Privatization>,
    /// Labeled training TSV (`label<TAB>text[<TAB>text]`).
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled evaluation TSV.
    #[arg(long)]
    pub eval: PathBuf,
    /// Independent runs; run `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 3)]
    pub runs: u64,
    #[arg(long, default_value_t = 40)]
    pub epochs: u32,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 128)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} is not a positive finite number"))
    }
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    s.parse().map_err(|e: dchi::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: dchi::Error| e.to_string())
}

fn parse_privatization(s: &str) -> Result<Privatization, String> {
    s.parse().map_err(|e: dchi::Error| e.to_string())
}

fn parse_candidates(s: &str) -> Result<Candidates, String> {
    match s {
        "regular" => Ok(Candidates::RegularOnly),
        "all" => Ok(Candidates::All),
        _ => Err(format!("unknown candidate set {s:?} (expected regular or all)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Privatize(a) => commands::privatize(a),
        Command::Report(Report::Geometry(a)) => commands::geometry(a),
        Command::Report(Report::Deniability(a)) => commands::deniability(a),
        Command::Report(Report::Inversion(a)) => commands::inversion(a),
        Command::Report(Report::Examples(a)) => commands::examples(a),
        Command::GenPretrain(a) => commands::gen_pretrain(a),
        Command::Probe(a) => commands::probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
