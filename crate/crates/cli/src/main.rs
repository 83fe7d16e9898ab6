//! `kw2sent`: data preparation, tagger and model training, generation,
//! evaluation and trace export.

mod commands;
mod error;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "kw2sent", version, about = "Keyword-to-sentence generation with POS templates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a JSONL dataset, a word vocabulary and statistics from sentences.
    Prepare(PrepareArgs),
    /// Train the averaged perceptron tagger on a word_TAG corpus.
    TagTrain(TagTrainArgs),
    /// Train a generator and write checkpoints and the loss history.
    Train(TrainArgs),
    /// Generate one sentence.
    Generate(GenerateArgs),
    /// Interactive generation loop.
    Repl(ReplArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Export per-step gate and attention traces.
    Inspect(InspectArgs),
    /// Dataset statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "pretagged", "toy"])))]
pub struct PrepareArgs {
    /// Raw text, one sentence per line (needs --tagger).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Pre-tagged text, one sentence per line as word_TAG tokens.
    #[arg(long)]
    pub pretagged: Option<PathBuf>,
    /// Sample this many sentences from the bundled toy grammar.
    #[arg(long)]
    pub toy: Option<usize>,
    /// Tagger model file, or "lexicon" for the toy grammar's dictionary.
    /// Tags raw input and every keyword on its own; defaults to "lexicon"
    /// for pre-tagged and toy input.
    #[arg(long)]
    pub tagger: Option<String>,
    /// Output dataset (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Existing word vocabulary to report coverage against instead of building one.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Where to write the word vocabulary (default: <out>.vocab).
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    /// Where to write statistics (default: <out>.stats.json).
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    /// Drop words seen fewer times than this from the vocabulary.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args)]
pub struct TagTrainArgs {
    /// Training corpus of word_TAG lines.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Optional held-out corpus for an accuracy report.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset (JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Dev dataset for periodic evaluation.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Word vocabulary file; built from --data when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Starting preset: full or desk.
    #[arg(long, default_value = "full")]
    pub preset: String,
    /// key = value configuration file applied over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Single overrides, e.g. --set epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train the keywords-only baseline.
    #[arg(long)]
    pub no_template: bool,
    /// Tagger used for dev POSMatch.
    #[arg(long, default_value = input::LEXICON)]
    pub tagger: String,
    /// Output directory for final.ckpt, best.ckpt, last.ckpt, history.csv and config.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args)]
#[command(group(ArgGroup::new("shape").args(["template", "exemplar"])))]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated keywords.
    #[arg(long)]
    pub keywords: String,
    /// Space-separated fine-grained tags, e.g. "DT NN VBD .".
    #[arg(long)]
    pub template: Option<String>,
    /// Sentence whose tag sequence becomes the template.
    #[arg(long)]
    pub exemplar: Option<String>,
    /// Universal keyword tags, overriding the tagger.
    #[arg(long)]
    pub keyword_tags: Option<String>,
    /// Beam width; 1 is greedy decoding.
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long, default_value = input::LEXICON)]
    pub tagger: String,
    /// Write the decode trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Print the gate value next to each output token.
    #[arg(long)]
    pub show_lambda: bool,
}

#[derive(Args)]
pub struct ReplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long, default_value = input::LEXICON)]
    pub tagger: String,
    #[arg(long)]
    pub show_lambda: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// exact or similar.
    #[arg(long, default_value = "exact")]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    /// Also evaluate with every keyword list reversed and report the deltas.
    #[arg(long)]
    pub reverse: bool,
    #[arg(long, default_value = input::LEXICON)]
    pub tagger: String,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-example JSON lines.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "exact")]
    pub scenario: String,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long, default_value = input::LEXICON)]
    pub tagger: String,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::TagTrain(a) => commands::tag_train(a),
        Command::Train(a) => commands::train(a),
        Command::Generate(a) => commands::generate(a),
        Command::Repl(a) => commands::repl(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Stats(a) => commands::stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
