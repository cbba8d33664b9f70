use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use specdec_core::bench::{
    emit_report, format_summary, load_scenario_file, run_scenario, BenchError, ReportFormat,
};
use specdec_core::model::{load_model, save_transformer};
use specdec_core::{
    detokenize, generate, tokenize, AnyModel, BigramModel, DecodeMode, GenerationConfig, ModelRef,
    TinyTransformer, TinyTransformerConfig,
};

const EXIT_USAGE: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_GENERATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "specdec",
    version,
    about = "Speculative and autoregressive decoding on tiny byte-level models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize a tiny transformer and write it as a TTWF weight file.
    InitModel(InitModel),
    /// Count byte bigrams in a corpus and save the smoothed model as JSON.
    TrainBigram(TrainBigram),
    /// Generate a continuation of a prompt.
    Generate(Generate),
    /// Run a scenario file in both modes and write a report.
    Bench(Bench),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Target,
    Draft,
}

#[derive(Args)]
struct InitModel {
    /// Base configuration; the size flags below override single fields.
    #[arg(long, value_enum, default_value = "target")]
    preset: Preset,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_context: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainBigram {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    smoothing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Generate {
    /// Weight file, saved bigram, `tiny:<file>` or `bigram:<corpus>`.
    #[arg(long)]
    target: ModelRef,
    #[arg(long, required_if_eq("mode", "speculative"))]
    draft: Option<ModelRef>,
    #[arg(long, default_value = "autoregressive", value_parser = ["autoregressive", "speculative"])]
    mode: String,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    max_tokens: u64,
    #[arg(long, default_value_t = 0.8, value_parser = non_negative, allow_hyphen_values = true)]
    temperature: f64,
    #[arg(long, default_value_t = 1.0, value_parser = unit_interval, allow_hyphen_values = true)]
    top_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    prompt: OsString,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    scenario_file: PathBuf,
    #[arg(long, default_value = "csv", value_parser = report_format)]
    format: ReportFormat,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err("must be >= 0".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err("must be > 0".into())
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let x = parse_f64(s)?;
    if x > 0.0 && x <= 1.0 {
        Ok(x)
    } else {
        Err("must be in (0, 1]".into())
    }
}

fn report_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: BenchError| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, err: impl std::fmt::Display) -> Failure {
    Failure {
        code,
        message: err.to_string(),
    }
}

#[cfg(unix)]
fn os_bytes(s: &OsString) -> Vec<u8> {
    use std::os::unix::ffi::OsStrExt;
    s.as_bytes().to_vec()
}

#[cfg(not(unix))]
fn os_bytes(s: &OsString) -> Vec<u8> {
    s.to_string_lossy().into_owned().into_bytes()
}

/// Keeps the `Text =` line on one line: control characters and backslashes
/// are escaped, bytes that are not valid UTF-8 become `\xNN`.
fn escape_text(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for chunk in bytes.utf8_chunks() {
        for c in chunk.valid().chars() {
            if c == '\\' || c.is_control() {
                out.extend(c.escape_default());
            } else {
                out.push(c);
            }
        }
        for b in chunk.invalid() {
            let _ = write!(out, "\\x{b:02x}");
        }
    }
    out
}

fn init_model(args: InitModel) -> Result<(), Failure> {
    let base = match args.preset {
        Preset::Target => TinyTransformerConfig::default_target(),
        Preset::Draft => TinyTransformerConfig::default_draft(),
    };
    let config = TinyTransformerConfig::new(
        args.d_model.unwrap_or(base.d_model),
        args.n_layers.unwrap_or(base.n_layers),
        args.n_heads.unwrap_or(base.n_heads),
        args.d_ff.unwrap_or(base.d_ff),
        args.max_context.unwrap_or(base.max_context),
    );
    let model = TinyTransformer::init(config, args.seed).map_err(|e| fail(EXIT_USAGE, e))?;
    save_transformer(&model, &args.out).map_err(|e| fail(EXIT_MODEL, e))?;
    eprintln!("parameters = {}", model.config().parameter_count());
    Ok(())
}

fn train_bigram(args: TrainBigram) -> Result<(), Failure> {
    let corpus = std::fs::read(&args.corpus)
        .map_err(|e| fail(EXIT_MODEL, format!("{}: {e}", args.corpus.display())))?;
    let model = BigramModel::train(&corpus, args.smoothing).map_err(|e| fail(EXIT_USAGE, e))?;
    model.save(&args.out).map_err(|e| fail(EXIT_MODEL, e))
}

fn run_generate(args: Generate) -> Result<(), Failure> {
    let mode: DecodeMode = args.mode.parse().map_err(|e| fail(EXIT_USAGE, e))?;
    let cfg = GenerationConfig {
        mode,
        k: args.k as usize,
        max_new_tokens: args.max_tokens as usize,
        temperature: args.temperature,
        top_p: args.top_p,
        seed: args.seed,
    };
    let target = load_model(&args.target).map_err(|e| fail(EXIT_MODEL, e))?;
    let draft: Option<AnyModel> = match (mode, &args.draft) {
        (DecodeMode::Speculative, Some(d)) => Some(load_model(d).map_err(|e| fail(EXIT_MODEL, e))?),
        _ => None,
    };

    let prompt = os_bytes(&args.prompt);
    let out = generate(&target, draft.as_ref(), &tokenize(&prompt), &cfg)
        .map_err(|e| fail(EXIT_GENERATION, e))?;

    let mut text = prompt;
    text.extend(detokenize(&out.tokens));
    println!("{}", mode.banner());
    println!("Time = {:.2}s", out.stats.wall_time_total.as_secs_f64());
    println!("Text = {}", escape_text(&text));
    for line in out.stats.lines() {
        eprintln!("{line}");
    }
    Ok(())
}

fn run_bench(args: Bench) -> Result<(), Failure> {
    let code = |e: &BenchError| match e {
        BenchError::Generation { .. } => EXIT_GENERATION,
        BenchError::UnknownFormat(_) => EXIT_USAGE,
        _ => EXIT_MODEL,
    };
    let scenarios = load_scenario_file(&args.scenario_file).map_err(|e| fail(code(&e), e))?;
    let mut records = Vec::new();
    for scenario in &scenarios {
        records.extend(run_scenario(scenario).map_err(|e| fail(code(&e), e))?);
    }
    let report = emit_report(&records, args.format);
    match &args.out {
        Some(path) => std::fs::write(path, report)
            .map_err(|e| fail(EXIT_MODEL, format!("{}: {e}", path.display())))?,
        None => print!("{report}"),
    }
    eprint!("{}", format_summary(&records));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::InitModel(a) => init_model(a),
        Command::TrainBigram(a) => train_bigram(a),
        Command::Generate(a) => run_generate(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
