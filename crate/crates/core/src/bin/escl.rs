use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use escl::checkpoint::Checkpoint;
use escl::encoder::TokenSequence;
use escl::evaluation::{
    build_vocab, evaluate_sts, format_sts, generate_synthetic_corpus, parse_corpus, parse_sts,
    run_ablation, tokenize, tokenize_pairs, AblationGrid, StsPair, SyntheticSpec, Vocabulary,
};
use escl::gradsuite::run_gradient_suite;
use escl::losses::EquivariantLoss;
use escl::numerics::GRAD_TOLERANCE;
use escl::training::{TrainConfig, Trainer};
use escl::{EsclError, Result};

/// Equivariant self-contrastive sentence embeddings: data, training, evaluation.
///
/// Machine-readable output is JSON lines on stdout; logs go to stderr
/// (filter with RUST_LOG). Exit codes: 0 success, 1 usage or config error,
/// 2 data error, 3 numeric failure.
#[derive(Parser)]
#[command(name = "escl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (corpus.txt) and graded STS pairs (sts.tsv).
    GenData(GenDataArgs),
    /// Train an encoder; writes checkpoint, traces and the resolved config.
    Train(TrainArgs),
    /// Score a checkpoint on an STS file and print rho as JSON.
    Eval(EvalArgs),
    /// Compare every analytic gradient against central differences.
    Gradcheck(GradcheckArgs),
    /// Train one model per (r_high, variant, seed) cell and tabulate rho.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Training sentences.
    #[arg(long, default_value_t = 512)]
    n_train: usize,
    /// Evaluation pairs.
    #[arg(long, default_value_t = 256)]
    n_pairs: usize,
    /// Vocabulary size including the two reserved ids.
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
    /// Overwrite existing files.
    #[arg(long)]
    force: bool,
}

/// Config keys settable from the command line; these win over --config.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_name = "N")]
    batch_size: Option<String>,
    #[arg(long, value_name = "N")]
    steps: Option<String>,
    #[arg(long, value_name = "LR")]
    learning_rate: Option<String>,
    /// adam | sgd
    #[arg(long, value_name = "KIND")]
    optimizer: Option<String>,
    #[arg(long, value_name = "B1")]
    adam_beta1: Option<String>,
    #[arg(long, value_name = "B2")]
    adam_beta2: Option<String>,
    #[arg(long, value_name = "EPS")]
    adam_eps: Option<String>,
    /// Dropout rate of the two positive views.
    #[arg(long, value_name = "RATE")]
    r_low: Option<String>,
    /// Dropout rate of the negative view.
    #[arg(long, value_name = "RATE")]
    r_high: Option<String>,
    #[arg(long = "loss.temperature", value_name = "TAU")]
    loss_temperature: Option<String>,
    /// Weight of the equivariant term; 0 gives plain InfoNCE.
    #[arg(long = "loss.lambda", value_name = "LAMBDA")]
    loss_lambda: Option<String>,
    /// rd | cossim | none
    #[arg(long = "loss.variant", value_name = "VARIANT")]
    loss_variant: Option<String>,
    #[arg(long, value_name = "SEED")]
    seed: Option<String>,
    /// Evaluate every N steps (0: only at the end).
    #[arg(long, value_name = "N")]
    eval_every: Option<String>,
    #[arg(long, value_name = "PATH")]
    checkpoint_path: Option<String>,
    #[arg(long, value_name = "D")]
    embed_dim: Option<String>,
    #[arg(long, value_name = "D")]
    output_dim: Option<String>,
    /// Keep the best evaluated snapshot instead of the last one.
    #[arg(long, value_name = "BOOL")]
    select_best: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("batch_size", &self.batch_size),
            ("steps", &self.steps),
            ("learning_rate", &self.learning_rate),
            ("optimizer", &self.optimizer),
            ("adam_beta1", &self.adam_beta1),
            ("adam_beta2", &self.adam_beta2),
            ("adam_eps", &self.adam_eps),
            ("r_low", &self.r_low),
            ("r_high", &self.r_high),
            ("loss.temperature", &self.loss_temperature),
            ("loss.lambda", &self.loss_lambda),
            ("loss.variant", &self.loss_variant),
            ("seed", &self.seed),
            ("eval_every", &self.eval_every),
            ("checkpoint_path", &self.checkpoint_path),
            ("embed_dim", &self.embed_dim),
            ("output_dim", &self.output_dim),
            ("select_best", &self.select_best),
        ]
    }
}

#[derive(Args)]
struct TrainArgs {
    /// TOML file of config keys; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Evaluation pairs (sentence_a <TAB> sentence_b <TAB> score).
    #[arg(long)]
    sts: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    sts: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per case.
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    sts: PathBuf,
    /// Comma-separated r_high values.
    #[arg(long, value_delimiter = ',', default_value = "0.35,0.40,0.45,0.50")]
    rates: Vec<f64>,
    /// Comma-separated equivariant variants.
    #[arg(long, value_delimiter = ',', default_value = "rd,cossim")]
    variants: Vec<EquivariantLoss>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Directory for ablation.json, ablation.txt and config.toml.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| EsclError::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| EsclError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| EsclError::io(dir, e))
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn resolve_config(file: Option<&Path>, overrides: &Overrides) -> Result<TrainConfig> {
    let mut cfg = match file {
        Some(path) => TrainConfig::from_toml_str(&read(path)?)
            .map_err(|e| EsclError::Config(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    for (key, value) in overrides.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_corpus(path: &Path) -> Result<(Vocabulary, Vec<TokenSequence>)> {
    let (lines, skipped) = parse_corpus(&read(path)?);
    if skipped > 0 {
        warn!("{}: skipped {skipped} empty lines", path.display());
    }
    if lines.is_empty() {
        return Err(EsclError::Input(format!(
            "{}: no sentences",
            path.display()
        )));
    }
    let (vocab, _) = build_vocab(lines.iter().map(String::as_str))?;
    let corpus = lines
        .iter()
        .map(|l| tokenize(l, &vocab))
        .collect::<Result<Vec<_>>>()?;
    info!(
        "{}: {} sentences, vocabulary {}",
        path.display(),
        corpus.len(),
        vocab.len()
    );
    Ok((vocab, corpus))
}

fn load_sts(path: &Path, vocab: &Vocabulary) -> Result<Vec<StsPair>> {
    let raw = parse_sts(&read(path)?, &path.display().to_string())?;
    tokenize_pairs(&raw, vocab)
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let data = generate_synthetic_corpus(SyntheticSpec {
        seed: args.seed,
        n_train: args.n_train,
        n_pairs: args.n_pairs,
        vocab_size: args.vocab_size,
    })?;
    create_dir(&args.out_dir)?;
    let corpus_path = args.out_dir.join("corpus.txt");
    let sts_path = args.out_dir.join("sts.tsv");
    if !args.force {
        for p in [&corpus_path, &sts_path] {
            if p.exists() {
                return Err(EsclError::Config(format!(
                    "{} exists; pass --force to overwrite",
                    p.display()
                )));
            }
        }
    }
    let mut corpus = data.corpus.join("\n");
    corpus.push('\n');
    write(&corpus_path, &corpus)?;
    write(&sts_path, &format_sts(&data.pairs))?;
    emit(json!({
        "seed": args.seed,
        "corpus": corpus_path,
        "sts": sts_path,
        "n_train": data.corpus.len(),
        "n_pairs": data.pairs.len(),
        "vocab_size": args.vocab_size,
    }));
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    create_dir(&args.out_dir)?;
    if cfg.checkpoint_path.is_none() {
        cfg.checkpoint_path = Some(args.out_dir.join("checkpoint.bin"));
    }
    emit(
        json!({ "event": "config", "seed": cfg.seed, "config": cfg, "corpus": args.corpus, "sts": args.sts }),
    );
    write(&args.out_dir.join("config.toml"), &cfg.to_toml_string())?;

    let (vocab, corpus) = load_corpus(&args.corpus)?;
    let pairs = args
        .sts
        .as_deref()
        .map(|p| load_sts(p, &vocab))
        .transpose()?;
    let mut trainer = Trainer::new(cfg.clone(), vocab.len(), &corpus)?;
    let outcome = trainer.run(&vocab, pairs.as_deref())?;

    outcome
        .trace
        .write_steps(&args.out_dir.join("trace.jsonl"))?;
    outcome
        .trace
        .write_evals(&args.out_dir.join("evals.jsonl"))?;
    let last = outcome.trace.steps.last().cloned();
    if let (Some(first), Some(last)) = (outcome.trace.steps.first(), &last) {
        info!(
            "loss {:.4} -> {:.4}, gap dist_neg - dist_pos {:.4} -> {:.4}",
            first.total,
            last.total,
            first.gap(),
            last.gap()
        );
    }
    emit(json!({
        "event": "result",
        "seed": cfg.seed,
        "rho": outcome.rho,
        "selected_step": outcome.selected_step,
        "final_step": last,
        "checkpoint": cfg.checkpoint_path,
    }));
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let pairs = load_sts(&args.sts, &ckpt.vocab)?;
    let result = evaluate_sts(&ckpt.params, &pairs, &args.sts.display().to_string())?;
    emit(serde_json::to_value(&result).expect("serializable"));
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    if args.trials == 0 {
        return Err(EsclError::Config("--trials must be at least 1".into()));
    }
    let cases = run_gradient_suite(args.trials, args.seed)?;
    let mut failed = Vec::new();
    for c in &cases {
        let passed = c.max_rel_error < GRAD_TOLERANCE;
        if !passed {
            failed.push(format!("{} (trial {})", c.name, c.trial));
        }
        let mut v = serde_json::to_value(c).expect("serializable");
        v["passed"] = json!(passed);
        emit(v);
    }
    let worst = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    info!("{} checks, worst relative error {worst:.3e}", cases.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(EsclError::Numeric(format!(
            "relative error >= {GRAD_TOLERANCE:e} in {}",
            failed.join(", ")
        )))
    }
}

fn ablate(args: AblateArgs) -> Result<()> {
    let cfg = resolve_config(args.config.as_deref(), &args.overrides)?;
    let grid = AblationGrid {
        r_high_values: args.rates,
        variants: args.variants,
        seeds: args.seeds,
    };
    emit(
        json!({ "event": "config", "config": cfg, "grid": grid, "corpus": args.corpus, "sts": args.sts }),
    );
    create_dir(&args.out_dir)?;
    write(&args.out_dir.join("config.toml"), &cfg.to_toml_string())?;

    let (vocab, corpus) = load_corpus(&args.corpus)?;
    let pairs = load_sts(&args.sts, &vocab)?;
    info!("training {} cells", grid.cells().len());
    let report = run_ablation(&cfg, &grid, &vocab, &corpus, &pairs)?;
    write(&args.out_dir.join("ablation.json"), &report.to_json())?;
    let table = report.to_table();
    write(&args.out_dir.join("ablation.txt"), &table)?;
    eprint!("{table}");
    for row in &report.rows {
        emit(serde_json::to_value(row).expect("serializable"));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Ablate(a) => ablate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
