//! Command-line entry points: train, eval, predict, sweep, gradcheck, synth.
//!
//! Precedence for every setting is CLI flag > config file > built-in
//! default. Runtime failures print one JSON object to stderr and exit
//! nonzero.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::data::features::IdfTable;
use crate::data::squad::parse_dataset;
use crate::data::tokenize::tokenize;
use crate::data::{
    load_tag_file, load_vectors, prepare_dataset, synthetic, Phase, PrepStats, TokenizedExample,
    Vocab,
};
use crate::eval::{aggregate, default_grid, score_example, sweep_csv, threshold_sweep, GoldLabel};
use crate::gradcheck::run_gradcheck;
use crate::model::{
    encode_input, predict_dataset, LossTerms, ModelConfig, ModelInput, ModelParams,
};
use crate::tensor::Tensor;
use crate::train::{checkpoint, TrainConfig, TrainedModel, Trainer};

#[derive(Parser)]
#[command(
    name = "unet",
    about = "U-Net style reading comprehension: train, evaluate, and analyze",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a SQuAD-2.0-schema dataset; writes a checkpoint and a JSON-line epoch log
    Train(TrainArgs),
    /// Score a checkpoint against a dataset and print a metric report
    Eval(EvalArgs),
    /// Decode answers for a dataset and emit one JSON prediction per line
    Predict(EvalArgs),
    /// Sweep the answerability threshold over cached probabilities; emits CSV
    Sweep(SweepArgs),
    /// Finite-difference gradient check of the full model at a tiny configuration
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic SQuAD-2.0-schema dataset
    Synth(SynthArgs),
}

/// Model-shape flags shared by commands that build a fresh model.
#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// TOML config file with optional [model] and [train] sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Remove the universal node: no shared no-answer slot; negative
    /// examples train the pointer toward plausible spans
    #[arg(long)]
    no_universal_node: bool,
    /// Keep the node on the passage side only instead of sharing it with
    /// the question during attention
    #[arg(long)]
    no_share_node: bool,
    /// Encode question and passage as separate sequences (weights stay
    /// shared)
    #[arg(long)]
    separate_encoders: bool,
    /// Drop the auxiliary plausible-span pointer head
    #[arg(long)]
    no_plausible_head: bool,
    /// Drop the answer-verifier head; unanswerability falls back to
    /// pointer mass on the no-answer slot
    #[arg(long)]
    no_verifier: bool,
    /// Replace the three bi-attention levels with one self-attention over
    /// the stacked encodings
    #[arg(long)]
    self_attn_only: bool,
    /// Loss terms to train, comma-separated subset of A,NA,AV
    #[arg(long)]
    loss_terms: Option<String>,
    /// Dropout rate override
    #[arg(long)]
    dropout: Option<f64>,
    /// Maximum decoded span length override
    #[arg(long)]
    max_span_len: Option<usize>,
    /// Detach pointer distributions before the verifier summaries
    #[arg(long)]
    detach_verifier_features: bool,
    /// Multiply the term-frequency feature by corpus IDF
    #[arg(long)]
    use_tf_idf: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (SQuAD-2.0 JSON)
    #[arg(long)]
    data: PathBuf,
    /// Optional POS/NER/lemma side file
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Optional pretrained word vectors (token v1 .. vd per line)
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Where to write the trained checkpoint
    #[arg(long, default_value = "unet.ckpt")]
    checkpoint: PathBuf,
    /// Also append epoch JSON lines to this file
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Clip gradients to this global L2 norm
    #[arg(long)]
    grad_clip: Option<f64>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset to score (SQuAD-2.0 JSON)
    #[arg(long)]
    data: PathBuf,
    /// Optional POS/NER/lemma side file
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Answerability threshold t: predict unanswerable iff p > 1 - t
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Write output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Comma-separated thresholds; default 0.0 to 1.0 in steps of 0.05
    #[arg(long)]
    grid: Option<String>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Maximum allowed relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of examples
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Vocabulary size
    #[arg(long, default_value_t = 60)]
    vocab: usize,
    /// Fraction of answerable questions
    #[arg(long, default_value_t = 0.5)]
    answerable: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Msg(String),
    #[error(transparent)]
    Dataset(#[from] crate::data::squad::DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] crate::train::CheckpointError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig { model: ModelConfig::default(), train: TrainConfig::default() }),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| CliError::Msg(format!("{}: {e}", p.display())))
        }
    }
}

fn apply_model_flags(cfg: &mut ModelConfig, f: &ModelFlags) -> Result<(), CliError> {
    let ab = &mut cfg.ablation;
    ab.no_universal_node |= f.no_universal_node;
    ab.no_share_node |= f.no_share_node;
    ab.separate_encoders |= f.separate_encoders;
    ab.no_plausible_head |= f.no_plausible_head;
    ab.no_verifier |= f.no_verifier;
    ab.self_attn_only |= f.self_attn_only;
    if let Some(spec) = &f.loss_terms {
        cfg.loss_terms = LossTerms::parse(spec).map_err(CliError::Msg)?;
    } else if f.no_verifier {
        cfg.loss_terms.verifier = false;
    }
    if let Some(d) = f.dropout {
        cfg.dropout = d;
    }
    if let Some(l) = f.max_span_len {
        cfg.max_span_len = l;
    }
    cfg.detach_verifier_features |= f.detach_verifier_features;
    cfg.use_tf_idf |= f.use_tf_idf;
    Ok(())
}

fn load_examples(
    data: &Path,
    tags: Option<&Path>,
    use_tf_idf: bool,
    phase: Phase,
) -> Result<(Vec<TokenizedExample>, PrepStats), CliError> {
    let raws = parse_dataset(data)?;
    let tag_map = tags.map(load_tag_file).transpose().map_err(CliError::Msg)?;
    let idf = if use_tf_idf {
        Some(IdfTable::build(raws.iter().map(|r| {
            tokenize(&r.passage_text)
                .into_iter()
                .map(|t| &r.passage_text[t.lo..t.hi])
                .collect::<Vec<&str>>()
        })))
    } else {
        None
    };
    Ok(prepare_dataset(&raws, tag_map.as_ref(), idf.as_ref(), phase))
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            std::fs::write(p, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let fc = load_file_config(args.model.config.as_deref())?;
    let mut mcfg = fc.model;
    let mut tcfg = fc.train;
    apply_model_flags(&mut mcfg, &args.model)?;
    if let Some(s) = args.seed {
        tcfg.seed = s;
    }
    if let Some(e) = args.epochs {
        tcfg.epochs = e;
    }
    if let Some(b) = args.batch_size {
        tcfg.batch_size = b;
    }
    if let Some(lr) = args.lr {
        tcfg.lr = lr;
    }
    if let Some(c) = args.grad_clip {
        tcfg.grad_clip = Some(c);
    }

    let (examples, stats) =
        load_examples(&args.data, args.tags.as_deref(), mcfg.use_tf_idf, Phase::Train)?;
    if examples.is_empty() {
        return Err(CliError::Msg(format!(
            "no trainable examples in {} ({} omitted by length)",
            args.data.display(),
            stats.omitted_length
        )));
    }

    let (vocab, pos_vocab, ner_vocab) = crate::data::build_vocabularies(&examples);
    mcfg.vocab_size = vocab.len();
    mcfg.pos_vocab_size = pos_vocab.len();
    mcfg.ner_vocab_size = ner_vocab.len();
    mcfg.validate().map_err(CliError::Msg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut params: ModelParams<Tensor<f32>> = ModelParams::init(&mcfg, &mut rng);
    if let Some(vpath) = &args.vectors {
        let vectors = load_vectors(vpath, mcfg.word_dim).map_err(CliError::Msg)?;
        let loaded = seed_word_embeddings(&mut params, &vocab, &vectors, mcfg.word_dim);
        eprintln!("loaded vectors for {loaded} of {} vocabulary tokens", vocab.len());
    }

    let inputs: Vec<ModelInput> =
        examples.iter().map(|ex| encode_input(ex, &vocab, &pos_vocab, &ner_vocab)).collect();

    let model = TrainedModel { config: mcfg, vocab, pos_vocab, ner_vocab, params };
    let mut trainer = Trainer::new(model, tcfg);
    let mut log_file = match &args.log {
        Some(p) => Some(std::fs::File::create(p)?),
        None => None,
    };
    trainer.run(&inputs, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        println!("{line}");
        if let Some(f) = &mut log_file {
            let _ = writeln!(f, "{line}");
        }
        true
    })?;
    checkpoint::save(&trainer.model, &args.checkpoint)?;
    eprintln!("checkpoint written to {}", args.checkpoint.display());
    Ok(())
}

/// Copies pretrained vectors into matching vocabulary rows; returns how
/// many rows were seeded.
pub fn seed_word_embeddings(
    params: &mut ModelParams<Tensor<f32>>,
    vocab: &Vocab,
    vectors: &HashMap<String, Vec<f64>>,
    dim: usize,
) -> usize {
    let mut loaded = 0;
    let table = &mut params.word_emb;
    for (row, token) in vocab.tokens().iter().enumerate() {
        if let Some(v) = vectors.get(token) {
            let data = table.data_mut();
            for (j, x) in v.iter().enumerate().take(dim) {
                data[row * dim + j] = *x as f32;
            }
            loaded += 1;
        }
    }
    loaded
}

struct LoadedPredictions {
    raws: Vec<crate::model::RawPrediction>,
    golds: Vec<GoldLabel>,
}

fn run_inference(
    ckpt: &Path,
    data: &Path,
    tags: Option<&Path>,
) -> Result<LoadedPredictions, CliError> {
    let model = checkpoint::load(ckpt)?;
    let (examples, _stats) = load_examples(data, tags, model.config.use_tf_idf, Phase::Test)?;
    if examples.is_empty() {
        return Err(CliError::Msg(format!("no examples in {}", data.display())));
    }
    let golds: Vec<GoldLabel> = examples.iter().map(GoldLabel::from_example).collect();
    let pairs: Vec<(TokenizedExample, ModelInput)> = examples
        .into_iter()
        .map(|ex| {
            let input = encode_input(&ex, &model.vocab, &model.pos_vocab, &model.ner_vocab);
            (ex, input)
        })
        .collect();
    let raws = predict_dataset(&model.params, &model.config, &pairs, 32);
    Ok(LoadedPredictions { raws, golds })
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let p = run_inference(&args.checkpoint, &args.data, args.tags.as_deref())?;
    let scores: Vec<_> = p
        .raws
        .iter()
        .zip(&p.golds)
        .map(|(raw, gold)| {
            let rec = raw.decide(args.threshold);
            score_example(&rec.answer_text, rec.predicted_unanswerable, gold)
        })
        .collect();
    let report = aggregate(&scores)?;
    let json = serde_json::to_string_pretty(&report).expect("report serialize");
    write_or_print(args.out.as_deref(), &json)
}

fn cmd_predict(args: &EvalArgs) -> Result<(), CliError> {
    let p = run_inference(&args.checkpoint, &args.data, args.tags.as_deref())?;
    let mut out = String::new();
    for raw in &p.raws {
        let rec = raw.decide(args.threshold);
        out.push_str(&serde_json::to_string(&rec).expect("record serialize"));
        out.push('\n');
    }
    write_or_print(args.out.as_deref(), &out)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|s| {
            let t: f64 = s
                .trim()
                .parse()
                .map_err(|e| CliError::Msg(format!("bad grid value {s:?}: {e}")))?;
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Msg(format!("grid value {t} outside [0, 1]")));
            }
            Ok(t)
        })
        .collect()
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let grid = match &args.grid {
        Some(spec) => parse_grid(spec)?,
        None => default_grid(),
    };
    if grid.is_empty() {
        return Err(CliError::Msg("empty threshold grid".into()));
    }
    let p = run_inference(&args.checkpoint, &args.data, args.tags.as_deref())?;
    let inputs: Vec<_> = p
        .raws
        .iter()
        .zip(p.golds)
        .map(|(raw, gold)| raw.sweep_input(gold))
        .collect();
    let rows = threshold_sweep(&inputs, &grid);
    write_or_print(args.out.as_deref(), &sweep_csv(&rows))
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let cfg = ModelConfig::tiny();
    let report = run_gradcheck(&cfg, args.seed, args.step, args.tolerance);
    for e in &report.entries {
        println!(
            "{:<28} max_rel_err {:>10.3e}  grad_scale {:>10.3e}{}",
            e.name,
            e.max_rel_err,
            e.max_abs_analytic,
            if e.nonzero { "" } else { "  ZERO GRADIENT" }
        );
    }
    println!(
        "gradcheck: {} (max rel err {:.3e}, tolerance {:.1e}, {} tensors, {})",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_rel_err,
        report.tolerance,
        report.entries.len(),
        if report.all_nonzero { "all gradients nonzero" } else { "zero gradients present" },
    );
    if !report.passed {
        return Err(CliError::Msg(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_err, report.tolerance
        )));
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.answerable) {
        return Err(CliError::Msg(format!(
            "answerable fraction {} outside [0, 1]",
            args.answerable
        )));
    }
    if args.n == 0 || args.vocab < 6 {
        return Err(CliError::Msg("need n >= 1 and vocab >= 6".into()));
    }
    let spec = synthetic::SyntheticSpec::new(args.n, args.vocab, args.answerable, args.seed);
    let corpus = synthetic::generate_synthetic_corpus(&spec);
    crate::data::squad::write_dataset(&args.out, &corpus)?;
    eprintln!("wrote {} examples to {}", corpus.len(), args.out.display());
    Ok(())
}

/// Parses `args` (including argv[0]) and runs the command. Returns the
/// process exit code; runtime errors are printed to stderr as one JSON
/// object.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.render().to_string().trim_end() })
            );
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            1
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
