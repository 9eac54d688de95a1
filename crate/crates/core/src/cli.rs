//! The `bitext-filter` command line.
//!
//! Every subcommand writes its artifacts through `.partial` files that are
//! renamed into place only on success, and echoes the resolved arguments to
//! `<output>.conf`. Exit codes: 0 success, 1 data or structural error,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::corpus::{read_mono, reservoir_sample, sample, CorpusStream, Provenance, ReadOptions, Sentence};
use crate::error::{Error, Result};
use crate::external::ExternalScores;
use crate::lexical::{Direction, LexicalTranslationModel, Model1Config};
use crate::ngram::{NgramConfig, NgramLanguageModel};
use crate::noise::{
    evaluate_filter, evaluate_filter_at, format_label, inject_noise, parse_labels, NoiseSpec, LABEL_HEADER,
};
use crate::pipeline::{
    open_pair_writer, resolve_workers, run_pipeline, with_suffix, CorpusInput, Outputs, PipelineConfig,
};
use crate::scoring::{
    write_record, ConditionalScorer, CorpusScorer, MonolingualScorer, ScoreReader, ScoreRecord, SCORE_HEADER,
};
use crate::selection::{
    check_weight_alignment, emit_weights, extract_selected, select_by_threshold, select_top_n, SortOptions,
};
use crate::stats::summarize;

#[derive(Parser, Debug)]
#[command(
    name = "bitext-filter",
    version,
    about = "Score, select and weight noisy parallel corpora"
)]
struct Cli {
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an add-k n-gram language model on one sentence per line.
    TrainLm(TrainLmArgs),
    /// Train an IBM Model 1 lexical translation model.
    TrainTm(TrainTmArgs),
    /// Score every pair of a corpus.
    Score(ScoreArgs),
    /// Select the best pairs from a score file and extract them.
    Select(SelectArgs),
    /// Write one instance weight per corpus line.
    Weights(WeightsArgs),
    /// Corrupt a clean corpus and write labels.
    Corrupt(CorruptArgs),
    /// Compare scores with corruption labels.
    Evaluate(EvaluateArgs),
    /// Summarize a score file.
    Stats(StatsArgs),
    /// Run train, score, select and weights from one TOML config.
    Pipeline(PipelineArgs),
}

/// A parallel corpus given either as a two-column TSV or as two files.
#[derive(Args, Debug, Serialize)]
struct CorpusArgs {
    /// Two-column TSV corpus.
    #[arg(long = "in", value_name = "TSV", conflicts_with_all = ["in_src", "in_tgt"], required_unless_present_all = ["in_src", "in_tgt"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "in_tgt")]
    in_src: Option<PathBuf>,
    #[arg(long, requires = "in_src")]
    in_tgt: Option<PathBuf>,
    #[arg(long)]
    lowercase: bool,
}

impl CorpusArgs {
    fn corpus_input(&self) -> CorpusInput {
        match (&self.input, &self.in_src, &self.in_tgt) {
            (Some(tsv), _, _) => CorpusInput::Tsv(tsv.clone()),
            (None, Some(s), Some(t)) => CorpusInput::Twin([s.clone(), t.clone()]),
            _ => unreachable!("clap enforces one corpus form"),
        }
    }

    fn open(&self, provenance: Provenance) -> Result<CorpusStream> {
        self.corpus_input().open(ReadOptions {
            lowercase: self.lowercase,
            provenance,
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainLmArgs {
    /// Target-language text, one sentence per line.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0.1)]
    add_k: f64,
    #[arg(long, default_value_t = 2)]
    min_count: u64,
    /// Train on a seeded random sample of at most this many sentences.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    lowercase: bool,
}

#[derive(Args, Debug, Serialize)]
struct TrainTmArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    /// fwd models t(tgt|src), rev models t(src|tgt).
    #[arg(long, default_value = "fwd")]
    direction: Direction,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    /// Whether the given side gets an empty NULL word.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    null: bool,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "fwd_external")]
    fwd_model: Option<PathBuf>,
    #[arg(long, required_unless_present = "rev_external")]
    rev_model: Option<PathBuf>,
    #[arg(long, required_unless_present = "in_external")]
    in_lm: Option<PathBuf>,
    #[arg(long, required_unless_present = "out_external")]
    out_lm: Option<PathBuf>,
    /// Precomputed `id<TAB>H(tgt|src)` file used instead of --fwd-model.
    #[arg(long, conflicts_with = "fwd_model")]
    fwd_external: Option<PathBuf>,
    #[arg(long, conflicts_with = "rev_model")]
    rev_external: Option<PathBuf>,
    #[arg(long, conflicts_with = "in_lm")]
    in_external: Option<PathBuf>,
    #[arg(long, conflicts_with = "out_lm")]
    out_external: Option<PathBuf>,
    /// Treat every pair of the input as trusted (adequacy fixed at 1).
    #[arg(long)]
    trusted: bool,
    #[arg(long, default_value_t = crate::corpus::DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    /// 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug, Serialize)]
struct SelectArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, required_unless_present = "threshold", conflicts_with = "threshold")]
    top_n: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Writes `<prefix>.src`/`<prefix>.tgt` (or `<prefix>.tsv`) and `<prefix>.ids`.
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long, default_value_t = 4 << 30)]
    memory_budget: usize,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug, Serialize)]
struct WeightsArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Corpus TSV to check the weight file against line by line.
    #[arg(long = "in", value_name = "TSV", conflicts_with_all = ["in_src", "in_tgt"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "in_tgt")]
    in_src: Option<PathBuf>,
    #[arg(long, requires = "in_src")]
    in_tgt: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CorruptArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 0.2)]
    rate: f64,
    /// `uniform` or a list like `misalign=0.5,shuffle=0.5`.
    #[arg(long, default_value = "uniform")]
    mix: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sentences used for wrong-language targets.
    #[arg(long)]
    third_lang: Option<PathBuf>,
    /// Writes `<prefix>.src`/`<prefix>.tgt` (or `<prefix>.tsv`) and `<prefix>.labels`.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Cutoff for precision and recall; defaults to the clean count.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct StatsArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(&cli.log_level);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new()
        .parse_filters(level)
        .format_timestamp_secs()
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::TrainLm(a) => train_lm(&a),
        Command::TrainTm(a) => train_tm(&a),
        Command::Score(a) => score(&a),
        Command::Select(a) => select(&a),
        Command::Weights(a) => weights(&a),
        Command::Corrupt(a) => corrupt(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Stats(a) => stats(&a),
        Command::Pipeline(a) => pipeline(&a),
    }
}

fn echo_config<A: Serialize>(outputs: &mut Outputs, artifact: &Path, args: &A) -> Result<()> {
    let text = toml::to_string(args).map_err(|e| Error::Config(e.to_string()))?;
    let mut w = outputs.create(&with_suffix(artifact, ".conf"))?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn open_scores(path: &Path) -> Result<ScoreReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ScoreReader::new(BufReader::new(file)))
}

fn train_lm(a: &TrainLmArgs) -> Result<()> {
    let config = NgramConfig {
        order: a.order,
        add_k: a.add_k,
        min_count: a.min_count,
    };
    let sentences: Vec<Sentence> = match a.sample {
        Some(n) => reservoir_sample(read_mono(&a.input, a.lowercase)?, n, a.seed)?,
        None => read_mono(&a.input, a.lowercase)?.collect::<Result<_>>()?,
    };
    let lm = NgramLanguageModel::train(&sentences, config)?;
    info!(
        "trained order-{} model on {} sentences, vocabulary {}",
        lm.order(),
        sentences.len(),
        lm.vocab_size()
    );
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, &a.out, a)?;
    lm.save(outputs.create(&a.out)?)?;
    outputs.commit()
}

fn train_tm(a: &TrainTmArgs) -> Result<()> {
    let stream = a.corpus.open(Provenance::Candidate)?;
    let pairs = match a.sample {
        Some(n) => sample(stream, n, a.seed)?,
        None => stream.collect::<Result<Vec<_>>>()?,
    };
    let config = Model1Config {
        iterations: a.iters,
        use_null: a.null,
        ..Model1Config::default()
    };
    let (model, trace) = LexicalTranslationModel::train(&pairs, a.direction, config)?;
    for (i, ll) in trace.log_likelihood.iter().enumerate() {
        info!("EM iteration {}: log-likelihood {ll:.6}", i + 1);
    }
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, &a.out, a)?;
    model.save(outputs.create(&a.out)?)?;
    outputs.commit()
}

enum Loaded<M> {
    Model(M),
    External(ExternalScores),
}

fn load_cond(
    model: &Option<PathBuf>,
    external: &Option<PathBuf>,
    expect: Direction,
) -> Result<Loaded<LexicalTranslationModel>> {
    match (model, external) {
        (_, Some(path)) => Ok(Loaded::External(ExternalScores::load_path(path)?)),
        (Some(path), None) => {
            let m = LexicalTranslationModel::load_path(path)?;
            if m.direction() != expect {
                return Err(Error::Incompatible(format!(
                    "{} holds a {} model where a {} model is expected",
                    path.display(),
                    m.direction().as_str(),
                    expect.as_str()
                )));
            }
            Ok(Loaded::Model(m))
        }
        (None, None) => Err(Error::Config("missing translation scorer".into())),
    }
}

fn load_mono(model: &Option<PathBuf>, external: &Option<PathBuf>) -> Result<Loaded<NgramLanguageModel>> {
    match (model, external) {
        (_, Some(path)) => Ok(Loaded::External(ExternalScores::load_path(path)?)),
        (Some(path), None) => Ok(Loaded::Model(NgramLanguageModel::load_path(path)?)),
        (None, None) => Err(Error::Config("missing language model".into())),
    }
}

fn as_cond(l: &Loaded<LexicalTranslationModel>) -> &dyn ConditionalScorer {
    match l {
        Loaded::Model(m) => m,
        Loaded::External(e) => e,
    }
}

fn as_mono(l: &Loaded<NgramLanguageModel>) -> &dyn MonolingualScorer {
    match l {
        Loaded::Model(m) => m,
        Loaded::External(e) => e,
    }
}

fn score(a: &ScoreArgs) -> Result<()> {
    let fwd = load_cond(&a.fwd_model, &a.fwd_external, Direction::Forward)?;
    let rev = load_cond(&a.rev_model, &a.rev_external, Direction::Reverse)?;
    let in_lm = load_mono(&a.in_lm, &a.in_external)?;
    let out_lm = load_mono(&a.out_lm, &a.out_external)?;
    let mut scorer = CorpusScorer::new(as_cond(&fwd), as_cond(&rev), as_mono(&in_lm), as_mono(&out_lm));
    scorer.max_tokens = a.max_tokens;

    let provenance = if a.trusted {
        Provenance::Trusted
    } else {
        Provenance::Candidate
    };
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, &a.out, a)?;
    let mut w = outputs.create(&a.out)?;
    writeln!(w, "{SCORE_HEADER}")?;
    let n = scorer.score_stream(a.corpus.open(provenance)?, resolve_workers(a.workers), |r| {
        write_record(&mut w, &r)?;
        Ok(())
    })?;
    w.flush()?;
    drop(w);
    info!("scored {n} pairs");
    outputs.commit()
}

fn select(a: &SelectArgs) -> Result<()> {
    let selection = match (a.top_n, a.threshold) {
        (Some(n), _) => {
            let opts = SortOptions {
                memory_budget: a.memory_budget,
                workers: resolve_workers(a.workers),
                temp_dir: None,
            };
            select_top_n(open_scores(&a.scores)?, n, &opts)?
        }
        (None, Some(t)) => select_by_threshold(open_scores(&a.scores)?, t)?,
        (None, None) => unreachable!("clap requires a selection mode"),
    };
    info!(
        "selected {} pairs, cutoff {:?}",
        selection.n_returned, selection.cutoff_score
    );

    let prefix = &a.out_prefix;
    let paths = match a.corpus.corpus_input() {
        CorpusInput::Tsv(_) => vec![with_suffix(prefix, ".tsv")],
        CorpusInput::Twin(_) => vec![with_suffix(prefix, ".src"), with_suffix(prefix, ".tgt")],
    };
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, prefix, a)?;
    let mut writer = open_pair_writer(&mut outputs, &paths)?;
    extract_selected(a.corpus.open(Provenance::Candidate)?, &selection, &mut writer)?;
    drop(writer);
    let mut ids = outputs.create(&with_suffix(prefix, ".ids"))?;
    for id in &selection.selected {
        writeln!(ids, "{id}")?;
    }
    ids.flush()?;
    drop(ids);
    outputs.commit()
}

fn weights(a: &WeightsArgs) -> Result<()> {
    let mut n = 0u64;
    for r in open_scores(&a.scores)? {
        r?;
        n += 1;
    }
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, &a.out, a)?;
    emit_weights(open_scores(&a.scores)?, n, outputs.create(&a.out)?)?;
    let corpus = match (&a.input, &a.in_src, &a.in_tgt) {
        (Some(tsv), _, _) => Some(CorpusInput::Tsv(tsv.clone())),
        (None, Some(s), Some(t)) => Some(CorpusInput::Twin([s.clone(), t.clone()])),
        _ => None,
    };
    if let Some(corpus) = corpus {
        let staged = outputs.staged(&a.out).expect("weights file is staged");
        let file = File::open(staged).map_err(|e| Error::io(staged, e))?;
        let lines = check_weight_alignment(corpus.open(ReadOptions::default())?, BufReader::new(file))?;
        info!("weights aligned with {lines} corpus lines");
    }
    outputs.commit()
}

fn corrupt(a: &CorruptArgs) -> Result<()> {
    let spec = NoiseSpec {
        rate: a.rate,
        mix: NoiseSpec::parse_mix(&a.mix)?,
        seed: a.seed,
    };
    spec.validate()?;
    let pairs = a.corpus.open(Provenance::Candidate)?.collect::<Result<Vec<_>>>()?;
    let third = match &a.third_lang {
        Some(path) => Some(read_mono(path, a.corpus.lowercase)?.collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let labeled = inject_noise(pairs, &spec, third.as_deref())?;

    let prefix = &a.out_prefix;
    let paths = match a.corpus.corpus_input() {
        CorpusInput::Tsv(_) => vec![with_suffix(prefix, ".tsv")],
        CorpusInput::Twin(_) => vec![with_suffix(prefix, ".src"), with_suffix(prefix, ".tgt")],
    };
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, prefix, a)?;
    let mut writer = open_pair_writer(&mut outputs, &paths)?;
    let mut labels = outputs.create(&with_suffix(prefix, ".labels"))?;
    writeln!(labels, "{LABEL_HEADER}")?;
    for lp in &labeled {
        writer.write_pair(&lp.pair)?;
        writeln!(labels, "{}", format_label(lp.pair.id, lp.label))?;
    }
    writer.flush()?;
    labels.flush()?;
    drop(writer);
    drop(labels);
    let corrupted = labeled.iter().filter(|lp| !lp.label.is_clean()).count();
    info!("corrupted {corrupted} of {} pairs", labeled.len());
    outputs.commit()
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let scores: Vec<ScoreRecord> = open_scores(&a.scores)?.collect::<Result<_>>()?;
    let file = File::open(&a.labels).map_err(|e| Error::io(&a.labels, e))?;
    let labels = parse_labels(BufReader::new(file))?;
    let report = match a.k {
        Some(k) => evaluate_filter_at(&scores, &labels, k)?,
        None => evaluate_filter(&scores, &labels)?,
    };
    let mut outputs = Outputs::new();
    echo_config(&mut outputs, &a.report, a)?;
    let mut w = outputs.create(&a.report)?;
    w.write_all(report.to_tsv().as_bytes())?;
    w.flush()?;
    drop(w);
    outputs.commit()
}

fn stats(a: &StatsArgs) -> Result<()> {
    let summary = summarize(open_scores(&a.scores)?)?;
    let text = summary.render();
    match &a.out {
        Some(path) => {
            let mut outputs = Outputs::new();
            echo_config(&mut outputs, path, a)?;
            let mut w = outputs.create(path)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            drop(w);
            outputs.commit()
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let out = run_pipeline(&cfg)?;
    info!(
        "pipeline done: {} selected, scores in {}",
        out.selection.n_returned,
        out.scores.display()
    );
    Ok(())
}
