//! The end-to-end workflow: train scorers, score the candidate corpus (and
//! optionally a trusted one), select, and write instance weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    read_mono, reservoir_sample, sample, CorpusStream, PairWriter, Provenance, ReadOptions, Sentence,
    DEFAULT_MAX_TOKENS,
};
use crate::error::{Error, Result};
use crate::external::ExternalScores;
use crate::lexical::{Direction, LexicalTranslationModel, Model1Config};
use crate::ngram::{NgramConfig, NgramLanguageModel};
use crate::scoring::{write_record, ConditionalScorer, CorpusScorer, MonolingualScorer, ScoreReader, SCORE_HEADER};
use crate::selection::{
    emit_weights, extract_selected, select_by_threshold, select_top_n, SelectionResult, SortOptions,
};

/// A parallel corpus on disk: a two-column TSV or a `[src, tgt]` file pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusInput {
    Tsv(PathBuf),
    Twin([PathBuf; 2]),
}

impl CorpusInput {
    pub fn open(&self, opts: ReadOptions) -> Result<CorpusStream> {
        match self {
            CorpusInput::Tsv(p) => CorpusStream::open_tsv(p, opts),
            CorpusInput::Twin([s, t]) => CorpusStream::open_twin(s, t, opts),
        }
    }

    pub fn is_tsv(&self) -> bool {
        matches!(self, CorpusInput::Tsv(_))
    }
}

fn default_seed() -> u64 {
    1
}
fn default_sample() -> usize {
    1_000_000
}
fn default_order() -> usize {
    NgramConfig::default().order
}
fn default_add_k() -> f64 {
    NgramConfig::default().add_k
}
fn default_min_count() -> u64 {
    NgramConfig::default().min_count
}
fn default_iterations() -> usize {
    Model1Config::default().iterations
}
fn default_true() -> bool {
    true
}
fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}
fn default_memory_budget() -> usize {
    SortOptions::default().memory_budget
}
fn default_log_level() -> String {
    "info".into()
}

/// Declarative run description, read from and echoed as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Noisy pairs to score and select from.
    pub candidate: CorpusInput,
    /// Clean pairs whose adequacy is fixed at 1; scored for weights only.
    #[serde(default)]
    pub trusted: Option<CorpusInput>,
    /// Clean parallel data for the two translation models.
    #[serde(default)]
    pub tm_train: Option<CorpusInput>,
    /// In-domain target-language text.
    #[serde(default)]
    pub in_domain: Option<PathBuf>,
    /// General target-language text; defaults to the candidate target side.
    #[serde(default)]
    pub out_domain: Option<PathBuf>,

    /// Precomputed cross-entropy files (`id\tH`) replacing built-in scorers.
    /// They must cover the candidate ids; a trusted corpus needs built-in
    /// scorers.
    #[serde(default)]
    pub fwd_external: Option<PathBuf>,
    #[serde(default)]
    pub rev_external: Option<PathBuf>,
    #[serde(default)]
    pub in_external: Option<PathBuf>,
    #[serde(default)]
    pub out_external: Option<PathBuf>,

    #[serde(default)]
    pub top_n: Option<u64>,
    #[serde(default)]
    pub threshold: Option<f64>,

    pub out_prefix: PathBuf,

    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sample")]
    pub tm_sample: usize,
    #[serde(default = "default_sample")]
    pub lm_sample: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_add_k")]
    pub add_k: f64,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default = "default_iterations")]
    pub tm_iterations: usize,
    #[serde(default = "default_true")]
    pub use_null: bool,
    #[serde(default)]
    pub lowercase: bool,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// 0 means all available cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_memory_budget")]
    pub memory_budget: usize,
    #[serde(default = "default_log_level")]
    pub log_level: String,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    fn validate(&self) -> Result<()> {
        match (self.top_n, self.threshold) {
            (Some(_), Some(_)) => return Err(Error::Config("set only one of top_n and threshold".into())),
            (None, None) => return Err(Error::Config("one of top_n or threshold is required".into())),
            _ => {}
        }
        let tm_needed = self.fwd_external.is_none() || self.rev_external.is_none();
        if tm_needed && self.tm_train.is_none() {
            return Err(Error::Config(
                "tm_train is required unless both fwd_external and rev_external are set".into(),
            ));
        }
        if self.in_external.is_none() && self.in_domain.is_none() {
            return Err(Error::Config("in_domain is required unless in_external is set".into()));
        }
        Ok(())
    }

    pub fn resolved_workers(&self) -> usize {
        resolve_workers(self.workers)
    }

    fn read_opts(&self, provenance: Provenance) -> ReadOptions {
        ReadOptions {
            lowercase: self.lowercase,
            provenance,
        }
    }

    pub fn ngram_config(&self) -> NgramConfig {
        NgramConfig {
            order: self.order,
            add_k: self.add_k,
            min_count: self.min_count,
        }
    }

    pub fn model1_config(&self) -> Model1Config {
        Model1Config {
            iterations: self.tm_iterations,
            use_null: self.use_null,
            ..Model1Config::default()
        }
    }
}

pub fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    }
}

/// Files written through `.partial` names and renamed into place only when
/// the whole step succeeds. Uncommitted partial files are removed on drop.
#[derive(Default)]
pub struct Outputs {
    pending: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = partial_path(path);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.pending.push((tmp, path.to_owned()));
        Ok(BufWriter::with_capacity(1 << 16, file))
    }

    /// The path a not-yet-committed output is being written to.
    pub fn staged(&self, path: &Path) -> Option<&Path> {
        self.pending.iter().find(|(_, p)| p == path).map(|(t, _)| t.as_path())
    }

    pub fn commit(mut self) -> Result<()> {
        for (tmp, dest) in &self.pending {
            std::fs::rename(tmp, dest).map_err(|e| Error::io(dest, e))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.pending {
                let _ = std::fs::remove_file(tmp);
            }
        }
    }
}

pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

enum Cond {
    Model(LexicalTranslationModel),
    External(ExternalScores),
}

impl Cond {
    fn scorer(&self) -> &dyn ConditionalScorer {
        match self {
            Cond::Model(m) => m,
            Cond::External(e) => e,
        }
    }
}

enum Mono {
    Model(NgramLanguageModel),
    External(ExternalScores),
}

impl Mono {
    fn scorer(&self) -> &dyn MonolingualScorer {
        match self {
            Mono::Model(m) => m,
            Mono::External(e) => e,
        }
    }
}

/// Paths of everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub scores: PathBuf,
    pub weights: PathBuf,
    pub selected: Vec<PathBuf>,
    pub selected_weights: PathBuf,
    pub trusted_scores: Option<PathBuf>,
    pub trusted_weights: Option<PathBuf>,
    pub resolved_config: PathBuf,
    pub selection: SelectionResult,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    let workers = cfg.resolved_workers();
    let prefix = &cfg.out_prefix;
    let mut outputs = Outputs::new();

    let resolved_config = with_suffix(prefix, ".resolved.toml");
    {
        let mut w = outputs.create(&resolved_config)?;
        w.write_all(cfg.to_toml().as_bytes())?;
        w.flush()?;
    }

    let tm_pairs = match &cfg.tm_train {
        Some(input) if cfg.fwd_external.is_none() || cfg.rev_external.is_none() => {
            let pairs = sample(input.open(cfg.read_opts(Provenance::Trusted))?, cfg.tm_sample, cfg.seed)?;
            info!("sampled {} translation-model training pairs", pairs.len());
            pairs
        }
        _ => Vec::new(),
    };
    let train_tm = |direction: Direction, external: &Option<PathBuf>, name: &str| -> Result<Cond> {
        if let Some(path) = external {
            return Ok(Cond::External(ExternalScores::load_path(path)?));
        }
        let (model, trace) = LexicalTranslationModel::train(&tm_pairs, direction, cfg.model1_config())?;
        info!(
            "{name} model: {} EM iterations, final log-likelihood {:?}",
            trace.log_likelihood.len(),
            trace.log_likelihood.last()
        );
        model.save_path(&with_suffix(prefix, &format!(".{name}.tm")))?;
        Ok(Cond::Model(model))
    };
    let fwd = train_tm(Direction::Forward, &cfg.fwd_external, "fwd")?;
    let rev = train_tm(Direction::Reverse, &cfg.rev_external, "rev")?;

    let train_lm = |sentences: Vec<Sentence>, name: &str| -> Result<Mono> {
        let lm = NgramLanguageModel::train(&sentences, cfg.ngram_config())?;
        info!(
            "{name} language model: {} sentences, vocabulary {}",
            sentences.len(),
            lm.vocab_size()
        );
        lm.save_path(&with_suffix(prefix, &format!(".{name}.lm")))?;
        Ok(Mono::Model(lm))
    };
    let in_lm = match (&cfg.in_external, &cfg.in_domain) {
        (Some(path), _) => Mono::External(ExternalScores::load_path(path)?),
        (None, Some(path)) => train_lm(
            reservoir_sample(read_mono(path, cfg.lowercase)?, cfg.lm_sample, cfg.seed)?,
            "in",
        )?,
        (None, None) => unreachable!("validated"),
    };
    let out_lm = match (&cfg.out_external, &cfg.out_domain) {
        (Some(path), _) => Mono::External(ExternalScores::load_path(path)?),
        (None, Some(path)) => train_lm(
            reservoir_sample(read_mono(path, cfg.lowercase)?, cfg.lm_sample, cfg.seed)?,
            "out",
        )?,
        (None, None) => {
            let pairs = sample(
                cfg.candidate.open(cfg.read_opts(Provenance::Candidate))?,
                cfg.lm_sample,
                cfg.seed,
            )?;
            train_lm(pairs.into_iter().map(|p| p.tgt).collect(), "out")?
        }
    };

    let mut scorer = CorpusScorer::new(fwd.scorer(), rev.scorer(), in_lm.scorer(), out_lm.scorer());
    scorer.max_tokens = cfg.max_tokens;

    let score_into = |outputs: &mut Outputs, input: &CorpusInput, provenance: Provenance, path: &Path| -> Result<u64> {
        let mut w = outputs.create(path)?;
        writeln!(w, "{SCORE_HEADER}")?;
        let n = scorer.score_stream(input.open(cfg.read_opts(provenance))?, workers, |r| {
            write_record(&mut w, &r)?;
            Ok(())
        })?;
        w.flush()?;
        Ok(n)
    };
    let read_scores = |outputs: &Outputs, path: &Path| -> Result<ScoreReader<BufReader<File>>> {
        let staged = outputs.staged(path).unwrap_or(path);
        let file = File::open(staged).map_err(|e| Error::io(staged, e))?;
        Ok(ScoreReader::new(BufReader::new(file)))
    };

    let scores = with_suffix(prefix, ".scores.tsv");
    let n = score_into(&mut outputs, &cfg.candidate, Provenance::Candidate, &scores)?;
    info!("scored {n} candidate pairs");

    let weights = with_suffix(prefix, ".weights");
    emit_weights(read_scores(&outputs, &scores)?, n, outputs.create(&weights)?)?;

    let (mut trusted_scores, mut trusted_weights) = (None, None);
    if let Some(trusted) = &cfg.trusted {
        let ts = with_suffix(prefix, ".trusted.scores.tsv");
        let tn = score_into(&mut outputs, trusted, Provenance::Trusted, &ts)?;
        let tw = with_suffix(prefix, ".trusted.weights");
        emit_weights(read_scores(&outputs, &ts)?, tn, outputs.create(&tw)?)?;
        info!("scored {tn} trusted pairs");
        trusted_scores = Some(ts);
        trusted_weights = Some(tw);
    }

    let sort = SortOptions {
        memory_budget: cfg.memory_budget,
        workers,
        temp_dir: None,
    };
    let selection = match (cfg.top_n, cfg.threshold) {
        (Some(top_n), _) => select_top_n(read_scores(&outputs, &scores)?, top_n, &sort)?,
        (None, Some(t)) => select_by_threshold(read_scores(&outputs, &scores)?, t)?,
        (None, None) => unreachable!("validated"),
    };
    info!(
        "selected {} of {n} pairs, cutoff {:?}",
        selection.n_returned, selection.cutoff_score
    );

    let selected = selected_paths(prefix, &cfg.candidate);
    let mut writer = open_pair_writer(&mut outputs, &selected)?;
    extract_selected(
        cfg.candidate.open(cfg.read_opts(Provenance::Candidate))?,
        &selection,
        &mut writer,
    )?;
    drop(writer);

    let selected_weights = with_suffix(prefix, ".selected.weights");
    {
        let mut w = outputs.create(&selected_weights)?;
        let mut wanted = selection.selected.iter().peekable();
        for r in read_scores(&outputs, &scores)? {
            let r = r?;
            if wanted.peek() == Some(&&r.pair_id) {
                wanted.next();
                writeln!(w, "{}", crate::scoring::format_g6(r.combined))?;
            }
        }
        w.flush()?;
    }

    outputs.commit()?;
    Ok(PipelineOutputs {
        scores,
        weights,
        selected,
        selected_weights,
        trusted_scores,
        trusted_weights,
        resolved_config,
        selection,
    })
}

/// `<prefix>.selected.tsv` for TSV input, `<prefix>.selected.{src,tgt}`
/// otherwise.
pub fn selected_paths(prefix: &Path, input: &CorpusInput) -> Vec<PathBuf> {
    if input.is_tsv() {
        vec![with_suffix(prefix, ".selected.tsv")]
    } else {
        vec![
            with_suffix(prefix, ".selected.src"),
            with_suffix(prefix, ".selected.tgt"),
        ]
    }
}

pub fn open_pair_writer(outputs: &mut Outputs, paths: &[PathBuf]) -> Result<PairWriter<BufWriter<File>>> {
    Ok(match paths {
        [tsv] => PairWriter::Tsv(outputs.create(tsv)?),
        [src, tgt] => PairWriter::Twin {
            src: outputs.create(src)?,
            tgt: outputs.create(tgt)?,
        },
        _ => return Err(Error::Config("expected one TSV path or a src/tgt pair".into())),
    })
}
