//! Parallel corpus filtering with dual conditional cross-entropy and
//! cross-entropy difference scores.
//!
//! Two inverse lexical translation models give `H(y|x)` and `H(x|y)`, two
//! target-side language models give in-domain and general cross-entropies,
//! and the [`scoring`] module turns them into per-pair scores in `[0, 1]`
//! used for top-N selection and instance weighting.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod external;
pub mod lexical;
pub mod ngram;
pub mod noise;
pub mod pipeline;
pub mod scoring;
pub mod selection;
pub mod stats;
pub mod synthetic;

pub use corpus::{tokenize, CorpusStream, Provenance, ReadOptions, Sentence, SentencePair};
pub use error::{Error, Result};
pub use external::ExternalScores;
pub use lexical::{Direction, EmTrace, LexicalTranslationModel, Model1Config};
pub use ngram::{NgramConfig, NgramLanguageModel};
pub use noise::{evaluate_filter, inject_noise, CorruptionKind, FilterReport, Label, LabeledPair, NoiseSpec};
pub use pipeline::{run_pipeline, PipelineConfig};
pub use scoring::{adequacy, combined_score, domain_score, dual_score, CorpusScorer, ScoreRecord};
pub use selection::{select_by_threshold, select_top_n, SelectionResult, SortOptions};
