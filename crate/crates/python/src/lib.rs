//! Python bindings: tokenization, the score algebra, both model families,
//! corpus scoring, selection and the noise harness.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use bitext_filter::corpus::{tokenize as tokenize_line, Provenance, Sentence, SentencePair};
use bitext_filter::error::Error;
use bitext_filter::lexical::{Direction, LexicalTranslationModel, Model1Config};
use bitext_filter::ngram::{NgramConfig, NgramLanguageModel};
use bitext_filter::noise::{self, NoiseSpec};
use bitext_filter::scoring::{self, CorpusScorer, Flags};
use bitext_filter::selection::{self, SortOptions};
use bitext_filter::synthetic::{SyntheticConfig, SyntheticLanguage};

type TextPair = (String, String);
/// Corrupted pairs and their `(label, kind)` tags.
type NoisyCorpus = (Vec<TextPair>, Vec<(String, String)>);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::RawIo(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn pairs_from(pairs: &[(String, String)], lowercase: bool, trusted: bool) -> Vec<SentencePair> {
    let provenance = if trusted {
        Provenance::Trusted
    } else {
        Provenance::Candidate
    };
    pairs
        .iter()
        .enumerate()
        .map(|(i, (s, t))| SentencePair {
            id: i as u64,
            src: tokenize_line(s, lowercase),
            tgt: tokenize_line(t, lowercase),
            provenance,
        })
        .collect()
}

#[pyfunction]
#[pyo3(signature = (line, lowercase = false))]
fn tokenize(line: &str, lowercase: bool) -> Vec<String> {
    tokenize_line(line, lowercase).tokens
}

#[pyfunction]
fn dual_score(h_fwd: f64, h_rev: f64) -> PyResult<f64> {
    scoring::dual_score(h_fwd, h_rev).map_err(py_err)
}

#[pyfunction]
fn adequacy(h_fwd: f64, h_rev: f64) -> PyResult<f64> {
    scoring::adequacy(h_fwd, h_rev).map_err(py_err)
}

#[pyfunction]
fn domain_score(h_in: f64, h_out: f64) -> PyResult<f64> {
    scoring::domain_score(h_in, h_out).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (adq, dom, trusted = false))]
fn combined_score(adq: f64, dom: f64, trusted: bool) -> PyResult<f64> {
    scoring::combined_score(adq, dom, trusted).map_err(py_err)
}

/// Add-k smoothed n-gram language model.
#[pyclass(name = "NgramLM", frozen)]
struct PyNgramLM {
    inner: NgramLanguageModel,
}

#[pymethods]
impl PyNgramLM {
    #[staticmethod]
    #[pyo3(signature = (sentences, order = 3, add_k = 0.1, min_count = 2, lowercase = false))]
    fn train(sentences: Vec<String>, order: usize, add_k: f64, min_count: u64, lowercase: bool) -> PyResult<Self> {
        let text: Vec<Sentence> = sentences.iter().map(|s| tokenize_line(s, lowercase)).collect();
        let inner = NgramLanguageModel::train(
            &text,
            NgramConfig {
                order,
                add_k,
                min_count,
            },
        )
        .map_err(py_err)?;
        Ok(PyNgramLM { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyNgramLM {
            inner: NgramLanguageModel::load_path(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_path(&path).map_err(py_err)
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn prob(&self, history: Vec<String>, word: &str) -> f64 {
        let h: Vec<&str> = history.iter().map(String::as_str).collect();
        self.inner.prob(&h, word)
    }

    fn cross_entropy(&self, sentence: &str) -> PyResult<f64> {
        self.inner
            .cross_entropy(&tokenize_line(sentence, false))
            .map_err(py_err)
    }

    fn perplexity(&self, sentence: &str) -> PyResult<f64> {
        self.inner.perplexity(&tokenize_line(sentence, false)).map_err(py_err)
    }
}

/// IBM Model 1 word-translation table for one direction.
#[pyclass(name = "TranslationModel", frozen)]
struct PyTranslationModel {
    inner: LexicalTranslationModel,
}

#[pymethods]
impl PyTranslationModel {
    /// Returns the model and the per-iteration log-likelihood trace.
    #[staticmethod]
    #[pyo3(signature = (pairs, direction = "fwd", iterations = 5, use_null = true, lowercase = false))]
    fn train(
        pairs: Vec<(String, String)>,
        direction: &str,
        iterations: usize,
        use_null: bool,
        lowercase: bool,
    ) -> PyResult<(Self, Vec<f64>)> {
        let direction: Direction = direction.parse().map_err(py_err)?;
        let config = Model1Config {
            iterations,
            use_null,
            ..Model1Config::default()
        };
        let (inner, trace) =
            LexicalTranslationModel::train(&pairs_from(&pairs, lowercase, false), direction, config).map_err(py_err)?;
        Ok((PyTranslationModel { inner }, trace.log_likelihood))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyTranslationModel {
            inner: LexicalTranslationModel::load_path(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_path(&path).map_err(py_err)
    }

    #[getter]
    fn direction(&self) -> &'static str {
        self.inner.direction().as_str()
    }

    fn prob(&self, given: &str, generated: &str) -> f64 {
        self.inner.prob(given, generated)
    }

    /// `H(generated | given)` in nats per generated token.
    fn cross_entropy(&self, given: &str, generated: &str) -> PyResult<f64> {
        let (g, y) = (tokenize_line(given, false), tokenize_line(generated, false));
        self.inner.cond_cross_entropy(&g.tokens, &y.tokens).map_err(py_err)
    }
}

#[pyclass(name = "ScoreRecord", frozen, get_all)]
struct PyScoreRecord {
    id: u64,
    h_fwd: Option<f64>,
    h_rev: Option<f64>,
    h_in: Option<f64>,
    h_out: Option<f64>,
    adq: Option<f64>,
    dom: Option<f64>,
    combined: f64,
    flags: String,
}

#[pymethods]
impl PyScoreRecord {
    fn __repr__(&self) -> String {
        format!(
            "ScoreRecord(id={}, combined={}, flags={:?})",
            self.id, self.combined, self.flags
        )
    }
}

/// Scores `(src, tgt)` pairs; ids are list positions.
#[pyfunction]
#[pyo3(signature = (pairs, fwd, rev, in_lm, out_lm, trusted = false, workers = 1, max_tokens = 250))]
#[allow(clippy::too_many_arguments)]
fn score_pairs(
    py: Python<'_>,
    pairs: Vec<(String, String)>,
    fwd: &PyTranslationModel,
    rev: &PyTranslationModel,
    in_lm: &PyNgramLM,
    out_lm: &PyNgramLM,
    trusted: bool,
    workers: usize,
    max_tokens: usize,
) -> PyResult<Vec<PyScoreRecord>> {
    let corpus = pairs_from(&pairs, false, trusted);
    let records = py
        .detach(|| {
            let mut scorer = CorpusScorer::new(&fwd.inner, &rev.inner, &in_lm.inner, &out_lm.inner);
            scorer.max_tokens = max_tokens;
            scorer.score_corpus(corpus.into_iter().map(Ok), workers)
        })
        .map_err(py_err)?;
    Ok(records
        .into_iter()
        .map(|r| PyScoreRecord {
            id: r.pair_id,
            h_fwd: r.h_fwd,
            h_rev: r.h_rev,
            h_in: r.h_in,
            h_out: r.h_out,
            adq: r.adq,
            dom: r.dom,
            combined: r.combined,
            flags: r.flags.to_string(),
        })
        .collect())
}

/// Ids (ascending) of the `n` best scores and the cutoff score.
#[pyfunction]
fn select_top_n(scores: Vec<f64>, n: u64) -> PyResult<(Vec<u64>, Option<f64>)> {
    let records = scores.iter().enumerate().map(|(i, &s)| {
        let mut r = scoring::ScoreRecord::rejected(i as u64, Flags::default());
        r.combined = s;
        Ok(r)
    });
    let sel = selection::select_top_n(records, n, &SortOptions::default()).map_err(py_err)?;
    Ok((sel.selected, sel.cutoff_score))
}

/// Mann-Whitney AUC; `None` when one class is empty.
#[pyfunction]
fn auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(noise::auc(&scores, &positive))
}

/// Corrupts pairs; returns the new pairs and a `(label, kind)` per pair.
#[pyfunction]
#[pyo3(signature = (pairs, rate = 0.2, seed = 1, mix = "uniform", third_language = None))]
fn inject_noise(
    pairs: Vec<(String, String)>,
    rate: f64,
    seed: u64,
    mix: &str,
    third_language: Option<Vec<String>>,
) -> PyResult<NoisyCorpus> {
    let spec = NoiseSpec {
        rate,
        mix: NoiseSpec::parse_mix(mix).map_err(py_err)?,
        seed,
    };
    let third: Option<Vec<Sentence>> = third_language.map(|v| v.iter().map(|s| tokenize_line(s, false)).collect());
    let labeled = noise::inject_noise(pairs_from(&pairs, false, false), &spec, third.as_deref()).map_err(py_err)?;
    let out = labeled
        .iter()
        .map(|lp| (lp.pair.src.raw.clone(), lp.pair.tgt.raw.clone()))
        .collect();
    let labels = labeled
        .iter()
        .map(|lp| match lp.label {
            noise::Label::Clean => ("clean".to_owned(), "-".to_owned()),
            noise::Label::Corrupted(k) => ("corrupted".to_owned(), k.name().to_owned()),
        })
        .collect();
    Ok((out, labels))
}

/// Aligned pairs from the toy cipher language, plus third-language lines.
#[pyfunction]
#[pyo3(signature = (n, seed = 1, third = 0))]
fn synthetic_corpus(n: usize, seed: u64, third: usize) -> (Vec<(String, String)>, Vec<String>) {
    let lang = SyntheticLanguage::new(SyntheticConfig::default());
    (lang.parallel(n, seed), lang.third_language(third, seed ^ 0x5eed))
}

#[pymodule]
#[pyo3(name = "bitext_filter")]
fn bitext_filter_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(dual_score, m)?)?;
    m.add_function(wrap_pyfunction!(adequacy, m)?)?;
    m.add_function(wrap_pyfunction!(domain_score, m)?)?;
    m.add_function(wrap_pyfunction!(combined_score, m)?)?;
    m.add_function(wrap_pyfunction!(score_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_n, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_class::<PyNgramLM>()?;
    m.add_class::<PyTranslationModel>()?;
    m.add_class::<PyScoreRecord>()?;
    Ok(())
}
