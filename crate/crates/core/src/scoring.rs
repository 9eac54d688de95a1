//! Score algebra and corpus-wide scoring.
//!
//! With `h_fwd = H_A(y|x)` and `h_rev = H_B(x|y)` from two inverse
//! translation models, and `h_in`, `h_out` the target-side cross-entropies
//! under an in-domain and a general language model:
//!
//! ```text
//! dual     = |h_fwd - h_rev| + (h_fwd + h_rev) / 2
//! adq      = exp(-dual)                      (1 for trusted pairs)
//! dom      = min(exp(-(h_in - h_out)), 1)
//! combined = adq * dom
//! ```
//!
//! All cross-entropies are word-normalized and in nats.

use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::corpus::{Provenance, Sentence, SentencePair, DEFAULT_MAX_TOKENS};
use crate::error::{Error, Result};
use crate::external::ExternalScores;
use crate::lexical::LexicalTranslationModel;
use crate::ngram::{LineCursor, NgramLanguageModel};

fn check_cross_entropy(name: &str, h: f64) -> Result<()> {
    if !h.is_finite() || h < 0.0 {
        return Err(Error::domain(format!("{name} must be finite and >= 0, got {h}")));
    }
    Ok(())
}

/// Dual conditional cross-entropy; 0 is best.
pub fn dual_score(h_fwd: f64, h_rev: f64) -> Result<f64> {
    check_cross_entropy("h_fwd", h_fwd)?;
    check_cross_entropy("h_rev", h_rev)?;
    Ok((h_fwd - h_rev).abs() + 0.5 * (h_fwd + h_rev))
}

pub fn adequacy(h_fwd: f64, h_rev: f64) -> Result<f64> {
    dual_score(h_fwd, h_rev).map(|d| (-d).exp())
}

/// Perplexity quotient `PP_out / PP_in`, clipped at 1.
pub fn domain_score(h_in: f64, h_out: f64) -> Result<f64> {
    if !h_in.is_finite() || !h_out.is_finite() {
        return Err(Error::domain(format!(
            "cross-entropies must be finite, got h_in={h_in}, h_out={h_out}"
        )));
    }
    Ok((h_out - h_in).exp().min(1.0))
}

pub fn combined_score(adq: f64, dom: f64, trusted: bool) -> Result<f64> {
    let unit = |x: f64| x > 0.0 && x <= 1.0;
    if !unit(adq) || !unit(dom) {
        return Err(Error::domain(format!(
            "adq and dom must lie in (0, 1], got adq={adq}, dom={dom}"
        )));
    }
    Ok(if trusted { dom } else { adq * dom })
}

/// Anything that can produce `H(generated | given)` for a pair.
pub trait ConditionalScorer: Sync {
    fn conditional_cross_entropy(&self, id: u64, given: &Sentence, generated: &Sentence) -> Result<f64>;
}

/// Anything that can produce `H(sentence)` for a pair's target side.
pub trait MonolingualScorer: Sync {
    fn sentence_cross_entropy(&self, id: u64, sentence: &Sentence) -> Result<f64>;
}

impl ConditionalScorer for LexicalTranslationModel {
    fn conditional_cross_entropy(&self, _id: u64, given: &Sentence, generated: &Sentence) -> Result<f64> {
        self.cond_cross_entropy(&given.tokens, &generated.tokens)
    }
}

impl MonolingualScorer for NgramLanguageModel {
    fn sentence_cross_entropy(&self, _id: u64, sentence: &Sentence) -> Result<f64> {
        self.cross_entropy(sentence)
    }
}

impl ConditionalScorer for ExternalScores {
    fn conditional_cross_entropy(&self, id: u64, _: &Sentence, _: &Sentence) -> Result<f64> {
        self.get(id)
    }
}

impl MonolingualScorer for ExternalScores {
    fn sentence_cross_entropy(&self, id: u64, _: &Sentence) -> Result<f64> {
        self.get(id)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub trusted: bool,
    /// One side has no tokens.
    pub blank: bool,
    /// One side exceeds the token limit.
    pub overlong: bool,
}

impl Flags {
    /// Blank and over-long pairs are not scored.
    pub fn rejected(&self) -> bool {
        self.blank || self.overlong
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.trusted, "trusted"),
            (self.blank, "blank"),
            (self.overlong, "overlong"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        if names.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl std::str::FromStr for Flags {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut flags = Flags::default();
        if s == "-" {
            return Ok(flags);
        }
        for name in s.split(',') {
            match name {
                "trusted" => flags.trusted = true,
                "blank" => flags.blank = true,
                "overlong" => flags.overlong = true,
                other => return Err(format!("unknown flag {other:?}")),
            }
        }
        Ok(flags)
    }
}

/// Per-pair scores. The cross-entropies, `adq` and `dom` are absent for
/// rejected pairs, whose `combined` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub pair_id: u64,
    pub h_fwd: Option<f64>,
    pub h_rev: Option<f64>,
    pub h_in: Option<f64>,
    pub h_out: Option<f64>,
    pub adq: Option<f64>,
    pub dom: Option<f64>,
    pub combined: f64,
    pub flags: Flags,
}

impl ScoreRecord {
    /// Builds a record from the four cross-entropies.
    pub fn from_cross_entropies(pair_id: u64, h: [f64; 4], trusted: bool) -> Result<Self> {
        let [h_fwd, h_rev, h_in, h_out] = h;
        let adq = if trusted { 1.0 } else { adequacy(h_fwd, h_rev)? };
        let dom = domain_score(h_in, h_out)?;
        let combined = combined_score(adq, dom, trusted)?;
        Ok(ScoreRecord {
            pair_id,
            h_fwd: Some(h_fwd),
            h_rev: Some(h_rev),
            h_in: Some(h_in),
            h_out: Some(h_out),
            adq: Some(adq),
            dom: Some(dom),
            combined,
            flags: Flags {
                trusted,
                ..Flags::default()
            },
        })
    }

    pub fn rejected(pair_id: u64, flags: Flags) -> Self {
        ScoreRecord {
            pair_id,
            h_fwd: None,
            h_rev: None,
            h_in: None,
            h_out: None,
            adq: None,
            dom: None,
            combined: 0.0,
            flags,
        }
    }
}

pub const SCORE_HEADER: &str = "id\th_fwd\th_rev\th_in\th_out\tadq\tdom\tcombined\tflags";
const MISSING: &str = "NA";

/// Formats like C's `%g`: six significant digits, trailing zeros dropped,
/// exponent form below 1e-4 or from 1e6 up.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| MISSING.to_owned(), format_g6)
}

pub fn write_record<W: Write>(w: &mut W, r: &ScoreRecord) -> std::io::Result<()> {
    writeln!(
        w,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.pair_id,
        fmt_opt(r.h_fwd),
        fmt_opt(r.h_rev),
        fmt_opt(r.h_in),
        fmt_opt(r.h_out),
        fmt_opt(r.adq),
        fmt_opt(r.dom),
        format_g6(r.combined),
        r.flags
    )
}

/// Streams records out of a score file, validating the header.
pub struct ScoreReader<R> {
    lines: LineCursor<R>,
    header_seen: bool,
}

impl<R: BufRead> ScoreReader<R> {
    pub fn new(reader: R) -> Self {
        ScoreReader {
            lines: LineCursor::new(reader),
            header_seen: false,
        }
    }

    fn parse_line(&self, line: &str) -> Result<ScoreRecord> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 9 {
            return Err(self.lines.error(&format!("expected 9 columns, found {}", cols.len())));
        }
        let opt = |i: usize| -> Result<Option<f64>> {
            if cols[i] == MISSING {
                return Ok(None);
            }
            cols[i]
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.lines.error(&format!("bad number {:?}", cols[i])))
        };
        let pair_id = cols[0]
            .parse()
            .map_err(|_| self.lines.error(&format!("bad pair id {:?}", cols[0])))?;
        let combined = opt(7)?.ok_or_else(|| self.lines.error("combined score missing"))?;
        if !(0.0..=1.0).contains(&combined) {
            return Err(self.lines.error(&format!("combined score {combined} outside [0, 1]")));
        }
        let flags = cols[8].parse().map_err(|e: String| self.lines.error(&e))?;
        Ok(ScoreRecord {
            pair_id,
            h_fwd: opt(1)?,
            h_rev: opt(2)?,
            h_in: opt(3)?,
            h_out: opt(4)?,
            adq: opt(5)?,
            dom: opt(6)?,
            combined,
            flags,
        })
    }
}

impl<R: BufRead> Iterator for ScoreReader<R> {
    type Item = Result<ScoreRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next() {
                Ok(Some(l)) => l,
                Ok(None) => return None,
                Err(e) => return Some(Err(e)),
            };
            if !self.header_seen {
                self.header_seen = true;
                if line != SCORE_HEADER {
                    return Some(Err(self.lines.error("missing score file header")));
                }
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

/// Scores pairs with two translation scorers and two language models.
pub struct CorpusScorer<'a> {
    pub fwd: &'a dyn ConditionalScorer,
    pub rev: &'a dyn ConditionalScorer,
    pub in_domain: &'a dyn MonolingualScorer,
    pub out_domain: &'a dyn MonolingualScorer,
    pub max_tokens: usize,
}

/// Pairs handed to the worker pool at once.
const BATCH: usize = 8192;

impl<'a> CorpusScorer<'a> {
    pub fn new(
        fwd: &'a dyn ConditionalScorer,
        rev: &'a dyn ConditionalScorer,
        in_domain: &'a dyn MonolingualScorer,
        out_domain: &'a dyn MonolingualScorer,
    ) -> Self {
        CorpusScorer {
            fwd,
            rev,
            in_domain,
            out_domain,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn score_pair(&self, pair: &SentencePair) -> Result<ScoreRecord> {
        let trusted = pair.provenance == Provenance::Trusted;
        let flags = Flags {
            trusted,
            blank: pair.is_blank(),
            overlong: pair.is_overlong(self.max_tokens),
        };
        if flags.rejected() {
            return Ok(ScoreRecord::rejected(pair.id, flags));
        }
        let id = pair.id;
        let wrap = |source: Error| Error::Scoring {
            id,
            source: Box::new(source),
        };
        let h = [
            self.fwd.conditional_cross_entropy(id, &pair.src, &pair.tgt),
            self.rev.conditional_cross_entropy(id, &pair.tgt, &pair.src),
            self.in_domain.sentence_cross_entropy(id, &pair.tgt),
            self.out_domain.sentence_cross_entropy(id, &pair.tgt),
        ];
        let mut values = [0.0; 4];
        for (v, r) in values.iter_mut().zip(h) {
            *v = r.map_err(wrap)?;
        }
        ScoreRecord::from_cross_entropies(id, values, trusted).map_err(wrap)
    }

    /// Scores the stream in batches on `workers` threads and hands records
    /// to `sink` in id order. Output does not depend on `workers`.
    pub fn score_stream<I, F>(&self, pairs: I, workers: usize, mut sink: F) -> Result<u64>
    where
        I: IntoIterator<Item = Result<SentencePair>>,
        F: FnMut(ScoreRecord) -> Result<()>,
    {
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        let mut batch = Vec::with_capacity(BATCH);
        let mut total = 0u64;
        let mut pairs = pairs.into_iter().peekable();
        while pairs.peek().is_some() {
            batch.clear();
            for pair in pairs.by_ref().take(BATCH) {
                batch.push(pair?);
            }
            let records: Vec<Result<ScoreRecord>> = match &pool {
                Some(pool) => pool.install(|| batch.par_iter().map(|p| self.score_pair(p)).collect()),
                None => batch.iter().map(|p| self.score_pair(p)).collect(),
            };
            for r in records {
                sink(r?)?;
                total += 1;
            }
        }
        Ok(total)
    }

    pub fn score_corpus<I>(&self, pairs: I, workers: usize) -> Result<Vec<ScoreRecord>>
    where
        I: IntoIterator<Item = Result<SentencePair>>,
    {
        let mut out = Vec::new();
        self.score_stream(pairs, workers, |r| {
            out.push(r);
            Ok(())
        })?;
        Ok(out)
    }
}
