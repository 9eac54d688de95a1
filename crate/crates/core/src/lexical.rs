//! IBM Model 1 lexical translation tables trained with EM.
//!
//! A model stores `t(generated | given)` and scores a sentence pair with the
//! bag-of-words likelihood
//!
//! ```text
//! P(y_j | x) = 1 / (|x| + null) * sum_i t(y_j | x_i)
//! ```
//!
//! where the optional NULL word is part of every `x`. Training the same
//! corpus in both directions yields the two inverse models used by the dual
//! score.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::ngram::LineCursor;

pub const NULL_WORD: &str = "<NULL>";
/// Token probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-9;

const NULL_ID: u32 = 0;
const MAGIC: &str = "#bitext-filter-lexical";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `t(target | source)`.
    #[default]
    Forward,
    /// `t(source | target)`: the corpus sides are swapped before training.
    Reverse,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwd" | "forward" => Ok(Direction::Forward),
            "rev" | "reverse" => Ok(Direction::Reverse),
            _ => Err(Error::Config(format!("unknown direction {s:?}, expected fwd or rev"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model1Config {
    pub iterations: usize,
    pub use_null: bool,
    /// Stop early once the log-likelihood gain per pair drops below this.
    pub min_gain: f64,
}

impl Default for Model1Config {
    fn default() -> Self {
        Model1Config {
            iterations: 5,
            use_null: true,
            min_gain: 1e-6,
        }
    }
}

/// Corpus log-likelihood (nats) under the parameters entering each E-step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmTrace {
    pub log_likelihood: Vec<f64>,
}

impl EmTrace {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.log_likelihood.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

#[derive(Debug, Default, Clone)]
struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.index.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_owned());
        self.index.insert(w.to_owned(), id);
        id
    }

    fn get(&self, w: &str) -> Option<u32> {
        self.index.get(w).copied()
    }
}

#[derive(Debug, Clone)]
pub struct LexicalTranslationModel {
    direction: Direction,
    use_null: bool,
    given: Vocab,
    generated: Vocab,
    /// One row per given-word id, sorted by generated-word id.
    rows: Vec<Vec<(u32, f64)>>,
}

impl LexicalTranslationModel {
    fn empty(direction: Direction, use_null: bool) -> Self {
        let mut given = Vocab::default();
        given.intern(NULL_WORD);
        LexicalTranslationModel {
            direction,
            use_null,
            given,
            generated: Vocab::default(),
            rows: vec![Vec::new()],
        }
    }

    /// Trains on `pairs`, swapping sides first for [`Direction::Reverse`].
    /// Pairs with a blank side are skipped.
    pub fn train(pairs: &[SentencePair], direction: Direction, config: Model1Config) -> Result<(Self, EmTrace)> {
        let sides = pairs.iter().map(|p| match direction {
            Direction::Forward => (&p.src.tokens[..], &p.tgt.tokens[..]),
            Direction::Reverse => (&p.tgt.tokens[..], &p.src.tokens[..]),
        });
        Self::train_sides(sides, direction, config)
    }

    /// Trains `t(generated | given)` from `(given, generated)` token lists.
    pub fn train_sides<'a, I, S>(sides: I, direction: Direction, config: Model1Config) -> Result<(Self, EmTrace)>
    where
        I: IntoIterator<Item = (&'a [S], &'a [S])>,
        S: AsRef<str> + 'a,
    {
        if config.iterations == 0 {
            return Err(Error::Config("EM needs at least one iteration".into()));
        }
        let mut model = Self::empty(direction, config.use_null);
        let mut corpus: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
        for (given, generated) in sides {
            if given.is_empty() || generated.is_empty() {
                continue;
            }
            let mut g: Vec<u32> = given.iter().map(|w| model.given.intern(w.as_ref())).collect();
            if config.use_null {
                g.push(NULL_ID);
            }
            let e = generated.iter().map(|w| model.generated.intern(w.as_ref())).collect();
            corpus.push((g, e));
        }
        if corpus.is_empty() {
            return Err(Error::Training(
                "translation training corpus has no non-blank pairs".into(),
            ));
        }
        model.init_cooccurrence(&corpus);
        let trace = model.run_em(&corpus, config);
        Ok((model, trace))
    }

    /// Uniform `t` over the generated words co-occurring with each given word.
    fn init_cooccurrence(&mut self, corpus: &[(Vec<u32>, Vec<u32>)]) {
        let mut cooc: Vec<Vec<u32>> = vec![Vec::new(); self.given.words.len()];
        let mut compacted: Vec<usize> = vec![0; cooc.len()];
        for (g, e) in corpus {
            for &s in g {
                let row = &mut cooc[s as usize];
                row.extend_from_slice(e);
                if row.len() > 2 * compacted[s as usize] + 64 {
                    row.sort_unstable();
                    row.dedup();
                    compacted[s as usize] = row.len();
                }
            }
        }
        self.rows = cooc
            .into_iter()
            .map(|mut row| {
                row.sort_unstable();
                row.dedup();
                let p = 1.0 / row.len() as f64;
                row.into_iter().map(|t| (t, p)).collect()
            })
            .collect();
    }

    fn position(&self, given: u32, generated: u32) -> Option<usize> {
        self.rows
            .get(given as usize)?
            .binary_search_by_key(&generated, |&(t, _)| t)
            .ok()
    }

    fn run_em(&mut self, corpus: &[(Vec<u32>, Vec<u32>)], config: Model1Config) -> EmTrace {
        let mut trace = EmTrace::default();
        let mut counts: Vec<Vec<f64>> = self.rows.iter().map(|r| vec![0.0; r.len()]).collect();
        let mut slots: Vec<(usize, f64)> = Vec::new();
        for _ in 0..config.iterations {
            counts.iter_mut().for_each(|c| c.fill(0.0));
            let mut ll = 0.0;
            for (g, e) in corpus {
                let norm = (g.len() as f64).ln();
                for &t in e {
                    slots.clear();
                    let mut den = 0.0;
                    for &s in g {
                        let pos = self.position(s, t).expect("co-occurrence entry");
                        let p = self.rows[s as usize][pos].1;
                        slots.push((pos, p));
                        den += p;
                    }
                    let den = den.max(f64::MIN_POSITIVE);
                    ll += den.ln() - norm;
                    for (&s, &(pos, p)) in g.iter().zip(&slots) {
                        counts[s as usize][pos] += p / den;
                    }
                }
            }
            for (row, c) in self.rows.iter_mut().zip(&counts) {
                let total: f64 = c.iter().sum();
                if total > 0.0 {
                    for (entry, &x) in row.iter_mut().zip(c) {
                        entry.1 = x / total;
                    }
                }
            }
            let gain = trace
                .log_likelihood
                .last()
                .map(|&prev| (ll - prev) / corpus.len() as f64);
            trace.log_likelihood.push(ll);
            if gain.is_some_and(|g| g < config.min_gain) {
                break;
            }
        }
        trace
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn use_null(&self) -> bool {
        self.use_null
    }

    /// `t(generated | given)`; `given` may be [`NULL_WORD`].
    pub fn prob(&self, given: &str, generated: &str) -> f64 {
        match (self.given.get(given), self.generated.get(generated)) {
            (Some(s), Some(t)) => self.position(s, t).map_or(0.0, |pos| self.rows[s as usize][pos].1),
            _ => 0.0,
        }
    }

    /// Sum of `t(. | given)` over the row; 1 for every trained word.
    pub fn row_sum(&self, given: &str) -> Option<f64> {
        let s = self.given.get(given)?;
        Some(self.rows[s as usize].iter().map(|&(_, p)| p).sum())
    }

    /// Every given word with a non-empty row, NULL included.
    pub fn given_words(&self) -> impl Iterator<Item = &str> {
        self.given
            .words
            .iter()
            .zip(&self.rows)
            .filter(|(_, r)| !r.is_empty())
            .map(|(w, _)| w.as_str())
    }

    /// Word-normalized conditional cross-entropy `H(generated | given)` in
    /// nats. Each token probability is floored at [`PROB_FLOOR`].
    pub fn cond_cross_entropy<S: AsRef<str>>(&self, given: &[S], generated: &[S]) -> Result<f64> {
        if generated.is_empty() {
            return Err(Error::EmptySentence);
        }
        if given.is_empty() && !self.use_null {
            return Err(Error::EmptySource);
        }
        // sorted ids make the result exactly invariant to word order
        let mut ids: Vec<u32> = given.iter().filter_map(|w| self.given.get(w.as_ref())).collect();
        if self.use_null {
            ids.push(NULL_ID);
        }
        ids.sort_unstable();
        let mut targets: Vec<Option<u32>> = generated.iter().map(|w| self.generated.get(w.as_ref())).collect();
        targets.sort_unstable();
        let norm = (given.len() + usize::from(self.use_null)) as f64;
        let mut sum = 0.0;
        for target in targets {
            let p = match target {
                Some(t) => {
                    ids.iter()
                        .filter_map(|&s| self.position(s, t).map(|pos| self.rows[s as usize][pos].1))
                        .sum::<f64>()
                        / norm
                }
                None => 0.0,
            };
            sum += p.max(PROB_FLOOR).ln();
        }
        Ok(-sum / generated.len() as f64)
    }

    /// Builds a model from explicit `(given, generated, t)` entries.
    pub fn from_entries<I, S>(direction: Direction, use_null: bool, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: AsRef<str>,
    {
        let mut model = Self::empty(direction, use_null);
        for (i, (g, e, p)) in entries.into_iter().enumerate() {
            model
                .insert(g.as_ref(), e.as_ref(), p)
                .map_err(|message| Error::Parse { line: i + 1, message })?;
        }
        model
            .finish_rows()
            .map_err(|message| Error::Parse { line: 0, message })?;
        Ok(model)
    }

    fn insert(&mut self, given: &str, generated: &str, p: f64) -> std::result::Result<(), String> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(format!("probability {p} outside [0, 1]"));
        }
        let s = self.given.intern(given) as usize;
        let t = self.generated.intern(generated);
        if s >= self.rows.len() {
            self.rows.resize_with(s + 1, Vec::new);
        }
        self.rows[s].push((t, p));
        Ok(())
    }

    fn finish_rows(&mut self) -> std::result::Result<(), String> {
        for (s, row) in self.rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(t, _)| t);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(format!(
                    "duplicate entry ({}, {})",
                    self.given.words[s], self.generated.words[w[0].0 as usize]
                ));
            }
        }
        Ok(())
    }

    /// Versioned TSV: two header lines then `given\tgenerated\tprob`.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}\t{VERSION}")?;
        writeln!(w, "#direction\t{}\tnull\t{}", self.direction.as_str(), self.use_null)?;
        for (s, row) in self.rows.iter().enumerate() {
            let given = &self.given.words[s];
            for &(t, p) in row {
                writeln!(w, "{given}\t{}\t{p}", self.generated.words[t as usize])?;
            }
        }
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.save(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = LineCursor::new(reader);
        let header = lines.expect("header")?;
        match header.split_once('\t') {
            Some((MAGIC, VERSION)) => {}
            Some((MAGIC, other)) => {
                return Err(Error::Incompatible(format!(
                    "lexical model version {other}, expected {VERSION}"
                )))
            }
            _ => return Err(lines.error("not a lexical translation model file")),
        }
        let meta = lines.expect("direction line")?;
        let fields: Vec<&str> = meta.split('\t').collect();
        let (direction, use_null) = match fields[..] {
            ["#direction", d, "null", n] => (
                d.parse::<Direction>().map_err(|_| lines.error("bad direction"))?,
                n.parse::<bool>().map_err(|_| lines.error("bad null flag"))?,
            ),
            _ => return Err(lines.error("expected '#direction\\t<dir>\\tnull\\t<bool>'")),
        };
        let mut model = Self::empty(direction, use_null);
        while let Some(line) = lines.next()? {
            let mut cols = line.split('\t');
            let (Some(g), Some(e), Some(p), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(lines.error("expected 3 tab-separated columns"));
            };
            let p: f64 = p.parse().map_err(|_| lines.error("non-numeric probability"))?;
            model.insert(g, e, p).map_err(|m| lines.error(&m))?;
        }
        model.finish_rows().map_err(|m| lines.error(&m))?;
        Ok(model)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(BufReader::new(file))
    }
}
