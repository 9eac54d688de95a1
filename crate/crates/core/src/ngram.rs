//! Add-k smoothed n-gram language models over a closed vocabulary.
//!
//! Conditional probabilities are
//!
//! ```text
//! p(w | h) = (c(h, w) + k) / (c(h) + k * V)
//! ```
//!
//! where `V` counts every predictable symbol: the retained words, `</s>` and
//! `<unk>`. `<s>` only ever appears as history. Unseen histories therefore
//! fall back to the uniform distribution `1 / V`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;
const RESERVED: [&str; 3] = [BOS, EOS, UNK];

const MAGIC: &str = "bitext-filter-ngram";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    pub add_k: f64,
    /// Words seen fewer times than this map to `<unk>`.
    pub min_count: u64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: 3,
            add_k: 0.1,
            min_count: 2,
        }
    }
}

impl NgramConfig {
    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(self.add_k.is_finite() && self.add_k > 0.0) {
            return Err(Error::Config(format!(
                "add-k must be finite and > 0, got {}",
                self.add_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NgramLanguageModel {
    config: NgramConfig,
    /// Indexed by word id; the first three entries are the reserved symbols.
    words: Vec<String>,
    index: HashMap<String, u32>,
    ngrams: HashMap<Box<[u32]>, u64>,
    histories: HashMap<Box<[u32]>, u64>,
}

impl PartialEq for NgramLanguageModel {
    fn eq(&self, other: &Self) -> bool {
        self.config.order == other.config.order
            && self.config.add_k.to_bits() == other.config.add_k.to_bits()
            && self.config.min_count == other.config.min_count
            && self.words == other.words
            && self.ngrams == other.ngrams
    }
}

impl NgramLanguageModel {
    /// A model with a fixed vocabulary and no counts: every conditional is
    /// uniform over the words plus `</s>` and `<unk>`.
    pub fn with_vocabulary<I, S>(config: NgramConfig, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        config.validate()?;
        let mut all: Vec<String> = words.into_iter().map(Into::into).collect();
        all.sort();
        all.dedup();
        Ok(Self::from_vocab(config, all))
    }

    fn from_vocab(config: NgramConfig, sorted_words: Vec<String>) -> Self {
        let words: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(sorted_words.into_iter().filter(|w| !RESERVED.contains(&w.as_str())))
            .collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        NgramLanguageModel {
            config,
            words,
            index,
            ngrams: HashMap::new(),
            histories: HashMap::new(),
        }
    }

    /// Trains on every non-blank sentence. Each sentence is padded with
    /// `order - 1` start symbols and closed with one `</s>`.
    pub fn train<'a, I>(sentences: I, config: NgramConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sentence>,
        I::IntoIter: Clone,
    {
        config.validate()?;
        let sentences = sentences.into_iter().filter(|s| !s.is_empty());

        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut n_sentences = 0usize;
        for s in sentences.clone() {
            n_sentences += 1;
            for t in &s.tokens {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        if n_sentences == 0 {
            return Err(Error::Training("language model training stream is empty".into()));
        }
        let mut kept: Vec<String> = freq
            .into_iter()
            .filter(|&(_, c)| c >= config.min_count)
            .map(|(w, _)| w.to_owned())
            .collect();
        kept.sort();
        let mut lm = Self::from_vocab(config, kept);

        let mut seq = Vec::new();
        for s in sentences {
            lm.encode_into(&s.tokens, &mut seq);
            for window in seq.windows(config.order) {
                lm.add_count(window, 1);
            }
        }
        Ok(lm)
    }

    fn add_count(&mut self, ngram: &[u32], count: u64) {
        let (hist, _) = ngram.split_at(ngram.len() - 1);
        *self.ngrams.entry(ngram.into()).or_default() += count;
        *self.histories.entry(hist.into()).or_default() += count;
    }

    fn word_id(&self, w: &str) -> u32 {
        self.index.get(w).copied().filter(|&id| id != BOS_ID).unwrap_or(UNK_ID)
    }

    /// `<s>^(n-1) w_1 .. w_m </s>` as ids.
    fn encode_into<S: AsRef<str>>(&self, tokens: &[S], out: &mut Vec<u32>) {
        out.clear();
        out.extend(std::iter::repeat_n(BOS_ID, self.config.order - 1));
        out.extend(tokens.iter().map(|t| self.word_id(t.as_ref())));
        out.push(EOS_ID);
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn add_k(&self) -> f64 {
        self.config.add_k
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    /// Number of predictable symbols (retained words, `</s>`, `<unk>`).
    pub fn vocab_size(&self) -> usize {
        self.words.len() - 1
    }

    /// Every symbol the model assigns probability to.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.words[1..].iter().map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_id(word) != UNK_ID || word == UNK
    }

    fn log_prob_ids(&self, ngram: &[u32]) -> f64 {
        let (hist, _) = ngram.split_at(ngram.len() - 1);
        let k = self.config.add_k;
        let c_hw = self.ngrams.get(ngram).copied().unwrap_or(0) as f64;
        let c_h = self.histories.get(hist).copied().unwrap_or(0) as f64;
        ((c_hw + k) / (c_h + k * self.vocab_size() as f64)).ln()
    }

    /// `p(word | history)`. History entries may be `<s>`; only the last
    /// `order - 1` of them are used, and a short history is left-padded
    /// with `<s>`.
    pub fn prob(&self, history: &[&str], word: &str) -> f64 {
        let n = self.config.order - 1;
        let mut ids: Vec<u32> = history
            .iter()
            .rev()
            .take(n)
            .map(|&w| if w == BOS { BOS_ID } else { self.word_id(w) })
            .collect();
        ids.resize(n, BOS_ID);
        ids.reverse();
        ids.push(if word == EOS { EOS_ID } else { self.word_id(word) });
        self.log_prob_ids(&ids).exp()
    }

    /// Word-normalized cross-entropy in nats. The `</s>` event counts in
    /// both the sum and the normalizer; unknown tokens score as `<unk>`.
    pub fn cross_entropy_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        let mut seq = Vec::with_capacity(tokens.len() + self.config.order);
        self.encode_into(tokens, &mut seq);
        let sum: f64 = seq.windows(self.config.order).map(|w| self.log_prob_ids(w)).sum();
        Ok(-sum / (tokens.len() + 1) as f64)
    }

    pub fn cross_entropy(&self, sentence: &Sentence) -> Result<f64> {
        self.cross_entropy_tokens(&sentence.tokens)
    }

    pub fn perplexity(&self, sentence: &Sentence) -> Result<f64> {
        self.cross_entropy(sentence).map(f64::exp)
    }

    /// Writes the versioned count file. Probabilities are never stored, so
    /// a reload reproduces them bit for bit.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}\t{VERSION}")?;
        writeln!(w, "order\t{}", self.config.order)?;
        writeln!(w, "add_k\t{}", self.config.add_k)?;
        writeln!(w, "min_count\t{}", self.config.min_count)?;
        writeln!(w, "vocab\t{}", self.words.len() - RESERVED.len())?;
        for word in &self.words[RESERVED.len()..] {
            writeln!(w, "{word}")?;
        }
        let mut entries: Vec<(&[u32], u64)> = self.ngrams.iter().map(|(k, &v)| (&**k, v)).collect();
        entries.sort_unstable();
        writeln!(w, "ngrams\t{}", entries.len())?;
        let mut line = String::new();
        for (ngram, count) in entries {
            line.clear();
            for (i, &id) in ngram.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&self.words[id as usize]);
            }
            writeln!(w, "{line}\t{count}")?;
        }
        writeln!(w, "end")?;
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
                    "n-gram model version {other}, expected {VERSION}"
                )))
            }
            _ => return Err(lines.error("not an n-gram model file")),
        }
        let order: usize = lines.field("order")?;
        let add_k: f64 = lines.field("add_k")?;
        let min_count: u64 = lines.field("min_count")?;
        let config = NgramConfig {
            order,
            add_k,
            min_count,
        };
        config.validate().map_err(|e| lines.error(&e.to_string()))?;

        let n_words: usize = lines.field("vocab")?;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            let word = lines.expect("vocabulary entry")?;
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(lines.error("vocabulary entry must be a single token"));
            }
            words.push(word);
        }
        let mut lm = Self::from_vocab(config, words);
        if lm.words.len() != n_words + RESERVED.len() {
            return Err(lines.error("vocabulary contains reserved symbols"));
        }
        let n_ngrams: usize = lines.field("ngrams")?;
        for _ in 0..n_ngrams {
            let line = lines.expect("n-gram entry")?;
            let (gram, count) = line
                .split_once('\t')
                .ok_or_else(|| lines.error("expected '<ngram>\\t<count>'"))?;
            let count: u64 = count.parse().map_err(|_| lines.error("bad n-gram count"))?;
            let ids = gram
                .split(' ')
                .map(|w| lm.index.get(w).copied())
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| lines.error("n-gram uses a word outside the vocabulary"))?;
            if ids.len() != order {
                return Err(lines.error(&format!("expected {order} words in n-gram")));
            }
            lm.add_count(&ids, count);
        }
        if lines.expect("end marker")? != "end" {
            return Err(lines.error("expected 'end'"));
        }
        Ok(lm)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(BufReader::new(file))
    }
}

/// Line-numbered reader shared by the model file parsers.
pub(crate) struct LineCursor<R> {
    reader: R,
    pub(crate) line: usize,
}

impl<R: BufRead> LineCursor<R> {
    pub(crate) fn new(reader: R) -> Self {
        LineCursor { reader, line: 0 }
    }

    pub(crate) fn next(&mut self) -> Result<Option<String>> {
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        if buf.ends_with('\n') {
            buf.pop();
        }
        Ok(Some(buf))
    }

    pub(crate) fn expect(&mut self, what: &str) -> Result<String> {
        match self.next()? {
            Some(l) => Ok(l),
            None => Err(Error::Parse {
                line: self.line + 1,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    pub(crate) fn error(&self, message: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: message.to_owned(),
        }
    }

    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.expect(key)?;
        match line.split_once('\t') {
            Some((k, v)) if k == key => v
                .parse()
                .map_err(|_| self.error(&format!("bad value for {key}: {v:?}"))),
            _ => Err(self.error(&format!("expected '{key}\\t<value>'"))),
        }
    }
}
