//! Streaming access to monolingual and parallel corpora.
//!
//! Input is UTF-8, one sentence per LF-terminated line, either as twin files
//! (`corpus.src`, `corpus.tgt`) or as a two-column TSV. Tokenization is a
//! plain whitespace split with optional lowercasing; anything fancier
//! (true-casing, BPE) is expected to happen upstream.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sentences longer than this many tokens are flagged by the scorer.
pub const DEFAULT_MAX_TOKENS: usize = 250;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    /// The input line without its terminating newline.
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits `line` into maximal non-whitespace runs.
pub fn tokenize(line: &str, lowercase: bool) -> Sentence {
    let tokens = line
        .split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_owned() })
        .collect();
    Sentence {
        raw: line.to_owned(),
        tokens,
    }
}

/// Like [`tokenize`] but validates UTF-8 first; the error carries the offset
/// of the first invalid byte.
pub fn tokenize_bytes(bytes: &[u8], lowercase: bool) -> Result<Sentence> {
    let line = std::str::from_utf8(bytes).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })?;
    Ok(tokenize(line, lowercase))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Provenance {
    /// Clean data whose adequacy is fixed at 1.
    Trusted,
    #[default]
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    /// Zero-based line index in the input.
    pub id: u64,
    pub src: Sentence,
    pub tgt: Sentence,
    pub provenance: Provenance,
}

impl SentencePair {
    pub fn is_blank(&self) -> bool {
        self.src.is_empty() || self.tgt.is_empty()
    }

    pub fn is_overlong(&self, max_tokens: usize) -> bool {
        self.src.len() > max_tokens || self.tgt.len() > max_tokens
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub lowercase: bool,
    pub provenance: Provenance,
}

/// Reads LF-terminated lines as raw bytes, tracking line numbers and byte
/// offsets for diagnostics.
struct LineReader {
    inner: Box<dyn BufRead + Send>,
    buf: Vec<u8>,
    offset: usize,
    lines: usize,
}

impl LineReader {
    fn new(inner: Box<dyn BufRead + Send>) -> Self {
        LineReader {
            inner,
            buf: Vec::with_capacity(256),
            offset: 0,
            lines: 0,
        }
    }

    fn next_line(&mut self) -> Result<Option<&str>> {
        self.buf.clear();
        let n = self.inner.read_until(b'\n', &mut self.buf)?;
        if n == 0 {
            return Ok(None);
        }
        let start = self.offset;
        self.offset += n;
        self.lines += 1;
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
        }
        std::str::from_utf8(&self.buf).map(Some).map_err(|e| Error::Decode {
            offset: start + e.valid_up_to(),
        })
    }
}

enum PairSource {
    Twin { src: LineReader, tgt: LineReader },
    Tsv(LineReader),
    Memory(std::vec::IntoIter<(String, String)>),
}

/// Single-pass iterator over the pairs of a parallel corpus.
pub struct CorpusStream {
    source: PairSource,
    opts: ReadOptions,
    count: u64,
    done: bool,
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Box::new(BufReader::with_capacity(1 << 16, file)))
}

/// Counts lines the way [`LineReader`] does: a trailing unterminated line
/// still counts.
pub fn count_lines(path: &Path) -> Result<u64> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; 1 << 16];
    let mut lines = 0u64;
    let mut last = b'\n';
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lines += buf[..n].iter().filter(|&&b| b == b'\n').count() as u64;
        last = buf[n - 1];
    }
    if last != b'\n' {
        lines += 1;
    }
    Ok(lines)
}

impl CorpusStream {
    pub fn twin<S, T>(src: S, tgt: T, opts: ReadOptions) -> Self
    where
        S: BufRead + Send + 'static,
        T: BufRead + Send + 'static,
    {
        Self::with_source(
            PairSource::Twin {
                src: LineReader::new(Box::new(src)),
                tgt: LineReader::new(Box::new(tgt)),
            },
            opts,
        )
    }

    pub fn tsv<R: BufRead + Send + 'static>(reader: R, opts: ReadOptions) -> Self {
        Self::with_source(PairSource::Tsv(LineReader::new(Box::new(reader))), opts)
    }

    pub fn from_pairs<I, S, T>(pairs: I, opts: ReadOptions) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let pairs: Vec<(String, String)> = pairs.into_iter().map(|(s, t)| (s.into(), t.into())).collect();
        Self::with_source(PairSource::Memory(pairs.into_iter()), opts)
    }

    /// Opens twin files. Line counts of regular files are compared before
    /// anything is yielded; other inputs are checked on exhaustion.
    pub fn open_twin(src: &Path, tgt: &Path, opts: ReadOptions) -> Result<Self> {
        let seekable = |p: &Path| p.metadata().map(|m| m.is_file()).unwrap_or(false);
        if seekable(src) && seekable(tgt) {
            let (ns, nt) = (count_lines(src)?, count_lines(tgt)?);
            if ns != nt {
                return Err(Error::Structure(format!(
                    "line count mismatch: {} has {ns} lines, {} has {nt}; first divergent line {}",
                    src.display(),
                    tgt.display(),
                    ns.min(nt) + 1
                )));
            }
        }
        Ok(Self::with_source(
            PairSource::Twin {
                src: LineReader::new(open_reader(src)?),
                tgt: LineReader::new(open_reader(tgt)?),
            },
            opts,
        ))
    }

    pub fn open_tsv(path: &Path, opts: ReadOptions) -> Result<Self> {
        Ok(Self::with_source(
            PairSource::Tsv(LineReader::new(open_reader(path)?)),
            opts,
        ))
    }

    fn with_source(source: PairSource, opts: ReadOptions) -> Self {
        CorpusStream {
            source,
            opts,
            count: 0,
            done: false,
        }
    }

    /// Pairs yielded so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    fn next_raw(&mut self) -> Result<Option<(Sentence, Sentence)>> {
        let lc = self.opts.lowercase;
        match &mut self.source {
            PairSource::Twin { src, tgt } => {
                let s = src.next_line()?.map(|l| tokenize(l, lc));
                let t = tgt.next_line()?.map(|l| tokenize(l, lc));
                match (s, t) {
                    (Some(s), Some(t)) => Ok(Some((s, t))),
                    (None, None) => Ok(None),
                    (Some(_), None) | (None, Some(_)) => Err(Error::Structure(format!(
                        "source and target differ in length; first divergent line {}",
                        self.count + 1
                    ))),
                }
            }
            PairSource::Tsv(reader) => {
                let line_no = reader.lines + 1;
                let Some(line) = reader.next_line()? else {
                    return Ok(None);
                };
                let mut cols = line.split('\t');
                let (s, t) = (cols.next().unwrap_or(""), cols.next());
                let extra = cols.count();
                match t {
                    Some(t) if extra == 0 => Ok(Some((tokenize(s, lc), tokenize(t, lc)))),
                    _ => Err(Error::Format {
                        line: line_no,
                        message: format!("expected 2 tab-separated columns, found {}", line.split('\t').count()),
                    }),
                }
            }
            PairSource::Memory(it) => Ok(it.next().map(|(s, t)| (tokenize(&s, lc), tokenize(&t, lc)))),
        }
    }
}

impl Iterator for CorpusStream {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_raw() {
            Ok(Some((src, tgt))) => {
                let id = self.count;
                self.count += 1;
                Some(Ok(SentencePair {
                    id,
                    src,
                    tgt,
                    provenance: self.opts.provenance,
                }))
            }
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Streams a monolingual file, one sentence per line.
pub fn read_mono(path: &Path, lowercase: bool) -> Result<impl Iterator<Item = Result<Sentence>>> {
    let mut reader = LineReader::new(open_reader(path)?);
    let mut done = false;
    Ok(std::iter::from_fn(move || {
        if done {
            return None;
        }
        match reader.next_line() {
            Ok(Some(line)) => Some(Ok(tokenize(line, lowercase))),
            Ok(None) => {
                done = true;
                None
            }
            Err(e) => {
                done = true;
                Some(Err(e))
            }
        }
    }))
}

/// Uniform reservoir sample (Algorithm R) of `n` items, returned in stream
/// order. The whole stream is consumed so that read errors surface.
pub fn reservoir_sample<T, I>(items: I, n: usize, seed: u64) -> Result<Vec<T>>
where
    I: IntoIterator<Item = Result<T>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<(u64, T)> = Vec::with_capacity(n.min(1 << 20));
    for (seen, item) in (0u64..).zip(items) {
        let item = item?;
        if reservoir.len() < n {
            reservoir.push((seen, item));
        } else if n > 0 {
            let j = rng.gen_range(0..=seen);
            if (j as usize) < n {
                reservoir[j as usize] = (seen, item);
            }
        }
    }
    reservoir.sort_unstable_by_key(|&(i, _)| i);
    Ok(reservoir.into_iter().map(|(_, item)| item).collect())
}

/// Uniform sample of `n` pairs in ascending id order.
pub fn sample<I>(stream: I, n: usize, seed: u64) -> Result<Vec<SentencePair>>
where
    I: IntoIterator<Item = Result<SentencePair>>,
{
    reservoir_sample(stream, n, seed)
}

/// Output side of a parallel corpus: twin files or a TSV.
pub enum PairWriter<W: Write> {
    Twin { src: W, tgt: W },
    Tsv(W),
}

impl<W: Write> PairWriter<W> {
    pub fn write_pair(&mut self, pair: &SentencePair) -> Result<()> {
        match self {
            PairWriter::Twin { src, tgt } => {
                writeln!(src, "{}", pair.src.raw)?;
                writeln!(tgt, "{}", pair.tgt.raw)?;
            }
            PairWriter::Tsv(w) => {
                if pair.src.raw.contains('\t') || pair.tgt.raw.contains('\t') {
                    return Err(Error::Format {
                        line: pair.id as usize + 1,
                        message: "tab inside a sentence cannot be written as TSV".into(),
                    });
                }
                writeln!(w, "{}\t{}", pair.src.raw, pair.tgt.raw)?;
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            PairWriter::Twin { src, tgt } => {
                src.flush()?;
                tgt.flush()
            }
            PairWriter::Tsv(w) => w.flush(),
        }
    }
}
