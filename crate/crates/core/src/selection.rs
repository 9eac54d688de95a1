//! Ranking, top-N and threshold selection, instance-weight files, and
//! re-extraction of the selected pairs.
//!
//! Ranking is by combined score descending with ties broken by ascending
//! id. When the keys do not fit the memory budget they are sorted in runs,
//! spilled to disk and merged.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use rayon::prelude::*;

use crate::corpus::{PairWriter, SentencePair};
use crate::error::{Error, Result};
use crate::scoring::{format_g6, ScoreRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Ascending.
    pub selected: Vec<u64>,
    /// Combined score of the lowest-ranked selected pair.
    pub cutoff_score: Option<f64>,
    pub n_requested: u64,
    pub n_returned: u64,
}

#[derive(Debug, Clone)]
pub struct SortOptions {
    /// Bytes of sort keys held in memory before spilling a run.
    pub memory_budget: usize,
    pub workers: usize,
    /// Where spill files go; the system temp dir when unset.
    pub temp_dir: Option<PathBuf>,
}

impl Default for SortOptions {
    fn default() -> Self {
        SortOptions {
            memory_budget: 4 << 30,
            workers: 1,
            temp_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct RankKey {
    score: f64,
    id: u64,
}

impl RankKey {
    const BYTES: usize = 16;

    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.score.to_bits().to_le_bytes())?;
        w.write_all(&self.id.to_le_bytes())
    }

    fn read<R: Read>(r: &mut R) -> std::io::Result<Option<Self>> {
        let mut buf = [0u8; Self::BYTES];
        match r.read_exact(&mut buf) {
            Ok(()) => Ok(Some(RankKey {
                score: f64::from_bits(u64::from_le_bytes(buf[..8].try_into().unwrap())),
                id: u64::from_le_bytes(buf[8..].try_into().unwrap()),
            })),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Rank order: higher score first, then lower id.
fn rank(a: &RankKey, b: &RankKey) -> Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

impl PartialEq for RankKey {
    fn eq(&self, other: &Self) -> bool {
        rank(self, other) == Ordering::Equal
    }
}

impl Eq for RankKey {}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        rank(self, other)
    }
}

struct RankSorter {
    opts: SortOptions,
    pool: Option<rayon::ThreadPool>,
    buffer: Vec<RankKey>,
    capacity: usize,
    spill_dir: Option<tempfile::TempDir>,
    runs: Vec<PathBuf>,
}

impl RankSorter {
    fn new(opts: SortOptions) -> Result<Self> {
        let pool = if opts.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(opts.workers)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        let capacity = (opts.memory_budget / RankKey::BYTES).max(1);
        Ok(RankSorter {
            opts,
            pool,
            buffer: Vec::new(),
            capacity,
            spill_dir: None,
            runs: Vec::new(),
        })
    }

    fn sort_buffer(&mut self) {
        match &self.pool {
            Some(pool) => {
                let buf = &mut self.buffer;
                pool.install(|| buf.par_sort_unstable_by(rank));
            }
            None => self.buffer.sort_unstable_by(rank),
        }
    }

    fn push(&mut self, key: RankKey) -> Result<()> {
        self.buffer.push(key);
        if self.buffer.len() >= self.capacity {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        self.sort_buffer();
        if self.spill_dir.is_none() {
            let dir = match &self.opts.temp_dir {
                Some(d) => tempfile::tempdir_in(d),
                None => tempfile::tempdir(),
            }?;
            self.spill_dir = Some(dir);
        }
        let dir = self.spill_dir.as_ref().expect("spill dir").path();
        let path = dir.join(format!("run-{:05}", self.runs.len()));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        for key in &self.buffer {
            key.write(&mut w)?;
        }
        w.flush()?;
        self.runs.push(path);
        self.buffer.clear();
        Ok(())
    }

    /// Returns the first `limit` keys in rank order.
    fn finish(mut self, limit: usize) -> Result<Vec<RankKey>> {
        if self.runs.is_empty() {
            self.sort_buffer();
            self.buffer.truncate(limit);
            return Ok(self.buffer);
        }
        if !self.buffer.is_empty() {
            self.spill()?;
        }
        let mut readers = Vec::with_capacity(self.runs.len());
        for path in &self.runs {
            readers.push(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?));
        }
        let mut heap = BinaryHeap::with_capacity(readers.len());
        for (i, r) in readers.iter_mut().enumerate() {
            if let Some(k) = RankKey::read(r)? {
                heap.push(Reverse((k, i)));
            }
        }
        let mut out = Vec::new();
        while out.len() < limit {
            let Some(Reverse((key, i))) = heap.pop() else { break };
            out.push(key);
            if let Some(k) = RankKey::read(&mut readers[i])? {
                heap.push(Reverse((k, i)));
            }
        }
        Ok(out)
    }
}

/// Keeps the `n` highest-scoring records.
pub fn select_top_n<I>(records: I, n: u64, opts: &SortOptions) -> Result<SelectionResult>
where
    I: IntoIterator<Item = Result<ScoreRecord>>,
{
    let mut sorter = RankSorter::new(opts.clone())?;
    for r in records {
        let r = r?;
        sorter.push(RankKey {
            score: r.combined,
            id: r.pair_id,
        })?;
    }
    let top = sorter.finish(usize::try_from(n).unwrap_or(usize::MAX))?;
    let cutoff_score = top.last().map(|k| k.score);
    let mut selected: Vec<u64> = top.iter().map(|k| k.id).collect();
    selected.sort_unstable();
    Ok(SelectionResult {
        n_returned: selected.len() as u64,
        selected,
        cutoff_score,
        n_requested: n,
    })
}

/// Keeps every record with `combined >= threshold`.
pub fn select_by_threshold<I>(records: I, threshold: f64) -> Result<SelectionResult>
where
    I: IntoIterator<Item = Result<ScoreRecord>>,
{
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut selected = Vec::new();
    let mut cutoff: Option<f64> = None;
    for r in records {
        let r = r?;
        if r.combined >= threshold {
            selected.push(r.pair_id);
            cutoff = Some(cutoff.map_or(r.combined, |c| c.min(r.combined)));
        }
    }
    selected.sort_unstable();
    Ok(SelectionResult {
        n_requested: selected.len() as u64,
        n_returned: selected.len() as u64,
        selected,
        cutoff_score: cutoff,
    })
}

/// Writes one weight per line: line `i` is the combined score of pair `i`.
/// Records must arrive in ascending id order and cover `0..corpus_size`.
pub fn emit_weights<I, W>(records: I, corpus_size: u64, mut out: W) -> Result<()>
where
    I: IntoIterator<Item = Result<ScoreRecord>>,
    W: Write,
{
    let mut expected = 0u64;
    for r in records {
        let r = r?;
        match r.pair_id.cmp(&expected) {
            Ordering::Greater => {
                return Err(Error::Structure(format!(
                    "weights: missing record for pair id {expected}"
                )))
            }
            Ordering::Less => {
                return Err(Error::Structure(format!(
                    "weights: duplicate or out-of-order record for pair id {}",
                    r.pair_id
                )))
            }
            Ordering::Equal => {}
        }
        if expected >= corpus_size {
            return Err(Error::Structure(format!(
                "weights: record for pair id {expected} beyond corpus size {corpus_size}"
            )));
        }
        writeln!(out, "{}", format_g6(r.combined.clamp(0.0, 1.0)))?;
        expected += 1;
    }
    if expected < corpus_size {
        return Err(Error::Structure(format!(
            "weights: missing record for pair id {expected}"
        )));
    }
    out.flush()?;
    Ok(())
}

/// Verifies that a weight file lines up with a corpus: same number of lines
/// and every weight in [0, 1]. Returns the line count.
pub fn check_weight_alignment<I, R>(corpus: I, weights: R) -> Result<u64>
where
    I: IntoIterator<Item = Result<SentencePair>>,
    R: BufRead,
{
    let mut corpus = corpus.into_iter();
    let mut lines = weights.lines();
    let mut n = 0u64;
    loop {
        match (corpus.next().transpose()?, lines.next().transpose()?) {
            (None, None) => return Ok(n),
            (Some(_), Some(line)) => {
                n += 1;
                let w: f64 = line.trim().parse().map_err(|_| Error::Parse {
                    line: n as usize,
                    message: format!("bad weight {line:?}"),
                })?;
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Parse {
                        line: n as usize,
                        message: format!("weight {w} outside [0, 1]"),
                    });
                }
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Structure(format!(
                    "weight file and corpus diverge at line {}",
                    n + 1
                )))
            }
        }
    }
}

/// Copies the selected pairs, in corpus order, in one pass.
pub fn extract_selected<I, W>(corpus: I, selection: &SelectionResult, out: &mut PairWriter<W>) -> Result<u64>
where
    I: IntoIterator<Item = Result<SentencePair>>,
    W: Write,
{
    let wanted = &selection.selected;
    let mut next = 0usize;
    let mut seen = 0u64;
    for pair in corpus {
        if next == wanted.len() {
            break;
        }
        let pair = pair?;
        seen = pair.id + 1;
        if pair.id == wanted[next] {
            out.write_pair(&pair)?;
            next += 1;
        }
    }
    out.flush()?;
    if next < wanted.len() {
        return Err(Error::Structure(format!(
            "selected id {} beyond corpus end ({seen} pairs)",
            wanted[next]
        )));
    }
    Ok(next as u64)
}
