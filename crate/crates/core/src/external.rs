//! Cross-entropies computed by some other system (e.g. a neural translation
//! model), supplied as a TSV of `id \t H` with H in nats per token. The
//! token count used for normalization must match this toolkit's
//! whitespace tokenization; language-model scores are expected to include
//! the end-of-sentence event.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ngram::LineCursor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    values: Vec<Option<f64>>,
}

impl ExternalScores {
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = LineCursor::new(reader);
        let mut values: Vec<Option<f64>> = Vec::new();
        while let Some(line) = lines.next()? {
            if line.is_empty() {
                continue;
            }
            let (id, h) = line
                .split_once('\t')
                .ok_or_else(|| lines.error("expected '<id>\\t<cross-entropy>'"))?;
            let id: u64 = id.trim().parse().map_err(|_| lines.error("non-numeric pair id"))?;
            let h: f64 = h
                .trim()
                .parse()
                .ok()
                .filter(|h: &f64| h.is_finite())
                .ok_or_else(|| lines.error(&format!("non-numeric cross-entropy {h:?}")))?;
            let slot = id as usize;
            if slot >= values.len() {
                values.resize(slot + 1, None);
            }
            if values[slot].is_some() {
                return Err(Error::DuplicateId { id, line: lines.line });
            }
            values[slot] = Some(h);
        }
        Ok(ExternalScores { values })
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(BufReader::new(file))
    }

    pub fn get(&self, id: u64) -> Result<f64> {
        self.values
            .get(id as usize)
            .copied()
            .flatten()
            .ok_or(Error::MissingId(id))
    }

    pub fn len(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
