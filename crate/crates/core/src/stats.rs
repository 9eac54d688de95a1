//! Score-file summaries for choosing a selection size.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scoring::{format_g6, ScoreRecord};

pub const HISTOGRAM_BINS: usize = 20;
pub const RETENTION_FRACTIONS: [f64; 4] = [0.10, 0.25, 0.50, 0.75];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStats {
    pub count: usize,
    /// Counts over `[i/20, (i+1)/20)`, the last bin closed at 1.
    pub histogram: [u64; HISTOGRAM_BINS],
    /// 0th, 10th, ..., 100th percentile of the combined score.
    pub deciles: [f64; 11],
    pub blank: usize,
    pub overlong: usize,
    pub trusted: usize,
    /// Lowest combined score kept when retaining each fraction of the
    /// corpus, best first.
    pub retention: Vec<(f64, f64)>,
}

/// Linear-interpolation quantile of ascending `sorted`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize<I>(records: I) -> Result<ScoreStats>
where
    I: IntoIterator<Item = Result<ScoreRecord>>,
{
    let mut scores = Vec::new();
    let mut histogram = [0u64; HISTOGRAM_BINS];
    let (mut blank, mut overlong, mut trusted) = (0, 0, 0);
    for r in records {
        let r = r?;
        let bin = ((r.combined * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
        blank += usize::from(r.flags.blank);
        overlong += usize::from(r.flags.overlong);
        trusted += usize::from(r.flags.trusted);
        scores.push(r.combined);
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("score file has no records".into()));
    }
    scores.sort_by(f64::total_cmp);
    let mut deciles = [0.0; 11];
    for (i, d) in deciles.iter_mut().enumerate() {
        *d = quantile(&scores, i as f64 / 10.0);
    }
    let n = scores.len();
    let retention = RETENTION_FRACTIONS
        .iter()
        .map(|&f| {
            let keep = ((f * n as f64).ceil() as usize).clamp(1, n);
            (f, scores[n - keep])
        })
        .collect();
    Ok(ScoreStats {
        count: n,
        histogram,
        deciles,
        blank,
        overlong,
        trusted,
        retention,
    })
}

impl ScoreStats {
    pub fn median(&self) -> f64 {
        self.deciles[5]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "records\t{}", self.count);
        let _ = writeln!(
            out,
            "blank\t{}\noverlong\t{}\ntrusted\t{}",
            self.blank, self.overlong, self.trusted
        );
        for (i, d) in self.deciles.iter().enumerate() {
            let _ = writeln!(out, "p{}\t{}", i * 10, format_g6(*d));
        }
        for (f, s) in &self.retention {
            let _ = writeln!(out, "keep_{:.0}%\t{}", f * 100.0, format_g6(*s));
        }
        let peak = self.histogram.iter().copied().max().unwrap_or(0).max(1);
        for (i, &c) in self.histogram.iter().enumerate() {
            let lo = i as f64 / HISTOGRAM_BINS as f64;
            let bar = "#".repeat((c * 40 / peak) as usize);
            let _ = writeln!(
                out,
                "[{lo:.2},{:.2}{}\t{c}\t{bar}",
                lo + 0.05,
                if i + 1 == HISTOGRAM_BINS { "]" } else { ")" }
            );
        }
        out
    }
}
