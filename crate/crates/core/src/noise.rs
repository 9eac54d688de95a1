//! Synthetic corruption of clean bitext and intrinsic evaluation of how
//! well a score separates clean from corrupted pairs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, SentencePair};
use crate::error::{Error, Result};
use crate::scoring::ScoreRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CorruptionKind {
    /// Source paired with the target of a different pair.
    Misalign,
    /// Target replaced by the untranslated source.
    CopySource,
    /// Target tokens permuted.
    Shuffle,
    /// Target cut to a prefix of at most half its tokens.
    Truncate,
    /// Target replaced by a sentence in a third language.
    WrongLanguage,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::Misalign,
        CorruptionKind::CopySource,
        CorruptionKind::Shuffle,
        CorruptionKind::Truncate,
        CorruptionKind::WrongLanguage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Misalign => "misalign",
            CorruptionKind::CopySource => "copy",
            CorruptionKind::Shuffle => "shuffle",
            CorruptionKind::Truncate => "truncate",
            CorruptionKind::WrongLanguage => "wrong-language",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub rate: f64,
    /// Proportions indexed like [`CorruptionKind::ALL`].
    pub mix: [f64; 5],
    pub seed: u64,
}

impl NoiseSpec {
    pub fn uniform(rate: f64, seed: u64) -> Self {
        NoiseSpec {
            rate,
            mix: [0.2; 5],
            seed,
        }
    }

    /// Parses `kind=weight,...`; unnamed kinds get 0. `uniform` is accepted
    /// as a shorthand.
    pub fn parse_mix(s: &str) -> Result<[f64; 5]> {
        if s == "uniform" {
            return Ok([0.2; 5]);
        }
        let mut mix = [0.0; 5];
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("mix entry {part:?} is not kind=weight")))?;
            let kind: CorruptionKind = k.trim().parse()?;
            mix[kind.index()] = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad mix weight {v:?}")))?;
        }
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!("noise rate {} outside [0, 1]", self.rate)));
        }
        if self.mix.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::Config("mix proportions must be finite and >= 0".into()));
        }
        let total: f64 = self.mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mix proportions sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn corrupted_count(&self, n: usize) -> usize {
        (self.rate * n as f64).round() as usize
    }

    /// Splits `total` corruptions over kinds by largest remainder.
    fn allocate(&self, total: usize) -> [usize; 5] {
        let quotas: Vec<f64> = self.mix.iter().map(|m| m * total as f64).collect();
        let mut counts = [0usize; 5];
        for (c, q) in counts.iter_mut().zip(&quotas) {
            *c = q.floor() as usize;
        }
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut left = total - counts.iter().sum::<usize>();
        for i in order {
            if left == 0 {
                break;
            }
            if self.mix[i] > 0.0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Clean,
    Corrupted(CorruptionKind),
}

impl Label {
    pub fn is_clean(self) -> bool {
        self == Label::Clean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub pair: SentencePair,
    pub label: Label,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A value derived from `(seed, id)` alone, so assignment does not depend on
/// iteration order.
fn pair_key(seed: u64, id: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream.rotate_left(32)) ^ id)
}

fn joined(tokens: Vec<String>) -> Sentence {
    Sentence {
        raw: tokens.join(" "),
        tokens,
    }
}

/// Corrupts exactly `round(rate * n)` pairs of `clean`. Which pairs, which
/// kind and how are all functions of `(spec.seed, pair id)`.
pub fn inject_noise(
    clean: Vec<SentencePair>,
    spec: &NoiseSpec,
    third_language: Option<&[Sentence]>,
) -> Result<Vec<LabeledPair>> {
    spec.validate()?;
    let n = clean.len();
    if n < 10 {
        return Err(Error::Config(format!(
            "noise injection needs at least 10 pairs, got {n}"
        )));
    }
    let total = spec.corrupted_count(n);
    if spec.rate > 0.0 && total == 0 {
        return Err(Error::Config(format!(
            "rate {} corrupts no pairs of a {n}-pair corpus",
            spec.rate
        )));
    }
    let third = third_language.filter(|t| !t.is_empty());
    if spec.mix[CorruptionKind::WrongLanguage.index()] > 0.0 && third.is_none() {
        return Err(Error::Config(
            "wrong-language corruption needs a third-language file".into(),
        ));
    }

    let mut ranked: Vec<(u64, usize)> = clean
        .iter()
        .enumerate()
        .map(|(i, p)| (pair_key(spec.seed, p.id, 1), i))
        .collect();
    ranked.sort_unstable();
    let mut labels = vec![Label::Clean; n];
    let counts = spec.allocate(total);
    let mut chosen = ranked.iter().map(|&(_, i)| i);
    for (kind, &count) in CorruptionKind::ALL.iter().zip(&counts) {
        for i in chosen.by_ref().take(count) {
            labels[i] = Label::Corrupted(*kind);
        }
    }

    let corrupted: Vec<Option<Sentence>> = labels
        .iter()
        .enumerate()
        .map(|(i, label)| match label {
            Label::Clean => None,
            Label::Corrupted(kind) => Some(corrupt(&clean, i, *kind, third, spec.seed)),
        })
        .collect();

    Ok(clean
        .into_iter()
        .zip(corrupted)
        .zip(labels)
        .map(|((mut pair, tgt), label)| {
            if let Some(tgt) = tgt {
                pair.tgt = tgt;
            }
            LabeledPair { pair, label }
        })
        .collect())
}

fn corrupt(clean: &[SentencePair], i: usize, kind: CorruptionKind, third: Option<&[Sentence]>, seed: u64) -> Sentence {
    let pair = &clean[i];
    let mut rng = ChaCha8Rng::seed_from_u64(pair_key(seed, pair.id, 2));
    match kind {
        CorruptionKind::Misalign => {
            let mut j = i;
            for _ in 0..32 {
                let k = rng.gen_range(0..clean.len() - 1);
                j = if k >= i { k + 1 } else { k };
                if clean[j].tgt.raw != pair.tgt.raw {
                    break;
                }
            }
            clean[j].tgt.clone()
        }
        CorruptionKind::CopySource => pair.src.clone(),
        CorruptionKind::Shuffle => {
            let mut tokens = pair.tgt.tokens.clone();
            if tokens.iter().any(|t| t != &tokens[0]) {
                for _ in 0..32 {
                    tokens.shuffle(&mut rng);
                    if tokens != pair.tgt.tokens {
                        break;
                    }
                }
            }
            joined(tokens)
        }
        CorruptionKind::Truncate => {
            let half = pair.tgt.tokens.len() / 2;
            let keep = if half == 0 { 0 } else { rng.gen_range(1..=half) };
            joined(pair.tgt.tokens[..keep].to_vec())
        }
        CorruptionKind::WrongLanguage => {
            let third = third.expect("checked by caller");
            third[rng.gen_range(0..third.len())].clone()
        }
    }
}

/// Summary of how well the combined score separates clean pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub n: usize,
    pub n_clean: usize,
    pub n_corrupted: usize,
    /// Cut-off used for precision and recall; the clean count by default.
    pub k: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub auc: Option<f64>,
    pub auc_adq: Option<f64>,
    pub auc_dom: Option<f64>,
    pub mean_clean: Option<f64>,
    /// `(kind, pairs of that kind, mean combined score)`.
    pub mean_by_kind: Vec<(CorruptionKind, usize, f64)>,
}

/// Mann-Whitney AUC of `scores` against `positive`; ties count one half.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

pub fn evaluate_filter(scores: &[ScoreRecord], labels: &[(u64, Label)]) -> Result<FilterReport> {
    let k = labels.iter().filter(|(_, l)| l.is_clean()).count();
    evaluate_filter_at(scores, labels, k)
}

pub fn evaluate_filter_at(scores: &[ScoreRecord], labels: &[(u64, Label)], k: usize) -> Result<FilterReport> {
    if scores.len() != labels.len() {
        return Err(Error::Structure(format!(
            "{} score records but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some((r, (id, _))) = scores.iter().zip(labels).find(|(r, (id, _))| r.pair_id != *id) {
        return Err(Error::Structure(format!(
            "score id {} does not match label id {id}",
            r.pair_id
        )));
    }
    let clean: Vec<bool> = labels.iter().map(|(_, l)| l.is_clean()).collect();
    let n_clean = clean.iter().filter(|&&c| c).count();

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .combined
            .total_cmp(&scores[a].combined)
            .then(scores[a].pair_id.cmp(&scores[b].pair_id))
    });
    let k = k.min(scores.len());
    let hits = order[..k].iter().filter(|&&i| clean[i]).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let column = |f: fn(&ScoreRecord) -> f64| scores.iter().map(f).collect::<Vec<f64>>();
    let combined = column(|r| r.combined);
    let mean = |sel: &dyn Fn(Label) -> bool| {
        let v: Vec<f64> = labels
            .iter()
            .zip(&combined)
            .filter(|((_, l), _)| sel(*l))
            .map(|(_, &s)| s)
            .collect();
        (!v.is_empty()).then(|| (v.len(), v.iter().sum::<f64>() / v.len() as f64))
    };
    let mean_by_kind = CorruptionKind::ALL
        .into_iter()
        .filter_map(|kind| mean(&|l| l == Label::Corrupted(kind)).map(|(n, m)| (kind, n, m)))
        .collect();

    Ok(FilterReport {
        n: scores.len(),
        n_clean,
        n_corrupted: scores.len() - n_clean,
        k,
        precision_at_k: ratio(hits, k),
        recall_at_k: ratio(hits, n_clean),
        auc: auc(&combined, &clean),
        auc_adq: auc(&column(|r| r.adq.unwrap_or(0.0)), &clean),
        auc_dom: auc(&column(|r| r.dom.unwrap_or(0.0)), &clean),
        mean_clean: mean(&|l| l.is_clean()).map(|(_, m)| m),
        mean_by_kind,
    })
}

impl FilterReport {
    /// `key\tvalue` lines.
    pub fn to_tsv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"));
        let mut out = String::from("metric\tvalue\n");
        out += &format!(
            "pairs\t{}\nclean\t{}\ncorrupted\t{}\nk\t{}\n",
            self.n, self.n_clean, self.n_corrupted, self.k
        );
        out += &format!(
            "precision_at_k\t{:.6}\nrecall_at_k\t{:.6}\n",
            self.precision_at_k, self.recall_at_k
        );
        out += &format!(
            "auc_combined\t{}\nauc_adq\t{}\nauc_dom\t{}\n",
            opt(self.auc),
            opt(self.auc_adq),
            opt(self.auc_dom)
        );
        out += &format!("mean_combined_clean\t{}\n", opt(self.mean_clean));
        for (kind, n, m) in &self.mean_by_kind {
            out += &format!("mean_combined_{kind}\t{m:.6}\ncount_{kind}\t{n}\n");
        }
        out
    }
}

pub const LABEL_HEADER: &str = "id\tlabel\tkind";

pub fn format_label(id: u64, label: Label) -> String {
    match label {
        Label::Clean => format!("{id}\tclean\t-"),
        Label::Corrupted(kind) => format!("{id}\tcorrupted\t{kind}"),
    }
}

/// Parses a labels TSV (with header).
pub fn parse_labels<R: std::io::BufRead>(reader: R) -> Result<Vec<(u64, Label)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        if i == 0 {
            if line != LABEL_HEADER {
                return Err(err("missing labels header".into()));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, label, kind] = cols[..] else {
            return Err(err(format!("expected 3 columns, found {}", cols.len())));
        };
        let id: u64 = id.parse().map_err(|_| err(format!("bad id {id:?}")))?;
        let label = match (label, kind) {
            ("clean", _) => Label::Clean,
            ("corrupted", k) => Label::Corrupted(k.parse().map_err(|e: Error| err(e.to_string()))?),
            (other, _) => return Err(err(format!("unknown label {other:?}"))),
        };
        out.push((id, label));
    }
    Ok(out)
}
