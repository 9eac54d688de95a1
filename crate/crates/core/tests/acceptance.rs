//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --release --test acceptance`.
//! Pass criterion numbers as arguments to run a subset.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bitext_filter::corpus::{CorpusStream, PairWriter, Provenance, ReadOptions, Sentence, SentencePair};
use bitext_filter::lexical::{Direction, LexicalTranslationModel, Model1Config};
use bitext_filter::ngram::{NgramConfig, NgramLanguageModel};
use bitext_filter::noise::{evaluate_filter, inject_noise, FilterReport, NoiseSpec};
use bitext_filter::scoring::{
    adequacy, combined_score, domain_score, write_record, CorpusScorer, ScoreReader, ScoreRecord, SCORE_HEADER,
};
use bitext_filter::selection::{check_weight_alignment, emit_weights, extract_selected, select_top_n, SortOptions};
use bitext_filter::synthetic::{SyntheticConfig, SyntheticLanguage};
use bitext_filter::tokenize;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("{what} took {elapsed:.2?}, limit {limit:?}")
    })
}

fn pair(id: u64, src: &str, tgt: &str) -> SentencePair {
    SentencePair {
        id,
        src: tokenize(src, false),
        tgt: tokenize(tgt, false),
        provenance: Provenance::Candidate,
    }
}

/// Peak resident set size of this process in bytes (Linux only).
fn peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

// 1 -------------------------------------------------------------------------

fn reference_scores(h: [f64; 4]) -> (f64, f64, f64) {
    let [hf, hr, hi, ho] = h;
    let dual = (hf - hr).abs() + 0.5 * (hf + hr);
    let adq = (-dual).exp();
    let ratio = (-(hi - ho)).exp();
    let dom = if ratio < 1.0 { ratio } else { 1.0 };
    (adq, dom, adq * dom)
}

fn score_algebra_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0f64;
    for i in 0..1000 {
        let h: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..25.0));
        let (adq, dom, comb) = reference_scores(h);
        let got_adq = adequacy(h[0], h[1]).map_err(|e| e.to_string())?;
        let got_dom = domain_score(h[2], h[3]).map_err(|e| e.to_string())?;
        let got_comb = combined_score(got_adq, got_dom, false).map_err(|e| e.to_string())?;
        let rec = ScoreRecord::from_cross_entropies(i, h, false).map_err(|e| e.to_string())?;
        for (a, b) in [
            (got_adq, adq),
            (got_dom, dom),
            (got_comb, comb),
            (rec.adq.unwrap(), adq),
            (rec.dom.unwrap(), dom),
            (rec.combined, comb),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(1), "oracle")?;
    Ok(format!(
        "max deviation {worst:e} over 1000 tuples in {:.2?}",
        start.elapsed()
    ))
}

// 2 -------------------------------------------------------------------------

fn hand_values() -> Outcome {
    let e = std::f64::consts::E;
    let r = |x: bitext_filter::Result<f64>| x.map_err(|e| e.to_string());
    let checks = [
        ("adequacy(1,1)", r(adequacy(1.0, 1.0))?, 1.0 / e, 1e-9),
        ("adequacy(1,3)", r(adequacy(1.0, 3.0))?, (-4f64).exp(), 1e-9),
        ("domain_score(2,1)", r(domain_score(2.0, 1.0))?, 1.0 / e, 1e-9),
        ("domain_score(0.5,2)", r(domain_score(0.5, 2.0))?, 1.0, 0.0),
        ("adequacy(0,0)", r(adequacy(0.0, 0.0))?, 1.0, 0.0),
    ];
    for (name, got, want, tol) in checks {
        ensure((got - want).abs() <= tol, || format!("{name} = {got}, expected {want}"))?;
    }
    Ok("5 hand values match".into())
}

// 3 -------------------------------------------------------------------------

fn em_correctness() -> Outcome {
    let toy = [pair(0, "das haus", "the house"), pair(1, "das buch", "the book")];
    let one = Model1Config {
        iterations: 1,
        use_null: false,
        ..Model1Config::default()
    };
    let (m, _) = LexicalTranslationModel::train(&toy, Direction::Forward, one).map_err(|e| e.to_string())?;
    let t = m.prob("das", "the");
    ensure((t - 0.5).abs() <= 1e-9, || format!("t(the|das) = {t}"))?;

    let twenty = Model1Config {
        iterations: 20,
        use_null: true,
        min_gain: f64::NEG_INFINITY,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for c in 0..100 {
        let vocab = rng.gen_range(2..30);
        let n = rng.gen_range(1..40);
        let words = |rng: &mut ChaCha8Rng, prefix: &str| {
            let len = rng.gen_range(1..8);
            (0..len)
                .map(|_| format!("{prefix}{}", rng.gen_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let corpus: Vec<SentencePair> = (0..n)
            .map(|i| {
                let (s, t) = (words(&mut rng, "s"), words(&mut rng, "t"));
                pair(i, &s, &t)
            })
            .collect();
        for dir in [Direction::Forward, Direction::Reverse] {
            let (_, trace) = LexicalTranslationModel::train(&corpus, dir, twenty).map_err(|e| e.to_string())?;
            ensure(trace.log_likelihood.len() == 20, || {
                format!("corpus {c}: {} iterations", trace.log_likelihood.len())
            })?;
            ensure(trace.is_monotone(1e-9), || {
                format!("corpus {c} {dir:?}: trace decreases {trace:?}")
            })?;
        }
    }
    Ok(format!("t(the|das) = {t}; 200 traces of 20 iterations non-decreasing"))
}

// 4 -------------------------------------------------------------------------

fn lm_soundness() -> Outcome {
    let lang = SyntheticLanguage::new(SyntheticConfig::default());
    let text: Vec<Sentence> = lang
        .parallel(2000, 5)
        .into_iter()
        .map(|(_, t)| tokenize(&t, false))
        .collect();
    let lm = NgramLanguageModel::train(&text, NgramConfig::default()).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab: Vec<&str> = lm.predictable().collect();
    let mut worst = 0f64;
    for i in 0..100 {
        // mix of seen histories, sentence starts, and arbitrary word pairs
        let s = &text[rng.gen_range(0..text.len())].tokens;
        let history: Vec<&str> = match i % 3 {
            0 if s.len() >= 2 => {
                let j = rng.gen_range(0..s.len() - 1);
                vec![s[j].as_str(), s[j + 1].as_str()]
            }
            1 => vec!["<s>", s[0].as_str()],
            _ => vec![vocab[rng.gen_range(0..vocab.len())], "never-seen"],
        };
        let total: f64 = vocab.iter().map(|w| lm.prob(&history, w)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst <= 1e-6, || format!("distribution sums off by {worst:e}"))?;

    let uniform = NgramLanguageModel::with_vocabulary(
        NgramConfig {
            order: 3,
            add_k: 0.1,
            min_count: 1,
        },
        ["a", "b"],
    )
    .map_err(|e| e.to_string())?;
    ensure(uniform.vocab_size() == 4, || "uniform model vocabulary is not 4".into())?;
    let h = uniform
        .cross_entropy(&tokenize("a b a", false))
        .map_err(|e| e.to_string())?;
    ensure((h - 4f64.ln()).abs() <= 1e-9, || format!("uniform cross-entropy {h}"))?;
    Ok(format!(
        "100 histories sum to 1 within {worst:e}; uniform-4 cross-entropy {h}"
    ))
}

// shared scoring setup ------------------------------------------------------

struct Scorers {
    fwd: LexicalTranslationModel,
    rev: LexicalTranslationModel,
    in_lm: NgramLanguageModel,
    out_lm: NgramLanguageModel,
}

impl Scorers {
    /// Translation models and the in-domain LM on held-out clean pairs; the
    /// general LM on the target side of `pool`.
    fn train(clean: &[SentencePair], pool: &[SentencePair]) -> Result<Self, String> {
        let cfg = Model1Config::default();
        let (fwd, _) = LexicalTranslationModel::train(clean, Direction::Forward, cfg).map_err(|e| e.to_string())?;
        let (rev, _) = LexicalTranslationModel::train(clean, Direction::Reverse, cfg).map_err(|e| e.to_string())?;
        let in_lm = NgramLanguageModel::train(clean.iter().map(|p| &p.tgt), NgramConfig::default())
            .map_err(|e| e.to_string())?;
        let out_lm = NgramLanguageModel::train(pool.iter().map(|p| &p.tgt), NgramConfig::default())
            .map_err(|e| e.to_string())?;
        Ok(Scorers {
            fwd,
            rev,
            in_lm,
            out_lm,
        })
    }

    fn scorer(&self) -> CorpusScorer<'_> {
        CorpusScorer::new(&self.fwd, &self.rev, &self.in_lm, &self.out_lm)
    }
}

fn synthetic_pairs(lang: &SyntheticLanguage, n: usize, seed: u64) -> Vec<SentencePair> {
    lang.parallel(n, seed)
        .iter()
        .enumerate()
        .map(|(i, (s, t))| pair(i as u64, s, t))
        .collect()
}

fn write_tsv(path: &Path, pairs: impl IntoIterator<Item = (String, String)>) -> std::io::Result<u64> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for (s, t) in pairs {
        writeln!(w, "{s}\t{t}")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

fn open_tsv(path: &Path) -> Result<CorpusStream, String> {
    CorpusStream::open_tsv(path, ReadOptions::default()).map_err(|e| e.to_string())
}

fn score_file(scorers: &Scorers, corpus: &Path, out: &Path, workers: usize) -> Result<u64, String> {
    let mut w = BufWriter::new(File::create(out).map_err(|e| e.to_string())?);
    writeln!(w, "{SCORE_HEADER}").map_err(|e| e.to_string())?;
    let n = scorers
        .scorer()
        .score_stream(open_tsv(corpus)?, workers, |r| {
            write_record(&mut w, &r)?;
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    w.flush().map_err(|e| e.to_string())?;
    Ok(n)
}

fn read_scores(path: &Path) -> Result<ScoreReader<BufReader<File>>, String> {
    Ok(ScoreReader::new(BufReader::new(
        File::open(path).map_err(|e| e.to_string())?,
    )))
}

/// Scores, selects the top `n`, extracts and writes weights under `prefix`.
fn score_select(
    scorers: &Scorers,
    corpus: &Path,
    prefix: &str,
    dir: &Path,
    n: u64,
    workers: usize,
    memory_budget: usize,
) -> Result<Vec<std::path::PathBuf>, String> {
    let scores = dir.join(format!("{prefix}.scores.tsv"));
    let size = score_file(scorers, corpus, &scores, workers)?;
    let opts = SortOptions {
        memory_budget,
        workers,
        temp_dir: Some(dir.to_owned()),
    };
    let sel = select_top_n(read_scores(&scores)?, n, &opts).map_err(|e| e.to_string())?;
    let selected = dir.join(format!("{prefix}.selected.tsv"));
    let mut writer = PairWriter::Tsv(BufWriter::new(File::create(&selected).map_err(|e| e.to_string())?));
    extract_selected(open_tsv(corpus)?, &sel, &mut writer).map_err(|e| e.to_string())?;
    drop(writer);
    let weights = dir.join(format!("{prefix}.weights"));
    let wf = BufWriter::new(File::create(&weights).map_err(|e| e.to_string())?);
    emit_weights(read_scores(&scores)?, size, wf).map_err(|e| e.to_string())?;
    Ok(vec![scores, selected, weights])
}

fn same_bytes(a: &Path, b: &Path) -> Result<bool, String> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    Ok(read(a)? == read(b)?)
}

// 5 -------------------------------------------------------------------------

fn selection_contract() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let lang = SyntheticLanguage::new(SyntheticConfig::default());
    let clean = synthetic_pairs(&lang, 5000, 51);
    let mut corpus_lines = lang.parallel(100_000, 52);
    // exact duplicates and blanks create ties
    for i in (0..corpus_lines.len()).step_by(97) {
        let j = (i * 7 + 13) % corpus_lines.len();
        corpus_lines[j] = corpus_lines[i].clone();
    }
    for i in (5..corpus_lines.len()).step_by(1009) {
        corpus_lines[i].1.clear();
    }
    let corpus = dir.path().join("corpus.tsv");
    write_tsv(&corpus, corpus_lines).map_err(|e| e.to_string())?;
    let pool: Vec<SentencePair> = synthetic_pairs(&lang, 5000, 53);
    let scorers = Scorers::train(&clean, &pool)?;

    // place the cut inside the largest group of equal scores
    let probe = dir.path().join("probe.scores.tsv");
    score_file(&scorers, &corpus, &probe, 1)?;
    let records: Vec<ScoreRecord> = read_scores(&probe)?
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut groups: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    for r in &records {
        *groups.entry(r.combined.to_bits()).or_default() += 1;
    }
    let (&tie_bits, &tie_size) = groups.iter().max_by_key(|(bits, size)| (**size, **bits)).unwrap();
    let tie_score = f64::from_bits(tie_bits);
    let above = records.iter().filter(|r| r.combined > tie_score).count();
    let n = (above + tie_size / 2) as u64;

    let mut runs = Vec::new();
    for (workers, budget) in [(1, 4 << 30), (2, 4 << 30), (8, 256 << 10)] {
        runs.push(score_select(
            &scorers,
            &corpus,
            &format!("w{workers}"),
            dir.path(),
            n,
            workers,
            budget,
        )?);
    }
    for other in &runs[1..] {
        for (a, b) in runs[0].iter().zip(other) {
            ensure(same_bytes(a, b)?, || {
                format!("{} and {} differ", a.display(), b.display())
            })?;
        }
    }

    ensure(same_bytes(&probe, &runs[0][0])?, || "probe scores differ".into())?;
    let sel = select_top_n(records.iter().cloned().map(Ok), n, &SortOptions::default()).map_err(|e| e.to_string())?;
    let chosen: HashSet<u64> = sel.selected.iter().copied().collect();
    let min_sel = records
        .iter()
        .filter(|r| chosen.contains(&r.pair_id))
        .map(|r| r.combined)
        .fold(f64::INFINITY, f64::min);
    let max_rej = records
        .iter()
        .filter(|r| !chosen.contains(&r.pair_id))
        .map(|r| r.combined)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(min_sel >= max_rej, || {
        format!("partition broken: min selected {min_sel} < max rejected {max_rej}")
    })?;
    ensure(sel.cutoff_score == Some(min_sel), || {
        "cutoff is not the lowest selected score".into()
    })?;

    // among records tied at the cutoff, exactly the lowest ids are kept
    let tied: Vec<&ScoreRecord> = records.iter().filter(|r| r.combined == min_sel).collect();
    let kept = tied.iter().filter(|r| chosen.contains(&r.pair_id)).count();
    ensure(tied.iter().take(kept).all(|r| chosen.contains(&r.pair_id)), || {
        "tie-break is not by ascending id".into()
    })?;
    ensure(tied.iter().skip(kept).all(|r| !chosen.contains(&r.pair_id)), || {
        "tie-break is not by ascending id".into()
    })?;
    ensure(kept > 0 && kept < tied.len(), || {
        format!("cut does not split the tie group ({kept} of {})", tied.len())
    })?;

    let weights_file = BufReader::new(File::open(&runs[0][2]).map_err(|e| e.to_string())?);
    let lines = check_weight_alignment(open_tsv(&corpus)?, weights_file).map_err(|e| e.to_string())?;
    ensure(lines == 100_000, || format!("weight file has {lines} lines"))?;

    within(start.elapsed(), Duration::from_secs(30), "selection contract")?;
    Ok(format!(
        "identical outputs for 1/2/8 workers (8 with spilled sort); cut splits a group of {} tied records at {}; {lines} aligned weights; {:.2?}",
        tied.len(),
        tie_score,
        start.elapsed()
    ))
}

// 6 -------------------------------------------------------------------------

fn filtering_power() -> Outcome {
    let start = Instant::now();
    let lang = SyntheticLanguage::new(SyntheticConfig::default());
    let candidates = synthetic_pairs(&lang, 10_000, 61);
    let held_out = synthetic_pairs(&lang, 10_000, 62);
    let third: Vec<Sentence> = lang
        .third_language(2000, 63)
        .iter()
        .map(|s| tokenize(s, false))
        .collect();

    let spec = NoiseSpec::uniform(0.2, 64);
    let labeled = inject_noise(candidates, &spec, Some(&third)).map_err(|e| e.to_string())?;
    let noisy: Vec<SentencePair> = labeled.iter().map(|lp| lp.pair.clone()).collect();
    let labels: Vec<_> = labeled.iter().map(|lp| (lp.pair.id, lp.label)).collect();

    let scorers = Scorers::train(&held_out, &noisy)?;
    let records = scorers
        .scorer()
        .score_corpus(
            noisy.into_iter().map(Ok),
            std::thread::available_parallelism().map_or(1, |n| n.get()),
        )
        .map_err(|e| e.to_string())?;
    let report: FilterReport = evaluate_filter(&records, &labels).map_err(|e| e.to_string())?;
    let (auc, auc_adq, auc_dom) = (
        report.auc.unwrap_or(0.0),
        report.auc_adq.unwrap_or(0.0),
        report.auc_dom.unwrap_or(0.0),
    );
    let elapsed = start.elapsed();
    let kinds: Vec<String> = report
        .mean_by_kind
        .iter()
        .map(|(k, _, m)| format!("{k} {m:.3}"))
        .collect();
    let summary = format!(
        "AUC {auc:.4} (adq {auc_adq:.4}, dom {auc_dom:.4}), precision@{} {:.4}, mean clean {:.3}, {}; {elapsed:.2?}",
        report.k,
        report.precision_at_k,
        report.mean_clean.unwrap_or(0.0),
        kinds.join(", ")
    );
    ensure(auc >= 0.95, || format!("AUC below 0.95: {summary}"))?;
    ensure(report.precision_at_k >= 0.90, || {
        format!("precision below 0.90: {summary}")
    })?;
    ensure(auc > auc_adq && auc > auc_dom, || {
        format!("combined not above both parts: {summary}")
    })?;
    within(elapsed, Duration::from_secs(300), "filtering experiment")?;
    Ok(summary)
}

// 7 -------------------------------------------------------------------------

fn scale_smoke() -> Outcome {
    const N: usize = 1_000_000;
    const BUDGET: u64 = 4 << 30;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let lang = SyntheticLanguage::new(SyntheticConfig::default());
    let corpus = dir.path().join("big.tsv");
    {
        let mut lines = Vec::with_capacity(N);
        for chunk in 0..10 {
            lines.extend(lang.parallel(N / 10, 700 + chunk));
        }
        write_tsv(&corpus, lines).map_err(|e| e.to_string())?;
    }
    let clean = synthetic_pairs(&lang, 20_000, 71);
    let pool: Vec<SentencePair> = open_tsv(&corpus)?
        .take(20_000)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let scorers = Scorers::train(&clean, &pool)?;

    let start = Instant::now();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let a = score_select(&scorers, &corpus, "a", dir.path(), (N / 4) as u64, workers, 64 << 20)?;
    let elapsed = start.elapsed();
    let b = score_select(
        &scorers,
        &corpus,
        "b",
        dir.path(),
        (N / 4) as u64,
        workers.min(2),
        64 << 20,
    )?;
    for (x, y) in a.iter().zip(&b) {
        ensure(same_bytes(x, y)?, || {
            format!("{} and {} differ", x.display(), y.display())
        })?;
    }
    let selected = std::fs::read_to_string(&a[1])
        .map_err(|e| e.to_string())?
        .lines()
        .count();
    ensure(selected == N / 4, || format!("{selected} pairs extracted"))?;
    let rss = peak_rss();
    if let Some(rss) = rss {
        ensure(rss < BUDGET, || format!("peak RSS {} MiB", rss >> 20))?;
    }
    within(elapsed, Duration::from_secs(600), "score + select")?;
    Ok(format!(
        "1M pairs scored and selected in {elapsed:.2?} on {workers} workers; peak RSS {}; rerun identical",
        rss.map_or("unknown".into(), |r| format!("{} MiB", r >> 20))
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 7] = [
        (1, "score-algebra oracle", score_algebra_oracle),
        (2, "hand values", hand_values),
        (3, "EM correctness", em_correctness),
        (4, "LM soundness", lm_soundness),
        (5, "selection contract", selection_contract),
        (6, "intrinsic filtering power", filtering_power),
        (7, "scale smoke test", scale_smoke),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS {n} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
