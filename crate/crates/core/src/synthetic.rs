//! A toy two-language generator for tests and benchmarks.
//!
//! Source sentences come from a sparse first-order Markov chain over
//! pseudo-words. The target side applies a fixed one-to-one word cipher and
//! occasionally inserts filler words that have no source counterpart. A
//! third cipher provides "wrong language" sentences over the same chain.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub vocab_size: usize,
    /// Successors per word in the Markov chain.
    pub branching: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub filler_words: usize,
    /// Chance that a target sentence receives one filler word.
    pub filler_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            vocab_size: 500,
            branching: 4,
            min_len: 6,
            max_len: 12,
            filler_words: 20,
            filler_rate: 0.3,
            seed: 2018,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    config: SyntheticConfig,
    source: Vec<String>,
    target: Vec<String>,
    third: Vec<String>,
    filler: Vec<String>,
    successors: Vec<Vec<usize>>,
    successor_weights: Vec<WeightedIndex<f64>>,
    starts: WeightedIndex<f64>,
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "kr",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ei"];

fn pseudo_words(
    rng: &mut ChaCha8Rng,
    n: usize,
    prefix: &str,
    taken: &mut std::collections::HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(1..=3);
        let mut w = prefix.to_owned();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl SyntheticLanguage {
    pub fn new(config: SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut taken = std::collections::HashSet::new();
        let v = config.vocab_size.max(2);
        let source = pseudo_words(&mut rng, v, "", &mut taken);
        let target = pseudo_words(&mut rng, v, "", &mut taken);
        let third = pseudo_words(&mut rng, v, "", &mut taken);
        let filler = pseudo_words(&mut rng, config.filler_words.max(1), "", &mut taken);

        // Zipf-like preference inside each successor list
        let branch = config.branching.clamp(1, v);
        let zipf: Vec<f64> = (1..=branch).map(|r| 1.0 / r as f64).collect();
        let successors: Vec<Vec<usize>> = (0..v)
            .map(|_| rand::seq::index::sample(&mut rng, v, branch).into_vec())
            .collect();
        let successor_weights = successors
            .iter()
            .map(|_| WeightedIndex::new(&zipf).expect("positive weights"))
            .collect();
        let start_weights: Vec<f64> = (1..=v).map(|r| 1.0 / r as f64).collect();
        SyntheticLanguage {
            config,
            source,
            target,
            third,
            filler,
            successors,
            successor_weights,
            starts: WeightedIndex::new(&start_weights).expect("positive weights"),
        }
    }

    fn walk(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let len = rng.gen_range(self.config.min_len..=self.config.max_len.max(self.config.min_len));
        let mut w = self.starts.sample(rng);
        let mut out = Vec::with_capacity(len);
        out.push(w);
        while out.len() < len {
            w = self.successors[w][self.successor_weights[w].sample(rng)];
            out.push(w);
        }
        out
    }

    /// `n` aligned `(source, target)` lines.
    pub fn parallel(&self, n: usize, seed: u64) -> Vec<(String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let ids = self.walk(&mut rng);
                let src: Vec<&str> = ids.iter().map(|&i| self.source[i].as_str()).collect();
                let mut tgt: Vec<&str> = ids.iter().map(|&i| self.target[i].as_str()).collect();
                if rng.gen_bool(self.config.filler_rate.clamp(0.0, 1.0)) {
                    let pos = rng.gen_range(0..=tgt.len());
                    tgt.insert(pos, self.filler.choose(&mut rng).unwrap());
                }
                (src.join(" "), tgt.join(" "))
            })
            .collect()
    }

    /// `n` sentences in the third language.
    pub fn third_language(&self, n: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let ids = self.walk(&mut rng);
                ids.iter()
                    .map(|&i| self.third[i].as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    /// The target-side translation of a source word.
    pub fn cipher(&self, source_word: &str) -> Option<&str> {
        self.source
            .iter()
            .position(|w| w == source_word)
            .map(|i| self.target[i].as_str())
    }
}
