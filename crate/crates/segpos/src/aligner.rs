//! Word-to-character alignment between modern and ancient sentences.
//!
//! The translation model is IBM Model 1: every ancient character of a
//! pair is generated independently by one of the modern words of that
//! pair (or by the special `NULL` word, which absorbs characters with
//! no lexical counterpart). Expectation-maximization over a parallel
//! corpus learns the lexical table `t(char | word)`; per-pair
//! posteriors over the generating word then give each character its
//! most plausible source.

use std::collections::BTreeMap;
use std::collections::HashMap;

use thiserror::Error;

/// Surface form of the NULL source word in table files.
pub const NULL_WORD: &str = "<NULL>";

/// Probabilities below this threshold are dropped when a table is
/// written to disk.
pub const TABLE_WRITE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("parallel corpus is empty")]
    EmptyCorpus,
    #[error("pair {index} has an empty {side} side")]
    EmptySide { index: usize, side: &'static str },
}

/// One sentence pair: modern words (source) and ancient characters
/// (target).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    pub source: Vec<String>,
    pub target: Vec<char>,
}

impl ParallelPair {
    pub fn new(source: Vec<String>, target: Vec<char>) -> ParallelPair {
        ParallelPair { source, target }
    }
}

/// Lexical translation table `t(target char | source word)`.
///
/// Rows are source word types (the NULL word is always id 0); entries
/// absent from a row are zero. After every EM update each row sums to
/// one over the target characters it co-occurs with.
#[derive(Debug, Clone)]
pub struct TranslationTable {
    src_types: Vec<String>,
    src_index: HashMap<String, usize>,
    tgt_types: Vec<char>,
    tgt_index: HashMap<char, usize>,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl TranslationTable {
    /// Builds an empty table whose source vocabulary starts with NULL.
    pub fn new() -> TranslationTable {
        let mut table = TranslationTable {
            src_types: Vec::new(),
            src_index: HashMap::new(),
            tgt_types: Vec::new(),
            tgt_index: HashMap::new(),
            rows: Vec::new(),
        };
        table.intern_source(NULL_WORD);
        table
    }

    pub fn null_id(&self) -> usize {
        0
    }

    pub fn num_source_types(&self) -> usize {
        self.src_types.len()
    }

    pub fn num_target_types(&self) -> usize {
        self.tgt_types.len()
    }

    pub fn source_types(&self) -> &[String] {
        &self.src_types
    }

    pub fn intern_source(&mut self, word: &str) -> usize {
        if let Some(&id) = self.src_index.get(word) {
            return id;
        }
        let id = self.src_types.len();
        self.src_types.push(word.to_owned());
        self.src_index.insert(word.to_owned(), id);
        self.rows.push(BTreeMap::new());
        id
    }

    pub fn intern_target(&mut self, c: char) -> usize {
        if let Some(&id) = self.tgt_index.get(&c) {
            return id;
        }
        let id = self.tgt_types.len();
        self.tgt_types.push(c);
        self.tgt_index.insert(c, id);
        id
    }

    pub fn source_id(&self, word: &str) -> Option<usize> {
        self.src_index.get(word).copied()
    }

    pub fn source_word(&self, id: usize) -> &str {
        &self.src_types[id]
    }

    pub fn target_char(&self, id: usize) -> char {
        self.tgt_types[id]
    }

    pub fn target_id(&self, c: char) -> Option<usize> {
        self.tgt_index.get(&c).copied()
    }

    pub fn prob_by_id(&self, src: usize, tgt: usize) -> f64 {
        self.rows[src].get(&tgt).copied().unwrap_or(0.0)
    }

    /// `t(c | word)`; zero for any pairing never seen in training.
    pub fn prob(&self, word: &str, c: char) -> f64 {
        match (self.source_id(word), self.target_id(c)) {
            (Some(s), Some(t)) => self.prob_by_id(s, t),
            _ => 0.0,
        }
    }

    pub fn set_prob(&mut self, word: &str, c: char, p: f64) {
        let s = self.intern_source(word);
        let t = self.intern_target(c);
        self.rows[s].insert(t, p);
    }

    /// Entries of one row in target-id order.
    pub fn row(&self, src: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[src].iter().map(|(&t, &p)| (t, p))
    }

    /// All entries as `(source word, target char, prob)`, ordered by
    /// source id then target id.
    pub fn entries(&self) -> impl Iterator<Item = (&str, char, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(s, row)| {
            row.iter()
                .map(move |(&t, &p)| (self.src_types[s].as_str(), self.tgt_types[t], p))
        })
    }
}

impl Default for TranslationTable {
    fn default() -> TranslationTable {
        TranslationTable::new()
    }
}

/// Settings for [`em_train`].
#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub iterations: usize,
    /// Additive smoothing applied to expected counts in the M-step.
    pub smoothing: f64,
}

impl Default for EmConfig {
    fn default() -> EmConfig {
        EmConfig {
            iterations: 10,
            smoothing: 1e-6,
        }
    }
}

/// Training trace: the corpus log-likelihood under the table held at
/// the start of each iteration.
#[derive(Debug, Clone, Default)]
pub struct EmReport {
    pub log_likelihood: Vec<f64>,
}

fn check_pairs(pairs: &[ParallelPair]) -> Result<(), AlignError> {
    if pairs.is_empty() {
        return Err(AlignError::EmptyCorpus);
    }
    for (index, pair) in pairs.iter().enumerate() {
        if pair.source.is_empty() {
            return Err(AlignError::EmptySide {
                index,
                side: "source",
            });
        }
        if pair.target.is_empty() {
            return Err(AlignError::EmptySide {
                index,
                side: "target",
            });
        }
    }
    Ok(())
}

/// Trains a Model 1 table with EM.
///
/// The table is initialized uniformly over each source word's
/// co-occurring characters, and every E-step sums posteriors with the
/// NULL word counted as one extra source token per pair. With zero
/// smoothing the reported corpus log-likelihood is non-decreasing
/// across iterations; additive smoothing trades that guarantee for
/// robustness to vanishing counts.
pub fn em_train(
    pairs: &[ParallelPair],
    config: &EmConfig,
) -> Result<(TranslationTable, EmReport), AlignError> {
    check_pairs(pairs)?;

    let mut table = TranslationTable::new();
    // Pre-interned id views of the corpus, and the co-occurrence
    // support of each source type.
    let mut support: Vec<std::collections::BTreeSet<usize>> = vec![Default::default()];
    let mut id_pairs = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let src: Vec<usize> = pair.source.iter().map(|w| table.intern_source(w)).collect();
        let tgt: Vec<usize> = pair.target.iter().map(|&c| table.intern_target(c)).collect();
        support.resize_with(table.num_source_types(), Default::default);
        for &t in &tgt {
            support[table.null_id()].insert(t);
            for &s in &src {
                support[s].insert(t);
            }
        }
        id_pairs.push((src, tgt));
    }
    for (s, row_support) in support.iter().enumerate() {
        let uniform = 1.0 / row_support.len() as f64;
        for &t in row_support {
            table.rows[s].insert(t, uniform);
        }
    }

    let mut report = EmReport::default();
    for _ in 0..config.iterations {
        let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); table.num_source_types()];
        let mut log_likelihood = 0.0;
        for (src, tgt) in &id_pairs {
            let num_sources = (src.len() + 1) as f64;
            for &t in tgt {
                let p_null = table.prob_by_id(table.null_id(), t);
                let mut denom = p_null;
                for &s in src {
                    denom += table.prob_by_id(s, t);
                }
                log_likelihood += (denom / num_sources).ln();
                *counts[table.null_id()].entry(t).or_insert(0.0) += p_null / denom;
                for &s in src {
                    *counts[s].entry(t).or_insert(0.0) += table.prob_by_id(s, t) / denom;
                }
            }
        }
        report.log_likelihood.push(log_likelihood);

        for (s, row_counts) in counts.iter().enumerate() {
            let total: f64 = row_counts.values().sum();
            let denom = total + config.smoothing * support[s].len() as f64;
            if denom <= 0.0 {
                continue;
            }
            let row = &mut table.rows[s];
            row.clear();
            for &t in &support[s] {
                let c = row_counts.get(&t).copied().unwrap_or(0.0);
                row.insert(t, (c + config.smoothing) / denom);
            }
        }
    }
    Ok((table, report))
}

/// Per-character alignment posteriors for one pair.
///
/// Row `j` is the distribution of ancient character `j` over the
/// pair's modern words, in sentence order, with the NULL word last
/// (`row.len() == source.len() + 1`). Rows sum to one; a character
/// with no table mass anywhere gets all its mass on NULL.
pub fn posterior(pair: &ParallelPair, table: &TranslationTable) -> Vec<Vec<f64>> {
    let src_ids: Vec<Option<usize>> = pair.source.iter().map(|w| table.source_id(w)).collect();
    pair.target
        .iter()
        .map(|&c| {
            let mut row = Vec::with_capacity(pair.source.len() + 1);
            let tgt = table.target_id(c);
            for s in &src_ids {
                row.push(match (s, tgt) {
                    (Some(s), Some(t)) => table.prob_by_id(*s, t),
                    _ => 0.0,
                });
            }
            row.push(match tgt {
                Some(t) => table.prob_by_id(table.null_id(), t),
                None => 0.0,
            });
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for p in &mut row {
                    *p /= total;
                }
            } else {
                let null = row.len() - 1;
                row[null] = 1.0;
            }
            row
        })
        .collect()
}

/// One character's link in a one-best alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharLink {
    /// Index of the modern word this character aligns to, or `None`
    /// when the character is unaligned (NULL won, or the winning
    /// posterior fell below the threshold).
    pub word: Option<usize>,
    /// Posterior probability of the winning choice.
    pub prob: f64,
}

/// Per-character one-best alignment of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub links: Vec<CharLink>,
}

impl AlignmentResult {
    /// An alignment with the given word per character, all at
    /// posterior 1. Useful for constructing known-good alignments.
    pub fn from_links(links: impl IntoIterator<Item = Option<usize>>) -> AlignmentResult {
        AlignmentResult {
            links: links
                .into_iter()
                .map(|word| CharLink { word, prob: 1.0 })
                .collect(),
        }
    }
}

/// Picks each character's most probable source word.
///
/// Ties go to the earliest word in the sentence, and NULL loses ties
/// against real words. Characters whose winner is NULL, or whose
/// winning posterior is below `threshold`, come out unaligned.
pub fn best_alignment(
    pair: &ParallelPair,
    table: &TranslationTable,
    threshold: f64,
) -> AlignmentResult {
    let rows = posterior(pair, table);
    let links = rows
        .iter()
        .map(|row| {
            let null = row.len() - 1;
            let mut best = 0usize;
            for (i, &p) in row.iter().enumerate().take(null).skip(1) {
                if p > row[best] {
                    best = i;
                }
            }
            if row[null] > row[best] || pair.source.is_empty() {
                CharLink {
                    word: None,
                    prob: row[null],
                }
            } else if row[best] < threshold {
                CharLink {
                    word: None,
                    prob: row[best],
                }
            } else {
                CharLink {
                    word: Some(best),
                    prob: row[best],
                }
            }
        })
        .collect();
    AlignmentResult { links }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(source: &[&str], target: &str) -> ParallelPair {
        ParallelPair::new(
            source.iter().map(|s| s.to_string()).collect(),
            target.chars().collect(),
        )
    }

    fn no_smoothing(iterations: usize) -> EmConfig {
        EmConfig {
            iterations,
            smoothing: 0.0,
        }
    }

    #[test]
    fn rows_normalize_after_each_m_step() {
        let pairs = vec![pair(&["w1", "w2"], "ab"), pair(&["w1"], "a")];
        let (table, _) = em_train(&pairs, &EmConfig::default()).unwrap();
        for s in 0..table.num_source_types() {
            let sum: f64 = table.row(s).map(|(_, p)| p).sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {s} sums to {sum}");
        }
    }

    #[test]
    fn two_pair_corpus_disambiguates_shared_word() {
        // The shared word w1 and shared char a pin each other down.
        // Here w1 explains two target tokens in its solo sentence, so
        // it outgrows the NULL word and converges geometrically:
        // within 20 iterations nearly all of w1's mass is on a.
        let pairs = vec![pair(&["w1", "w2"], "ab"), pair(&["w1"], "aa")];
        let (table, _) = em_train(&pairs, &no_smoothing(20)).unwrap();
        assert!(
            table.prob("w1", 'a') >= 0.99,
            "t(a|w1) = {}",
            table.prob("w1", 'a')
        );
    }

    #[test]
    fn null_word_slows_the_minimal_disambiguation_corpus() {
        // In the minimal corpus the shared word appears in exactly
        // the same sentences as the NULL word and with the same
        // co-occurrence support, so their rows stay identical forever
        // and they split the shared char's counts evenly. The only
        // force driving t(a|w1) upward is the decaying competition
        // for b, which makes convergence harmonic rather than
        // geometric: well past 0.97 by iteration 20, but past 0.99
        // only after roughly 50 iterations.
        let pairs = vec![pair(&["w1", "w2"], "ab"), pair(&["w1"], "a")];
        let (at_20, _) = em_train(&pairs, &no_smoothing(20)).unwrap();
        let t20 = at_20.prob("w1", 'a');
        assert!((0.97..0.99).contains(&t20), "t(a|w1) after 20 = {t20}");
        assert_eq!(at_20.prob("w1", 'a'), at_20.prob(NULL_WORD, 'a'));
        let (at_60, _) = em_train(&pairs, &no_smoothing(60)).unwrap();
        let t60 = at_60.prob("w1", 'a');
        assert!(t60 >= 0.99, "t(a|w1) after 60 = {t60}");
    }

    #[test]
    fn log_likelihood_never_decreases_without_smoothing() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n_words = rng.random_range(2..6);
            let alphabet: Vec<char> = ('a'..='j').collect();
            let pairs: Vec<ParallelPair> = (0..rng.random_range(3..8))
                .map(|_| {
                    let src: Vec<String> = (0..rng.random_range(1..4))
                        .map(|_| format!("w{}", rng.random_range(0..n_words)))
                        .collect();
                    let tgt: Vec<char> = (0..rng.random_range(1..5))
                        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                        .collect();
                    ParallelPair::new(src, tgt)
                })
                .collect();
            let (_, report) = em_train(&pairs, &no_smoothing(15)).unwrap();
            for w in report.log_likelihood.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9,
                    "log-likelihood dropped: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn single_pair_normalizes_over_cooccurring_chars() {
        let pairs = vec![pair(&["w"], "ab")];
        let (table, _) = em_train(&pairs, &no_smoothing(3)).unwrap();
        let sum = table.prob("w", 'a') + table.prob("w", 'b');
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(table.prob("w", 'z'), 0.0);
    }

    #[test]
    fn empty_corpus_and_empty_sides_error() {
        assert!(matches!(
            em_train(&[], &EmConfig::default()),
            Err(AlignError::EmptyCorpus)
        ));
        let bad = vec![pair(&[], "ab")];
        assert!(matches!(
            em_train(&bad, &EmConfig::default()),
            Err(AlignError::EmptySide { index: 0, .. })
        ));
    }

    #[test]
    fn posterior_rows_sum_to_one() {
        let pairs = vec![pair(&["w1", "w2"], "abc"), pair(&["w2"], "cb")];
        let (table, _) = em_train(&pairs, &EmConfig::default()).unwrap();
        let rows = posterior(&pairs[0], &table);
        assert_eq!(rows.len(), 3);
        for row in rows {
            assert_eq!(row.len(), 3); // two words + NULL
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_with_single_possible_source_is_one() {
        let mut table = TranslationTable::new();
        table.set_prob("w", 'a', 0.5);
        // NULL has no mass on 'a', so the word takes everything.
        let rows = posterior(&pair(&["w"], "a"), &table);
        assert_eq!(rows, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn posterior_of_uniform_table_is_uniform() {
        let mut table = TranslationTable::new();
        table.set_prob(NULL_WORD, 'a', 0.25);
        table.set_prob("w1", 'a', 0.25);
        table.set_prob("w2", 'a', 0.25);
        let rows = posterior(&pair(&["w1", "w2"], "a"), &table);
        for &p in &rows[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unseen_char_falls_back_to_null() {
        let mut table = TranslationTable::new();
        table.set_prob("w", 'a', 1.0);
        let result = best_alignment(&pair(&["w"], "z"), &table, 0.0);
        assert_eq!(result.links[0].word, None);
    }

    #[test]
    fn best_alignment_links_to_clear_winner() {
        let mut table = TranslationTable::new();
        table.set_prob("w1", 'a', 0.7);
        table.set_prob("w2", 'a', 0.2);
        table.set_prob(NULL_WORD, 'a', 0.1);
        let result = best_alignment(&pair(&["w1", "w2"], "a"), &table, 0.0);
        assert_eq!(result.links[0].word, Some(0));
        assert!((result.links[0].prob - 0.7).abs() < 1e-12);
    }

    #[test]
    fn null_winner_means_unaligned() {
        let mut table = TranslationTable::new();
        table.set_prob(NULL_WORD, 'a', 0.8);
        table.set_prob("w", 'a', 0.2);
        let result = best_alignment(&pair(&["w"], "a"), &table, 0.0);
        assert_eq!(result.links[0].word, None);
        assert!((result.links[0].prob - 0.8).abs() < 1e-12);
    }

    #[test]
    fn threshold_cuts_weak_links() {
        let mut table = TranslationTable::new();
        table.set_prob("w1", 'a', 0.5);
        table.set_prob("w2", 'a', 0.4);
        table.set_prob(NULL_WORD, 'a', 0.1);
        let kept = best_alignment(&pair(&["w1", "w2"], "a"), &table, 0.5);
        assert_eq!(kept.links[0].word, Some(0));
        let cut = best_alignment(&pair(&["w1", "w2"], "a"), &table, 0.6);
        assert_eq!(cut.links[0].word, None);
    }

    #[test]
    fn ties_go_to_earliest_word_and_null_loses() {
        let mut table = TranslationTable::new();
        table.set_prob("w1", 'a', 0.25);
        table.set_prob("w2", 'a', 0.25);
        table.set_prob(NULL_WORD, 'a', 0.25);
        // w1 and w2 tie; the earlier word wins. NULL ties too and loses.
        let result = best_alignment(&pair(&["w1", "w2"], "a"), &table, 0.0);
        assert_eq!(result.links[0].word, Some(0));
        // Same word twice: the first occurrence wins.
        let twice = best_alignment(&pair(&["w1", "w1"], "a"), &table, 0.0);
        assert_eq!(twice.links[0].word, Some(0));
    }
}
