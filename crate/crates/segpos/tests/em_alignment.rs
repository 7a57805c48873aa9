//! Independent EM oracle for the lexical translation model.
//!
//! A from-scratch reimplementation over string/char maps (no interning,
//! no shared code) must produce the same tables and log-likelihood
//! trajectory; likelihood must never decrease without smoothing; and a
//! corpus built to disambiguate a shared word must actually converge.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use segpos::aligner::{em_train, EmConfig, ParallelPair, NULL_WORD};

struct HandEm {
    support: BTreeMap<String, BTreeSet<char>>,
    table: BTreeMap<(String, char), f64>,
    log_likelihood: Vec<f64>,
}

fn hand_em(pairs: &[ParallelPair], iterations: usize, smoothing: f64) -> HandEm {
    let mut support: BTreeMap<String, BTreeSet<char>> = BTreeMap::new();
    for pair in pairs {
        for &c in &pair.target {
            support.entry(NULL_WORD.to_owned()).or_default().insert(c);
            for w in &pair.source {
                support.entry(w.clone()).or_default().insert(c);
            }
        }
    }
    let mut table: BTreeMap<(String, char), f64> = BTreeMap::new();
    for (w, chars) in &support {
        for &c in chars {
            table.insert((w.clone(), c), 1.0 / chars.len() as f64);
        }
    }

    let mut log_likelihood = Vec::new();
    for _ in 0..iterations {
        let mut counts: BTreeMap<(String, char), f64> = BTreeMap::new();
        let mut ll = 0.0;
        for pair in pairs {
            let num_sources = (pair.source.len() + 1) as f64;
            for &c in &pair.target {
                let p_null = table[&(NULL_WORD.to_owned(), c)];
                let mut denom = p_null;
                for w in &pair.source {
                    denom += table[&(w.clone(), c)];
                }
                ll += (denom / num_sources).ln();
                *counts.entry((NULL_WORD.to_owned(), c)).or_insert(0.0) += p_null / denom;
                for w in &pair.source {
                    *counts.entry((w.clone(), c)).or_insert(0.0) +=
                        table[&(w.clone(), c)] / denom;
                }
            }
        }
        log_likelihood.push(ll);

        for (w, chars) in &support {
            let total: f64 = chars
                .iter()
                .map(|&c| counts.get(&(w.clone(), c)).copied().unwrap_or(0.0))
                .sum();
            let denom = total + smoothing * chars.len() as f64;
            if denom <= 0.0 {
                continue;
            }
            for &c in chars {
                let count = counts.get(&(w.clone(), c)).copied().unwrap_or(0.0);
                table.insert((w.clone(), c), (count + smoothing) / denom);
            }
        }
    }
    HandEm {
        support,
        table,
        log_likelihood,
    }
}

fn random_corpus(rng: &mut ChaCha20Rng, max_pairs: usize) -> Vec<ParallelPair> {
    let words = ["w0", "w1", "w2", "w3", "w4"];
    let chars = ['a', 'b', 'c', 'd', 'e'];
    (0..rng.random_range(1..=max_pairs))
        .map(|_| {
            let source: Vec<String> = (0..rng.random_range(1..=3))
                .map(|_| words[rng.random_range(0..words.len())].to_owned())
                .collect();
            let target: Vec<char> = (0..rng.random_range(1..=4))
                .map(|_| chars[rng.random_range(0..chars.len())])
                .collect();
            ParallelPair::new(source, target)
        })
        .collect()
}

#[test]
fn em_matches_an_independent_reimplementation() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    for case in 0..8 {
        let pairs = random_corpus(&mut rng, 6);
        let smoothing = if case % 2 == 0 { 0.0 } else { 1e-3 };
        let config = EmConfig {
            iterations: 6,
            smoothing,
        };
        let (table, report) = em_train(&pairs, &config).unwrap();
        let oracle = hand_em(&pairs, 6, smoothing);

        assert_eq!(report.log_likelihood.len(), oracle.log_likelihood.len());
        for (i, (a, b)) in report
            .log_likelihood
            .iter()
            .zip(&oracle.log_likelihood)
            .enumerate()
        {
            assert!(
                (a - b).abs() <= 1e-12,
                "case {case}: log-likelihood diverges at iteration {i}: {a} vs {b}"
            );
        }
        for (w, chars) in &oracle.support {
            for &c in chars {
                let got = table.prob(w, c);
                let want = oracle.table[&(w.clone(), c)];
                assert!(
                    (got - want).abs() <= 1e-12,
                    "case {case}: t({c} | {w}) = {got}, oracle {want}"
                );
            }
        }
    }
}

#[test]
fn log_likelihood_never_decreases_without_smoothing() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for case in 0..10 {
        let pairs = random_corpus(&mut rng, 8);
        let config = EmConfig {
            iterations: 15,
            smoothing: 0.0,
        };
        let (_, report) = em_train(&pairs, &config).unwrap();
        for window in report.log_likelihood.windows(2) {
            assert!(
                window[1] >= window[0] - 1e-9,
                "case {case}: likelihood fell from {} to {}",
                window[0],
                window[1]
            );
        }
    }
}

#[test]
fn shared_word_is_disambiguated_within_twenty_iterations() {
    // w1 co-occurs with both a and b, but the single-word pair pins it
    // to a; w2 should inherit b.
    let pairs = vec![
        ParallelPair::new(
            vec!["w1".to_owned(), "w2".to_owned()],
            vec!['a', 'b'],
        ),
        ParallelPair::new(vec!["w1".to_owned()], vec!['a', 'a']),
    ];
    let config = EmConfig {
        iterations: 20,
        smoothing: 0.0,
    };
    let (table, report) = em_train(&pairs, &config).unwrap();
    assert!(
        table.prob("w1", 'a') >= 0.99,
        "t(a | w1) only reached {}",
        table.prob("w1", 'a')
    );
    assert!(
        table.prob("w2", 'b') > table.prob("w2", 'a'),
        "w2 should prefer b"
    );
    for window in report.log_likelihood.windows(2) {
        assert!(window[1] >= window[0] - 1e-9);
    }
}
