//! Span-based scoring of segmentation and tagging output.
//!
//! Tag sequences are decoded into word spans; a predicted word counts
//! as correct when a gold word has the same character range
//! (segmentation mode) or the same range and POS (tagging mode).
//! Precision, recall, and F1 are micro-averaged over the corpus.
//! Words with unknown POS cannot be credited or penalized for their
//! POS, so they are left out of tagging-mode counts entirely; they
//! still count as ordinary words in segmentation mode.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tagset::{decode_tags, HybridTag};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{gold} gold sentences but {predicted} predicted")]
    CorpusLengthMismatch { gold: usize, predicted: usize },
    #[error("sentence {index}: gold has {gold} tags but prediction has {predicted}")]
    SentenceLengthMismatch {
        index: usize,
        gold: usize,
        predicted: usize,
    },
}

/// What counts as a correct word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Character range must match.
    Segmentation,
    /// Character range and POS must match.
    Tagging,
}

/// Micro-averaged counts and derived scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    fn from_counts(gold: usize, predicted: usize, matched: usize) -> Metrics {
        let precision = if predicted == 0 {
            0.0
        } else {
            matched as f64 / predicted as f64
        };
        let recall = if gold == 0 {
            0.0
        } else {
            matched as f64 / gold as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            gold,
            predicted,
            matched,
            precision,
            recall,
            f1,
        }
    }
}

/// Scores predicted tag sequences against gold ones.
///
/// Gold and prediction must pair up sentence by sentence with equal
/// lengths. Both sides are decoded with the repairing decoder, so any
/// tag sequence is scoreable.
pub fn score(
    gold: &[Vec<HybridTag>],
    predicted: &[Vec<HybridTag>],
    mode: ScoreMode,
) -> Result<Metrics, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::CorpusLengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut gold_count = 0;
    let mut predicted_count = 0;
    let mut matched = 0;
    for (index, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::SentenceLengthMismatch {
                index,
                gold: g.len(),
                predicted: p.len(),
            });
        }
        match mode {
            ScoreMode::Segmentation => {
                let gold_spans: HashSet<(usize, usize)> = decode_tags(g)
                    .into_iter()
                    .map(|s| (s.start, s.end))
                    .collect();
                let pred_spans: Vec<(usize, usize)> = decode_tags(p)
                    .into_iter()
                    .map(|s| (s.start, s.end))
                    .collect();
                gold_count += gold_spans.len();
                predicted_count += pred_spans.len();
                matched += pred_spans
                    .iter()
                    .filter(|span| gold_spans.contains(span))
                    .count();
            }
            ScoreMode::Tagging => {
                let gold_spans: HashSet<(usize, usize, String)> = decode_tags(g)
                    .into_iter()
                    .filter_map(|s| s.pos.map(|pos| (s.start, s.end, pos)))
                    .collect();
                let pred_spans: Vec<(usize, usize, String)> = decode_tags(p)
                    .into_iter()
                    .filter_map(|s| s.pos.map(|pos| (s.start, s.end, pos)))
                    .collect();
                gold_count += gold_spans.len();
                predicted_count += pred_spans.len();
                matched += pred_spans
                    .iter()
                    .filter(|span| gold_spans.contains(*span))
                    .count();
            }
        }
    }
    Ok(Metrics::from_counts(gold_count, predicted_count, matched))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<HybridTag> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let corpus = vec![tags("B-n E-n S-v"), tags("S-a B-v M-v E-v")];
        for mode in [ScoreMode::Segmentation, ScoreMode::Tagging] {
            let m = score(&corpus, &corpus, mode).unwrap();
            assert_eq!(m.f1, 1.0);
            assert_eq!(m.precision, 1.0);
            assert_eq!(m.recall, 1.0);
        }
    }

    #[test]
    fn disjoint_boundaries_score_zero() {
        // Gold: one two-character word. Predicted: two singles.
        let gold = vec![tags("B-n E-n")];
        let pred = vec![tags("S-n S-n")];
        let m = score(&gold, &pred, ScoreMode::Segmentation).unwrap();
        assert_eq!(m.matched, 0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn tagging_mode_demands_matching_pos() {
        // Boundaries all match; one of two words has the wrong POS.
        let gold = vec![tags("B-n E-n S-v")];
        let pred = vec![tags("B-n E-n S-a")];
        let wsg = score(&gold, &pred, ScoreMode::Segmentation).unwrap();
        assert_eq!(wsg.f1, 1.0);
        let pos = score(&gold, &pred, ScoreMode::Tagging).unwrap();
        assert_eq!(pos.matched, 1);
        assert_eq!(pos.gold, 2);
        assert_eq!(pos.predicted, 2);
        assert!((pos.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_counted_mixed_example() {
        // Gold words: (0,2,n) (2,3,v) | (0,1,a) (1,3,n)
        // Pred words: (0,2,n) (2,3,a) | (0,1,a) (1,2,n) (2,3,n)
        let gold = vec![tags("B-n E-n S-v"), tags("S-a B-n E-n")];
        let pred = vec![tags("B-n E-n S-a"), tags("S-a S-n S-n")];
        let wsg = score(&gold, &pred, ScoreMode::Segmentation).unwrap();
        assert_eq!((wsg.gold, wsg.predicted, wsg.matched), (4, 5, 3));
        assert!((wsg.precision - 3.0 / 5.0).abs() < 1e-12);
        assert!((wsg.recall - 3.0 / 4.0).abs() < 1e-12);
        assert!((wsg.f1 - 2.0 / 3.0).abs() < 1e-12);
        let pos = score(&gold, &pred, ScoreMode::Tagging).unwrap();
        assert_eq!((pos.gold, pos.predicted, pos.matched), (4, 5, 2));
    }

    #[test]
    fn unknown_pos_gold_words_are_skipped_in_tagging_mode() {
        // The unknown-POS gold word can't be scored for POS, but its
        // boundary still counts in segmentation mode.
        let gold = vec![tags("B-_ E-_ S-v")];
        let pred = vec![tags("B-n E-n S-v")];
        let wsg = score(&gold, &pred, ScoreMode::Segmentation).unwrap();
        assert_eq!(wsg.f1, 1.0);
        let pos = score(&gold, &pred, ScoreMode::Tagging).unwrap();
        assert_eq!((pos.gold, pos.predicted, pos.matched), (1, 2, 1));
    }

    #[test]
    fn sentence_order_does_not_matter() {
        let gold = vec![tags("B-n E-n S-v"), tags("S-a")];
        let pred = vec![tags("S-n S-n S-v"), tags("S-a")];
        let a = score(&gold, &pred, ScoreMode::Tagging).unwrap();
        let gold_r: Vec<_> = gold.iter().rev().cloned().collect();
        let pred_r: Vec<_> = pred.iter().rev().cloned().collect();
        let b = score(&gold_r, &pred_r, ScoreMode::Tagging).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_scores_zero() {
        let m = score(&[], &[], ScoreMode::Segmentation).unwrap();
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.gold, 0);
    }

    #[test]
    fn length_mismatches_error() {
        let gold = vec![tags("S-n")];
        assert!(matches!(
            score(&gold, &[], ScoreMode::Segmentation),
            Err(EvalError::CorpusLengthMismatch { .. })
        ));
        let pred = vec![tags("S-n S-n")];
        assert!(matches!(
            score(&gold, &pred, ScoreMode::Segmentation),
            Err(EvalError::SentenceLengthMismatch { index: 0, .. })
        ));
    }
}
