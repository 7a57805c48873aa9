//! Projection of modern-side annotations onto ancient characters.
//!
//! Given a sentence pair, a one-best alignment, and a POS-tagged
//! modern side, each maximal run of adjacent ancient characters linked
//! to the same modern word token becomes one ancient word; the word's
//! POS is the modern word's POS mapped through a modern->ancient
//! dictionary. Unaligned characters become single-character words with
//! unknown POS, so the projected corpus is weakly labeled: boundaries
//! and tags may be wrong or missing, but every sentence is a complete
//! segmentation.

use std::collections::BTreeMap;
use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{best_alignment, AlignmentResult, ParallelPair, TranslationTable};
use crate::tagset::{encode_segmentation, HybridTag, Span};

/// Contents of the default modern->ancient dictionary file.
pub const DEFAULT_POS_DICT: &str = include_str!("../data/pos_dict_default.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{left} pairs but {right} tagged modern sentences")]
    LengthMismatch { left: usize, right: usize },
    #[error("pair {index}: modern side has {words} words but the alignment references word {word}")]
    DanglingLink { index: usize, words: usize, word: usize },
    #[error("pair {index}: {chars} characters but {links} alignment links")]
    LinkCountMismatch { index: usize, chars: usize, links: usize },
    #[error("malformed dictionary line {line}: {reason}")]
    MalformedDict { line: usize, reason: String },
}

/// Outcome of a dictionary lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MappedPos {
    /// The modern tag maps to this ancient tag.
    Known(String),
    /// The modern tag exists but has no ancient counterpart.
    Null,
    /// The modern tag is not in the dictionary at all.
    Missing,
}

impl MappedPos {
    pub fn into_option(self) -> Option<String> {
        match self {
            MappedPos::Known(pos) => Some(pos),
            MappedPos::Null | MappedPos::Missing => None,
        }
    }
}

/// Ordered modern->ancient POS dictionary. A `None` value is an
/// explicit "no counterpart" entry.
#[derive(Debug, Clone)]
pub struct PosMappingDict {
    entries: Vec<(String, Option<String>)>,
    index: HashMap<String, usize>,
}

impl PosMappingDict {
    pub fn new(entries: Vec<(String, Option<String>)>) -> PosMappingDict {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (k, _))| (k.clone(), i))
            .collect();
        PosMappingDict { entries, index }
    }

    /// Parses the `modern<TAB>ancient` format with the literal value
    /// `null`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<PosMappingDict, CorpusError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (modern, ancient) =
                line.split_once('\t')
                    .ok_or_else(|| CorpusError::MalformedDict {
                        line: i + 1,
                        reason: "expected `modern<TAB>ancient`".to_owned(),
                    })?;
            let modern = modern.trim();
            let ancient = ancient.trim();
            if modern.is_empty() || ancient.is_empty() {
                return Err(CorpusError::MalformedDict {
                    line: i + 1,
                    reason: "empty field".to_owned(),
                });
            }
            entries.push((
                modern.to_owned(),
                if ancient == "null" {
                    None
                } else {
                    Some(ancient.to_owned())
                },
            ));
        }
        Ok(PosMappingDict::new(entries))
    }

    /// The dictionary shipped with the crate.
    pub fn default_dict() -> PosMappingDict {
        PosMappingDict::parse(DEFAULT_POS_DICT).expect("shipped dictionary is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Option<String>)] {
        &self.entries
    }

    /// The set of ancient tags this dictionary can produce, in first-
    /// appearance order.
    pub fn image(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for (_, v) in &self.entries {
            if let Some(v) = v {
                if !seen.contains(v) {
                    seen.push(v.clone());
                }
            }
        }
        seen
    }

    /// Maps a modern POS to its ancient counterpart.
    pub fn map_pos(&self, modern: &str) -> MappedPos {
        match self.index.get(modern) {
            Some(&i) => match &self.entries[i].1 {
                Some(pos) => MappedPos::Known(pos.clone()),
                None => MappedPos::Null,
            },
            None => MappedPos::Missing,
        }
    }
}

/// One word of a POS-tagged modern sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModernWord {
    pub surface: String,
    pub pos: String,
}

impl ModernWord {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> ModernWord {
        ModernWord {
            surface: surface.into(),
            pos: pos.into(),
        }
    }
}

/// A segmented, POS-tagged modern sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedModernSentence {
    pub words: Vec<ModernWord>,
}

/// An ancient sentence with per-character hybrid tags, possibly
/// containing unknown POS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeaklyLabeledSentence {
    pub chars: Vec<char>,
    pub tags: Vec<HybridTag>,
}

impl WeaklyLabeledSentence {
    pub fn new(chars: Vec<char>, tags: Vec<HybridTag>) -> WeaklyLabeledSentence {
        assert_eq!(chars.len(), tags.len(), "one tag per character");
        WeaklyLabeledSentence { chars, tags }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.tags.iter().all(HybridTag::has_known_pos)
    }

    pub fn unknown_pos_chars(&self) -> usize {
        self.tags.iter().filter(|t| !t.has_known_pos()).count()
    }
}

/// Counters accumulated while projecting a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionReport {
    /// Characters with no link (NULL winner or sub-threshold).
    pub unaligned_chars: usize,
    /// Words in the output that carry unknown POS.
    pub unknown_pos_words: usize,
    /// Modern POS keys looked up but absent from the dictionary.
    pub dict_misses: BTreeMap<String, usize>,
}

/// Projects one pair's modern annotations onto its ancient characters.
///
/// Characters linked to the same word token merge into one word when
/// adjacent (separate runs of the same token stay separate words);
/// unaligned characters become single-character words. Word POS comes
/// from the dictionary; `null` or missing entries yield unknown POS,
/// with misses counted in `report`.
pub fn project(
    pair: &ParallelPair,
    modern: &TaggedModernSentence,
    alignment: &AlignmentResult,
    dict: &PosMappingDict,
    report: &mut ProjectionReport,
) -> WeaklyLabeledSentence {
    let n = pair.target.len();
    assert_eq!(
        alignment.links.len(),
        n,
        "one alignment link per character"
    );
    let mut spans: Vec<Span> = Vec::new();
    let mut i = 0;
    while i < n {
        match alignment.links[i].word {
            None => {
                report.unaligned_chars += 1;
                spans.push(Span::unknown(i, i + 1));
                i += 1;
            }
            Some(word) => {
                assert!(
                    word < modern.words.len(),
                    "alignment references word {word} of {}",
                    modern.words.len()
                );
                let mut j = i + 1;
                while j < n && alignment.links[j].word == Some(word) {
                    j += 1;
                }
                let modern_pos = &modern.words[word].pos;
                let mapped = dict.map_pos(modern_pos);
                if mapped == MappedPos::Missing {
                    let count = report.dict_misses.entry(modern_pos.clone()).or_insert(0);
                    if *count == 0 {
                        warn!("modern POS `{modern_pos}` is not in the dictionary");
                    }
                    *count += 1;
                }
                spans.push(Span {
                    start: i,
                    end: j,
                    pos: mapped.into_option(),
                });
                i = j;
            }
        }
    }
    report.unknown_pos_words += spans.iter().filter(|s| s.pos.is_none()).count();
    let tags = encode_segmentation(&spans).expect("runs tile the sentence");
    WeaklyLabeledSentence::new(pair.target.clone(), tags)
}

/// Projects a whole corpus, computing one-best alignments from the
/// table. `pairs` and `moderns` must be index-aligned.
pub fn project_corpus(
    pairs: &[ParallelPair],
    moderns: &[TaggedModernSentence],
    table: &TranslationTable,
    threshold: f64,
    dict: &PosMappingDict,
) -> Result<(Vec<WeaklyLabeledSentence>, ProjectionReport), CorpusError> {
    if pairs.len() != moderns.len() {
        return Err(CorpusError::LengthMismatch {
            left: pairs.len(),
            right: moderns.len(),
        });
    }
    let mut report = ProjectionReport::default();
    let mut sentences = Vec::with_capacity(pairs.len());
    for (index, (pair, modern)) in pairs.iter().zip(moderns).enumerate() {
        let alignment = best_alignment(pair, table, threshold);
        if alignment.links.len() != pair.target.len() {
            return Err(CorpusError::LinkCountMismatch {
                index,
                chars: pair.target.len(),
                links: alignment.links.len(),
            });
        }
        if let Some(word) = alignment
            .links
            .iter()
            .filter_map(|l| l.word)
            .find(|&w| w >= modern.words.len())
        {
            return Err(CorpusError::DanglingLink {
                index,
                words: modern.words.len(),
                word,
            });
        }
        sentences.push(project(pair, modern, &alignment, dict, &mut report));
    }
    Ok((sentences, report))
}
