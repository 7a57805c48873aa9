//! Seeded synthetic parallel corpora with known gold labels.
//!
//! The generator invents a vocabulary of "ancient" word types (one to
//! three characters each, with a true POS), then emits sentences as
//! type sequences drawn from a Zipf-like distribution. The ancient
//! side of each pair is the concatenated characters; the modern side
//! is the same sequence rendered as `w<k>` tokens whose POS tags map
//! back through a trivial uppercase/lowercase dictionary.
//!
//! One noise rate corrupts the **modern side only**, so gold labels
//! stay clean while projection sees realistic distant-supervision
//! damage:
//!
//! * wrong POS — a fraction of types carries a wrong (or
//!   unmappable) modern tag everywhere it appears;
//! * shared surfaces — pairs of types render as the same modern
//!   token, making the alignment lexically ambiguous;
//! * token drops, adjacent merges, and adjacent swaps at the token
//!   level.
//!
//! With noise 0 none of the above fires, every modern token covers
//! exactly its own ancient word in order, and projecting through the
//! generator's own links reproduces the gold labels verbatim.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use segpos::aligner::{AlignmentResult, ParallelPair};
use segpos::corpus_io;
use segpos::labeler::{ModelHyper, TrainConfig};
use segpos::pipeline::PipelineConfig;
use segpos::projector::{ModernWord, PosMappingDict, TaggedModernSentence, WeaklyLabeledSentence};
use segpos::tagset::{BoundaryTag, HybridTag, PosTagSet};

use crate::config::{CliError, PipelineFileConfig};

/// Ancient POS tags the generator can draw from; all of them exist in
/// the default inventory, so generated corpora also work against it.
pub const ANCIENT_TAGS: [&str; 12] = ["n", "v", "a", "d", "m", "r", "p", "c", "q", "t", "s", "f"];

/// Modern tag that the dictionary maps to nothing (projected words
/// under it get unknown POS).
pub const NULL_MODERN_TAG: &str = "X";

/// Knobs of the generative process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Distinct ancient word types.
    pub word_types: usize,
    /// Distinct ancient characters available to build surfaces from.
    pub alphabet: usize,
    /// How many of [`ANCIENT_TAGS`] to use (1..=12).
    pub pos_count: usize,
    /// Parallel sentence pairs to emit.
    pub pairs: usize,
    /// Gold-annotated sentences to emit.
    pub annotated: usize,
    /// Sentences per test set.
    pub test: usize,
    /// Corruption rate in [0, 1]; see the module docs for how it is
    /// split across the noise channels.
    pub noise: f64,
    /// Words per sentence, inclusive bounds (test set B runs longer).
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            word_types: 80,
            alphabet: 60,
            pos_count: 8,
            pairs: 2000,
            annotated: 200,
            test: 50,
            noise: 0.3,
            min_len: 2,
            max_len: 6,
            seed: 0,
        }
    }
}

/// One invented word type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordType {
    /// Ancient surface.
    pub chars: Vec<char>,
    /// True ancient POS.
    pub pos: String,
    /// Modern rendering (`w<k>`, possibly shared with another type).
    pub modern_surface: String,
    /// Modern POS (possibly wrong or unmappable under noise).
    pub modern_pos: String,
}

/// Everything the generator knows about one corpus.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// The ancient POS inventory actually used.
    pub pos_tags: PosTagSet,
    /// Modern -> ancient tag dictionary (uppercase -> lowercase, plus
    /// the unmappable [`NULL_MODERN_TAG`]).
    pub dict: PosMappingDict,
    pub types: Vec<WordType>,
    pub parallel: Vec<(ParallelPair, TaggedModernSentence)>,
    /// Gold labels for each pair's ancient side.
    pub gold_parallel: Vec<WeaklyLabeledSentence>,
    /// Character-to-modern-token links as generated (dropped words
    /// leave their characters unlinked).
    pub true_links: Vec<AlignmentResult>,
    pub annotated: Vec<WeaklyLabeledSentence>,
    /// Same distribution as the training data.
    pub test_a: Vec<WeaklyLabeledSentence>,
    /// Shifted distribution: longer sentences, rare types common.
    pub test_b: Vec<WeaklyLabeledSentence>,
}

fn modern_tag(ancient: &str) -> String {
    ancient.to_uppercase()
}

/// Samples an index from cumulative weights.
fn sample_index(cumulative: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let total = *cumulative.last().expect("non-empty weights");
    let r = rng.random::<f64>() * total;
    cumulative
        .partition_point(|&c| c <= r)
        .min(cumulative.len() - 1)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn build_types(config: &SynthConfig, rng: &mut ChaCha20Rng) -> Vec<WordType> {
    let tags: Vec<&str> = ANCIENT_TAGS[..config.pos_count].to_vec();
    let alphabet: Vec<char> = (0..config.alphabet)
        .map(|i| char::from_u32(0x4E00 + i as u32).expect("CJK code point"))
        .collect();

    let mut types: Vec<WordType> = (0..config.word_types)
        .map(|k| {
            let r = rng.random::<f64>();
            let len = if r < 0.5 {
                1
            } else if r < 0.85 {
                2
            } else {
                3
            };
            let chars = (0..len)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect();
            let pos = tags[rng.random_range(0..tags.len())].to_string();
            let modern_pos = modern_tag(&pos);
            WordType {
                chars,
                pos,
                modern_surface: format!("w{k}"),
                modern_pos,
            }
        })
        .collect();

    // Lexical ambiguity: pairs of types share one modern surface.
    let shared_pairs = ((config.noise * config.word_types as f64) / 2.0).ceil() as usize;
    for i in 0..shared_pairs {
        let (a, b) = (2 * i, 2 * i + 1);
        if b < types.len() {
            types[b].modern_surface = types[a].modern_surface.clone();
        }
    }

    // Wrong POS at the type level: the tag is wrong (or unmappable)
    // everywhere the type occurs, mimicking systematic lookup noise.
    for t in types.iter_mut() {
        if rng.random::<f64>() < config.noise / 2.0 {
            let mut candidates: Vec<String> = tags
                .iter()
                .map(|a| modern_tag(a))
                .filter(|m| *m != t.modern_pos)
                .collect();
            candidates.push(NULL_MODERN_TAG.to_string());
            t.modern_pos = candidates[rng.random_range(0..candidates.len())].clone();
        }
    }
    types
}

fn sample_sentence(
    cumulative: &[f64],
    len_bounds: (usize, usize),
    rng: &mut ChaCha20Rng,
) -> Vec<usize> {
    let len = rng.random_range(len_bounds.0..=len_bounds.1);
    (0..len).map(|_| sample_index(cumulative, rng)).collect()
}

fn gold_sentence(sequence: &[usize], types: &[WordType]) -> WeaklyLabeledSentence {
    let mut chars = Vec::new();
    let mut tags = Vec::new();
    for &k in sequence {
        let t = &types[k];
        let n = t.chars.len();
        chars.extend_from_slice(&t.chars);
        for (i, _) in t.chars.iter().enumerate() {
            let boundary = if n == 1 {
                BoundaryTag::Single
            } else if i == 0 {
                BoundaryTag::Begin
            } else if i + 1 == n {
                BoundaryTag::End
            } else {
                BoundaryTag::Middle
            };
            tags.push(HybridTag::new(boundary, &t.pos));
        }
    }
    WeaklyLabeledSentence::new(chars, tags)
}

/// One modern token after noise; `covers` lists the ancient word
/// slots this token stands for.
struct Token {
    surface: String,
    pos: String,
    covers: Vec<usize>,
}

fn build_pair(
    sequence: &[usize],
    types: &[WordType],
    config: &SynthConfig,
    rng: &mut ChaCha20Rng,
) -> (ParallelPair, TaggedModernSentence, AlignmentResult) {
    let per_channel = config.noise / 4.0;

    let mut tokens: Vec<Token> = sequence
        .iter()
        .enumerate()
        .map(|(slot, &k)| Token {
            surface: types[k].modern_surface.clone(),
            pos: types[k].modern_pos.clone(),
            covers: vec![slot],
        })
        .collect();

    // Drops (never below one surviving token).
    let mut drop = Vec::with_capacity(tokens.len());
    for _ in &tokens {
        drop.push(rng.random::<f64>() < per_channel);
    }
    if drop.iter().all(|&d| d) {
        drop[0] = false;
    }
    let mut kept: Vec<Token> = tokens
        .drain(..)
        .zip(&drop)
        .filter_map(|(t, &d)| (!d).then_some(t))
        .collect();

    // Adjacent merges: two tokens fuse into one surface, keeping the
    // left token's POS; its characters later project as one word.
    let mut i = 0;
    while i + 1 < kept.len() {
        if rng.random::<f64>() < per_channel {
            let right = kept.remove(i + 1);
            kept[i].surface.push_str(&right.surface);
            kept[i].covers.extend(right.covers);
        }
        i += 1;
    }

    // Adjacent swaps (word-order scrambling).
    let mut i = 0;
    while i + 1 < kept.len() {
        if rng.random::<f64>() < per_channel {
            kept.swap(i, i + 1);
            i += 2;
        } else {
            i += 1;
        }
    }

    // True char -> token links.
    let mut slot_to_token: Vec<Option<usize>> = vec![None; sequence.len()];
    for (index, token) in kept.iter().enumerate() {
        for &slot in &token.covers {
            slot_to_token[slot] = Some(index);
        }
    }
    let links = sequence.iter().enumerate().flat_map(|(slot, &k)| {
        std::iter::repeat_n(slot_to_token[slot], types[k].chars.len())
    });
    let alignment = AlignmentResult::from_links(links);

    let chars: Vec<char> = sequence
        .iter()
        .flat_map(|&k| types[k].chars.iter().copied())
        .collect();
    let words: Vec<String> = kept.iter().map(|t| t.surface.clone()).collect();
    let modern = TaggedModernSentence {
        words: kept
            .iter()
            .map(|t| ModernWord::new(t.surface.clone(), t.pos.clone()))
            .collect(),
    };
    (ParallelPair::new(words, chars), modern, alignment)
}

/// Generates a corpus. Identical configs give identical corpora.
///
/// # Panics
/// If the config is out of range (zero sizes, `pos_count` > 12,
/// `min_len` > `max_len`, noise outside [0, 1]).
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    assert!(config.word_types >= 1, "need at least one word type");
    assert!(config.alphabet >= 1, "need at least one character");
    assert!(
        (1..=ANCIENT_TAGS.len()).contains(&config.pos_count),
        "pos_count must be in 1..={}",
        ANCIENT_TAGS.len()
    );
    assert!(
        config.min_len >= 1 && config.min_len <= config.max_len,
        "need 1 <= min_len <= max_len"
    );
    assert!(
        (0.0..=1.0).contains(&config.noise),
        "noise must be in [0, 1]"
    );

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let types = build_types(config, &mut rng);

    let pos_tags =
        PosTagSet::new(ANCIENT_TAGS[..config.pos_count].iter().copied()).expect("distinct tags");
    let mut entries: Vec<(String, Option<String>)> = ANCIENT_TAGS[..config.pos_count]
        .iter()
        .map(|a| (modern_tag(a), Some((*a).to_string())))
        .collect();
    entries.push((NULL_MODERN_TAG.to_string(), None));
    let dict = PosMappingDict::new(entries);

    let n = types.len() as f64;
    let zipf = cumulative((0..types.len()).map(|k| 1.0 / (k as f64 + 1.0)));
    let reversed = cumulative((0..types.len()).map(|k| 1.0 / (n - k as f64)));

    let mut parallel = Vec::with_capacity(config.pairs);
    let mut gold_parallel = Vec::with_capacity(config.pairs);
    let mut true_links = Vec::with_capacity(config.pairs);
    for _ in 0..config.pairs {
        let seq = sample_sentence(&zipf, (config.min_len, config.max_len), &mut rng);
        let (pair, modern, links) = build_pair(&seq, &types, config, &mut rng);
        gold_parallel.push(gold_sentence(&seq, &types));
        true_links.push(links);
        parallel.push((pair, modern));
    }

    let gold_from = |cum: &[f64], bounds: (usize, usize), count: usize, rng: &mut ChaCha20Rng| {
        (0..count)
            .map(|_| gold_sentence(&sample_sentence(cum, bounds, rng), &types))
            .collect::<Vec<_>>()
    };
    let annotated = gold_from(&zipf, (config.min_len, config.max_len), config.annotated, &mut rng);
    let test_a = gold_from(&zipf, (config.min_len, config.max_len), config.test, &mut rng);
    let test_b = gold_from(
        &reversed,
        (config.min_len + 1, config.max_len + 2),
        config.test,
        &mut rng,
    );

    SynthCorpus {
        pos_tags,
        dict,
        types,
        parallel,
        gold_parallel,
        true_links,
        annotated,
        test_a,
        test_b,
    }
}

/// Writes a generated corpus as the file set the other subcommands
/// consume, plus a ready-to-run `config.json` for `pipeline`:
///
/// * `parallel.tsv` — ancient text TAB tagged modern tokens,
/// * `gold.tags`, `test_a.tags`, `test_b.tags` — char-tag corpora,
/// * `pos_tags.txt`, `dict.tsv` — the inventory and POS dictionary.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path, config: &SynthConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;

    let pairs: Vec<(String, String)> = corpus
        .parallel
        .iter()
        .map(|(pair, modern)| {
            (
                pair.target.iter().collect::<String>(),
                corpus_io::format_tagged_sentence(modern),
            )
        })
        .collect();
    corpus_io::write_parallel(&pairs, dir.join("parallel.tsv"))?;
    corpus_io::write_char_tags(&corpus.annotated, dir.join("gold.tags"))?;
    corpus_io::write_char_tags(&corpus.test_a, dir.join("test_a.tags"))?;
    corpus_io::write_char_tags(&corpus.test_b, dir.join("test_b.tags"))?;

    let mut tags_text = corpus.pos_tags.tags().join("\n");
    tags_text.push('\n');
    let tags_path = dir.join("pos_tags.txt");
    std::fs::write(&tags_path, tags_text).map_err(|e| format!("{}: {e}", tags_path.display()))?;

    let mut dict_text = String::new();
    for (modern, ancient) in corpus.dict.entries() {
        dict_text.push_str(modern);
        dict_text.push('\t');
        dict_text.push_str(ancient.as_deref().unwrap_or("null"));
        dict_text.push('\n');
    }
    let dict_path = dir.join("dict.tsv");
    std::fs::write(&dict_path, dict_text).map_err(|e| format!("{}: {e}", dict_path.display()))?;

    // Small model and short stages: synthetic corpora are for fast,
    // trend-level experiments, not accuracy records.
    let file_config = PipelineFileConfig {
        parallel: Some("parallel.tsv".into()),
        annotated: Some("gold.tags".into()),
        test_sets: BTreeMap::from([
            ("test_a".to_string(), "test_a.tags".into()),
            ("test_b".to_string(), "test_b.tags".into()),
        ]),
        pos_tags: Some("pos_tags.txt".into()),
        dict: Some("dict.tsv".into()),
        initial_model: None,
        out_dir: Some("run".into()),
        run: PipelineConfig {
            seed: config.seed,
            model: ModelHyper {
                embed_dim: 16,
                window: 1,
                hidden_dim: 32,
            },
            stage1: TrainConfig {
                max_epochs: 5,
                batch_size: 16,
                ..TrainConfig::default()
            },
            stage2: TrainConfig {
                max_epochs: 30,
                patience: 5,
                batch_size: 8,
                ..TrainConfig::default()
            },
            // Retraining starts from fresh weights on the relabeled
            // corpus, so it gets more epochs than the warm-started
            // stages; dev selection keeps the best one.
            stage3: TrainConfig {
                max_epochs: 15,
                batch_size: 16,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        },
    };
    let mut config_text =
        serde_json::to_string_pretty(&file_config).expect("configs always serialize");
    config_text.push('\n');
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, config_text)
        .map_err(|e| format!("{}: {e}", config_path.display()))?;
    Ok(())
}
