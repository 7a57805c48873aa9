//! Joint word segmentation and part-of-speech tagging for ancient
//! Chinese, trained with distant supervision from a parallel corpus.
//!
//! Ancient Chinese has no word delimiters and very little labeled
//! data, but large amounts of it exist in parallel with modern
//! Chinese translations, and the modern side can be tagged by
//! standard tools. This crate turns that situation into training
//! data and models:
//!
//! - [`tagset`] defines the label space: word-boundary tags fused
//!   with POS tags, and conversions between tag sequences and span
//!   segmentations.
//! - [`aligner`] learns character-to-word translation probabilities
//!   between ancient characters and modern words with an EM-trained
//!   lexical translation model, and extracts best alignments.
//! - [`projector`] projects modern-side word boundaries and POS tags
//!   across those alignments onto ancient characters, producing
//!   weakly labeled data with explicit gaps where evidence is
//!   missing.
//! - [`labeler`] is the model: a trainable windowed character
//!   encoder feeding a linear-chain lattice, trained on partial
//!   labels (gaps cost nothing) with Adam and early stopping.
//! - [`evaluator`] scores predictions with span-based precision,
//!   recall, and F1, for segmentation alone or segmentation+POS.
//! - [`corpus_io`] reads and writes the on-disk formats: parallel
//!   text, tagged words, character/tag columns, translation tables,
//!   and model checkpoints.
//! - [`pipeline`] chains everything into the three-stage recipe:
//!   pretrain on projected labels, fine-tune on gold annotation,
//!   relabel the projected data with the fine-tuned model, and
//!   retrain from scratch on the relabeled corpus.

pub mod aligner;
pub mod corpus_io;
pub mod evaluator;
pub mod labeler;
pub mod pipeline;
pub mod projector;
pub mod tagset;

pub use tagset::{BoundaryTag, HybridTag, HybridTagSet, PosTagSet, Segmentation, Span};
