//! Neural sequence labeler.
//!
//! A sentence of characters is encoded by a trainable windowed
//! embedding layer ([`encoder`]), projected to per-tag emission
//! scores, and decoded by a linear-chain lattice over hybrid
//! segmentation + POS tags ([`crf`]). Training minimizes the
//! partial-label loss: the log partition of the full lattice minus
//! the log partition of the lattice restricted to each position's
//! allowed tags. Fully labeled sentences make that the ordinary
//! negative log-likelihood; completely unlabeled positions contribute
//! nothing.

pub mod checkpoint;
pub mod crf;
pub mod encoder;
pub mod optim;
mod train;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tagset::{HybridTag, HybridTagSet, PosTagSet};
use checkpoint::{
    matrix_to_rows, rows_to_matrix, vec_to_vector, Checkpoint, Provenance,
    CHECKPOINT_FORMAT_VERSION,
};
use crf::{LabelConstraint, TransitionParams};
use encoder::{CharVocab, EncoderParams};

pub use train::{train, EpochStats, TrainConfig, TrainExample, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sentence has no characters")]
    EmptySentence,
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("tag index {tag} at position {position} is out of range (inventory has {num_tags})")]
    TagOutOfRange {
        position: usize,
        tag: usize,
        num_tags: usize,
    },
    #[error("constraint allows no tags at position {position}")]
    EmptyConstraint { position: usize },
    #[error("no structurally legal tag path satisfies the constraint")]
    InfeasibleConstraint,
    #[error("invalid checkpoint: {reason}")]
    BadCheckpoint { reason: String },
    #[error("dev evaluation failed: {0}")]
    DevEvaluation(#[from] crate::evaluator::EvalError),
}

/// Non-empty character sequence to be labeled.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    chars: Vec<char>,
}

impl Sentence {
    pub fn new(chars: Vec<char>) -> Result<Sentence, ModelError> {
        if chars.is_empty() {
            return Err(ModelError::EmptySentence);
        }
        Ok(Sentence { chars })
    }

    pub fn from_text(text: &str) -> Result<Sentence, ModelError> {
        Sentence::new(text.chars().collect())
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }
}

impl std::fmt::Display for Sentence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.chars {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Architecture sizes, fixed at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelHyper {
    pub embed_dim: usize,
    pub window: usize,
    pub hidden_dim: usize,
}

impl Default for ModelHyper {
    fn default() -> ModelHyper {
        ModelHyper {
            embed_dim: 64,
            window: 2,
            hidden_dim: 128,
        }
    }
}

/// Character encoder + emission layer + transition scores.
///
/// Fields are public for inspection and testing; if you edit
/// `transitions` by hand, call `transitions.apply_masks()` afterwards
/// to keep structurally impossible entries frozen.
#[derive(Debug, Clone)]
pub struct LabelerModel {
    pub tags: HybridTagSet,
    pub encoder: EncoderParams,
    /// `hidden_dim x num_tags`.
    pub emission_weights: Array2<f64>,
    /// One bias per tag.
    pub emission_bias: Array1<f64>,
    pub transitions: TransitionParams,
}

/// Loss gradients, one tensor per parameter group.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embeddings: Array2<f64>,
    pub projection: Array2<f64>,
    pub projection_bias: Array1<f64>,
    pub emission_weights: Array2<f64>,
    pub emission_bias: Array1<f64>,
    pub transition: Array2<f64>,
    pub start: Array1<f64>,
    pub stop: Array1<f64>,
}

impl Gradients {
    pub fn zeros_for(model: &LabelerModel) -> Gradients {
        Gradients {
            embeddings: Array2::zeros(model.encoder.embeddings.dim()),
            projection: Array2::zeros(model.encoder.projection.dim()),
            projection_bias: Array1::zeros(model.encoder.bias.len()),
            emission_weights: Array2::zeros(model.emission_weights.dim()),
            emission_bias: Array1::zeros(model.emission_bias.len()),
            transition: Array2::zeros(model.transitions.matrix.dim()),
            start: Array1::zeros(model.transitions.start.len()),
            stop: Array1::zeros(model.transitions.stop.len()),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        self.embeddings += &other.embeddings;
        self.projection += &other.projection;
        self.projection_bias += &other.projection_bias;
        self.emission_weights += &other.emission_weights;
        self.emission_bias += &other.emission_bias;
        self.transition += &other.transition;
        self.start += &other.start;
        self.stop += &other.stop;
    }

    pub fn scale(&mut self, factor: f64) {
        self.embeddings *= factor;
        self.projection *= factor;
        self.projection_bias *= factor;
        self.emission_weights *= factor;
        self.emission_bias *= factor;
        self.transition *= factor;
        self.start *= factor;
        self.stop *= factor;
    }

    pub fn global_l2_norm(&self) -> f64 {
        self.group_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Flat views in the fixed parameter-group order.
    pub fn group_slices(&self) -> [&[f64]; 8] {
        [
            self.embeddings.as_slice().expect("standard layout"),
            self.projection.as_slice().expect("standard layout"),
            self.projection_bias.as_slice().expect("standard layout"),
            self.emission_weights.as_slice().expect("standard layout"),
            self.emission_bias.as_slice().expect("standard layout"),
            self.transition.as_slice().expect("standard layout"),
            self.start.as_slice().expect("standard layout"),
            self.stop.as_slice().expect("standard layout"),
        ]
    }
}

impl LabelerModel {
    /// Fresh model with fan-in-scaled uniform weights, zero biases,
    /// zero transition scores, and structural masks stamped.
    pub fn init(
        tags: HybridTagSet,
        vocab: CharVocab,
        hyper: ModelHyper,
        rng: &mut impl Rng,
    ) -> LabelerModel {
        let encoder = EncoderParams::init(vocab, hyper.embed_dim, hyper.window, hyper.hidden_dim, rng);
        let v = tags.num_tags();
        let mut emission_weights = Array2::zeros((hyper.hidden_dim, v));
        encoder::uniform_fill(
            emission_weights.as_slice_mut().expect("standard layout"),
            hyper.hidden_dim,
            rng,
        );
        let transitions = TransitionParams::for_tagset(&tags);
        LabelerModel {
            tags,
            encoder,
            emission_weights,
            emission_bias: Array1::zeros(v),
            transitions,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.tags.num_tags()
    }

    pub fn hyper(&self) -> ModelHyper {
        ModelHyper {
            embed_dim: self.encoder.embed_dim,
            window: self.encoder.window,
            hidden_dim: self.encoder.hidden_dim,
        }
    }

    /// `n x num_tags` emission scores.
    pub fn emissions(&self, sentence: &Sentence) -> Array2<f64> {
        let hidden = self.encoder.encode(sentence.chars());
        self.emit_from_hidden(&hidden)
    }

    fn emit_from_hidden(&self, hidden: &Array2<f64>) -> Array2<f64> {
        let mut scores = hidden.dot(&self.emission_weights);
        for mut row in scores.rows_mut() {
            row += &self.emission_bias;
        }
        scores
    }

    /// Partial-label loss: full log partition minus constrained log
    /// partition. Zero when the constraint allows everything; the
    /// ordinary negative log-likelihood when it pins every position.
    pub fn loss(&self, sentence: &Sentence, constraint: &LabelConstraint) -> Result<f64, ModelError> {
        let s = self.emissions(sentence);
        let constrained = crf::constrained_log_partition(s.view(), &self.transitions, constraint)?;
        let full = crf::log_partition(s.view(), &self.transitions)?;
        Ok(full - constrained)
    }

    /// Loss and its gradient with respect to every parameter group.
    pub fn loss_and_gradients(
        &self,
        sentence: &Sentence,
        constraint: &LabelConstraint,
    ) -> Result<(f64, Gradients), ModelError> {
        let (frames, hidden) = self.encoder.encode_with_frames(sentence.chars());
        let s = self.emit_from_hidden(&hidden);
        let (log_z_constrained, expected_constrained) =
            crf::constrained_expectations(s.view(), &self.transitions, constraint)?;
        let (log_z_full, expected_full) = crf::expectations(s.view(), &self.transitions)?;
        let loss = log_z_full - log_z_constrained;

        // Emission-score gradient: full-lattice tag posteriors minus
        // constrained-lattice tag posteriors.
        let d_scores = &expected_full.node - &expected_constrained.node;

        let mut grads = Gradients::zeros_for(self);
        grads.emission_weights = hidden.t().dot(&d_scores);
        grads.emission_bias = d_scores.sum_axis(Axis(0));
        grads.transition = &expected_full.trans - &expected_constrained.trans;
        let n = sentence.len();
        grads.start = (&expected_full.node.row(0) - &expected_constrained.node.row(0)).to_owned();
        grads.stop =
            (&expected_full.node.row(n - 1) - &expected_constrained.node.row(n - 1)).to_owned();

        // Backpropagate through the encoder.
        let d_hidden = d_scores.dot(&self.emission_weights.t());
        let d_pre = &d_hidden * &hidden.mapv(|h| 1.0 - h * h);
        grads.projection = frames.t().dot(&d_pre);
        grads.projection_bias = d_pre.sum_axis(Axis(0));
        let d_frames = d_pre.dot(&self.encoder.projection.t());

        let window = self.encoder.window as isize;
        let embed_dim = self.encoder.embed_dim;
        for i in 0..n {
            for offset in 0..(2 * self.encoder.window + 1) {
                let j = i as isize + offset as isize - window;
                if j < 0 || j >= n as isize {
                    continue;
                }
                let row = self.encoder.vocab.row_of(sentence.chars()[j as usize]);
                for k in 0..embed_dim {
                    grads.embeddings[(row, k)] += d_frames[(i, offset * embed_dim + k)];
                }
            }
        }
        Ok((loss, grads))
    }

    /// Negative log-likelihood of a fully specified tag path.
    pub fn nll(&self, sentence: &Sentence, path: &[usize]) -> Result<f64, ModelError> {
        let s = self.emissions(sentence);
        crf::nll(s.view(), &self.transitions, path)
    }

    /// Highest-scoring tag path, as indices.
    pub fn predict(&self, sentence: &Sentence) -> Result<Vec<usize>, ModelError> {
        let s = self.emissions(sentence);
        crf::viterbi(s.view(), &self.transitions)
    }

    /// Highest-scoring tag path, as hybrid tags.
    pub fn predict_tags(&self, sentence: &Sentence) -> Result<Vec<HybridTag>, ModelError> {
        Ok(self
            .predict(sentence)?
            .into_iter()
            .map(|y| self.tags.tag_at(y).expect("decoded indices are in range"))
            .collect())
    }

    /// Flat parameter lengths in group order, for the optimizer.
    pub fn param_group_sizes(&self) -> [usize; 8] {
        [
            self.encoder.embeddings.len(),
            self.encoder.projection.len(),
            self.encoder.bias.len(),
            self.emission_weights.len(),
            self.emission_bias.len(),
            self.transitions.matrix.len(),
            self.transitions.start.len(),
            self.transitions.stop.len(),
        ]
    }

    /// Mutable flat views in the fixed parameter-group order.
    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.encoder.embeddings.as_slice_mut().expect("standard layout"),
            self.encoder.projection.as_slice_mut().expect("standard layout"),
            self.encoder.bias.as_slice_mut().expect("standard layout"),
            self.emission_weights.as_slice_mut().expect("standard layout"),
            self.emission_bias.as_slice_mut().expect("standard layout"),
            self.transitions.matrix.as_slice_mut().expect("standard layout"),
            self.transitions.start.as_slice_mut().expect("standard layout"),
            self.transitions.stop.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn to_checkpoint(&self, provenance: Provenance) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            provenance,
            pos_tags: self.tags.pos_tags().tags().to_vec(),
            embed_dim: self.encoder.embed_dim,
            window: self.encoder.window,
            hidden_dim: self.encoder.hidden_dim,
            vocab_chars: self.encoder.vocab.chars().iter().collect(),
            embeddings: matrix_to_rows(&self.encoder.embeddings),
            projection: matrix_to_rows(&self.encoder.projection),
            projection_bias: self.encoder.bias.to_vec(),
            emission_weights: matrix_to_rows(&self.emission_weights),
            emission_bias: self.emission_bias.to_vec(),
            transition_matrix: matrix_to_rows(&self.transitions.matrix),
            start_scores: self.transitions.start.to_vec(),
            stop_scores: self.transitions.stop.to_vec(),
        }
    }

    /// Rebuilds a model from a snapshot, re-deriving vocabulary,
    /// tag inventory, and structural masks.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<LabelerModel, ModelError> {
        if cp.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::BadCheckpoint {
                reason: format!(
                    "unsupported format version {} (this build reads {})",
                    cp.format_version, CHECKPOINT_FORMAT_VERSION
                ),
            });
        }
        let pos = PosTagSet::new(cp.pos_tags.iter().cloned()).map_err(|e| {
            ModelError::BadCheckpoint {
                reason: format!("POS inventory: {e}"),
            }
        })?;
        let tags = HybridTagSet::new(pos);
        let v = tags.num_tags();
        let vocab_chars: Vec<char> = cp.vocab_chars.chars().collect();
        let unique: std::collections::BTreeSet<char> = vocab_chars.iter().copied().collect();
        if unique.len() != vocab_chars.len() {
            return Err(ModelError::BadCheckpoint {
                reason: "vocabulary has duplicate characters".to_string(),
            });
        }
        let vocab = CharVocab::from_chars(vocab_chars);
        let frame_dim = (2 * cp.window + 1) * cp.embed_dim;
        let encoder = EncoderParams {
            embeddings: rows_to_matrix(&cp.embeddings, (vocab.num_rows(), cp.embed_dim), "embeddings")?,
            projection: rows_to_matrix(&cp.projection, (frame_dim, cp.hidden_dim), "projection")?,
            bias: vec_to_vector(&cp.projection_bias, cp.hidden_dim, "projection bias")?,
            vocab,
            embed_dim: cp.embed_dim,
            window: cp.window,
            hidden_dim: cp.hidden_dim,
        };
        let mut transitions = TransitionParams::for_tagset(&tags);
        transitions.matrix = rows_to_matrix(&cp.transition_matrix, (v, v), "transition matrix")?;
        transitions.start = vec_to_vector(&cp.start_scores, v, "start scores")?;
        transitions.stop = vec_to_vector(&cp.stop_scores, v, "stop scores")?;
        transitions.apply_masks();
        Ok(LabelerModel {
            emission_weights: rows_to_matrix(&cp.emission_weights, (cp.hidden_dim, v), "emission weights")?,
            emission_bias: vec_to_vector(&cp.emission_bias, v, "emission bias")?,
            tags,
            encoder,
            transitions,
        })
    }
}
