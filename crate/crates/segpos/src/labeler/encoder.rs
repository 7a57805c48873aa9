//! Character-window sentence encoder.
//!
//! Each character is looked up in a learned embedding table (out-of-
//! vocabulary characters share one row, window positions past either
//! sentence edge contribute zero vectors), the embeddings of a
//! `2w + 1` window are concatenated, and a single affine-plus-tanh
//! layer maps the window to the character's hidden vector. The
//! encoder is deliberately small: it exists to feed the lattice
//! layer, not to compete with large pretrained encoders.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::Rng;

/// Character inventory with one shared out-of-vocabulary row.
///
/// Row 0 of the embedding table is the OOV row; known characters
/// occupy rows `1..=len` in insertion order.
#[derive(Debug, Clone)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub fn from_chars(chars: Vec<char>) -> CharVocab {
        let mut index = HashMap::new();
        let mut kept = Vec::new();
        for c in chars {
            if !index.contains_key(&c) {
                index.insert(c, kept.len() + 1);
                kept.push(c);
            }
        }
        CharVocab { chars: kept, index }
    }

    /// Collects every distinct character, in first-appearance order.
    pub fn from_corpus<'a>(sentences: impl IntoIterator<Item = &'a [char]>) -> CharVocab {
        let mut vocab = CharVocab::from_chars(Vec::new());
        for sentence in sentences {
            for &c in sentence {
                if !vocab.index.contains_key(&c) {
                    vocab.index.insert(c, vocab.chars.len() + 1);
                    vocab.chars.push(c);
                }
            }
        }
        vocab
    }

    /// Number of known characters (excluding the OOV row).
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Rows in the embedding table: known characters plus OOV.
    pub fn num_rows(&self) -> usize {
        self.chars.len() + 1
    }

    /// Embedding row of a character (0 when out of vocabulary).
    pub fn row_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

/// Trainable encoder parameters.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub vocab: CharVocab,
    pub embed_dim: usize,
    pub window: usize,
    pub hidden_dim: usize,
    /// `vocab.num_rows() x embed_dim`.
    pub embeddings: Array2<f64>,
    /// `(2 * window + 1) * embed_dim x hidden_dim`.
    pub projection: Array2<f64>,
    /// `hidden_dim`.
    pub bias: Array1<f64>,
}

pub(crate) fn uniform_fill(array: &mut [f64], fan_in: usize, rng: &mut impl Rng) {
    let scale = (1.0 / fan_in.max(1) as f64).sqrt();
    for value in array {
        *value = (rng.random::<f64>() * 2.0 - 1.0) * scale;
    }
}

impl EncoderParams {
    /// Fan-in-scaled uniform initialization; biases start at zero.
    pub fn init(
        vocab: CharVocab,
        embed_dim: usize,
        window: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> EncoderParams {
        let frame_dim = (2 * window + 1) * embed_dim;
        let mut embeddings = Array2::zeros((vocab.num_rows(), embed_dim));
        let mut projection = Array2::zeros((frame_dim, hidden_dim));
        uniform_fill(embeddings.as_slice_mut().unwrap(), embed_dim, rng);
        uniform_fill(projection.as_slice_mut().unwrap(), frame_dim, rng);
        EncoderParams {
            vocab,
            embed_dim,
            window,
            hidden_dim,
            embeddings,
            projection,
            bias: Array1::zeros(hidden_dim),
        }
    }

    /// Width of one concatenated window.
    pub fn frame_dim(&self) -> usize {
        (2 * self.window + 1) * self.embed_dim
    }

    /// Concatenated window embeddings, one row per character.
    pub(crate) fn frames(&self, chars: &[char]) -> Array2<f64> {
        let n = chars.len();
        let w = self.window as isize;
        let mut frames = Array2::zeros((n, self.frame_dim()));
        for i in 0..n {
            for o in -w..=w {
                let j = i as isize + o;
                if j < 0 || j >= n as isize {
                    continue;
                }
                let row = self.embeddings.row(self.vocab.row_of(chars[j as usize]));
                let offset = (o + w) as usize * self.embed_dim;
                frames
                    .row_mut(i)
                    .slice_mut(ndarray::s![offset..offset + self.embed_dim])
                    .assign(&row);
            }
        }
        frames
    }

    /// Hidden vectors for a sentence (`n x hidden_dim`).
    pub fn encode(&self, chars: &[char]) -> Array2<f64> {
        self.encode_with_frames(chars).1
    }

    /// Hidden vectors plus the window frames they were computed from,
    /// for backpropagation.
    pub(crate) fn encode_with_frames(&self, chars: &[char]) -> (Array2<f64>, Array2<f64>) {
        let frames = self.frames(chars);
        let mut hidden = frames.dot(&self.projection);
        for mut row in hidden.rows_mut() {
            row += &self.bias;
        }
        hidden.mapv_inplace(f64::tanh);
        (frames, hidden)
    }
}
