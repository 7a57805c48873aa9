//! On-disk model snapshot.
//!
//! Checkpoints are plain serde structs: every tensor is written as
//! nested `f64` vectors, so JSON round trips reproduce the model
//! bit for bit. Structural transition masks are not stored; they are
//! a function of the tag inventory and are re-stamped on load.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ModelError;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Where a checkpoint came from: which pipeline stage produced it and
/// a digest of the data it was trained on. Purely descriptive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub data_sha256: String,
}

/// Serializable snapshot of a [`super::LabelerModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub provenance: Provenance,
    /// POS inventory; hybrid tag indices are derived from its order.
    pub pos_tags: Vec<String>,
    pub embed_dim: usize,
    pub window: usize,
    pub hidden_dim: usize,
    /// Known characters in vocabulary order (row 0 is the out-of-
    /// vocabulary embedding and has no character).
    pub vocab_chars: String,
    pub embeddings: Vec<Vec<f64>>,
    pub projection: Vec<Vec<f64>>,
    pub projection_bias: Vec<f64>,
    pub emission_weights: Vec<Vec<f64>>,
    pub emission_bias: Vec<f64>,
    pub transition_matrix: Vec<Vec<f64>>,
    pub start_scores: Vec<f64>,
    pub stop_scores: Vec<f64>,
}

pub(crate) fn matrix_to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn rows_to_matrix(
    rows: &[Vec<f64>],
    expected: (usize, usize),
    what: &'static str,
) -> Result<Array2<f64>, ModelError> {
    let (r, c) = expected;
    if rows.len() != r {
        return Err(ModelError::BadCheckpoint {
            reason: format!("{what}: expected {r} rows, found {}", rows.len()),
        });
    }
    let mut flat = Vec::with_capacity(r * c);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(ModelError::BadCheckpoint {
                reason: format!("{what}: row {i} has {} columns, expected {c}", row.len()),
            });
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((r, c), flat).map_err(|e| ModelError::BadCheckpoint {
        reason: format!("{what}: {e}"),
    })
}

pub(crate) fn vec_to_vector(
    values: &[f64],
    expected: usize,
    what: &'static str,
) -> Result<Array1<f64>, ModelError> {
    if values.len() != expected {
        return Err(ModelError::BadCheckpoint {
            reason: format!("{what}: expected {expected} entries, found {}", values.len()),
        });
    }
    Ok(Array1::from_vec(values.to_vec()))
}
