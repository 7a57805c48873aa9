//! Linear-chain lattice over hybrid tags.
//!
//! A tag path `y` scores
//!
//! ```text
//! start[y_1] + s[1, y_1]
//!   + sum over i = 2..=n of (trans[y_{i-1}, y_i] + s[i, y_i])
//!   + stop[y_n]
//! ```
//!
//! and the model distribution is the softmax of path scores. All
//! aggregation happens in log space. The same forward/backward code
//! serves the unconstrained lattice and lattices restricted by
//! per-position allowed-tag sets, which is what partial-label
//! training needs: its loss is the difference of the two log
//! partition functions.
//!
//! Structurally impossible transitions (and start/stop tags) are not
//! removed from the lattice; they carry a large negative constant
//! that is frozen during training, so every tag path always has a
//! finite score.

use ndarray::{Array1, Array2, Array3, ArrayView2};

use super::ModelError;
use crate::tagset::HybridTagSet;

/// Score stamped on structurally impossible transitions. Large enough
/// that no masked path can win, small enough to stay comfortably
/// inside f64 range.
pub const MASK_VALUE: f64 = -1e4;

/// Transition scores plus the structural masks that freeze them.
#[derive(Debug, Clone)]
pub struct TransitionParams {
    /// `num_tags x num_tags`; entry `(a, b)` scores `a -> b`.
    pub matrix: Array2<f64>,
    /// Score of starting the sentence with each tag.
    pub start: Array1<f64>,
    /// Score of ending the sentence with each tag.
    pub stop: Array1<f64>,
    /// `true` where a transition is structurally legal.
    pub allowed: Array2<bool>,
    pub start_allowed: Vec<bool>,
    pub stop_allowed: Vec<bool>,
}

impl TransitionParams {
    /// All transitions legal, all scores zero. Mostly for tests and
    /// hand-built lattices.
    pub fn unmasked(num_tags: usize) -> TransitionParams {
        TransitionParams {
            matrix: Array2::zeros((num_tags, num_tags)),
            start: Array1::zeros(num_tags),
            stop: Array1::zeros(num_tags),
            allowed: Array2::from_elem((num_tags, num_tags), true),
            start_allowed: vec![true; num_tags],
            stop_allowed: vec![true; num_tags],
        }
    }

    /// Masks every transition that violates word structure: words
    /// must open before they continue, close before the next opens,
    /// and keep one POS throughout. Sentences must start at a word
    /// start and stop at a word end.
    pub fn for_tagset(tags: &HybridTagSet) -> TransitionParams {
        let v = tags.num_tags();
        let mut params = TransitionParams::unmasked(v);
        for a in 0..v {
            for b in 0..v {
                params.allowed[(a, b)] = tags.valid_transition_idx(a, b);
            }
        }
        for y in 0..v {
            params.start_allowed[y] = tags.valid_start_idx(y);
            params.stop_allowed[y] = tags.valid_stop_idx(y);
        }
        params.apply_masks();
        params
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    /// Restamps [`MASK_VALUE`] on every masked entry.
    pub fn apply_masks(&mut self) {
        let v = self.num_tags();
        for a in 0..v {
            for b in 0..v {
                if !self.allowed[(a, b)] {
                    self.matrix[(a, b)] = MASK_VALUE;
                }
            }
        }
        for y in 0..v {
            if !self.start_allowed[y] {
                self.start[y] = MASK_VALUE;
            }
            if !self.stop_allowed[y] {
                self.stop[y] = MASK_VALUE;
            }
        }
    }
}

/// Per-position sets of permitted tags.
///
/// Sets are kept sorted and duplicate-free; every position must allow
/// at least one tag. A fully labeled sentence is all singletons; an
/// unlabeled one allows every tag everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelConstraint {
    sets: Vec<Vec<usize>>,
}

impl LabelConstraint {
    pub fn new(mut sets: Vec<Vec<usize>>) -> Result<LabelConstraint, ModelError> {
        for (position, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(ModelError::EmptyConstraint { position });
            }
        }
        Ok(LabelConstraint { sets })
    }

    /// Every tag allowed at every one of `n` positions.
    pub fn full(n: usize, num_tags: usize) -> LabelConstraint {
        LabelConstraint {
            sets: vec![(0..num_tags).collect(); n],
        }
    }

    /// Exactly one tag per position.
    pub fn singletons(path: &[usize]) -> LabelConstraint {
        LabelConstraint {
            sets: path.iter().map(|&y| vec![y]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn at(&self, position: usize) -> &[usize] {
        &self.sets[position]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    fn max_tag(&self) -> usize {
        self.sets
            .iter()
            .filter_map(|set| set.last().copied())
            .max()
            .unwrap_or(0)
    }
}

fn check_shape(s: &ArrayView2<f64>, t: &TransitionParams) -> Result<(usize, usize), ModelError> {
    let (n, v) = s.dim();
    if n == 0 {
        return Err(ModelError::EmptySentence);
    }
    if v != t.num_tags() {
        return Err(ModelError::DimensionMismatch {
            what: "emission columns",
            expected: t.num_tags(),
            found: v,
        });
    }
    Ok((n, v))
}

fn check_path(n: usize, v: usize, path: &[usize]) -> Result<(), ModelError> {
    if path.len() != n {
        return Err(ModelError::DimensionMismatch {
            what: "path length",
            expected: n,
            found: path.len(),
        });
    }
    for (position, &y) in path.iter().enumerate() {
        if y >= v {
            return Err(ModelError::TagOutOfRange {
                position,
                tag: y,
                num_tags: v,
            });
        }
    }
    Ok(())
}

fn check_constraint(
    n: usize,
    v: usize,
    constraint: &LabelConstraint,
) -> Result<(), ModelError> {
    if constraint.len() != n {
        return Err(ModelError::DimensionMismatch {
            what: "constraint length",
            expected: n,
            found: constraint.len(),
        });
    }
    if constraint.max_tag() >= v {
        return Err(ModelError::TagOutOfRange {
            position: 0,
            tag: constraint.max_tag(),
            num_tags: v,
        });
    }
    Ok(())
}

/// Score of one complete tag path.
pub fn sequence_score(
    s: ArrayView2<f64>,
    t: &TransitionParams,
    path: &[usize],
) -> Result<f64, ModelError> {
    let (n, v) = check_shape(&s, t)?;
    check_path(n, v, path)?;
    let mut score = t.start[path[0]] + s[(0, path[0])];
    for i in 1..n {
        score += t.matrix[(path[i - 1], path[i])];
        score += s[(i, path[i])];
    }
    score += t.stop[path[n - 1]];
    Ok(score)
}

/// `alpha[i]` is indexed like `allowed(i)`; entry `k` is the log-sum
/// of score prefixes ending at position `i` with tag `allowed(i)[k]`.
fn forward<'a>(
    s: &ArrayView2<f64>,
    t: &TransitionParams,
    allowed: impl Fn(usize) -> &'a [usize],
) -> Vec<Vec<f64>> {
    let n = s.nrows();
    let mut alphas: Vec<Vec<f64>> = Vec::with_capacity(n);
    let first = allowed(0);
    alphas.push(first.iter().map(|&y| t.start[y] + s[(0, y)]).collect());
    for i in 1..n {
        let prev_tags = allowed(i - 1);
        let cur_tags = allowed(i);
        let prev = &alphas[i - 1];
        let mut maxes = vec![f64::NEG_INFINITY; cur_tags.len()];
        for (k, &a) in prev_tags.iter().enumerate() {
            let base = prev[k];
            for (j, &b) in cur_tags.iter().enumerate() {
                let val = base + t.matrix[(a, b)];
                if val > maxes[j] {
                    maxes[j] = val;
                }
            }
        }
        let mut sums = vec![0.0; cur_tags.len()];
        for (k, &a) in prev_tags.iter().enumerate() {
            let base = prev[k];
            for (j, &b) in cur_tags.iter().enumerate() {
                sums[j] += (base + t.matrix[(a, b)] - maxes[j]).exp();
            }
        }
        let cur = cur_tags
            .iter()
            .enumerate()
            .map(|(j, &b)| maxes[j] + sums[j].ln() + s[(i, b)])
            .collect();
        alphas.push(cur);
    }
    alphas
}

/// `beta[i][k]` is the log-sum over completions from position `i`
/// with tag `allowed(i)[k]`, excluding that position's emission.
fn backward<'a>(
    s: &ArrayView2<f64>,
    t: &TransitionParams,
    allowed: impl Fn(usize) -> &'a [usize],
) -> Vec<Vec<f64>> {
    let n = s.nrows();
    let mut betas: Vec<Vec<f64>> = vec![Vec::new(); n];
    betas[n - 1] = allowed(n - 1).iter().map(|&y| t.stop[y]).collect();
    for i in (0..n - 1).rev() {
        let cur_tags = allowed(i);
        let next_tags = allowed(i + 1);
        let next = &betas[i + 1];
        betas[i] = cur_tags
            .iter()
            .map(|&a| {
                let mut max = f64::NEG_INFINITY;
                for (j, &b) in next_tags.iter().enumerate() {
                    let val = t.matrix[(a, b)] + s[(i + 1, b)] + next[j];
                    if val > max {
                        max = val;
                    }
                }
                let mut sum = 0.0;
                for (j, &b) in next_tags.iter().enumerate() {
                    sum += (t.matrix[(a, b)] + s[(i + 1, b)] + next[j] - max).exp();
                }
                max + sum.ln()
            })
            .collect();
    }
    betas
}

fn final_log_sum<'a>(
    alphas: &[Vec<f64>],
    t: &TransitionParams,
    allowed: impl Fn(usize) -> &'a [usize],
) -> f64 {
    let last = alphas.len() - 1;
    let tags = allowed(last);
    let mut max = f64::NEG_INFINITY;
    for (k, &y) in tags.iter().enumerate() {
        let val = alphas[last][k] + t.stop[y];
        if val > max {
            max = val;
        }
    }
    let mut sum = 0.0;
    for (k, &y) in tags.iter().enumerate() {
        sum += (alphas[last][k] + t.stop[y] - max).exp();
    }
    max + sum.ln()
}

/// Log of the sum of `exp(path score)` over all tag paths.
pub fn log_partition(s: ArrayView2<f64>, t: &TransitionParams) -> Result<f64, ModelError> {
    let (_, v) = check_shape(&s, t)?;
    let full: Vec<usize> = (0..v).collect();
    let alphas = forward(&s, t, |_| full.as_slice());
    Ok(final_log_sum(&alphas, t, |_| full.as_slice()))
}

/// True if some path through the allowed sets uses only structurally
/// legal transitions (and start/stop tags).
pub(crate) fn has_feasible_path(t: &TransitionParams, constraint: &LabelConstraint) -> bool {
    let n = constraint.len();
    let mut reachable: Vec<bool> = constraint
        .at(0)
        .iter()
        .map(|&y| t.start_allowed[y])
        .collect();
    for i in 1..n {
        let prev_tags = constraint.at(i - 1);
        let cur_tags = constraint.at(i);
        let next: Vec<bool> = cur_tags
            .iter()
            .map(|&b| {
                prev_tags
                    .iter()
                    .enumerate()
                    .any(|(k, &a)| reachable[k] && t.allowed[(a, b)])
            })
            .collect();
        reachable = next;
    }
    constraint
        .at(n - 1)
        .iter()
        .enumerate()
        .any(|(k, &y)| reachable[k] && t.stop_allowed[y])
}

/// Log partition of the lattice restricted to the allowed sets.
///
/// With singleton sets this is exactly [`sequence_score`] of that
/// path (same operations in the same order), and with full sets it is
/// exactly [`log_partition`]. Errors when no structurally legal path
/// fits the constraint.
pub fn constrained_log_partition(
    s: ArrayView2<f64>,
    t: &TransitionParams,
    constraint: &LabelConstraint,
) -> Result<f64, ModelError> {
    let (n, v) = check_shape(&s, t)?;
    check_constraint(n, v, constraint)?;
    if !has_feasible_path(t, constraint) {
        return Err(ModelError::InfeasibleConstraint);
    }
    let alphas = forward(&s, t, |i| constraint.at(i));
    Ok(final_log_sum(&alphas, t, |i| constraint.at(i)))
}

/// Negative log-likelihood of one fully specified path.
pub fn nll(s: ArrayView2<f64>, t: &TransitionParams, path: &[usize]) -> Result<f64, ModelError> {
    Ok(log_partition(s, t)? - sequence_score(s, t, path)?)
}

/// Posterior tag and transition probabilities.
#[derive(Debug, Clone)]
pub struct Marginals {
    /// `n x v`; `(i, y)` is `P(y_i = y)`.
    pub node: Array2<f64>,
    /// `(n - 1) x v x v`; `(i, a, b)` is `P(y_i = a, y_{i+1} = b)`.
    pub edge: Array3<f64>,
}

/// Expected tag and transition indicator counts, for gradients.
#[derive(Debug, Clone)]
pub(crate) struct Expectations {
    /// `n x v` node posteriors (zero outside the allowed sets).
    pub node: Array2<f64>,
    /// `v x v` edge posteriors summed over positions.
    pub trans: Array2<f64>,
}

fn expectations_impl<'a>(
    s: &ArrayView2<f64>,
    t: &TransitionParams,
    allowed: impl Fn(usize) -> &'a [usize] + Copy,
) -> (f64, Expectations) {
    let (n, v) = s.dim();
    let alphas = forward(s, t, allowed);
    let betas = backward(s, t, allowed);
    let log_z = final_log_sum(&alphas, t, allowed);
    let mut node = Array2::zeros((n, v));
    for i in 0..n {
        for (k, &y) in allowed(i).iter().enumerate() {
            node[(i, y)] = (alphas[i][k] + betas[i][k] - log_z).exp();
        }
    }
    let mut trans = Array2::zeros((v, v));
    for i in 0..n - 1 {
        for (k, &a) in allowed(i).iter().enumerate() {
            let base = alphas[i][k];
            for (j, &b) in allowed(i + 1).iter().enumerate() {
                trans[(a, b)] +=
                    (base + t.matrix[(a, b)] + s[(i + 1, b)] + betas[i + 1][j] - log_z).exp();
            }
        }
    }
    (log_z, Expectations { node, trans })
}

pub(crate) fn expectations(
    s: ArrayView2<f64>,
    t: &TransitionParams,
) -> Result<(f64, Expectations), ModelError> {
    let (_, v) = check_shape(&s, t)?;
    let full: Vec<usize> = (0..v).collect();
    Ok(expectations_impl(&s, t, |_| full.as_slice()))
}

pub(crate) fn constrained_expectations(
    s: ArrayView2<f64>,
    t: &TransitionParams,
    constraint: &LabelConstraint,
) -> Result<(f64, Expectations), ModelError> {
    let (n, v) = check_shape(&s, t)?;
    check_constraint(n, v, constraint)?;
    if !has_feasible_path(t, constraint) {
        return Err(ModelError::InfeasibleConstraint);
    }
    Ok(expectations_impl(&s, t, |i| constraint.at(i)))
}

/// Node and edge marginals of the unconstrained lattice.
pub fn marginals(s: ArrayView2<f64>, t: &TransitionParams) -> Result<Marginals, ModelError> {
    let (n, v) = check_shape(&s, t)?;
    let full: Vec<usize> = (0..v).collect();
    let allowed = |_: usize| full.as_slice();
    let alphas = forward(&s, t, allowed);
    let betas = backward(&s, t, allowed);
    let log_z = final_log_sum(&alphas, t, allowed);
    let mut node = Array2::zeros((n, v));
    for i in 0..n {
        for y in 0..v {
            node[(i, y)] = (alphas[i][y] + betas[i][y] - log_z).exp();
        }
    }
    let mut edge = Array3::zeros((n - 1, v, v));
    for i in 0..n - 1 {
        for a in 0..v {
            for b in 0..v {
                edge[(i, a, b)] =
                    (alphas[i][a] + t.matrix[(a, b)] + s[(i + 1, b)] + betas[i + 1][b] - log_z)
                        .exp();
            }
        }
    }
    Ok(Marginals { node, edge })
}

/// Highest-scoring tag path.
///
/// Deterministic under ties: among equal-scoring paths it returns the
/// one whose tag index is smallest at the latest position where they
/// differ (the backtracking argmax always takes the first maximum).
pub fn viterbi(s: ArrayView2<f64>, t: &TransitionParams) -> Result<Vec<usize>, ModelError> {
    let (n, v) = check_shape(&s, t)?;
    let mut delta: Vec<f64> = (0..v).map(|y| t.start[y] + s[(0, y)]).collect();
    let mut backpointers: Vec<Vec<usize>> = Vec::with_capacity(n - 1);
    for i in 1..n {
        let mut next = vec![f64::NEG_INFINITY; v];
        let mut pointer = vec![0usize; v];
        for (b, slot) in next.iter_mut().enumerate() {
            let mut best = 0usize;
            let mut best_val = delta[0] + t.matrix[(0, b)];
            for a in 1..v {
                let val = delta[a] + t.matrix[(a, b)];
                if val > best_val {
                    best_val = val;
                    best = a;
                }
            }
            *slot = best_val + s[(i, b)];
            pointer[b] = best;
        }
        backpointers.push(pointer);
        delta = next;
    }
    let mut best = 0usize;
    let mut best_val = delta[0] + t.stop[0];
    for y in 1..v {
        let val = delta[y] + t.stop[y];
        if val > best_val {
            best_val = val;
            best = y;
        }
    }
    let mut path = vec![best; n];
    for i in (0..n - 1).rev() {
        path[i] = backpointers[i][path[i + 1]];
    }
    Ok(path)
}
