//! Slow-but-obviously-correct reference implementations used to test
//! the segpos lattice and training code.
//!
//! Everything here works by exhaustive path enumeration, so it is
//! only usable for tiny tag inventories and short sentences — which
//! is the point: the fast dynamic programs in `segpos` must agree
//! with these on small instances.
//!
//! Path scores are computed with [`segpos::labeler::crf::sequence_score`]
//! so that "two paths tie" means exactly the same thing to the oracle
//! and to the decoder under test.

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;
use segpos::labeler::crf::{sequence_score, LabelConstraint, TransitionParams};
use segpos::labeler::{LabelerModel, Sentence};

/// Calls `f` with every length-`n` path over `v` tags, in
/// lexicographic order.
pub fn for_each_path(n: usize, v: usize, mut f: impl FnMut(&[usize])) {
    assert!(n > 0 && v > 0);
    let mut path = vec![0usize; n];
    loop {
        f(&path);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Numerically careful log of the sum of exponentials.
pub fn logsumexp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    max + sum.ln()
}

/// Log partition by summing over every path explicitly.
pub fn exhaustive_log_partition(s: ArrayView2<f64>, t: &TransitionParams) -> f64 {
    let (n, v) = s.dim();
    let mut scores = Vec::with_capacity(v.pow(n as u32));
    for_each_path(n, v, |path| {
        scores.push(sequence_score(s, t, path).unwrap());
    });
    logsumexp(&scores)
}

/// Log partition restricted to paths inside the allowed sets.
pub fn exhaustive_constrained_log_partition(
    s: ArrayView2<f64>,
    t: &TransitionParams,
    constraint: &LabelConstraint,
) -> f64 {
    let (n, v) = s.dim();
    let mut scores = Vec::new();
    for_each_path(n, v, |path| {
        if path
            .iter()
            .enumerate()
            .all(|(i, y)| constraint.at(i).contains(y))
        {
            scores.push(sequence_score(s, t, path).unwrap());
        }
    });
    logsumexp(&scores)
}

/// Whether some path inside the allowed sets uses only structurally
/// legal transitions, starts, and stops.
pub fn exhaustive_feasible(t: &TransitionParams, constraint: &LabelConstraint) -> bool {
    let n = constraint.len();
    let v = t.num_tags();
    let mut found = false;
    for_each_path(n, v, |path| {
        if found {
            return;
        }
        let inside = path
            .iter()
            .enumerate()
            .all(|(i, y)| constraint.at(i).contains(y));
        if !inside {
            return;
        }
        let legal = t.start_allowed[path[0]]
            && t.stop_allowed[path[n - 1]]
            && path.windows(2).all(|w| t.allowed[(w[0], w[1])]);
        if legal {
            found = true;
        }
    });
    found
}

/// `a` precedes `b` when, at the latest position where they differ,
/// `a` carries the smaller tag index.
pub fn ties_before(a: &[usize], b: &[usize]) -> bool {
    for i in (0..a.len()).rev() {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Best path and score by trying every path. Ties are broken exactly
/// like the decoder under test: the winner has the smaller tag index
/// at the latest differing position.
pub fn exhaustive_best_path(s: ArrayView2<f64>, t: &TransitionParams) -> (Vec<usize>, f64) {
    let (n, v) = s.dim();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_path(n, v, |path| {
        let score = sequence_score(s, t, path).unwrap();
        match &mut best {
            None => best = Some((path.to_vec(), score)),
            Some((best_path, best_score)) => {
                if score > *best_score
                    || (score == *best_score && ties_before(path, best_path))
                {
                    *best_path = path.to_vec();
                    *best_score = score;
                }
            }
        }
    });
    best.expect("at least one path")
}

/// Node and edge posteriors by exhaustive summation.
pub fn exhaustive_marginals(
    s: ArrayView2<f64>,
    t: &TransitionParams,
) -> (Array2<f64>, Array3<f64>) {
    let (n, v) = s.dim();
    let log_z = exhaustive_log_partition(s, t);
    let mut node = Array2::zeros((n, v));
    let mut edge = Array3::zeros((n.saturating_sub(1), v, v));
    for_each_path(n, v, |path| {
        let p = (sequence_score(s, t, path).unwrap() - log_z).exp();
        for (i, &y) in path.iter().enumerate() {
            node[(i, y)] += p;
        }
        for (i, w) in path.windows(2).enumerate() {
            edge[(i, w[0], w[1])] += p;
        }
    });
    (node, edge)
}

/// Random dense emission matrix and transition scores in `(-2, 2)`,
/// with every transition structurally legal.
pub fn random_lattice(
    n: usize,
    v: usize,
    rng: &mut impl Rng,
) -> (Array2<f64>, TransitionParams) {
    let s = Array2::from_shape_fn((n, v), |_| rng.random::<f64>() * 4.0 - 2.0);
    let mut t = TransitionParams::unmasked(v);
    for value in t.matrix.iter_mut() {
        *value = rng.random::<f64>() * 4.0 - 2.0;
    }
    for value in t.start.iter_mut() {
        *value = rng.random::<f64>() * 4.0 - 2.0;
    }
    for value in t.stop.iter_mut() {
        *value = rng.random::<f64>() * 4.0 - 2.0;
    }
    (s, t)
}

/// Random allowed-tag sets: each position keeps a random non-empty
/// subset of the inventory.
pub fn random_constraint(n: usize, v: usize, rng: &mut impl Rng) -> LabelConstraint {
    let sets = (0..n)
        .map(|_| {
            loop {
                let set: Vec<usize> = (0..v).filter(|_| rng.random::<f64>() < 0.5).collect();
                if !set.is_empty() {
                    return set;
                }
            }
        })
        .collect();
    LabelConstraint::new(sets).expect("sets are non-empty")
}

/// One coordinate where analytic and numeric gradients disagree.
#[derive(Debug, Clone)]
pub struct GradMismatch {
    pub group: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Outcome of a finite-difference sweep over every parameter.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Coordinates actually compared.
    pub checked: usize,
    /// Coordinates skipped because both gradients were ~zero.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradMismatch>,
}

/// Compares analytic gradients against central finite differences of
/// the loss, coordinate by coordinate, across all parameter groups.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`; coordinates
/// where both magnitudes sit below `1e-10` (e.g. frozen mask entries)
/// are skipped. Mismatches above `tolerance` are reported.
pub fn check_gradients(
    model: &mut LabelerModel,
    sentence: &Sentence,
    constraint: &LabelConstraint,
    epsilon: f64,
    tolerance: f64,
) -> GradCheckReport {
    let (_, grads) = model
        .loss_and_gradients(sentence, constraint)
        .expect("loss must be computable to check its gradients");
    let analytic: Vec<Vec<f64>> = grads
        .group_slices()
        .iter()
        .map(|s| s.to_vec())
        .collect();

    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    let group_sizes = model.param_group_sizes();
    for group in 0..group_sizes.len() {
        for index in 0..group_sizes[group] {
            let original = model.param_slices_mut()[group][index];
            model.param_slices_mut()[group][index] = original + epsilon;
            let plus = model.loss(sentence, constraint).unwrap();
            model.param_slices_mut()[group][index] = original - epsilon;
            let minus = model.loss(sentence, constraint).unwrap();
            model.param_slices_mut()[group][index] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[group][index];
            if a.abs() < 1e-10 && numeric.abs() < 1e-10 {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel_error > report.max_rel_error {
                report.max_rel_error = rel_error;
            }
            if rel_error > tolerance {
                report.failures.push(GradMismatch {
                    group,
                    index,
                    analytic: a,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_enumeration_covers_the_whole_space() {
        let mut seen = Vec::new();
        for_each_path(2, 3, |p| seen.push(p.to_vec()));
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[8], vec![2, 2]);
        let unique: std::collections::BTreeSet<_> = seen.iter().collect();
        assert_eq!(unique.len(), 9);
    }

    #[test]
    fn logsumexp_matches_direct_computation() {
        let scores = [0.0, 1.0, -2.0];
        let direct = (1.0f64 + 1.0f64.exp() + (-2.0f64).exp()).ln();
        assert!((logsumexp(&scores) - direct).abs() < 1e-12);
    }

    #[test]
    fn tie_order_prefers_smaller_tags_later() {
        assert!(ties_before(&[1, 0], &[0, 1]));
        assert!(!ties_before(&[0, 1], &[1, 0]));
        assert!(ties_before(&[0, 0], &[1, 0]));
        assert!(!ties_before(&[1, 1], &[1, 1]));
    }
}
