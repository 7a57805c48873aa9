//! Minibatch training with early stopping on a held-out set.

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::crf::{has_feasible_path, LabelConstraint};
use super::optim::Adam;
use super::{Gradients, LabelerModel, ModelError, Sentence};
use crate::evaluator::{score, ScoreMode};
use crate::tagset::HybridTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Gradients are rescaled when their global L2 norm exceeds this;
    /// zero disables clipping.
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best dev score;
    /// zero disables early stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            clip_norm: 5.0,
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }
}

/// One training sentence with its per-position allowed tags.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub sentence: Sentence,
    pub constraint: LabelConstraint,
}

impl TrainExample {
    pub fn new(sentence: Sentence, constraint: LabelConstraint) -> TrainExample {
        TrainExample {
            sentence,
            constraint,
        }
    }

    /// Example whose every position is pinned to one tag.
    pub fn fully_labeled(sentence: Sentence, path: &[usize]) -> TrainExample {
        TrainExample {
            sentence,
            constraint: LabelConstraint::singletons(path),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_wsg_f1: f64,
    pub dev_pos_f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Epoch whose weights the model carries at return; 0 is the
    /// state before any update.
    pub best_epoch: usize,
    pub best_dev_pos_f1: f64,
    /// Examples dropped because no legal tag path fit their
    /// constraints.
    pub skipped_infeasible: usize,
    pub history: Vec<EpochStats>,
}

fn evaluate_dev(
    model: &LabelerModel,
    dev: &[(Sentence, Vec<HybridTag>)],
) -> Result<(f64, f64), ModelError> {
    let mut gold = Vec::with_capacity(dev.len());
    let mut predicted = Vec::with_capacity(dev.len());
    for (sentence, tags) in dev {
        gold.push(tags.clone());
        predicted.push(model.predict_tags(sentence)?);
    }
    let wsg = score(&gold, &predicted, ScoreMode::Segmentation)?;
    let pos = score(&gold, &predicted, ScoreMode::Tagging)?;
    Ok((wsg.f1, pos.f1))
}

/// Trains `model` in place with Adam on mean minibatch gradients.
///
/// After every epoch the model is scored on `dev`; the returned model
/// carries the weights of the best epoch by POS F1 (epoch 0, the
/// initial state, competes too). With an empty `dev` there is no
/// early stopping and the final epoch's weights are kept.
///
/// Identical inputs and configuration reproduce the result bit for
/// bit: shuffling draws from a stream seeded by `config.seed` and all
/// arithmetic is sequential.
pub fn train(
    model: &mut LabelerModel,
    data: &[TrainExample],
    dev: &[(Sentence, Vec<HybridTag>)],
    config: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    let num_tags = model.num_tags();
    let mut usable: Vec<usize> = Vec::with_capacity(data.len());
    let mut skipped_infeasible = 0usize;
    for (idx, example) in data.iter().enumerate() {
        if example.constraint.len() != example.sentence.len() {
            return Err(ModelError::DimensionMismatch {
                what: "constraint length",
                expected: example.sentence.len(),
                found: example.constraint.len(),
            });
        }
        for (position, set) in example.constraint.sets().iter().enumerate() {
            if let Some(&tag) = set.last() {
                if tag >= num_tags {
                    return Err(ModelError::TagOutOfRange {
                        position,
                        tag,
                        num_tags,
                    });
                }
            }
        }
        if has_feasible_path(&model.transitions, &example.constraint) {
            usable.push(idx);
        } else {
            skipped_infeasible += 1;
            warn!("skipping training example {idx}: constraint admits no legal tag path");
        }
    }

    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_dev_pos_f1: 0.0,
        skipped_infeasible,
        history: Vec::new(),
    };

    let has_dev = !dev.is_empty();
    let mut best_state: Option<LabelerModel> = None;
    if has_dev {
        let (_, pos_f1) = evaluate_dev(model, dev)?;
        report.best_dev_pos_f1 = pos_f1;
        best_state = Some(model.clone());
    }

    if usable.is_empty() || config.max_epochs == 0 {
        return Ok(report);
    }

    let mut optimizer = Adam::new(config.learning_rate, &model.param_group_sizes());
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let batch_size = config.batch_size.max(1);
    let mut order = usable;
    let mut epochs_without_improvement = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(batch_size) {
            let mut grads = Gradients::zeros_for(model);
            for &idx in batch {
                let example = &data[idx];
                let (loss, g) =
                    model.loss_and_gradients(&example.sentence, &example.constraint)?;
                loss_sum += loss;
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if config.clip_norm > 0.0 {
                let norm = grads.global_l2_norm();
                if norm > config.clip_norm {
                    grads.scale(config.clip_norm / norm);
                }
            }
            optimizer.begin_step();
            let grad_slices = grads.group_slices();
            let mut param_slices = model.param_slices_mut();
            for (k, (params, grad)) in
                param_slices.iter_mut().zip(grad_slices.iter()).enumerate()
            {
                optimizer.update(k, params, grad);
            }
            model.transitions.apply_masks();
        }
        report.epochs_run = epoch;
        let mean_loss = loss_sum / order.len() as f64;

        let (dev_wsg_f1, dev_pos_f1) = if has_dev {
            evaluate_dev(model, dev)?
        } else {
            (0.0, 0.0)
        };
        report.history.push(EpochStats {
            epoch,
            mean_loss,
            dev_wsg_f1,
            dev_pos_f1,
        });

        if has_dev {
            if dev_pos_f1 > report.best_dev_pos_f1 {
                report.best_dev_pos_f1 = dev_pos_f1;
                report.best_epoch = epoch;
                best_state = Some(model.clone());
                epochs_without_improvement = 0;
            } else {
                epochs_without_improvement += 1;
                if config.patience > 0 && epochs_without_improvement >= config.patience {
                    break;
                }
            }
        }
    }

    if !has_dev {
        report.best_epoch = report.epochs_run;
    } else if let Some(best) = best_state {
        *model = best;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::checkpoint::Provenance;
    use crate::labeler::encoder::CharVocab;
    use crate::labeler::ModelHyper;
    use crate::tagset::{HybridTagSet, PosTagSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny_model(seed: u64) -> LabelerModel {
        let tags = HybridTagSet::new(PosTagSet::new(["n", "v"]).unwrap());
        let vocab = CharVocab::from_chars(vec!['a', 'b', 'c', 'd']);
        let hyper = ModelHyper {
            embed_dim: 4,
            window: 1,
            hidden_dim: 8,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        LabelerModel::init(tags, vocab, hyper, &mut rng)
    }

    fn gold_tags(model: &LabelerModel, path: &[usize]) -> Vec<HybridTag> {
        path.iter()
            .map(|&y| model.tags.tag_at(y).unwrap())
            .collect()
    }

    // Hybrid indices with POS inventory [n, v]:
    // B-n=0 B-v=1 M-n=2 M-v=3 E-n=4 E-v=5 S-n=6 S-v=7.
    fn toy_data(model: &LabelerModel) -> (Vec<TrainExample>, Vec<(Sentence, Vec<HybridTag>)>) {
        let cases: Vec<(&str, Vec<usize>)> = vec![
            ("abc", vec![0, 4, 7]),  // (ab)=n (c)=v
            ("cab", vec![7, 0, 4]),  // (c)=v (ab)=n
            ("abca", vec![0, 4, 1, 5]),
            ("ba", vec![6, 7]),
        ];
        let mut data = Vec::new();
        let mut dev = Vec::new();
        for (text, path) in cases {
            let sentence = Sentence::from_text(text).unwrap();
            data.push(TrainExample::fully_labeled(sentence.clone(), &path));
            dev.push((sentence, gold_tags(model, &path)));
        }
        (data, dev)
    }

    #[test]
    fn overfits_four_sentences() {
        let mut model = tiny_model(40);
        let (data, dev) = toy_data(&model);
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 2,
            max_epochs: 150,
            patience: 0,
            seed: 11,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &dev, &config).unwrap();
        assert_eq!(report.skipped_infeasible, 0);
        assert!(
            (report.best_dev_pos_f1 - 1.0).abs() < 1e-12,
            "best dev POS F1 = {}",
            report.best_dev_pos_f1
        );
        for (sentence, gold) in &dev {
            assert_eq!(&model.predict_tags(sentence).unwrap(), gold);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let run = || {
            let mut model = tiny_model(41);
            let (data, dev) = toy_data(&model);
            let config = TrainConfig {
                batch_size: 3,
                max_epochs: 7,
                patience: 0,
                seed: 5,
                ..TrainConfig::default()
            };
            train(&mut model, &data, &dev, &config).unwrap();
            serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_epochs_leaves_the_model_untouched() {
        let mut model = tiny_model(42);
        let before = serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap();
        let (data, dev) = toy_data(&model);
        let config = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &dev, &config).unwrap();
        assert_eq!(report.epochs_run, 0);
        assert_eq!(report.best_epoch, 0);
        let after = serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn infeasible_examples_are_counted_and_skipped() {
        let mut model = tiny_model(43);
        let (mut data, dev) = toy_data(&model);
        // B-n followed by B-n is illegal, so this example is dropped.
        data.push(TrainExample::new(
            Sentence::from_text("ab").unwrap(),
            LabelConstraint::new(vec![vec![0], vec![0]]).unwrap(),
        ));
        let config = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &dev, &config).unwrap();
        assert_eq!(report.skipped_infeasible, 1);
        assert_eq!(report.epochs_run, 2);
    }

    #[test]
    fn hopeless_dev_stops_after_patience_and_restores_the_start() {
        let mut model = tiny_model(44);
        let before = serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap();
        let (data, _) = toy_data(&model);
        // Gold uses a POS outside the model's inventory, so dev POS
        // F1 is zero forever and no epoch ever improves on epoch 0.
        let dev = vec![(
            Sentence::from_text("ab").unwrap(),
            vec![
                HybridTag::new(crate::tagset::BoundaryTag::Single, "zz"),
                HybridTag::new(crate::tagset::BoundaryTag::Single, "zz"),
            ],
        )];
        let config = TrainConfig {
            max_epochs: 50,
            patience: 3,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &dev, &config).unwrap();
        assert_eq!(report.epochs_run, 3);
        assert_eq!(report.best_epoch, 0);
        assert_eq!(report.best_dev_pos_f1, 0.0);
        let after = serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn empty_dev_runs_all_epochs_and_keeps_the_last_weights() {
        let mut model = tiny_model(45);
        let before = serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap();
        let (data, _) = toy_data(&model);
        let config = TrainConfig {
            max_epochs: 3,
            patience: 1,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &data, &[], &config).unwrap();
        assert_eq!(report.epochs_run, 3);
        assert_eq!(report.best_epoch, 3);
        assert_eq!(report.history.len(), 3);
        let after = serde_json::to_string(&model.to_checkpoint(Provenance::default())).unwrap();
        assert_ne!(before, after, "training should have moved the weights");
    }

    #[test]
    fn partial_labels_alone_can_teach_boundaries() {
        // Constraints pin boundary tags but leave POS open on some
        // positions; the model should still learn to segment.
        let mut model = tiny_model(46);
        let sentence = Sentence::from_text("abcd").unwrap();
        // (ab) (cd): B ? E ? where ? fixes only the boundary.
        let constraint = LabelConstraint::new(vec![
            vec![0, 1],
            vec![4, 5],
            vec![0, 1],
            vec![4, 5],
        ])
        .unwrap();
        let data = vec![TrainExample::new(sentence.clone(), constraint)];
        let config = TrainConfig {
            learning_rate: 0.01,
            max_epochs: 150,
            patience: 0,
            batch_size: 1,
            ..TrainConfig::default()
        };
        train(&mut model, &data, &[], &config).unwrap();
        let path = model.predict(&sentence).unwrap();
        let boundaries: Vec<usize> = path.iter().map(|&y| y / 2).collect();
        assert_eq!(boundaries, vec![0, 2, 0, 2], "B E B E expected, got {path:?}");
    }
}
