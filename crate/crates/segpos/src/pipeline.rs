//! End-to-end orchestration: align the parallel corpus, project weak
//! labels, train on them, fine-tune on gold data, relabel the weak
//! corpus with the fine-tuned model, retrain from scratch on the
//! relabeled corpus, and score every checkpoint on the test sets.
//!
//! The run produces four checkpoints:
//!
//! * `M0` — randomly initialized (or user-supplied),
//! * `M1` — `M0` trained on projected data `D_p` under the stage-1 task,
//! * `M2` — `M1` fine-tuned on the gold training split `D_a`,
//! * `M3` — `M0` retrained on `D_r`, the relabeling of `D_p` by `M2`.
//!
//! Every random choice is derived from the single configured seed, so
//! a full run is bit-reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aligner::{em_train, AlignError, EmConfig, ParallelPair, TranslationTable};
use crate::corpus_io::{self, FormatError};
use crate::evaluator::{score, Metrics, ScoreMode};
use crate::labeler::checkpoint::{Checkpoint, Provenance};
use crate::labeler::crf::LabelConstraint;
use crate::labeler::encoder::CharVocab;
use crate::labeler::{
    train, LabelerModel, ModelError, ModelHyper, Sentence, TrainConfig, TrainExample, TrainReport,
};
use crate::projector::{
    project_corpus, CorpusError, PosMappingDict, ProjectionReport, TaggedModernSentence,
    WeaklyLabeledSentence,
};
use crate::tagset::{HybridTag, HybridTagSet, PosTagSet};

/// Seed offsets, all applied to [`PipelineConfig::seed`] with wrapping
/// addition, so one knob reproduces the entire run while no two
/// consumers share a stream.
const SEED_MODEL_INIT: u64 = 0;
const SEED_STAGE1: u64 = 1;
const SEED_STAGE2: u64 = 2;
const SEED_STAGE3: u64 = 3;
const SEED_SUBSAMPLE_ANNOTATED: u64 = 10;
const SEED_SUBSAMPLE_PROJECTED: u64 = 11;

/// What supervision stage 1 extracts from the projected corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Task {
    /// Boundaries and POS jointly (unknown POS leaves POS free).
    Joint,
    /// Boundaries only; POS is left free everywhere.
    WsgOnly,
    /// POS only; boundaries are left free everywhere.
    PosOnly,
    /// Skip stage 1 entirely: M1 is M0 and M2 becomes the
    /// gold-data-only baseline.
    None,
}

impl Stage1Task {
    fn stage1_name(self) -> &'static str {
        match self {
            Stage1Task::Joint => "stage1(joint)",
            Stage1Task::WsgOnly => "stage1(wsg_only)",
            Stage1Task::PosOnly => "stage1(pos_only)",
            Stage1Task::None => "stage1(none)",
        }
    }
}

/// Word-alignment settings for the EM pass and the one-best decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignSettings {
    pub iterations: usize,
    /// Additive smoothing on expected counts.
    pub smoothing: f64,
    /// Posterior threshold below which a character stays unaligned.
    pub threshold: f64,
}

impl Default for AlignSettings {
    fn default() -> AlignSettings {
        AlignSettings {
            iterations: 10,
            smoothing: 1e-6,
            threshold: 0.0,
        }
    }
}

/// Scalar settings for a full run.
///
/// The per-stage `seed` fields inside the train configs are ignored:
/// each stage derives its seed from the top-level `seed` plus a fixed
/// offset, so one value reproduces the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Fraction of the gold training split actually used, in (0, 1].
    pub ratio_annotated: f64,
    /// Fraction of the projected corpus actually used, in (0, 1].
    pub ratio_projected: f64,
    /// Master seed; every stochastic step derives from it.
    pub seed: u64,
    pub stage1_task: Stage1Task,
    pub alignment: AlignSettings,
    pub model: ModelHyper,
    /// Stage 1 (projected data) training settings.
    pub stage1: TrainConfig,
    /// Stage 2 (gold fine-tuning) training settings.
    pub stage2: TrainConfig,
    /// Stage 3 (relabeled data) training settings.
    pub stage3: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        // The large-data stages (1 and 3) get a small fixed budget;
        // the small gold stage gets a long leash plus early stopping.
        let large = TrainConfig {
            max_epochs: 10,
            ..TrainConfig::default()
        };
        let small = TrainConfig {
            max_epochs: 50,
            patience: 5,
            ..TrainConfig::default()
        };
        PipelineConfig {
            ratio_annotated: 1.0,
            ratio_projected: 1.0,
            seed: 0,
            stage1_task: Stage1Task::Joint,
            alignment: AlignSettings::default(),
            model: ModelHyper::default(),
            stage1: large.clone(),
            stage2: small,
            stage3: large,
        }
    }
}

impl PipelineConfig {
    /// Rejects settings that would make a run meaningless or panic.
    pub fn validate(&self) -> Result<(), PipelineError> {
        fn ratio_ok(value: f64) -> bool {
            value.is_finite() && value > 0.0 && value <= 1.0
        }
        if !ratio_ok(self.ratio_annotated) {
            return Err(PipelineError::Config(format!(
                "ratio_annotated must be in (0, 1], got {}",
                self.ratio_annotated
            )));
        }
        if !ratio_ok(self.ratio_projected) {
            return Err(PipelineError::Config(format!(
                "ratio_projected must be in (0, 1], got {}",
                self.ratio_projected
            )));
        }
        if self.alignment.iterations == 0 {
            return Err(PipelineError::Config(
                "alignment.iterations must be at least 1".to_string(),
            ));
        }
        if !(self.alignment.smoothing.is_finite() && self.alignment.smoothing >= 0.0) {
            return Err(PipelineError::Config(format!(
                "alignment.smoothing must be finite and non-negative, got {}",
                self.alignment.smoothing
            )));
        }
        if !(self.alignment.threshold.is_finite()
            && (0.0..1.0).contains(&self.alignment.threshold))
        {
            return Err(PipelineError::Config(format!(
                "alignment.threshold must be in [0, 1), got {}",
                self.alignment.threshold
            )));
        }
        if self.model.embed_dim == 0 || self.model.hidden_dim == 0 {
            return Err(PipelineError::Config(
                "model.embed_dim and model.hidden_dim must be at least 1".to_string(),
            ));
        }
        for (name, stage) in [
            ("stage1", &self.stage1),
            ("stage2", &self.stage2),
            ("stage3", &self.stage3),
        ] {
            if stage.batch_size == 0 {
                return Err(PipelineError::Config(format!(
                    "{name}.batch_size must be at least 1"
                )));
            }
            if !(stage.learning_rate.is_finite() && stage.learning_rate > 0.0) {
                return Err(PipelineError::Config(format!(
                    "{name}.learning_rate must be finite and positive, got {}",
                    stage.learning_rate
                )));
            }
            if !(stage.clip_norm.is_finite() && stage.clip_norm >= 0.0) {
                return Err(PipelineError::Config(format!(
                    "{name}.clip_norm must be finite and non-negative, got {}",
                    stage.clip_norm
                )));
            }
        }
        Ok(())
    }

    fn stage_config(&self, stage: &TrainConfig, offset: u64) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(offset),
            ..stage.clone()
        }
    }
}

/// In-memory corpora for a full run. File loading lives in the CLI.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    /// POS inventory; defines the hybrid tag space.
    pub pos_tags: PosTagSet,
    /// Modern-to-ancient POS mapping used during projection.
    pub dict: PosMappingDict,
    /// Ancient/modern sentence pairs with the modern side tagged.
    pub parallel: Vec<(ParallelPair, TaggedModernSentence)>,
    /// Gold-annotated ancient sentences (split 90/10 inside the run).
    pub annotated: Vec<WeaklyLabeledSentence>,
    /// Named gold test sets, each scored for every checkpoint.
    pub test_sets: BTreeMap<String, Vec<WeaklyLabeledSentence>>,
    /// Optional pre-trained starting point; when absent, M0 is
    /// randomly initialized from the seed.
    pub initial_model: Option<Checkpoint>,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub config: PipelineConfig,
    /// Number of parallel sentence pairs the aligner saw.
    pub parallel_pairs: usize,
    pub table: TranslationTable,
    /// Corpus log-likelihood at the start of each EM iteration.
    pub em_log_likelihood: Vec<f64>,
    pub projection: ProjectionReport,
    /// Projected weakly labeled corpus (after subsampling).
    pub d_p: Vec<WeaklyLabeledSentence>,
    /// Gold training split (after subsampling).
    pub d_a_train: Vec<WeaklyLabeledSentence>,
    /// Gold development split (never subsampled).
    pub d_a_dev: Vec<WeaklyLabeledSentence>,
    /// `D_p` relabeled by M2; fully labeled.
    pub d_r: Vec<WeaklyLabeledSentence>,
    pub m0: Checkpoint,
    pub m1: Checkpoint,
    pub m2: Checkpoint,
    pub m3: Checkpoint,
    /// Train report per executed stage, keyed `stage1`..`stage3`.
    pub stage_reports: BTreeMap<String, TrainReport>,
    /// `{m1,m2,m3} x test set x {wsg,pos}`.
    pub metrics: MetricsReport,
}

/// Segmentation and tagging scores of one model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScores {
    pub wsg: Metrics,
    pub pos: Metrics,
}

/// Checkpoint name -> test set name -> scores.
pub type MetricsReport = BTreeMap<String, BTreeMap<String, TestScores>>;

/// JSON summary written next to the checkpoints.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub config: PipelineConfig,
    pub corpus_sizes: CorpusSizes,
    pub em_log_likelihood: Vec<f64>,
    pub projection: ProjectionReport,
    pub stage_reports: BTreeMap<String, TrainReport>,
    pub metrics: MetricsReport,
}

/// Sentence counts of every dataset a run touched.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusSizes {
    pub parallel_pairs: usize,
    pub projected: usize,
    pub annotated_train: usize,
    pub annotated_dev: usize,
    pub relabeled: usize,
}

/// A stage failure, tagged with the stage that caused it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("annotated corpus has {found} sentences; the 90/10 split needs at least 10")]
    TooFewAnnotated { found: usize },
    #[error("alignment failed: {source}")]
    Align {
        #[from]
        source: AlignError,
    },
    #[error("projection failed: {source}")]
    Project {
        #[from]
        source: CorpusError,
    },
    #[error("{stage} failed: {source}")]
    Train {
        stage: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("relabeling failed: {source}")]
    Relabel {
        #[source]
        source: ModelError,
    },
    #[error("evaluating {model} on `{test_set}` failed: {source}")]
    Evaluate {
        model: &'static str,
        test_set: String,
        #[source]
        source: ModelError,
    },
    #[error("the supplied initial checkpoint is unusable: {source}")]
    InitialModel {
        #[source]
        source: ModelError,
    },
}

/// Splits gold data into the first nine tenths (train) and the rest
/// (dev), preserving order. Needs at least 10 sentences.
pub fn split_annotated<T: Clone>(data: &[T]) -> Result<(Vec<T>, Vec<T>), PipelineError> {
    let n = data.len();
    if n < 10 {
        return Err(PipelineError::TooFewAnnotated { found: n });
    }
    let cut = n * 9 / 10;
    Ok((data[..cut].to_vec(), data[cut..].to_vec()))
}

/// Keeps a seeded uniform sample (without replacement) of
/// `ceil(ratio * N)` items, in their original order.
///
/// # Panics
/// If `ratio` is not in (0, 1].
pub fn subsample<T: Clone>(data: &[T], ratio: f64, seed: u64) -> Vec<T> {
    assert!(
        ratio > 0.0 && ratio <= 1.0,
        "subsample ratio must be in (0, 1], got {ratio}"
    );
    let n = data.len();
    let want = ((ratio * n as f64).ceil() as usize).min(n);
    if want == n {
        return data.to_vec();
    }
    // Partial Fisher-Yates: the first `want` slots end up holding a
    // uniform sample of the indices; sorting restores corpus order.
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for slot in 0..want {
        let pick = rng.random_range(slot..n);
        indices.swap(slot, pick);
    }
    let mut chosen = indices[..want].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| data[i].clone()).collect()
}

/// Turns weak labels into the per-position allowed tag sets the given
/// stage-1 task is permitted to see.
///
/// * `Joint` keeps everything: known POS pins the tag, unknown POS
///   pins only the boundary.
/// * `WsgOnly` keeps boundaries and frees POS everywhere.
/// * `PosOnly` keeps POS and frees boundaries; unknown POS (or a POS
///   missing from the inventory) leaves the position unconstrained.
/// * `None` yields no supervision (full sets); callers skip training
///   in that case.
///
/// A known POS absent from the inventory is treated as unknown.
pub fn collapse_task(
    tags: &[HybridTag],
    tagset: &HybridTagSet,
    task: Stage1Task,
) -> LabelConstraint {
    let pos_count = tagset.pos_tags().len();
    let num_tags = tagset.num_tags();
    let sets: Vec<Vec<usize>> = tags
        .iter()
        .map(|tag| {
            let b = tag.boundary.index();
            let pos_id = tag
                .pos
                .as_deref()
                .and_then(|p| tagset.pos_tags().id_of(p));
            match (task, pos_id) {
                (Stage1Task::Joint, Some(p)) => vec![b * pos_count + p],
                (Stage1Task::Joint, None) | (Stage1Task::WsgOnly, _) => {
                    (0..pos_count).map(|p| b * pos_count + p).collect()
                }
                (Stage1Task::PosOnly, Some(p)) => (0..4).map(|a| a * pos_count + p).collect(),
                (Stage1Task::PosOnly, None) | (Stage1Task::None, _) => (0..num_tags).collect(),
            }
        })
        .collect();
    LabelConstraint::new(sets).expect("collapsed sets are never empty")
}

/// Hex SHA-256 of a labeled corpus in its canonical text rendering,
/// recorded in checkpoint provenance.
pub fn corpus_digest(sentences: &[WeaklyLabeledSentence]) -> String {
    let mut hasher = Sha256::new();
    let mut utf8 = [0u8; 4];
    for sentence in sentences {
        for (c, tag) in sentence.chars.iter().zip(&sentence.tags) {
            hasher.update(c.encode_utf8(&mut utf8).as_bytes());
            hasher.update(b"\t");
            hasher.update(tag.to_string().as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"\n");
    }
    hasher
        .finalize()
        .iter()
        .fold(String::with_capacity(64), |mut hex, byte| {
            let _ = write!(hex, "{byte:02x}");
            hex
        })
}

/// Trains `model` in place on `examples` and returns its checkpoint,
/// stamped with the stage name and the digest of the data it saw.
pub fn run_stage(
    model: &mut LabelerModel,
    stage: &'static str,
    examples: &[TrainExample],
    data_digest: String,
    dev: &[(Sentence, Vec<HybridTag>)],
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainReport), PipelineError> {
    let report = train(model, examples, dev, config)
        .map_err(|source| PipelineError::Train { stage, source })?;
    let checkpoint = model.to_checkpoint(Provenance {
        stage: stage.to_string(),
        data_sha256: data_digest,
    });
    Ok((checkpoint, report))
}

/// Replaces every sentence's weak labels with the model's prediction.
///
/// The output has the same sentences in the same order, every position
/// carries a known POS, and rerunning on its own output is a no-op
/// (prediction is deterministic).
pub fn relabel(
    model: &LabelerModel,
    sentences: &[WeaklyLabeledSentence],
) -> Result<Vec<WeaklyLabeledSentence>, PipelineError> {
    sentences
        .iter()
        .map(|s| {
            let sentence = Sentence::new(s.chars.clone())
                .map_err(|source| PipelineError::Relabel { source })?;
            let tags = model
                .predict_tags(&sentence)
                .map_err(|source| PipelineError::Relabel { source })?;
            Ok(WeaklyLabeledSentence::new(s.chars.clone(), tags))
        })
        .collect()
}

fn gold_pairs(
    sentences: &[WeaklyLabeledSentence],
    stage: &'static str,
) -> Result<Vec<(Sentence, Vec<HybridTag>)>, PipelineError> {
    sentences
        .iter()
        .map(|s| {
            let sentence = Sentence::new(s.chars.clone())
                .map_err(|source| PipelineError::Train { stage, source })?;
            Ok((sentence, s.tags.clone()))
        })
        .collect()
}

fn train_examples(
    sentences: &[WeaklyLabeledSentence],
    tagset: &HybridTagSet,
    task: Stage1Task,
    stage: &'static str,
) -> Result<Vec<TrainExample>, PipelineError> {
    sentences
        .iter()
        .map(|s| {
            let sentence = Sentence::new(s.chars.clone())
                .map_err(|source| PipelineError::Train { stage, source })?;
            Ok(TrainExample::new(
                sentence,
                collapse_task(&s.tags, tagset, task),
            ))
        })
        .collect()
}

fn evaluate_model(
    model: &LabelerModel,
    name: &'static str,
    test_sets: &BTreeMap<String, Vec<WeaklyLabeledSentence>>,
) -> Result<BTreeMap<String, TestScores>, PipelineError> {
    let mut rows = BTreeMap::new();
    for (set_name, sentences) in test_sets {
        let fail = |source| PipelineError::Evaluate {
            model: name,
            test_set: set_name.clone(),
            source,
        };
        let mut gold = Vec::with_capacity(sentences.len());
        let mut predicted = Vec::with_capacity(sentences.len());
        for s in sentences {
            let sentence = Sentence::new(s.chars.clone()).map_err(fail)?;
            predicted.push(model.predict_tags(&sentence).map_err(fail)?);
            gold.push(s.tags.clone());
        }
        let wsg = score(&gold, &predicted, ScoreMode::Segmentation)
            .map_err(|e| fail(ModelError::from(e)))?;
        let pos =
            score(&gold, &predicted, ScoreMode::Tagging).map_err(|e| fail(ModelError::from(e)))?;
        rows.insert(set_name.clone(), TestScores { wsg, pos });
    }
    Ok(rows)
}

fn check_known_pos(
    sentences: &[WeaklyLabeledSentence],
    what: &str,
    inventory: &PosTagSet,
) -> Result<(), PipelineError> {
    for (idx, sentence) in sentences.iter().enumerate() {
        if sentence.is_empty() {
            return Err(PipelineError::Config(format!(
                "{what} sentence {} is empty",
                idx + 1
            )));
        }
        for tag in &sentence.tags {
            if let Some(pos) = tag.pos.as_deref() {
                if inventory.id_of(pos).is_none() {
                    return Err(PipelineError::Config(format!(
                        "{what} sentence {} uses POS `{pos}` which is not in the inventory",
                        idx + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

fn validate_inputs(inputs: &PipelineInputs) -> Result<(), PipelineError> {
    if inputs.pos_tags.is_empty() {
        return Err(PipelineError::Config(
            "the POS inventory is empty".to_string(),
        ));
    }
    if inputs.parallel.is_empty() {
        return Err(PipelineError::Config(
            "the parallel corpus is empty".to_string(),
        ));
    }
    for ancient in inputs.dict.image() {
        if inputs.pos_tags.id_of(&ancient).is_none() {
            return Err(PipelineError::Config(format!(
                "the dictionary maps to POS `{ancient}` which is not in the inventory"
            )));
        }
    }
    check_known_pos(&inputs.annotated, "annotated", &inputs.pos_tags)?;
    for (name, sentences) in &inputs.test_sets {
        check_known_pos(sentences, &format!("test set `{name}`"), &inputs.pos_tags)?;
    }
    Ok(())
}

/// Runs the whole pipeline: align, project, three training stages,
/// relabel, and evaluation of M1/M2/M3 on every test set.
pub fn run_full(
    inputs: &PipelineInputs,
    config: &PipelineConfig,
) -> Result<PipelineState, PipelineError> {
    config.validate()?;
    validate_inputs(inputs)?;
    let tagset = HybridTagSet::new(inputs.pos_tags.clone());

    // Word alignment over the parallel corpus.
    let pairs: Vec<ParallelPair> = inputs.parallel.iter().map(|(p, _)| p.clone()).collect();
    let moderns: Vec<TaggedModernSentence> =
        inputs.parallel.iter().map(|(_, m)| m.clone()).collect();
    let em_config = EmConfig {
        iterations: config.alignment.iterations,
        smoothing: config.alignment.smoothing,
    };
    let (table, em_report) = em_train(&pairs, &em_config)?;

    // Projection onto the ancient side, then the working subsets.
    let (projected, projection) = project_corpus(
        &pairs,
        &moderns,
        &table,
        config.alignment.threshold,
        &inputs.dict,
    )?;
    let d_p = subsample(
        &projected,
        config.ratio_projected,
        config.seed.wrapping_add(SEED_SUBSAMPLE_PROJECTED),
    );
    let (annotated_train, d_a_dev) = split_annotated(&inputs.annotated)?;
    let d_a_train = subsample(
        &annotated_train,
        config.ratio_annotated,
        config.seed.wrapping_add(SEED_SUBSAMPLE_ANNOTATED),
    );
    let dev = gold_pairs(&d_a_dev, "dev preparation")?;

    // M0: supplied checkpoint or fresh random init. The vocabulary
    // covers every character either training corpus can feed the model.
    let (mut model, m0) = match &inputs.initial_model {
        Some(checkpoint) => {
            let model = LabelerModel::from_checkpoint(checkpoint)
                .map_err(|source| PipelineError::InitialModel { source })?;
            (model, checkpoint.clone())
        }
        None => {
            let vocab = CharVocab::from_corpus(
                d_p.iter()
                    .map(|s| s.chars.as_slice())
                    .chain(d_a_train.iter().map(|s| s.chars.as_slice())),
            );
            let mut rng =
                ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(SEED_MODEL_INIT));
            let model = LabelerModel::init(tagset.clone(), vocab, config.model, &mut rng);
            let m0 = model.to_checkpoint(Provenance {
                stage: "init".to_string(),
                data_sha256: String::new(),
            });
            (model, m0)
        }
    };

    let mut stage_reports = BTreeMap::new();

    // Stage 1: weak supervision on the projected corpus.
    let stage1_name = config.stage1_task.stage1_name();
    let m1 = match config.stage1_task {
        Stage1Task::None => model.to_checkpoint(Provenance {
            stage: stage1_name.to_string(),
            data_sha256: String::new(),
        }),
        task => {
            let examples = train_examples(&d_p, &tagset, task, stage1_name)?;
            let (checkpoint, report) = run_stage(
                &mut model,
                stage1_name,
                &examples,
                corpus_digest(&d_p),
                &dev,
                &config.stage_config(&config.stage1, SEED_STAGE1),
            )?;
            stage_reports.insert("stage1".to_string(), report);
            checkpoint
        }
    };
    let m1_model = model.clone();

    // Stage 2: fine-tune on the gold split, warm-starting from M1.
    let stage2_examples = train_examples(&d_a_train, &tagset, Stage1Task::Joint, "stage2")?;
    let (m2, stage2_report) = run_stage(
        &mut model,
        "stage2",
        &stage2_examples,
        corpus_digest(&d_a_train),
        &dev,
        &config.stage_config(&config.stage2, SEED_STAGE2),
    )?;
    stage_reports.insert("stage2".to_string(), stage2_report);
    let m2_model = model.clone();

    // Relabel the projected corpus with M2, then retrain M0 on it.
    let d_r = relabel(&m2_model, &d_p)?;
    let mut model3 = LabelerModel::from_checkpoint(&m0).map_err(|source| PipelineError::Train {
        stage: "stage3",
        source,
    })?;
    let stage3_examples = train_examples(&d_r, &tagset, Stage1Task::Joint, "stage3")?;
    let (m3, stage3_report) = run_stage(
        &mut model3,
        "stage3",
        &stage3_examples,
        corpus_digest(&d_r),
        &dev,
        &config.stage_config(&config.stage3, SEED_STAGE3),
    )?;
    stage_reports.insert("stage3".to_string(), stage3_report);

    // Score the three trained checkpoints on every test set.
    let mut metrics = MetricsReport::new();
    metrics.insert(
        "m1".to_string(),
        evaluate_model(&m1_model, "m1", &inputs.test_sets)?,
    );
    metrics.insert(
        "m2".to_string(),
        evaluate_model(&m2_model, "m2", &inputs.test_sets)?,
    );
    metrics.insert(
        "m3".to_string(),
        evaluate_model(&model3, "m3", &inputs.test_sets)?,
    );

    Ok(PipelineState {
        config: config.clone(),
        parallel_pairs: pairs.len(),
        table,
        em_log_likelihood: em_report.log_likelihood,
        projection,
        d_p,
        d_a_train,
        d_a_dev,
        d_r,
        m0,
        m1,
        m2,
        m3,
        stage_reports,
        metrics,
    })
}

impl PipelineState {
    /// The JSON-ready digest of the run.
    pub fn summary(&self) -> PipelineSummary {
        PipelineSummary {
            config: self.config.clone(),
            corpus_sizes: CorpusSizes {
                parallel_pairs: self.parallel_pairs,
                projected: self.d_p.len(),
                annotated_train: self.d_a_train.len(),
                annotated_dev: self.d_a_dev.len(),
                relabeled: self.d_r.len(),
            },
            em_log_likelihood: self.em_log_likelihood.clone(),
            projection: self.projection.clone(),
            stage_reports: self.stage_reports.clone(),
            metrics: self.metrics.clone(),
        }
    }

    /// Writes checkpoints, datasets, the translation table, and the
    /// metrics/summary reports into `dir` (created if needed). Output
    /// bytes depend only on the state, never on the clock.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<(), FormatError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        corpus_io::write_checkpoint(&self.m0, dir.join("m0.json"))?;
        corpus_io::write_checkpoint(&self.m1, dir.join("m1.json"))?;
        corpus_io::write_checkpoint(&self.m2, dir.join("m2.json"))?;
        corpus_io::write_checkpoint(&self.m3, dir.join("m3.json"))?;
        corpus_io::write_char_tags(&self.d_p, dir.join("d_p.tags"))?;
        corpus_io::write_char_tags(&self.d_r, dir.join("d_r.tags"))?;
        corpus_io::write_table(&self.table, dir.join("table.tsv"))?;
        corpus_io::write_json_report(&self.metrics, dir.join("metrics.json"))?;
        corpus_io::write_json_report(&self.summary(), dir.join("summary.json"))?;
        Ok(())
    }
}
