//! `segpos` — joint word segmentation and POS tagging for ancient
//! Chinese via weak labels projected across a parallel corpus.
//!
//! Each subcommand maps to one library operation: `align` trains the
//! translation table, `project` turns alignments into weak labels,
//! `train` runs one training stage, `relabel` replaces weak labels
//! with model predictions, `evaluate` computes span F1, `pipeline`
//! runs the whole thing from a JSON config, and `synth` fabricates a
//! corpus with known gold labels for experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use segpos::aligner::{best_alignment, em_train, EmConfig};
use segpos::corpus_io;
use segpos::evaluator::{score, ScoreMode};
use segpos::labeler::encoder::CharVocab;
use segpos::labeler::{LabelerModel, ModelHyper, Sentence, TrainConfig, TrainExample};
use segpos::pipeline::{
    collapse_task, corpus_digest, run_full, run_stage, subsample, Stage1Task,
};
use segpos::projector::{project_corpus, PosMappingDict, WeaklyLabeledSentence};
use segpos::tagset::{HybridTag, HybridTagSet, PosTagSet};

use segpos_cli::config::{
    read_parallel_surfaces, read_tagged_parallel, CliError, PipelineFileConfig,
};
use segpos_cli::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(
    name = "segpos",
    version,
    about = "Joint word segmentation and POS tagging trained from labels \
             projected across a parallel corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(format!("must be in (0, 1], got {value}"))
    }
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("must be in [0, 1), got {value}"))
    }
}

fn parse_noise(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("must be in [0, 1], got {value}"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a word-to-character translation table from a parallel corpus.
    Align {
        /// Parallel corpus: `ancient<TAB>modern`; a tagged modern side
        /// contributes its surfaces, an untagged one its tokens.
        #[arg(long)]
        input: PathBuf,
        /// Where to write the table (TSV).
        #[arg(long)]
        out: PathBuf,
        /// EM iterations.
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Additive smoothing on expected counts.
        #[arg(long, default_value_t = 1e-6)]
        smoothing: f64,
        /// Also write one-best links: per pair, space-separated
        /// `char:word` indices with `-` for unaligned characters.
        #[arg(long)]
        links: Option<PathBuf>,
    },
    /// Project tagged modern words onto ancient characters.
    Project {
        /// Parallel corpus with a `word/POS`-tagged modern side.
        #[arg(long)]
        input: PathBuf,
        /// Translation table produced by `align`.
        #[arg(long)]
        table: PathBuf,
        /// Posterior threshold below which characters stay unaligned.
        #[arg(long, default_value_t = 0.0, value_parser = parse_threshold)]
        tau: f64,
        /// Modern-to-ancient POS dictionary; built-in when omitted.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Where to write the projected char-tags corpus.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage on a char-tags corpus.
    Train(TrainArgs),
    /// Relabel a corpus with a trained model, filling every POS.
    Relabel {
        /// Trained checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Char-tags corpus whose labels are replaced.
        #[arg(long)]
        data: PathBuf,
        /// Where to write the relabeled corpus.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold labels (span micro-F1).
    Evaluate {
        /// Gold char-tags corpus.
        #[arg(long)]
        gold: PathBuf,
        /// Predicted char-tags corpus over the same text.
        #[arg(long)]
        pred: PathBuf,
        /// `wsg` scores boundaries; `pos` scores boundaries plus POS.
        #[arg(long, value_enum, default_value_t = ModeArg::Wsg)]
        mode: ModeArg,
    },
    /// Run align, project, three training stages, relabel, and
    /// evaluation from one JSON config.
    Pipeline {
        /// JSON config; relative paths resolve against its directory.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic parallel corpus with known gold labels.
    Synth {
        /// Output directory (also gets a ready-to-run config.json).
        #[arg(long)]
        out: PathBuf,
        /// Parallel sentence pairs.
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        /// Gold-annotated sentences.
        #[arg(long, default_value_t = 200)]
        annotated: usize,
        /// Sentences per test set.
        #[arg(long, default_value_t = 50)]
        test: usize,
        /// Corruption rate for the modern side.
        #[arg(long, default_value_t = 0.3, value_parser = parse_noise)]
        noise: f64,
        /// Distinct ancient word types.
        #[arg(long, default_value_t = 80)]
        word_types: usize,
        /// Distinct ancient characters.
        #[arg(long, default_value_t = 60)]
        alphabet: usize,
        /// POS tags in play (1..=12).
        #[arg(long, default_value_t = 8)]
        pos_count: usize,
        /// Shortest sentence, in words.
        #[arg(long, default_value_t = 2)]
        min_len: usize,
        /// Longest sentence, in words.
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("data").required(true).multiple(false)))]
struct TrainArgs {
    /// Weakly labeled training corpus; `--ratio-projected` applies.
    #[arg(long, group = "data")]
    projected: Option<PathBuf>,
    /// Gold training corpus; `--ratio-annotated` applies.
    #[arg(long, group = "data")]
    annotated: Option<PathBuf>,
    /// Gold dev corpus for early stopping and model selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Starting checkpoint; a fresh model is initialized when omitted.
    #[arg(long)]
    init: Option<PathBuf>,
    /// POS inventory for fresh models; built-in when omitted.
    #[arg(long)]
    pos_tags: Option<PathBuf>,
    /// Which part of the labels to train on.
    #[arg(long, value_enum, default_value_t = TaskArg::Joint)]
    task: TaskArg,
    /// Fraction of a `--annotated` corpus to keep.
    #[arg(long, default_value_t = 1.0, value_parser = parse_ratio)]
    ratio_annotated: f64,
    /// Fraction of a `--projected` corpus to keep.
    #[arg(long, default_value_t = 1.0, value_parser = parse_ratio)]
    ratio_projected: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Epochs without dev improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 5.0)]
    clip_norm: f64,
    /// Character embedding width (fresh models only).
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    /// Context characters on each side (fresh models only).
    #[arg(long, default_value_t = 2)]
    window: usize,
    /// Hidden layer width (fresh models only).
    #[arg(long, default_value_t = 128)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the trained checkpoint.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Joint,
    Wsg,
    Pos,
}

impl TaskArg {
    fn stage1_task(self) -> Stage1Task {
        match self {
            TaskArg::Joint => Stage1Task::Joint,
            TaskArg::Wsg => Stage1Task::WsgOnly,
            TaskArg::Pos => Stage1Task::PosOnly,
        }
    }

    fn stage_name(self) -> &'static str {
        match self {
            TaskArg::Joint => "train(joint)",
            TaskArg::Wsg => "train(wsg)",
            TaskArg::Pos => "train(pos)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Wsg,
    Pos,
}

impl From<ModeArg> for ScoreMode {
    fn from(mode: ModeArg) -> ScoreMode {
        match mode {
            ModeArg::Wsg => ScoreMode::Segmentation,
            ModeArg::Pos => ScoreMode::Tagging,
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if usage_ok { 0 } else { 1 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn check_corpus_pos(
    corpus: &[WeaklyLabeledSentence],
    what: &str,
    inventory: &PosTagSet,
) -> Result<(), CliError> {
    for (index, sentence) in corpus.iter().enumerate() {
        for tag in &sentence.tags {
            if let Some(pos) = tag.pos.as_deref() {
                if inventory.id_of(pos).is_none() {
                    return Err(format!(
                        "{what} sentence {}: POS `{pos}` is not in the inventory",
                        index + 1
                    )
                    .into());
                }
            }
        }
    }
    Ok(())
}

fn gold_dev_pairs(
    sentences: &[WeaklyLabeledSentence],
) -> Result<Vec<(Sentence, Vec<HybridTag>)>, CliError> {
    sentences
        .iter()
        .map(|s| Ok((Sentence::new(s.chars.clone())?, s.tags.clone())))
        .collect()
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Align {
            input,
            out,
            iters,
            smoothing,
            links,
        } => {
            let pairs = read_parallel_surfaces(&input)?;
            let config = EmConfig {
                iterations: iters,
                smoothing,
            };
            let (table, report) = em_train(&pairs, &config)?;
            corpus_io::write_table(&table, &out)?;
            if let Some(path) = links {
                let mut text = String::new();
                for pair in &pairs {
                    let alignment = best_alignment(pair, &table, 0.0);
                    let line = alignment
                        .links
                        .iter()
                        .enumerate()
                        .map(|(j, link)| match link.word {
                            Some(i) => format!("{j}:{i}"),
                            None => format!("{j}:-"),
                        })
                        .collect::<Vec<_>>()
                        .join(" ");
                    let _ = writeln!(text, "{line}");
                }
                std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            if let Some(ll) = report.log_likelihood.last() {
                println!("aligned {} pairs, final log-likelihood {ll:.6}", pairs.len());
            }
        }

        Command::Project {
            input,
            table,
            tau,
            dict,
            out,
        } => {
            let parallel = read_tagged_parallel(&input)?;
            let table = corpus_io::read_table(&table)?;
            let dict = match dict {
                Some(p) => corpus_io::read_pos_dict(&p)?,
                None => PosMappingDict::default_dict(),
            };
            let (pairs, moderns): (Vec<_>, Vec<_>) = parallel.into_iter().unzip();
            let (sentences, report) = project_corpus(&pairs, &moderns, &table, tau, &dict)?;
            corpus_io::write_char_tags(&sentences, &out)?;
            println!(
                "projected {} sentences ({} unaligned characters, {} unknown-POS words)",
                sentences.len(),
                report.unaligned_chars,
                report.unknown_pos_words
            );
        }

        Command::Train(args) => run_train(args)?,

        Command::Relabel { model, data, out } => {
            let model = LabelerModel::from_checkpoint(&corpus_io::read_checkpoint(&model)?)?;
            let corpus = corpus_io::read_char_tags(&data)?;
            let relabeled = segpos::pipeline::relabel(&model, &corpus)?;
            corpus_io::write_char_tags(&relabeled, &out)?;
            println!("relabeled {} sentences", relabeled.len());
        }

        Command::Evaluate { gold, pred, mode } => {
            let gold_corpus = corpus_io::read_char_tags(&gold)?;
            let pred_corpus = corpus_io::read_char_tags(&pred)?;
            if gold_corpus.len() == pred_corpus.len() {
                for (index, (g, p)) in gold_corpus.iter().zip(&pred_corpus).enumerate() {
                    if g.chars != p.chars {
                        return Err(format!(
                            "sentence {}: gold and prediction text differ",
                            index + 1
                        )
                        .into());
                    }
                }
            }
            let gold_tags: Vec<Vec<HybridTag>> =
                gold_corpus.iter().map(|s| s.tags.clone()).collect();
            let pred_tags: Vec<Vec<HybridTag>> =
                pred_corpus.iter().map(|s| s.tags.clone()).collect();
            let metrics = score(&gold_tags, &pred_tags, mode.into())?;
            println!(
                "gold {} predicted {} matched {}",
                metrics.gold, metrics.predicted, metrics.matched
            );
            println!("precision {:.6}", metrics.precision);
            println!("recall {:.6}", metrics.recall);
            println!("f1 {:.6}", metrics.f1);
        }

        Command::Pipeline { config, seed, out } => {
            let mut file_config = PipelineFileConfig::load(&config)?;
            if let Some(seed) = seed {
                file_config.run.seed = seed;
            }
            if let Some(dir) = out {
                file_config.out_dir = Some(dir);
            }
            let inputs = file_config.load_inputs()?;
            let state = run_full(&inputs, &file_config.run)?;
            let out_dir = file_config.out_dir();
            state.write_outputs(&out_dir)?;
            for (model, rows) in &state.metrics {
                for (set, scores) in rows {
                    println!(
                        "{model} {set} wsg-f1 {:.4} pos-f1 {:.4}",
                        scores.wsg.f1, scores.pos.f1
                    );
                }
            }
            println!("outputs in {}", out_dir.display());
        }

        Command::Synth {
            out,
            pairs,
            annotated,
            test,
            noise,
            word_types,
            alphabet,
            pos_count,
            min_len,
            max_len,
            seed,
        } => {
            let config = SynthConfig {
                word_types,
                alphabet,
                pos_count,
                pairs,
                annotated,
                test,
                noise,
                min_len,
                max_len,
                seed,
            };
            let corpus = synth::generate(&config);
            synth::write_corpus(&corpus, &out, &config)?;
            println!(
                "wrote {} pairs, {} annotated, 2x{} test sentences to {}",
                corpus.parallel.len(),
                corpus.annotated.len(),
                corpus.test_a.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let (data_path, ratio, ratio_offset) = match (&args.projected, &args.annotated) {
        (Some(p), None) => (p, args.ratio_projected, 11u64),
        (None, Some(p)) => (p, args.ratio_annotated, 10u64),
        _ => unreachable!("clap enforces exactly one data source"),
    };
    let corpus = corpus_io::read_char_tags(data_path)?;
    let corpus = subsample(&corpus, ratio, args.seed.wrapping_add(ratio_offset));

    let mut model = match &args.init {
        Some(p) => LabelerModel::from_checkpoint(&corpus_io::read_checkpoint(p)?)?,
        None => {
            let inventory = match &args.pos_tags {
                Some(p) => corpus_io::read_pos_tags(p)?,
                None => PosTagSet::default_inventory(),
            };
            let vocab = CharVocab::from_corpus(corpus.iter().map(|s| s.chars.as_slice()));
            let hyper = ModelHyper {
                embed_dim: args.embed_dim,
                window: args.window,
                hidden_dim: args.hidden_dim,
            };
            let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
            LabelerModel::init(HybridTagSet::new(inventory), vocab, hyper, &mut rng)
        }
    };
    check_corpus_pos(&corpus, "training", model.tags.pos_tags())?;

    let task = args.task.stage1_task();
    let examples: Vec<TrainExample> = corpus
        .iter()
        .map(|s| {
            Ok::<TrainExample, CliError>(TrainExample::new(
                Sentence::new(s.chars.clone())?,
                collapse_task(&s.tags, &model.tags, task),
            ))
        })
        .collect::<Result<_, _>>()?;

    let dev = match &args.dev {
        Some(p) => {
            let sentences = corpus_io::read_char_tags(p)?;
            check_corpus_pos(&sentences, "dev", model.tags.pos_tags())?;
            gold_dev_pairs(&sentences)?
        }
        None => Vec::new(),
    };

    let config = TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        clip_norm: args.clip_norm,
        max_epochs: args.epochs,
        patience: args.patience,
        seed: args.seed,
    };
    let (checkpoint, report) = run_stage(
        &mut model,
        args.task.stage_name(),
        &examples,
        corpus_digest(&corpus),
        &dev,
        &config,
    )?;
    corpus_io::write_checkpoint(&checkpoint, &args.out)?;
    println!(
        "trained {} epochs (best {}), {} infeasible sentences skipped",
        report.epochs_run, report.best_epoch, report.skipped_infeasible
    );
    if !dev.is_empty() {
        println!("best dev pos-f1 {:.6}", report.best_dev_pos_f1);
    }
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}
