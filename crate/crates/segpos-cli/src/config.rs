//! File-level configuration for the `pipeline` subcommand and readers
//! for the tagged parallel corpus format.
//!
//! A pipeline config is one JSON document carrying the input/output
//! paths next to the run settings (ratios, seed, stage-1 task,
//! alignment, model shape, per-stage training overrides). Relative
//! paths are resolved against the config file's directory, so a
//! config can travel with its corpus.

use std::collections::BTreeMap;
use std::error::Error;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segpos::aligner::ParallelPair;
use segpos::corpus_io;
use segpos::pipeline::{PipelineConfig, PipelineInputs};
use segpos::projector::{PosMappingDict, TaggedModernSentence};
use segpos::tagset::PosTagSet;

/// Binary-side error type: a message with optional source context.
pub type CliError = Box<dyn Error + Send + Sync>;

/// The `pipeline` subcommand's JSON config: paths plus the embedded
/// run settings (flattened, so ratios/seed/stages sit at top level).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineFileConfig {
    /// `ancient<TAB>word/POS word/POS ...` parallel corpus.
    pub parallel: Option<PathBuf>,
    /// Gold char-tags corpus; split 90/10 inside the run.
    pub annotated: Option<PathBuf>,
    /// Named test sets, each a char-tags file.
    pub test_sets: BTreeMap<String, PathBuf>,
    /// POS inventory file (one tag per line); built-in when absent.
    pub pos_tags: Option<PathBuf>,
    /// Modern→ancient dictionary file; built-in when absent.
    pub dict: Option<PathBuf>,
    /// Optional starting checkpoint for the initial model.
    pub initial_model: Option<PathBuf>,
    /// Where run outputs land; `out` when absent.
    pub out_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub run: PipelineConfig,
}

impl PipelineFileConfig {
    /// Reads a config and resolves its relative paths against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<PipelineFileConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: PipelineFileConfig = serde_json::from_str(&text)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_relative_to(base);
        Ok(config)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for slot in [
            &mut self.parallel,
            &mut self.annotated,
            &mut self.pos_tags,
            &mut self.dict,
            &mut self.initial_model,
            &mut self.out_dir,
        ] {
            if let Some(p) = slot.as_mut() {
                fix(p);
            }
        }
        for p in self.test_sets.values_mut() {
            fix(p);
        }
    }

    /// Loads every referenced corpus into pipeline inputs.
    pub fn load_inputs(&self) -> Result<PipelineInputs, CliError> {
        let parallel_path = self
            .parallel
            .as_ref()
            .ok_or("config is missing the `parallel` path")?;
        let annotated_path = self
            .annotated
            .as_ref()
            .ok_or("config is missing the `annotated` path")?;
        let pos_tags = match &self.pos_tags {
            Some(p) => corpus_io::read_pos_tags(p)?,
            None => PosTagSet::default_inventory(),
        };
        let dict = match &self.dict {
            Some(p) => corpus_io::read_pos_dict(p)?,
            None => PosMappingDict::default_dict(),
        };
        let parallel = read_tagged_parallel(parallel_path)?;
        let annotated = corpus_io::read_char_tags(annotated_path)?;
        let mut test_sets = BTreeMap::new();
        for (name, p) in &self.test_sets {
            test_sets.insert(name.clone(), corpus_io::read_char_tags(p)?);
        }
        let initial_model = match &self.initial_model {
            Some(p) => Some(corpus_io::read_checkpoint(p)?),
            None => None,
        };
        Ok(PipelineInputs {
            pos_tags,
            dict,
            parallel,
            annotated,
            test_sets,
            initial_model,
        })
    }

    /// Output directory, defaulting to `out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Reads an `ancient<TAB>tagged-modern` corpus, requiring `word/POS`
/// tokens on the modern side.
pub fn read_tagged_parallel(
    path: impl AsRef<Path>,
) -> Result<Vec<(ParallelPair, TaggedModernSentence)>, CliError> {
    let path = path.as_ref();
    let raw = corpus_io::read_parallel(path)?;
    raw.into_iter()
        .enumerate()
        .map(|(index, (ancient, modern))| {
            let sentence = corpus_io::parse_tagged_sentence(&modern).map_err(|e| {
                format!("{}: pair {}: {e}", path.display(), index + 1)
            })?;
            let chars: Vec<char> = ancient.chars().collect();
            let words = sentence.words.iter().map(|w| w.surface.clone()).collect();
            Ok((ParallelPair::new(words, chars), sentence))
        })
        .collect()
}

/// Reads a parallel corpus for alignment only: a tagged modern side
/// contributes its surfaces, an untagged one its whitespace tokens.
pub fn read_parallel_surfaces(
    path: impl AsRef<Path>,
) -> Result<Vec<ParallelPair>, CliError> {
    let raw = corpus_io::read_parallel(path.as_ref())?;
    Ok(raw
        .into_iter()
        .map(|(ancient, modern)| {
            let chars: Vec<char> = ancient.chars().collect();
            let words = match corpus_io::parse_tagged_sentence(&modern) {
                Ok(sentence) => sentence.words.into_iter().map(|w| w.surface).collect(),
                Err(_) => modern.split_whitespace().map(str::to_string).collect(),
            };
            ParallelPair::new(words, chars)
        })
        .collect())
}
