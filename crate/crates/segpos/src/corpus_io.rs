//! Readers and writers for the on-disk formats.
//!
//! All files are UTF-8 with LF newlines. Writers are deterministic,
//! and every read∘write round trip reproduces the data exactly —
//! floating-point values included (translation tables print 17
//! significant digits; checkpoints rely on JSON float round-tripping).
//! Text passes through uninterpreted: no Unicode normalization, so
//! character indices stay valid for alignment.
//!
//! Formats:
//!
//! - **parallel**: one sentence pair per line, `ancient<TAB>modern`,
//!   blank lines skipped.
//! - **tagged words**: one sentence per line of space-separated
//!   `surface/POS` tokens; the separator is the last unescaped `/`,
//!   and `/` inside a surface is written `\/`.
//! - **char tags**: one `char<TAB>tag` per line, a blank line between
//!   sentences; tags look like `B-n` or `S-_`.
//! - **translation table**: `word<TAB>char<TAB>prob` rows in source
//!   then target order; probabilities below a floor are omitted.
//! - **checkpoint**: pretty-printed JSON of the model snapshot.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::aligner::{TranslationTable, NULL_WORD, TABLE_WRITE_FLOOR};
use crate::labeler::checkpoint::Checkpoint;
use crate::projector::{ModernWord, PosMappingDict, TaggedModernSentence, WeaklyLabeledSentence};
use crate::tagset::{HybridTag, PosTagSet};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: token {token}: {message}", path.display())]
    MalformedToken {
        path: PathBuf,
        line: usize,
        token: usize,
        message: String,
    },
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), FormatError> {
    fs::write(path, contents).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// Reads `ancient<TAB>modern` pairs, skipping blank lines. Line
/// numbers in diagnostics are 1-based and count blank lines too.
pub fn read_parallel(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((ancient, modern)) => pairs.push((ancient.to_owned(), modern.to_owned())),
            None => {
                return Err(malformed(path, idx + 1, "expected `ancient<TAB>modern`"));
            }
        }
    }
    Ok(pairs)
}

pub fn write_parallel(
    pairs: &[(String, String)],
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let mut out = String::new();
    for (ancient, modern) in pairs {
        let _ = writeln!(out, "{ancient}\t{modern}");
    }
    write_file(path.as_ref(), &out)
}

/// A bad `surface/POS` token: which token, and why.
#[derive(Debug, Error)]
#[error("token {token}: {message}")]
pub struct TaggedTokenError {
    pub token: usize,
    pub message: String,
}

fn split_tagged_token(token: &str) -> Option<(&str, &str)> {
    // The separator is the last `/` not preceded by a backslash.
    let bytes = token.as_bytes();
    for i in (0..bytes.len()).rev() {
        if bytes[i] == b'/' && (i == 0 || bytes[i - 1] != b'\\') {
            return Some((&token[..i], &token[i + 1..]));
        }
    }
    None
}

fn escape_surface(surface: &str) -> String {
    surface.replace('/', "\\/")
}

fn unescape_surface(surface: &str) -> String {
    surface.replace("\\/", "/")
}

/// Parses one line of space-separated `surface/POS` tokens.
pub fn parse_tagged_sentence(line: &str) -> Result<TaggedModernSentence, TaggedTokenError> {
    let mut words = Vec::new();
    for (index, token) in line.split_whitespace().enumerate() {
        let (surface, pos) = split_tagged_token(token).ok_or_else(|| TaggedTokenError {
            token: index,
            message: format!("`{token}` has no `/` separating surface from POS"),
        })?;
        if surface.is_empty() || pos.is_empty() {
            return Err(TaggedTokenError {
                token: index,
                message: format!("`{token}` has an empty surface or POS"),
            });
        }
        words.push(ModernWord::new(unescape_surface(surface), pos));
    }
    Ok(TaggedModernSentence { words })
}

/// Renders a sentence as space-separated `surface/POS` tokens.
pub fn format_tagged_sentence(sentence: &TaggedModernSentence) -> String {
    sentence
        .words
        .iter()
        .map(|w| format!("{}/{}", escape_surface(&w.surface), w.pos))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Reads one tagged sentence per line, skipping blank lines.
pub fn read_tagged_words(
    path: impl AsRef<Path>,
) -> Result<Vec<TaggedModernSentence>, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut sentences = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence =
            parse_tagged_sentence(line).map_err(|e| FormatError::MalformedToken {
                path: path.to_owned(),
                line: idx + 1,
                token: e.token,
                message: e.message,
            })?;
        sentences.push(sentence);
    }
    Ok(sentences)
}

pub fn write_tagged_words(
    sentences: &[TaggedModernSentence],
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let mut out = String::new();
    for sentence in sentences {
        let _ = writeln!(out, "{}", format_tagged_sentence(sentence));
    }
    write_file(path.as_ref(), &out)
}

/// Reads sentences of `char<TAB>tag` lines separated by blank lines.
pub fn read_char_tags(
    path: impl AsRef<Path>,
) -> Result<Vec<WeaklyLabeledSentence>, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut sentences = Vec::new();
    let mut chars: Vec<char> = Vec::new();
    let mut tags: Vec<HybridTag> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !chars.is_empty() {
                sentences.push(WeaklyLabeledSentence::new(
                    std::mem::take(&mut chars),
                    std::mem::take(&mut tags),
                ));
            }
            continue;
        }
        let (char_field, tag_field) = line
            .split_once('\t')
            .ok_or_else(|| malformed(path, idx + 1, "expected `char<TAB>tag`"))?;
        let mut char_iter = char_field.chars();
        let c = char_iter
            .next()
            .ok_or_else(|| malformed(path, idx + 1, "empty character field"))?;
        if char_iter.next().is_some() {
            return Err(malformed(
                path,
                idx + 1,
                format!("character field `{char_field}` holds more than one character"),
            ));
        }
        let tag: HybridTag = tag_field
            .parse()
            .map_err(|e| malformed(path, idx + 1, format!("bad tag `{tag_field}`: {e}")))?;
        chars.push(c);
        tags.push(tag);
    }
    if !chars.is_empty() {
        sentences.push(WeaklyLabeledSentence::new(chars, tags));
    }
    Ok(sentences)
}

pub fn write_char_tags(
    sentences: &[WeaklyLabeledSentence],
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let mut blocks = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        let mut block = String::new();
        for (c, tag) in sentence.chars.iter().zip(&sentence.tags) {
            let _ = writeln!(block, "{c}\t{tag}");
        }
        block.pop(); // drop the trailing newline inside the block
        blocks.push(block);
    }
    let mut out = blocks.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

/// Writes `word<TAB>char<TAB>prob` rows — sources in id order (NULL
/// first), each row sorted by target character — skipping
/// probabilities below the write floor. The row sort makes the file
/// independent of interning history, so writing a freshly read table
/// reproduces the bytes; 17 significant digits make the floats parse
/// back bit-identically.
pub fn write_table(table: &TranslationTable, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let mut out = String::new();
    for src in 0..table.num_source_types() {
        let word = table.source_word(src);
        let mut entries: Vec<(char, f64)> = table
            .row(src)
            .map(|(tgt, p)| (table.target_char(tgt), p))
            .filter(|&(_, p)| p >= TABLE_WRITE_FLOOR)
            .collect();
        entries.sort_by_key(|&(c, _)| c);
        for (c, p) in entries {
            let _ = writeln!(out, "{word}\t{c}\t{p:.16e}");
        }
    }
    write_file(path.as_ref(), &out)
}

pub fn read_table(path: impl AsRef<Path>) -> Result<TranslationTable, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut table = TranslationTable::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (word, char_field, prob_field) =
            match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(w), Some(c), Some(p), None) => (w, c, p),
                _ => {
                    return Err(malformed(path, idx + 1, "expected `word<TAB>char<TAB>prob`"));
                }
            };
        let mut char_iter = char_field.chars();
        let c = char_iter
            .next()
            .ok_or_else(|| malformed(path, idx + 1, "empty character field"))?;
        if char_iter.next().is_some() {
            return Err(malformed(
                path,
                idx + 1,
                format!("character field `{char_field}` holds more than one character"),
            ));
        }
        let p: f64 = prob_field
            .parse()
            .map_err(|e| malformed(path, idx + 1, format!("bad probability `{prob_field}`: {e}")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(malformed(
                path,
                idx + 1,
                format!("probability {p} outside [0, 1]"),
            ));
        }
        table.set_prob(word, c, p);
    }
    Ok(table)
}

pub fn write_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(cp).expect("checkpoints always serialize");
    text.push('\n');
    write_file(path.as_ref(), &text)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e.line(), e.to_string()))
}

/// Reads a POS inventory file: one tag per line, `#` comments.
pub fn read_pos_tags(path: impl AsRef<Path>) -> Result<PosTagSet, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    PosTagSet::parse(&text).map_err(|e| malformed(path, 0, e.to_string()))
}

/// Reads a modern→ancient POS dictionary: `modern<TAB>ancient` lines
/// with `null` for dropped tags and `#` comments.
pub fn read_pos_dict(path: impl AsRef<Path>) -> Result<PosMappingDict, FormatError> {
    let path = path.as_ref();
    let text = read_file(path)?;
    PosMappingDict::parse(&text).map_err(|e| malformed(path, 0, e.to_string()))
}

/// Pretty-prints any report as JSON with a trailing newline.
pub fn write_json_report<T: serde::Serialize>(
    value: &T,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialize");
    text.push('\n');
    write_file(path.as_ref(), &text)
}

/// Spelling of the NULL word in table files.
pub const TABLE_NULL_SPELLING: &str = NULL_WORD;
