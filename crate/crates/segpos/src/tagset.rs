//! Hybrid position/POS tag set.
//!
//! A sentence is labeled per character with a hybrid tag `b-p` where
//! `b` is the position of the character inside its word (`B`egin,
//! `M`iddle, `E`nd, or `S`ingle) and `p` is the POS of that word. With
//! a POS inventory of size `P` the hybrid tag set has `4 * P` tags, so
//! segmentation and tagging collapse into a single sequence-labeling
//! task. A word whose POS is not known yet carries the placeholder
//! `_`; such tags are legal in data but have no index in the model's
//! tag space.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// POS placeholder for words whose category is unknown.
pub const UNKNOWN_POS: &str = "_";

/// Contents of the default 22-category POS inventory file.
pub const DEFAULT_POS_TAGS: &str = include_str!("../data/pos_tags_default.txt");

#[derive(Debug, Error)]
pub enum TagSetError {
    #[error("POS tag set is empty")]
    Empty,
    #[error("duplicate POS tag `{0}`")]
    Duplicate(String),
    #[error("`{0}` is not usable as a POS tag")]
    Reserved(String),
    #[error("unknown POS tag `{0}`")]
    UnknownPos(String),
    #[error("tag `{0}` has unknown POS and no index in the tag space")]
    UnknownPosTag(String),
    #[error("tag index {index} out of range for {num_tags} tags")]
    IndexOutOfRange { index: usize, num_tags: usize },
    #[error("malformed hybrid tag `{0}`, expected `B-pos`, `M-pos`, `E-pos` or `S-pos`")]
    MalformedTag(String),
}

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("segmentation has no spans")]
    Empty,
    #[error("span {index} is empty ({start}..{end})")]
    EmptySpan { index: usize, start: usize, end: usize },
    #[error("span {index} starts at {found}, expected {expected}")]
    NotContiguous { index: usize, expected: usize, found: usize },
}

/// Position of a character inside its word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// First character of a multi-character word.
    Begin,
    /// Interior character of a multi-character word.
    Middle,
    /// Last character of a multi-character word.
    End,
    /// The only character of a single-character word.
    Single,
}

pub const NUM_BOUNDARY_TAGS: usize = 4;

impl BoundaryTag {
    pub const ALL: [BoundaryTag; NUM_BOUNDARY_TAGS] = [
        BoundaryTag::Begin,
        BoundaryTag::Middle,
        BoundaryTag::End,
        BoundaryTag::Single,
    ];

    pub fn index(self) -> usize {
        match self {
            BoundaryTag::Begin => 0,
            BoundaryTag::Middle => 1,
            BoundaryTag::End => 2,
            BoundaryTag::Single => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<BoundaryTag> {
        BoundaryTag::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            BoundaryTag::Begin => 'B',
            BoundaryTag::Middle => 'M',
            BoundaryTag::End => 'E',
            BoundaryTag::Single => 'S',
        }
    }

    pub fn from_char(c: char) -> Option<BoundaryTag> {
        match c {
            'B' => Some(BoundaryTag::Begin),
            'M' => Some(BoundaryTag::Middle),
            'E' => Some(BoundaryTag::End),
            'S' => Some(BoundaryTag::Single),
            _ => None,
        }
    }

    /// True if a word may start at a character carrying this tag.
    pub fn starts_word(self) -> bool {
        matches!(self, BoundaryTag::Begin | BoundaryTag::Single)
    }

    /// True if a word may end at a character carrying this tag.
    pub fn ends_word(self) -> bool {
        matches!(self, BoundaryTag::End | BoundaryTag::Single)
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// An ordered, duplicate-free POS inventory.
#[derive(Debug, Clone)]
pub struct PosTagSet {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl PosTagSet {
    pub fn new<I, S>(tags: I) -> Result<PosTagSet, TagSetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tags: Vec<String> = tags.into_iter().map(Into::into).collect();
        if tags.is_empty() {
            return Err(TagSetError::Empty);
        }
        let mut index = HashMap::new();
        for (i, tag) in tags.iter().enumerate() {
            if tag.is_empty() || tag == UNKNOWN_POS || tag.chars().any(char::is_whitespace) {
                return Err(TagSetError::Reserved(tag.clone()));
            }
            if index.insert(tag.clone(), i).is_some() {
                return Err(TagSetError::Duplicate(tag.clone()));
            }
        }
        Ok(PosTagSet { tags, index })
    }

    /// Parses the one-tag-per-line format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<PosTagSet, TagSetError> {
        let tags = text
            .lines()
            .map(|line| match line.find('#') {
                Some(pos) => line[..pos].trim(),
                None => line.trim(),
            })
            .filter(|line| !line.is_empty())
            .map(str::to_owned);
        PosTagSet::new(tags)
    }

    /// The 22-category inventory shipped with the crate.
    pub fn default_inventory() -> PosTagSet {
        PosTagSet::parse(DEFAULT_POS_TAGS).expect("shipped tag inventory is valid")
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn get(&self, id: usize) -> Option<&str> {
        self.tags.get(id).map(String::as_str)
    }

    pub fn id_of(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.index.contains_key(tag)
    }
}

/// A per-character label: word-internal position plus the word's POS
/// (`None` when the POS is unknown).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HybridTag {
    pub boundary: BoundaryTag,
    pub pos: Option<String>,
}

impl HybridTag {
    pub fn new(boundary: BoundaryTag, pos: impl Into<String>) -> HybridTag {
        HybridTag {
            boundary,
            pos: Some(pos.into()),
        }
    }

    pub fn unknown(boundary: BoundaryTag) -> HybridTag {
        HybridTag {
            boundary,
            pos: None,
        }
    }

    pub fn pos_str(&self) -> &str {
        self.pos.as_deref().unwrap_or(UNKNOWN_POS)
    }

    pub fn has_known_pos(&self) -> bool {
        self.pos.is_some()
    }
}

impl fmt::Display for HybridTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.boundary, self.pos_str())
    }
}

impl FromStr for HybridTag {
    type Err = TagSetError;

    fn from_str(s: &str) -> Result<HybridTag, TagSetError> {
        let malformed = || TagSetError::MalformedTag(s.to_owned());
        let mut chars = s.chars();
        let boundary = chars
            .next()
            .and_then(BoundaryTag::from_char)
            .ok_or_else(malformed)?;
        if chars.next() != Some('-') {
            return Err(malformed());
        }
        let pos = chars.as_str();
        if pos.is_empty() || pos.chars().any(char::is_whitespace) {
            return Err(malformed());
        }
        Ok(if pos == UNKNOWN_POS {
            HybridTag::unknown(boundary)
        } else {
            HybridTag::new(boundary, pos)
        })
    }
}

/// Legality of `a` immediately followed by `b`.
///
/// A word boundary may fall between the two characters only when `a`
/// ends a word and `b` starts one; inside a word the position tags
/// must chain (`B`/`M` -> `M`/`E`) and both characters must carry the
/// word's POS. Tags with unknown POS never satisfy the within-word
/// case because their POS cannot be shown equal.
pub fn is_valid_transition(a: &HybridTag, b: &HybridTag) -> bool {
    if a.boundary.ends_word() {
        b.boundary.starts_word()
    } else {
        matches!(b.boundary, BoundaryTag::Middle | BoundaryTag::End)
            && a.pos.is_some()
            && a.pos == b.pos
    }
}

/// The full `4 * P` tag space: every (boundary, POS) combination,
/// indexed as `boundary.index() * P + pos_id`.
#[derive(Debug, Clone)]
pub struct HybridTagSet {
    pos: PosTagSet,
}

impl HybridTagSet {
    pub fn new(pos: PosTagSet) -> HybridTagSet {
        HybridTagSet { pos }
    }

    pub fn pos_tags(&self) -> &PosTagSet {
        &self.pos
    }

    /// Number of hybrid tags (`4 * P`).
    pub fn num_tags(&self) -> usize {
        NUM_BOUNDARY_TAGS * self.pos.len()
    }

    pub fn boundary_of(&self, index: usize) -> BoundaryTag {
        BoundaryTag::from_index(index / self.pos.len()).expect("index in range")
    }

    pub fn pos_id_of(&self, index: usize) -> usize {
        index % self.pos.len()
    }

    pub fn index_of(&self, tag: &HybridTag) -> Result<usize, TagSetError> {
        let pos = tag
            .pos
            .as_deref()
            .ok_or_else(|| TagSetError::UnknownPosTag(tag.to_string()))?;
        let pos_id = self
            .pos
            .id_of(pos)
            .ok_or_else(|| TagSetError::UnknownPos(pos.to_owned()))?;
        Ok(tag.boundary.index() * self.pos.len() + pos_id)
    }

    pub fn tag_at(&self, index: usize) -> Result<HybridTag, TagSetError> {
        if index >= self.num_tags() {
            return Err(TagSetError::IndexOutOfRange {
                index,
                num_tags: self.num_tags(),
            });
        }
        let pos = self.pos.get(self.pos_id_of(index)).expect("id in range");
        Ok(HybridTag::new(self.boundary_of(index), pos))
    }

    /// Transition legality on tag indices; agrees with
    /// [`is_valid_transition`] on the corresponding tags.
    pub fn valid_transition_idx(&self, a: usize, b: usize) -> bool {
        let ba = self.boundary_of(a);
        let bb = self.boundary_of(b);
        if ba.ends_word() {
            bb.starts_word()
        } else {
            matches!(bb, BoundaryTag::Middle | BoundaryTag::End)
                && self.pos_id_of(a) == self.pos_id_of(b)
        }
    }

    /// True if a sentence may begin with this tag.
    pub fn valid_start_idx(&self, index: usize) -> bool {
        self.boundary_of(index).starts_word()
    }

    /// True if a sentence may end with this tag.
    pub fn valid_stop_idx(&self, index: usize) -> bool {
        self.boundary_of(index).ends_word()
    }
}

/// One word of a segmented sentence: the half-open character range
/// `start..end` plus the word's POS (`None` = unknown).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub pos: Option<String>,
}

impl Span {
    pub fn new(start: usize, end: usize, pos: impl Into<String>) -> Span {
        Span {
            start,
            end,
            pos: Some(pos.into()),
        }
    }

    pub fn unknown(start: usize, end: usize) -> Span {
        Span {
            start,
            end,
            pos: None,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A complete segmentation: spans tiling `0..n` in order.
pub type Segmentation = Vec<Span>;

/// Converts a segmentation to per-character hybrid tags.
///
/// Spans must be non-empty and tile `0..n` contiguously starting at 0.
/// A one-character span becomes `S`, longer spans become `B M* E`, and
/// every character inherits the span's POS.
pub fn encode_segmentation(spans: &[Span]) -> Result<Vec<HybridTag>, SegmentationError> {
    if spans.is_empty() {
        return Err(SegmentationError::Empty);
    }
    let mut tags = Vec::new();
    let mut expected = 0usize;
    for (index, span) in spans.iter().enumerate() {
        if span.is_empty() {
            return Err(SegmentationError::EmptySpan {
                index,
                start: span.start,
                end: span.end,
            });
        }
        if span.start != expected {
            return Err(SegmentationError::NotContiguous {
                index,
                expected,
                found: span.start,
            });
        }
        expected = span.end;
        if span.len() == 1 {
            tags.push(HybridTag {
                boundary: BoundaryTag::Single,
                pos: span.pos.clone(),
            });
        } else {
            tags.push(HybridTag {
                boundary: BoundaryTag::Begin,
                pos: span.pos.clone(),
            });
            for _ in span.start + 1..span.end - 1 {
                tags.push(HybridTag {
                    boundary: BoundaryTag::Middle,
                    pos: span.pos.clone(),
                });
            }
            tags.push(HybridTag {
                boundary: BoundaryTag::End,
                pos: span.pos.clone(),
            });
        }
    }
    Ok(tags)
}

/// Converts per-character tags back to a segmentation.
///
/// Total on every input: ill-formed sequences are repaired by reading
/// greedily left to right — `M`/`E` with no word open starts one, `B`,
/// `S`, and end-of-sentence close whatever is open. Each word takes
/// the POS of its first character's tag, so
/// `decode_tags(&encode_segmentation(s)?) == s` for every valid `s`.
pub fn decode_tags(tags: &[HybridTag]) -> Segmentation {
    let mut spans = Vec::new();
    // Start index and POS of the word currently open, if any.
    let mut open: Option<(usize, Option<String>)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag.boundary {
            BoundaryTag::Begin => {
                if let Some((start, pos)) = open.take() {
                    spans.push(Span { start, end: i, pos });
                }
                open = Some((i, tag.pos.clone()));
            }
            BoundaryTag::Middle => {
                if open.is_none() {
                    open = Some((i, tag.pos.clone()));
                }
            }
            BoundaryTag::End => match open.take() {
                Some((start, pos)) => spans.push(Span {
                    start,
                    end: i + 1,
                    pos,
                }),
                None => spans.push(Span {
                    start: i,
                    end: i + 1,
                    pos: tag.pos.clone(),
                }),
            },
            BoundaryTag::Single => {
                if let Some((start, pos)) = open.take() {
                    spans.push(Span { start, end: i, pos });
                }
                spans.push(Span {
                    start: i,
                    end: i + 1,
                    pos: tag.pos.clone(),
                });
            }
        }
    }
    if let Some((start, pos)) = open {
        spans.push(Span {
            start,
            end: tags.len(),
            pos,
        });
    }
    spans
}
