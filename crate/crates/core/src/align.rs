//! Word-level edit extraction between a source sentence and its correction.
//!
//! [`align`] runs a unit-cost Levenshtein alignment and turns the traceback
//! into per-word edits of three kinds: substitution (`SUB`), deletion of a
//! redundant word (`RED`) and insertion of missing words (`MISS`). Adjacent
//! insertions at one point are merged into a single `MISS` edit.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    // Declaration order is the tie order at equal span starts.
    #[serde(rename = "MISS")]
    Miss,
    #[serde(rename = "SUB")]
    Sub,
    #[serde(rename = "RED")]
    Red,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Sub, Category::Red, Category::Miss];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Sub => "SUB",
            Category::Red => "RED",
            Category::Miss => "MISS",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = EditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SUB" => Ok(Category::Sub),
            "RED" => Ok(Category::Red),
            "MISS" => Ok(Category::Miss),
            other => Err(EditError::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("unknown edit category {0:?}")]
    UnknownCategory(String),
    #[error("malformed {category} edit at [{start},{end}): {reason}")]
    Malformed {
        category: Category,
        start: usize,
        end: usize,
        reason: &'static str,
    },
    #[error("edit span [{start},{end}) out of range for {len} source tokens")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("edits overlap at source position {0}")]
    Overlap(usize),
    #[error("edits are not in script order at source position {0}")]
    Unsorted(usize),
    #[error("more than one MISS edit at insertion point {0}")]
    DuplicateMiss(usize),
    #[error("edit at position {position} expects source token {expected:?}, found {found:?}")]
    SourceMismatch {
        position: usize,
        expected: String,
        found: String,
    },
}

/// One word-level edit. `start..end` is a half-open span over the source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    #[serde(rename = "cat")]
    pub category: Category,
    #[serde(rename = "i")]
    pub start: usize,
    #[serde(rename = "j")]
    pub end: usize,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

impl Edit {
    pub fn sub(position: usize, src: impl Into<String>, tgt: impl Into<String>) -> Self {
        Edit {
            category: Category::Sub,
            start: position,
            end: position + 1,
            src: vec![src.into()],
            tgt: vec![tgt.into()],
        }
    }

    pub fn red(position: usize, src: impl Into<String>) -> Self {
        Edit {
            category: Category::Red,
            start: position,
            end: position + 1,
            src: vec![src.into()],
            tgt: Vec::new(),
        }
    }

    pub fn miss<S: Into<String>>(point: usize, tgt: impl IntoIterator<Item = S>) -> Self {
        Edit {
            category: Category::Miss,
            start: point,
            end: point,
            src: Vec::new(),
            tgt: tgt.into_iter().map(Into::into).collect(),
        }
    }

    /// Unit cost: one per substituted, deleted or inserted token.
    pub fn cost(&self) -> usize {
        match self.category {
            Category::Sub | Category::Red => 1,
            Category::Miss => self.tgt.len(),
        }
    }

    /// Checks the shape invariants of the edit's category.
    pub fn check(&self) -> Result<(), EditError> {
        let bad = |reason| {
            Err(EditError::Malformed {
                category: self.category,
                start: self.start,
                end: self.end,
                reason,
            })
        };
        match self.category {
            Category::Sub => {
                if self.end != self.start + 1 {
                    return bad("span must cover one token");
                }
                if self.tgt.len() != 1 {
                    return bad("needs exactly one target token");
                }
                if self.src.len() > 1 {
                    return bad("at most one source token");
                }
            }
            Category::Red => {
                if self.end != self.start + 1 {
                    return bad("span must cover one token");
                }
                if !self.tgt.is_empty() {
                    return bad("must have no target tokens");
                }
                if self.src.len() > 1 {
                    return bad("at most one source token");
                }
            }
            Category::Miss => {
                if self.end != self.start {
                    return bad("span must be empty");
                }
                if self.tgt.is_empty() {
                    return bad("needs at least one target token");
                }
                if !self.src.is_empty() {
                    return bad("must have no source tokens");
                }
            }
        }
        Ok(())
    }

    fn order_key(&self) -> (usize, Category, &[String]) {
        (self.start, self.category, &self.tgt)
    }
}

impl Ord for Edit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key()
            .cmp(&other.order_key())
            .then_with(|| self.end.cmp(&other.end))
            .then_with(|| self.src.cmp(&other.src))
    }
}

impl PartialOrd for Edit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edits ordered by span start, `MISS` first on ties.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditScript {
    pub edits: Vec<Edit>,
}

impl EditScript {
    /// Sorts and validates the edits. Span ranges against a concrete
    /// sentence are checked by [`EditScript::check_against`].
    pub fn new(mut edits: Vec<Edit>) -> Result<Self, EditError> {
        edits.sort();
        let script = EditScript { edits };
        script.check_structure()?;
        Ok(script)
    }

    pub fn empty() -> Self {
        EditScript::default()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Edit> {
        self.edits.iter()
    }

    pub fn cost(&self) -> usize {
        self.edits.iter().map(Edit::cost).sum()
    }

    pub fn count(&self, category: Category) -> usize {
        self.edits.iter().filter(|e| e.category == category).count()
    }

    fn check_structure(&self) -> Result<(), EditError> {
        let mut last_covered: Option<usize> = None;
        let mut last_miss: Option<usize> = None;
        for edit in &self.edits {
            edit.check()?;
            match edit.category {
                Category::Miss => {
                    if last_miss == Some(edit.start) {
                        return Err(EditError::DuplicateMiss(edit.start));
                    }
                    last_miss = Some(edit.start);
                }
                Category::Sub | Category::Red => {
                    if last_covered == Some(edit.start) {
                        return Err(EditError::Overlap(edit.start));
                    }
                    last_covered = Some(edit.start);
                }
            }
        }
        Ok(())
    }

    /// Validates spans (and recorded source tokens, when present) against `src`.
    pub fn check_against(&self, src: &[String]) -> Result<(), EditError> {
        for w in self.edits.windows(2) {
            if w[0] > w[1] {
                return Err(EditError::Unsorted(w[1].start));
            }
        }
        self.check_structure()?;
        for edit in &self.edits {
            if edit.end > src.len() || edit.start > edit.end {
                return Err(EditError::OutOfRange {
                    start: edit.start,
                    end: edit.end,
                    len: src.len(),
                });
            }
            if let Some(expected) = edit.src.first() {
                if *expected != src[edit.start] {
                    return Err(EditError::SourceMismatch {
                        position: edit.start,
                        expected: expected.clone(),
                        found: src[edit.start].clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a EditScript {
    type Item = &'a Edit;
    type IntoIter = std::slice::Iter<'a, Edit>;

    fn into_iter(self) -> Self::IntoIter {
        self.edits.iter()
    }
}

/// Rebuilds the target sentence from `src` and an edit script.
pub fn apply<S: AsRef<str>>(src: &[S], script: &EditScript) -> Result<Vec<String>, EditError> {
    let src: Vec<String> = src.iter().map(|s| s.as_ref().to_string()).collect();
    script.check_against(&src)?;
    let mut out = Vec::with_capacity(src.len() + script.len());
    let mut edits = script.edits.iter().peekable();
    for p in 0..=src.len() {
        let mut replaced: Option<&Edit> = None;
        while let Some(edit) = edits.next_if(|e| e.start == p) {
            match edit.category {
                Category::Miss => out.extend(edit.tgt.iter().cloned()),
                Category::Sub | Category::Red => replaced = Some(edit),
            }
        }
        if p < src.len() {
            match replaced {
                Some(edit) => out.extend(edit.tgt.iter().cloned()),
                None => out.push(src[p].clone()),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// Minimal unit-cost edit script turning `src` into `tgt`.
///
/// Costs are computed over suffixes and traced forward from the start, taking
/// match, then substitute, then delete, then insert whenever it stays optimal,
/// so earlier source tokens are preferred as alignment anchors.
pub fn align<S: AsRef<str>, T: AsRef<str>>(src: &[S], tgt: &[T]) -> EditScript {
    let m = src.len();
    let n = tgt.len();
    let width = n + 1;
    // cost[i * width + j]: distance between src[i..] and tgt[j..]
    let mut cost = vec![0usize; (m + 1) * width];
    for j in 0..=n {
        cost[m * width + j] = n - j;
    }
    for i in (0..m).rev() {
        cost[i * width + n] = m - i;
        for j in (0..n).rev() {
            let diag = cost[(i + 1) * width + j + 1] + usize::from(src[i].as_ref() != tgt[j].as_ref());
            let del = cost[(i + 1) * width + j] + 1;
            let ins = cost[i * width + j + 1] + 1;
            cost[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (0, 0);
    while i < m || j < n {
        let here = cost[i * width + j];
        let op = if i < m && j < n && src[i].as_ref() == tgt[j].as_ref() && cost[(i + 1) * width + j + 1] == here {
            Op::Match
        } else if i < m && j < n && cost[(i + 1) * width + j + 1] + 1 == here {
            Op::Substitute
        } else if i < m && cost[(i + 1) * width + j] + 1 == here {
            Op::Delete
        } else {
            Op::Insert
        };
        match op {
            Op::Match | Op::Substitute => {
                i += 1;
                j += 1;
            }
            Op::Delete => i += 1,
            Op::Insert => j += 1,
        }
        ops.push(op);
    }

    let mut edits = Vec::new();
    let mut region = Region::default();
    let (mut i, mut j) = (0, 0);
    for op in ops {
        match op {
            Op::Match => {
                region.flush(src, tgt, &mut edits);
                i += 1;
                j += 1;
                region.src_start = i;
                region.tgt_start = j;
            }
            Op::Substitute => {
                region.src_len += 1;
                region.tgt_len += 1;
                i += 1;
                j += 1;
            }
            Op::Delete => {
                region.src_len += 1;
                i += 1;
            }
            Op::Insert => {
                region.tgt_len += 1;
                j += 1;
            }
        }
    }
    region.flush(src, tgt, &mut edits);
    edits.sort();
    EditScript { edits }
}

/// A maximal run of non-matching operations between two matches.
#[derive(Default)]
struct Region {
    src_start: usize,
    tgt_start: usize,
    src_len: usize,
    tgt_len: usize,
}

impl Region {
    fn flush<S: AsRef<str>, T: AsRef<str>>(&mut self, src: &[S], tgt: &[T], out: &mut Vec<Edit>) {
        let paired = self.src_len.min(self.tgt_len);
        for k in 0..paired {
            let s = src[self.src_start + k].as_ref();
            let t = tgt[self.tgt_start + k].as_ref();
            debug_assert_ne!(s, t, "optimal regions never pair equal tokens");
            out.push(Edit::sub(self.src_start + k, s, t));
        }
        for k in paired..self.src_len {
            out.push(Edit::red(self.src_start + k, src[self.src_start + k].as_ref()));
        }
        if self.tgt_len > self.src_len {
            let extra = &tgt[self.tgt_start + self.src_len..self.tgt_start + self.tgt_len];
            out.push(Edit::miss(
                self.src_start + self.src_len,
                extra.iter().map(|t| t.as_ref().to_string()),
            ));
        }
        self.src_len = 0;
        self.tgt_len = 0;
    }
}

/// Plain Levenshtein distance over tokens.
pub fn edit_distance<S: AsRef<str>, T: AsRef<str>>(src: &[S], tgt: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=tgt.len()).collect();
    let mut cur = vec![0; tgt.len() + 1];
    for (i, s) in src.iter().enumerate() {
        cur[0] = i + 1;
        for (j, t) in tgt.iter().enumerate() {
            let sub = prev[j] + usize::from(s.as_ref() != t.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[tgt.len()]
}

/// Serializes a script as `{"edits":[...]}`.
pub fn to_json(script: &EditScript) -> String {
    serde_json::to_string(script).expect("edit scripts always serialize")
}

/// Parses `{"edits":[...]}`, restoring script order and checking edit shapes.
pub fn from_json(text: &str) -> Result<EditScript, JsonScriptError> {
    let raw: EditScript = serde_json::from_str(text)?;
    Ok(EditScript::new(raw.edits)?)
}

#[derive(Debug, Error)]
pub enum JsonScriptError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Edit(#[from] EditError),
}

pub fn tokens(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}
