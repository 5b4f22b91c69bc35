//! Word-level trees to subword-level trees.
//!
//! Every subword of a word is attached to the word's own parent, so the
//! non-terminal that heads a word (a POS tag, or a pseudo node such as
//! `SUB`) heads all of its pieces.

use thiserror::Error;

use crate::tree::{ConstituencyTree, Node};

/// How non-initial (or non-final) subwords are marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Marker {
    /// Continuation pieces start with the marker: `play @@ing`.
    Prefix(String),
    /// Non-final pieces end with the marker: `play@@ ing`.
    Suffix(String),
    /// Pieces are unmarked.
    None,
}

impl Default for Marker {
    fn default() -> Self {
        Marker::Prefix("@@".to_string())
    }
}

impl Marker {
    pub fn strip<'a>(&self, piece: &'a str) -> &'a str {
        match self {
            Marker::Prefix(m) => piece.strip_prefix(m.as_str()).unwrap_or(piece),
            Marker::Suffix(m) => piece.strip_suffix(m.as_str()).unwrap_or(piece),
            Marker::None => piece,
        }
    }

    pub fn join(&self, pieces: &[String]) -> String {
        pieces.iter().map(|p| self.strip(p)).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubwordError {
    #[error("segmentation has {seg} words but the tree has {tree}")]
    WordCount { seg: usize, tree: usize },
    #[error("word {position} has no subwords")]
    EmptyWord { position: usize },
    #[error("word {position}: subwords {pieces:?} do not spell {word:?}")]
    Mismatch {
        position: usize,
        word: String,
        pieces: Vec<String>,
    },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<SubwordError>,
    },
    #[error("line {0}: empty subword")]
    EmptyPiece(usize),
}

/// Subwords per word position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordSegmentation {
    pub words: Vec<Vec<String>>,
}

impl SubwordSegmentation {
    /// Every word maps to itself.
    pub fn identity<S: AsRef<str>>(words: &[S]) -> Self {
        SubwordSegmentation {
            words: words.iter().map(|w| vec![w.as_ref().to_string()]).collect(),
        }
    }

    /// Parses one segmentation line: words separated by TAB, subwords by a space.
    pub fn parse_line(line: &str) -> Result<Self, SubwordError> {
        let mut words = Vec::new();
        for (position, word) in line.split('\t').enumerate() {
            let pieces: Vec<String> = word.split(' ').map(str::to_string).collect();
            if pieces.iter().all(String::is_empty) {
                return Err(SubwordError::EmptyWord { position });
            }
            if pieces.iter().any(String::is_empty) {
                return Err(SubwordError::EmptyPiece(position));
            }
            words.push(pieces);
        }
        Ok(SubwordSegmentation { words })
    }

    pub fn to_line(&self) -> String {
        self.words.iter().map(|w| w.join(" ")).collect::<Vec<_>>().join("\t")
    }

    pub fn subword_count(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    /// Words recovered by stripping markers and concatenating.
    pub fn words(&self, marker: &Marker) -> Vec<String> {
        self.words.iter().map(|w| marker.join(w)).collect()
    }
}

/// Replaces each terminal by its subwords, in place and in order.
pub fn to_subword_tree(
    tree: &ConstituencyTree,
    seg: &SubwordSegmentation,
    marker: &Marker,
) -> Result<ConstituencyTree, SubwordError> {
    let words = tree.yield_tokens();
    if words.len() != seg.words.len() {
        return Err(SubwordError::WordCount {
            seg: seg.words.len(),
            tree: words.len(),
        });
    }
    for (position, (word, pieces)) in words.iter().zip(&seg.words).enumerate() {
        if pieces.is_empty() {
            return Err(SubwordError::EmptyWord { position });
        }
        if marker.join(pieces) != *word {
            return Err(SubwordError::Mismatch {
                position,
                word: word.to_string(),
                pieces: pieces.clone(),
            });
        }
    }
    let mut next = 0;
    let root = expand(&tree.root, seg, &mut next)
        .pop()
        .expect("the root is a non-terminal");
    Ok(ConstituencyTree::new(root))
}

fn expand(node: &Node, seg: &SubwordSegmentation, next: &mut usize) -> Vec<Node> {
    match node {
        Node::Terminal { .. } => {
            let pieces = &seg.words[*next];
            *next += 1;
            pieces.iter().map(|p| Node::terminal(p.clone())).collect()
        }
        Node::NonTerminal { label, children } => {
            let children = children.iter().flat_map(|c| expand(c, seg, next)).collect();
            vec![Node::nonterminal(label.clone(), children)]
        }
    }
}

/// Reads a segmentation file, one sentence per line.
pub fn read_segmentations(text: &str) -> Result<Vec<SubwordSegmentation>, SubwordError> {
    text.lines()
        .enumerate()
        .map(|(idx, line)| {
            SubwordSegmentation::parse_line(line).map_err(|e| SubwordError::Line {
                line: idx + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_bracketed;

    fn seg(words: &[&[&str]]) -> SubwordSegmentation {
        SubwordSegmentation {
            words: words
                .iter()
                .map(|w| w.iter().map(|p| p.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn identity_segmentation_keeps_tree() {
        let t = parse_bracketed("(S (NP (DT a) (NN cat)) (VP (VBD sat)))").unwrap();
        let s = SubwordSegmentation::identity(&t.yield_tokens());
        assert_eq!(to_subword_tree(&t, &s, &Marker::default()).unwrap(), t);
    }

    #[test]
    fn splits_under_same_parent() {
        let t = parse_bracketed("(S (VBG playing))").unwrap();
        let out = to_subword_tree(&t, &seg(&[&["play", "@@ing"]]), &Marker::default()).unwrap();
        assert_eq!(out.to_string(), "(S (VBG play @@ing))");
    }

    #[test]
    fn pseudo_node_heads_all_pieces() {
        let t = parse_bracketed("(NN (SUB cat))").unwrap();
        let out = to_subword_tree(&t, &seg(&[&["ca", "@@t"]]), &Marker::default()).unwrap();
        assert_eq!(out.to_string(), "(NN (SUB ca @@t))");
    }

    #[test]
    fn suffix_markers() {
        let t = parse_bracketed("(S (VBG playing) (NN ball))").unwrap();
        let m = Marker::Suffix("@@".into());
        let out = to_subword_tree(&t, &seg(&[&["play@@", "ing"], &["ball"]]), &m).unwrap();
        assert_eq!(out.to_string(), "(S (VBG play@@ ing) (NN ball))");
        assert_eq!(out.len_terminals(), 3);
        assert_eq!(out.len_nonterminals(), t.len_nonterminals());
    }

    #[test]
    fn mismatches_are_errors() {
        let t = parse_bracketed("(S (VBG playing))").unwrap();
        assert!(matches!(
            to_subword_tree(&t, &seg(&[&["play", "@@ed"]]), &Marker::default()),
            Err(SubwordError::Mismatch { position: 0, .. })
        ));
        assert!(matches!(
            to_subword_tree(&t, &seg(&[&[]]), &Marker::default()),
            Err(SubwordError::EmptyWord { position: 0 })
        ));
        assert!(matches!(
            to_subword_tree(&t, &seg(&[&["playing"], &["x"]]), &Marker::default()),
            Err(SubwordError::WordCount { seg: 2, tree: 1 })
        ));
    }

    #[test]
    fn file_format() {
        let s = SubwordSegmentation::parse_line("the\tplay @@ing\tfield").unwrap();
        assert_eq!(s.words, vec![vec!["the"], vec!["play", "@@ing"], vec!["field"]]);
        assert_eq!(s.to_line(), "the\tplay @@ing\tfield");
        assert_eq!(s.words(&Marker::default()), vec!["the", "playing", "field"]);
        assert!(matches!(
            read_segmentations("a\tb\na\t\n"),
            Err(SubwordError::Line { line: 2, .. })
        ));
        assert!(SubwordSegmentation::parse_line("a  b").is_err());
    }
}
