//! Constituency trees: data model, bracketed notation and validation.
//!
//! A tree is read from and written to the usual one-line treebank notation,
//! `(S (NP (DT the) (NN cat)) (VP (VBD sat)))`. Terminal tokens containing
//! parentheses are written as `-LRB-` / `-RRB-` and restored on parse.
//! Unary chains are kept exactly as written.

use std::fmt;
use std::io::BufRead;

use thiserror::Error;

/// The three pseudo labels of the extended scheme.
pub const PSEUDO_LABELS: [&str; 3] = ["SUB", "RED", "MISS"];

const LRB: &str = "-LRB-";
const RRB: &str = "-RRB-";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced parentheses at byte {0}")]
    Unbalanced(usize),
    #[error("empty constituent `()` at byte {0}")]
    EmptyConstituent(usize),
    #[error("constituent `{label}` at byte {offset} has no children")]
    NoChildren { label: String, offset: usize },
    #[error("missing label at byte {0}")]
    MissingLabel(usize),
    #[error("expected `(` at byte {0}")]
    ExpectedOpen(usize),
    #[error("trailing input at byte {0}")]
    Trailing(usize),
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<TreeError>,
    },
    #[error("line {0}: blank line")]
    BlankLine(usize),
    #[error("read error: {0}")]
    Io(String),
}

/// Which pseudo node a label denotes, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pseudo {
    Sub,
    Red,
    Miss,
}

impl Pseudo {
    pub fn as_str(self) -> &'static str {
        match self {
            Pseudo::Sub => "SUB",
            Pseudo::Red => "RED",
            Pseudo::Miss => "MISS",
        }
    }

    pub fn label(self) -> Label {
        Label(self.as_str().to_string())
    }
}

/// A non-terminal label: non-empty, no whitespace, no parentheses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(String);

impl Label {
    pub fn new(text: impl Into<String>) -> Result<Self, TreeError> {
        let text = text.into();
        if is_valid_label(&text) {
            Ok(Label(text))
        } else {
            Err(TreeError::InvalidLabel(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn pseudo(&self) -> Option<Pseudo> {
        match self.0.as_str() {
            "SUB" => Some(Pseudo::Sub),
            "RED" => Some(Pseudo::Red),
            "MISS" => Some(Pseudo::Miss),
            _ => None,
        }
    }

    pub fn is_pseudo(&self) -> bool {
        self.pseudo().is_some()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_valid_label(text: &str) -> bool {
    !text.is_empty() && !text.chars().any(|c| c.is_whitespace() || c == '(' || c == ')')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Terminal { token: String, position: usize },
    NonTerminal { label: Label, children: Vec<Node> },
}

impl Node {
    pub fn terminal(token: impl Into<String>) -> Self {
        Node::Terminal {
            token: token.into(),
            position: 0,
        }
    }

    pub fn nonterminal(label: Label, children: Vec<Node>) -> Self {
        Node::NonTerminal { label, children }
    }

    pub fn label(&self) -> Option<&Label> {
        match self {
            Node::NonTerminal { label, .. } => Some(label),
            Node::Terminal { .. } => None,
        }
    }

    pub fn children(&self) -> &[Node] {
        match self {
            Node::NonTerminal { children, .. } => children,
            Node::Terminal { .. } => &[],
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Node::Terminal { .. })
    }

    /// Number of nodes in this subtree, including itself.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(Node::size).sum::<usize>()
    }

    fn collect_yield<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Node::Terminal { token, .. } => out.push(token),
            Node::NonTerminal { children, .. } => {
                for child in children {
                    child.collect_yield(out);
                }
            }
        }
    }

    fn renumber(&mut self, next: &mut usize) {
        match self {
            Node::Terminal { position, .. } => {
                *position = *next;
                *next += 1;
            }
            Node::NonTerminal { children, .. } => {
                for child in children {
                    child.renumber(next);
                }
            }
        }
    }

    fn write_bracketed(&self, out: &mut String) {
        match self {
            Node::Terminal { token, .. } => out.push_str(&escape_token(token)),
            Node::NonTerminal { label, children } => {
                out.push('(');
                out.push_str(label.as_str());
                for child in children {
                    out.push(' ');
                    child.write_bracketed(out);
                }
                out.push(')');
            }
        }
    }
}

/// An ordered labeled tree over a token sequence.
///
/// The root is expected to be a non-terminal. Trees built by [`parse_bracketed`]
/// and by the transformations in this crate always satisfy the invariants
/// checked by [`validate`]; hand-assembled trees should go through
/// [`ConstituencyTree::new`], which assigns terminal positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituencyTree {
    pub root: Node,
}

impl ConstituencyTree {
    /// Wraps a root node, numbering terminals 0..n left to right.
    pub fn new(mut root: Node) -> Self {
        let mut next = 0;
        root.renumber(&mut next);
        ConstituencyTree { root }
    }

    pub fn yield_tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.collect_yield(&mut out);
        out
    }

    pub fn yield_owned(&self) -> Vec<String> {
        self.yield_tokens().into_iter().map(str::to_string).collect()
    }

    pub fn len_terminals(&self) -> usize {
        count_where(&self.root, &|n| n.is_terminal())
    }

    pub fn len_nonterminals(&self) -> usize {
        count_where(&self.root, &|n| !n.is_terminal())
    }

    /// Counts of SUB, RED and MISS nodes, in that order.
    pub fn pseudo_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        walk(&self.root, &mut |n| {
            if let Some(p) = n.label().and_then(Label::pseudo) {
                counts[p as usize] += 1;
            }
        });
        counts
    }

    pub fn has_pseudo(&self) -> bool {
        self.pseudo_counts().iter().any(|&c| c > 0)
    }

    pub fn to_bracketed(&self) -> String {
        serialize(self)
    }
}

impl fmt::Display for ConstituencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

impl std::str::FromStr for ConstituencyTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracketed(s)
    }
}

fn walk<'a>(node: &'a Node, f: &mut impl FnMut(&'a Node)) {
    f(node);
    for child in node.children() {
        walk(child, f);
    }
}

fn count_where(node: &Node, pred: &impl Fn(&Node) -> bool) -> usize {
    let own = usize::from(pred(node));
    own + node.children().iter().map(|c| count_where(c, pred)).sum::<usize>()
}

pub fn escape_token(token: &str) -> String {
    if token.contains('(') || token.contains(')') {
        token.replace('(', LRB).replace(')', RRB)
    } else {
        token.to_string()
    }
}

pub fn unescape_token(token: &str) -> String {
    if token.contains('-') {
        token.replace(LRB, "(").replace(RRB, ")")
    } else {
        token.to_string()
    }
}

pub fn serialize(tree: &ConstituencyTree) -> String {
    let mut out = String::new();
    tree.root.write_bracketed(&mut out);
    out
}

pub fn yield_tokens(tree: &ConstituencyTree) -> Vec<&str> {
    tree.yield_tokens()
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme<'a> {
    Open(usize),
    Close(usize),
    Atom(usize, &'a str),
}

fn lex(text: &str) -> Vec<Lexeme<'_>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'(' {
            out.push(Lexeme::Open(i));
            i += 1;
        } else if c == b')' {
            out.push(Lexeme::Close(i));
            i += 1;
        } else if (c as char).is_ascii_whitespace() {
            i += 1;
        } else {
            let start = i;
            // Atoms end at a paren or whitespace; multi-byte UTF-8 never
            // contains these ASCII bytes so byte scanning is safe.
            while i < bytes.len() && bytes[i] != b'(' && bytes[i] != b')' && !(bytes[i] as char).is_ascii_whitespace() {
                i += 1;
            }
            out.push(Lexeme::Atom(start, &text[start..i]));
        }
    }
    out
}

struct Parser<'a> {
    lexemes: Vec<Lexeme<'a>>,
    pos: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn offset(&self) -> usize {
        match self.lexemes.get(self.pos) {
            Some(Lexeme::Open(o) | Lexeme::Close(o) | Lexeme::Atom(o, _)) => *o,
            None => self.len,
        }
    }

    fn constituent(&mut self) -> Result<Node, TreeError> {
        let open = match self.lexemes.get(self.pos) {
            Some(Lexeme::Open(o)) => *o,
            Some(_) => return Err(TreeError::ExpectedOpen(self.offset())),
            None => return Err(TreeError::Unbalanced(self.len)),
        };
        self.pos += 1;
        let label = match self.lexemes.get(self.pos) {
            Some(Lexeme::Atom(_, text)) => {
                self.pos += 1;
                Label::new(*text)?
            }
            Some(Lexeme::Close(_)) => return Err(TreeError::EmptyConstituent(open)),
            Some(Lexeme::Open(o)) => return Err(TreeError::MissingLabel(*o)),
            None => return Err(TreeError::Unbalanced(open)),
        };
        let mut children = Vec::new();
        loop {
            match self.lexemes.get(self.pos) {
                Some(Lexeme::Close(_)) => {
                    self.pos += 1;
                    break;
                }
                Some(Lexeme::Open(_)) => children.push(self.constituent()?),
                Some(Lexeme::Atom(_, text)) => {
                    children.push(Node::terminal(unescape_token(text)));
                    self.pos += 1;
                }
                None => return Err(TreeError::Unbalanced(open)),
            }
        }
        if children.is_empty() {
            return Err(TreeError::NoChildren {
                label: label.0,
                offset: open,
            });
        }
        Ok(Node::NonTerminal { label, children })
    }
}

/// Parses one bracketed tree.
pub fn parse_bracketed(text: &str) -> Result<ConstituencyTree, TreeError> {
    let lexemes = lex(text);
    if lexemes.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut parser = Parser {
        lexemes,
        pos: 0,
        len: text.len(),
    };
    let root = parser.constituent()?;
    if parser.pos != parser.lexemes.len() {
        let off = parser.offset();
        return Err(match parser.lexemes[parser.pos] {
            Lexeme::Close(_) => TreeError::Unbalanced(off),
            _ => TreeError::Trailing(off),
        });
    }
    Ok(ConstituencyTree::new(root))
}

/// Reads a tree file: one bracketed tree per line, blank lines rejected.
pub fn read_trees<R: BufRead>(reader: R) -> Result<Vec<ConstituencyTree>, TreeError> {
    let mut trees = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TreeError::Io(e.to_string()))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            return Err(TreeError::BlankLine(lineno));
        }
        let tree = parse_bracketed(&line).map_err(|e| TreeError::Line {
            line: lineno,
            source: Box::new(e),
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

/// One finding of [`validate`]; `path` is the child-index path from the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: Vec<usize>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    TerminalRoot,
    NoChildren,
    InvalidLabel(String),
    PseudoLabel(Pseudo),
    EmptyToken,
    WhitespaceInToken(String),
    Position { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path: Vec<String> = self.path.iter().map(usize::to_string).collect();
        write!(f, "at /{}: {:?}", path.join("/"), self.kind)
    }
}

/// Checks the tree invariants; an empty list means the tree is well formed.
pub fn validate(tree: &ConstituencyTree, allow_pseudo: bool) -> Vec<Violation> {
    let mut found = Vec::new();
    if tree.root.is_terminal() {
        found.push(Violation {
            path: Vec::new(),
            kind: ViolationKind::TerminalRoot,
        });
    }
    let mut next_pos = 0;
    let mut path = Vec::new();
    validate_node(&tree.root, allow_pseudo, &mut path, &mut next_pos, &mut found);
    found
}

fn validate_node(
    node: &Node,
    allow_pseudo: bool,
    path: &mut Vec<usize>,
    next_pos: &mut usize,
    found: &mut Vec<Violation>,
) {
    let mut report = |kind| {
        found.push(Violation {
            path: path.clone(),
            kind,
        })
    };
    match node {
        Node::Terminal { token, position } => {
            if token.is_empty() {
                report(ViolationKind::EmptyToken);
            } else if token.chars().any(char::is_whitespace) {
                report(ViolationKind::WhitespaceInToken(token.clone()));
            }
            if *position != *next_pos {
                report(ViolationKind::Position {
                    expected: *next_pos,
                    found: *position,
                });
            }
            *next_pos += 1;
        }
        Node::NonTerminal { label, children } => {
            if !is_valid_label(label.as_str()) {
                report(ViolationKind::InvalidLabel(label.0.clone()));
            }
            if let Some(p) = label.pseudo() {
                if !allow_pseudo {
                    report(ViolationKind::PseudoLabel(p));
                }
            }
            if children.is_empty() {
                report(ViolationKind::NoChildren);
            }
            for (i, child) in children.iter().enumerate() {
                path.push(i);
                validate_node(child, allow_pseudo, path, next_pos, found);
                path.pop();
            }
        }
    }
}
