//! Projection of a corrected sentence's tree onto the erroneous source.
//!
//! Given the tree of the target (corrected) sentence and the edit script
//! from source to target, the source tree is obtained by keeping every
//! correct part of the target tree and marking errors with pseudo
//! non-terminals:
//!
//! * `SUB` becomes the new parent of a substituted word, whose token is
//!   replaced by the source word.
//! * `RED` wraps a redundant source word, which is put into the phrase of
//!   its right-side neighbour (the left-side neighbour at sentence end).
//! * `MISS` wraps the word to the right of one or more missing words, which
//!   are themselves removed from the tree together with any constituent
//!   they leave empty.
//!
//! A word can carry several marks; `SUB` sits innermost, `MISS` outermost.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align, apply, tokens, Category, EditError, EditScript};
use crate::tree::{parse_bracketed, ConstituencyTree, Label, Node, Pseudo, TreeError};

/// Where a `SUB`/`MISS` node goes relative to the word's POS preterminal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Immediate parent of the terminal: `(NN (SUB cat))`.
    #[default]
    Below,
    /// Parent of the preterminal: `(SUB (NN cat))`.
    Above,
}

impl std::str::FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "below" => Ok(Placement::Below),
            "above" => Ok(Placement::Above),
            other => Err(format!("unknown placement {other:?} (expected below|above)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectOptions {
    pub placement: Placement,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectError {
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error("target tree yield {found:?} does not match the edited source {expected:?}")]
    YieldMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("empty source sentence with a non-empty edit script")]
    EmptySource,
    #[error("target tree already contains pseudo label {0}")]
    PseudoInTarget(&'static str),
    #[error("tree root must be a non-terminal")]
    TerminalRoot,
    #[error("{pairs} sentence pairs but {trees} trees")]
    LengthMismatch { pairs: usize, trees: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionResult {
    pub source_tree: ConstituencyTree,
    /// Each inserted pseudo node with the source position of the word it marks.
    pub inserted: Vec<(Pseudo, usize)>,
}

#[derive(Debug, Clone)]
enum Kind {
    Terminal(String),
    NonTerminal(Label),
}

#[derive(Debug, Clone)]
struct Slot {
    kind: Kind,
    parent: Option<usize>,
    children: Vec<usize>,
}

/// Mutable working copy of a tree with parent links.
struct Arena {
    slots: Vec<Slot>,
    root: usize,
}

impl Arena {
    fn from_tree(tree: &ConstituencyTree) -> (Self, Vec<usize>) {
        let mut arena = Arena {
            slots: Vec::with_capacity(tree.root.size() + 8),
            root: 0,
        };
        let mut terminals = Vec::new();
        arena.root = arena.add(&tree.root, None, &mut terminals);
        (arena, terminals)
    }

    fn add(&mut self, node: &Node, parent: Option<usize>, terminals: &mut Vec<usize>) -> usize {
        let id = self.slots.len();
        match node {
            Node::Terminal { token, .. } => {
                self.slots.push(Slot {
                    kind: Kind::Terminal(token.clone()),
                    parent,
                    children: Vec::new(),
                });
                terminals.push(id);
            }
            Node::NonTerminal { label, children } => {
                self.slots.push(Slot {
                    kind: Kind::NonTerminal(label.clone()),
                    parent,
                    children: Vec::with_capacity(children.len()),
                });
                for child in children {
                    let cid = self.add(child, Some(id), terminals);
                    self.slots[id].children.push(cid);
                }
            }
        }
        id
    }

    fn push(&mut self, kind: Kind, parent: Option<usize>, children: Vec<usize>) -> usize {
        self.slots.push(Slot { kind, parent, children });
        self.slots.len() - 1
    }

    fn index_in_parent(&self, id: usize, parent: usize) -> usize {
        self.slots[parent]
            .children
            .iter()
            .position(|&c| c == id)
            .expect("parent link out of sync")
    }

    fn is_pseudo(&self, id: usize) -> bool {
        matches!(&self.slots[id].kind, Kind::NonTerminal(l) if l.is_pseudo())
    }

    /// Detaches a terminal, then any ancestor left without children. The
    /// root is never removed.
    fn remove_leaf(&mut self, mut id: usize) {
        while let Some(parent) = self.slots[id].parent {
            let idx = self.index_in_parent(id, parent);
            self.slots[parent].children.remove(idx);
            self.slots[id].parent = None;
            if !self.slots[parent].children.is_empty() || parent == self.root {
                break;
            }
            id = parent;
        }
    }

    /// Inserts a new unary node labeled `label` directly above `id`.
    fn wrap(&mut self, id: usize, label: Label) -> usize {
        let parent = self.slots[id].parent;
        let new = self.push(Kind::NonTerminal(label), parent, vec![id]);
        match parent {
            Some(p) => {
                let idx = self.index_in_parent(id, p);
                self.slots[p].children[idx] = new;
            }
            None => self.root = new,
        }
        self.slots[id].parent = Some(new);
        new
    }

    /// The node a new `SUB`/`MISS` mark should wrap for this terminal: the
    /// terminal (or its preterminal, in `Above` mode) plus any pseudo nodes
    /// already stacked on it.
    fn markable_unit(&self, terminal: usize, placement: Placement) -> usize {
        let mut unit = terminal;
        if placement == Placement::Above {
            if let Some(p) = self.slots[unit].parent {
                if self.slots[p].children.len() == 1 && !self.is_pseudo(p) {
                    unit = p;
                }
            }
        }
        while let Some(p) = self.slots[unit].parent {
            if self.slots[p].children.len() == 1 && self.is_pseudo(p) {
                unit = p;
            } else {
                break;
            }
        }
        unit
    }

    /// Walks up from a terminal through unary nodes; returns the first node
    /// with two or more children (or the root) and the index of the branch
    /// the walk came from.
    fn phrase_of(&self, terminal: usize) -> (usize, usize) {
        let mut node = terminal;
        loop {
            let parent = self.slots[node].parent.expect("terminals always have a parent");
            if self.slots[parent].children.len() >= 2 || parent == self.root {
                return (parent, self.index_in_parent(node, parent));
            }
            node = parent;
        }
    }

    fn red_subtree(&mut self, word: &str) -> (usize, usize) {
        let term = self.push(Kind::Terminal(word.to_string()), None, Vec::new());
        let red = self.push(Kind::NonTerminal(Pseudo::Red.label()), None, vec![term]);
        self.slots[term].parent = Some(red);
        (red, term)
    }

    fn insert_child(&mut self, parent: usize, index: usize, child: usize) {
        self.slots[parent].children.insert(index, child);
        self.slots[child].parent = Some(parent);
    }

    fn to_node(&self, id: usize) -> Node {
        match &self.slots[id].kind {
            Kind::Terminal(token) => Node::terminal(token.clone()),
            Kind::NonTerminal(label) => Node::nonterminal(
                label.clone(),
                self.slots[id].children.iter().map(|&c| self.to_node(c)).collect(),
            ),
        }
    }

    fn into_tree(self) -> ConstituencyTree {
        ConstituencyTree::new(self.to_node(self.root))
    }
}

/// Projects `target_tree` (over the corrected sentence) onto `src`.
pub fn project<S: AsRef<str>>(
    target_tree: &ConstituencyTree,
    script: &EditScript,
    src: &[S],
    options: ProjectOptions,
) -> Result<ProjectionResult, ProjectError> {
    let src: Vec<&str> = src.iter().map(AsRef::as_ref).collect();
    if src.is_empty() && !script.is_empty() {
        return Err(ProjectError::EmptySource);
    }
    if target_tree.root.is_terminal() {
        return Err(ProjectError::TerminalRoot);
    }
    if let Some(p) = first_pseudo(&target_tree.root) {
        return Err(ProjectError::PseudoInTarget(p.as_str()));
    }
    let expected = apply(&src, script)?;
    let found = target_tree.yield_tokens();
    if expected.len() != found.len() || expected.iter().zip(&found).any(|(a, b)| a != b) {
        return Err(ProjectError::YieldMismatch {
            expected,
            found: found.into_iter().map(str::to_string).collect(),
        });
    }

    let (mut arena, tgt_terms) = Arena::from_tree(target_tree);
    let n = src.len();

    // Source word -> terminal slot, filled for kept and substituted words now
    // and for redundant words as they are inserted.
    let mut word_slot: Vec<Option<usize>> = vec![None; n];
    let mut missing = Vec::new();
    let mut miss_points = Vec::new();
    let mut subs = Vec::new();
    let mut reds = Vec::new();

    let mut edits = script.iter().peekable();
    let mut k = 0;
    for p in 0..=n {
        let mut replaced = None;
        while let Some(edit) = edits.next_if(|e| e.start == p) {
            match edit.category {
                Category::Miss => {
                    missing.extend_from_slice(&tgt_terms[k..k + edit.tgt.len()]);
                    k += edit.tgt.len();
                    miss_points.push(p);
                }
                Category::Sub | Category::Red => replaced = Some(edit.category),
            }
        }
        if p == n {
            break;
        }
        match replaced {
            Some(Category::Red) => reds.push(p),
            Some(Category::Sub) => {
                let slot = tgt_terms[k];
                arena.slots[slot].kind = Kind::Terminal(src[p].to_string());
                word_slot[p] = Some(slot);
                subs.push(p);
                k += 1;
            }
            _ => {
                word_slot[p] = Some(tgt_terms[k]);
                k += 1;
            }
        }
    }
    debug_assert_eq!(k, tgt_terms.len());

    for &slot in &missing {
        arena.remove_leaf(slot);
    }

    let mut inserted = Vec::with_capacity(script.len());
    for &p in &subs {
        let unit = arena.markable_unit(
            word_slot[p].expect("substituted word is in the tree"),
            options.placement,
        );
        arena.wrap(unit, Pseudo::Sub.label());
        inserted.push((Pseudo::Sub, p));
    }

    for &p in reds.iter().rev() {
        let (red, term) = arena.red_subtree(src[p]);
        if p + 1 < n {
            let right = word_slot[p + 1].expect("right-side word is placed before its left neighbour");
            let (phrase, branch) = arena.phrase_of(right);
            arena.insert_child(phrase, branch, red);
        } else if let Some(left) = word_slot[..p].iter().rev().flatten().next() {
            let (phrase, branch) = arena.phrase_of(*left);
            arena.insert_child(phrase, branch + 1, red);
        } else {
            // Every target word was missing and every source word is redundant.
            let root = arena.root;
            let end = arena.slots[root].children.len();
            arena.insert_child(root, end, red);
        }
        word_slot[p] = Some(term);
        inserted.push((Pseudo::Red, p));
    }

    for &p in &miss_points {
        let anchor = if p < n { p } else { n - 1 };
        let slot = word_slot[anchor].expect("every source word is placed");
        let unit = arena.markable_unit(slot, options.placement);
        arena.wrap(unit, Pseudo::Miss.label());
        inserted.push((Pseudo::Miss, anchor));
    }

    inserted.sort();
    Ok(ProjectionResult {
        source_tree: arena.into_tree(),
        inserted,
    })
}

fn first_pseudo(node: &Node) -> Option<Pseudo> {
    if let Some(p) = node.label().and_then(Label::pseudo) {
        return Some(p);
    }
    node.children().iter().find_map(first_pseudo)
}

/// Removes every pseudo node: `RED` together with its words, `SUB` and
/// `MISS` by promoting their children. Constituents left empty are dropped.
///
/// Returns `None` when nothing remains (every word was redundant) or when a
/// pseudo root cannot be replaced by a single constituent.
pub fn strip_pseudo(tree: &ConstituencyTree) -> Option<ConstituencyTree> {
    let mut nodes = strip_node(&tree.root);
    match nodes.len() {
        1 if !nodes[0].is_terminal() => Some(ConstituencyTree::new(nodes.pop()?)),
        _ => None,
    }
}

fn strip_node(node: &Node) -> Vec<Node> {
    match node {
        Node::Terminal { .. } => vec![node.clone()],
        Node::NonTerminal { label, children } => match label.pseudo() {
            Some(Pseudo::Red) => Vec::new(),
            Some(Pseudo::Sub | Pseudo::Miss) => children.iter().flat_map(strip_node).collect(),
            None => {
                let kept: Vec<Node> = children.iter().flat_map(strip_node).collect();
                if kept.is_empty() {
                    Vec::new()
                } else {
                    vec![Node::nonterminal(label.clone(), kept)]
                }
            }
        },
    }
}

/// Aligns a sentence pair and projects the target tree onto the source.
pub fn project_pair<S: AsRef<str>, T: AsRef<str>>(
    src: &[S],
    tgt: &[T],
    target_tree: &ConstituencyTree,
    options: ProjectOptions,
) -> Result<ProjectionResult, ProjectError> {
    let script = align(src, tgt);
    project(target_tree, &script, src, options)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoCounts {
    #[serde(rename = "SUB")]
    pub sub: usize,
    #[serde(rename = "RED")]
    pub red: usize,
    #[serde(rename = "MISS")]
    pub miss: usize,
}

impl PseudoCounts {
    fn add(&mut self, counts: [usize; 3]) {
        self.sub += counts[Pseudo::Sub as usize];
        self.red += counts[Pseudo::Red as usize];
        self.miss += counts[Pseudo::Miss as usize];
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pairs: usize,
    pub skipped: usize,
    pub pseudo_counts: PseudoCounts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    /// 1-based input line.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for Skipped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainingOutput {
    /// Projected trees with their 1-based input line, in input order.
    pub trees: Vec<(usize, ConstituencyTree)>,
    pub skipped: Vec<Skipped>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

impl ParallelPair {
    pub fn new(src: &str, tgt: &str) -> Self {
        ParallelPair {
            src: tokens(src),
            tgt: tokens(tgt),
        }
    }
}

/// Parses one `source<TAB>target` line.
pub fn parse_parallel_line(line: &str) -> Result<ParallelPair, String> {
    let mut parts = line.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(src), Some(tgt), None) => Ok(ParallelPair::new(src, tgt)),
        _ => Err("expected exactly one TAB separating source and target".to_string()),
    }
}

/// Produces projected source trees for every pair; pairs that fail are
/// skipped and reported. The two inputs must have equal length.
pub fn build_training_trees(
    pairs: &[ParallelPair],
    target_trees: &[ConstituencyTree],
    options: ProjectOptions,
) -> Result<TrainingOutput, ProjectError> {
    if pairs.len() != target_trees.len() {
        return Err(ProjectError::LengthMismatch {
            pairs: pairs.len(),
            trees: target_trees.len(),
        });
    }
    let records = pairs
        .iter()
        .zip(target_trees)
        .map(|(pair, tree)| Ok((pair.clone(), tree.clone())));
    Ok(collect_training(records, options))
}

/// Text-level variant of [`build_training_trees`]: a TSV parallel file and a
/// tree file aligned by line. Malformed lines are skipped with a reason.
pub fn build_training_trees_from_text(
    parallel: &str,
    trees: &str,
    options: ProjectOptions,
) -> Result<TrainingOutput, ProjectError> {
    let pair_lines: Vec<&str> = parallel.lines().collect();
    let tree_lines: Vec<&str> = trees.lines().collect();
    if pair_lines.len() != tree_lines.len() {
        return Err(ProjectError::LengthMismatch {
            pairs: pair_lines.len(),
            trees: tree_lines.len(),
        });
    }
    let records = pair_lines.into_iter().zip(tree_lines).map(|(p, t)| {
        let pair = parse_parallel_line(p)?;
        let tree = parse_bracketed(t).map_err(|e: TreeError| format!("tree: {e}"))?;
        Ok((pair, tree))
    });
    Ok(collect_training(records, options))
}

fn collect_training<I>(records: I, options: ProjectOptions) -> TrainingOutput
where
    I: Iterator<Item = Result<(ParallelPair, ConstituencyTree), String>>,
{
    let mut out = TrainingOutput::default();
    for (idx, record) in records.enumerate() {
        let line = idx + 1;
        out.summary.pairs += 1;
        let result = record
            .and_then(|(pair, tree)| project_pair(&pair.src, &pair.tgt, &tree, options).map_err(|e| e.to_string()));
        match result {
            Ok(projected) => {
                out.summary.pseudo_counts.add(projected.source_tree.pseudo_counts());
                out.trees.push((line, projected.source_tree));
            }
            Err(reason) => {
                log::warn!("skipping line {line}: {reason}");
                out.summary.skipped += 1;
                out.skipped.push(Skipped { line, reason });
            }
        }
    }
    out
}
