//! Random generators shared by the integration tests.

#![allow(dead_code)]

use csyn::align::{Edit, EditScript};
use csyn::tree::{ConstituencyTree, Label, Node};
use rand::Rng;

pub const WORDS: &[&str] = &[
    "the", "a", "cat", "dog", "sat", "on", "mat", "is", "are", "go", "goes", "home", "to", "in", "big", "red",
];
const PHRASES: &[&str] = &["S", "NP", "VP", "PP", "ADJP", "SBAR"];
const TAGS: &[&str] = &["DT", "NN", "VBD", "IN", "JJ", "PRP", "VBZ"];

pub fn label(text: &str) -> Label {
    Label::new(text).unwrap()
}

pub fn random_words<R: Rng>(rng: &mut R, len: usize) -> Vec<String> {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
        .collect()
}

fn pick<'a, R: Rng>(rng: &mut R, from: &[&'a str]) -> &'a str {
    from[rng.random_range(0..from.len())]
}

fn constituent<R: Rng>(rng: &mut R, words: &[String]) -> Node {
    let node = if words.len() == 1 {
        Node::nonterminal(label(pick(rng, TAGS)), vec![Node::terminal(words[0].clone())])
    } else {
        let parts = rng.random_range(2..=words.len().min(3));
        let mut cuts: Vec<usize> = rand::seq::index::sample(rng, words.len() - 1, parts - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.push(words.len());
        let mut start = 0;
        let mut children = Vec::new();
        for cut in cuts {
            children.push(constituent(rng, &words[start..cut]));
            start = cut;
        }
        Node::nonterminal(label(pick(rng, PHRASES)), children)
    };
    if rng.random_bool(0.15) {
        Node::nonterminal(label(pick(rng, PHRASES)), vec![node])
    } else {
        node
    }
}

/// Random bracketing over `words`, with occasional unary chains.
pub fn random_tree<R: Rng>(rng: &mut R, words: &[String]) -> ConstituencyTree {
    ConstituencyTree::new(constituent(rng, words))
}

/// A source sentence and script that turn into `tgt`, built directly from
/// the target side without the aligner.
#[derive(Debug, Clone)]
pub struct Instance {
    pub src: Vec<String>,
    pub script: EditScript,
    /// Target positions removed by MISS edits.
    pub missing: Vec<usize>,
    /// (target position, source word) for every SUB edit.
    pub substituted: Vec<(usize, String)>,
}

fn other_word<R: Rng>(rng: &mut R, not: &str) -> String {
    loop {
        let w = pick(rng, WORDS);
        if w != not {
            return w.to_string();
        }
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, tgt: &[String], edit_rate: f64) -> Instance {
    loop {
        let mut src: Vec<String> = Vec::new();
        let mut edits = Vec::new();
        let mut pending: Vec<String> = Vec::new();
        let mut missing = Vec::new();
        let mut substituted = Vec::new();
        let flush = |pending: &mut Vec<String>, edits: &mut Vec<Edit>, at: usize| {
            if !pending.is_empty() {
                edits.push(Edit::miss(at, pending.drain(..)));
            }
        };
        for (t, w) in tgt.iter().enumerate() {
            while rng.random_bool(edit_rate / 3.0) {
                flush(&mut pending, &mut edits, src.len());
                let r = pick(rng, WORDS).to_string();
                edits.push(Edit::red(src.len(), r.clone()));
                src.push(r);
            }
            let roll: f64 = rng.random();
            if roll < edit_rate / 3.0 {
                pending.push(w.clone());
                missing.push(t);
            } else if roll < 2.0 * edit_rate / 3.0 {
                flush(&mut pending, &mut edits, src.len());
                let s = other_word(rng, w);
                edits.push(Edit::sub(src.len(), s.clone(), w.clone()));
                substituted.push((t, s.clone()));
                src.push(s);
            } else {
                flush(&mut pending, &mut edits, src.len());
                src.push(w.clone());
            }
        }
        while rng.random_bool(edit_rate / 3.0) {
            flush(&mut pending, &mut edits, src.len());
            let r = pick(rng, WORDS).to_string();
            edits.push(Edit::red(src.len(), r.clone()));
            src.push(r);
        }
        flush(&mut pending, &mut edits, src.len());
        if missing.len() == tgt.len() || src.is_empty() {
            continue;
        }
        return Instance {
            src,
            script: EditScript::new(edits).expect("generator builds valid scripts"),
            missing,
            substituted,
        };
    }
}
