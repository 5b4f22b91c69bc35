//! Syntax-aware grammatical error correction toolkit.
//!
//! The crate turns parallel correction data into constituency trees for
//! ungrammatical sentences and provides the numerical building blocks that
//! consume them:
//!
//! * [`tree`]: bracketed constituency trees and the `SUB`/`RED`/`MISS` labels.
//! * [`align`] and [`m2`]: word-level edit scripts and their file formats.
//! * [`project`]: carrying a corrected sentence's tree onto the original.
//! * [`subword`]: word-level trees to subword-level trees.
//! * [`graph`] and [`check`]: tree graphs, the GCN encoder and its checks.
//! * [`attention`]: cross-attention over two syntax memories.
//! * [`ensemble`] and [`eval`]: edit-level system combination and scoring.
//!
//! ```
//! use csyn::align::{align, tokens};
//! use csyn::project::{project, strip_pseudo, ProjectOptions};
//! use csyn::tree::parse_bracketed;
//!
//! let src = tokens("a the cat sat");
//! let target = parse_bracketed("(S (NP (DT a) (NN cat)) (VP (VBD sat)))").unwrap();
//! let script = align(&src, &target.yield_tokens());
//! let projected = project(&target, &script, &src, ProjectOptions::default()).unwrap();
//! assert_eq!(
//!     projected.source_tree.to_string(),
//!     "(S (NP (DT a) (RED the) (NN cat)) (VP (VBD sat)))"
//! );
//! assert_eq!(strip_pseudo(&projected.source_tree).unwrap(), target);
//! ```
//!
//! A longer guide lives in the `book/` directory of the repository.

pub mod align;
pub mod attention;
pub mod check;
pub mod cli;
pub mod ensemble;
pub mod eval;
pub mod graph;
pub mod m2;
pub mod project;
pub mod subword;
pub mod tree;

// Every chapter of the guide is compiled as a doctest so its snippets keep
// working as the API changes.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/subwords.md")]
    mod subwords {}
    #[doc = include_str!("../../../book/src/gcn.md")]
    mod gcn {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
