//! Simplified M2 annotation files.
//!
//! ```text
//! S a cat sat on mat
//! A 1 2|||SUB|||dog
//! A 4 4|||MISS|||the
//!
//! S next sentence
//! ```
//!
//! Each block is an `S` line with the tokenized source followed by zero or
//! more `A i j|||CAT|||replacement` lines. Blocks are separated by blank
//! lines. Fields after the third `|||` are ignored on read.

use std::fmt::Write as _;

use thiserror::Error;

use crate::align::{Category, Edit, EditError, EditScript};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum M2Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Edit {
        line: usize,
        #[source]
        source: EditError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2Sentence {
    pub tokens: Vec<String>,
    pub script: EditScript,
}

pub fn read_m2(text: &str) -> Result<Vec<M2Sentence>, M2Error> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Vec<String>, Vec<Edit>)> = None;

    let finish = |cur: Option<(usize, Vec<String>, Vec<Edit>)>, out: &mut Vec<M2Sentence>| -> Result<(), M2Error> {
        if let Some((line, tokens, edits)) = cur {
            let script = EditScript::new(edits).map_err(|source| M2Error::Edit { line, source })?;
            script
                .check_against(&tokens)
                .map_err(|source| M2Error::Edit { line, source })?;
            out.push(M2Sentence { tokens, script });
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            finish(current.take(), &mut out)?;
            continue;
        }
        if let Some(rest) = trimmed
            .strip_prefix("S ")
            .or(if trimmed == "S" { Some("") } else { None })
        {
            finish(current.take(), &mut out)?;
            let tokens = rest.split_whitespace().map(str::to_string).collect();
            current = Some((line, tokens, Vec::new()));
        } else if let Some(rest) = trimmed.strip_prefix("A ") {
            let Some((_, tokens, edits)) = current.as_mut() else {
                return Err(M2Error::Syntax {
                    line,
                    message: "annotation line before any `S` line".into(),
                });
            };
            let edit = parse_annotation(rest, tokens, line)?;
            edits.push(edit);
        } else {
            return Err(M2Error::Syntax {
                line,
                message: format!("expected `S` or `A` line, found {trimmed:?}"),
            });
        }
    }
    finish(current.take(), &mut out)?;
    Ok(out)
}

fn parse_annotation(rest: &str, tokens: &[String], line: usize) -> Result<Edit, M2Error> {
    let syntax = |message: String| M2Error::Syntax { line, message };
    let fields: Vec<&str> = rest.split("|||").collect();
    if fields.len() < 3 {
        return Err(syntax(format!("expected `i j|||CAT|||replacement`, found {rest:?}")));
    }
    let mut span = fields[0].split_whitespace();
    let (Some(i), Some(j), None) = (span.next(), span.next(), span.next()) else {
        return Err(syntax(format!("bad span {:?}", fields[0])));
    };
    let start: usize = i.parse().map_err(|_| syntax(format!("bad span start {i:?}")))?;
    let end: usize = j.parse().map_err(|_| syntax(format!("bad span end {j:?}")))?;
    let category: Category = fields[1]
        .trim()
        .parse()
        .map_err(|source| M2Error::Edit { line, source })?;
    let tgt: Vec<String> = fields[2].split_whitespace().map(str::to_string).collect();
    if end > tokens.len() || start > end {
        return Err(M2Error::Edit {
            line,
            source: EditError::OutOfRange {
                start,
                end,
                len: tokens.len(),
            },
        });
    }
    let edit = Edit {
        category,
        start,
        end,
        src: tokens[start..end].to_vec(),
        tgt,
    };
    edit.check().map_err(|source| M2Error::Edit { line, source })?;
    Ok(edit)
}

pub fn write_m2(sentences: &[M2Sentence]) -> String {
    let mut out = String::new();
    for (k, sent) in sentences.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        out.push('S');
        for t in &sent.tokens {
            out.push(' ');
            out.push_str(t);
        }
        out.push('\n');
        for edit in &sent.script {
            let _ = writeln!(
                out,
                "A {} {}|||{}|||{}",
                edit.start,
                edit.end,
                edit.category,
                edit.tgt.join(" ")
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{align, tokens};

    #[test]
    fn reads_blocks() {
        let text = "S a cat sat\nA 1 2|||SUB|||dog\n\nS cat sat\nA 0 0|||MISS|||the big\n\nS x y\n";
        let sents = read_m2(text).unwrap();
        assert_eq!(sents.len(), 3);
        assert_eq!(sents[0].script.edits, vec![Edit::sub(1, "cat", "dog")]);
        assert_eq!(sents[1].script.edits, vec![Edit::miss(0, ["the", "big"])]);
        assert!(sents[2].script.is_empty());
    }

    #[test]
    fn write_then_read() {
        let pairs = [
            ("a cat sat", "a dog sat"),
            ("the the cat", "the cat"),
            ("cat", "the cat ."),
        ];
        let sents: Vec<M2Sentence> = pairs
            .iter()
            .map(|(s, t)| M2Sentence {
                tokens: tokens(s),
                script: align(&tokens(s), &tokens(t)),
            })
            .collect();
        let text = write_m2(&sents);
        assert!(text.contains("A 1 2|||RED|||\n"));
        assert_eq!(read_m2(&text).unwrap(), sents);
    }

    #[test]
    fn extra_fields_ignored() {
        let text = "S a b\nA 0 1|||SUB|||c|||REQUIRED|||-NONE-|||0\n";
        assert_eq!(read_m2(text).unwrap()[0].script.edits, vec![Edit::sub(0, "a", "c")]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = read_m2("S a b\nA 0 1|||FOO|||c\n").unwrap_err();
        assert!(matches!(err, M2Error::Edit { line: 2, .. }));
        let err = read_m2("S a b\nA 0 5|||SUB|||c\n").unwrap_err();
        assert!(matches!(err, M2Error::Edit { line: 2, .. }));
        let err = read_m2("A 0 1|||SUB|||c\n").unwrap_err();
        assert!(matches!(err, M2Error::Syntax { line: 1, .. }));
        let err = read_m2("S a\nhello\n").unwrap_err();
        assert!(matches!(err, M2Error::Syntax { line: 2, .. }));
        let err = read_m2("S a b\nA 0 1|||SUB|||c\nA 0 1|||RED|||\n").unwrap_err();
        assert!(matches!(err, M2Error::Edit { line: 1, .. }));
    }
}
