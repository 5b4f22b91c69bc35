//! Edit-level precision, recall and F0.5.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::align::{Edit, EditScript};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F05")]
    pub f05: f64,
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Scores {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f05: f_beta(precision, recall, 0.5),
        }
    }
}

impl fmt::Display for Scores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TP={} FP={} FN={} P={:.4} R={:.4} F0.5={:.4}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f05
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Exact matching on (category, span, target tokens): returns `(tp, fp, fn)`.
pub fn match_edits(hyp: &EditScript, gold: &EditScript) -> (usize, usize, usize) {
    let mut pool: HashMap<_, usize> = HashMap::new();
    fn key(e: &Edit) -> (crate::align::Category, usize, usize, &[String]) {
        (e.category, e.start, e.end, e.tgt.as_slice())
    }
    for e in gold {
        *pool.entry(key(e)).or_default() += 1;
    }
    let mut tp = 0;
    for e in hyp {
        if let Some(n) = pool.get_mut(&key(e)) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    (tp, hyp.len() - tp, gold.len() - tp)
}

/// `(1 + b^2) P R / (b^2 P + R)`, or 0 when the denominator vanishes.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

/// Micro-averaged scores over sentence pairs.
pub fn corpus_score<'a, I>(pairs: I) -> Scores
where
    I: IntoIterator<Item = (&'a EditScript, &'a EditScript)>,
{
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (hyp, gold) in pairs {
        let (t, p, n) = match_edits(hyp, gold);
        tp += t;
        fp += p;
        fn_ += n;
    }
    Scores::from_counts(tp, fp, fn_)
}
