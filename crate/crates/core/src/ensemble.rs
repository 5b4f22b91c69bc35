//! Edit-level system combination.
//!
//! Edits proposed by several correction systems are pooled per sentence,
//! described by which systems proposed them, and kept or discarded by a
//! logistic-regression classifier. Surviving edits are re-applied to the
//! source after resolving span conflicts.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align, apply, Category, Edit, EditError, EditScript};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("no labeled candidates to train on")]
    EmptyTrainingSet,
    #[error("feature vectors have zero width")]
    ZeroWidth,
    #[error("feature width {found} does not match model width {expected}")]
    Width { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {0}; lower the learning rate")]
    NonFiniteLoss(usize),
    #[error(transparent)]
    Edit(#[from] EditError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditCandidate {
    pub edit: Edit,
    /// One flag per system.
    pub votes: Vec<bool>,
    pub features: Vec<f64>,
}

impl EditCandidate {
    pub fn new(edit: Edit, votes: Vec<bool>) -> Self {
        let features = candidate_features(&votes, edit.category);
        EditCandidate { edit, votes, features }
    }

    pub fn vote_fraction(&self) -> f64 {
        vote_fraction(&self.votes)
    }
}

fn vote_fraction(votes: &[bool]) -> f64 {
    if votes.is_empty() {
        0.0
    } else {
        votes.iter().filter(|&&v| v).count() as f64 / votes.len() as f64
    }
}

/// `[indicator per system, vote fraction, one-hot SUB, RED, MISS]`
pub fn candidate_features(votes: &[bool], category: Category) -> Vec<f64> {
    let mut x: Vec<f64> = votes.iter().map(|&v| f64::from(u8::from(v))).collect();
    x.push(vote_fraction(votes));
    x.extend(Category::ALL.iter().map(|&c| f64::from(u8::from(c == category))));
    x
}

pub fn feature_names(systems: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..systems).map(|i| format!("sys{i}")).collect();
    names.push("vote_fraction".into());
    names.extend(Category::ALL.iter().map(|c| format!("cat_{c}")));
    names
}

/// Pools the edits of every hypothesis against `src`.
///
/// Candidates are deduplicated on (category, span, target tokens) and
/// ordered by span start, category, then target tokens.
pub fn gather<S: AsRef<str>, H: AsRef<[String]>>(src: &[S], hypotheses: &[H]) -> Vec<EditCandidate> {
    let k = hypotheses.len();
    let mut pool: BTreeMap<Edit, Vec<bool>> = BTreeMap::new();
    for (i, hyp) in hypotheses.iter().enumerate() {
        for edit in align(src, hyp.as_ref()).edits {
            pool.entry(edit).or_insert_with(|| vec![false; k])[i] = true;
        }
    }
    pool.into_iter()
        .map(|(edit, votes)| EditCandidate::new(edit, votes))
        .collect()
}

/// Gold label per candidate: whether it exactly matches a gold edit.
pub fn label_candidates(candidates: &[EditCandidate], gold: &EditScript) -> Vec<bool> {
    let key = |e: &Edit| (e.category, e.start, e.end, e.tgt.clone());
    let gold: HashSet<_> = gold.iter().map(key).collect();
    candidates.iter().map(|c| gold.contains(&key(&c.edit))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub feature_names: Vec<String>,
    /// Training loss after the last epoch, when trained here.
    #[serde(skip)]
    pub final_loss: Option<f64>,
}

impl LogRegModel {
    pub fn zeros(width: usize) -> Self {
        LogRegModel {
            weights: vec![0.0; width],
            bias: 0.0,
            threshold: 0.5,
            feature_names: Vec::new(),
            final_loss: None,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn keeps(&self, x: &[f64]) -> bool {
        self.probability(x) >= self.threshold
    }

    pub fn check_width(&self, width: usize) -> Result<(), EnsembleError> {
        if width != self.weights.len() {
            return Err(EnsembleError::Width {
                expected: self.weights.len(),
                found: width,
            });
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.5,
            epochs: 500,
            l2: 0.0,
            threshold: 0.5,
        }
    }
}

/// A labeled feature vector.
pub type Example = (Vec<f64>, bool);

/// Mean logistic loss plus `l2 / 2 * |w|^2`, with its gradient with respect
/// to the weights and the bias. The bias is not regularized.
pub fn loss_and_gradient(weights: &[f64], bias: f64, data: &[Example], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, y) in data {
        let z = bias + weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        let y = f64::from(u8::from(*y));
        // log(1 + e^z) - y z, written to avoid overflow
        loss += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
        let err = sigmoid(z) - y;
        for (g, xi) in grad_w.iter_mut().zip(x) {
            *g += err * xi;
        }
        grad_b += err;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Full-batch gradient descent from a zero initialization.
pub fn train(data: &[Example], config: TrainConfig) -> Result<LogRegModel, EnsembleError> {
    let width = data.first().ok_or(EnsembleError::EmptyTrainingSet)?.0.len();
    if width == 0 {
        return Err(EnsembleError::ZeroWidth);
    }
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != width) {
        return Err(EnsembleError::Width {
            expected: width,
            found: x.len(),
        });
    }
    let mut model = LogRegModel::zeros(width);
    model.threshold = config.threshold;
    let mut loss = f64::NAN;
    for epoch in 0..config.epochs {
        let (l, gw, gb) = loss_and_gradient(&model.weights, model.bias, data, config.l2);
        if !l.is_finite() {
            return Err(EnsembleError::NonFiniteLoss(epoch));
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= config.lr * g;
        }
        model.bias -= config.lr * gb;
        loss = l;
    }
    let (final_loss, _, _) = loss_and_gradient(&model.weights, model.bias, data, config.l2);
    if !final_loss.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(EnsembleError::NonFiniteLoss(config.epochs));
    }
    log::debug!("logistic regression: loss {loss} -> {final_loss}");
    model.final_loss = Some(final_loss);
    Ok(model)
}

fn category_rank(c: Category) -> u8 {
    match c {
        Category::Sub => 0,
        Category::Red => 1,
        Category::Miss => 2,
    }
}

/// Greedy conflict resolution: highest score first, then leftmost span,
/// then SUB before RED before MISS. An edit is dropped if it shares a
/// replaced token or an insertion point with an edit already taken.
pub fn resolve_conflicts(scored: Vec<(f64, &EditCandidate)>) -> Vec<&EditCandidate> {
    let mut scored = scored;
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then_with(|| a.edit.start.cmp(&b.edit.start))
            .then_with(|| category_rank(a.edit.category).cmp(&category_rank(b.edit.category)))
            .then_with(|| a.edit.tgt.cmp(&b.edit.tgt))
    });
    let mut replaced = HashSet::new();
    let mut inserted = HashSet::new();
    let mut kept = Vec::new();
    for (_, cand) in scored {
        let taken = match cand.edit.category {
            Category::Miss => &mut inserted,
            Category::Sub | Category::Red => &mut replaced,
        };
        if taken.insert(cand.edit.start) {
            kept.push(cand);
        }
    }
    kept
}

/// Candidates the model keeps, after conflict resolution.
pub fn select<'a>(
    candidates: &'a [EditCandidate],
    model: &LogRegModel,
) -> Result<Vec<&'a EditCandidate>, EnsembleError> {
    let mut scored = Vec::with_capacity(candidates.len());
    for cand in candidates {
        model.check_width(cand.features.len())?;
        let p = model.probability(&cand.features);
        if p >= model.threshold {
            scored.push((p, cand));
        }
    }
    Ok(resolve_conflicts(scored))
}

fn apply_selected<S: AsRef<str>>(src: &[S], selected: &[&EditCandidate]) -> Result<Vec<String>, EnsembleError> {
    let script = EditScript::new(selected.iter().map(|c| c.edit.clone()).collect())?;
    Ok(apply(src, &script)?)
}

/// Keeps the candidates the model accepts and applies them to `src`.
pub fn select_and_apply<S: AsRef<str>>(
    src: &[S],
    candidates: &[EditCandidate],
    model: &LogRegModel,
) -> Result<Vec<String>, EnsembleError> {
    let selected = select(candidates, model)?;
    apply_selected(src, &selected)
}

/// Applies every candidate, resolving conflicts by vote fraction.
pub fn union_apply<S: AsRef<str>>(src: &[S], candidates: &[EditCandidate]) -> Result<Vec<String>, EnsembleError> {
    let scored = candidates.iter().map(|c| (c.vote_fraction(), c)).collect();
    apply_selected(src, &resolve_conflicts(scored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::tokens;

    fn toks(s: &str) -> Vec<String> {
        tokens(s)
    }

    #[test]
    fn identical_hypotheses_give_nothing() {
        let src = toks("a cat sat");
        assert!(gather(&src, &[src.clone(), src.clone()]).is_empty());
    }

    #[test]
    fn duplicates_merge_votes() {
        let src = toks("a cat sat");
        let hyp = toks("a dog sat");
        let c = gather(&src, &[hyp.clone(), hyp]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].votes, vec![true, true]);
        assert_eq!(c[0].features, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn candidate_order() {
        let src = toks("a cat sat");
        let c = gather(&src, &[toks("a dog sat"), toks("the a cat"), toks("a cow sat")]);
        let edits: Vec<&Edit> = c.iter().map(|c| &c.edit).collect();
        assert_eq!(
            edits,
            vec![
                &Edit::miss(0, ["the"]),
                &Edit::sub(1, "cat", "cow"),
                &Edit::sub(1, "cat", "dog"),
                &Edit::red(2, "sat"),
            ]
        );
        assert_eq!(c[0].votes, vec![false, true, false]);
        assert_eq!(c[1].votes, vec![false, false, true]);
    }

    #[test]
    fn zero_model_is_indifferent() {
        let m = LogRegModel::zeros(4);
        assert_eq!(m.probability(&[1.0, -3.0, 2.0, 0.5]), 0.5);
        assert!(m.keeps(&[0.0; 4]));
    }

    #[test]
    fn training_errors() {
        assert_eq!(train(&[], TrainConfig::default()), Err(EnsembleError::EmptyTrainingSet));
        assert_eq!(
            train(&[(vec![], true)], TrainConfig::default()),
            Err(EnsembleError::ZeroWidth)
        );
        let data = vec![(vec![1.0], true), (vec![1.0, 2.0], false)];
        assert!(matches!(
            train(&data, TrainConfig::default()),
            Err(EnsembleError::Width { .. })
        ));
        let data = vec![(vec![1e200], true), (vec![-1e200], false)];
        let cfg = TrainConfig {
            lr: 1e200,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&data, cfg), Err(EnsembleError::NonFiniteLoss(_))));
    }

    #[test]
    fn overlapping_subs_keep_the_stronger() {
        let src = toks("a cat sat");
        let strong = EditCandidate::new(Edit::sub(1, "cat", "dog"), vec![true]);
        let weak = EditCandidate::new(Edit::sub(1, "cat", "cow"), vec![true]);
        let kept = resolve_conflicts(vec![(0.6, &weak), (0.9, &strong)]);
        assert_eq!(kept, vec![&strong]);
        let out = apply_selected(&src, &kept).unwrap();
        assert_eq!(out, toks("a dog sat"));
    }

    #[test]
    fn ties_prefer_left_then_sub() {
        let red = EditCandidate::new(Edit::red(1, "cat"), vec![true]);
        let sub = EditCandidate::new(Edit::sub(1, "cat", "dog"), vec![true]);
        let miss = EditCandidate::new(Edit::miss(1, ["big"]), vec![true]);
        let kept = resolve_conflicts(vec![(0.7, &red), (0.7, &miss), (0.7, &sub)]);
        assert_eq!(kept, vec![&sub, &miss]);
    }

    #[test]
    fn empty_candidates_leave_source() {
        let src = toks("a cat");
        assert_eq!(select_and_apply(&src, &[], &LogRegModel::zeros(5)).unwrap(), src);
    }

    #[test]
    fn model_json_shape() {
        let mut m = LogRegModel::zeros(2);
        m.feature_names = vec!["a".into(), "b".into()];
        m.final_loss = Some(0.1);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(
            text,
            r#"{"weights":[0.0,0.0],"bias":0.0,"threshold":0.5,"feature_names":["a","b"]}"#
        );
    }
}
