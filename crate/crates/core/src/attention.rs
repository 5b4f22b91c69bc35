//! Cross-attention over two syntax memories.
//!
//! A decoder state attends to the constituency memory and to the dependency
//! memory with two separate single-head attention layers, and the two
//! results are added. The `Sharing` mode instead runs one layer over the
//! concatenation of both memories.

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{matrix_to_rows, rows_to_matrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttentionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("memory is empty")]
    EmptyMemory,
}

/// Query, key and value projections, each `d x d`, applied on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
}

impl AttentionParams {
    pub fn width(&self) -> usize {
        self.wq.nrows()
    }

    pub fn zeros(d: usize) -> Self {
        AttentionParams {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
        }
    }

    fn check(&self, d: usize) -> Result<(), AttentionError> {
        for (name, w) in [("Wq", &self.wq), ("Wk", &self.wk), ("Wv", &self.wv)] {
            if w.dim() != (d, d) {
                return Err(AttentionError::Dimension(format!(
                    "{name} is {:?}, expected ({d}, {d})",
                    w.dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DualMode {
    /// One parameter set per memory; branch outputs are summed.
    Independent {
        constituency: AttentionParams,
        dependency: AttentionParams,
    },
    /// One parameter set over the concatenated memories.
    Sharing(AttentionParams),
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub queries: Array2<f64>,
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
    /// `m x k`, rows sum to one.
    pub weights: Array2<f64>,
    pub output: Array2<f64>,
}

fn check_shapes(q: &Array2<f64>, memory: &Array2<f64>, params: &AttentionParams) -> Result<(), AttentionError> {
    if memory.nrows() == 0 {
        return Err(AttentionError::EmptyMemory);
    }
    let d = params.width();
    params.check(d)?;
    if q.ncols() != d || memory.ncols() != d {
        return Err(AttentionError::Dimension(format!(
            "queries have width {}, memory {}, parameters {d}",
            q.ncols(),
            memory.ncols()
        )));
    }
    Ok(())
}

pub fn cross_attention_traced(
    q: &Array2<f64>,
    memory: &Array2<f64>,
    params: &AttentionParams,
) -> Result<AttentionTrace, AttentionError> {
    check_shapes(q, memory, params)?;
    let scale = (params.width() as f64).sqrt();
    let queries = q.dot(&params.wq);
    let keys = memory.dot(&params.wk);
    let values = memory.dot(&params.wv);
    let weights = softmax_rows(&(queries.dot(&keys.t()) / scale));
    let output = weights.dot(&values);
    Ok(AttentionTrace {
        queries,
        keys,
        values,
        weights,
        output,
    })
}

/// `softmax((Q Wq)(M Wk)^T / sqrt(d)) (M Wv)`.
pub fn cross_attention(
    q: &Array2<f64>,
    memory: &Array2<f64>,
    params: &AttentionParams,
) -> Result<Array2<f64>, AttentionError> {
    Ok(cross_attention_traced(q, memory, params)?.output)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGradients {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub queries: Array2<f64>,
    pub memory: Array2<f64>,
}

/// Backward pass for one attention layer given `upstream = dL/d(output)`.
pub fn cross_attention_backward(
    q: &Array2<f64>,
    memory: &Array2<f64>,
    params: &AttentionParams,
    trace: &AttentionTrace,
    upstream: &Array2<f64>,
) -> AttentionGradients {
    let scale = (params.width() as f64).sqrt();
    let a = &trace.weights;
    let d_weights = upstream.dot(&trace.values.t());
    let d_values = a.t().dot(upstream);
    let row_dot = (&d_weights * a).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_scores = a * &(&d_weights - &row_dot);
    let d_queries = d_scores.dot(&trace.keys) / scale;
    let d_keys = d_scores.t().dot(&trace.queries) / scale;
    AttentionGradients {
        wq: q.t().dot(&d_queries),
        wk: memory.t().dot(&d_keys),
        wv: memory.t().dot(&d_values),
        queries: d_queries.dot(&params.wq.t()),
        memory: d_keys.dot(&params.wk.t()) + d_values.dot(&params.wv.t()),
    }
}

/// Attends to both memories and combines the results according to `mode`.
pub fn dual_combine(
    q: &Array2<f64>,
    constituency: &Array2<f64>,
    dependency: &Array2<f64>,
    mode: &DualMode,
) -> Result<Array2<f64>, AttentionError> {
    match mode {
        DualMode::Independent {
            constituency: pc,
            dependency: pd,
        } => {
            let a = cross_attention(q, constituency, pc)?;
            let b = cross_attention(q, dependency, pd)?;
            Ok(a + b)
        }
        DualMode::Sharing(p) => {
            let memory = concat_memories(constituency, dependency)?;
            cross_attention(q, &memory, p)
        }
    }
}

pub fn concat_memories(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, AttentionError> {
    if a.ncols() != b.ncols() {
        return Err(AttentionError::Dimension(format!(
            "memories have widths {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    concatenate(Axis(0), &[a.view(), b.view()]).map_err(|e| AttentionError::Dimension(e.to_string()))
}

/// Parameter gradients of [`dual_combine`], one entry per parameter set
/// (two in independent mode, one in sharing mode).
pub fn dual_combine_backward(
    q: &Array2<f64>,
    constituency: &Array2<f64>,
    dependency: &Array2<f64>,
    mode: &DualMode,
    upstream: &Array2<f64>,
) -> Result<Vec<AttentionGradients>, AttentionError> {
    match mode {
        DualMode::Independent {
            constituency: pc,
            dependency: pd,
        } => {
            let tc = cross_attention_traced(q, constituency, pc)?;
            let td = cross_attention_traced(q, dependency, pd)?;
            Ok(vec![
                cross_attention_backward(q, constituency, pc, &tc, upstream),
                cross_attention_backward(q, dependency, pd, &td, upstream),
            ])
        }
        DualMode::Sharing(p) => {
            let memory = concat_memories(constituency, dependency)?;
            let t = cross_attention_traced(q, &memory, p)?;
            Ok(vec![cross_attention_backward(q, &memory, p, &t, upstream)])
        }
    }
}

/// JSON layout of one attention parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParamsFile {
    #[serde(rename = "Wq")]
    pub wq: Vec<Vec<f64>>,
    #[serde(rename = "Wk")]
    pub wk: Vec<Vec<f64>>,
    #[serde(rename = "Wv")]
    pub wv: Vec<Vec<f64>>,
}

impl From<&AttentionParams> for AttentionParamsFile {
    fn from(p: &AttentionParams) -> Self {
        AttentionParamsFile {
            wq: matrix_to_rows(&p.wq),
            wk: matrix_to_rows(&p.wk),
            wv: matrix_to_rows(&p.wv),
        }
    }
}

impl TryFrom<AttentionParamsFile> for AttentionParams {
    type Error = AttentionError;

    fn try_from(f: AttentionParamsFile) -> Result<Self, Self::Error> {
        let d = f.wq.len();
        let conv = |rows: &[Vec<f64>]| rows_to_matrix(rows, d).map_err(|e| AttentionError::Dimension(e.to_string()));
        let p = AttentionParams {
            wq: conv(&f.wq)?,
            wk: conv(&f.wk)?,
            wv: conv(&f.wv)?,
        };
        p.check(d)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::uniform_matrix;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, d: usize) -> AttentionParams {
        AttentionParams {
            wq: uniform_matrix(rng, d, d, 1.0),
            wk: uniform_matrix(rng, d, d, 1.0),
            wv: uniform_matrix(rng, d, d, 1.0),
        }
    }

    #[test]
    fn single_key_returns_its_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = random_params(&mut rng, 3);
        let q = uniform_matrix(&mut rng, 4, 3, 1.0);
        let m = uniform_matrix(&mut rng, 1, 3, 1.0);
        let out = cross_attention(&q, &m, &p).unwrap();
        let value = m.dot(&p.wv);
        for row in out.rows() {
            for (a, b) in row.iter().zip(value.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 2);
        let q = uniform_matrix(&mut rng, 2, 2, 1.0);
        let m = array![[0.3, -0.4], [0.3, -0.4], [0.3, -0.4]];
        let t = cross_attention_traced(&q, &m, &p).unwrap();
        assert!(t.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn errors() {
        let p = AttentionParams::zeros(2);
        assert_eq!(
            cross_attention(&Array2::zeros((1, 2)), &Array2::zeros((0, 2)), &p),
            Err(AttentionError::EmptyMemory)
        );
        assert!(cross_attention(&Array2::zeros((1, 3)), &Array2::zeros((1, 2)), &p).is_err());
        assert!(concat_memories(&Array2::zeros((1, 2)), &Array2::zeros((1, 3))).is_err());
    }

    #[test]
    fn zero_dependency_branch_adds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pc = random_params(&mut rng, 3);
        let pd = random_params(&mut rng, 3);
        let q = uniform_matrix(&mut rng, 2, 3, 1.0);
        let mc = uniform_matrix(&mut rng, 4, 3, 1.0);
        let md = Array2::zeros((5, 3));
        let single = cross_attention(&q, &mc, &pc).unwrap();
        let mode = DualMode::Independent {
            constituency: pc,
            dependency: pd,
        };
        assert_eq!(dual_combine(&q, &mc, &md, &mode).unwrap(), single);
    }

    #[test]
    fn params_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 2);
        let text = serde_json::to_string(&AttentionParamsFile::from(&p)).unwrap();
        let back: AttentionParamsFile = serde_json::from_str(&text).unwrap();
        assert_eq!(AttentionParams::try_from(back).unwrap(), p);
    }
}
