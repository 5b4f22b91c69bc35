//! Numerical cross-checks for the GCN encoder.
//!
//! A dense-matrix reference layer and central-difference gradients, used by
//! the `gcn-check` command to validate the sparse forward and the hand-written
//! backward pass on a given graph.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;

use crate::graph::{
    adjacency_matrix, gcn_backward, gcn_encode_traced, gcn_layer, GcnStack, GcnTrace, GraphError, SyntaxGraph,
};

/// `ReLU(A H W^T + 1 b^T)` with an explicit adjacency matrix.
pub fn dense_gcn_layer(
    adjacency: &Array2<f64>,
    h: &Array2<f64>,
    weight: &Array2<f64>,
    bias: &ndarray::Array1<f64>,
    self_loops: bool,
) -> Array2<f64> {
    let mut a = adjacency.clone();
    if self_loops {
        a.diag_mut().mapv_inplace(|x| x + 1.0);
    }
    let z = a.dot(h).dot(&weight.t()) + bias;
    z.mapv(|x| x.max(0.0))
}

/// Symmetric difference quotient of `f` at `x`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// `|a - b| / max(|a|, |b|)`, or 0 when both are zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Smallest pre-activation magnitude; a finite-difference step larger than
/// this may cross a ReLU kink.
pub fn kink_margin(trace: &GcnTrace) -> f64 {
    trace
        .preactivations
        .iter()
        .flat_map(|z| z.iter())
        .fold(f64::INFINITY, |m, &x| m.min(x.abs()))
}

/// Largest absolute difference between the sparse layer and the dense
/// reference, over every layer of `stack` applied to `h0`.
pub fn dense_oracle_error(graph: &SyntaxGraph, stack: &GcnStack, h0: &Array2<f64>) -> Result<f64, GraphError> {
    let a = adjacency_matrix(graph);
    let mut h = h0.clone();
    let mut worst: f64 = 0.0;
    for layer in &stack.layers {
        let sparse = gcn_layer(graph, &h, layer, stack.self_loops)?;
        let dense = dense_gcn_layer(&a, &h, &layer.weight, &layer.bias, stack.self_loops);
        worst = sparse.iter().zip(&dense).fold(worst, |m, (x, y)| m.max((x - y).abs()));
        h = sparse;
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
}

/// Compares analytic gradients of `sum(upstream * H)` with central
/// differences on up to `samples` randomly chosen entries of every
/// parameter tensor (all entries when `samples` is `None`).
pub fn gcn_gradient_check<R: Rng>(
    graph: &SyntaxGraph,
    stack: &GcnStack,
    terminal_inits: &Array2<f64>,
    upstream: &Array2<f64>,
    step: f64,
    samples: Option<usize>,
    rng: &mut R,
) -> Result<GradCheck, GraphError> {
    let trace = gcn_encode_traced(graph, terminal_inits, stack)?;
    let grads = gcn_backward(graph, stack, &trace, upstream)?;
    let loss = |s: &GcnStack, t: &Array2<f64>| -> f64 {
        let out = gcn_encode_traced(graph, t, s).expect("shapes were checked").output;
        (&out * upstream).sum()
    };

    let mut report = GradCheck {
        checked: 0,
        max_relative_error: 0.0,
    };
    let pick = |len: usize, rng: &mut R| -> Vec<usize> {
        match samples {
            Some(k) if k < len => sample(rng, len, k).into_vec(),
            _ => (0..len).collect(),
        }
    };
    let mut record = |analytic: f64, numeric: f64| {
        report.checked += 1;
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic, numeric));
    };

    for l in 0..stack.layers.len() {
        let d = stack.width();
        for idx in pick(d * d, rng) {
            let (i, j) = (idx / d, idx % d);
            let mut s = stack.clone();
            let numeric = central_difference(
                |x| {
                    s.layers[l].weight[[i, j]] = x;
                    loss(&s, terminal_inits)
                },
                stack.layers[l].weight[[i, j]],
                step,
            );
            record(grads.weights[l][[i, j]], numeric);
        }
        for i in pick(d, rng) {
            let mut s = stack.clone();
            let numeric = central_difference(
                |x| {
                    s.layers[l].bias[i] = x;
                    loss(&s, terminal_inits)
                },
                stack.layers[l].bias[i],
                step,
            );
            record(grads.biases[l][i], numeric);
        }
    }

    let (rows, cols) = stack.embeddings.dim();
    for idx in pick(rows * cols, rng) {
        let (i, j) = (idx / cols, idx % cols);
        let mut s = stack.clone();
        let numeric = central_difference(
            |x| {
                s.embeddings[[i, j]] = x;
                loss(&s, terminal_inits)
            },
            stack.embeddings[[i, j]],
            step,
        );
        record(grads.embeddings[[i, j]], numeric);
    }

    let (rows, cols) = terminal_inits.dim();
    for idx in pick(rows * cols, rng) {
        let (i, j) = (idx / cols, idx % cols);
        let mut t = terminal_inits.clone();
        let numeric = central_difference(
            |x| {
                t[[i, j]] = x;
                loss(stack, &t)
            },
            terminal_inits[[i, j]],
            step,
        );
        record(grads.terminal_inits[[i, j]], numeric);
    }
    Ok(report)
}
