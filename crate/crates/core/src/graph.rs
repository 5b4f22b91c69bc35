//! Syntax graphs and the reference GCN encoder.
//!
//! A constituency tree is viewed as an undirected graph over all of its
//! nodes. One GCN layer computes, for every node `v`,
//!
//! ```text
//! h_v' = ReLU( sum_{u in N(v)} W h_u + b )
//! ```
//!
//! with `N(v)` the one-hop neighbours of `v`. There is no self term and no
//! degree normalization unless self loops are switched on. Terminal nodes
//! start from caller-supplied vectors (the token encoder states);
//! non-terminals start from a row of a label embedding table.
//!
//! Matrices are row-major: row `v` of a node matrix is the vector of node `v`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{ConstituencyTree, Node};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no embedding row for label {0:?}")]
    MissingLabel(String),
    #[error("token {token} has head {head}, out of range for {len} tokens")]
    HeadOutOfRange { token: usize, head: usize, len: usize },
    #[error("token {0} is its own head")]
    SelfHead(usize),
    #[error("dependency heads contain a cycle through token {0}")]
    Cycle(usize),
    #[error("expected exactly one root, found {0}")]
    Roots(usize),
    #[error("edge ({0}, {1}) is invalid")]
    BadEdge(usize, usize),
    #[error("fusion factor {0} outside [0, 1]")]
    Lambda(f64),
    #[error("non-finite parameter in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphNode {
    Terminal { position: usize },
    NonTerminal { label: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxGraph {
    pub nodes: Vec<GraphNode>,
    adjacency: Vec<Vec<usize>>,
}

impl SyntaxGraph {
    /// Builds a graph from an undirected edge list. Rejects self edges,
    /// duplicates and out-of-range endpoints.
    pub fn from_edges(nodes: Vec<GraphNode>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(u, v) in edges {
            if u == v || u >= nodes.len() || v >= nodes.len() || adjacency[u].contains(&v) {
                return Err(GraphError::BadEdge(u, v));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        Ok(SyntaxGraph { nodes, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn terminal_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, GraphNode::Terminal { .. }))
            .count()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    /// `u v` per line.
    pub fn to_edge_list(&self) -> String {
        self.edges().into_iter().map(|(u, v)| format!("{u} {v}\n")).collect()
    }

    /// Row index of each terminal, by token position.
    pub fn terminal_rows(&self) -> Vec<usize> {
        let mut rows = vec![usize::MAX; self.terminal_count()];
        for (v, node) in self.nodes.iter().enumerate() {
            if let GraphNode::Terminal { position } = node {
                rows[*position] = v;
            }
        }
        rows
    }
}

/// One node per tree node: terminals first by position, then non-terminals
/// in pre-order; one edge per parent-child link.
pub fn build_graph(tree: &ConstituencyTree) -> SyntaxGraph {
    let terminals = tree.len_terminals();
    let mut nodes: Vec<GraphNode> = (0..terminals)
        .map(|position| GraphNode::Terminal { position })
        .collect();
    let mut edges = Vec::new();
    let mut next_terminal = 0;
    visit(&tree.root, None, &mut nodes, &mut edges, &mut next_terminal);
    SyntaxGraph::from_edges(nodes, &edges).expect("tree links form a valid graph")
}

fn visit(
    node: &Node,
    parent: Option<usize>,
    nodes: &mut Vec<GraphNode>,
    edges: &mut Vec<(usize, usize)>,
    next_terminal: &mut usize,
) {
    let id = match node {
        Node::Terminal { .. } => {
            *next_terminal += 1;
            *next_terminal - 1
        }
        Node::NonTerminal { label, .. } => {
            nodes.push(GraphNode::NonTerminal {
                label: label.as_str().to_string(),
            });
            nodes.len() - 1
        }
    };
    if let Some(p) = parent {
        edges.push((p, id));
    }
    for child in node.children() {
        visit(child, Some(id), nodes, edges, next_terminal);
    }
}

/// Token graph of a dependency tree. `heads[i]` is the 1-based head of token
/// `i + 1`, with `0` marking the root.
pub fn build_graph_dep(heads: &[usize]) -> Result<SyntaxGraph, GraphError> {
    let len = heads.len();
    let mut roots = 0;
    for (i, &h) in heads.iter().enumerate() {
        if h > len {
            return Err(GraphError::HeadOutOfRange {
                token: i + 1,
                head: h,
                len,
            });
        }
        if h == i + 1 {
            return Err(GraphError::SelfHead(i + 1));
        }
        if h == 0 {
            roots += 1;
        }
    }
    // Every token must reach the root by following heads.
    let mut state = vec![0u8; len]; // 0 unseen, 1 on current path, 2 reaches root
    for start in 0..len {
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => return Err(GraphError::Cycle(cur + 1)),
                _ => {}
            }
            state[cur] = 1;
            path.push(cur);
            match heads[cur] {
                0 => break,
                h => cur = h - 1,
            }
        }
        for v in path {
            state[v] = 2;
        }
    }
    if roots != 1 {
        return Err(GraphError::Roots(roots));
    }
    let nodes = (0..len).map(|position| GraphNode::Terminal { position }).collect();
    let edges: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .filter(|(_, &h)| h != 0)
        .map(|(i, &h)| (i, h - 1))
        .collect();
    SyntaxGraph::from_edges(nodes, &edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayerParams {
    /// `d x d`
    pub weight: Array2<f64>,
    /// length `d`
    pub bias: Array1<f64>,
}

impl GcnLayerParams {
    pub fn zeros(d: usize) -> Self {
        GcnLayerParams {
            weight: Array2::zeros((d, d)),
            bias: Array1::zeros(d),
        }
    }
}

/// Layer parameters plus the non-terminal embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack {
    pub layers: Vec<GcnLayerParams>,
    pub labels: Vec<String>,
    /// `n x d`, one row per label.
    pub embeddings: Array2<f64>,
    /// Adds each node's own vector to its neighbour sum.
    pub self_loops: bool,
}

impl GcnStack {
    pub fn width(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Seeded parameters: embeddings uniform in [-0.1, 0.1], weights uniform
    /// in [-1/sqrt(d), 1/sqrt(d)], biases uniform in [-0.1, 0.1].
    pub fn random(labels: Vec<String>, d: usize, layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = uniform_matrix(&mut rng, labels.len(), d, 0.1);
        let scale = 1.0 / (d.max(1) as f64).sqrt();
        let layers = (0..layers)
            .map(|_| GcnLayerParams {
                weight: uniform_matrix(&mut rng, d, d, scale),
                bias: Array1::from_shape_fn(d, |_| rng.random_range(-0.1..=0.1)),
            })
            .collect();
        GcnStack {
            layers,
            labels,
            embeddings,
            self_loops: false,
        }
    }

    fn check(&self) -> Result<(), GraphError> {
        let d = self.width();
        if self.embeddings.nrows() != self.labels.len() {
            return Err(GraphError::Dimension(format!(
                "{} labels but {} embedding rows",
                self.labels.len(),
                self.embeddings.nrows()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weight.dim() != (d, d) || layer.bias.len() != d {
                return Err(GraphError::Dimension(format!("layer {l} does not have width {d}")));
            }
        }
        Ok(())
    }
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..=scale))
}

/// Row `v` of the result is the sum of the rows of `h` over `N(v)`, plus
/// `h[v]` itself when `self_loops` is set.
pub fn aggregate(graph: &SyntaxGraph, h: ArrayView2<'_, f64>, self_loops: bool) -> Array2<f64> {
    let mut out = if self_loops {
        h.to_owned()
    } else {
        Array2::zeros(h.raw_dim())
    };
    for v in 0..graph.node_count() {
        let mut row = out.row_mut(v);
        for &u in graph.neighbors(v) {
            row += &h.row(u);
        }
    }
    out
}

fn check_rows(graph: &SyntaxGraph, h: &Array2<f64>, d: usize) -> Result<(), GraphError> {
    if h.nrows() != graph.node_count() || h.ncols() != d {
        return Err(GraphError::Dimension(format!(
            "node matrix is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            graph.node_count(),
            d
        )));
    }
    Ok(())
}

fn layer_preactivation(graph: &SyntaxGraph, h: &Array2<f64>, params: &GcnLayerParams, self_loops: bool) -> Array2<f64> {
    let agg = aggregate(graph, h.view(), self_loops);
    agg.dot(&params.weight.t()) + &params.bias
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|x| x.max(0.0))
}

/// One GCN layer.
pub fn gcn_layer(
    graph: &SyntaxGraph,
    h: &Array2<f64>,
    params: &GcnLayerParams,
    self_loops: bool,
) -> Result<Array2<f64>, GraphError> {
    let d = params.bias.len();
    if params.weight.dim() != (d, d) {
        return Err(GraphError::Dimension(format!(
            "weight is {:?}, bias has length {d}",
            params.weight.dim()
        )));
    }
    check_rows(graph, h, d)?;
    Ok(relu(&layer_preactivation(graph, h, params, self_loops)))
}

/// Initial node matrix: terminal rows from `terminal_inits` (row = token
/// position), non-terminal rows from the embedding table.
pub fn initial_states(
    graph: &SyntaxGraph,
    terminal_inits: &Array2<f64>,
    stack: &GcnStack,
) -> Result<Array2<f64>, GraphError> {
    let d = stack.width();
    if terminal_inits.ncols() != d || terminal_inits.nrows() != graph.terminal_count() {
        return Err(GraphError::Dimension(format!(
            "terminal inits are {}x{}, expected {}x{}",
            terminal_inits.nrows(),
            terminal_inits.ncols(),
            graph.terminal_count(),
            d
        )));
    }
    let mut h0 = Array2::zeros((graph.node_count(), d));
    for (v, node) in graph.nodes.iter().enumerate() {
        let src = match node {
            GraphNode::Terminal { position } => terminal_inits.row(*position),
            GraphNode::NonTerminal { label } => {
                let idx = stack
                    .label_index(label)
                    .ok_or_else(|| GraphError::MissingLabel(label.clone()))?;
                stack.embeddings.row(idx)
            }
        };
        h0.row_mut(v).assign(&src);
    }
    Ok(h0)
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnTrace {
    /// Input to each layer; `inputs[0]` is the initial node matrix.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pub preactivations: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

pub fn gcn_encode(
    graph: &SyntaxGraph,
    terminal_inits: &Array2<f64>,
    stack: &GcnStack,
) -> Result<Array2<f64>, GraphError> {
    Ok(gcn_encode_traced(graph, terminal_inits, stack)?.output)
}

pub fn gcn_encode_traced(
    graph: &SyntaxGraph,
    terminal_inits: &Array2<f64>,
    stack: &GcnStack,
) -> Result<GcnTrace, GraphError> {
    stack.check()?;
    let mut h = initial_states(graph, terminal_inits, stack)?;
    let mut inputs = Vec::with_capacity(stack.layers.len());
    let mut preactivations = Vec::with_capacity(stack.layers.len());
    for layer in &stack.layers {
        let z = layer_preactivation(graph, &h, layer, stack.self_loops);
        let next = relu(&z);
        inputs.push(std::mem::replace(&mut h, next));
        preactivations.push(z);
    }
    Ok(GcnTrace {
        inputs,
        preactivations,
        output: h,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnGradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub embeddings: Array2<f64>,
    pub terminal_inits: Array2<f64>,
}

/// Gradients of a scalar loss given `upstream = dL/d(output)`.
pub fn gcn_backward(
    graph: &SyntaxGraph,
    stack: &GcnStack,
    trace: &GcnTrace,
    upstream: &Array2<f64>,
) -> Result<GcnGradients, GraphError> {
    if upstream.dim() != trace.output.dim() {
        return Err(GraphError::Dimension("upstream gradient shape".into()));
    }
    let mut grad = upstream.clone();
    let mut weights = Vec::with_capacity(stack.layers.len());
    let mut biases = Vec::with_capacity(stack.layers.len());
    for (l, layer) in stack.layers.iter().enumerate().rev() {
        let z = &trace.preactivations[l];
        let dz = &grad * &z.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let agg = aggregate(graph, trace.inputs[l].view(), stack.self_loops);
        weights.push(dz.t().dot(&agg));
        biases.push(dz.sum_axis(Axis(0)));
        // The aggregation is symmetric, so its adjoint is itself.
        grad = aggregate(graph, dz.dot(&layer.weight).view(), stack.self_loops);
    }
    weights.reverse();
    biases.reverse();

    let mut embeddings = Array2::zeros(stack.embeddings.raw_dim());
    let mut terminal_inits = Array2::zeros((graph.terminal_count(), stack.width()));
    for (v, node) in graph.nodes.iter().enumerate() {
        match node {
            GraphNode::Terminal { position } => {
                terminal_inits.row_mut(*position).assign(&grad.row(v));
            }
            GraphNode::NonTerminal { label } => {
                let idx = stack
                    .label_index(label)
                    .ok_or_else(|| GraphError::MissingLabel(label.clone()))?;
                let mut row = embeddings.row_mut(idx);
                row += &grad.row(v);
            }
        }
    }
    Ok(GcnGradients {
        weights,
        biases,
        embeddings,
        terminal_inits,
    })
}

/// Rows of `h` belonging to terminals, in token order.
pub fn terminal_states(graph: &SyntaxGraph, h: &Array2<f64>) -> Array2<f64> {
    let rows = graph.terminal_rows();
    h.select(Axis(0), &rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    lambda: f64,
}

impl FusionConfig {
    pub fn new(lambda: f64) -> Result<Self, GraphError> {
        if lambda.is_finite() && (0.0..=1.0).contains(&lambda) {
            Ok(FusionConfig { lambda })
        } else {
            Err(GraphError::Lambda(lambda))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { lambda: 0.5 }
    }
}

/// `lambda * h_syn + (1 - lambda) * h_basic`, elementwise.
pub fn fuse(h_syn: &Array2<f64>, h_basic: &Array2<f64>, config: FusionConfig) -> Result<Array2<f64>, GraphError> {
    if h_syn.dim() != h_basic.dim() {
        return Err(GraphError::Dimension(format!(
            "syntax states {:?} vs basic states {:?}",
            h_syn.dim(),
            h_basic.dim()
        )));
    }
    let lambda = config.lambda;
    // Endpoints are exact: no 0 * x terms leak through.
    if lambda == 1.0 {
        return Ok(h_syn.clone());
    }
    if lambda == 0.0 {
        return Ok(h_basic.clone());
    }
    Ok(h_syn * lambda + h_basic * (1.0 - lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    #[serde(rename = "W")]
    pub weight: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// JSON layout of [`GcnStack`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParamsFile {
    pub d: usize,
    pub n: usize,
    pub labels: Vec<String>,
    pub layers: Vec<LayerFile>,
    #[serde(rename = "E_nt")]
    pub embeddings: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub self_loops: bool,
}

pub fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> Result<Array2<f64>, GraphError> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(GraphError::Dimension(format!("ragged matrix, expected {cols} columns")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| GraphError::Dimension(e.to_string()))
}

impl From<&GcnStack> for GcnParamsFile {
    fn from(stack: &GcnStack) -> Self {
        GcnParamsFile {
            d: stack.width(),
            n: stack.labels.len(),
            labels: stack.labels.clone(),
            layers: stack
                .layers
                .iter()
                .map(|l| LayerFile {
                    weight: matrix_to_rows(&l.weight),
                    b: l.bias.to_vec(),
                })
                .collect(),
            embeddings: matrix_to_rows(&stack.embeddings),
            self_loops: stack.self_loops,
        }
    }
}

impl TryFrom<GcnParamsFile> for GcnStack {
    type Error = GraphError;

    fn try_from(file: GcnParamsFile) -> Result<Self, Self::Error> {
        if file.labels.len() != file.n || file.embeddings.len() != file.n {
            return Err(GraphError::Dimension("label count does not match n".into()));
        }
        let layers = file
            .layers
            .iter()
            .map(|l| {
                if l.weight.len() != file.d || l.b.len() != file.d {
                    return Err(GraphError::Dimension("layer width does not match d".into()));
                }
                Ok(GcnLayerParams {
                    weight: rows_to_matrix(&l.weight, file.d)?,
                    bias: Array1::from(l.b.clone()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let embeddings = rows_to_matrix(&file.embeddings, file.d)?;
        let finite = layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
            && embeddings.iter().all(|x| x.is_finite());
        if !finite {
            return Err(GraphError::NonFinite("GCN parameters"));
        }
        Ok(GcnStack {
            layers,
            labels: file.labels,
            embeddings,
            self_loops: file.self_loops,
        })
    }
}

/// Every non-terminal label occurring in `trees`, sorted and deduplicated.
pub fn collect_labels<'a>(trees: impl IntoIterator<Item = &'a ConstituencyTree>) -> Vec<String> {
    let mut labels = std::collections::BTreeSet::new();
    for tree in trees {
        collect_node_labels(&tree.root, &mut labels);
    }
    labels.into_iter().collect()
}

fn collect_node_labels(node: &Node, out: &mut std::collections::BTreeSet<String>) {
    if let Some(label) = node.label() {
        out.insert(label.as_str().to_string());
    }
    for child in node.children() {
        collect_node_labels(child, out);
    }
}

/// Dense 0/1 adjacency matrix, handy for inspection and cross-checks.
pub fn adjacency_matrix(graph: &SyntaxGraph) -> Array2<f64> {
    let n = graph.node_count();
    let mut a = Array2::zeros((n, n));
    for (u, v) in graph.edges() {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    a
}

/// Slice of the first `n` rows.
pub fn head_rows(h: &Array2<f64>, n: usize) -> Array2<f64> {
    h.slice(s![..n, ..]).to_owned()
}
