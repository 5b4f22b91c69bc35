//! Command-line front end.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::align::{align, to_json, tokens};
use crate::check::{dense_oracle_error, gcn_gradient_check, kink_margin};
use crate::ensemble::{
    feature_names, gather, label_candidates, select_and_apply, train, union_apply, Example, LogRegModel, TrainConfig,
};
use crate::eval::corpus_score;
use crate::graph::{
    build_graph, collect_labels, fuse, gcn_encode_traced, initial_states, matrix_to_rows, uniform_matrix, FusionConfig,
    GcnStack,
};
use crate::m2::{read_m2, M2Sentence};
use crate::project::{build_training_trees_from_text, parse_parallel_line, strip_pseudo, Placement, ProjectOptions};
use crate::subword::{read_segmentations, to_subword_tree, Marker};
use crate::tree::{read_trees, ConstituencyTree};

#[derive(Debug, Parser)]
#[command(
    name = "csyn",
    version,
    about = "Syntax-enhanced grammatical error correction toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Weight of the syntax states in the fusion.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub lambda: f64,
    /// GCN hidden width.
    #[arg(long = "d", global = true, default_value_t = 64)]
    pub d: usize,
    #[arg(long, global = true, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, global = true, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, global = true, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, global = true, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, global = true, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, global = true, value_enum, default_value_t = PlacementArg::Below)]
    pub pseudo_placement: PlacementArg,
    /// Include each node in its own GCN neighbourhood.
    #[arg(long, global = true)]
    pub self_loops: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Below,
    Above,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Below => Placement::Below,
            PlacementArg::Above => Placement::Above,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarkerStyle {
    Prefix,
    Suffix,
    None,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Edit script JSON for each `source<TAB>target` line.
    Align { parallel: PathBuf },
    /// Projects target trees onto their source sentences.
    Project {
        parallel: PathBuf,
        trees: PathBuf,
        /// Write the summary JSON here instead of stderr.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Removes pseudo nodes and the redundant words under RED.
    Strip { trees: PathBuf },
    /// Expands word-level trees to subword-level trees.
    Subword {
        trees: PathBuf,
        segmentation: PathBuf,
        #[arg(long, value_enum, default_value_t = MarkerStyle::Prefix)]
        marker_style: MarkerStyle,
        #[arg(long, default_value = "@@")]
        marker: String,
    },
    /// Checks the GCN encoder against a dense oracle and finite differences.
    GcnCheck {
        trees: PathBuf,
        /// Entries sampled per parameter tensor for the gradient check.
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Fuses seeded syntax and basic states.
    FuseDemo {
        #[arg(long, default_value_t = 3)]
        rows: usize,
    },
    /// Trains the edit selector: `<src> <hyp>... <gold.m2>`.
    EnsembleTrain {
        #[arg(num_args = 3.., required = true)]
        files: Vec<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Applies a trained selector: `<src> <hyp>... <model.json>`.
    EnsembleApply {
        #[arg(num_args = 3.., required = true)]
        files: Vec<PathBuf>,
        /// Keep every proposed edit instead of consulting the model.
        #[arg(long)]
        union: bool,
    },
    /// Edit-level P/R/F0.5 of a hypothesis M2 file against a gold M2 file.
    Score { hyp: PathBuf, gold: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    /// 2 for malformed input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format { .. } | CliError::Input(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_error(path: &Path, message: impl ToString) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_tree_file(path: &Path) -> Result<Vec<ConstituencyTree>> {
    read_trees(read(path)?.as_bytes()).map_err(|e| format_error(path, e))
}

fn read_m2_file(path: &Path) -> Result<Vec<M2Sentence>> {
    read_m2(&read(path)?).map_err(|e| format_error(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read(path)?.lines().map(tokens).collect())
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data always serializes")
}

impl RunConfig {
    fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Config(format!(
                "--threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CliError::Config(format!("--lr {} must be positive", self.lr)));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(CliError::Config(format!("--l2 {} must be non-negative", self.l2)));
        }
        if self.d == 0 {
            return Err(CliError::Config("--d must be positive".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            l2: self.l2,
            threshold: self.threshold,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config;
    config.check()?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Align { parallel } => cmd_align(&parallel, &mut out)?,
        Command::Project {
            parallel,
            trees,
            summary,
        } => cmd_project(&config, &parallel, &trees, summary.as_deref(), &mut out)?,
        Command::Strip { trees } => cmd_strip(&trees, &mut out)?,
        Command::Subword {
            trees,
            segmentation,
            marker_style,
            marker,
        } => {
            let marker = match marker_style {
                MarkerStyle::Prefix => Marker::Prefix(marker),
                MarkerStyle::Suffix => Marker::Suffix(marker),
                MarkerStyle::None => Marker::None,
            };
            cmd_subword(&trees, &segmentation, &marker, &mut out)?
        }
        Command::GcnCheck {
            trees,
            samples,
            step,
            tolerance,
        } => cmd_gcn_check(&config, &trees, samples, step, tolerance, &mut out)?,
        Command::FuseDemo { rows } => cmd_fuse_demo(&config, rows, &mut out)?,
        Command::EnsembleTrain { files, output } => cmd_ensemble_train(&config, &files, output.as_deref(), &mut out)?,
        Command::EnsembleApply { files, union } => cmd_ensemble_apply(&files, union, &mut out)?,
        Command::Score { hyp, gold } => cmd_score(&hyp, &gold, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_align(path: &Path, out: &mut impl Write) -> Result<()> {
    let text = read(path)?;
    for (idx, line) in text.lines().enumerate() {
        let pair = parse_parallel_line(line).map_err(|e| format_error(path, format!("line {}: {e}", idx + 1)))?;
        writeln!(out, "{}", to_json(&align(&pair.src, &pair.tgt)))?;
    }
    Ok(())
}

fn cmd_project(
    config: &RunConfig,
    parallel: &Path,
    trees: &Path,
    summary_path: Option<&Path>,
    out: &mut impl Write,
) -> Result<()> {
    let options = ProjectOptions {
        placement: config.pseudo_placement.into(),
    };
    let output = build_training_trees_from_text(&read(parallel)?, &read(trees)?, options)
        .map_err(|e| CliError::Input(format!("{} and {}: {e}", parallel.display(), trees.display())))?;
    for (_, tree) in &output.trees {
        writeln!(out, "{tree}")?;
    }
    let summary = json(&output.summary);
    match summary_path {
        Some(path) => fs::write(path, summary + "\n").map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?,
        None => eprintln!("{summary}"),
    }
    Ok(())
}

fn cmd_strip(path: &Path, out: &mut impl Write) -> Result<()> {
    for (idx, tree) in read_tree_file(path)?.iter().enumerate() {
        match strip_pseudo(tree) {
            Some(stripped) => writeln!(out, "{stripped}")?,
            None => log::warn!("line {}: nothing left after stripping, skipped", idx + 1),
        }
    }
    Ok(())
}

fn cmd_subword(trees: &Path, segmentation: &Path, marker: &Marker, out: &mut impl Write) -> Result<()> {
    let tree_list = read_tree_file(trees)?;
    let segs = read_segmentations(&read(segmentation)?).map_err(|e| format_error(segmentation, e))?;
    if tree_list.len() != segs.len() {
        return Err(CliError::Input(format!(
            "{} has {} trees but {} has {} lines",
            trees.display(),
            tree_list.len(),
            segmentation.display(),
            segs.len()
        )));
    }
    for (idx, (tree, seg)) in tree_list.iter().zip(&segs).enumerate() {
        let expanded = to_subword_tree(tree, seg, marker)
            .map_err(|e| format_error(segmentation, format!("line {}: {e}", idx + 1)))?;
        writeln!(out, "{expanded}")?;
    }
    Ok(())
}

const KINK_MARGIN: f64 = 1e-4;
const RESAMPLE_LIMIT: usize = 50;

#[derive(Serialize)]
struct GcnCheckLine {
    line: usize,
    nodes: usize,
    edges: usize,
    oracle_max_abs_error: f64,
    grad_checked: usize,
    grad_max_relative_error: f64,
    kink_margin: f64,
    resamples: usize,
    pass: bool,
}

fn cmd_gcn_check(
    config: &RunConfig,
    path: &Path,
    samples: usize,
    step: f64,
    tolerance: f64,
    out: &mut impl Write,
) -> Result<()> {
    let trees = read_tree_file(path)?;
    let mut stack = GcnStack::random(collect_labels(&trees), config.d, config.layers, config.seed);
    stack.self_loops = config.self_loops;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut failures = 0;
    for (idx, tree) in trees.iter().enumerate() {
        let graph = build_graph(tree);
        let err = |e| CliError::Input(format!("tree {}: {e}", idx + 1));
        let mut resamples = 0;
        let (inits, margin) = loop {
            let inits = uniform_matrix(&mut rng, graph.terminal_count(), config.d, 1.0);
            let trace = gcn_encode_traced(&graph, &inits, &stack).map_err(err)?;
            let margin = kink_margin(&trace);
            if margin >= KINK_MARGIN || resamples == RESAMPLE_LIMIT {
                break (inits, margin);
            }
            resamples += 1;
        };
        let h0 = initial_states(&graph, &inits, &stack).map_err(err)?;
        let oracle = dense_oracle_error(&graph, &stack, &h0).map_err(err)?;
        let upstream = uniform_matrix(&mut rng, graph.node_count(), config.d, 1.0);
        let grad = gcn_gradient_check(&graph, &stack, &inits, &upstream, step, Some(samples), &mut rng).map_err(err)?;
        let pass = oracle <= 1e-6 && grad.max_relative_error <= tolerance;
        if !pass {
            failures += 1;
        }
        let line = GcnCheckLine {
            line: idx + 1,
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            oracle_max_abs_error: oracle,
            grad_checked: grad.checked,
            grad_max_relative_error: grad.max_relative_error,
            kink_margin: margin,
            resamples,
            pass,
        };
        writeln!(out, "{}", json(&line))?;
    }
    if failures > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failures} of {} trees failed the check",
            trees.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct FuseDemo {
    lambda: f64,
    h_syn: Vec<Vec<f64>>,
    h_basic: Vec<Vec<f64>>,
    fused: Vec<Vec<f64>>,
    max_elementwise_error: f64,
}

fn cmd_fuse_demo(config: &RunConfig, rows: usize, out: &mut impl Write) -> Result<()> {
    let fusion = FusionConfig::new(config.lambda).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h_syn = uniform_matrix(&mut rng, rows, config.d, 1.0);
    let h_basic = uniform_matrix(&mut rng, rows, config.d, 1.0);
    let fused = fuse(&h_syn, &h_basic, fusion).map_err(|e| CliError::Config(e.to_string()))?;
    let lambda = config.lambda;
    let expected = Array2::from_shape_fn(fused.dim(), |ij| lambda * h_syn[ij] + (1.0 - lambda) * h_basic[ij]);
    let max_elementwise_error = fused
        .iter()
        .zip(&expected)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let demo = FuseDemo {
        lambda,
        h_syn: matrix_to_rows(&h_syn),
        h_basic: matrix_to_rows(&h_basic),
        fused: matrix_to_rows(&fused),
        max_elementwise_error,
    };
    writeln!(out, "{}", json(&demo))?;
    Ok(())
}

type Sentences = Vec<Vec<String>>;

/// Source lines and the hypothesis files, checked for equal length.
fn read_system_outputs(src: &Path, hyps: &[PathBuf]) -> Result<(Sentences, Vec<Sentences>)> {
    let src_lines = read_lines(src)?;
    let mut systems = Vec::with_capacity(hyps.len());
    for path in hyps {
        let lines = read_lines(path)?;
        if lines.len() != src_lines.len() {
            return Err(CliError::Input(format!(
                "{} has {} lines but {} has {}",
                path.display(),
                lines.len(),
                src.display(),
                src_lines.len()
            )));
        }
        systems.push(lines);
    }
    Ok((src_lines, systems))
}

fn sentence_hypotheses(systems: &[Sentences], idx: usize) -> Vec<Vec<String>> {
    systems.iter().map(|s| s[idx].clone()).collect()
}

fn cmd_ensemble_train(
    config: &RunConfig,
    files: &[PathBuf],
    output: Option<&Path>,
    out: &mut impl Write,
) -> Result<()> {
    let (src, rest) = files.split_first().expect("clap requires three files");
    let (gold_path, hyps) = rest.split_last().expect("clap requires three files");
    let (src_lines, systems) = read_system_outputs(src, hyps)?;
    let gold = read_m2_file(gold_path)?;
    if gold.len() != src_lines.len() {
        return Err(CliError::Input(format!(
            "{} has {} sentences but {} has {} lines",
            gold_path.display(),
            gold.len(),
            src.display(),
            src_lines.len()
        )));
    }
    let mut data: Vec<Example> = Vec::new();
    for (idx, (tokens, gold_sentence)) in src_lines.iter().zip(&gold).enumerate() {
        if *tokens != gold_sentence.tokens {
            return Err(format_error(
                gold_path,
                format!(
                    "sentence {} does not match line {} of {}",
                    idx + 1,
                    idx + 1,
                    src.display()
                ),
            ));
        }
        let candidates = gather(tokens, &sentence_hypotheses(&systems, idx));
        let labels = label_candidates(&candidates, &gold_sentence.script);
        data.extend(candidates.into_iter().map(|c| c.features).zip(labels));
    }
    log::info!("training on {} candidate edits", data.len());
    let mut model = train(&data, config.train_config()).map_err(|e| CliError::Input(e.to_string()))?;
    model.feature_names = feature_names(hyps.len());
    let text = serde_json::to_string_pretty(&model).expect("models always serialize");
    match output {
        Some(path) => fs::write(path, text + "\n").map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?,
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

fn cmd_ensemble_apply(files: &[PathBuf], union: bool, out: &mut impl Write) -> Result<()> {
    let (src, rest) = files.split_first().expect("clap requires three files");
    let (model_path, hyps) = rest.split_last().expect("clap requires three files");
    let (src_lines, systems) = read_system_outputs(src, hyps)?;
    let model: LogRegModel = serde_json::from_str(&read(model_path)?).map_err(|e| format_error(model_path, e))?;
    let width = feature_names(hyps.len()).len();
    model.check_width(width).map_err(|e| format_error(model_path, e))?;
    for (idx, tokens) in src_lines.iter().enumerate() {
        let candidates = gather(tokens, &sentence_hypotheses(&systems, idx));
        let corrected = if union {
            union_apply(tokens, &candidates)
        } else {
            select_and_apply(tokens, &candidates, &model)
        }
        .map_err(|e| CliError::Input(format!("line {}: {e}", idx + 1)))?;
        writeln!(out, "{}", corrected.join(" "))?;
    }
    Ok(())
}

fn cmd_score(hyp_path: &Path, gold_path: &Path, out: &mut impl Write) -> Result<()> {
    let hyp = read_m2_file(hyp_path)?;
    let gold = read_m2_file(gold_path)?;
    if hyp.len() != gold.len() {
        return Err(CliError::Input(format!(
            "{} has {} sentences but {} has {}",
            hyp_path.display(),
            hyp.len(),
            gold_path.display(),
            gold.len()
        )));
    }
    if let Some(idx) = hyp.iter().zip(&gold).position(|(h, g)| h.tokens != g.tokens) {
        return Err(format_error(
            hyp_path,
            format!(
                "sentence {} has a different source than in {}",
                idx + 1,
                gold_path.display()
            ),
        ));
    }
    let scores = corpus_score(hyp.iter().zip(&gold).map(|(h, g)| (&h.script, &g.script)));
    writeln!(out, "{}", json(&scores))?;
    eprintln!("{scores}");
    Ok(())
}
