//! Forward passes, all recorded on a [`Tape`].
//!
//! The plain-matrix functions at the bottom of this file build a private
//! tape and return values; training uses [`model_forward_on_tape`] and
//! differentiates the same record.

use crate::density::{density_bias, hyperedge_densities, node_densities};
use crate::error::{Error, Result};
use crate::hypergraph::{Grouping, HyperGraph, Propagation};
use crate::layers::params::{DaAttentionHead, DaHgnnParams};
use crate::numerics::{ConstOperand, Matrix, Tape, Var, DEFAULT_ELU_ALPHA, DEFAULT_LEAKY_SLOPE};

/// Knobs of the attention layers that are not trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    /// Similarity threshold δ for node densities.
    pub delta: f64,
    pub leaky_slope: f64,
    pub elu_alpha: f64,
    /// When false, every normalized density is replaced by zero and the
    /// layers reduce to plain feature-similarity attention.
    pub density_enabled: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            delta: crate::density::DEFAULT_DELTA,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            elu_alpha: DEFAULT_ELU_ALPHA,
            density_enabled: true,
        }
    }
}

/// Tape handles of one attention head's parameters.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w: Var,
    pub alpha_x: Var,
    pub alpha_e: Var,
}

impl HeadVars {
    pub fn register(tape: &mut Tape<'_>, head: &DaAttentionHead) -> Self {
        Self {
            w: tape.param(head.w.clone()),
            alpha_x: tape.param(head.alpha_x.clone()),
            alpha_e: tape.param(head.alpha_e.clone()),
        }
    }
}

/// What one head computed besides its output, for inspection and tests.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub node_density: Vec<f64>,
    pub edge_density: Vec<f64>,
    /// Normalized node density, one value per node.
    pub node_bias: Vec<f64>,
    /// Normalized hyperedge density, one value per hyperedge.
    pub edge_bias: Vec<f64>,
    /// Vertex-attention coefficients, one per incidence in edge-major order.
    pub coe_x: Var,
    /// Hyperedge-attention coefficients, one per incidence in node-major order.
    pub coe_e: Var,
}

/// `LeakyReLU(αᵀ[member_feats[j] ∥ owner_feats[g]])` for every incidence
/// `(g, j)` of `grouping`.
fn incidence_attention<'a>(
    tape: &mut Tape<'a>,
    graph: &'a HyperGraph,
    grouping: Grouping,
    member_feats: Var,
    owner_feats: Var,
    alpha: Var,
    slope: f64,
) -> Result<Var> {
    let width = tape.value(member_feats).cols();
    if tape.value(alpha).shape() != (2 * width, 1) {
        return Err(Error::ShapeMismatch {
            context: "attention vector",
            expected: format!("{}x1", 2 * width),
            actual: tape.value(alpha).shape_str(),
        });
    }
    let a_member = tape.slice_rows(alpha, 0, width)?;
    let a_owner = tape.slice_rows(alpha, width, width)?;
    let member_score = tape.matmul(member_feats, a_member)?;
    let owner_score = tape.matmul(owner_feats, a_owner)?;
    let raw = tape.incidence_score(owner_score, member_score, graph, grouping)?;
    tape.leaky_relu(raw, slope)
}

/// Adds the per-member bias, softmaxes within each group and aggregates
/// `source` rows (indexed by members) into one row per group.
fn attend<'a>(
    tape: &mut Tape<'a>,
    graph: &'a HyperGraph,
    grouping: Grouping,
    scores: Var,
    member_bias: &[f64],
    source: Var,
) -> Result<(Var, Var)> {
    let (_, members) = graph.groups(grouping);
    let bias = Matrix::column(members.iter().map(|&m| member_bias[m]).collect());
    let biased = tape.add_const(scores, bias)?;
    let coe = tape.group_softmax(biased, graph, grouping)?;
    let aggregated = tape.group_aggregate(coe, source, graph, grouping)?;
    Ok((coe, aggregated))
}

/// Vertex attention: scores `LeakyReLU(α_Xᵀ[Wxᵢ ∥ Weₖ])` for every member
/// `i` of hyperedge `k`.
pub fn vertex_scores<'a>(
    tape: &mut Tape<'a>,
    graph: &'a HyperGraph,
    wx: Var,
    we: Var,
    alpha_x: Var,
    slope: f64,
) -> Result<Var> {
    incidence_attention(tape, graph, Grouping::ByEdge, wx, we, alpha_x, slope)
}

/// Hyperedge attention: scores `LeakyReLU(α_Eᵀ[ẽₖ ∥ Wxᵢ])` for every
/// hyperedge `k` containing node `i`.
pub fn hyperedge_scores<'a>(
    tape: &mut Tape<'a>,
    graph: &'a HyperGraph,
    wx: Var,
    e_tilde: Var,
    alpha_e: Var,
    slope: f64,
) -> Result<Var> {
    incidence_attention(tape, graph, Grouping::ByNode, e_tilde, wx, alpha_e, slope)
}

/// One density-aware attention head, in the order: project, node and
/// hyperedge densities, vertex attention, vertex aggregation, hyperedge
/// attention, hyperedge aggregation.
pub fn da_head_on_tape<'a>(
    tape: &mut Tape<'a>,
    graph: &'a HyperGraph,
    x: Var,
    e: Var,
    head: HeadVars,
    cfg: &AttentionConfig,
) -> Result<(Var, HeadTrace)> {
    let wx = tape.matmul(x, head.w)?;
    let we = tape.matmul(e, head.w)?;

    let (node_density, edge_density) = if cfg.density_enabled {
        let rho_x = node_densities(tape.value(wx), graph, cfg.delta);
        let rho_e = hyperedge_densities(&rho_x, graph);
        (rho_x, rho_e)
    } else {
        (vec![0.0; graph.node_count()], vec![0.0; graph.edge_count()])
    };

    let a_x = vertex_scores(tape, graph, wx, we, head.alpha_x, cfg.leaky_slope)?;
    let node_bias = density_bias(cfg.density_enabled, &node_density, tape.value(a_x).as_slice());
    let (coe_x, agg) = attend(tape, graph, Grouping::ByEdge, a_x, &node_bias, wx)?;
    let e_tilde = tape.elu(agg, cfg.elu_alpha)?;

    let a_e = hyperedge_scores(tape, graph, wx, e_tilde, head.alpha_e, cfg.leaky_slope)?;
    let edge_bias = density_bias(cfg.density_enabled, &edge_density, tape.value(a_e).as_slice());
    let (coe_e, agg) = attend(tape, graph, Grouping::ByNode, a_e, &edge_bias, e_tilde)?;
    let x_tilde = tape.elu(agg, cfg.elu_alpha)?;

    Ok((
        x_tilde,
        HeadTrace {
            node_density,
            edge_density,
            node_bias,
            edge_bias,
            coe_x,
            coe_e,
        },
    ))
}

/// Column-concatenation of several heads applied to the same inputs.
pub fn multi_head_on_tape<'a>(
    tape: &mut Tape<'a>,
    graph: &'a HyperGraph,
    x: Var,
    e: Var,
    heads: &[HeadVars],
    cfg: &AttentionConfig,
) -> Result<(Var, Vec<HeadTrace>)> {
    if heads.is_empty() {
        return Err(Error::invalid("multi-head attention needs at least one head"));
    }
    let mut outs = Vec::with_capacity(heads.len());
    let mut traces = Vec::with_capacity(heads.len());
    for &h in heads {
        let (out, trace) = da_head_on_tape(tape, graph, x, e, h, cfg)?;
        outs.push(out);
        traces.push(trace);
    }
    if outs.len() == 1 {
        return Ok((outs[0], traces));
    }
    Ok((tape.concat_cols(&outs)?, traces))
}

/// Model inputs that stay fixed across epochs.
#[derive(Debug)]
pub struct ModelInput<'g> {
    pub graph: &'g HyperGraph,
    pub features: ConstOperand,
}

impl<'g> ModelInput<'g> {
    pub fn new(features: &Matrix, graph: &'g HyperGraph) -> Result<Self> {
        graph.ensure_square()?;
        if features.rows() != graph.node_count() {
            return Err(Error::ShapeMismatch {
                context: "model input",
                expected: format!("{} feature rows", graph.node_count()),
                actual: features.shape_str(),
            });
        }
        Ok(Self {
            graph,
            features: ConstOperand::new(features.clone()),
        })
    }
}

/// A recorded full-model forward pass.
#[derive(Debug)]
pub struct ForwardPass<'a> {
    pub tape: Tape<'a>,
    /// Final-layer node embeddings, the softmax inputs (n×c).
    pub logits: Var,
    /// Class probabilities (n×c), rows sum to one.
    pub probs: Var,
    pub layer1: Vec<HeadTrace>,
    pub layer2: HeadTrace,
}

impl ForwardPass<'_> {
    pub fn probs(&self) -> &Matrix {
        self.tape.value(self.probs)
    }

    pub fn logits(&self) -> &Matrix {
        self.tape.value(self.logits)
    }
}

/// Convolution, hyperedge embedding, multi-head attention layer,
/// re-embedding, single-head attention layer, row softmax.
///
/// Parameters are registered on the tape in
/// [`DaHgnnParams::named_tensors`] order.
pub fn model_forward_on_tape<'a>(
    input: &'a ModelInput<'a>,
    params: &DaHgnnParams,
    cfg: &AttentionConfig,
) -> Result<ForwardPass<'a>> {
    params.validate()?;
    let (_, d0) = input.features.shape();
    if d0 != params.conv.theta.rows() {
        return Err(Error::ShapeMismatch {
            context: "model_forward",
            expected: format!("features with {} columns", params.conv.theta.rows()),
            actual: format!("{d0} columns"),
        });
    }
    let graph = input.graph;
    let mut tape = Tape::new();
    let theta = tape.param(params.conv.theta.clone());
    let heads1: Vec<HeadVars> = params.layer1.iter().map(|h| HeadVars::register(&mut tape, h)).collect();
    let head2 = HeadVars::register(&mut tape, &params.layer2);

    let projected = tape.const_matmul(&input.features, theta)?;
    let x = tape.propagate(projected, graph, Propagation::VertexToEdge)?;
    let e = tape.propagate(x, graph, Propagation::EdgeToVertex)?;

    let (x1, layer1) = multi_head_on_tape(&mut tape, graph, x, e, &heads1, cfg)?;
    let e1 = tape.propagate(x1, graph, Propagation::EdgeToVertex)?;
    let (logits, layer2) = da_head_on_tape(&mut tape, graph, x1, e1, head2, cfg)?;
    let probs = tape.row_softmax(logits)?;
    Ok(ForwardPass {
        tape,
        logits,
        probs,
        layer1,
        layer2,
    })
}

/// Expands per-incidence coefficients into a dense matrix: `n×m` for
/// edge-major (vertex attention), `m×n` for node-major (hyperedge attention).
pub fn coefficient_matrix(graph: &HyperGraph, grouping: Grouping, coe: &Matrix) -> Matrix {
    let (ptr, members) = graph.groups(grouping);
    let (n, m) = (graph.node_count(), graph.edge_count());
    let mut out = match grouping {
        Grouping::ByEdge => Matrix::zeros(n, m),
        Grouping::ByNode => Matrix::zeros(m, n),
    };
    // member-major rows: COE_X(i, k) for edge groups, COE_E(k, i) for node groups
    for g in 0..ptr.len() - 1 {
        for p in ptr[g]..ptr[g + 1] {
            out[(members[p], g)] = coe.as_slice()[p];
        }
    }
    out
}

/// `X = D_e^{-1/2} Hᵀ D_v^{-1/2} X₀ Θ`.
pub fn hgconv_forward(x0: &Matrix, graph: &HyperGraph, theta: &Matrix) -> Result<Matrix> {
    graph.ensure_square()?;
    let projected = x0.matmul(theta)?;
    graph.propagate(Propagation::VertexToEdge, &projected)
}

/// `E = D_v^{-1/2} H D_e^{-1/2} X`.
pub fn hyperedge_embed(x: &Matrix, graph: &HyperGraph) -> Result<Matrix> {
    graph.ensure_square()?;
    graph.propagate(Propagation::EdgeToVertex, x)
}

/// Vertex attention and aggregation with a given normalized node density.
/// Returns the dense `n×m` coefficient matrix and `Ẽ = ELU(COE_Xᵀ WX)`.
pub fn vertex_aggregation(
    wx: &Matrix,
    we: &Matrix,
    alpha_x: &Matrix,
    node_bias: &[f64],
    graph: &HyperGraph,
    cfg: &AttentionConfig,
) -> Result<(Matrix, Matrix)> {
    check_len(node_bias, graph.node_count(), "node density")?;
    let mut tape = Tape::new();
    let wx = tape.constant(wx.clone());
    let we = tape.constant(we.clone());
    let alpha = tape.constant(alpha_x.clone());
    let scores = vertex_scores(&mut tape, graph, wx, we, alpha, cfg.leaky_slope)?;
    let (coe, agg) = attend(&mut tape, graph, Grouping::ByEdge, scores, node_bias, wx)?;
    let e_tilde = tape.elu(agg, cfg.elu_alpha)?;
    Ok((
        coefficient_matrix(graph, Grouping::ByEdge, tape.value(coe)),
        tape.value(e_tilde).clone(),
    ))
}

/// Hyperedge attention and aggregation with a given normalized hyperedge
/// density. Returns the dense `m×n` coefficient matrix and
/// `X̃ = ELU(COE_Eᵀ Ẽ)`.
pub fn hyperedge_aggregation(
    wx: &Matrix,
    e_tilde: &Matrix,
    alpha_e: &Matrix,
    edge_bias: &[f64],
    graph: &HyperGraph,
    cfg: &AttentionConfig,
) -> Result<(Matrix, Matrix)> {
    check_len(edge_bias, graph.edge_count(), "hyperedge density")?;
    let mut tape = Tape::new();
    let wx = tape.constant(wx.clone());
    let et = tape.constant(e_tilde.clone());
    let alpha = tape.constant(alpha_e.clone());
    let scores = hyperedge_scores(&mut tape, graph, wx, et, alpha, cfg.leaky_slope)?;
    let (coe, agg) = attend(&mut tape, graph, Grouping::ByNode, scores, edge_bias, et)?;
    let x_tilde = tape.elu(agg, cfg.elu_alpha)?;
    Ok((
        coefficient_matrix(graph, Grouping::ByNode, tape.value(coe)),
        tape.value(x_tilde).clone(),
    ))
}

fn check_len(v: &[f64], n: usize, what: &'static str) -> Result<()> {
    if v.len() != n {
        return Err(Error::ShapeMismatch {
            context: what,
            expected: format!("{n} values"),
            actual: format!("{}", v.len()),
        });
    }
    Ok(())
}

/// One density-aware attention layer (single head) on plain matrices.
pub fn da_layer_forward(
    x: &Matrix,
    e: &Matrix,
    graph: &HyperGraph,
    head: &DaAttentionHead,
    cfg: &AttentionConfig,
) -> Result<Matrix> {
    multi_head_forward(x, e, graph, std::slice::from_ref(head), cfg)
}

/// Several heads on plain matrices, outputs concatenated in head order.
pub fn multi_head_forward(
    x: &Matrix,
    e: &Matrix,
    graph: &HyperGraph,
    heads: &[DaAttentionHead],
    cfg: &AttentionConfig,
) -> Result<Matrix> {
    if x.rows() != graph.node_count() || e.rows() != graph.edge_count() {
        return Err(Error::ShapeMismatch {
            context: "attention layer input",
            expected: format!("{} node rows and {} edge rows", graph.node_count(), graph.edge_count()),
            actual: format!("{} and {}", x.shape_str(), e.shape_str()),
        });
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let ev = tape.constant(e.clone());
    let vars: Vec<HeadVars> = heads.iter().map(|h| HeadVars::register(&mut tape, h)).collect();
    let (out, _) = multi_head_on_tape(&mut tape, graph, xv, ev, &vars, cfg)?;
    Ok(tape.value(out).clone())
}

/// Full model on plain matrices: class probabilities, `n×c`.
pub fn model_forward(
    x0: &Matrix,
    graph: &HyperGraph,
    params: &DaHgnnParams,
    cfg: &AttentionConfig,
) -> Result<Matrix> {
    let input = ModelInput::new(x0, graph)?;
    let pass = model_forward_on_tape(&input, params, cfg)?;
    Ok(pass.probs().clone())
}
