//! Reverse-mode differentiation over matrix-valued operations.
//!
//! A [`Tape`] records every primitive applied during a forward pass along
//! with its value. [`Tape::backward`] walks the record in reverse and
//! returns one gradient per parameter leaf; [`Tape::replay`] re-evaluates
//! the recorded program, optionally with new parameter values, using the
//! same kernels as the original pass, so an unchanged replay is bitwise
//! identical.
//!
//! Besides dense products and activations, the tape knows the sparse
//! incidence primitives attention needs: per-incidence scores, grouped
//! softmax, and grouped weighted aggregation. Additive bias constants
//! ([`Tape::add_const`]) stay frozen under replay, which is how a
//! stop-gradient quantity is expressed.

use crate::error::{Error, Result};
use crate::hypergraph::{Grouping, HyperGraph, Propagation};
use crate::numerics::activations::{elu, elu_grad, leaky_relu, leaky_relu_grad};
use crate::numerics::softmax::{row_softmax, segment_softmax};
use crate::numerics::{ConstOperand, Matrix};

/// Lower clamp on probabilities entering a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<'a> {
    Param,
    Constant,
    MatMul(Var, Var),
    ConstMatMul(&'a ConstOperand, Var),
    SliceRows {
        src: Var,
        start: usize,
        len: usize,
    },
    Propagate {
        src: Var,
        graph: &'a HyperGraph,
        dir: Propagation,
    },
    IncidenceScore {
        owner: Var,
        member: Var,
        graph: &'a HyperGraph,
        grouping: Grouping,
    },
    AddConst {
        src: Var,
        bias: Matrix,
    },
    LeakyRelu {
        src: Var,
        slope: f64,
    },
    Elu {
        src: Var,
        alpha: f64,
    },
    GroupSoftmax {
        src: Var,
        graph: &'a HyperGraph,
        grouping: Grouping,
    },
    GroupAggregate {
        coef: Var,
        src: Var,
        graph: &'a HyperGraph,
        grouping: Grouping,
    },
    ConcatCols(Vec<Var>),
    RowSoftmax(Var),
    CrossEntropy {
        probs: Var,
        targets: Vec<(usize, usize)>,
    },
    Sum(Var),
}

impl Op<'_> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Param | Op::Constant => vec![],
            Op::MatMul(a, b) => vec![*a, *b],
            Op::ConstMatMul(_, b) => vec![*b],
            Op::SliceRows { src, .. }
            | Op::Propagate { src, .. }
            | Op::AddConst { src, .. }
            | Op::LeakyRelu { src, .. }
            | Op::Elu { src, .. }
            | Op::GroupSoftmax { src, .. }
            | Op::RowSoftmax(src)
            | Op::Sum(src)
            | Op::CrossEntropy { probs: src, .. } => vec![*src],
            Op::IncidenceScore { owner, member, .. } => vec![*owner, *member],
            Op::GroupAggregate { coef, src, .. } => vec![*coef, *src],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

/// The computation record of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<'a> {
    ops: Vec<Op<'a>>,
    values: Vec<Matrix>,
    needs_grad: Vec<bool>,
    params: Vec<Var>,
}

/// Gradients of a scalar with respect to every parameter leaf, in the
/// order the parameters were registered.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Var>,
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.params.iter().position(|&p| p == v).map(|i| &self.grads[i])
    }

    pub fn into_vec(self) -> Vec<Matrix> {
        self.grads
    }

    pub fn as_slice(&self) -> &[Matrix] {
        &self.grads
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    /// Parameter leaves in registration order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn push(&mut self, op: Op<'a>) -> Result<Var> {
        let value = evaluate(&op, &self.values)?;
        Ok(self.push_value(op, value))
    }

    fn push_value(&mut self, op: Op<'a>, value: Matrix) -> Var {
        let needs = match op {
            Op::Param => true,
            Op::Constant => false,
            _ => op.inputs().iter().any(|v| self.needs_grad[v.0]),
        };
        self.ops.push(op);
        self.values.push(value);
        self.needs_grad.push(needs);
        Var(self.ops.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push_value(Op::Param, value);
        self.params.push(v);
        v
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_value(Op::Constant, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    /// `lhs · b` for a borrowed constant `lhs`.
    pub fn const_matmul(&mut self, lhs: &'a ConstOperand, b: Var) -> Result<Var> {
        self.push(Op::ConstMatMul(lhs, b))
    }

    pub fn slice_rows(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::SliceRows { src, start, len })
    }

    pub fn propagate(&mut self, src: Var, graph: &'a HyperGraph, dir: Propagation) -> Result<Var> {
        self.push(Op::Propagate { src, graph, dir })
    }

    /// One score per incidence: `owner[g] + member[members[p]]`, as a column.
    ///
    /// `owner` has one row per group and `member` one row per member index;
    /// both must be single columns.
    pub fn incidence_score(
        &mut self,
        owner: Var,
        member: Var,
        graph: &'a HyperGraph,
        grouping: Grouping,
    ) -> Result<Var> {
        self.push(Op::IncidenceScore {
            owner,
            member,
            graph,
            grouping,
        })
    }

    /// `src + bias` where `bias` is held constant, including under replay.
    pub fn add_const(&mut self, src: Var, bias: Matrix) -> Result<Var> {
        self.push(Op::AddConst { src, bias })
    }

    pub fn leaky_relu(&mut self, src: Var, slope: f64) -> Result<Var> {
        self.push(Op::LeakyRelu { src, slope })
    }

    pub fn elu(&mut self, src: Var, alpha: f64) -> Result<Var> {
        self.push(Op::Elu { src, alpha })
    }

    /// Softmax of a per-incidence column within each group.
    pub fn group_softmax(&mut self, src: Var, graph: &'a HyperGraph, grouping: Grouping) -> Result<Var> {
        self.push(Op::GroupSoftmax {
            src,
            graph,
            grouping,
        })
    }

    /// `out[g] = Σ_{p in g} coef[p] · src[members[p]]`.
    pub fn group_aggregate(
        &mut self,
        coef: Var,
        src: Var,
        graph: &'a HyperGraph,
        grouping: Grouping,
    ) -> Result<Var> {
        self.push(Op::GroupAggregate {
            coef,
            src,
            graph,
            grouping,
        })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.push(Op::ConcatCols(parts.to_vec()))
    }

    pub fn row_softmax(&mut self, src: Var) -> Result<Var> {
        self.push(Op::RowSoftmax(src))
    }

    /// `-Σ ln max(probs[row, class], 1e-12)` over the `(row, class)` targets.
    pub fn cross_entropy(&mut self, probs: Var, targets: Vec<(usize, usize)>) -> Result<Var> {
        self.push(Op::CrossEntropy { probs, targets })
    }

    pub fn sum(&mut self, src: Var) -> Result<Var> {
        self.push(Op::Sum(src))
    }

    /// Recomputes every non-leaf value in recorded order. `params`, when
    /// given, replaces the parameter leaves (registration order).
    pub fn replay(&mut self, params: Option<&[Matrix]>) -> Result<()> {
        if let Some(new) = params {
            if new.len() != self.params.len() {
                return Err(Error::invalid(format!(
                    "replay: {} parameter values for {} parameters",
                    new.len(),
                    self.params.len()
                )));
            }
            for (&v, m) in self.params.iter().zip(new) {
                if self.values[v.0].shape() != m.shape() {
                    return Err(Error::ShapeMismatch {
                        context: "replay",
                        expected: self.values[v.0].shape_str(),
                        actual: m.shape_str(),
                    });
                }
                self.values[v.0] = m.clone();
            }
        }
        for i in 0..self.ops.len() {
            if matches!(self.ops[i], Op::Param | Op::Constant) {
                continue;
            }
            let value = evaluate(&self.ops[i], &self.values)?;
            self.values[i] = value;
        }
        Ok(())
    }

    /// Gradient of the scalar `loss` with respect to every parameter.
    /// Parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.values[loss.0].shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got {}",
                self.values[loss.0].shape_str()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.needs_grad[i] {
                continue;
            }
            let op = &self.ops[i];
            if matches!(op, Op::Param) {
                grads[i] = Some(g);
                continue;
            }
            for (input, contribution) in self.local_grads(op, i, &g) {
                if !self.needs_grad[input.0] {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        let out = self
            .params
            .iter()
            .map(|&p| {
                if p.0 <= loss.0 {
                    if let Some(g) = grads[p.0].take() {
                        return g;
                    }
                }
                let v = &self.values[p.0];
                Matrix::zeros(v.rows(), v.cols())
            })
            .collect();
        Ok(Gradients {
            params: self.params.clone(),
            grads: out,
        })
    }

    /// Vector-Jacobian products of node `i` for each of its inputs.
    fn local_grads(&self, op: &Op<'a>, i: usize, g: &Matrix) -> Vec<(Var, Matrix)> {
        let val = |v: Var| &self.values[v.0];
        let out = &self.values[i];
        match op {
            Op::Param | Op::Constant => vec![],
            Op::MatMul(a, b) => {
                let mut r = Vec::with_capacity(2);
                if self.needs_grad[a.0] {
                    r.push((*a, g.matmul_tr(val(*b)).expect("recorded shapes")));
                }
                if self.needs_grad[b.0] {
                    r.push((*b, val(*a).tr_matmul(g).expect("recorded shapes")));
                }
                r
            }
            Op::ConstMatMul(lhs, b) => vec![(*b, lhs.tr_matmul(g))],
            Op::SliceRows { src, start, len } => {
                let s = val(*src);
                let mut d = Matrix::zeros(s.rows(), s.cols());
                let w = s.cols();
                d.as_mut_slice()[start * w..(start + len) * w].copy_from_slice(g.as_slice());
                vec![(*src, d)]
            }
            Op::Propagate { src, graph, dir } => {
                vec![(*src, graph.propagate(dir.transpose(), g).expect("recorded shapes"))]
            }
            Op::IncidenceScore {
                owner,
                member,
                graph,
                grouping,
            } => {
                let (ptr, members) = graph.groups(*grouping);
                let mut d_owner = Matrix::zeros(val(*owner).rows(), 1);
                let mut d_member = Matrix::zeros(val(*member).rows(), 1);
                let gs = g.as_slice();
                for grp in 0..ptr.len() - 1 {
                    for p in ptr[grp]..ptr[grp + 1] {
                        d_owner.as_mut_slice()[grp] += gs[p];
                        d_member.as_mut_slice()[members[p]] += gs[p];
                    }
                }
                vec![(*owner, d_owner), (*member, d_member)]
            }
            Op::AddConst { src, .. } => vec![(*src, g.clone())],
            Op::LeakyRelu { src, slope } => {
                let x = val(*src).as_slice();
                let d = Matrix::new(
                    g.rows(),
                    g.cols(),
                    g.as_slice()
                        .iter()
                        .zip(x)
                        .map(|(gv, &xv)| gv * leaky_relu_grad(xv, *slope))
                        .collect(),
                )
                .expect("same shape");
                vec![(*src, d)]
            }
            Op::Elu { src, alpha } => {
                let x = val(*src).as_slice();
                let d = Matrix::new(
                    g.rows(),
                    g.cols(),
                    g.as_slice()
                        .iter()
                        .zip(x)
                        .map(|(gv, &xv)| gv * elu_grad(xv, *alpha))
                        .collect(),
                )
                .expect("same shape");
                vec![(*src, d)]
            }
            Op::GroupSoftmax {
                src,
                graph,
                grouping,
            } => {
                let (ptr, _) = graph.groups(*grouping);
                let y = out.as_slice();
                let gs = g.as_slice();
                let mut d = Matrix::zeros(out.rows(), 1);
                let ds = d.as_mut_slice();
                for grp in 0..ptr.len() - 1 {
                    let range = ptr[grp]..ptr[grp + 1];
                    let dot: f64 = range.clone().map(|p| y[p] * gs[p]).sum();
                    for p in range {
                        ds[p] = y[p] * (gs[p] - dot);
                    }
                }
                vec![(*src, d)]
            }
            Op::GroupAggregate {
                coef,
                src,
                graph,
                grouping,
            } => {
                let (ptr, members) = graph.groups(*grouping);
                let c = val(*coef).as_slice();
                let s = val(*src);
                let mut d_coef = Matrix::zeros(c.len(), 1);
                let mut d_src = Matrix::zeros(s.rows(), s.cols());
                for grp in 0..ptr.len() - 1 {
                    let gr = g.row(grp);
                    for p in ptr[grp]..ptr[grp + 1] {
                        let m = members[p];
                        d_coef.as_mut_slice()[p] = dot(gr, s.row(m));
                        for (d, gv) in d_src.row_mut(m).iter_mut().zip(gr) {
                            *d += c[p] * gv;
                        }
                    }
                }
                vec![(*coef, d_coef), (*src, d_src)]
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                let mut r = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = val(p).cols();
                    let d = Matrix::from_fn(g.rows(), w, |row, col| g[(row, offset + col)]);
                    offset += w;
                    r.push((p, d));
                }
                r
            }
            Op::RowSoftmax(src) => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dt = dot(y, gr);
                    for ((dv, yv), gv) in d.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *dv = yv * (gv - dt);
                    }
                }
                vec![(*src, d)]
            }
            Op::CrossEntropy { probs, targets } => {
                let z = val(*probs);
                let scale = g.item();
                let mut d = Matrix::zeros(z.rows(), z.cols());
                for &(r, c) in targets {
                    let p = z[(r, c)];
                    if p > LOG_CLAMP {
                        d[(r, c)] -= scale / p;
                    }
                }
                vec![(*probs, d)]
            }
            Op::Sum(src) => {
                let s = val(*src);
                vec![(*src, Matrix::filled(s.rows(), s.cols(), g.item()))]
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn expect_column(m: &Matrix, rows: usize, context: &'static str) -> Result<()> {
    if m.shape() != (rows, 1) {
        return Err(Error::ShapeMismatch {
            context,
            expected: format!("{rows}x1"),
            actual: m.shape_str(),
        });
    }
    Ok(())
}

fn evaluate(op: &Op<'_>, values: &[Matrix]) -> Result<Matrix> {
    let val = |v: &Var| &values[v.0];
    match op {
        Op::Param | Op::Constant => unreachable!("leaves are never evaluated"),
        Op::MatMul(a, b) => val(a).matmul(val(b)),
        Op::ConstMatMul(lhs, b) => lhs.matmul(val(b)),
        Op::SliceRows { src, start, len } => {
            let s = val(src);
            if start + len > s.rows() {
                return Err(Error::OutOfRange {
                    what: "row slice end",
                    index: start + len,
                    len: s.rows(),
                });
            }
            Ok(s.slice_rows(*start, *len))
        }
        Op::Propagate { src, graph, dir } => graph.propagate(*dir, val(src)),
        Op::IncidenceScore {
            owner,
            member,
            graph,
            grouping,
        } => {
            let (ptr, members) = graph.groups(*grouping);
            let other = match grouping {
                Grouping::ByEdge => graph.node_count(),
                Grouping::ByNode => graph.edge_count(),
            };
            let (o, m) = (val(owner), val(member));
            expect_column(o, ptr.len() - 1, "incidence_score owner")?;
            expect_column(m, other, "incidence_score member")?;
            let (os, ms) = (o.as_slice(), m.as_slice());
            let mut out = Vec::with_capacity(members.len());
            for grp in 0..ptr.len() - 1 {
                for p in ptr[grp]..ptr[grp + 1] {
                    out.push(os[grp] + ms[members[p]]);
                }
            }
            Ok(Matrix::column(out))
        }
        Op::AddConst { src, bias } => {
            let s = val(src);
            if s.shape() != bias.shape() {
                return Err(Error::ShapeMismatch {
                    context: "add_const",
                    expected: s.shape_str(),
                    actual: bias.shape_str(),
                });
            }
            let mut out = s.clone();
            out.add_assign(bias);
            Ok(out)
        }
        Op::LeakyRelu { src, slope } => Ok(val(src).map(|x| leaky_relu(x, *slope))),
        Op::Elu { src, alpha } => Ok(val(src).map(|x| elu(x, *alpha))),
        Op::GroupSoftmax {
            src,
            graph,
            grouping,
        } => {
            let (ptr, members) = graph.groups(*grouping);
            let mut out = val(src).clone();
            expect_column(&out, members.len(), "group_softmax")?;
            segment_softmax(out.as_mut_slice(), ptr)?;
            Ok(out)
        }
        Op::GroupAggregate {
            coef,
            src,
            graph,
            grouping,
        } => {
            let (ptr, members) = graph.groups(*grouping);
            let c = val(coef);
            let s = val(src);
            expect_column(c, members.len(), "group_aggregate coefficients")?;
            let src_rows = match grouping {
                Grouping::ByEdge => graph.node_count(),
                Grouping::ByNode => graph.edge_count(),
            };
            if s.rows() != src_rows {
                return Err(Error::ShapeMismatch {
                    context: "group_aggregate source",
                    expected: format!("{src_rows} rows"),
                    actual: s.shape_str(),
                });
            }
            let cs = c.as_slice();
            let mut out = Matrix::zeros(ptr.len() - 1, s.cols());
            for grp in 0..ptr.len() - 1 {
                let dst = out.row_mut(grp);
                for p in ptr[grp]..ptr[grp + 1] {
                    for (d, v) in dst.iter_mut().zip(s.row(members[p])) {
                        *d += cs[p] * v;
                    }
                }
            }
            Ok(out)
        }
        Op::ConcatCols(parts) => {
            let refs: Vec<&Matrix> = parts.iter().map(val).collect();
            Matrix::hcat(&refs)
        }
        Op::RowSoftmax(src) => Ok(row_softmax(val(src))),
        Op::CrossEntropy { probs, targets } => {
            let z = val(probs);
            let mut loss = 0.0;
            for &(r, c) in targets {
                if r >= z.rows() || c >= z.cols() {
                    return Err(Error::OutOfRange {
                        what: "cross-entropy target",
                        index: r.max(c),
                        len: z.rows().max(z.cols()),
                    });
                }
                loss -= z[(r, c)].max(LOG_CLAMP).ln();
            }
            Ok(Matrix::scalar(loss))
        }
        Op::Sum(src) => Ok(Matrix::scalar(val(src).sum())),
    }
}
