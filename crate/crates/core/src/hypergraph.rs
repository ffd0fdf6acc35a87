//! kNN hypergraph construction and incidence queries.
//!
//! Every node spawns one hyperedge made of itself and its `k` nearest
//! neighbours under Euclidean distance, so a constructed graph always has
//! as many hyperedges as nodes. Distance ties go to the lower node index.
//!
//! Incidence is stored twice in CSR form: members per hyperedge and
//! hyperedges per node. Both lists are sorted, which fixes the order of
//! every reduction over a group and keeps results bitwise reproducible.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Default neighbourhood size used for every benchmark configuration.
pub const DEFAULT_K: usize = 10;

/// Which side of the incidence owns a softmax / aggregation group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// One group per hyperedge; members are the nodes it connects.
    ByEdge,
    /// One group per node; members are the hyperedges containing it.
    ByNode,
}

/// The two normalized incidence operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// `D_e^{-1/2} Hᵀ D_v^{-1/2}`: node-indexed rows in, edge-indexed rows out.
    VertexToEdge,
    /// `D_v^{-1/2} H D_e^{-1/2}`: edge-indexed rows in, node-indexed rows out.
    EdgeToVertex,
}

impl Propagation {
    pub fn transpose(self) -> Self {
        match self {
            Propagation::VertexToEdge => Propagation::EdgeToVertex,
            Propagation::EdgeToVertex => Propagation::VertexToEdge,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGraph {
    n: usize,
    edge_ptr: Vec<usize>,
    edge_nodes: Vec<usize>,
    node_ptr: Vec<usize>,
    node_edges: Vec<usize>,
    neighbor_ptr: Vec<usize>,
    neighbor_idx: Vec<usize>,
    seed_of_edge: Vec<usize>,
    dv_inv_sqrt: Vec<f64>,
    de_inv_sqrt: Vec<f64>,
}

impl HyperGraph {
    /// Builds a hypergraph from explicit member lists.
    ///
    /// The first listed member of each edge is recorded as its seed. Edges
    /// must be non-empty without repeated members, and every node must
    /// belong to at least one edge.
    pub fn from_edges(n: usize, edges: &[Vec<usize>]) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("hypergraph needs at least one node"));
        }
        let mut edge_ptr = Vec::with_capacity(edges.len() + 1);
        let mut edge_nodes = Vec::new();
        let mut seed_of_edge = Vec::with_capacity(edges.len());
        edge_ptr.push(0);
        for (e, members) in edges.iter().enumerate() {
            let Some(&seed) = members.first() else {
                return Err(Error::invalid(format!("hyperedge {e} is empty")));
            };
            let mut sorted = members.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("hyperedge {e} repeats a member")));
            }
            if let Some(&bad) = sorted.last().filter(|&&v| v >= n) {
                return Err(Error::OutOfRange {
                    what: "node",
                    index: bad,
                    len: n,
                });
            }
            seed_of_edge.push(seed);
            edge_nodes.extend_from_slice(&sorted);
            edge_ptr.push(edge_nodes.len());
        }

        let mut counts = vec![0usize; n];
        for &v in &edge_nodes {
            counts[v] += 1;
        }
        if let Some(lonely) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("node {lonely} belongs to no hyperedge")));
        }
        let mut node_ptr = Vec::with_capacity(n + 1);
        node_ptr.push(0);
        for c in &counts {
            node_ptr.push(node_ptr.last().unwrap() + c);
        }
        let mut fill = node_ptr[..n].to_vec();
        let mut node_edges = vec![0usize; edge_nodes.len()];
        // edges are visited in increasing order, so each node's list is sorted
        for e in 0..edges.len() {
            for &v in &edge_nodes[edge_ptr[e]..edge_ptr[e + 1]] {
                node_edges[fill[v]] = e;
                fill[v] += 1;
            }
        }

        let mut neighbor_ptr = Vec::with_capacity(n + 1);
        let mut neighbor_idx = Vec::new();
        neighbor_ptr.push(0);
        let mut seen = vec![usize::MAX; n];
        for i in 0..n {
            let start = neighbor_idx.len();
            for &e in &node_edges[node_ptr[i]..node_ptr[i + 1]] {
                for &j in &edge_nodes[edge_ptr[e]..edge_ptr[e + 1]] {
                    if j != i && seen[j] != i {
                        seen[j] = i;
                        neighbor_idx.push(j);
                    }
                }
            }
            neighbor_idx[start..].sort_unstable();
            neighbor_ptr.push(neighbor_idx.len());
        }

        let dv_inv_sqrt = counts.iter().map(|&c| 1.0 / (c as f64).sqrt()).collect();
        let de_inv_sqrt = (0..edges.len())
            .map(|e| 1.0 / ((edge_ptr[e + 1] - edge_ptr[e]) as f64).sqrt())
            .collect();

        Ok(Self {
            n,
            edge_ptr,
            edge_nodes,
            node_ptr,
            node_edges,
            neighbor_ptr,
            neighbor_idx,
            seed_of_edge,
            dv_inv_sqrt,
            de_inv_sqrt,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_ptr.len() - 1
    }

    /// Number of (node, hyperedge) incidences.
    pub fn incidence_count(&self) -> usize {
        self.edge_nodes.len()
    }

    pub fn edge_members(&self, e: usize) -> &[usize] {
        &self.edge_nodes[self.edge_ptr[e]..self.edge_ptr[e + 1]]
    }

    pub fn node_edges(&self, i: usize) -> &[usize] {
        &self.node_edges[self.node_ptr[i]..self.node_ptr[i + 1]]
    }

    pub fn seed_of_edge(&self, e: usize) -> usize {
        self.seed_of_edge[e]
    }

    pub fn contains(&self, node: usize, edge: usize) -> bool {
        self.edge_members(edge).binary_search(&node).is_ok()
    }

    pub fn vertex_degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.node_edges(i).len()).collect()
    }

    pub fn hyperedge_degrees(&self) -> Vec<usize> {
        (0..self.edge_count()).map(|e| self.edge_members(e).len()).collect()
    }

    pub fn degrees(&self) -> (Vec<usize>, Vec<usize>) {
        (self.vertex_degrees(), self.hyperedge_degrees())
    }

    /// Nodes sharing at least one hyperedge with `i`, excluding `i`, ascending.
    pub fn node_neighbors(&self, i: usize) -> Result<&[usize]> {
        if i >= self.n {
            return Err(Error::OutOfRange {
                what: "node",
                index: i,
                len: self.n,
            });
        }
        Ok(&self.neighbor_idx[self.neighbor_ptr[i]..self.neighbor_ptr[i + 1]])
    }

    pub(crate) fn neighbors_unchecked(&self, i: usize) -> &[usize] {
        &self.neighbor_idx[self.neighbor_ptr[i]..self.neighbor_ptr[i + 1]]
    }

    /// Group pointers and member indices for the given grouping.
    ///
    /// Incidence `p` in `ptr[g]..ptr[g+1]` pairs owner `g` with `members[p]`.
    pub fn groups(&self, grouping: Grouping) -> (&[usize], &[usize]) {
        match grouping {
            Grouping::ByEdge => (&self.edge_ptr, &self.edge_nodes),
            Grouping::ByNode => (&self.node_ptr, &self.node_edges),
        }
    }

    pub fn group_count(&self, grouping: Grouping) -> usize {
        self.groups(grouping).0.len() - 1
    }

    /// Dense `n×m` incidence matrix `H`.
    pub fn incidence_dense(&self) -> Matrix {
        let mut h = Matrix::zeros(self.n, self.edge_count());
        for e in 0..self.edge_count() {
            for &i in self.edge_members(e) {
                h[(i, e)] = 1.0;
            }
        }
        h
    }

    pub fn ensure_square(&self) -> Result<()> {
        if self.n != self.edge_count() {
            return Err(Error::UnsupportedStructure(format!(
                "hypergraph convolution needs as many hyperedges as nodes, got n={} m={}",
                self.n,
                self.edge_count()
            )));
        }
        Ok(())
    }

    /// Applies one of the normalized incidence operators to the rows of `x`.
    pub fn propagate(&self, dir: Propagation, x: &Matrix) -> Result<Matrix> {
        let (in_rows, out_rows) = match dir {
            Propagation::VertexToEdge => (self.n, self.edge_count()),
            Propagation::EdgeToVertex => (self.edge_count(), self.n),
        };
        if x.rows() != in_rows {
            return Err(Error::ShapeMismatch {
                context: "propagate",
                expected: format!("{in_rows} rows"),
                actual: x.shape_str(),
            });
        }
        let mut out = Matrix::zeros(out_rows, x.cols());
        match dir {
            Propagation::VertexToEdge => {
                for e in 0..out_rows {
                    let dst = out.row_mut(e);
                    for &i in &self.edge_nodes[self.edge_ptr[e]..self.edge_ptr[e + 1]] {
                        let w = self.dv_inv_sqrt[i];
                        for (d, s) in dst.iter_mut().zip(x.row(i)) {
                            *d += w * s;
                        }
                    }
                    let scale = self.de_inv_sqrt[e];
                    dst.iter_mut().for_each(|d| *d *= scale);
                }
            }
            Propagation::EdgeToVertex => {
                for i in 0..out_rows {
                    let dst = out.row_mut(i);
                    for &e in &self.node_edges[self.node_ptr[i]..self.node_ptr[i + 1]] {
                        let w = self.de_inv_sqrt[e];
                        for (d, s) in dst.iter_mut().zip(x.row(e)) {
                            *d += w * s;
                        }
                    }
                    let scale = self.dv_inv_sqrt[i];
                    dst.iter_mut().for_each(|d| *d *= scale);
                }
            }
        }
        Ok(out)
    }

    /// Debug text form: one `edge_id: member,member,...` line per hyperedge.
    pub fn to_incidence_text(&self) -> String {
        let mut s = String::new();
        for e in 0..self.edge_count() {
            let _ = write!(s, "{e}:");
            for (j, v) in self.edge_members(e).iter().enumerate() {
                let sep = if j == 0 { " " } else { "," };
                let _ = write!(s, "{sep}{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_incidence(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_incidence_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Parses the debug text form back. Members are read as written, so the
    /// recorded seed is the smallest member rather than the original seed.
    pub fn read_incidence(path: &Path, n: usize) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line
                .split_once(':')
                .ok_or_else(|| parse_err("missing ':'".into()))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad edge id {id:?}")))?;
            if id != edges.len() {
                return Err(parse_err(format!("expected edge id {}, got {id}", edges.len())));
            }
            let members = rest
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(format!("bad member {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            edges.push(members);
        }
        Self::from_edges(n, &edges)
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    acc.iter().sum::<f64>() + tail
}

/// Full symmetric matrix of Euclidean distances between the rows of `x`.
pub fn pairwise_euclidean(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid(format!("pairwise distances need n >= 2, got {n}")));
    }
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(x.row(i), x.row(j)).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Builds the kNN hypergraph: hyperedge `i` is node `i` plus its `k`
/// nearest other nodes.
pub fn build_knn_hypergraph(x: &Matrix, k: usize) -> Result<HyperGraph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!(
            "k must lie in 1..={} for {n} nodes, got {k}",
            n.saturating_sub(1)
        )));
    }
    // Query rows are processed in blocks so that each streamed row of `x`
    // is reused by the whole block while the block stays in cache.
    const BLOCK: usize = 32;
    let mut edges = Vec::with_capacity(n);
    let mut cands: Vec<Vec<(f64, usize)>> = (0..BLOCK.min(n)).map(|_| Vec::with_capacity(n)).collect();
    let by_dist_then_index =
        |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for start in (0..n).step_by(BLOCK) {
        let block = start..(start + BLOCK).min(n);
        for c in cands.iter_mut() {
            c.clear();
        }
        for j in 0..n {
            let xj = x.row(j);
            for (i, cand) in block.clone().zip(cands.iter_mut()) {
                if i != j {
                    cand.push((squared_distance(x.row(i), xj), j));
                }
            }
        }
        for (i, cand) in block.zip(cands.iter_mut()) {
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist_then_index);
            }
            let nearest = &mut cand[..k];
            nearest.sort_unstable_by(by_dist_then_index);
            let mut members = Vec::with_capacity(k + 1);
            members.push(i);
            members.extend(nearest.iter().map(|&(_, j)| j));
            edges.push(members);
        }
    }
    HyperGraph::from_edges(n, &edges)
}
