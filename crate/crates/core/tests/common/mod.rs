//! Straight-line reference implementations on nested `Vec`s. Nothing here
//! calls the library's numerics; graphs are read only through their edge
//! member lists.

#![allow(dead_code)]

use dahgnn::hypergraph::HyperGraph;
use dahgnn::layers::{DaAttentionHead, DaHgnnParams};
use dahgnn::numerics::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn from_dense(d: &Dense) -> Matrix {
    Matrix::from_rows(d).unwrap()
}

pub fn edges_of(g: &HyperGraph) -> Vec<Vec<usize>> {
    (0..g.edge_count()).map(|e| g.edge_members(e).to_vec()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols).map(|c| (0..inner).map(|t| row[t] * b[t][c]).sum()).collect()
        })
        .collect()
}

fn transpose(a: &Dense) -> Dense {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|c| a.iter().map(|r| r[c]).collect()).collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn incidence(n: usize, edges: &[Vec<usize>]) -> Dense {
    let mut h = vec![vec![0.0; edges.len()]; n];
    for (e, members) in edges.iter().enumerate() {
        for &i in members {
            h[i][e] = 1.0;
        }
    }
    h
}

fn diag_inv_sqrt(d: &[f64]) -> Dense {
    let n = d.len();
    (0..n)
        .map(|r| (0..n).map(|c| if r == c { 1.0 / d[r].sqrt() } else { 0.0 }).collect())
        .collect()
}

fn degrees(h: &Dense) -> (Vec<f64>, Vec<f64>) {
    let dv = h.iter().map(|r| r.iter().sum()).collect();
    let de = transpose(h).iter().map(|r| r.iter().sum()).collect();
    (dv, de)
}

/// `De^{-1/2} Hᵀ Dv^{-1/2} X0 Θ` as four dense products.
pub fn conv(x0: &Dense, edges: &[Vec<usize>], theta: &Dense) -> Dense {
    let h = incidence(x0.len(), edges);
    let (dv, de) = degrees(&h);
    let left = matmul(&matmul(&diag_inv_sqrt(&de), &transpose(&h)), &diag_inv_sqrt(&dv));
    matmul(&matmul(&left, x0), theta)
}

/// `Dv^{-1/2} H De^{-1/2} X`.
pub fn embed(x: &Dense, edges: &[Vec<usize>]) -> Dense {
    let h = incidence(x.len(), edges);
    let (dv, de) = degrees(&h);
    matmul(&matmul(&matmul(&diag_inv_sqrt(&dv), &h), &diag_inv_sqrt(&de)), x)
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot(u, v) / (nu * nv)
    }
}

/// Node densities by scanning every ordered pair and testing co-membership
/// against every edge.
pub fn node_density(feats: &Dense, edges: &[Vec<usize>], delta: f64) -> Vec<f64> {
    let n = feats.len();
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let neighbours = edges.iter().any(|e| e.contains(&i) && e.contains(&j));
                if neighbours {
                    let s = cosine(&feats[i], &feats[j]);
                    if s > delta {
                        total += s;
                    }
                }
            }
            total
        })
        .collect()
}

pub fn edge_density(node: &[f64], edges: &[Vec<usize>]) -> Vec<f64> {
    edges.iter().map(|e| e.iter().map(|&i| node[i]).sum()).collect()
}

pub fn normalize(rho: &[f64], attention_max: f64) -> Vec<f64> {
    let upper = attention_max.max(0.0);
    let lo = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo || upper == 0.0 {
        return vec![0.0; rho.len()];
    }
    rho.iter().map(|r| (r - lo) / (hi - lo) * upper).collect()
}

/// Normalized density biases of one head, which a finite-difference check
/// holds fixed.
#[derive(Debug, Clone)]
pub struct HeadBias {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadOut {
    pub out: Dense,
    pub bias: HeadBias,
    /// n×m, zero off the incidence.
    pub coe_x: Dense,
    /// m×n, zero off the incidence.
    pub coe_e: Dense,
    pub node_density: Vec<f64>,
    pub edge_density: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub delta: f64,
    pub slope: f64,
    pub density: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            delta: 0.4,
            slope: 0.2,
            density: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadWeights {
    pub w: Dense,
    pub alpha_x: Vec<f64>,
    pub alpha_e: Vec<f64>,
}

impl From<&DaAttentionHead> for HeadWeights {
    fn from(h: &DaAttentionHead) -> Self {
        Self {
            w: to_dense(&h.w),
            alpha_x: h.alpha_x.as_slice().to_vec(),
            alpha_e: h.alpha_e.as_slice().to_vec(),
        }
    }
}

/// One attention head, following the layer algorithm line by line.
pub fn head(
    x: &Dense,
    e: &Dense,
    edges: &[Vec<usize>],
    weights: &HeadWeights,
    cfg: OracleConfig,
    frozen: Option<&HeadBias>,
) -> HeadOut {
    let n = x.len();
    let m = edges.len();
    let wx = matmul(x, &weights.w);
    let we = matmul(e, &weights.w);
    let d = weights.w[0].len();
    let (ax_member, ax_edge) = weights.alpha_x.split_at(d);
    let (ae_edge, ae_node) = weights.alpha_e.split_at(d);

    let (rho_x, rho_e) = if cfg.density {
        let rx = node_density(&wx, edges, cfg.delta);
        let re = edge_density(&rx, edges);
        (rx, re)
    } else {
        (vec![0.0; n], vec![0.0; m])
    };

    // vertex attention
    let mut a_x = vec![vec![None; m]; n];
    let mut a_x_max = f64::NEG_INFINITY;
    for (k, members) in edges.iter().enumerate() {
        for &i in members {
            let s = leaky(dot(ax_member, &wx[i]) + dot(ax_edge, &we[k]), cfg.slope);
            a_x[i][k] = Some(s);
            a_x_max = a_x_max.max(s);
        }
    }
    let node_bias = match frozen {
        Some(f) => f.node.clone(),
        None if cfg.density => normalize(&rho_x, a_x_max),
        None => vec![0.0; n],
    };
    let mut coe_x = vec![vec![0.0; m]; n];
    for (k, members) in edges.iter().enumerate() {
        let z: f64 = members.iter().map(|&j| (a_x[j][k].unwrap() + node_bias[j]).exp()).sum();
        for &i in members {
            coe_x[i][k] = (a_x[i][k].unwrap() + node_bias[i]).exp() / z;
        }
    }
    let e_tilde: Dense = (0..m)
        .map(|k| {
            (0..d)
                .map(|t| elu((0..n).map(|i| coe_x[i][k] * wx[i][t]).sum()))
                .collect()
        })
        .collect();

    // hyperedge attention
    let mut a_e = vec![vec![None; n]; m];
    let mut a_e_max = f64::NEG_INFINITY;
    for (k, members) in edges.iter().enumerate() {
        for &i in members {
            let s = leaky(dot(ae_edge, &e_tilde[k]) + dot(ae_node, &wx[i]), cfg.slope);
            a_e[k][i] = Some(s);
            a_e_max = a_e_max.max(s);
        }
    }
    let edge_bias = match frozen {
        Some(f) => f.edge.clone(),
        None if cfg.density => normalize(&rho_e, a_e_max),
        None => vec![0.0; m],
    };
    let mut coe_e = vec![vec![0.0; n]; m];
    for i in 0..n {
        let containing: Vec<usize> = (0..m).filter(|&k| edges[k].contains(&i)).collect();
        let z: f64 = containing.iter().map(|&k| (a_e[k][i].unwrap() + edge_bias[k]).exp()).sum();
        for &k in &containing {
            coe_e[k][i] = (a_e[k][i].unwrap() + edge_bias[k]).exp() / z;
        }
    }
    let out: Dense = (0..n)
        .map(|i| {
            (0..d)
                .map(|t| elu((0..m).map(|k| coe_e[k][i] * e_tilde[k][t]).sum()))
                .collect()
        })
        .collect();

    HeadOut {
        out,
        bias: HeadBias {
            node: node_bias,
            edge: edge_bias,
        },
        coe_x,
        coe_e,
        node_density: rho_x,
        edge_density: rho_e,
    }
}

#[derive(Debug, Clone)]
pub struct ModelOut {
    pub logits: Dense,
    pub probs: Dense,
    /// Layer-one heads in order, then the output head.
    pub biases: Vec<HeadBias>,
}

/// The full model: convolution, embedding, multi-head layer, re-embedding,
/// output head, row softmax.
pub fn model(
    x0: &Dense,
    edges: &[Vec<usize>],
    params: &DaHgnnParams,
    cfg: OracleConfig,
    frozen: Option<&[HeadBias]>,
) -> ModelOut {
    let x = conv(x0, edges, &to_dense(&params.conv.theta));
    let e = embed(&x, edges);
    let mut biases = Vec::new();
    let mut x1: Dense = vec![Vec::new(); x.len()];
    for (s, h) in params.layer1.iter().enumerate() {
        let out = head(&x, &e, edges, &h.into(), cfg, frozen.map(|f| &f[s]));
        for (row, part) in x1.iter_mut().zip(&out.out) {
            row.extend_from_slice(part);
        }
        biases.push(out.bias);
    }
    let e1 = embed(&x1, edges);
    let last = head(
        &x1,
        &e1,
        edges,
        &(&params.layer2).into(),
        cfg,
        frozen.map(|f| &f[params.layer1.len()]),
    );
    biases.push(last.bias);
    let probs = last
        .out
        .iter()
        .map(|row| {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            row.iter().map(|v| (v - mx).exp() / z).collect()
        })
        .collect();
    ModelOut {
        logits: last.out,
        probs,
        biases,
    }
}

pub fn loss(probs: &Dense, targets: &[(usize, usize)]) -> f64 {
    targets.iter().map(|&(i, c)| -probs[i][c].max(1e-12).ln()).sum()
}
