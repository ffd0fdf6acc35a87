use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sub_seed, xavier_init, Matrix};

/// Layer widths of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub heads: usize,
    pub classes: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("heads", self.heads),
            ("classes", self.classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Weights of the hypergraph convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct HGConvParams {
    pub theta: Matrix,
}

/// One density-aware attention head: a shared projection `w` and the two
/// scoring vectors, each of length twice the projection width.
#[derive(Debug, Clone, PartialEq)]
pub struct DaAttentionHead {
    pub w: Matrix,
    pub alpha_x: Matrix,
    pub alpha_e: Matrix,
}

impl DaAttentionHead {
    pub fn new(w: Matrix, alpha_x: Matrix, alpha_e: Matrix) -> Result<Self> {
        let width = w.cols();
        for (name, a) in [("alpha_x", &alpha_x), ("alpha_e", &alpha_e)] {
            if a.shape() != (2 * width, 1) {
                return Err(Error::ShapeMismatch {
                    context: "DaAttentionHead",
                    expected: format!("{name} of shape {}x1", 2 * width),
                    actual: a.shape_str(),
                });
            }
        }
        Ok(Self { w, alpha_x, alpha_e })
    }

    pub fn init(input: usize, output: usize, seed: u64, prefix: &str) -> Result<Self> {
        Self::new(
            xavier_init(input, output, sub_seed(seed, &format!("{prefix}.w")))?,
            xavier_init(2 * output, 1, sub_seed(seed, &format!("{prefix}.alpha_x")))?,
            xavier_init(2 * output, 1, sub_seed(seed, &format!("{prefix}.alpha_e")))?,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DaHgnnParams {
    pub conv: HGConvParams,
    pub layer1: Vec<DaAttentionHead>,
    pub layer2: DaAttentionHead,
}

impl DaHgnnParams {
    /// Xavier-initialized parameters. Each tensor draws from its own named
    /// sub-seed of `seed`.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let theta = xavier_init(shape.input_dim, shape.hidden_dim, sub_seed(seed, "conv.theta"))?;
        let layer1 = (0..shape.heads)
            .map(|s| DaAttentionHead::init(shape.hidden_dim, shape.attn_dim, seed, &format!("layer1.head{s}")))
            .collect::<Result<Vec<_>>>()?;
        let layer2 = DaAttentionHead::init(shape.heads * shape.attn_dim, shape.classes, seed, "layer2")?;
        let params = Self {
            conv: HGConvParams { theta },
            layer1,
            layer2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            input_dim: self.conv.theta.rows(),
            hidden_dim: self.conv.theta.cols(),
            attn_dim: self.layer1.first().map_or(0, DaAttentionHead::output_dim),
            heads: self.layer1.len(),
            classes: self.layer2.output_dim(),
        }
    }

    /// Checks that widths chain `d₀ → hidden → heads·attn → classes`.
    pub fn validate(&self) -> Result<()> {
        let hidden = self.conv.theta.cols();
        let Some(first) = self.layer1.first() else {
            return Err(Error::invalid("the first attention layer needs at least one head"));
        };
        let attn = first.output_dim();
        for (s, h) in self.layer1.iter().enumerate() {
            if h.input_dim() != hidden || h.output_dim() != attn {
                return Err(Error::ShapeMismatch {
                    context: "layer1 head",
                    expected: format!("projection {hidden}x{attn}"),
                    actual: format!("head {s}: {}", h.w.shape_str()),
                });
            }
        }
        if self.layer2.input_dim() != self.layer1.len() * attn {
            return Err(Error::ShapeMismatch {
                context: "layer2",
                expected: format!("projection with {} rows", self.layer1.len() * attn),
                actual: self.layer2.w.shape_str(),
            });
        }
        Ok(())
    }

    /// Tensors with stable names, in the canonical order used by the
    /// optimizer, the tape and checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("conv.theta".to_string(), &self.conv.theta)];
        fn head(prefix: String, h: &DaAttentionHead) -> [(String, &Matrix); 3] {
            [
                (format!("{prefix}.w"), &h.w),
                (format!("{prefix}.alpha_x"), &h.alpha_x),
                (format!("{prefix}.alpha_e"), &h.alpha_e),
            ]
        }
        for (s, h) in self.layer1.iter().enumerate() {
            out.extend(head(format!("layer1.head{s}"), h));
        }
        out.extend(head("layer2".to_string(), &self.layer2));
        out
    }

    pub fn to_tensors(&self) -> Vec<Matrix> {
        self.named_tensors().into_iter().map(|(_, m)| m.clone()).collect()
    }

    /// Inverse of [`to_tensors`](Self::to_tensors) for a given head count.
    pub fn from_tensors(tensors: Vec<Matrix>, heads: usize) -> Result<Self> {
        if tensors.len() != 1 + 3 * (heads + 1) {
            return Err(Error::invalid(format!(
                "expected {} tensors for {heads} heads, got {}",
                1 + 3 * (heads + 1),
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let theta = it.next().unwrap();
        let mut next_head = || -> Result<DaAttentionHead> {
            let w = it.next().unwrap();
            let ax = it.next().unwrap();
            let ae = it.next().unwrap();
            DaAttentionHead::new(w, ax, ae)
        };
        let layer1 = (0..heads).map(|_| next_head()).collect::<Result<Vec<_>>>()?;
        let layer2 = next_head()?;
        let params = Self {
            conv: HGConvParams { theta },
            layer1,
            layer2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, m)| m.len()).sum()
    }
}
