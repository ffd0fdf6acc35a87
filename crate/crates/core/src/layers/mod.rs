//! The model: hypergraph convolution, density-aware attention heads,
//! multi-head composition and the full forward pass, plus checkpoints.

pub mod checkpoint;
pub mod forward;
pub mod params;

pub use forward::{
    coefficient_matrix, da_head_on_tape, da_layer_forward, hgconv_forward, hyperedge_aggregation,
    hyperedge_embed, model_forward, model_forward_on_tape, multi_head_forward, multi_head_on_tape,
    vertex_aggregation, AttentionConfig, ForwardPass, HeadTrace, HeadVars, ModelInput,
};
pub use params::{DaAttentionHead, DaHgnnParams, HGConvParams, ModelShape};
