//! Runs one density-aware attention head and shows how the density bias
//! shifts the vertex attention of a single hyperedge.
//!
//!     cargo run --release --example attention_layer

use dahgnn::data_io::synthetic_blobs;
use dahgnn::hypergraph::{build_knn_hypergraph, Grouping};
use dahgnn::layers::{
    coefficient_matrix, hyperedge_embed, model_forward_on_tape, AttentionConfig, DaHgnnParams,
    ModelInput, ModelShape,
};

fn main() -> dahgnn::Result<()> {
    let data = synthetic_blobs(2, 10, 6, 2.0, 5)?;
    let graph = build_knn_hypergraph(&data.features, 4)?;
    let shape = ModelShape {
        input_dim: 6,
        hidden_dim: 8,
        attn_dim: 4,
        heads: 2,
        classes: 2,
    };
    let params = DaHgnnParams::init(shape, 4)?;
    let input = ModelInput::new(&data.features, &graph)?;
    let e = hyperedge_embed(&data.features, &graph)?;
    println!("hyperedge embedding {}x{}", e.rows(), e.cols());

    // the bias is scaled to the largest positive score, so it vanishes when
    // every score of a layer is negative
    let edge = 0;
    for enabled in [false, true] {
        let cfg = AttentionConfig {
            density_enabled: enabled,
            ..AttentionConfig::default()
        };
        let pass = model_forward_on_tape(&input, &params, &cfg)?;
        let trace = &pass.layer1[0];
        let coe = coefficient_matrix(&graph, Grouping::ByEdge, pass.tape.value(trace.coe_x));
        println!("density {}", if enabled { "on" } else { "off" });
        for &i in graph.edge_members(edge) {
            println!(
                "  node {i:>2} density {:4.1} bias {:6.3} attention {:.4}",
                trace.node_density[i], trace.node_bias[i], coe[(i, edge)]
            );
        }
        println!("  first row of class probabilities {:?}", pass.probs().row(0));
    }
    Ok(())
}
