//! Builds the k-nearest-neighbour hypergraph of a small point cloud and
//! prints each hyperedge with the degree summary.
//!
//!     cargo run --release --example build_hypergraph

use dahgnn::data_io::synthetic_blobs;
use dahgnn::hypergraph::build_knn_hypergraph;

fn main() -> dahgnn::Result<()> {
    let data = synthetic_blobs(2, 6, 4, 4.0, 3)?;
    let graph = build_knn_hypergraph(&data.features, 3)?;
    println!("nodes {} hyperedges {}", graph.node_count(), graph.edge_count());
    for e in 0..graph.edge_count() {
        let members = graph.edge_members(e);
        let labels: Vec<usize> = members.iter().map(|&i| data.labels[i]).collect();
        println!("edge {e:>2} seed {:>2} members {members:?} labels {labels:?}", graph.seed_of_edge(e));
    }
    let degrees = graph.vertex_degrees();
    let mixed = (0..graph.edge_count())
        .filter(|&e| {
            let m = graph.edge_members(e);
            m.iter().any(|&i| data.labels[i] != data.labels[m[0]])
        })
        .count();
    println!(
        "vertex degree min {} max {}; {mixed} hyperedges span both classes",
        degrees.iter().min().unwrap(),
        degrees.iter().max().unwrap()
    );
    Ok(())
}
