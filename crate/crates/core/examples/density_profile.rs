//! Node and hyperedge densities of a blob dataset at several similarity
//! thresholds, split into points near their class centre and outliers.
//!
//!     cargo run --release --example density_profile

use dahgnn::data_io::synthetic_blobs;
use dahgnn::density::DensityProfile;
use dahgnn::hypergraph::build_knn_hypergraph;

fn main() -> dahgnn::Result<()> {
    let data = synthetic_blobs(3, 60, 8, 2.5, 11)?;
    let graph = build_knn_hypergraph(&data.features, 8)?;

    // distance of every point to its class mean
    let dim = data.features.cols();
    let mut means = vec![vec![0.0; dim]; data.class_count];
    for (i, &c) in data.labels.iter().enumerate() {
        for (m, v) in means[c].iter_mut().zip(data.features.row(i)) {
            *m += v / 60.0;
        }
    }
    let spread: Vec<f64> = data
        .labels
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let row = data.features.row(i);
            row.iter().zip(&means[c]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..spread.len()).collect();
    order.sort_by(|&a, &b| spread[a].total_cmp(&spread[b]));
    let (core, outer) = order.split_at(order.len() / 2);

    println!("delta  mean(core)  mean(outer)  mean(edge)");
    for delta in [0.0, 0.2, 0.4, 0.6, 0.8] {
        let profile = DensityProfile::compute(&data.features, &graph, delta);
        let mean = |idx: &[usize]| idx.iter().map(|&i| profile.node_density[i]).sum::<f64>() / idx.len() as f64;
        let edges = profile.edge_density.iter().sum::<f64>() / profile.edge_density.len() as f64;
        println!("{delta:5.1}  {:10.3}  {:11.3}  {edges:10.3}", mean(core), mean(outer));
    }
    Ok(())
}
