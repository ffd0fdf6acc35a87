//! Trains on noisy overlapping blobs with and without the density bias over
//! several seeds and compares mean test accuracy.
//!
//!     cargo run --release --example density_ablation -- [seeds]

use dahgnn::data_io::synthetic_blobs;
use dahgnn::hypergraph::build_knn_hypergraph;
use dahgnn::training::{ablation_run, ArmSummary, SplitPlan, TrainConfig};

fn show(name: &str, arm: &ArmSummary) {
    let accs: Vec<String> = arm.test_acc.iter().map(|a| format!("{a:.3}")).collect();
    println!(
        "{name:<11} mean {:.4} std {:.4}  [{}]",
        arm.mean,
        arm.std.unwrap_or(0.0),
        accs.join(" ")
    );
}

fn main() -> dahgnn::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let data = synthetic_blobs(4, 80, 12, 4.5, 21)?;
    let graph = build_knn_hypergraph(&data.features, 10)?;
    let plan = SplitPlan::Stratified {
        per_class_labeled: 5,
        per_class_val: 10,
    };
    let config = TrainConfig {
        hidden_dim: 32,
        max_epochs: 300,
        patience: 50,
        ..TrainConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, usize::from);
    let report = ablation_run(&data, &graph, &plan, &config, seeds, jobs)?;
    show("density", &report.with_density);
    show("no density", &report.without_density);
    println!("gain {:+.4}", report.mean_gain());
    Ok(())
}
