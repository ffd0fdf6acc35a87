//! MNIST with 100 labeled and 100 validation images per class: trains the
//! model with and without density for several seeds and prints both arms.
//!
//!     scripts/fetch-mnist.sh
//!     cargo run --release --example mnist_reproduction -- [seeds] [jobs] [max_epochs]
//!
//! Data is read from `$DAHGNN_MNIST_DIR`, default `data/mnist`.

use std::path::PathBuf;
use std::time::Instant;

use dahgnn::data_io::Dataset;
use dahgnn::hypergraph::build_knn_hypergraph;
use dahgnn::training::{ablation_run, SplitPlan, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let seeds = args.first().copied().unwrap_or(5);
    let jobs = args.get(1).copied().unwrap_or(2);
    let max_epochs = args.get(2).copied().unwrap_or(3000);

    let dir = std::env::var_os("DAHGNN_MNIST_DIR").map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from);
    let data = Dataset::load(&dir.join("features.csv"), &dir.join("labels.csv"))?;
    let start = Instant::now();
    let graph = build_knn_hypergraph(&data.features, 10)?;
    println!("{} nodes, graph built in {:.2?}", data.len(), start.elapsed());

    let config = TrainConfig {
        max_epochs,
        ..TrainConfig::default()
    };
    let plan = SplitPlan::Stratified {
        per_class_labeled: 100,
        per_class_val: 100,
    };
    let report = ablation_run(&data, &graph, &plan, &config, seeds, jobs)?;
    for arm in [&report.with_density, &report.without_density] {
        let name = if arm.density_enabled { "with density" } else { "without density" };
        for run in &arm.runs {
            println!(
                "  {name:<16} seed {} best epoch {:>4} of {:>4}  test {:.2}%",
                run.seed,
                run.best_epoch,
                run.epochs_run,
                100.0 * run.metrics.test_acc.unwrap_or(f64::NAN)
            );
        }
        println!(
            "{name:<16} {:.2} ± {:.2}",
            100.0 * arm.mean,
            100.0 * arm.std.unwrap_or(0.0)
        );
    }
    println!("total {:.2?}", start.elapsed());
    Ok(())
}
