//! The `dahgnn` command line: `build-graph`, `train`, `eval`, `ablate`,
//! `synth`.
//!
//! Settings come from three layers, later ones winning: built-in defaults,
//! the JSON file given with `--config`, then command-line flags. Relative
//! paths inside a config file are resolved against the file's directory.
//! Every command writes the fully resolved settings to
//! `resolved_config.json` in its output directory, which defaults to
//! `$DAHGNN_OUT` and then to `dahgnn-out`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data_io::{export_embeddings, load_split, make_splits, synthetic_blobs, Dataset, SplitSpec};
use crate::density::DensityProfile;
use crate::error::{Error, Result};
use crate::hypergraph::{build_knn_hypergraph, HyperGraph};
use crate::layers::checkpoint;
use crate::numerics::sub_seed;
use crate::training::{ablation_run, predict, train, SplitMetrics, SplitPlan, TrainConfig};

pub const OUT_ENV: &str = "DAHGNN_OUT";
const DEFAULT_OUT: &str = "dahgnn-out";

/// Everything a command can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Split file; when absent a stratified split is drawn from the seed.
    pub split: Option<PathBuf>,
    pub per_class_labeled: usize,
    pub per_class_val: usize,
    pub checkpoint: Option<PathBuf>,
    pub n_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            features: None,
            labels: None,
            split: None,
            per_class_labeled: 100,
            per_class_val: 100,
            checkpoint: None,
            n_seeds: 10,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.features, &mut cfg.labels, &mut cfg.split, &mut cfg.checkpoint]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn required(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| Error::invalid(format!("no {what} path given (flag or config)")))?;
        if !p.exists() {
            return Err(Error::invalid(format!("{what} file {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn dataset(&self) -> Result<Dataset> {
        let features = self.required(&self.features, "features")?;
        let labels = self.required(&self.labels, "labels")?;
        Dataset::load(&features, &labels)
    }

    fn split_plan(&self) -> Result<SplitPlan> {
        Ok(match &self.split {
            Some(_) => {
                let path = self.required(&self.split, "split")?;
                let split: SplitSpec = serde_json::from_str(
                    &std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?,
                )?;
                SplitPlan::Fixed(split)
            }
            None => SplitPlan::Stratified {
                per_class_labeled: self.per_class_labeled,
                per_class_val: self.per_class_val,
            },
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "dahgnn", version, about = "Density-aware hypergraph attention networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Seed for splits, synthesis and initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for independent training runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Headerless numeric CSV, one row per node.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// One integer class label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// JSON split with train, val and test index arrays.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Nearest neighbours per hyperedge.
    #[arg(long)]
    pub k: Option<usize>,
    /// Cosine similarity threshold for density.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Width of the convolution output.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Output width of each first-layer attention head.
    #[arg(long)]
    pub attn_dim: Option<usize>,
    /// Attention heads in the first layer.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epoch budget.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without validation-loss improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Train without the density term.
    #[arg(long)]
    pub no_density: bool,
    /// Labeled nodes per class when no split file is given.
    #[arg(long)]
    pub per_class_labeled: Option<usize>,
    /// Validation nodes per class when no split file is given.
    #[arg(long)]
    pub per_class_val: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the kNN hypergraph and write its incidence list.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        /// Headerless numeric CSV, one row per node.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Nearest neighbours per hyperedge.
        #[arg(long)]
        k: Option<usize>,
        /// Also write node and hyperedge densities of the raw features.
        #[arg(long)]
        density: bool,
        /// Cosine similarity threshold for density.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Train a model and write checkpoint, history, metrics and embeddings.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluate a checkpoint on a dataset and split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Paired runs with and without density over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Number of seeds, starting at the configured seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Write a Gaussian-blob dataset, a split and a ready-to-use config.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 5)]
        labeled: usize,
        #[arg(long, default_value_t = 5)]
        val: usize,
    },
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok((cfg, out))
    }

    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        for (flag, slot) in [
            (&self.features, &mut cfg.features),
            (&self.labels, &mut cfg.labels),
            (&self.split, &mut cfg.split),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        macro_rules! set {
            ($($field:ident => $slot:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $slot = v; })*
            };
        }
        set!(
            k => t.k,
            delta => t.delta,
            hidden_dim => t.hidden_dim,
            attn_dim => t.attn_dim,
            heads => t.heads,
            lr => t.lr,
            max_epochs => t.max_epochs,
            patience => t.patience,
            per_class_labeled => cfg.per_class_labeled,
            per_class_val => cfg.per_class_val,
        );
        if self.no_density {
            t.density_enabled = false;
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn build_graph(data: &Dataset, k: usize) -> Result<HyperGraph> {
    let start = std::time::Instant::now();
    let g = build_knn_hypergraph(&data.features, k)?;
    log::info!("built {}-node hypergraph in {:.2?}", g.node_count(), start.elapsed());
    Ok(g)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildGraph {
            common,
            features,
            k,
            density,
            delta,
        } => {
            let (mut cfg, out) = common.resolve()?;
            if features.is_some() {
                cfg.features = features;
            }
            if let Some(k) = k {
                cfg.train.k = k;
            }
            if let Some(d) = delta {
                cfg.train.delta = d;
            }
            cfg.train.validate()?;
            cfg.save(&out.join("resolved_config.json"))?;
            let path = cfg.required(&cfg.features, "features")?;
            let x = crate::data_io::load_features(&path)?;
            let g = build_knn_hypergraph(&x, cfg.train.k)?;
            g.write_incidence(&out.join("incidence.txt"))?;
            let dv = g.vertex_degrees();
            let min = dv.iter().min().copied().unwrap_or(0);
            let max = dv.iter().max().copied().unwrap_or(0);
            let mean = dv.iter().sum::<usize>() as f64 / dv.len() as f64;
            println!("nodes {} hyperedges {}", g.node_count(), g.edge_count());
            println!("hyperedge size {}", cfg.train.k + 1);
            println!("vertex degree min {min} mean {mean:.3} max {max}");
            if density {
                let profile = DensityProfile::compute(&x, &g, cfg.train.delta);
                let p = out.join("density.csv");
                std::fs::write(&p, profile.to_csv()).map_err(|e| Error::io(&p, e))?;
            }
            Ok(())
        }
        Command::Train {
            common,
            data,
            model,
        } => {
            let (mut cfg, out) = common.resolve()?;
            data.apply(&mut cfg);
            model.apply(&mut cfg);
            cfg.train.validate()?;
            let dataset = cfg.dataset()?;
            let split = match &cfg.split {
                Some(p) => load_split(p, dataset.len())?,
                None => {
                    let s = make_splits(
                        &dataset.labels,
                        cfg.per_class_labeled,
                        cfg.per_class_val,
                        sub_seed(cfg.train.seed, "split"),
                    )?;
                    let p = out.join("split.json");
                    s.save(&p)?;
                    cfg.split = Some(absolute(&p));
                    s
                }
            };
            let ckpt = out.join("checkpoint.dahg");
            cfg.checkpoint = Some(absolute(&ckpt));
            cfg.save(&out.join("resolved_config.json"))?;

            let graph = build_graph(&dataset, cfg.train.k)?;
            let outcome = train(&dataset, &graph, &split, &cfg.train)?;
            checkpoint::save(&outcome.params, &ckpt)?;
            outcome.history.save_csv(&out.join("history.csv"))?;
            let pred = predict(&dataset.features, &graph, &outcome.params, &cfg.train.attention())?;
            export_embeddings(&pred.embeddings, &out.join("embeddings.csv"))?;
            let metrics = SplitMetrics::compute(&pred.probs, &dataset.labels, &split)?;
            write_json(
                &serde_json::json!({
                    "seed": cfg.train.seed,
                    "epochs_run": outcome.history.len(),
                    "best_epoch": outcome.best_epoch,
                    "best_val_loss": outcome.best_val_loss,
                    "stopped_early": outcome.stopped_early,
                    "metrics": metrics,
                }),
                &out.join("metrics.json"),
            )?;
            println!(
                "epochs {} best {} val acc {:.4} test acc {}",
                outcome.history.len(),
                outcome.best_epoch,
                metrics.val_acc,
                metrics.test_acc.map_or("n/a".into(), |a| format!("{a:.4}"))
            );
            Ok(())
        }
        Command::Eval {
            common,
            data,
            checkpoint: ckpt,
        } => {
            let (mut cfg, out) = common.resolve()?;
            data.apply(&mut cfg);
            if ckpt.is_some() {
                cfg.checkpoint = ckpt;
            }
            cfg.train.validate()?;
            cfg.save(&out.join("resolved_config.json"))?;
            let params = checkpoint::load(&cfg.required(&cfg.checkpoint, "checkpoint")?)?;
            let dataset = cfg.dataset()?;
            let shape = params.shape();
            if shape.input_dim != dataset.features.cols() || shape.classes < dataset.class_count {
                return Err(Error::ShapeMismatch {
                    context: "eval",
                    expected: format!(
                        "checkpoint for {} features and {} classes",
                        shape.input_dim, shape.classes
                    ),
                    actual: format!(
                        "dataset {} with {} classes",
                        dataset.features.shape_str(),
                        dataset.class_count
                    ),
                });
            }
            let split_path = cfg.required(&cfg.split, "split")?;
            let split = load_split(&split_path, dataset.len())?;
            let graph = build_graph(&dataset, cfg.train.k)?;
            let pred = predict(&dataset.features, &graph, &params, &cfg.train.attention())?;
            let metrics = SplitMetrics::compute(&pred.probs, &dataset.labels, &split)?;
            write_json(&metrics, &out.join("eval_metrics.json"))?;
            match metrics.test_acc {
                Some(a) => println!("test acc {a}"),
                None => println!("test set empty; val acc {}", metrics.val_acc),
            }
            Ok(())
        }
        Command::Ablate {
            common,
            data,
            model,
            seeds,
        } => {
            let (mut cfg, out) = common.resolve()?;
            data.apply(&mut cfg);
            model.apply(&mut cfg);
            if let Some(n) = seeds {
                cfg.n_seeds = n;
            }
            cfg.train.validate()?;
            cfg.save(&out.join("resolved_config.json"))?;
            let dataset = cfg.dataset()?;
            let plan = cfg.split_plan()?;
            let graph = build_graph(&dataset, cfg.train.k)?;
            let report = ablation_run(&dataset, &graph, &plan, &cfg.train, cfg.n_seeds, common.jobs())?;
            write_json(&report, &out.join("ablation.json"))?;
            println!("arm,seed,test_acc");
            for arm in [&report.with_density, &report.without_density] {
                let name = if arm.density_enabled { "density" } else { "no_density" };
                for (seed, acc) in report.seeds.iter().zip(&arm.test_acc) {
                    println!("{name},{seed},{acc}");
                }
            }
            for arm in [&report.with_density, &report.without_density] {
                let name = if arm.density_enabled { "density" } else { "no_density" };
                match arm.std {
                    Some(s) => println!("{name} mean {:.4} std {:.4}", arm.mean, s),
                    None => println!("{name} mean {:.4}", arm.mean),
                }
            }
            Ok(())
        }
        Command::Synth {
            common,
            classes,
            per_class,
            dim,
            spread,
            labeled,
            val,
        } => {
            let (base, out) = common.resolve()?;
            let seed = base.train.seed;
            let data = synthetic_blobs(classes, per_class, dim, spread, sub_seed(seed, "synth"))?;
            let split = make_splits(&data.labels, labeled, val, sub_seed(seed, "split"))?;
            data.save(&out.join("features.csv"), &out.join("labels.csv"))?;
            split.save(&out.join("split.json"))?;
            let cfg = RunConfig {
                train: TrainConfig {
                    k: base.train.k.min(data.len() - 1),
                    hidden_dim: 64,
                    max_epochs: 500,
                    ..base.train
                },
                features: Some("features.csv".into()),
                labels: Some("labels.csv".into()),
                split: Some("split.json".into()),
                per_class_labeled: labeled,
                per_class_val: val,
                ..base
            };
            cfg.save(&out.join("config.json"))?;
            cfg.save(&out.join("resolved_config.json"))?;
            println!(
                "wrote {} nodes ({classes} classes, {dim} dims) to {}",
                data.len(),
                out.display()
            );
            Ok(())
        }
    }
}
