//! Full-batch training with Adam, step learning-rate decay and early
//! stopping on validation loss; evaluation and the density ablation.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data_io::{make_splits, Dataset};
use crate::error::{Error, Result};
use crate::hypergraph::HyperGraph;
use crate::layers::{model_forward_on_tape, AttentionConfig, DaHgnnParams, ModelInput, ModelShape};
use crate::numerics::tape::LOG_CLAMP;
use crate::numerics::{adam_step, sub_seed, AdamConfig, AdamState, Matrix, DEFAULT_ELU_ALPHA};

pub use crate::data_io::SplitSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Neighbours per hyperedge (each hyperedge has `k + 1` members).
    pub k: usize,
    /// Similarity threshold for node densities.
    pub delta: f64,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub heads: usize,
    pub lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub density_enabled: bool,
    pub leaky_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: crate::hypergraph::DEFAULT_K,
            delta: crate::density::DEFAULT_DELTA,
            hidden_dim: 256,
            attn_dim: 8,
            heads: 4,
            lr: 0.002,
            lr_decay_every: 100,
            lr_decay_factor: 0.5,
            max_epochs: 3000,
            patience: 100,
            seed: 0,
            density_enabled: true,
            leaky_slope: crate::numerics::DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("heads", self.heads),
            ("lr_decay_every", self.lr_decay_every),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::invalid(format!(
                "lr_decay_factor must be in (0, 1], got {}",
                self.lr_decay_factor
            )));
        }
        if !(-1.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid(format!("delta must be in [-1, 1], got {}", self.delta)));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::invalid(format!("leaky_slope must be in [0, 1), got {}", self.leaky_slope)));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch.saturating_sub(1) / self.lr_decay_every) as i32;
        self.lr * self.lr_decay_factor.powi(halvings)
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            delta: self.delta,
            leaky_slope: self.leaky_slope,
            elu_alpha: DEFAULT_ELU_ALPHA,
            density_enabled: self.density_enabled,
        }
    }

    pub fn model_shape(&self, input_dim: usize, classes: usize) -> ModelShape {
        ModelShape {
            input_dim,
            hidden_dim: self.hidden_dim,
            attn_dim: self.attn_dim,
            heads: self.heads,
            classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `epoch,train_loss,val_loss,val_acc,lr` with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
            ));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `−Σ_{i∈labeled} Σ_j Y_ij ln max(Z_ij, 1e-12)`, summed, not averaged.
pub fn cross_entropy_loss(z: &Matrix, y: &Matrix, labeled: &[usize]) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::invalid("cross-entropy over an empty labeled set"));
    }
    if z.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            context: "cross_entropy_loss",
            expected: z.shape_str(),
            actual: y.shape_str(),
        });
    }
    let mut loss = 0.0;
    for &i in labeled {
        if i >= z.rows() {
            return Err(Error::OutOfRange {
                what: "labeled node",
                index: i,
                len: z.rows(),
            });
        }
        for (&p, &t) in z.row(i).iter().zip(y.row(i)) {
            if t != 0.0 {
                loss -= t * p.max(LOG_CLAMP).ln();
            }
        }
    }
    Ok(loss)
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    Matrix::from_fn(labels.len(), classes, |r, c| if labels[r] == c { 1.0 } else { 0.0 })
}

fn label_loss(z: &Matrix, labels: &[usize], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| -z[(i, labels[i])].max(LOG_CLAMP).ln()).sum()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Row argmax; ties go to the lowest class index.
pub fn predict_classes(z: &Matrix) -> Vec<usize> {
    (0..z.rows()).map(|r| argmax(z.row(r))).collect()
}

/// Fraction of `idx` whose argmax prediction equals the label.
pub fn evaluate(z: &Matrix, labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("accuracy over an empty index set"));
    }
    let mut correct = 0usize;
    for &i in idx {
        if i >= z.rows() || i >= labels.len() {
            return Err(Error::OutOfRange {
                what: "evaluated node",
                index: i,
                len: z.rows().min(labels.len()),
            });
        }
        correct += usize::from(argmax(z.row(i)) == labels[i]);
    }
    Ok(correct as f64 / idx.len() as f64)
}

/// Accuracies of a trained model on each part of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train_acc: f64,
    pub val_acc: f64,
    pub val_loss: f64,
    /// `None` when the split has no test nodes.
    pub test_acc: Option<f64>,
}

impl SplitMetrics {
    pub fn compute(z: &Matrix, labels: &[usize], split: &SplitSpec) -> Result<Self> {
        Ok(Self {
            train_acc: evaluate(z, labels, &split.train)?,
            val_acc: evaluate(z, labels, &split.val)?,
            val_loss: label_loss(z, labels, &split.val),
            test_acc: if split.test.is_empty() {
                None
            } else {
                Some(evaluate(z, labels, &split.test)?)
            },
        })
    }
}

/// Class probabilities and final-layer embeddings of a model.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: Matrix,
    pub embeddings: Matrix,
}

pub fn predict(
    features: &Matrix,
    graph: &HyperGraph,
    params: &DaHgnnParams,
    attention: &AttentionConfig,
) -> Result<Prediction> {
    let input = ModelInput::new(features, graph)?;
    let pass = model_forward_on_tape(&input, params, attention)?;
    Ok(Prediction {
        probs: pass.probs().clone(),
        embeddings: pass.logits().clone(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: DaHgnnParams,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Trains from a fresh initialization seeded by `config.seed`.
///
/// Every epoch runs one forward pass over the whole graph. Its probabilities
/// give both the training loss that is differentiated and the validation
/// loss and accuracy recorded for that epoch, so each record describes the
/// parameters before that epoch's update.
pub fn train(
    dataset: &Dataset,
    graph: &HyperGraph,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let shape = config.model_shape(dataset.features.cols(), dataset.class_count);
    let params = DaHgnnParams::init(shape, config.seed)?;
    train_from(dataset, graph, split, config, params)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    dataset: &Dataset,
    graph: &HyperGraph,
    split: &SplitSpec,
    config: &TrainConfig,
    mut params: DaHgnnParams,
) -> Result<TrainOutcome> {
    config.validate()?;
    split.validate(dataset.len())?;
    let input = ModelInput::new(&dataset.features, graph)?;
    let attention = config.attention();
    let heads = params.layer1.len();
    let targets: Vec<(usize, usize)> = split.train.iter().map(|&i| (i, dataset.labels[i])).collect();
    let adam = AdamConfig::default();
    let mut state = AdamState::new(&params.to_tensors());

    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let lr = config.lr_at(epoch);
        let mut pass = model_forward_on_tape(&input, &params, &attention)?;
        let probs = pass.probs;
        let loss = pass.tape.cross_entropy(probs, targets.clone())?;
        let train_loss = pass.tape.value(loss).item();
        let z = pass.tape.value(probs);
        let val_loss = label_loss(z, &dataset.labels, &split.val);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let val_acc = evaluate(z, &dataset.labels, &split.val)?;
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} acc {val_acc:.4}");

        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
        if epoch == config.max_epochs {
            break;
        }

        let grads = pass.tape.backward(loss)?.into_vec();
        let mut tensors = params.to_tensors();
        adam_step(&mut tensors, &grads, &mut state, lr, adam)?;
        params = DaHgnnParams::from_tensors(tensors, heads)?;
    }

    let (best_val_loss, best_epoch, best_params) = best;
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// How each seed of a multi-seed experiment obtains its split.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPlan {
    /// The same split for every seed.
    Fixed(SplitSpec),
    /// A fresh stratified split per seed, drawn from the seed's `"split"`
    /// sub-seed.
    Stratified {
        per_class_labeled: usize,
        per_class_val: usize,
    },
}

impl SplitPlan {
    pub fn split_for(&self, labels: &[usize], seed: u64) -> Result<SplitSpec> {
        match self {
            SplitPlan::Fixed(s) => Ok(s.clone()),
            SplitPlan::Stratified {
                per_class_labeled,
                per_class_val,
            } => make_splits(labels, *per_class_labeled, *per_class_val, sub_seed(seed, "split")),
        }
    }
}

/// Result of one training run inside a multi-seed experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub density_enabled: bool,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub metrics: SplitMetrics,
}

/// Trains and evaluates one configuration; the split comes from `plan`.
pub fn run_seed(
    dataset: &Dataset,
    graph: &HyperGraph,
    plan: &SplitPlan,
    config: &TrainConfig,
) -> Result<SeedRun> {
    let split = plan.split_for(&dataset.labels, config.seed)?;
    let outcome = train(dataset, graph, &split, config)?;
    let pred = predict(&dataset.features, graph, &outcome.params, &config.attention())?;
    Ok(SeedRun {
        seed: config.seed,
        density_enabled: config.density_enabled,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        metrics: SplitMetrics::compute(&pred.probs, &dataset.labels, &split)?,
    })
}

/// Applies `f` to every item on at most `jobs` threads, preserving order.
pub fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let count = items.len();
    let workers = jobs.clamp(1, count.max(1));
    let slots: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<R>>> = (0..count).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let item = slots[i].lock().unwrap().take().unwrap();
                let r = f(item);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub density_enabled: bool,
    pub runs: Vec<SeedRun>,
    /// Per-seed test accuracy in run order.
    pub test_acc: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; absent for a single seed.
    pub std: Option<f64>,
}

impl ArmSummary {
    fn from_runs(density_enabled: bool, runs: Vec<SeedRun>) -> Result<Self> {
        let test_acc = runs
            .iter()
            .map(|r| {
                r.metrics
                    .test_acc
                    .ok_or_else(|| Error::Split("ablation needs a non-empty test set".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&test_acc);
        Ok(Self {
            density_enabled,
            runs,
            test_acc,
            mean,
            std,
        })
    }
}

/// Mean and sample standard deviation (`None` for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (mean, std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub with_density: ArmSummary,
    pub without_density: ArmSummary,
}

impl AblationReport {
    /// Mean test-accuracy gain of the density arm, in accuracy units.
    pub fn mean_gain(&self) -> f64 {
        self.with_density.mean - self.without_density.mean
    }
}

/// Trains every seed `config.seed .. config.seed + n_seeds` twice, with and
/// without density, everything else identical, on up to `jobs` threads.
pub fn ablation_run(
    dataset: &Dataset,
    graph: &HyperGraph,
    plan: &SplitPlan,
    config: &TrainConfig,
    n_seeds: usize,
    jobs: usize,
) -> Result<AblationReport> {
    if n_seeds == 0 {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|s| config.seed + s).collect();
    let tasks: Vec<TrainConfig> = [true, false]
        .into_iter()
        .flat_map(|density| {
            seeds.iter().map(move |&seed| TrainConfig {
                seed,
                density_enabled: density,
                ..config.clone()
            })
        })
        .collect();
    let mut runs = parallel_map(tasks, jobs, |cfg| run_seed(dataset, graph, plan, &cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let without = runs.split_off(n_seeds);
    Ok(AblationReport {
        seeds,
        with_density: ArmSummary::from_runs(true, runs)?,
        without_density: ArmSummary::from_runs(false, without)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::synthetic_blobs;
    use crate::hypergraph::build_knn_hypergraph;

    fn small_config() -> TrainConfig {
        TrainConfig {
            k: 5,
            hidden_dim: 16,
            attn_dim: 4,
            heads: 2,
            lr: 0.01,
            max_epochs: 60,
            patience: 100,
            ..TrainConfig::default()
        }
    }

    fn blobs() -> (Dataset, HyperGraph, SplitSpec) {
        let d = synthetic_blobs(3, 20, 6, 1.0, 11).unwrap();
        let g = build_knn_hypergraph(&d.features, 5).unwrap();
        let s = make_splits(&d.labels, 3, 3, 12).unwrap();
        (d, g, s)
    }

    #[test]
    fn defaults_and_missing_fields() {
        let c: TrainConfig = serde_json::from_str(r#"{"seed": 4}"#).unwrap();
        assert_eq!(c.delta, 0.4);
        assert_eq!(c.lr, 0.002);
        assert_eq!(c.heads, 4);
        assert_eq!(c.attn_dim, 8);
        assert_eq!(c.patience, 100);
        assert_eq!(c.max_epochs, 3000);
        assert_eq!(c.seed, 4);
        c.validate().unwrap();
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrainConfig { heads: 0, ..TrainConfig::default() },
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { lr_decay_factor: 1.5, ..TrainConfig::default() },
            TrainConfig { delta: 1.2, ..TrainConfig::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn schedule_halves_every_hundred_epochs() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(1), 0.002);
        assert_eq!(c.lr_at(100), 0.002);
        assert_eq!(c.lr_at(101), 0.001);
        assert_eq!(c.lr_at(200), 0.001);
        assert_eq!(c.lr_at(201), 0.0005);
    }

    #[test]
    fn loss_examples() {
        let y = one_hot(&[0, 1, 2], 3);
        assert!(cross_entropy_loss(&y, &y, &[0, 1, 2]).unwrap() <= 3e-11);
        let z = Matrix::filled(3, 10, 0.1);
        let y = one_hot(&[0, 5, 9], 10);
        let l = cross_entropy_loss(&z, &y, &[0, 1, 2]).unwrap();
        assert!((l - 3.0 * 10f64.ln()).abs() < 1e-12);
        assert!(cross_entropy_loss(&z, &y, &[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let z = Matrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.2, 0.8],
            vec![0.5, 0.5],
            vec![0.6, 0.4],
            vec![0.3, 0.7],
        ])
        .unwrap();
        assert_eq!(evaluate(&z, &[0, 1, 0, 0, 1], &[0, 1, 2, 3, 4]).unwrap(), 1.0);
        assert_eq!(evaluate(&z, &[1, 0, 1, 1, 0], &[0, 1, 2, 3, 4]).unwrap(), 0.0);
        assert_eq!(evaluate(&z, &[0, 1, 1, 1, 1], &[0, 1, 2, 3, 4]).unwrap(), 0.6);
        assert!(evaluate(&z, &[0; 5], &[]).is_err());
        assert_eq!(predict_classes(&z), vec![0, 1, 0, 0, 1]);
    }

    #[test]
    fn training_reduces_loss_and_keeps_best_params() {
        let (d, g, s) = blobs();
        let cfg = small_config();
        let out = train(&d, &g, &s, &cfg).unwrap();
        let h = &out.history.records;
        assert!(h[49].train_loss < h[0].train_loss);
        let min_val = h.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val_loss, min_val);
        let pred = predict(&d.features, &g, &out.params, &cfg.attention()).unwrap();
        let m = SplitMetrics::compute(&pred.probs, &d.labels, &s).unwrap();
        assert_eq!(m.val_loss, min_val);
    }

    #[test]
    fn training_is_deterministic() {
        let (d, g, s) = blobs();
        let cfg = TrainConfig { max_epochs: 15, ..small_config() };
        let a = train(&d, &g, &s, &cfg).unwrap();
        let b = train(&d, &g, &s, &cfg).unwrap();
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn early_stopping_triggers() {
        let (d, g, s) = blobs();
        let cfg = TrainConfig {
            lr: 0.05,
            patience: 5,
            max_epochs: 400,
            ..small_config()
        };
        let out = train(&d, &g, &s, &cfg).unwrap();
        assert!(out.stopped_early);
        assert!(out.history.len() < 400);
        assert_eq!(out.history.len(), out.best_epoch + 5);
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![EpochRecord {
                epoch: 1,
                train_loss: 2.5,
                val_loss: 3.0,
                val_acc: 0.5,
                lr: 0.002,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,val_loss,val_acc,lr\n1,2.5,3,0.5,0.002\n");
    }

    #[test]
    fn parallel_map_keeps_order() {
        let out = parallel_map((0..20).collect(), 3, |i: u64| i * i);
        assert_eq!(out, (0..20).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(Vec::<u8>::new(), 4, |x| x).is_empty());
    }

    #[test]
    fn single_seed_ablation_has_no_std() {
        let (d, g, s) = blobs();
        let cfg = TrainConfig { max_epochs: 5, ..small_config() };
        let r = ablation_run(&d, &g, &SplitPlan::Fixed(s), &cfg, 1, 2).unwrap();
        assert_eq!(r.with_density.runs.len(), 1);
        assert_eq!(r.without_density.runs.len(), 1);
        assert!(r.with_density.std.is_none());
        assert!(r.with_density.mean.is_finite() && r.without_density.mean.is_finite());
        assert!(r.with_density.runs[0].density_enabled);
        assert!(!r.without_density.runs[0].density_enabled);
    }

    #[test]
    fn mean_std_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 1.0).abs() < 1e-15);
    }
}
