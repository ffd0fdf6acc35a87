//! Compares tape gradients of the labeled-node loss with central finite
//! differences on a tiny model. The density bias is a constant in the
//! backward pass, so the check runs with it disabled.
//!
//!     cargo run --release --example gradient_check

use dahgnn::data_io::synthetic_blobs;
use dahgnn::hypergraph::build_knn_hypergraph;
use dahgnn::layers::{
    model_forward, model_forward_on_tape, AttentionConfig, DaHgnnParams, ModelInput, ModelShape,
};
use dahgnn::numerics::Matrix;

fn loss(probs: &Matrix, targets: &[(usize, usize)]) -> f64 {
    -targets.iter().map(|&(i, c)| probs[(i, c)].ln()).sum::<f64>()
}

fn main() -> dahgnn::Result<()> {
    let data = synthetic_blobs(2, 6, 4, 1.0, 2)?;
    let graph = build_knn_hypergraph(&data.features, 3)?;
    let shape = ModelShape {
        input_dim: 4,
        hidden_dim: 6,
        attn_dim: 3,
        heads: 2,
        classes: 2,
    };
    let params = DaHgnnParams::init(shape, 3)?;
    let cfg = AttentionConfig {
        density_enabled: false,
        ..AttentionConfig::default()
    };
    let targets: Vec<(usize, usize)> = (0..12).step_by(3).map(|i| (i, data.labels[i])).collect();

    let input = ModelInput::new(&data.features, &graph)?;
    let mut pass = model_forward_on_tape(&input, &params, &cfg)?;
    let l = pass.tape.cross_entropy(pass.probs, targets.clone())?;
    let grads = pass.tape.backward(l)?.into_vec();

    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let tensors = params.to_tensors();
    let h = 1e-5;
    for (t, tensor) in tensors.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..tensor.len() {
            let eval = |d: f64| -> dahgnn::Result<f64> {
                let mut ts = tensors.clone();
                ts[t].as_mut_slice()[idx] += d;
                let p = DaHgnnParams::from_tensors(ts, 2)?;
                Ok(loss(&model_forward(&data.features, &graph, &p, &cfg)?, &targets))
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            let an = grads[t].as_slice()[idx];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
        println!("{:<22} {:>3} entries  worst relative error {worst:.2e}", names[t], tensor.len());
    }
    Ok(())
}
