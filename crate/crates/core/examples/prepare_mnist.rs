//! Converts the per-digit JSON files of the `mnist` npm package into
//! `features.csv` (one 784-value row per image, pixels in [0, 1]) and
//! `labels.csv`.
//!
//!     cargo run --release --example prepare_mnist -- <digits-dir> <out-dir>

use std::path::PathBuf;

use dahgnn::data_io::Dataset;
use dahgnn::numerics::Matrix;
use serde::Deserialize;

const PIXELS: usize = 28 * 28;

#[derive(Deserialize)]
struct Digit {
    data: Vec<f64>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (Some(src), Some(out)) = (args.next(), args.next()) else {
        return Err("usage: prepare_mnist <digits-dir> <out-dir>".into());
    };
    let (src, out) = (PathBuf::from(src), PathBuf::from(out));

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for class in 0..10 {
        let path = src.join(format!("{class}.json"));
        let digit: Digit = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&path)?))?;
        if !digit.data.len().is_multiple_of(PIXELS) {
            return Err(format!("{}: {} values is not a multiple of {PIXELS}", path.display(), digit.data.len()).into());
        }
        labels.extend(std::iter::repeat_n(class, digit.data.len() / PIXELS));
        values.extend(digit.data);
    }
    let data = Dataset::new(Matrix::new(labels.len(), PIXELS, values)?, labels)?;
    std::fs::create_dir_all(&out)?;
    data.save(&out.join("features.csv"), &out.join("labels.csv"))?;
    println!("wrote {} images to {}", data.len(), out.display());
    Ok(())
}
