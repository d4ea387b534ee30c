//! Trains a spiking MLP on MNIST with a shipped config.
//!
//! cargo run --release --example train_mnist -- <mnist dir> [key=value ...]
//!
//! Without a directory it trains a small net on synthetic prototypes instead.

use std::path::PathBuf;

use hm2bp::config::RunConfig;
use hm2bp::data::{prototype_images, save_idx};
use hm2bp::train::{load_splits, train, EpochMetrics};
use hm2bp::NetworkTopology;

fn main() -> hm2bp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/mnist.toml");
    let mut overrides = vec!["output.dir = \"runs/example-mnist\"".to_string()];
    match args.next() {
        Some(dir) => overrides.push(format!("data_dir = {dir:?}")),
        None => {
            let dir = std::env::temp_dir().join("hm2bp-synthetic-mnist");
            std::fs::create_dir_all(&dir)?;
            let images = prototype_images(600, 10, 28, 0.08, 1);
            save_idx(&images[..500], &dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
            save_idx(&images[500..], &dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
            println!("no data directory given; using synthetic digits in {}", dir.display());
            overrides.extend([format!("data_dir = {:?}", dir.display().to_string()), "epochs = 3".into()]);
        }
    }
    overrides.extend(args);
    let cfg = RunConfig::load(&config, &overrides)?;
    let (train_set, test_set) = load_splits(&cfg)?;
    println!("{} training and {} test samples", train_set.len(), test_set.len());
    let mut report = |_: usize, _: &NetworkTopology, m: &EpochMetrics| {
        println!("epoch {:>2}: train acc {:.4}, test acc {:.4}", m.epoch, m.train_accuracy, m.test_accuracy);
        Ok(())
    };
    let outcome = train(&cfg, &train_set, &test_set, &mut report)?;
    println!("checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}
