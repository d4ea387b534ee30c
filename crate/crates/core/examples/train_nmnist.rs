//! Trains on N-MNIST event streams.
//!
//! cargo run --release --example train_nmnist -- <nmnist dir> [key=value ...]
//!
//! The directory holds `Train/<digit>/*.bin` and `Test/<digit>/*.bin`. Binning
//! all files takes a while; `hm2bp encode-cache` does it once and later runs
//! read `train.spkc` and `test.spkc` instead.

use std::path::PathBuf;

use hm2bp::config::RunConfig;
use hm2bp::train::{load_splits, train, EpochMetrics};
use hm2bp::NetworkTopology;

fn main() -> hm2bp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!("usage: train_nmnist <nmnist dir> [key=value ...]");
        std::process::exit(1);
    };
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/nmnist.toml");
    let mut overrides = vec![format!("data_dir = {dir:?}"), "output.dir = \"runs/example-nmnist\"".to_string()];
    overrides.extend(args);
    let cfg = RunConfig::load(&config, &overrides)?;
    let (train_set, test_set) = load_splits(&cfg)?;
    let mut report = |_: usize, _: &NetworkTopology, m: &EpochMetrics| {
        println!("epoch {:>2}: train acc {:.4}, test acc {:.4}", m.epoch, m.train_accuracy, m.test_accuracy);
        Ok(())
    };
    train(&cfg, &train_set, &test_set, &mut report)?;
    Ok(())
}
