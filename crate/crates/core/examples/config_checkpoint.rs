//! Parses a config with `key=value` overrides, saves a checkpoint and loads it
//! into a freshly built network.
//!
//! cargo run --example config_checkpoint -- [key=value ...]

use hm2bp::checkpoint::{load_checkpoint, save_checkpoint};
use hm2bp::config::RunConfig;
use rand::SeedableRng;

const CONFIG: &str = r#"
dataset = "mnist"
epochs = 5
[optimizer]
lr = 0.002
[[layer]]
kind = "input"
shape = [1, 28, 28]
[[layer]]
kind = "dense"
neurons = 100
[[layer]]
kind = "dense"
neurons = 10
w0 = -1.0
"#;

fn main() -> hm2bp::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = RunConfig::from_toml_str(CONFIG, &overrides)?;
    println!("{}", cfg.to_toml_string());

    let mut net = cfg.build_topology()?;
    net.init_uniform(&mut rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed));
    let path = std::env::temp_dir().join("hm2bp-example.hm2b");
    save_checkpoint(&path, &net)?;

    let mut restored = cfg.build_topology()?;
    load_checkpoint(&path, &mut restored)?;
    assert_eq!(restored.all_weights(), net.all_weights());
    println!("restored {} weights from {}", net.all_weights().iter().map(Vec::len).sum::<usize>(), path.display());

    // A checkpoint only loads into the topology it was written from.
    let smaller = RunConfig::from_toml_str(CONFIG, &["layer.1.neurons = 50".into()])?;
    let mut wrong = smaller.build_topology()?;
    println!("loading into a 50-unit net: {}", load_checkpoint(&path, &mut wrong).unwrap_err());
    Ok(())
}
