//! Builds the 15C5-P2-40C5-P2-300-10 spiking CNN from its config, prints the
//! layer shapes and runs one forward and backward pass on a synthetic digit.
//!
//! cargo run --release --example spiking_cnn -- [key=value ...]

use std::path::PathBuf;
use std::time::Instant;

use hm2bp::config::RunConfig;
use hm2bp::data::{make_targets, poisson_steps, prototype_images};
use hm2bp::grad::backward_pass;
use hm2bp::lif::{forward_compiled, CompiledNetwork, ForwardOptions};
use rand::SeedableRng;

fn main() -> hm2bp::Result<()> {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/cnn.toml");
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = RunConfig::load(&config, &overrides)?;
    let mut net = cfg.build_topology()?;
    net.init_uniform(&mut rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed));
    for k in 0..net.n_layers() {
        let s = net.shape(k);
        println!(
            "layer {k}: {:?}, shape {}x{}x{}, {} trainable weights",
            net.layer(k).kind,
            s.channels,
            s.height,
            s.width,
            if net.layer(k).is_trainable() { net.weights(k).len() } else { 0 }
        );
    }

    let grid = cfg.grid()?;
    let image = &prototype_images(1, 10, 28, 0.05, 3)[0];
    let start = Instant::now();
    let compiled = CompiledNetwork::new(&net);
    let input = poisson_steps(&image.pixels, &grid, cfg.encoder.poisson_scale, 1);
    let fwd = forward_compiled(&net, &compiled, input, &grid, ForwardOptions::default())?;
    let targets = make_targets(image.label as usize, 10, cfg.targets.hi, cfg.targets.lo)?;
    let grads = backward_pass(&net, &compiled, &fwd, &targets, 1.0)?;
    for k in 1..net.n_layers() {
        println!("layer {k}: {} spikes, grad norm {:.4}", fwd.counts(k).iter().sum::<u32>(), grads.grad_norms()[k]);
    }
    println!("output counts {:?} in {:.2}s", fwd.output_counts(), start.elapsed().as_secs_f64());
    Ok(())
}
