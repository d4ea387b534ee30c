//! Follows α̂ of one synapse through 20 epochs of training on a small
//! synthetic task and prints its per-epoch drift.
//!
//! cargo run --release --example alpha_tracking -- [seed]

use hm2bp::verify::alpha_tracking;

fn main() -> hm2bp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let track = alpha_tracking(20, seed)?;
    let (layer, i, j) = track.synapse;
    println!("tracking layer {layer}, neuron {i} <- {j}");
    println!("{:>5} {:>10} {:>8} {:>9}", "epoch", "alpha", "drift", "test acc");
    let drifts = track.drifts();
    for (k, a) in track.alpha.iter().enumerate() {
        let d = if k == 0 { String::from("-") } else { format!("{:.1}%", 100.0 * drifts[k - 1]) };
        println!("{k:>5} {a:>10.5} {d:>8} {:>9.3}", track.test_accuracy[k]);
    }
    Ok(())
}
